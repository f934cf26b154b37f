/*
 * Cyber part of the smart silo mechatronic component, annotated for the
 * IoT wrapper generator.
 *
 * Reconstructed values: the `type=` arguments of the valve, level sensor and
 * silo resources are not legible in the original listing. They are filled in
 * as string for state resources, void for executables and integer for the
 * completion flags. The level sensor state is declared as string because a
 * readable resource must carry a value.
 *
 * Resources marked extended=true complete the component's command and
 * completion interface (stop, heat, mix, heating/mixing completion, the
 * heating and filling set points, the mixing time and the level and
 * temperature readings) with ids that do not collide with the original ones.
 */
#include <stdint.h>

enum silo_state {
    UNINITIALIZED,
    IDLE,
    FILLING,
    EMPTYING,
    HEATING,
    MIXING,
    STOPPED
};

struct valve{
  @ObjectType (name="valve",id=1664,instanceType=multiple,mandatory=true)
  int state;
  @ResourceDef (id=5850,name="state",operations=R,type=string,instanceType=single,mandatory=true)
  int io;
  void (*valve_open)(void);
  @ResourceDef (id=5851,name="valve_open",operations=E,type=void)
  void (*valve_close)(void);
  @ResourceDef (id=5852,name="valve_close",operations=E,type=void)
};

struct level_sensor{
  @ObjectType (name="LevelSensor",id=1665,instanceType=multiple,mandatory=true)
  int state;
  @ResourceDef (id=5550,name="state",operations=R,type=string,instanceType=single)
};

struct silo{
  @ObjectType (name="SmartSilo",id=1663,instanceType=single,mandatory=true)
  enum silo_state state;
  @ResourceDef (id=0,name="state",operations=R,type=string,instanceType=single)
  int (*fill)(void);
  @ResourceDef (id=1,name="fill",operations=E,type=void,instanceType=single)
  int (*empty)(void);
  @ResourceDef (id=2,name="empty",operations=E,type=void,instanceType=single)
  int (*stop)(void);
  @ResourceDef (id=3,name="stop",operations=E,type=void,extended=true)
  int (*initialize)(void);
  @ResourceDef (id=4,name="initialize",operations=E,type=void)
  int (*heat)(void);
  @ResourceDef (id=5,name="heat",operations=E,type=void,extended=true)
  int (*mix)(void);
  @ResourceDef (id=6,name="mix",operations=E,type=void,extended=true)
  struct level_sensor high_level_sensor, low_level_sensor;
  struct valve in_valve, out_valve;
  int filling_completed;
  @ResourceDef (id=7,name="filling_completed",operations=R,type=integer,observable=true)
  int emptying_completed;
  @ResourceDef (id=8,name="emptying_completed",operations=R,type=integer,observable=true)
  int heating_completed;
  @ResourceDef (id=9,name="heating_completed",operations=R,type=integer,observable=true,extended=true)
  int mixing_completed;
  @ResourceDef (id=10,name="mixing_completed",operations=R,type=integer,observable=true,extended=true)
  int32_t target_temperature;
  @ResourceDef (id=11,name="target_temperature",operations=RW,type=integer,extended=true)
  int32_t mix_duration;
  @ResourceDef (id=12,name="mix_duration",operations=RW,type=integer,extended=true)
  int32_t fill_level;
  @ResourceDef (id=13,name="fill_level",operations=RW,type=integer,extended=true)
  int32_t level;
  @ResourceDef (id=14,name="level",operations=R,type=integer,extended=true)
  int32_t temperature;
  @ResourceDef (id=15,name="temperature",operations=R,type=integer,extended=true)
};

static struct silo *silo;

void silo_init(void);

void set_filling_completed(){
    silo->filling_completed = 1;}
