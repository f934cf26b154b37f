use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::physics::{PhysicalSiloState, PlantConstants, PlantEventKind, SetPoints};
use super::SiloError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Uninitialized,
    Idle,
    Filling,
    Emptying,
    Heating,
    Mixing,
    Stopped,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Uninitialized,
        Mode::Idle,
        Mode::Filling,
        Mode::Emptying,
        Mode::Heating,
        Mode::Mixing,
        Mode::Stopped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Uninitialized => "UNINITIALIZED",
            Mode::Idle => "IDLE",
            Mode::Filling => "FILLING",
            Mode::Emptying => "EMPTYING",
            Mode::Heating => "HEATING",
            Mode::Mixing => "MIXING",
            Mode::Stopped => "STOPPED",
        }
    }

    pub fn is_active(self) -> bool {
        matches!(self, Mode::Filling | Mode::Emptying | Mode::Heating | Mode::Mixing)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Initialize,
    Fill,
    Empty,
    Stop,
    Heat,
    Mix,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Initialize,
        Command::Fill,
        Command::Empty,
        Command::Stop,
        Command::Heat,
        Command::Mix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Initialize => "initialize",
            Command::Fill => "fill",
            Command::Empty => "empty",
            Command::Stop => "stop",
            Command::Heat => "heat",
            Command::Mix => "mix",
        }
    }

    /// Executable resource of the SmartSilo object bound to this command.
    pub fn resource_id(self) -> u16 {
        match self {
            Command::Fill => 1,
            Command::Empty => 2,
            Command::Stop => 3,
            Command::Initialize => 4,
            Command::Heat => 5,
            Command::Mix => 6,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valve {
    In,
    Out,
}

impl Valve {
    /// Instance of the valve object: 0 is the in valve, 1 the out valve.
    pub fn instance(self) -> u16 {
        match self {
            Valve::In => 0,
            Valve::Out => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "actuator", content = "on", rename_all = "camelCase")]
pub enum Actuation {
    InValve(bool),
    OutValve(bool),
    Feed(bool),
    Heater(bool),
    Mixer(bool),
}

impl Actuation {
    pub fn apply(self, p: &mut PhysicalSiloState) {
        match self {
            Actuation::InValve(v) => p.in_valve_open = v,
            Actuation::OutValve(v) => p.out_valve_open = v,
            Actuation::Feed(v) => p.feed_on = v,
            Actuation::Heater(v) => p.heater_on = v,
            Actuation::Mixer(v) => p.mixer_on = v,
        }
    }
}

const ALL_OFF: [Actuation; 5] = [
    Actuation::InValve(false),
    Actuation::OutValve(false),
    Actuation::Feed(false),
    Actuation::Heater(false),
    Actuation::Mixer(false),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Completion {
    Filling,
    Emptying,
    Heating,
    Mixing,
}

impl Completion {
    pub const ALL: [Completion; 4] = [
        Completion::Filling,
        Completion::Emptying,
        Completion::Heating,
        Completion::Mixing,
    ];

    /// Observable flag resource on the SmartSilo object.
    pub fn resource_id(self) -> u16 {
        match self {
            Completion::Filling => 7,
            Completion::Emptying => 8,
            Completion::Heating => 9,
            Completion::Mixing => 10,
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Completion::Filling => Mode::Filling,
            Completion::Emptying => Mode::Emptying,
            Completion::Heating => Mode::Heating,
            Completion::Mixing => Mode::Mixing,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionFlags {
    pub filling: bool,
    pub emptying: bool,
    pub heating: bool,
    pub mixing: bool,
}

impl CompletionFlags {
    pub fn get(&self, c: Completion) -> bool {
        match c {
            Completion::Filling => self.filling,
            Completion::Emptying => self.emptying,
            Completion::Heating => self.heating,
            Completion::Mixing => self.mixing,
        }
    }

    pub fn set(&mut self, c: Completion, v: bool) {
        match c {
            Completion::Filling => self.filling = v,
            Completion::Emptying => self.emptying = v,
            Completion::Heating => self.heating = v,
            Completion::Mixing => self.mixing = v,
        }
    }
}

/// Mode reached by `cmd` from `mode`, or `None` when the command is not
/// accepted there.
pub fn transition(mode: Mode, cmd: Command) -> Option<Mode> {
    use Command as C;
    use Mode as M;
    match (cmd, mode) {
        (C::Stop, _) => Some(M::Stopped),
        (C::Initialize, M::Uninitialized | M::Stopped) => Some(M::Idle),
        (C::Fill, M::Idle) => Some(M::Filling),
        (C::Empty, M::Idle) => Some(M::Emptying),
        (C::Heat, M::Idle) => Some(M::Heating),
        (C::Mix, M::Idle) => Some(M::Mixing),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventOutcome {
    pub actuations: Vec<Actuation>,
    pub completion: Option<Completion>,
    pub ignored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ControllerState {
    pub mode: Mode,
    pub target_temperature: i64,
    pub fill_level: i64,
    /// Seconds.
    pub mix_duration: i64,
    pub mix_deadline: Option<f64>,
    pub flags: CompletionFlags,
}

impl ControllerState {
    pub fn new(c: &PlantConstants) -> Self {
        ControllerState {
            mode: Mode::Uninitialized,
            target_temperature: 60,
            fill_level: c.high_threshold as i64,
            mix_duration: c.mix_duration as i64,
            mix_deadline: None,
            flags: CompletionFlags::default(),
        }
    }

    /// Set points the physics should watch in the current mode.
    pub fn set_points(&self) -> SetPoints {
        SetPoints {
            fill_level: (self.mode == Mode::Filling).then_some(self.fill_level as f64),
            target_temperature: (self.mode == Mode::Heating)
                .then_some(self.target_temperature as f64),
        }
    }

    /// Applies a command if the legality table allows it. A refused command
    /// changes nothing.
    pub fn command(&mut self, cmd: Command, now: f64) -> Result<Vec<Actuation>, SiloError> {
        let next = transition(self.mode, cmd).ok_or(SiloError::IllegalTransition {
            mode: self.mode,
            command: cmd,
        })?;
        let actuations = match cmd {
            Command::Fill => {
                self.flags.filling = false;
                vec![Actuation::OutValve(false), Actuation::InValve(true), Actuation::Feed(true)]
            }
            Command::Empty => {
                self.flags.emptying = false;
                vec![Actuation::InValve(false), Actuation::OutValve(true)]
            }
            Command::Heat => {
                self.flags.heating = false;
                vec![Actuation::InValve(false), Actuation::OutValve(false), Actuation::Heater(true)]
            }
            Command::Mix => {
                self.flags.mixing = false;
                self.mix_deadline = Some(now + self.mix_duration as f64);
                vec![Actuation::InValve(false), Actuation::OutValve(false), Actuation::Mixer(true)]
            }
            Command::Stop => {
                self.mix_deadline = None;
                ALL_OFF.to_vec()
            }
            Command::Initialize => {
                self.mix_deadline = None;
                self.flags = CompletionFlags::default();
                ALL_OFF.to_vec()
            }
        };
        self.mode = next;
        Ok(actuations)
    }

    /// The event the active mode waits for when its goal already holds, as
    /// when heating a silo that is warm enough.
    pub fn satisfied(&self, p: &PhysicalSiloState) -> Option<PlantEventKind> {
        match self.mode {
            Mode::Filling if p.high_sensor => Some(PlantEventKind::HighLevelReached),
            Mode::Filling if p.level >= self.fill_level as f64 => Some(PlantEventKind::FillLevelReached),
            Mode::Emptying if p.low_sensor => Some(PlantEventKind::LowLevelReached),
            Mode::Heating if p.temperature >= self.target_temperature as f64 => {
                Some(PlantEventKind::TargetTemperatureReached)
            }
            _ => None,
        }
    }

    /// Direct valve operation, accepted only while no process is running.
    pub fn valve(&mut self, valve: Valve, open: bool) -> Result<Actuation, SiloError> {
        if self.mode != Mode::Idle {
            return Err(SiloError::Precondition(format!(
                "valves are operated directly only in IDLE, not {}",
                self.mode
            )));
        }
        Ok(match valve {
            Valve::In => Actuation::InValve(open),
            Valve::Out => Actuation::OutValve(open),
        })
    }

    pub fn on_event(&mut self, kind: PlantEventKind) -> EventOutcome {
        use PlantEventKind as E;
        let (completion, actuations) = match (kind, self.mode) {
            (E::HighLevelReached | E::FillLevelReached, Mode::Filling) => (
                Completion::Filling,
                vec![Actuation::InValve(false), Actuation::Feed(false)],
            ),
            (E::LowLevelReached, Mode::Emptying) => {
                (Completion::Emptying, vec![Actuation::OutValve(false)])
            }
            (E::TargetTemperatureReached, Mode::Heating) => {
                (Completion::Heating, vec![Actuation::Heater(false)])
            }
            (E::MixDurationElapsed, Mode::Mixing) => {
                self.mix_deadline = None;
                (Completion::Mixing, vec![Actuation::Mixer(false)])
            }
            _ => {
                return EventOutcome {
                    ignored: true,
                    ..Default::default()
                }
            }
        };
        self.mode = Mode::Idle;
        self.flags.set(completion, true);
        EventOutcome {
            actuations,
            completion: Some(completion),
            ignored: false,
        }
    }
}

/// Mode and actuators agree: each active mode drives exactly its own
/// actuators, valves aside, and nothing runs outside an active mode except
/// valves opened directly in IDLE.
pub fn coherent(c: &ControllerState, p: &PhysicalSiloState) -> bool {
    let feed = c.mode == Mode::Filling;
    let heater = c.mode == Mode::Heating;
    let mixer = c.mode == Mode::Mixing;
    if p.feed_on != feed || p.heater_on != heater || p.mixer_on != mixer {
        return false;
    }
    match c.mode {
        Mode::Filling => p.in_valve_open && !p.out_valve_open,
        Mode::Emptying => p.out_valve_open && !p.in_valve_open,
        Mode::Heating | Mode::Mixing => !p.in_valve_open && !p.out_valve_open,
        Mode::Idle => true,
        Mode::Uninitialized | Mode::Stopped => !p.in_valve_open && !p.out_valve_open,
    }
}
