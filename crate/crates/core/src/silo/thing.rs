use std::sync::{Arc, Mutex};

use super::controller::{Command, Completion, Valve};
use super::plant::Plant;
use super::{
    SiloError, FILL_LEVEL, LEVEL, MIX_DURATION, SENSOR_OBJECT, SENSOR_STATE, SILO_OBJECT, STATE,
    TARGET_TEMPERATURE, TEMPERATURE, VALVE_CLOSE, VALVE_OBJECT, VALVE_OPEN, VALVE_STATE,
};
use crate::lwm2m::{ObjectRegistry, ResourceValue};
use crate::resource::{Operations, ResourcePath, ThingResourceModel};

pub type SharedPlant = Arc<Mutex<Plant>>;

const REQUIRED: &[(u16, u16, Operations)] = &[
    (SILO_OBJECT, STATE, Operations::R),
    (SILO_OBJECT, 1, Operations::E),
    (SILO_OBJECT, 2, Operations::E),
    (SILO_OBJECT, 3, Operations::E),
    (SILO_OBJECT, 4, Operations::E),
    (SILO_OBJECT, 5, Operations::E),
    (SILO_OBJECT, 6, Operations::E),
    (SILO_OBJECT, 7, Operations::R),
    (SILO_OBJECT, 8, Operations::R),
    (SILO_OBJECT, 9, Operations::R),
    (SILO_OBJECT, 10, Operations::R),
    (SILO_OBJECT, TARGET_TEMPERATURE, Operations::RW),
    (VALVE_OBJECT, VALVE_STATE, Operations::R),
    (VALVE_OBJECT, VALVE_OPEN, Operations::E),
    (VALVE_OBJECT, VALVE_CLOSE, Operations::E),
    (SENSOR_OBJECT, SENSOR_STATE, Operations::R),
];

fn lock(plant: &SharedPlant) -> std::sync::MutexGuard<'_, Plant> {
    plant.lock().expect("plant lock")
}

fn exec_status(r: Result<(), SiloError>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(SiloError::IllegalTransition { .. }) => 1,
        Err(_) => 2,
    }
}

/// Builds the registry of silo `silo` of `plant`: the SmartSilo instance,
/// valve instances 0 (in) and 1 (out) and level sensor instances 0 (high)
/// and 1 (low), with every hook reaching into the plant.
pub fn bind_to_registry(
    descriptor: ThingResourceModel,
    plant: SharedPlant,
    silo: usize,
) -> Result<ObjectRegistry, SiloError> {
    for (obj, rid, ops) in REQUIRED {
        let found = descriptor.object(*obj).and_then(|o| o.resource(*rid));
        match found {
            None => {
                return Err(SiloError::DescriptorMismatch(format!("missing resource /{obj}/*/{rid}")))
            }
            Some(r) if r.operations != *ops => {
                return Err(SiloError::DescriptorMismatch(format!(
                    "resource /{obj}/*/{rid} has operations {}, expected {ops}",
                    r.operations
                )))
            }
            Some(_) => {}
        }
    }
    let optional: Vec<u16> = [MIX_DURATION, FILL_LEVEL, LEVEL, TEMPERATURE]
        .into_iter()
        .filter(|rid| descriptor.resource(SILO_OBJECT, *rid).is_some())
        .collect();

    let mut reg = ObjectRegistry::new(descriptor);
    let map = |e| SiloError::DescriptorMismatch(format!("{e}"));
    for (o, i) in [
        (SILO_OBJECT, 0),
        (VALVE_OBJECT, 0),
        (VALVE_OBJECT, 1),
        (SENSOR_OBJECT, 0),
        (SENSOR_OBJECT, 1),
    ] {
        reg.add_instance(o, i).map_err(map)?;
    }
    let path = |o, i, r| ResourcePath::resource(o, i, r);

    let p = plant.clone();
    reg.on_read(
        &path(SILO_OBJECT, 0, STATE),
        Arc::new(move || ResourceValue::Text(lock(&p).unit(silo).controller.mode.to_string())),
    )
    .map_err(map)?;
    for cmd in Command::ALL {
        let p = plant.clone();
        reg.on_execute(
            &path(SILO_OBJECT, 0, cmd.resource_id()),
            Arc::new(move |_| exec_status(lock(&p).command(silo, cmd))),
        )
        .map_err(map)?;
    }
    for c in Completion::ALL {
        let p = plant.clone();
        reg.on_read(
            &path(SILO_OBJECT, 0, c.resource_id()),
            Arc::new(move || {
                ResourceValue::Integer(lock(&p).unit(silo).controller.flags.get(c) as i64)
            }),
        )
        .map_err(map)?;
    }

    type Getter = fn(&Plant, usize) -> i64;
    type Setter = fn(&mut Plant, usize, i64) -> Result<(), SiloError>;
    let set_points: [(u16, Getter, Setter); 3] = [
        (
            TARGET_TEMPERATURE,
            |p, i| p.unit(i).controller.target_temperature,
            Plant::set_target_temperature,
        ),
        (MIX_DURATION, |p, i| p.unit(i).controller.mix_duration, Plant::set_mix_duration),
        (FILL_LEVEL, |p, i| p.unit(i).controller.fill_level, Plant::set_fill_level),
    ];
    for (rid, get, set) in set_points {
        if rid != TARGET_TEMPERATURE && !optional.contains(&rid) {
            continue;
        }
        let p = plant.clone();
        reg.on_read(
            &path(SILO_OBJECT, 0, rid),
            Arc::new(move || ResourceValue::Integer(get(&lock(&p), silo))),
        )
        .map_err(map)?;
        let p = plant.clone();
        reg.on_write(
            &path(SILO_OBJECT, 0, rid),
            Arc::new(move |v| {
                let n = v.as_int().ok_or("integer expected")?;
                set(&mut lock(&p), silo, n).map_err(|e| e.to_string())
            }),
        )
        .map_err(map)?;
    }
    type Reading = fn(&Plant, usize) -> f64;
    let readings: [(u16, Reading); 2] = [
        (LEVEL, |p, i| p.unit(i).physical.level),
        (TEMPERATURE, |p, i| p.unit(i).physical.temperature),
    ];
    for (rid, get) in readings {
        if !optional.contains(&rid) {
            continue;
        }
        let p = plant.clone();
        reg.on_read(
            &path(SILO_OBJECT, 0, rid),
            Arc::new(move || ResourceValue::Integer(get(&lock(&p), silo).round() as i64)),
        )
        .map_err(map)?;
    }

    for valve in [Valve::In, Valve::Out] {
        let inst = valve.instance();
        let p = plant.clone();
        reg.on_read(
            &path(VALVE_OBJECT, inst, VALVE_STATE),
            Arc::new(move || {
                let guard = lock(&p);
                let ph = &guard.unit(silo).physical;
                let open = match valve {
                    Valve::In => ph.in_valve_open,
                    Valve::Out => ph.out_valve_open,
                };
                ResourceValue::Text(if open { "open" } else { "closed" }.into())
            }),
        )
        .map_err(map)?;
        for (rid, open) in [(VALVE_OPEN, true), (VALVE_CLOSE, false)] {
            let p = plant.clone();
            reg.on_execute(
                &path(VALVE_OBJECT, inst, rid),
                Arc::new(move |_| exec_status(lock(&p).valve(silo, valve, open))),
            )
            .map_err(map)?;
        }
    }
    for (inst, high) in [(0u16, true), (1u16, false)] {
        let p = plant.clone();
        reg.on_read(
            &path(SENSOR_OBJECT, inst, SENSOR_STATE),
            Arc::new(move || {
                let guard = lock(&p);
                let ph = &guard.unit(silo).physical;
                let on = if high { ph.high_sensor } else { ph.low_sensor };
                ResourceValue::Text(if on { "on" } else { "off" }.into())
            }),
        )
        .map_err(map)?;
    }
    Ok(reg)
}
