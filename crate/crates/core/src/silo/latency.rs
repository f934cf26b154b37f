use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::controller::{Actuation, Command, ControllerState};
use super::physics::{tick, PhysicalSiloState, PlantConstants, PlantEvent};
use super::SiloError;

/// Delay reported alongside measurements for comparison.
pub const REFERENCE_MEAN_US: f64 = 39.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub samples: usize,
    #[serde(serialize_with = "as_micros")]
    pub mean: Duration,
    #[serde(serialize_with = "as_micros")]
    pub min: Duration,
    #[serde(serialize_with = "as_micros")]
    pub max: Duration,
}

fn as_micros<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e6)
}

impl LatencyStats {
    pub fn from_samples(samples: &[Duration]) -> Result<Self, SiloError> {
        let (Some(min), Some(max)) = (samples.iter().min(), samples.iter().max()) else {
            return Err(SiloError::InsufficientSamples);
        };
        let total: Duration = samples.iter().sum();
        let mean = total / samples.len() as u32;
        Ok(LatencyStats {
            samples: samples.len(),
            mean,
            min: *min,
            max: *max,
        })
    }

    pub fn mean_us(&self) -> f64 {
        self.mean.as_secs_f64() * 1e6
    }
}

enum Msg {
    Command(Command),
    Event(PlantEvent),
}

/// Runs `n` fill cycles with the sensor side and the controller on separate
/// threads. Each sample is the time from the sensor raising its event to the
/// controller issuing the close command.
pub fn measure_latency(n: usize) -> Result<LatencyStats, SiloError> {
    if n == 0 {
        return Err(SiloError::InsufficientSamples);
    }
    let c = PlantConstants::default();
    let (to_ctrl, ctrl_rx) = mpsc::channel::<Msg>();
    let (to_plant, plant_rx) = mpsc::channel::<(Vec<Actuation>, Option<Duration>)>();
    let cc = c.clone();
    let controller = thread::spawn(move || {
        let mut state = ControllerState::new(&cc);
        while let Ok(msg) = ctrl_rx.recv() {
            let reply = match msg {
                Msg::Command(cmd) => (state.command(cmd, 0.0).unwrap_or_default(), None),
                Msg::Event(ev) => {
                    let out = state.on_event(ev.kind);
                    let issued = ev.raised_at.elapsed();
                    (out.actuations, (!out.ignored).then_some(issued))
                }
            };
            if to_plant.send(reply).is_err() {
                break;
            }
        }
    });

    let mut samples = Vec::with_capacity(n);
    let mut p = PhysicalSiloState::new(&c);
    let exchange = |msg: Msg, p: &mut PhysicalSiloState| -> Option<Duration> {
        to_ctrl.send(msg).ok()?;
        let (acts, latency) = plant_rx.recv().ok()?;
        for a in acts {
            a.apply(p);
        }
        latency
    };
    exchange(Msg::Command(Command::Initialize), &mut p);
    let mut t = 0.0;
    while samples.len() < n {
        p = PhysicalSiloState::new(&c);
        exchange(Msg::Command(Command::Fill), &mut p);
        loop {
            let (next, kinds) = tick(&p, &c, 1.0, Default::default());
            p = next;
            t += 1.0;
            if let Some(kind) = kinds.first() {
                let ev = PlantEvent { kind: *kind, timestamp: t, raised_at: Instant::now() };
                if let Some(d) = exchange(Msg::Event(ev), &mut p) {
                    samples.push(d);
                }
                break;
            }
        }
    }
    drop(to_ctrl);
    let _ = controller.join();
    LatencyStats::from_samples(&samples)
}
