use std::time::{Duration, Instant};

use serde::Serialize;

use super::controller::{coherent, Actuation, Command, Completion, ControllerState, Mode, Valve};
use super::latency::LatencyStats;
use super::physics::{advance, PhysicalSiloState, PlantConstants, PlantEvent, PlantEventKind};
use super::{SiloError, SILO_OBJECT};
use crate::resource::ResourcePath;

#[derive(Debug, Clone)]
pub struct SiloUnit {
    pub name: String,
    pub physical: PhysicalSiloState,
    pub controller: ControllerState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub seq: u64,
    /// Simulated seconds.
    pub t: f64,
    pub silo: String,
    #[serde(flatten)]
    pub entry: LogEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum LogEntry {
    Event {
        event: PlantEventKind,
        level: f64,
        temperature: f64,
    },
    Ignored {
        event: PlantEventKind,
        mode: Mode,
    },
    Command {
        command: String,
        accepted: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Transition {
        from: Mode,
        to: Mode,
    },
    Actuation {
        actuations: Vec<Actuation>,
    },
    Completion {
        completion: Completion,
        path: String,
    },
    SetPoint {
        name: String,
        value: i64,
    },
    /// Liquid moved through the pipe during one step. Levels are the sum
    /// over both silos before and after the step.
    Pipe {
        to: String,
        amount: f64,
        before: f64,
        after: f64,
    },
}

/// A completion flag that went from 0 to 1 and must be pushed to observers.
#[derive(Debug, Clone, PartialEq)]
pub struct Notification {
    pub silo: usize,
    pub path: ResourcePath,
    pub payload: String,
}

/// Every silo of the plant plus the pipe that joins the members of each
/// couple. The out valve of one member feeds the in valve of the other
/// through the pipe while both are open.
#[derive(Debug)]
pub struct Plant {
    constants: PlantConstants,
    units: Vec<SiloUnit>,
    couples: Vec<(usize, usize)>,
    now: f64,
    pending: f64,
    seq: u64,
    log: Vec<LogRecord>,
    latencies: Vec<Duration>,
    /// Completions raised by commands, handed out with the next step.
    pending_notes: Vec<Notification>,
}

impl Plant {
    pub fn new(constants: PlantConstants, names: &[&str], couples: &[(&str, &str)]) -> Result<Self, SiloError> {
        let units: Vec<SiloUnit> = names
            .iter()
            .map(|n| SiloUnit {
                name: n.to_string(),
                physical: PhysicalSiloState::new(&constants),
                controller: ControllerState::new(&constants),
            })
            .collect();
        let idx = |n: &str| {
            names
                .iter()
                .position(|m| *m == n)
                .ok_or_else(|| SiloError::UnknownSilo(n.to_string()))
        };
        let couples = couples
            .iter()
            .map(|(a, b)| Ok((idx(a)?, idx(b)?)))
            .collect::<Result<Vec<_>, SiloError>>()?;
        Ok(Plant {
            constants,
            units,
            couples,
            now: 0.0,
            pending: 0.0,
            seq: 0,
            log: Vec::new(),
            latencies: Vec::new(),
            pending_notes: Vec::new(),
        })
    }

    /// The four silos in two couples, 1 with 4 and 2 with 3.
    pub fn liqueur_plant(constants: PlantConstants) -> Self {
        Self::new(
            constants,
            &["silo1", "silo2", "silo3", "silo4"],
            &[("silo1", "silo4"), ("silo2", "silo3")],
        )
        .expect("fixed layout")
    }

    pub fn constants(&self) -> &PlantConstants {
        &self.constants
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn units(&self) -> &[SiloUnit] {
        &self.units
    }

    pub fn unit(&self, i: usize) -> &SiloUnit {
        &self.units[i]
    }

    pub fn unit_mut(&mut self, i: usize) -> &mut SiloUnit {
        &mut self.units[i]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.units.iter().position(|u| u.name == name)
    }

    pub fn couples(&self) -> &[(usize, usize)] {
        &self.couples
    }

    pub fn command(&mut self, i: usize, cmd: Command) -> Result<(), SiloError> {
        let now = self.now;
        let unit = &mut self.units[i];
        let from = unit.controller.mode;
        let result = unit.controller.command(cmd, now);
        let entry = LogEntry::Command {
            command: cmd.to_string(),
            accepted: result.is_ok(),
            error: result.as_ref().err().map(ToString::to_string),
        };
        self.record(i, entry);
        let actuations = result?;
        self.actuate(i, actuations);
        self.transition(i, from);
        if let Some(kind) = self.units[i].controller.satisfied(&self.units[i].physical) {
            let ev = PlantEvent { kind, timestamp: now, raised_at: Instant::now() };
            if let Some(n) = self.deliver(i, ev) {
                self.pending_notes.push(n);
            }
        }
        Ok(())
    }

    pub fn valve(&mut self, i: usize, valve: Valve, open: bool) -> Result<(), SiloError> {
        let result = self.units[i].controller.valve(valve, open);
        let name = format!("{}_valve_{}", if valve == Valve::In { "in" } else { "out" }, if open { "open" } else { "close" });
        let entry = LogEntry::Command {
            command: name,
            accepted: result.is_ok(),
            error: result.as_ref().err().map(ToString::to_string),
        };
        self.record(i, entry);
        self.actuate(i, vec![result?]);
        Ok(())
    }

    pub fn set_target_temperature(&mut self, i: usize, value: i64) -> Result<(), SiloError> {
        let c = &self.constants;
        if !(c.ambient as i64..=100).contains(&value) {
            return Err(SiloError::InvalidValue(format!(
                "target temperature {value} outside {}..=100",
                c.ambient
            )));
        }
        self.units[i].controller.target_temperature = value;
        self.record(i, LogEntry::SetPoint { name: "target_temperature".into(), value });
        Ok(())
    }

    pub fn set_fill_level(&mut self, i: usize, value: i64) -> Result<(), SiloError> {
        let c = &self.constants;
        if (value as f64) <= c.low_threshold || (value as f64) > c.high_threshold {
            return Err(SiloError::InvalidValue(format!(
                "fill level {value} outside ({}, {}]",
                c.low_threshold, c.high_threshold
            )));
        }
        self.units[i].controller.fill_level = value;
        self.record(i, LogEntry::SetPoint { name: "fill_level".into(), value });
        Ok(())
    }

    pub fn set_mix_duration(&mut self, i: usize, value: i64) -> Result<(), SiloError> {
        if !(0..=3600).contains(&value) {
            return Err(SiloError::InvalidValue(format!("mix duration {value} outside 0..=3600")));
        }
        self.units[i].controller.mix_duration = value;
        self.record(i, LogEntry::SetPoint { name: "mix_duration".into(), value });
        Ok(())
    }

    /// Advances by `dt` in steps of the plant tick. Time below one tick is
    /// carried over to the next call.
    pub fn advance(&mut self, dt: f64) -> Vec<Notification> {
        let tick = self.constants.tick;
        self.pending += dt;
        let mut out = std::mem::take(&mut self.pending_notes);
        while self.pending >= tick - 1e-12 {
            self.pending -= tick;
            out.extend(self.step(tick));
        }
        out
    }

    /// One simulation step of length `dt`.
    pub fn step(&mut self, dt: f64) -> Vec<Notification> {
        let c = self.constants.clone();
        let n = self.units.len();
        let mut flow = vec![0.0; n];
        let mut feeding = vec![false; n];
        let mut receiving = vec![false; n];
        let mut pairs = Vec::new();
        for &(a, b) in &self.couples {
            for (src, dst) in [(a, b), (b, a)] {
                let (s, d) = (&self.units[src].physical, &self.units[dst].physical);
                if s.out_valve_open && d.in_valve_open && !feeding[src] && !receiving[dst] {
                    let x = (c.drain_rate * dt)
                        .min(c.fill_rate * dt)
                        .min(s.level)
                        .min(d.capacity - d.level)
                        .max(0.0);
                    flow[src] -= x;
                    flow[dst] += x;
                    feeding[src] = true;
                    receiving[dst] = true;
                    pairs.push((src, dst, x, s.level + d.level));
                }
            }
        }
        for i in 0..n {
            let p = &self.units[i].physical;
            if p.out_valve_open && !feeding[i] {
                flow[i] -= c.drain_rate * dt;
            }
            if p.in_valve_open && p.feed_on && !receiving[i] {
                flow[i] += c.fill_rate * dt;
            }
        }

        let t = self.now + dt;
        let mut raised = Vec::new();
        for (i, f) in flow.iter().enumerate() {
            let unit = &mut self.units[i];
            let (next, kinds) = advance(&unit.physical, &c, dt, *f, unit.controller.set_points());
            unit.physical = next;
            let stamp = Instant::now();
            for kind in kinds {
                raised.push((i, PlantEvent { kind, timestamp: t, raised_at: stamp }));
            }
            if unit.controller.mode == Mode::Mixing
                && unit.controller.mix_deadline.is_some_and(|d| d <= t + 1e-9)
            {
                raised.push((
                    i,
                    PlantEvent {
                        kind: PlantEventKind::MixDurationElapsed,
                        timestamp: t,
                        raised_at: Instant::now(),
                    },
                ));
            }
        }
        self.now = t;
        for (src, dst, amount, before) in pairs {
            let after = self.units[src].physical.level + self.units[dst].physical.level;
            let to = self.units[dst].name.clone();
            self.record(src, LogEntry::Pipe { to, amount, before, after });
        }

        let mut out = std::mem::take(&mut self.pending_notes);
        for (i, ev) in raised {
            out.extend(self.deliver(i, ev));
        }
        out
    }

    fn deliver(&mut self, i: usize, ev: PlantEvent) -> Option<Notification> {
        let p = &self.units[i].physical;
        let entry = LogEntry::Event {
            event: ev.kind,
            level: p.level,
            temperature: p.temperature,
        };
        self.record(i, entry);
        let from = self.units[i].controller.mode;
        let outcome = self.units[i].controller.on_event(ev.kind);
        if outcome.ignored {
            self.record(i, LogEntry::Ignored { event: ev.kind, mode: from });
            return None;
        }
        for a in &outcome.actuations {
            a.apply(&mut self.units[i].physical);
        }
        self.latencies.push(ev.raised_at.elapsed());
        self.record(i, LogEntry::Actuation { actuations: outcome.actuations });
        self.transition(i, from);
        let completion = outcome.completion?;
        let path = ResourcePath::resource(SILO_OBJECT, 0, completion.resource_id());
        self.record(i, LogEntry::Completion { completion, path: path.to_string() });
        Some(Notification { silo: i, path, payload: "1".into() })
    }

    fn actuate(&mut self, i: usize, actuations: Vec<Actuation>) {
        for a in &actuations {
            a.apply(&mut self.units[i].physical);
        }
        self.record(i, LogEntry::Actuation { actuations });
    }

    fn transition(&mut self, i: usize, from: Mode) {
        let unit = &self.units[i];
        let to = unit.controller.mode;
        debug_assert!(coherent(&unit.controller, &unit.physical), "{} incoherent in {to}", unit.name);
        if from != to {
            self.record(i, LogEntry::Transition { from, to });
        }
    }

    fn record(&mut self, i: usize, entry: LogEntry) {
        self.seq += 1;
        self.log.push(LogRecord {
            seq: self.seq,
            t: self.now,
            silo: self.units[i].name.clone(),
            entry,
        });
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn drain_log(&mut self) -> Vec<LogRecord> {
        std::mem::take(&mut self.log)
    }

    /// Event-to-actuation delays observed so far.
    pub fn latency(&self) -> Result<LatencyStats, SiloError> {
        LatencyStats::from_samples(&self.latencies)
    }
}
