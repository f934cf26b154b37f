use serde::{Deserialize, Serialize};

/// Plant parameters. Rates are per simulated second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlantConstants {
    pub capacity: f64,
    pub high_threshold: f64,
    pub low_threshold: f64,
    pub fill_rate: f64,
    pub drain_rate: f64,
    pub heat_rate: f64,
    pub cool_rate: f64,
    pub ambient: f64,
    /// Default mixing time in seconds.
    pub mix_duration: f64,
    /// Simulation step in seconds.
    pub tick: f64,
}

impl Default for PlantConstants {
    fn default() -> Self {
        PlantConstants {
            capacity: 100.0,
            high_threshold: 90.0,
            low_threshold: 5.0,
            fill_rate: 10.0,
            drain_rate: 10.0,
            heat_rate: 2.0,
            cool_rate: 0.1,
            ambient: 20.0,
            mix_duration: 5.0,
            tick: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhysicalSiloState {
    pub level: f64,
    pub capacity: f64,
    pub temperature: f64,
    pub in_valve_open: bool,
    pub out_valve_open: bool,
    /// Supply pump behind the in valve.
    pub feed_on: bool,
    pub heater_on: bool,
    pub mixer_on: bool,
    pub high_sensor: bool,
    pub low_sensor: bool,
}

impl PhysicalSiloState {
    /// An empty silo at ambient temperature with every actuator off.
    pub fn new(c: &PlantConstants) -> Self {
        Self::with_level(c, 0.0)
    }

    pub fn with_level(c: &PlantConstants, level: f64) -> Self {
        let mut s = PhysicalSiloState {
            level: level.clamp(0.0, c.capacity),
            capacity: c.capacity,
            temperature: c.ambient,
            in_valve_open: false,
            out_valve_open: false,
            feed_on: false,
            heater_on: false,
            mixer_on: false,
            high_sensor: false,
            low_sensor: false,
        };
        s.refresh_sensors(c);
        s
    }

    pub fn refresh_sensors(&mut self, c: &PlantConstants) {
        self.high_sensor = self.level >= c.high_threshold;
        self.low_sensor = self.level <= c.low_threshold;
    }

    /// Level change over `dt` when the silo is on its own: supply in through
    /// the in valve while the feed runs, drain out through the out valve.
    pub fn standalone_flow(&self, c: &PlantConstants, dt: f64) -> f64 {
        let inflow = if self.in_valve_open && self.feed_on { c.fill_rate * dt } else { 0.0 };
        let outflow = if self.out_valve_open { c.drain_rate * dt } else { 0.0 };
        inflow - outflow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlantEventKind {
    HighLevelReached,
    LowLevelReached,
    TargetTemperatureReached,
    MixDurationElapsed,
    FillLevelReached,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantEvent {
    pub kind: PlantEventKind,
    /// Simulated seconds.
    pub timestamp: f64,
    pub raised_at: std::time::Instant,
}

/// Set points the controller is currently waiting on.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SetPoints {
    pub fill_level: Option<f64>,
    pub target_temperature: Option<f64>,
}

/// Advances one silo by `dt` with the standalone flow.
pub fn tick(
    state: &PhysicalSiloState,
    c: &PlantConstants,
    dt: f64,
    set_points: SetPoints,
) -> (PhysicalSiloState, Vec<PlantEventKind>) {
    advance(state, c, dt, state.standalone_flow(c, dt), set_points)
}

/// Advances one silo by `dt` applying `flow` units to its level. Events are
/// raised on threshold crossings only.
pub fn advance(
    state: &PhysicalSiloState,
    c: &PlantConstants,
    dt: f64,
    flow: f64,
    set_points: SetPoints,
) -> (PhysicalSiloState, Vec<PlantEventKind>) {
    assert!(dt > 0.0, "dt must be positive");
    let mut next = state.clone();
    next.level = (state.level + flow).clamp(0.0, state.capacity);
    let dtemp = if state.heater_on { c.heat_rate * dt } else { -c.cool_rate * dt };
    next.temperature = (state.temperature + dtemp).max(c.ambient);
    next.refresh_sensors(c);

    let mut events = Vec::new();
    if let Some(target) = set_points.fill_level {
        if target < c.high_threshold && state.level < target && next.level >= target {
            events.push(PlantEventKind::FillLevelReached);
        }
    }
    if next.high_sensor && !state.high_sensor {
        events.push(PlantEventKind::HighLevelReached);
    }
    if next.low_sensor && !state.low_sensor {
        events.push(PlantEventKind::LowLevelReached);
    }
    if let Some(target) = set_points.target_temperature {
        if state.temperature < target && next.temperature >= target {
            events.push(PlantEventKind::TargetTemperatureReached);
        }
    }
    (next, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_silo_is_unchanged() {
        let c = PlantConstants::default();
        let s = PhysicalSiloState::with_level(&c, 40.0);
        let (next, ev) = tick(&s, &c, 0.5, SetPoints::default());
        assert_eq!(next, s);
        assert!(ev.is_empty());
    }

    #[test]
    fn crossing_high_raises_once() {
        let c = PlantConstants::default();
        let mut s = PhysicalSiloState::with_level(&c, 89.95);
        s.in_valve_open = true;
        s.feed_on = true;
        let (s, ev) = tick(&s, &c, 0.01, SetPoints::default());
        assert_eq!(ev, vec![PlantEventKind::HighLevelReached]);
        let (_, ev) = tick(&s, &c, 0.01, SetPoints::default());
        assert!(ev.is_empty());
    }

    #[test]
    fn level_clamps_at_capacity() {
        let c = PlantConstants::default();
        let mut s = PhysicalSiloState::with_level(&c, 100.0);
        s.in_valve_open = true;
        s.feed_on = true;
        let (s, _) = tick(&s, &c, 1.0, SetPoints::default());
        assert_eq!(s.level, 100.0);
    }

    #[test]
    fn open_in_valve_without_feed_does_not_fill() {
        let c = PlantConstants::default();
        let mut s = PhysicalSiloState::new(&c);
        s.in_valve_open = true;
        let (next, _) = tick(&s, &c, 1.0, SetPoints::default());
        assert_eq!(next.level, 0.0);
    }

    #[test]
    fn cooling_stops_at_ambient() {
        let c = PlantConstants::default();
        let mut s = PhysicalSiloState::new(&c);
        s.temperature = 20.05;
        let (s, _) = tick(&s, &c, 1.0, SetPoints::default());
        assert_eq!(s.temperature, 20.0);
    }
}
