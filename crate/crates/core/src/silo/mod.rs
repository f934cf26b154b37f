//! The smart silo as an industrial automation thing: simulated physics, the
//! event driven controller and its binding to an LWM2M object registry.

mod controller;
mod latency;
mod physics;
mod plant;
mod runtime;
mod thing;

use thiserror::Error;

use crate::annotation::{parse_component_source, SourceUnit};
use crate::coap::CoapError;
use crate::resource::{build_resource_model, ThingResourceModel};

pub use controller::{
    coherent, transition, Actuation, Command, Completion, CompletionFlags, ControllerState,
    EventOutcome, Mode, Valve,
};
pub use latency::{measure_latency, LatencyStats, REFERENCE_MEAN_US};
pub use physics::{
    advance, tick, PhysicalSiloState, PlantConstants, PlantEvent, PlantEventKind, SetPoints,
};
pub use plant::{LogEntry, LogRecord, Notification, Plant, SiloUnit};
pub use runtime::{LogSink, PlantRuntime, RuntimeConfig, ThingHandle};
pub use thing::{bind_to_registry, SharedPlant};

pub const SILO_OBJECT: u16 = 1663;
pub const VALVE_OBJECT: u16 = 1664;
pub const SENSOR_OBJECT: u16 = 1665;

pub const STATE: u16 = 0;
pub const TARGET_TEMPERATURE: u16 = 11;
pub const MIX_DURATION: u16 = 12;
pub const FILL_LEVEL: u16 = 13;
pub const LEVEL: u16 = 14;
pub const TEMPERATURE: u16 = 15;
pub const VALVE_STATE: u16 = 5850;
pub const VALVE_OPEN: u16 = 5851;
pub const VALVE_CLOSE: u16 = 5852;
pub const SENSOR_STATE: u16 = 5550;

/// The annotated silo source shipped with the crate.
pub const CORPUS_SOURCE: &str = include_str!("../../corpus/silo.c");

/// Resource model of the shipped silo source.
pub fn corpus_descriptor() -> ThingResourceModel {
    let model = parse_component_source(&SourceUnit::new("silo.c", CORPUS_SOURCE))
        .expect("corpus parses");
    build_resource_model(&model).expect("corpus is valid")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SiloError {
    #[error("command {command} is not accepted in mode {mode}")]
    IllegalTransition { mode: Mode, command: Command },
    #[error("{0}")]
    Precondition(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("descriptor mismatch: {0}")]
    DescriptorMismatch(String),
    #[error("no samples")]
    InsufficientSamples,
    #[error("unknown silo `{0}`")]
    UnknownSilo(String),
    #[error(transparent)]
    Coap(#[from] CoapError),
    #[error("registration failed: {0}")]
    Registration(String),
}
