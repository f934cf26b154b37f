pub mod annotation;
pub mod coap;
pub mod codegen;
pub mod lwm2m;
pub mod orchestrator;
pub mod resource;
pub mod silo;
