use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::task::JoinHandle;
use tokio::time::{Instant, MissedTickBehavior};

use super::physics::PlantConstants;
use super::plant::{LogRecord, Plant};
use super::thing::{bind_to_registry, SharedPlant};
use super::SiloError;
use crate::coap::{content_format, Endpoint, EndpointHandle, TransmissionParams};
use crate::lwm2m::{ClientService, Registrar, SharedRegistry, DEFAULT_LIFETIME};
use crate::resource::ThingResourceModel;

pub type LogSink = Arc<dyn Fn(&LogRecord) + Send + Sync>;

/// Wall-clock period of the simulation driver.
const CLOCK_PERIOD: Duration = Duration::from_millis(10);

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub descriptor: ThingResourceModel,
    pub constants: PlantConstants,
    pub names: Vec<String>,
    pub couples: Vec<(String, String)>,
    pub bind: IpAddr,
    /// Thing `i` listens on `base_port + i`; 0 picks free ports.
    pub base_port: u16,
    /// Resource directory to register with.
    pub server: Option<SocketAddr>,
    pub lifetime: u64,
    pub params: TransmissionParams,
}

impl RuntimeConfig {
    /// Silos 1 to 4 in couples 1 with 4 and 2 with 3, on loopback.
    pub fn liqueur_plant(descriptor: ThingResourceModel) -> Self {
        RuntimeConfig {
            descriptor,
            constants: PlantConstants::default(),
            names: (1..=4).map(|i| format!("silo{i}")).collect(),
            couples: vec![("silo1".into(), "silo4".into()), ("silo2".into(), "silo3".into())],
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            base_port: 0,
            server: None,
            lifetime: DEFAULT_LIFETIME,
            params: TransmissionParams::default(),
        }
    }
}

pub struct ThingHandle {
    pub name: String,
    pub index: usize,
    pub endpoint: EndpointHandle,
    pub registry: SharedRegistry,
    pub registrar: Option<Arc<Registrar>>,
}

/// Hosts every silo of a plant, each as its own CoAP endpoint, and drives
/// the shared simulation either step by step or from a scaled wall clock.
pub struct PlantRuntime {
    plant: SharedPlant,
    things: Vec<ThingHandle>,
    sink: Option<LogSink>,
    tasks: Mutex<Vec<JoinHandle<()>>>,
}

impl PlantRuntime {
    pub async fn start(cfg: RuntimeConfig, sink: Option<LogSink>) -> Result<Arc<Self>, SiloError> {
        let names: Vec<&str> = cfg.names.iter().map(String::as_str).collect();
        let couples: Vec<(&str, &str)> =
            cfg.couples.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let plant = Arc::new(Mutex::new(Plant::new(cfg.constants.clone(), &names, &couples)?));
        let mut things = Vec::new();
        let mut tasks = Vec::new();
        for (index, name) in cfg.names.iter().enumerate() {
            let reg = bind_to_registry(cfg.descriptor.clone(), plant.clone(), index)?;
            let links = reg.link_format();
            let registry: SharedRegistry = Arc::new(Mutex::new(reg));
            let port = if cfg.base_port == 0 { 0 } else { cfg.base_port + index as u16 };
            let endpoint = Endpoint::bind(
                SocketAddr::new(cfg.bind, port),
                cfg.params.clone(),
                Some(Box::new(ClientService::new(registry.clone()))),
            )
            .await?;
            let registrar = match cfg.server {
                Some(server) => {
                    let r = Arc::new(Registrar::new(
                        endpoint.clone(),
                        server,
                        name.as_str(),
                        cfg.lifetime,
                        links,
                    ));
                    r.register().await.map_err(|e| SiloError::Registration(e.to_string()))?;
                    tasks.push(r.clone().spawn_keepalive(r.update_period()));
                    Some(r)
                }
                None => None,
            };
            things.push(ThingHandle {
                name: name.clone(),
                index,
                endpoint,
                registry,
                registrar,
            });
        }
        Ok(Arc::new(PlantRuntime {
            plant,
            things,
            sink,
            tasks: Mutex::new(tasks),
        }))
    }

    pub fn plant(&self) -> &SharedPlant {
        &self.plant
    }

    pub fn things(&self) -> &[ThingHandle] {
        &self.things
    }

    pub fn thing(&self, name: &str) -> Option<&ThingHandle> {
        self.things.iter().find(|t| t.name == name)
    }

    /// Advances the simulation by `sim_secs` and pushes the resulting
    /// notifications. Returns how many notifications went out.
    pub async fn advance(&self, sim_secs: f64) -> usize {
        let (notes, log) = {
            let mut plant = self.plant.lock().expect("plant lock");
            let notes = plant.advance(sim_secs);
            (notes, plant.drain_log())
        };
        if let Some(sink) = &self.sink {
            for rec in &log {
                sink(rec);
            }
        }
        let mut sent = 0;
        for n in notes {
            let ep = &self.things[n.silo].endpoint;
            sent += ep
                .notify(&n.path.to_string(), n.payload, Some(content_format::TEXT_PLAIN))
                .await
                .unwrap_or(0);
        }
        sent
    }

    /// Drives the simulation from the wall clock, `time_scale` simulated
    /// seconds per real second.
    pub fn start_clock(self: &Arc<Self>, time_scale: f64) {
        let rt = Arc::clone(self);
        let task = tokio::spawn(async move {
            let mut interval = tokio::time::interval(CLOCK_PERIOD);
            interval.set_missed_tick_behavior(MissedTickBehavior::Skip);
            let mut last = Instant::now();
            loop {
                interval.tick().await;
                let now = Instant::now();
                let dt = (now - last).as_secs_f64() * time_scale;
                last = now;
                rt.advance(dt).await;
            }
        });
        self.tasks.lock().expect("task lock").push(task);
    }

    /// Stops the clock and keepalives, deregisters and closes endpoints.
    pub async fn shutdown(&self) {
        for t in self.tasks.lock().expect("task lock").drain(..) {
            t.abort();
        }
        for t in &self.things {
            if let Some(r) = &t.registrar {
                let _ = r.deregister().await;
            }
            t.endpoint.shutdown();
        }
    }

    /// Closes endpoints without deregistering, as a crashed process would.
    pub fn kill(&self, name: &str) {
        if let Some(t) = self.thing(name) {
            t.endpoint.shutdown();
        }
    }
}
