use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::time::Instant;
use tracing::info;

use super::{Lwm2mError, DEFAULT_LIFETIME};
use crate::coap::{content_format, CoapMessage, Code, Response, Service, ServiceCtx};
use crate::resource::{parse_link_format, Link};

/// Upper bound on the time between eviction sweeps.
pub const EVICTION_SWEEP: Duration = Duration::from_millis(250);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisteredClient {
    pub endpoint_name: String,
    pub address: SocketAddr,
    pub links: Vec<Link>,
    pub lifetime: u64,
    pub registration_id: String,
    pub last_seen: Instant,
}

impl RegisteredClient {
    pub fn location(&self) -> String {
        format!("/rd/{}", self.registration_id)
    }

    pub fn expired(&self, now: Instant) -> bool {
        now.saturating_duration_since(self.last_seen) > Duration::from_secs(self.lifetime)
    }
}

/// Registration directory. Clients are evicted once they have not been seen
/// for longer than their lifetime.
#[derive(Debug, Default)]
pub struct Directory {
    clients: BTreeMap<String, RegisteredClient>,
    next_id: u64,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `endpoint_name`, replacing an earlier registration under
    /// the same name. Returns the new registration id.
    pub fn register(
        &mut self,
        endpoint_name: &str,
        address: SocketAddr,
        links: &str,
        lifetime: u64,
        now: Instant,
    ) -> Result<String, Lwm2mError> {
        if endpoint_name.is_empty() {
            return Err(Lwm2mError::BadRequest("missing endpoint name".into()));
        }
        if lifetime == 0 {
            return Err(Lwm2mError::BadRequest("lifetime must be positive".into()));
        }
        let links =
            parse_link_format(links).map_err(|e| Lwm2mError::BadRequest(e.to_string()))?;
        self.clients.retain(|_, c| c.endpoint_name != endpoint_name);
        self.next_id += 1;
        let id = self.next_id.to_string();
        info!(endpoint = endpoint_name, %address, id = %id, lifetime, "registered");
        self.clients.insert(
            id.clone(),
            RegisteredClient {
                endpoint_name: endpoint_name.to_string(),
                address,
                links,
                lifetime,
                registration_id: id.clone(),
                last_seen: now,
            },
        );
        Ok(id)
    }

    pub fn update(
        &mut self,
        id: &str,
        address: SocketAddr,
        lifetime: Option<u64>,
        links: Option<&str>,
        now: Instant,
    ) -> Result<(), Lwm2mError> {
        self.sweep(now);
        let c = self.clients.get_mut(id).ok_or(Lwm2mError::NotFound)?;
        if let Some(l) = links {
            c.links = parse_link_format(l).map_err(|e| Lwm2mError::BadRequest(e.to_string()))?;
        }
        if let Some(lt) = lifetime.filter(|lt| *lt > 0) {
            c.lifetime = lt;
        }
        c.address = address;
        c.last_seen = now;
        Ok(())
    }

    pub fn deregister(&mut self, id: &str) -> Result<RegisteredClient, Lwm2mError> {
        self.clients.remove(id).ok_or(Lwm2mError::NotFound)
    }

    /// Removes expired clients and returns them.
    pub fn sweep(&mut self, now: Instant) -> Vec<RegisteredClient> {
        let expired: Vec<String> = self
            .clients
            .iter()
            .filter(|(_, c)| c.expired(now))
            .map(|(id, _)| id.clone())
            .collect();
        expired
            .into_iter()
            .filter_map(|id| self.clients.remove(&id))
            .inspect(|c| info!(endpoint = %c.endpoint_name, "registration expired"))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&RegisteredClient> {
        self.clients.get(id)
    }

    pub fn lookup(&self, endpoint_name: &str) -> Option<&RegisteredClient> {
        self.clients.values().find(|c| c.endpoint_name == endpoint_name)
    }

    pub fn clients(&self) -> impl Iterator<Item = &RegisteredClient> {
        self.clients.values()
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    /// `</rd/1>;ep="silo1";lt=300,...`
    pub fn listing(&self) -> String {
        self.clients
            .values()
            .map(|c| format!("<{}>;ep=\"{}\";lt={}", c.location(), c.endpoint_name, c.lifetime))
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn links_text(links: &[Link]) -> String {
    links
        .iter()
        .map(|l| {
            let mut s = format!("<{}>", l.target);
            for (k, v) in &l.attributes {
                match v {
                    Some(v) => s.push_str(&format!(";{k}={v}")),
                    None => s.push_str(&format!(";{k}")),
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// CoAP front of a shared [`Directory`] at `/rd`.
pub struct DirectoryService {
    dir: Arc<Mutex<Directory>>,
}

impl DirectoryService {
    pub fn new(dir: Arc<Mutex<Directory>>) -> Self {
        DirectoryService { dir }
    }

    fn dispatch(&self, peer: SocketAddr, req: &CoapMessage, now: Instant) -> Result<Response, Lwm2mError> {
        let path = req.uri_path();
        let mut dir = self.dir.lock().expect("directory lock");
        let parse_lt = |s: String| {
            s.parse::<u64>()
                .map_err(|_| Lwm2mError::BadRequest("bad lifetime".into()))
        };
        match (req.code, path.as_slice()) {
            (Code::POST, [rd]) if rd == "rd" => {
                let ep = req
                    .query("ep")
                    .ok_or_else(|| Lwm2mError::BadRequest("missing ep".into()))?;
                let lt = req.query("lt").map(parse_lt).transpose()?.unwrap_or(DEFAULT_LIFETIME);
                let links = String::from_utf8_lossy(&req.payload);
                let id = dir.register(&ep, peer, &links, lt, now)?;
                Ok(Response::new(Code::CREATED).with_location(&format!("rd/{id}")))
            }
            (Code::GET, [rd]) if rd == "rd" => {
                dir.sweep(now);
                Ok(Response::content(dir.listing(), content_format::LINK_FORMAT))
            }
            (Code::POST, [rd, id]) if rd == "rd" => {
                let lt = req.query("lt").map(parse_lt).transpose()?;
                let links = (!req.payload.is_empty()).then(|| req.payload_text());
                dir.update(id, peer, lt, links.as_deref(), now)?;
                Ok(Response::new(Code::CHANGED))
            }
            (Code::DELETE, [rd, id]) if rd == "rd" => {
                dir.deregister(id)?;
                Ok(Response::new(Code::DELETED))
            }
            (Code::GET, [rd, id]) if rd == "rd" => {
                dir.sweep(now);
                let c = dir.get(id).ok_or(Lwm2mError::NotFound)?;
                Ok(Response::content(links_text(&c.links), content_format::LINK_FORMAT))
            }
            (_, [rd, ..]) if rd == "rd" => Err(Lwm2mError::MethodNotAllowed),
            _ => Err(Lwm2mError::NotFound),
        }
    }
}

impl Service for DirectoryService {
    fn handle(&mut self, peer: SocketAddr, req: &CoapMessage, ctx: &mut ServiceCtx) -> Response {
        match self.dispatch(peer, req, ctx.now) {
            Ok(r) => r,
            Err(e) => {
                let mut r = Response::new(e.code());
                if let Lwm2mError::BadRequest(m) = e {
                    r.payload = m.into_bytes();
                }
                r
            }
        }
    }

    fn tick_interval(&self) -> Option<Duration> {
        Some(EVICTION_SWEEP)
    }

    fn tick(&mut self, ctx: &mut ServiceCtx) {
        self.dir.lock().expect("directory lock").sweep(ctx.now);
    }
}
