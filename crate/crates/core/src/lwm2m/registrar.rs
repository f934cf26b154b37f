use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::coap::{CoapError, Code, EndpointHandle};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistrarError {
    #[error(transparent)]
    Coap(#[from] CoapError),
    #[error("directory answered {0}")]
    Rejected(Code),
    #[error("not registered")]
    NotRegistered,
}

/// Client side of registration: registers with a directory and keeps the
/// registration alive.
pub struct Registrar {
    ep: EndpointHandle,
    server: SocketAddr,
    name: String,
    lifetime: u64,
    links: String,
    location: Mutex<Option<String>>,
}

impl Registrar {
    pub fn new(
        ep: EndpointHandle,
        server: SocketAddr,
        name: impl Into<String>,
        lifetime: u64,
        links: impl Into<String>,
    ) -> Self {
        Registrar {
            ep,
            server,
            name: name.into(),
            lifetime,
            links: links.into(),
            location: Mutex::new(None),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn location(&self) -> Option<String> {
        self.location.lock().expect("location lock").clone()
    }

    /// Registration updates are sent every half lifetime.
    pub fn update_period(&self) -> Duration {
        Duration::from_secs(self.lifetime).max(Duration::from_secs(2)) / 2
    }

    pub async fn register(&self) -> Result<String, RegistrarError> {
        let path = format!("/rd?ep={}&lt={}", self.name, self.lifetime);
        let resp = self
            .ep
            .call(self.server, Code::POST, &path, self.links.as_bytes().to_vec())
            .await?;
        if resp.code != Code::CREATED {
            return Err(RegistrarError::Rejected(resp.code));
        }
        let location = resp.location_path();
        info!(endpoint = %self.name, %location, "registered with directory");
        *self.location.lock().expect("location lock") = Some(location.clone());
        Ok(location)
    }

    /// Refreshes the registration, registering again if the directory no
    /// longer knows it.
    pub async fn update(&self) -> Result<(), RegistrarError> {
        let Some(location) = self.location() else {
            self.register().await?;
            return Ok(());
        };
        let resp = self.ep.call(self.server, Code::POST, &location, Vec::new()).await?;
        match resp.code {
            Code::CHANGED => Ok(()),
            Code::NOT_FOUND => {
                warn!(endpoint = %self.name, "registration lost, registering again");
                self.register().await.map(|_| ())
            }
            code => Err(RegistrarError::Rejected(code)),
        }
    }

    pub async fn deregister(&self) -> Result<(), RegistrarError> {
        let location = self.location().ok_or(RegistrarError::NotRegistered)?;
        let resp = self.ep.call(self.server, Code::DELETE, &location, Vec::new()).await?;
        *self.location.lock().expect("location lock") = None;
        match resp.code {
            Code::DELETED => Ok(()),
            code => Err(RegistrarError::Rejected(code)),
        }
    }

    /// Sends an update every `period` until the task is aborted.
    pub fn spawn_keepalive(self: Arc<Self>, period: Duration) -> JoinHandle<()> {
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            interval.tick().await;
            loop {
                interval.tick().await;
                if let Err(e) = self.update().await {
                    warn!(endpoint = %self.name, error = %e, "registration update failed");
                }
            }
        })
    }
}
