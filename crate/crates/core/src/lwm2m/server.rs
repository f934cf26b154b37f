use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use thiserror::Error;
use tokio::sync::mpsc;

use super::Directory;
use crate::coap::{CoapError, CoapMessage, Code, EndpointHandle};
use crate::resource::ResourcePath;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServerError {
    #[error("no registered endpoint named `{0}`")]
    UnknownEndpoint(String),
    #[error(transparent)]
    Coap(#[from] CoapError),
    #[error("{path} answered {code}: {message}")]
    Status {
        path: String,
        code: Code,
        message: String,
    },
}

/// Server-side access to registered Things by endpoint name.
#[derive(Clone)]
pub struct ServerClient {
    ep: EndpointHandle,
    dir: Arc<Mutex<Directory>>,
}

impl ServerClient {
    pub fn new(ep: EndpointHandle, dir: Arc<Mutex<Directory>>) -> Self {
        ServerClient { ep, dir }
    }

    pub fn endpoint(&self) -> &EndpointHandle {
        &self.ep
    }

    pub fn directory(&self) -> &Arc<Mutex<Directory>> {
        &self.dir
    }

    pub fn address(&self, name: &str) -> Result<SocketAddr, ServerError> {
        self.dir
            .lock()
            .expect("directory lock")
            .lookup(name)
            .map(|c| c.address)
            .ok_or_else(|| ServerError::UnknownEndpoint(name.to_string()))
    }

    async fn call(
        &self,
        name: &str,
        code: Code,
        path: &str,
        payload: &[u8],
        expect: Code,
    ) -> Result<CoapMessage, ServerError> {
        let addr = self.address(name)?;
        let resp = self.ep.call(addr, code, path, payload.to_vec()).await?;
        if resp.code != expect {
            return Err(ServerError::Status {
                path: path.to_string(),
                code: resp.code,
                message: resp.payload_text(),
            });
        }
        Ok(resp)
    }

    pub async fn read(&self, name: &str, path: &ResourcePath) -> Result<String, ServerError> {
        let r = self.call(name, Code::GET, &path.to_string(), &[], Code::CONTENT).await?;
        Ok(r.payload_text())
    }

    pub async fn write(&self, name: &str, path: &ResourcePath, value: &str) -> Result<(), ServerError> {
        self.call(name, Code::PUT, &path.to_string(), value.as_bytes(), Code::CHANGED)
            .await
            .map(|_| ())
    }

    pub async fn execute(&self, name: &str, path: &ResourcePath, args: &str) -> Result<(), ServerError> {
        self.call(name, Code::POST, &path.to_string(), args.as_bytes(), Code::CHANGED)
            .await
            .map(|_| ())
    }

    /// Link format below `path`, or of the whole Thing for `None`.
    pub async fn discover(&self, name: &str, path: Option<&ResourcePath>) -> Result<String, ServerError> {
        let p = path.map_or_else(|| "/.well-known/core".to_string(), |p| p.to_string());
        let r = self.call(name, Code::GET, &p, &[], Code::CONTENT).await?;
        Ok(r.payload_text())
    }

    /// Starts observing; returns the current value, the token and the
    /// notification stream.
    pub async fn observe(
        &self,
        name: &str,
        path: &ResourcePath,
    ) -> Result<(String, Vec<u8>, mpsc::UnboundedReceiver<CoapMessage>), ServerError> {
        let addr = self.address(name)?;
        let p = path.to_string();
        let (resp, rx) = self.ep.observe(addr, &p).await?;
        if resp.code != Code::CONTENT || resp.observe().is_none() {
            return Err(ServerError::Status {
                path: p,
                code: resp.code,
                message: resp.payload_text(),
            });
        }
        Ok((resp.payload_text(), resp.token.clone(), rx))
    }

    pub fn cancel_observe(&self, token: &[u8]) {
        self.ep.cancel_observe(token);
    }
}
