//! LWM2M over CoAP: the client-side object registry that answers device
//! management requests, the server-side registration directory, and the
//! pieces that connect the two (registrar and server client).
//!
//! Interfaces, from a Thing's point of view:
//! provided are request handling (read/write/execute), observation and
//! discovery; required are registration, notification delivery and
//! registration update. Bootstrap is not implemented.

mod directory;
mod registrar;
mod registry;
mod server;

use thiserror::Error;

use crate::coap::Code;
use crate::resource::ValueType;

pub use directory::{Directory, DirectoryService, RegisteredClient, EVICTION_SWEEP};
pub use registrar::{Registrar, RegistrarError};
pub use registry::{
    ClientService, ExecHook, ObjectRegistry, ReadHook, RegistryReply, SharedRegistry, WriteHook,
};
pub use server::{ServerClient, ServerError};

pub const DEFAULT_LIFETIME: u64 = 300;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResourceValue {
    Text(String),
    Integer(i64),
    Boolean(bool),
    Opaque(Vec<u8>),
    None,
}

impl ResourceValue {
    pub fn default_for(vt: ValueType) -> Self {
        match vt {
            ValueType::Text => ResourceValue::Text(String::new()),
            ValueType::Integer => ResourceValue::Integer(0),
            ValueType::Boolean => ResourceValue::Boolean(false),
            ValueType::Opaque => ResourceValue::Opaque(Vec::new()),
            ValueType::None => ResourceValue::None,
        }
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            ResourceValue::Text(_) => ValueType::Text,
            ResourceValue::Integer(_) => ValueType::Integer,
            ResourceValue::Boolean(_) => ValueType::Boolean,
            ResourceValue::Opaque(_) => ValueType::Opaque,
            ResourceValue::None => ValueType::None,
        }
    }

    /// Plain-text payload: integers in decimal, booleans as 0/1.
    pub fn to_payload(&self) -> Vec<u8> {
        match self {
            ResourceValue::Text(s) => s.as_bytes().to_vec(),
            ResourceValue::Integer(n) => n.to_string().into_bytes(),
            ResourceValue::Boolean(b) => if *b { b"1".to_vec() } else { b"0".to_vec() },
            ResourceValue::Opaque(b) => b.clone(),
            ResourceValue::None => Vec::new(),
        }
    }

    pub fn from_payload(vt: ValueType, payload: &[u8]) -> Result<Self, Lwm2mError> {
        let text = || {
            std::str::from_utf8(payload)
                .map_err(|_| Lwm2mError::BadRequest("payload is not UTF-8".into()))
        };
        match vt {
            ValueType::Text => Ok(ResourceValue::Text(text()?.to_string())),
            ValueType::Integer => text()?
                .trim()
                .parse()
                .map(ResourceValue::Integer)
                .map_err(|_| Lwm2mError::BadRequest("expected an integer".into())),
            ValueType::Boolean => match text()?.trim() {
                "1" | "true" => Ok(ResourceValue::Boolean(true)),
                "0" | "false" => Ok(ResourceValue::Boolean(false)),
                _ => Err(Lwm2mError::BadRequest("expected 0 or 1".into())),
            },
            ValueType::Opaque => Ok(ResourceValue::Opaque(payload.to_vec())),
            ValueType::None => Err(Lwm2mError::BadRequest("resource carries no value".into())),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ResourceValue::Integer(n) => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Lwm2mError {
    #[error("not found")]
    NotFound,
    #[error("method not allowed")]
    MethodNotAllowed,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    InternalError(String),
}

impl Lwm2mError {
    pub fn code(&self) -> Code {
        match self {
            Lwm2mError::NotFound => Code::NOT_FOUND,
            Lwm2mError::MethodNotAllowed => Code::METHOD_NOT_ALLOWED,
            Lwm2mError::BadRequest(_) => Code::BAD_REQUEST,
            Lwm2mError::InternalError(_) => Code::INTERNAL_SERVER_ERROR,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_text() {
        assert_eq!(ResourceValue::Integer(-4).to_payload(), b"-4");
        assert_eq!(ResourceValue::Boolean(true).to_payload(), b"1");
        assert_eq!(
            ResourceValue::from_payload(ValueType::Integer, b"60").unwrap(),
            ResourceValue::Integer(60)
        );
        assert!(ResourceValue::from_payload(ValueType::Integer, b"abc").is_err());
        assert!(ResourceValue::from_payload(ValueType::Boolean, b"2").is_err());
        assert!(ResourceValue::from_payload(ValueType::Text, &[0xff]).is_err());
        assert_eq!(
            ResourceValue::from_payload(ValueType::Boolean, b"true").unwrap(),
            ResourceValue::Boolean(true)
        );
    }
}
