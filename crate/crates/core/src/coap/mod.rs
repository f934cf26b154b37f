//! CoAP over UDP: message model, wire codec, and an endpoint that handles
//! confirmable exchanges, deduplication and observation.
//!
//! Only the options LWM2M traffic needs are understood: Observe,
//! Location-Path, Uri-Path, Content-Format and Uri-Query. Unknown critical
//! options make a request fail with 4.00; unknown elective ones are ignored.

mod codec;
mod dedup;
mod endpoint;
mod observe;

use std::fmt;

use thiserror::Error;

pub use codec::{decode, encode};
pub use dedup::{DedupCache, Seen};
pub use endpoint::{Endpoint, EndpointHandle, Response, Service, ServiceCtx, TransmissionParams};
pub use observe::{ObserveRegistry, ObserveRelation};

pub const DEFAULT_PORT: u16 = 5683;
pub const MAX_PAYLOAD: usize = 1024;
pub const MAX_TOKEN: usize = 8;

pub mod option {
    pub const OBSERVE: u16 = 6;
    pub const LOCATION_PATH: u16 = 8;
    pub const URI_PATH: u16 = 11;
    pub const CONTENT_FORMAT: u16 = 12;
    pub const URI_QUERY: u16 = 15;

    pub fn is_supported(n: u16) -> bool {
        matches!(n, OBSERVE | LOCATION_PATH | URI_PATH | CONTENT_FORMAT | URI_QUERY)
    }

    /// Odd option numbers are critical.
    pub fn is_critical(n: u16) -> bool {
        n & 1 == 1
    }
}

pub mod content_format {
    pub const TEXT_PLAIN: u16 = 0;
    pub const LINK_FORMAT: u16 = 40;
    pub const JSON: u16 = 50;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Con,
    Non,
    Ack,
    Rst,
}

impl MessageType {
    pub fn bits(self) -> u8 {
        match self {
            MessageType::Con => 0,
            MessageType::Non => 1,
            MessageType::Ack => 2,
            MessageType::Rst => 3,
        }
    }

    pub fn from_bits(b: u8) -> Self {
        match b & 3 {
            0 => MessageType::Con,
            1 => MessageType::Non,
            2 => MessageType::Ack,
            _ => MessageType::Rst,
        }
    }
}

/// `class.detail`, e.g. 2.05.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Code {
    pub class: u8,
    pub detail: u8,
}

impl Code {
    pub const fn new(class: u8, detail: u8) -> Self {
        Code { class, detail }
    }

    pub const EMPTY: Code = Code::new(0, 0);
    pub const GET: Code = Code::new(0, 1);
    pub const POST: Code = Code::new(0, 2);
    pub const PUT: Code = Code::new(0, 3);
    pub const DELETE: Code = Code::new(0, 4);
    pub const CREATED: Code = Code::new(2, 1);
    pub const DELETED: Code = Code::new(2, 2);
    pub const CHANGED: Code = Code::new(2, 4);
    pub const CONTENT: Code = Code::new(2, 5);
    pub const BAD_REQUEST: Code = Code::new(4, 0);
    pub const NOT_FOUND: Code = Code::new(4, 4);
    pub const METHOD_NOT_ALLOWED: Code = Code::new(4, 5);
    pub const INTERNAL_SERVER_ERROR: Code = Code::new(5, 0);

    pub fn byte(self) -> u8 {
        (self.class << 5) | (self.detail & 0x1f)
    }

    pub fn from_byte(b: u8) -> Self {
        Code::new(b >> 5, b & 0x1f)
    }

    pub fn is_request(self) -> bool {
        self.class == 0 && self.detail != 0
    }

    pub fn is_response(self) -> bool {
        self.class >= 2
    }

    pub fn is_success(self) -> bool {
        self.class == 2
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.class, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoapMessage {
    pub mtype: MessageType,
    pub code: Code,
    pub message_id: u16,
    pub token: Vec<u8>,
    /// Sorted by option number when encoded; order among equal numbers is kept.
    pub options: Vec<(u16, Vec<u8>)>,
    pub payload: Vec<u8>,
}

impl CoapMessage {
    pub fn new(mtype: MessageType, code: Code, message_id: u16) -> Self {
        CoapMessage {
            mtype,
            code,
            message_id,
            token: Vec::new(),
            options: Vec::new(),
            payload: Vec::new(),
        }
    }

    /// A request for `path` (`/a/b`); a query part after `?` becomes Uri-Query
    /// options split on `&`.
    pub fn request(mtype: MessageType, code: Code, path: &str) -> Self {
        let mut m = CoapMessage::new(mtype, code, 0);
        let (path, query) = match path.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (path, None),
        };
        m.set_path_option(option::URI_PATH, path);
        if let Some(q) = query {
            for part in q.split('&').filter(|p| !p.is_empty()) {
                m.options.push((option::URI_QUERY, part.as_bytes().to_vec()));
            }
        }
        m
    }

    pub fn empty_ack(message_id: u16) -> Self {
        CoapMessage::new(MessageType::Ack, Code::EMPTY, message_id)
    }

    pub fn reset(message_id: u16) -> Self {
        CoapMessage::new(MessageType::Rst, Code::EMPTY, message_id)
    }

    pub fn with_token(mut self, token: &[u8]) -> Self {
        self.token = token.to_vec();
        self
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }

    pub fn with_option(mut self, number: u16, value: impl Into<Vec<u8>>) -> Self {
        self.options.push((number, value.into()));
        self
    }

    pub fn with_uint_option(self, number: u16, value: u32) -> Self {
        self.with_option(number, encode_uint(value))
    }

    pub fn option(&self, number: u16) -> Option<&[u8]> {
        self.options
            .iter()
            .find(|(n, _)| *n == number)
            .map(|(_, v)| v.as_slice())
    }

    pub fn options_of(&self, number: u16) -> impl Iterator<Item = &[u8]> {
        self.options
            .iter()
            .filter(move |(n, _)| *n == number)
            .map(|(_, v)| v.as_slice())
    }

    pub fn uint_option(&self, number: u16) -> Option<u32> {
        self.option(number).map(decode_uint)
    }

    pub fn observe(&self) -> Option<u32> {
        self.uint_option(option::OBSERVE)
    }

    pub fn content_format(&self) -> Option<u16> {
        self.uint_option(option::CONTENT_FORMAT).map(|v| v as u16)
    }

    pub fn uri_path(&self) -> Vec<String> {
        self.string_options(option::URI_PATH)
    }

    /// Uri-Path joined as `/a/b`; `/` when there is none.
    pub fn path_string(&self) -> String {
        join_path(&self.uri_path())
    }

    pub fn location_path(&self) -> String {
        join_path(&self.string_options(option::LOCATION_PATH))
    }

    /// Uri-Query options as `key=value` pairs; a bare key maps to "".
    pub fn queries(&self) -> Vec<(String, String)> {
        self.string_options(option::URI_QUERY)
            .into_iter()
            .map(|q| match q.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => (q, String::new()),
            })
            .collect()
    }

    pub fn query(&self, key: &str) -> Option<String> {
        self.queries().into_iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn set_path_option(&mut self, number: u16, path: &str) {
        self.options.retain(|(n, _)| *n != number);
        for seg in path.split('/').filter(|s| !s.is_empty()) {
            self.options.push((number, seg.as_bytes().to_vec()));
        }
    }

    pub fn payload_text(&self) -> String {
        String::from_utf8_lossy(&self.payload).into_owned()
    }

    fn string_options(&self, number: u16) -> Vec<String> {
        self.options_of(number)
            .map(|v| String::from_utf8_lossy(v).into_owned())
            .collect()
    }
}

fn join_path(segments: &[String]) -> String {
    if segments.is_empty() {
        "/".into()
    } else {
        segments.iter().map(|s| format!("/{s}")).collect()
    }
}

/// Minimal big-endian unsigned option value (zero is empty).
pub fn encode_uint(v: u32) -> Vec<u8> {
    let bytes = v.to_be_bytes();
    let skip = bytes.iter().take_while(|b| **b == 0).count();
    bytes[skip..].to_vec()
}

pub fn decode_uint(b: &[u8]) -> u32 {
    b.iter().take(4).fold(0u32, |acc, x| (acc << 8) | u32::from(*x))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoapError {
    #[error("option {number} value of {len} bytes cannot be encoded")]
    EncodingOverflow { number: u16, len: usize },
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD} byte limit")]
    PayloadTooLarge(usize),
    #[error("token of {0} bytes exceeds 8")]
    InvalidToken(usize),
    #[error("empty message carries a token, options or payload")]
    MalformedEmpty,
    #[error("frame truncated")]
    TruncatedFrame,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("token length nibble {0} is reserved")]
    IllegalTokenLength(u8),
    #[error("payload marker not followed by payload")]
    PayloadMarkerWithoutPayload,
    #[error("reserved option nibble 15")]
    InvalidOptionNibble,
    #[error("option number exceeds 65535")]
    OptionNumberOverflow,
    #[error("no response after retransmissions")]
    TransmissionTimeout,
    #[error("peer answered with reset")]
    ResetReceived,
    #[error("observe relation no longer exists")]
    RelationGone,
    #[error("endpoint is shut down")]
    EndpointClosed,
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for CoapError {
    fn from(e: std::io::Error) -> Self {
        CoapError::Io(e.to_string())
    }
}
