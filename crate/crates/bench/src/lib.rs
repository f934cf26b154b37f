//! Shared inputs for the benchmarks.

use iat_core::coap::{content_format, option, CoapMessage, Code, MessageType};

/// A registration request as a silo Thing sends it.
pub fn register_request() -> CoapMessage {
    let mut m = CoapMessage::request(MessageType::Con, Code::POST, "/rd")
        .with_token(&[0xde, 0xad, 0xbe, 0xef])
        .with_option(option::URI_QUERY, "ep=silo1")
        .with_option(option::URI_QUERY, "lt=300")
        .with_uint_option(option::CONTENT_FORMAT, content_format::LINK_FORMAT as u32)
        .with_payload("</1663/0>,</1664/0>,</1664/1>,</1665/0>,</1665/1>");
    m.message_id = 0x1234;
    m
}

/// An observe notification for a completion flag.
pub fn notification() -> CoapMessage {
    let mut m = CoapMessage::new(MessageType::Non, Code::CONTENT, 0x4321)
        .with_token(&[1, 2, 3, 4, 5, 6, 7, 8])
        .with_uint_option(option::OBSERVE, 7)
        .with_uint_option(option::CONTENT_FORMAT, content_format::TEXT_PLAIN as u32)
        .with_payload("1");
    m.message_id = 0x4321;
    m
}
