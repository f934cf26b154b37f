use std::collections::HashMap;
use std::net::SocketAddr;

use super::{option, CoapError, CoapMessage, Code, MessageType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObserveRelation {
    pub observer: SocketAddr,
    pub token: Vec<u8>,
    pub path: String,
    /// Value the next notification carries.
    pub sequence: u32,
}

/// Server-side observe bookkeeping, keyed by (observer, token).
#[derive(Debug, Default)]
pub struct ObserveRegistry {
    relations: Vec<ObserveRelation>,
    /// Message id of each sent notification, so a reset can be traced back.
    sent: HashMap<(SocketAddr, u16), Vec<u8>>,
}

impl ObserveRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a relation, replacing one with the same observer and token.
    pub fn register(&mut self, observer: SocketAddr, token: &[u8], path: &str) {
        self.cancel(observer, token);
        self.relations.push(ObserveRelation {
            observer,
            token: token.to_vec(),
            path: path.to_string(),
            sequence: 1,
        });
    }

    pub fn cancel(&mut self, observer: SocketAddr, token: &[u8]) -> bool {
        let before = self.relations.len();
        self.relations
            .retain(|r| !(r.observer == observer && r.token == token));
        self.sent
            .retain(|(addr, _), t| !(*addr == observer && t.as_slice() == token));
        before != self.relations.len()
    }

    /// Handles a reset from `observer` for message `mid`. Returns the
    /// cancelled relation's token, if the reset answered a notification.
    pub fn on_reset(&mut self, observer: SocketAddr, mid: u16) -> Option<Vec<u8>> {
        let token = self.sent.remove(&(observer, mid))?;
        self.cancel(observer, &token);
        Some(token)
    }

    pub fn get(&self, observer: SocketAddr, token: &[u8]) -> Option<&ObserveRelation> {
        self.relations
            .iter()
            .find(|r| r.observer == observer && r.token == token)
    }

    pub fn relations(&self) -> &[ObserveRelation] {
        &self.relations
    }

    pub fn observers_of(&self, path: &str) -> Vec<(SocketAddr, Vec<u8>)> {
        self.relations
            .iter()
            .filter(|r| r.path == path)
            .map(|r| (r.observer, r.token.clone()))
            .collect()
    }

    /// Builds the next NON 2.05 notification for a relation and advances
    /// its sequence.
    pub fn notification(
        &mut self,
        observer: SocketAddr,
        token: &[u8],
        mid: u16,
        payload: &[u8],
        content_format: Option<u16>,
    ) -> Result<CoapMessage, CoapError> {
        let rel = self
            .relations
            .iter_mut()
            .find(|r| r.observer == observer && r.token == token)
            .ok_or(CoapError::RelationGone)?;
        let seq = rel.sequence;
        rel.sequence = (rel.sequence + 1) & 0x00ff_ffff;
        let mut m = CoapMessage::new(MessageType::Non, Code::CONTENT, mid)
            .with_token(token)
            .with_uint_option(option::OBSERVE, seq)
            .with_payload(payload.to_vec());
        if let Some(cf) = content_format {
            m = m.with_uint_option(option::CONTENT_FORMAT, u32::from(cf));
        }
        self.sent.insert((observer, mid), token.to_vec());
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr() -> SocketAddr {
        "127.0.0.1:5000".parse().unwrap()
    }

    #[test]
    fn sequence_starts_at_one_and_increases() {
        let mut r = ObserveRegistry::new();
        r.register(addr(), b"tk", "/1663/0/7");
        let a = r.notification(addr(), b"tk", 1, b"0", None).unwrap();
        let b = r.notification(addr(), b"tk", 2, b"1", None).unwrap();
        assert_eq!(a.observe(), Some(1));
        assert_eq!(b.observe(), Some(2));
        assert_eq!(a.token, b.token);
        assert_eq!(a.mtype, MessageType::Non);
    }

    #[test]
    fn reset_cancels() {
        let mut r = ObserveRegistry::new();
        r.register(addr(), b"tk", "/1663/0/7");
        r.notification(addr(), b"tk", 9, b"0", None).unwrap();
        assert_eq!(r.on_reset(addr(), 9), Some(b"tk".to_vec()));
        assert!(r.relations().is_empty());
        assert_eq!(
            r.notification(addr(), b"tk", 10, b"0", None),
            Err(CoapError::RelationGone)
        );
        assert_eq!(r.on_reset(addr(), 9), None);
    }

    #[test]
    fn reregister_replaces() {
        let mut r = ObserveRegistry::new();
        r.register(addr(), b"tk", "/a");
        r.notification(addr(), b"tk", 1, b"", None).unwrap();
        r.register(addr(), b"tk", "/b");
        assert_eq!(r.relations().len(), 1);
        assert_eq!(r.get(addr(), b"tk").unwrap().sequence, 1);
        assert_eq!(r.observers_of("/b").len(), 1);
        assert!(r.observers_of("/a").is_empty());
    }
}
