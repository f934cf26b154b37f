use std::collections::HashMap;
use std::net::SocketAddr;
use std::time::Duration;

use tokio::time::Instant;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Seen {
    /// First time this (source, message id) arrives.
    New,
    /// A duplicate; carries the encoded response sent the first time, if any.
    Duplicate(Option<Vec<u8>>),
}

type Entry = (Instant, Option<Vec<u8>>);

/// Remembers (source, message id) pairs for an exchange lifetime so a
/// retransmitted request is answered from cache instead of being handled again.
#[derive(Debug)]
pub struct DedupCache {
    lifetime: Duration,
    entries: HashMap<(SocketAddr, u16), Entry>,
}

impl DedupCache {
    pub fn new(lifetime: Duration) -> Self {
        DedupCache {
            lifetime,
            entries: HashMap::new(),
        }
    }

    pub fn check(&mut self, source: SocketAddr, mid: u16, now: Instant) -> Seen {
        match self.entries.get(&(source, mid)) {
            Some((at, resp)) if now.duration_since(*at) <= self.lifetime => {
                Seen::Duplicate(resp.clone())
            }
            _ => {
                self.entries.insert((source, mid), (now, None));
                Seen::New
            }
        }
    }

    pub fn record_response(&mut self, source: SocketAddr, mid: u16, bytes: Vec<u8>) {
        if let Some(e) = self.entries.get_mut(&(source, mid)) {
            e.1 = Some(bytes);
        }
    }

    pub fn purge(&mut self, now: Instant) {
        let lifetime = self.lifetime;
        self.entries
            .retain(|_, (at, _)| now.duration_since(*at) <= lifetime);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
