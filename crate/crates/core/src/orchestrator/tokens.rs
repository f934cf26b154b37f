use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot};

use super::OrchestratorError;

/// Shared plant resources. The derived order is the global acquisition
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TokenKind {
    Pipe,
    MixerPower,
}

impl TokenKind {
    pub const ALL: [TokenKind; 2] = [TokenKind::Pipe, TokenKind::MixerPower];
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Pipe => "pipe",
            TokenKind::MixerPower => "mixerPower",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSnapshot {
    pub holder: Option<String>,
    pub queue: Vec<String>,
}

/// One token: a holder and a FIFO of waiters.
#[derive(Debug)]
pub struct Token<W> {
    kind: TokenKind,
    holder: Option<String>,
    queue: VecDeque<(String, W)>,
}

impl<W> Token<W> {
    pub fn new(kind: TokenKind) -> Self {
        Token { kind, holder: None, queue: VecDeque::new() }
    }

    pub fn kind(&self) -> TokenKind {
        self.kind
    }

    /// Grants at once when free, otherwise queues. Returns the waiter back
    /// when granted.
    pub fn request(&mut self, id: &str, waiter: W) -> Option<W> {
        if self.holder.is_none() {
            self.holder = Some(id.to_string());
            Some(waiter)
        } else {
            self.queue.push_back((id.to_string(), waiter));
            None
        }
    }

    /// Frees the token and hands it to the next waiter, returned with its id.
    pub fn release(&mut self, id: &str) -> Result<Option<(String, W)>, OrchestratorError> {
        if self.holder.as_deref() != Some(id) {
            return Err(OrchestratorError::ReleaseByNonHolder {
                kind: self.kind,
                id: id.to_string(),
                holder: self.holder.clone(),
            });
        }
        self.holder = None;
        Ok(self.queue.pop_front().inspect(|(next, _)| {
            self.holder = Some(next.clone());
        }))
    }

    /// Drops a queued request.
    pub fn withdraw(&mut self, id: &str) -> bool {
        let before = self.queue.len();
        self.queue.retain(|(q, _)| q != id);
        before != self.queue.len()
    }

    pub fn holder(&self) -> Option<&str> {
        self.holder.as_deref()
    }

    pub fn snapshot(&self) -> TokenSnapshot {
        TokenSnapshot {
            holder: self.holder.clone(),
            queue: self.queue.iter().map(|(q, _)| q.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenAction {
    Requested,
    Acquired,
    Released,
    Withdrawn,
}

/// Called by the manager, in order, for every token state change.
pub type TokenObserver = Arc<dyn Fn(TokenKind, &str, TokenAction) + Send + Sync>;

enum Msg {
    Acquire(TokenKind, String, oneshot::Sender<()>),
    Release(TokenKind, String, oneshot::Sender<Result<(), OrchestratorError>>),
    /// The requester gave up: withdraw if queued, release if granted.
    Abandon(TokenKind, String),
    Snapshot(oneshot::Sender<Vec<(TokenKind, TokenSnapshot)>>),
}

/// Serialized owner of every token; requests reach it as messages.
#[derive(Clone)]
pub struct TokenManager {
    tx: mpsc::UnboundedSender<Msg>,
}

impl TokenManager {
    pub fn spawn(observer: Option<TokenObserver>) -> Self {
        let (tx, mut rx) = mpsc::unbounded_channel::<Msg>();
        tokio::spawn(async move {
            let mut tokens: Vec<(TokenKind, Token<oneshot::Sender<()>>)> =
                TokenKind::ALL.iter().map(|k| (*k, Token::new(*k))).collect();
            let note = |k: TokenKind, id: &str, a: TokenAction| {
                if let Some(o) = &observer {
                    o(k, id, a);
                }
            };
            let note = &note;
            while let Some(msg) = rx.recv().await {
                match msg {
                    Msg::Acquire(kind, id, reply) => {
                        let t = &mut tokens.iter_mut().find(|(k, _)| *k == kind).unwrap().1;
                        note(kind, &id, TokenAction::Requested);
                        if let Some(reply) = t.request(&id, reply) {
                            note(kind, &id, TokenAction::Acquired);
                            if reply.send(()).is_err() {
                                let _ = release_and_hand_over(t, &id, note);
                            }
                        }
                    }
                    Msg::Release(kind, id, reply) => {
                        let t = &mut tokens.iter_mut().find(|(k, _)| *k == kind).unwrap().1;
                        let r = release_and_hand_over(t, &id, &note);
                        let _ = reply.send(r);
                    }
                    Msg::Abandon(kind, id) => {
                        let t = &mut tokens.iter_mut().find(|(k, _)| *k == kind).unwrap().1;
                        if t.withdraw(&id) {
                            note(kind, &id, TokenAction::Withdrawn);
                        } else if t.holder() == Some(id.as_str()) {
                            let _ = release_and_hand_over(t, &id, &note);
                        }
                    }
                    Msg::Snapshot(reply) => {
                        let _ = reply.send(tokens.iter().map(|(k, t)| (*k, t.snapshot())).collect());
                    }
                }
            }
        });
        TokenManager { tx }
    }

    /// Waits until `id` holds `kind`. Dropping the future before the grant
    /// withdraws the request.
    pub async fn acquire(&self, kind: TokenKind, id: &str) -> Result<(), OrchestratorError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(Msg::Acquire(kind, id.to_string(), reply))
            .map_err(|_| OrchestratorError::Shutdown)?;
        let mut guard = WithdrawOnDrop { mgr: self, kind, id, armed: true };
        let r = rx.await.map_err(|_| OrchestratorError::Shutdown);
        guard.armed = false;
        r
    }

    /// Acquires several tokens in the global order.
    pub async fn acquire_all(&self, kinds: &[TokenKind], id: &str) -> Result<(), OrchestratorError> {
        let mut sorted = kinds.to_vec();
        sorted.sort();
        sorted.dedup();
        for k in sorted {
            self.acquire(k, id).await?;
        }
        Ok(())
    }

    pub async fn release(&self, kind: TokenKind, id: &str) -> Result<(), OrchestratorError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(Msg::Release(kind, id.to_string(), reply))
            .map_err(|_| OrchestratorError::Shutdown)?;
        rx.await.map_err(|_| OrchestratorError::Shutdown)?
    }

    pub async fn snapshot(&self) -> Vec<(TokenKind, TokenSnapshot)> {
        let (reply, rx) = oneshot::channel();
        if self.tx.send(Msg::Snapshot(reply)).is_err() {
            return Vec::new();
        }
        rx.await.unwrap_or_default()
    }
}

fn release_and_hand_over(
    t: &mut Token<oneshot::Sender<()>>,
    id: &str,
    note: &dyn Fn(TokenKind, &str, TokenAction),
) -> Result<(), OrchestratorError> {
    let kind = t.kind;
    let mut next = t.release(id)?;
    note(kind, id, TokenAction::Released);
    while let Some((nid, waiter)) = next {
        note(kind, &nid, TokenAction::Acquired);
        if waiter.send(()).is_ok() {
            break;
        }
        next = t.release(&nid).expect("just granted");
        note(kind, &nid, TokenAction::Released);
    }
    Ok(())
}

struct WithdrawOnDrop<'a> {
    mgr: &'a TokenManager,
    kind: TokenKind,
    id: &'a str,
    armed: bool,
}

impl Drop for WithdrawOnDrop<'_> {
    fn drop(&mut self) {
        if self.armed {
            let _ = self.mgr.tx.send(Msg::Abandon(self.kind, self.id.to_string()));
        }
    }
}
