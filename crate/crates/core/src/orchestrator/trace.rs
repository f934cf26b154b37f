use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::recipe::{Couple, Step};
use super::run::RunStatus;
use super::tokens::TokenKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEvent {
    /// Global order across all runs.
    pub seq: u64,
    /// Microseconds since the orchestrator started.
    pub at_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<String>,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum TraceKind {
    Planned { couple: Couple, steps: Vec<Step> },
    Status { status: RunStatus },
    StepStarted { index: usize, step: Step },
    StepCompleted { index: usize },
    TokenRequested { token: TokenKind },
    TokenAcquired { token: TokenKind },
    TokenReleased { token: TokenKind },
    TokenWithdrawn { token: TokenKind },
    Execute { silo: String, path: String },
    Write { silo: String, path: String, value: String },
    Notify { silo: String, path: String, payload: String },
    Error { message: String },
}

/// A token hold from grant to release, in trace sequence numbers. Open
/// holds end at `u64::MAX`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hold {
    pub run: String,
    pub start: u64,
    pub end: u64,
}

pub fn hold_intervals(trace: &[TraceEvent], token: TokenKind) -> Vec<Hold> {
    let mut open: BTreeMap<String, u64> = BTreeMap::new();
    let mut out = Vec::new();
    for e in trace {
        let Some(run) = &e.run else { continue };
        match &e.kind {
            TraceKind::TokenAcquired { token: t } if *t == token => {
                open.insert(run.clone(), e.seq);
            }
            TraceKind::TokenReleased { token: t } if *t == token => {
                if let Some(start) = open.remove(run) {
                    out.push(Hold { run: run.clone(), start, end: e.seq });
                }
            }
            _ => {}
        }
    }
    out.extend(open.into_iter().map(|(run, start)| Hold { run, start, end: u64::MAX }));
    out.sort_by_key(|h| h.start);
    out
}

/// Pairs of holds that overlap.
pub fn overlaps(holds: &[Hold]) -> Vec<(Hold, Hold)> {
    let mut out = Vec::new();
    for (i, a) in holds.iter().enumerate() {
        for b in &holds[i + 1..] {
            if a.start < b.end && b.start < a.end {
                out.push((a.clone(), b.clone()));
            }
        }
    }
    out
}

/// Acquisitions minus releases per token; all zero at quiescence.
pub fn token_balance(trace: &[TraceEvent]) -> BTreeMap<TokenKind, i64> {
    let mut out: BTreeMap<TokenKind, i64> = TokenKind::ALL.iter().map(|k| (*k, 0)).collect();
    for e in trace {
        match e.kind {
            TraceKind::TokenAcquired { token } => *out.entry(token).or_default() += 1,
            TraceKind::TokenReleased { token } => *out.entry(token).or_default() -= 1,
            _ => {}
        }
    }
    out
}

/// Grant order of a token, as run ids.
pub fn grants(trace: &[TraceEvent], token: TokenKind) -> Vec<String> {
    trace
        .iter()
        .filter(|e| matches!(e.kind, TraceKind::TokenAcquired { token: t } if t == token))
        .filter_map(|e| e.run.clone())
        .collect()
}
