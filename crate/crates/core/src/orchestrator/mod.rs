//! Liqueur production: recipes, shared-resource tokens, run execution over
//! LWM2M and the HTTP gateway.

mod gateway;
mod recipe;
mod run;
mod tokens;
mod trace;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use futures::future::join_all;
use serde::Serialize;
use thiserror::Error;
use tokio::sync::{broadcast, watch};
use tokio::time::timeout;

use crate::coap::{Endpoint, EndpointHandle, TransmissionParams};
use crate::lwm2m::{Directory, DirectoryService, ServerClient, ServerError};
use crate::resource::{parse_link_format, ResourcePath};
use crate::silo::{Command, PlantConstants, SILO_OBJECT, VALVE_CLOSE, VALVE_OBJECT, VALVE_OPEN};

pub use gateway::{router, serve, GatewayState};
pub use recipe::{plan_production, Couple, Preset, Recipe, RecipeParams, Step};
pub use run::{ProductionRun, RunStatus};
pub use tokens::{
    Token, TokenAction, TokenKind, TokenManager, TokenObserver, TokenSnapshot,
};
pub use trace::{grants, hold_intervals, overlaps, token_balance, Hold, TraceEvent, TraceKind};

pub const DEFAULT_HTTP_PORT: u16 = 8080;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("couple {0} is busy")]
    CoupleBusy(Couple),
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("run `{0}` has already finished")]
    RunFinished(String),
    #[error("{id} released {kind} held by {holder:?}")]
    ReleaseByNonHolder {
        kind: TokenKind,
        id: String,
        holder: Option<String>,
    },
    #[error("step failed: {0}")]
    StepFailed(String),
    #[error("thing unreachable: {0}")]
    ThingUnreachable(String),
    #[error("step timed out: {0}")]
    StepTimeout(String),
    #[error("aborted")]
    Aborted,
    #[error("orchestrator shut down")]
    Shutdown,
    #[error("i/o: {0}")]
    Io(String),
}

impl From<ServerError> for OrchestratorError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Status { .. } => OrchestratorError::StepFailed(e.to_string()),
            ServerError::UnknownEndpoint(_) | ServerError::Coap(_) => {
                OrchestratorError::ThingUnreachable(e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    pub constants: PlantConstants,
    /// Upper bound on one step, wall clock.
    pub step_timeout: Duration,
    /// Each run's trace is written to `<dir>/<run id>.jsonl`.
    pub trace_dir: Option<PathBuf>,
    pub params: TransmissionParams,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            constants: PlantConstants::default(),
            step_timeout: Duration::from_secs(300),
            trace_dir: None,
            params: TransmissionParams::default(),
        }
    }
}

struct TraceLog {
    started: Instant,
    tx: broadcast::Sender<TraceEvent>,
    dir: Option<PathBuf>,
    inner: Mutex<TraceInner>,
}

#[derive(Default)]
struct TraceInner {
    seq: u64,
    all: Vec<TraceEvent>,
    files: HashMap<String, File>,
}

impl TraceLog {
    fn emit(&self, run: Option<&str>, kind: TraceKind) -> TraceEvent {
        let mut inner = self.inner.lock().expect("trace lock");
        inner.seq += 1;
        let ev = TraceEvent {
            seq: inner.seq,
            at_us: self.started.elapsed().as_micros() as u64,
            run: run.map(str::to_string),
            kind,
        };
        if let (Some(dir), Some(run)) = (&self.dir, run) {
            if !inner.files.contains_key(run) {
                if let Ok(f) = File::create(dir.join(format!("{run}.jsonl"))) {
                    inner.files.insert(run.to_string(), f);
                }
            }
            if let Some(f) = inner.files.get_mut(run) {
                let _ = writeln!(f, "{}", serde_json::to_string(&ev).expect("trace serializes"));
            }
        }
        inner.all.push(ev.clone());
        let _ = self.tx.send(ev.clone());
        ev
    }
}

struct RunEntry {
    run: ProductionRun,
    recipe: Recipe,
    abort: watch::Sender<bool>,
    status: watch::Sender<RunStatus>,
}

struct Shared {
    server: ServerClient,
    tokens: TokenManager,
    log: Arc<TraceLog>,
    runs: Mutex<BTreeMap<String, RunEntry>>,
    next_id: AtomicU64,
    cfg: OrchestratorConfig,
}

/// LWM2M server plus resource directory that plans and drives production
/// runs.
#[derive(Clone)]
pub struct Orchestrator {
    shared: Arc<Shared>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ThingSnapshot {
    pub name: String,
    pub address: String,
    pub resources: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PlantSnapshot {
    pub things: Vec<ThingSnapshot>,
    pub tokens: BTreeMap<String, TokenSnapshot>,
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Orchestrator {
    /// Binds the resource directory at `registry` and serves runs from it.
    pub async fn start(registry: SocketAddr, cfg: OrchestratorConfig) -> Result<Self, OrchestratorError> {
        let dir = Arc::new(Mutex::new(Directory::new()));
        let ep = Endpoint::bind(
            registry,
            cfg.params.clone(),
            Some(Box::new(DirectoryService::new(dir.clone()))),
        )
        .await
        .map_err(|e| OrchestratorError::Io(e.to_string()))?;
        Ok(Self::with_server(ServerClient::new(ep, dir), cfg))
    }

    pub fn with_server(server: ServerClient, cfg: OrchestratorConfig) -> Self {
        if let Some(dir) = &cfg.trace_dir {
            let _ = std::fs::create_dir_all(dir);
        }
        let (tx, _) = broadcast::channel(4096);
        let log = Arc::new(TraceLog {
            started: Instant::now(),
            tx,
            dir: cfg.trace_dir.clone(),
            inner: Mutex::new(TraceInner::default()),
        });
        let l2 = log.clone();
        let observer: TokenObserver = Arc::new(move |token, id, action| {
            let kind = match action {
                TokenAction::Requested => TraceKind::TokenRequested { token },
                TokenAction::Acquired => TraceKind::TokenAcquired { token },
                TokenAction::Released => TraceKind::TokenReleased { token },
                TokenAction::Withdrawn => TraceKind::TokenWithdrawn { token },
            };
            l2.emit(Some(id), kind);
        });
        Orchestrator {
            shared: Arc::new(Shared {
                server,
                tokens: TokenManager::spawn(Some(observer)),
                log,
                runs: Mutex::new(BTreeMap::new()),
                next_id: AtomicU64::new(1),
                cfg,
            }),
        }
    }

    pub fn endpoint(&self) -> &EndpointHandle {
        self.shared.server.endpoint()
    }

    pub fn registry_addr(&self) -> SocketAddr {
        self.endpoint().local_addr()
    }

    pub fn server(&self) -> &ServerClient {
        &self.shared.server
    }

    pub fn tokens(&self) -> &TokenManager {
        &self.shared.tokens
    }

    pub fn plan(&self, params: &RecipeParams) -> Result<Recipe, OrchestratorError> {
        plan_production("preview", params, &self.shared.cfg.constants)
    }

    /// Plans and launches a run. One run per couple at a time.
    pub fn submit(&self, params: &RecipeParams) -> Result<ProductionRun, OrchestratorError> {
        let sh = &self.shared;
        let mut runs = sh.runs.lock().expect("runs lock");
        let id = format!("run-{}", sh.next_id.load(Ordering::SeqCst));
        let recipe = plan_production(&id, params, &sh.cfg.constants)?;
        if runs
            .values()
            .any(|e| e.recipe.couple == recipe.couple && !e.run.status.is_terminal())
        {
            return Err(OrchestratorError::CoupleBusy(recipe.couple));
        }
        sh.next_id.fetch_add(1, Ordering::SeqCst);
        let (abort, abort_rx) = watch::channel(false);
        let (status, _) = watch::channel(RunStatus::Pending);
        let run = ProductionRun {
            recipe_id: id.clone(),
            couple: recipe.couple,
            status: RunStatus::Pending,
            current_step: None,
            steps: recipe.steps.clone(),
            started_at: None,
            ended_at: None,
            error: None,
            trace: Vec::new(),
        };
        runs.insert(
            id.clone(),
            RunEntry { run: run.clone(), recipe: recipe.clone(), abort, status },
        );
        drop(runs);
        sh.log.emit(
            Some(&id),
            TraceKind::Planned { couple: recipe.couple, steps: recipe.steps.clone() },
        );
        tokio::spawn(run_task(self.shared.clone(), recipe, abort_rx));
        Ok(self.run(&id).unwrap_or(run))
    }

    pub fn run(&self, id: &str) -> Option<ProductionRun> {
        let runs = self.shared.runs.lock().expect("runs lock");
        let mut run = runs.get(id)?.run.clone();
        drop(runs);
        run.trace = self.trace_of(id);
        Some(run)
    }

    pub fn runs(&self) -> Vec<ProductionRun> {
        let ids: Vec<String> = self.shared.runs.lock().expect("runs lock").keys().cloned().collect();
        ids.iter().filter_map(|id| self.run(id)).collect()
    }

    /// Waits until the run reaches a terminal status.
    pub async fn wait(&self, id: &str) -> Result<ProductionRun, OrchestratorError> {
        let mut rx = {
            let runs = self.shared.runs.lock().expect("runs lock");
            runs.get(id)
                .ok_or_else(|| OrchestratorError::UnknownRun(id.to_string()))?
                .status
                .subscribe()
        };
        rx.wait_for(|s| s.is_terminal())
            .await
            .map_err(|_| OrchestratorError::Shutdown)?;
        self.run(id).ok_or_else(|| OrchestratorError::UnknownRun(id.to_string()))
    }

    pub fn abort(&self, id: &str) -> Result<ProductionRun, OrchestratorError> {
        {
            let runs = self.shared.runs.lock().expect("runs lock");
            let e = runs.get(id).ok_or_else(|| OrchestratorError::UnknownRun(id.to_string()))?;
            if e.run.status.is_terminal() {
                return Err(OrchestratorError::RunFinished(id.to_string()));
            }
            e.abort.send_replace(true);
        }
        self.run(id).ok_or_else(|| OrchestratorError::UnknownRun(id.to_string()))
    }

    /// Every trace event so far, all runs merged, in sequence order.
    pub fn trace(&self) -> Vec<TraceEvent> {
        self.shared.log.inner.lock().expect("trace lock").all.clone()
    }

    pub fn trace_of(&self, id: &str) -> Vec<TraceEvent> {
        let inner = self.shared.log.inner.lock().expect("trace lock");
        inner.all.iter().filter(|e| e.run.as_deref() == Some(id)).cloned().collect()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<TraceEvent> {
        self.shared.log.tx.subscribe()
    }

    /// Reads every readable resource of every registered Thing.
    pub async fn plant_snapshot(&self) -> PlantSnapshot {
        let server = &self.shared.server;
        let clients: Vec<_> = {
            let dir = server.directory().lock().expect("directory lock");
            dir.clients().cloned().collect()
        };
        let mut things = Vec::new();
        for c in clients {
            let mut paths = Vec::new();
            for link in &c.links {
                let Some(inst) = link.path() else { continue };
                if let Ok(text) = server.discover(&c.endpoint_name, Some(&inst)).await {
                    for l in parse_link_format(&text).unwrap_or_default() {
                        if let Some(p) = l.path().filter(|p| p.resource_id.is_some()) {
                            paths.push(p);
                        }
                    }
                }
            }
            let reads = join_all(paths.iter().map(|p| server.read(&c.endpoint_name, p))).await;
            let resources = paths
                .iter()
                .zip(reads)
                .filter_map(|(p, r)| r.ok().map(|v| (p.to_string(), v)))
                .collect();
            things.push(ThingSnapshot {
                name: c.endpoint_name.clone(),
                address: c.address.to_string(),
                resources,
            });
        }
        things.sort_by(|a, b| a.name.cmp(&b.name));
        let tokens = self
            .shared
            .tokens
            .snapshot()
            .await
            .into_iter()
            .map(|(k, s)| (k.to_string(), s))
            .collect();
        PlantSnapshot { things, tokens }
    }
}

impl Shared {
    fn update(&self, id: &str, f: impl FnOnce(&mut ProductionRun)) {
        let mut runs = self.runs.lock().expect("runs lock");
        if let Some(e) = runs.get_mut(id) {
            f(&mut e.run);
        }
    }

    fn set_status(&self, id: &str, status: RunStatus, error: Option<String>) {
        let mut runs = self.runs.lock().expect("runs lock");
        let Some(e) = runs.get_mut(id) else { return };
        if !e.run.status.can_become(status) {
            return;
        }
        e.run.status = status;
        match status {
            RunStatus::Running => e.run.started_at = Some(unix_ms()),
            s if s.is_terminal() => e.run.ended_at = Some(unix_ms()),
            _ => {}
        }
        e.run.error = error.clone();
        let tx = e.status.clone();
        drop(runs);
        if let Some(message) = error {
            self.log.emit(Some(id), TraceKind::Error { message });
        }
        self.log.emit(Some(id), TraceKind::Status { status });
        tx.send_replace(status);
    }
}

fn silo_path(rid: u16) -> ResourcePath {
    ResourcePath::resource(SILO_OBJECT, 0, rid)
}

struct Exec<'a> {
    sh: &'a Shared,
    id: &'a str,
    held: Vec<TokenKind>,
}

impl Exec<'_> {
    fn emit(&self, kind: TraceKind) {
        self.sh.log.emit(Some(self.id), kind);
    }

    async fn acquire(&mut self, kind: TokenKind) -> Result<(), OrchestratorError> {
        self.sh.tokens.acquire(kind, self.id).await?;
        self.held.push(kind);
        Ok(())
    }

    async fn release(&mut self, kind: TokenKind) -> Result<(), OrchestratorError> {
        self.held.retain(|k| *k != kind);
        self.sh.tokens.release(kind, self.id).await
    }

    async fn execute(&self, silo: &str, path: &ResourcePath) -> Result<(), OrchestratorError> {
        self.emit(TraceKind::Execute { silo: silo.into(), path: path.to_string() });
        self.sh.server.execute(silo, path, "").await?;
        Ok(())
    }

    async fn write(&self, silo: &str, rid: u16, value: i64) -> Result<(), OrchestratorError> {
        let path = silo_path(rid);
        let value = value.to_string();
        self.emit(TraceKind::Write { silo: silo.into(), path: path.to_string(), value: value.clone() });
        self.sh.server.write(silo, &path, &value).await?;
        Ok(())
    }

    /// Runs `cmd` on `silo` and waits for the completion flag `flag` to be
    /// notified as 1.
    async fn command_and_wait(&self, silo: &str, cmd: Command, flag: u16) -> Result<(), OrchestratorError> {
        let flag_path = silo_path(flag);
        let (_, token, mut rx) = self.sh.server.observe(silo, &flag_path).await?;
        let wait = async {
            self.execute(silo, &silo_path(cmd.resource_id())).await?;
            loop {
                let n = rx.recv().await.ok_or_else(|| {
                    OrchestratorError::ThingUnreachable(format!("{silo}: observation closed"))
                })?;
                let payload = n.payload_text();
                self.emit(TraceKind::Notify {
                    silo: silo.into(),
                    path: flag_path.to_string(),
                    payload: payload.clone(),
                });
                if payload == "1" {
                    return Ok(());
                }
            }
        };
        let r = timeout(self.sh.cfg.step_timeout, wait).await.unwrap_or_else(|_| {
            Err(OrchestratorError::StepTimeout(format!("{cmd} on {silo}")))
        });
        self.sh.server.cancel_observe(&token);
        r
    }

    async fn prepare(&self, couple: Couple) -> Result<(), OrchestratorError> {
        let (a, b) = couple.members();
        for silo in [a, b] {
            let state = self.sh.server.read(silo, &silo_path(0)).await?;
            match state.as_str() {
                "IDLE" => {}
                "UNINITIALIZED" | "STOPPED" => {
                    self.execute(silo, &silo_path(Command::Initialize.resource_id())).await?
                }
                other => {
                    return Err(OrchestratorError::StepFailed(format!("{silo} is {other}, not IDLE")))
                }
            }
        }
        Ok(())
    }

    async fn step(&mut self, step: &Step) -> Result<(), OrchestratorError> {
        match step {
            Step::Fill { silo, target_level } => {
                self.write(silo, crate::silo::FILL_LEVEL, *target_level).await?;
                self.command_and_wait(silo, Command::Fill, 7).await
            }
            Step::Heat { silo, target_temp } => {
                self.write(silo, crate::silo::TARGET_TEMPERATURE, *target_temp).await?;
                self.command_and_wait(silo, Command::Heat, 9).await
            }
            Step::Mix { silo, duration } => {
                self.acquire(TokenKind::MixerPower).await?;
                self.write(silo, crate::silo::MIX_DURATION, *duration).await?;
                self.command_and_wait(silo, Command::Mix, 10).await?;
                self.release(TokenKind::MixerPower).await
            }
            Step::Transfer { from, to } => {
                self.acquire(TokenKind::Pipe).await?;
                self.execute(to, &ResourcePath::resource(VALVE_OBJECT, 0, VALVE_OPEN)).await?;
                self.command_and_wait(from, Command::Empty, 8).await?;
                self.execute(to, &ResourcePath::resource(VALVE_OBJECT, 0, VALVE_CLOSE)).await?;
                self.release(TokenKind::Pipe).await
            }
            Step::Drain { silo } => self.command_and_wait(silo, Command::Empty, 8).await,
        }
    }

    async fn all_steps(&mut self, recipe: &Recipe) -> Result<(), OrchestratorError> {
        self.prepare(recipe.couple).await?;
        for (index, step) in recipe.steps.iter().enumerate() {
            self.sh.update(self.id, |r| r.current_step = Some(index));
            self.emit(TraceKind::StepStarted { index, step: step.clone() });
            self.step(step).await?;
            self.emit(TraceKind::StepCompleted { index });
        }
        Ok(())
    }
}

async fn run_task(sh: Arc<Shared>, recipe: Recipe, mut abort: watch::Receiver<bool>) {
    let id = recipe.recipe_id.clone();
    sh.set_status(&id, RunStatus::Running, None);
    let mut exec = Exec { sh: &sh, id: &id, held: Vec::new() };
    let result = tokio::select! {
        r = exec.all_steps(&recipe) => r,
        _ = abort.wait_for(|v| *v) => Err(OrchestratorError::Aborted),
    };
    if result.is_err() {
        // leave nothing running before the tokens go
        let (a, b) = recipe.couple.members();
        for silo in [a, b] {
            let _ = exec.execute(silo, &silo_path(Command::Stop.resource_id())).await;
        }
    }
    for kind in std::mem::take(&mut exec.held) {
        let _ = sh.tokens.release(kind, &id).await;
    }
    match result {
        Ok(()) => sh.set_status(&id, RunStatus::Completed, None),
        Err(OrchestratorError::Aborted) => sh.set_status(&id, RunStatus::Aborted, None),
        Err(e) => sh.set_status(&id, RunStatus::Failed, Some(e.to_string())),
    }
}
