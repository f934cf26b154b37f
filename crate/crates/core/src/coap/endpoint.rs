use std::collections::HashMap;
use std::net::SocketAddr;
use std::time::Duration;

use rand::Rng;
use tokio::net::UdpSocket;
use tokio::sync::{mpsc, oneshot};
use tokio::time::{sleep_until, Instant};
use tracing::{debug, trace};

use super::{
    decode, encode, option, CoapError, CoapMessage, Code, DedupCache, MessageType,
    ObserveRegistry, ObserveRelation, Seen,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionParams {
    pub ack_timeout: Duration,
    pub backoff_factor: u32,
    pub max_retransmit: u32,
    /// How long message ids are remembered for deduplication.
    pub exchange_lifetime: Duration,
}

impl Default for TransmissionParams {
    fn default() -> Self {
        TransmissionParams {
            ack_timeout: Duration::from_secs(2),
            backoff_factor: 2,
            max_retransmit: 4,
            exchange_lifetime: Duration::from_secs(247),
        }
    }
}

impl TransmissionParams {
    /// Time from first transmission until a CON request is given up.
    pub fn max_transmit_wait(&self) -> Duration {
        let mut total = Duration::ZERO;
        let mut t = self.ack_timeout;
        for _ in 0..=self.max_retransmit {
            total += t;
            t *= self.backoff_factor;
        }
        total
    }

    /// Every duration divided by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        TransmissionParams {
            ack_timeout: self.ack_timeout.div_f64(factor),
            exchange_lifetime: self.exchange_lifetime.div_f64(factor),
            ..self.clone()
        }
    }
}

/// What a [`Service`] answers to a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub code: Code,
    pub payload: Vec<u8>,
    pub content_format: Option<u16>,
    pub options: Vec<(u16, Vec<u8>)>,
    /// Honour an Observe=0 registration on this request.
    pub observable: bool,
}

impl Response {
    pub fn new(code: Code) -> Self {
        Response {
            code,
            payload: Vec::new(),
            content_format: None,
            options: Vec::new(),
            observable: false,
        }
    }

    pub fn content(payload: impl Into<Vec<u8>>, content_format: u16) -> Self {
        Response {
            payload: payload.into(),
            content_format: Some(content_format),
            ..Response::new(Code::CONTENT)
        }
    }

    pub fn observable(mut self) -> Self {
        self.observable = true;
        self
    }

    pub fn with_location(mut self, path: &str) -> Self {
        for seg in path.split('/').filter(|s| !s.is_empty()) {
            self.options
                .push((option::LOCATION_PATH, seg.as_bytes().to_vec()));
        }
        self
    }
}

/// Side effects a handler can request from the endpoint.
#[derive(Debug)]
pub struct ServiceCtx {
    pub now: Instant,
    notifications: Vec<(String, Vec<u8>, Option<u16>)>,
}

impl ServiceCtx {
    fn new(now: Instant) -> Self {
        ServiceCtx {
            now,
            notifications: Vec::new(),
        }
    }

    /// Queues a notification to every observer of `path`, sent after the
    /// handler returns.
    pub fn notify(&mut self, path: &str, payload: impl Into<Vec<u8>>, content_format: Option<u16>) {
        self.notifications
            .push((path.to_string(), payload.into(), content_format));
    }
}

/// Request handler. Runs on the endpoint's receive loop, one request at a
/// time, so it must not block.
pub trait Service: Send + 'static {
    fn handle(&mut self, peer: SocketAddr, req: &CoapMessage, ctx: &mut ServiceCtx) -> Response;

    fn tick_interval(&self) -> Option<Duration> {
        None
    }

    fn tick(&mut self, _ctx: &mut ServiceCtx) {}
}

enum Command {
    Request {
        dest: SocketAddr,
        msg: CoapMessage,
        observe: Option<mpsc::UnboundedSender<CoapMessage>>,
        reply: oneshot::Sender<Result<CoapMessage, CoapError>>,
    },
    CancelObserve(Vec<u8>),
    Notify {
        path: String,
        payload: Vec<u8>,
        content_format: Option<u16>,
        reply: oneshot::Sender<usize>,
    },
    NotifyRelation {
        observer: SocketAddr,
        token: Vec<u8>,
        payload: Vec<u8>,
        reply: oneshot::Sender<Result<CoapMessage, CoapError>>,
    },
    Relations(oneshot::Sender<Vec<ObserveRelation>>),
    Shutdown,
}

/// Cloneable handle to a running endpoint. The endpoint stops when the last
/// handle is dropped or [`EndpointHandle::shutdown`] is called.
#[derive(Clone, Debug)]
pub struct EndpointHandle {
    tx: mpsc::UnboundedSender<Command>,
    local: SocketAddr,
}

pub struct Endpoint;

impl Endpoint {
    pub async fn bind(
        addr: SocketAddr,
        params: TransmissionParams,
        service: Option<Box<dyn Service>>,
    ) -> Result<EndpointHandle, CoapError> {
        let socket = UdpSocket::bind(addr).await?;
        let local = socket.local_addr()?;
        let (tx, rx) = mpsc::unbounded_channel();
        let now = Instant::now();
        let state = Loop {
            socket,
            params: params.clone(),
            service,
            next_mid: rand::rng().random(),
            pending: HashMap::new(),
            observations: HashMap::new(),
            dedup: DedupCache::new(params.exchange_lifetime),
            seen_responses: DedupCache::new(params.exchange_lifetime),
            observe: ObserveRegistry::new(),
            next_purge: now + Duration::from_secs(1),
            next_tick: now,
        };
        tokio::spawn(state.run(rx));
        Ok(EndpointHandle { tx, local })
    }
}

impl EndpointHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    /// Sends a request and waits for its response. Message id and, if
    /// empty, token are assigned here.
    pub async fn request(&self, dest: SocketAddr, msg: CoapMessage) -> Result<CoapMessage, CoapError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Request {
            dest,
            msg,
            observe: None,
            reply,
        })?;
        rx.await.map_err(|_| CoapError::EndpointClosed)?
    }

    /// Confirmable request to `path`, which may carry a `?query`.
    pub async fn call(
        &self,
        dest: SocketAddr,
        code: Code,
        path: &str,
        payload: impl Into<Vec<u8>>,
    ) -> Result<CoapMessage, CoapError> {
        let mut msg = CoapMessage::request(MessageType::Con, code, path).with_payload(payload);
        if !msg.payload.is_empty() {
            msg = msg.with_uint_option(option::CONTENT_FORMAT, 0);
        }
        self.request(dest, msg).await
    }

    /// GET with Observe=0. Notifications arrive on the returned receiver
    /// if the response carries an Observe option.
    pub async fn observe(
        &self,
        dest: SocketAddr,
        path: &str,
    ) -> Result<(CoapMessage, mpsc::UnboundedReceiver<CoapMessage>), CoapError> {
        let msg = CoapMessage::request(MessageType::Con, Code::GET, path)
            .with_uint_option(option::OBSERVE, 0);
        let (ntx, nrx) = mpsc::unbounded_channel();
        let (reply, rx) = oneshot::channel();
        self.send(Command::Request {
            dest,
            msg,
            observe: Some(ntx),
            reply,
        })?;
        let resp = rx.await.map_err(|_| CoapError::EndpointClosed)??;
        Ok((resp, nrx))
    }

    /// Forgets a client-side observation; later notifications are reset.
    pub fn cancel_observe(&self, token: &[u8]) {
        let _ = self.tx.send(Command::CancelObserve(token.to_vec()));
    }

    /// Notifies every observer of `path`. Returns how many were sent.
    pub async fn notify(
        &self,
        path: &str,
        payload: impl Into<Vec<u8>>,
        content_format: Option<u16>,
    ) -> Result<usize, CoapError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Notify {
            path: path.to_string(),
            payload: payload.into(),
            content_format,
            reply,
        })?;
        rx.await.map_err(|_| CoapError::EndpointClosed)
    }

    /// Sends one notification on a specific relation.
    pub async fn notify_relation(
        &self,
        observer: SocketAddr,
        token: &[u8],
        payload: impl Into<Vec<u8>>,
    ) -> Result<CoapMessage, CoapError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::NotifyRelation {
            observer,
            token: token.to_vec(),
            payload: payload.into(),
            reply,
        })?;
        rx.await.map_err(|_| CoapError::EndpointClosed)?
    }

    pub async fn relations(&self) -> Result<Vec<ObserveRelation>, CoapError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Relations(reply))?;
        rx.await.map_err(|_| CoapError::EndpointClosed)
    }

    pub fn shutdown(&self) {
        let _ = self.tx.send(Command::Shutdown);
    }

    pub fn is_closed(&self) -> bool {
        self.tx.is_closed()
    }

    fn send(&self, cmd: Command) -> Result<(), CoapError> {
        self.tx.send(cmd).map_err(|_| CoapError::EndpointClosed)
    }
}

struct Pending {
    dest: SocketAddr,
    mid: u16,
    bytes: Vec<u8>,
    retransmissions: u32,
    timeout: Duration,
    next_retransmit: Option<Instant>,
    deadline: Instant,
    observe: Option<mpsc::UnboundedSender<CoapMessage>>,
    reply: oneshot::Sender<Result<CoapMessage, CoapError>>,
}

struct Loop {
    socket: UdpSocket,
    params: TransmissionParams,
    service: Option<Box<dyn Service>>,
    next_mid: u16,
    pending: HashMap<Vec<u8>, Pending>,
    observations: HashMap<Vec<u8>, mpsc::UnboundedSender<CoapMessage>>,
    dedup: DedupCache,
    seen_responses: DedupCache,
    observe: ObserveRegistry,
    next_purge: Instant,
    next_tick: Instant,
}

impl Loop {
    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        let mut buf = vec![0u8; 2048];
        loop {
            let wake = self.next_wake();
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    None | Some(Command::Shutdown) => break,
                    Some(cmd) => self.command(cmd).await,
                },
                r = self.socket.recv_from(&mut buf) => match r {
                    Ok((n, peer)) => {
                        let data = buf[..n].to_vec();
                        self.datagram(peer, &data).await;
                    }
                    // ICMP errors surface here on some platforms; nothing to do.
                    Err(e) => trace!(error = %e, "recv error ignored"),
                },
                _ = sleep_until(wake) => self.timers().await,
            }
        }
        for (_, p) in self.pending.drain() {
            let _ = p.reply.send(Err(CoapError::EndpointClosed));
        }
    }

    fn next_wake(&self) -> Instant {
        let mut wake = self.next_purge;
        for p in self.pending.values() {
            wake = wake.min(p.deadline);
            if let Some(t) = p.next_retransmit {
                wake = wake.min(t);
            }
        }
        if self.service.as_ref().and_then(|s| s.tick_interval()).is_some() {
            wake = wake.min(self.next_tick);
        }
        wake
    }

    fn mid(&mut self) -> u16 {
        self.next_mid = self.next_mid.wrapping_add(1);
        self.next_mid
    }

    fn fresh_token(&self) -> Vec<u8> {
        let mut rng = rand::rng();
        loop {
            let t: [u8; 4] = rng.random();
            let t = t.to_vec();
            if !self.pending.contains_key(&t) && !self.observations.contains_key(&t) {
                return t;
            }
        }
    }


    async fn command(&mut self, cmd: Command) {
        match cmd {
            Command::Request {
                dest,
                mut msg,
                observe,
                reply,
            } => {
                msg.message_id = self.mid();
                if msg.token.is_empty() || self.pending.contains_key(&msg.token) {
                    msg.token = self.fresh_token();
                }
                let bytes = match encode(&msg) {
                    Ok(b) => b,
                    Err(e) => {
                        let _ = reply.send(Err(e));
                        return;
                    }
                };
                send_bytes(&self.socket, dest, &bytes).await;
                let now = Instant::now();
                let confirmable = msg.mtype == MessageType::Con;
                self.pending.insert(
                    msg.token.clone(),
                    Pending {
                        dest,
                        mid: msg.message_id,
                        bytes,
                        retransmissions: 0,
                        timeout: self.params.ack_timeout,
                        next_retransmit: confirmable.then(|| now + self.params.ack_timeout),
                        deadline: now + self.params.max_transmit_wait(),
                        observe,
                        reply,
                    },
                );
            }
            Command::CancelObserve(token) => {
                self.observations.remove(&token);
            }
            Command::Notify {
                path,
                payload,
                content_format,
                reply,
            } => {
                let n = self.notify_path(&path, &payload, content_format).await;
                let _ = reply.send(n);
            }
            Command::NotifyRelation {
                observer,
                token,
                payload,
                reply,
            } => {
                let mid = self.mid();
                let r = self.observe.notification(observer, &token, mid, &payload, None);
                if let Ok(m) = &r {
                    send_msg(&self.socket, observer, m).await;
                }
                let _ = reply.send(r);
            }
            Command::Relations(reply) => {
                let _ = reply.send(self.observe.relations().to_vec());
            }
            Command::Shutdown => {}
        }
    }

    async fn notify_path(&mut self, path: &str, payload: &[u8], cf: Option<u16>) -> usize {
        let mut sent = 0;
        for (observer, token) in self.observe.observers_of(path) {
            let mid = self.mid();
            if let Ok(m) = self.observe.notification(observer, &token, mid, payload, cf) {
                if send_msg(&self.socket, observer, &m).await.is_some() {
                    sent += 1;
                }
            }
        }
        sent
    }

    async fn timers(&mut self) {
        let now = Instant::now();
        let mut failed = Vec::new();
        let mut resend = Vec::new();
        for (token, p) in self.pending.iter_mut() {
            if let Some(t) = p.next_retransmit {
                if t <= now {
                    if p.retransmissions < self.params.max_retransmit {
                        p.retransmissions += 1;
                        p.timeout *= self.params.backoff_factor;
                        p.next_retransmit = Some(now + p.timeout);
                        resend.push((p.dest, p.bytes.clone()));
                    } else {
                        failed.push(token.clone());
                        continue;
                    }
                }
            }
            if p.deadline <= now {
                failed.push(token.clone());
            }
        }
        for (dest, bytes) in resend {
            trace!(%dest, "retransmit");
            send_bytes(&self.socket, dest, &bytes).await;
        }
        for token in failed {
            if let Some(p) = self.pending.remove(&token) {
                let _ = p.reply.send(Err(CoapError::TransmissionTimeout));
            }
        }
        if self.next_purge <= now {
            self.dedup.purge(now);
            self.seen_responses.purge(now);
            self.next_purge = now + Duration::from_secs(1);
        }
        let interval = self.service.as_ref().and_then(|s| s.tick_interval());
        if let Some(interval) = interval {
            if self.next_tick <= now {
                self.next_tick = now + interval;
                let mut ctx = ServiceCtx::new(now);
                if let Some(s) = self.service.as_mut() {
                    s.tick(&mut ctx);
                }
                self.flush(ctx).await;
            }
        }
    }

    async fn flush(&mut self, ctx: ServiceCtx) {
        for (path, payload, cf) in ctx.notifications {
            self.notify_path(&path, &payload, cf).await;
        }
    }

    async fn datagram(&mut self, peer: SocketAddr, data: &[u8]) {
        let msg = match decode(data) {
            Ok(m) => m,
            Err(e) => {
                debug!(%peer, error = %e, "undecodable datagram");
                if data.len() >= 4 && MessageType::from_bits(data[0] >> 4) == MessageType::Con {
                    let mid = u16::from_be_bytes([data[2], data[3]]);
                    send_msg(&self.socket, peer, &CoapMessage::reset(mid)).await;
                }
                return;
            }
        };
        trace!(%peer, mtype = ?msg.mtype, code = %msg.code, mid = msg.message_id, "recv");
        if msg.code == Code::EMPTY {
            self.empty(peer, msg).await;
        } else if msg.code.is_request() {
            self.request(peer, msg).await;
        } else if msg.code.is_response() {
            self.response(peer, msg).await;
        } else if msg.mtype == MessageType::Con {
            send_msg(&self.socket, peer, &CoapMessage::reset(msg.message_id)).await;
        }
    }

    async fn empty(&mut self, peer: SocketAddr, msg: CoapMessage) {
        match msg.mtype {
            MessageType::Ack => {
                if let Some(p) = self
                    .pending
                    .values_mut()
                    .find(|p| p.dest == peer && p.mid == msg.message_id)
                {
                    // separate response follows
                    p.next_retransmit = None;
                    p.deadline = Instant::now() + self.params.max_transmit_wait();
                }
            }
            MessageType::Rst => {
                let token = self
                    .pending
                    .iter()
                    .find(|(_, p)| p.dest == peer && p.mid == msg.message_id)
                    .map(|(t, _)| t.clone());
                if let Some(t) = token {
                    if let Some(p) = self.pending.remove(&t) {
                        let _ = p.reply.send(Err(CoapError::ResetReceived));
                    }
                } else if let Some(t) = self.observe.on_reset(peer, msg.message_id) {
                    debug!(%peer, token = ?t, "observer reset, relation removed");
                }
            }
            // CoAP ping
            MessageType::Con => {
                send_msg(&self.socket, peer, &CoapMessage::reset(msg.message_id)).await;
            }
            MessageType::Non => {}
        }
    }

    async fn request(&mut self, peer: SocketAddr, req: CoapMessage) {
        let now = Instant::now();
        match self.dedup.check(peer, req.message_id, now) {
            Seen::Duplicate(Some(bytes)) => {
                send_bytes(&self.socket, peer, &bytes).await;
                return;
            }
            Seen::Duplicate(None) => return,
            Seen::New => {}
        }
        let mut ctx = ServiceCtx::new(now);
        let bad_option = req
            .options
            .iter()
            .any(|(n, _)| !option::is_supported(*n) && option::is_critical(*n));
        let mut resp = if bad_option {
            Response::new(Code::BAD_REQUEST)
        } else {
            match self.service.as_mut() {
                Some(s) => s.handle(peer, &req, &mut ctx),
                None => Response::new(Code::NOT_FOUND),
            }
        };
        let mut out = match req.mtype {
            MessageType::Con => CoapMessage::new(MessageType::Ack, resp.code, req.message_id),
            _ => {
                let mid = self.mid();
                CoapMessage::new(MessageType::Non, resp.code, mid)
            }
        };
        out.token = req.token.clone();
        match req.observe() {
            Some(0) if resp.observable && resp.code == Code::CONTENT => {
                self.observe.register(peer, &req.token, &req.path_string());
                out.options.push((option::OBSERVE, Vec::new()));
            }
            Some(1) => {
                self.observe.cancel(peer, &req.token);
            }
            _ => {}
        }
        out.options.append(&mut resp.options);
        if let Some(cf) = resp.content_format {
            out = out.with_uint_option(option::CONTENT_FORMAT, u32::from(cf));
        }
        out.payload = std::mem::take(&mut resp.payload);
        let bytes = match encode(&out) {
            Ok(b) => b,
            Err(e) => {
                debug!(error = %e, "response encode failed");
                out.code = Code::INTERNAL_SERVER_ERROR;
                out.payload.clear();
                out.options.retain(|(n, _)| *n == option::OBSERVE);
                match encode(&out) {
                    Ok(b) => b,
                    Err(_) => return,
                }
            }
        };
        send_bytes(&self.socket, peer, &bytes).await;
        self.dedup.record_response(peer, req.message_id, bytes);
        self.flush(ctx).await;
    }

    async fn response(&mut self, peer: SocketAddr, msg: CoapMessage) {
        let now = Instant::now();
        if msg.mtype != MessageType::Ack {
            if let Seen::Duplicate(_) = self.seen_responses.check(peer, msg.message_id, now) {
                if msg.mtype == MessageType::Con {
                    send_msg(&self.socket, peer, &CoapMessage::empty_ack(msg.message_id)).await;
                }
                return;
            }
        }
        let matches_pending = self.pending.get(&msg.token).is_some_and(|p| {
            p.dest == peer && (msg.mtype != MessageType::Ack || p.mid == msg.message_id)
        });
        if matches_pending {
            let p = self.pending.remove(&msg.token).expect("checked");
            if msg.mtype == MessageType::Con {
                send_msg(&self.socket, peer, &CoapMessage::empty_ack(msg.message_id)).await;
            }
            if let Some(tx) = p.observe {
                if msg.observe().is_some() && msg.code.is_success() {
                    self.observations.insert(msg.token.clone(), tx);
                }
            }
            let _ = p.reply.send(Ok(msg));
            return;
        }
        if msg.mtype == MessageType::Ack {
            return;
        }
        let delivered = match self.observations.get(&msg.token) {
            Some(tx) => tx.send(msg.clone()).is_ok(),
            None => false,
        };
        if delivered {
            if msg.mtype == MessageType::Con {
                send_msg(&self.socket, peer, &CoapMessage::empty_ack(msg.message_id)).await;
            }
        } else {
            self.observations.remove(&msg.token);
            send_msg(&self.socket, peer, &CoapMessage::reset(msg.message_id)).await;
        }
    }
}

async fn send_bytes(socket: &UdpSocket, dest: SocketAddr, bytes: &[u8]) {
    if let Err(e) = socket.send_to(bytes, dest).await {
        debug!(%dest, error = %e, "send failed");
    }
}

async fn send_msg(socket: &UdpSocket, dest: SocketAddr, msg: &CoapMessage) -> Option<Vec<u8>> {
    match encode(msg) {
        Ok(bytes) => {
            send_bytes(socket, dest, &bytes).await;
            Some(bytes)
        }
        Err(e) => {
            debug!(%dest, error = %e, "encode failed");
            None
        }
    }
}
