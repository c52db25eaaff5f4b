//! WebSocket endpoint and the simulation thread behind it.
//!
//! The simulation thread owns the [`Session`]. Connection tasks talk to it
//! through two queues only: commands in, encoded frames out.

use super::frames::{
    decode_client, encode_server, ClientFrame, ControlMessage, ErrorCode, ServerFrame, StateSnapshot, TrialState,
    TrialSummary,
};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use teleop_core::clutch::Hand;
use teleop_core::harness::{
    export_csv, save_trace, Condition, HarnessError, ResolvedScenario, ScenarioFile, Session, SessionInput,
};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};

/// Snapshot rate, Hz.
pub const SNAPSHOT_RATE: f64 = 60.0;
/// Most physics steps taken in one catch-up burst.
const MAX_CATCH_UP: u64 = 250;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub scenario: ScenarioFile,
    pub seed: u64,
    pub condition: Condition,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Written when a trial stops or finishes.
    pub trace_out: Option<PathBuf>,
    pub records_out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid speed {0}")]
    Speed(f64),
}

/// What connection tasks send to the simulation thread.
#[derive(Debug)]
enum Command {
    Frame(ClientFrame),
    Disconnected,
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::UnboundedSender<Command>,
    frames: broadcast::Sender<Arc<str>>,
    busy: Arc<AtomicBool>,
}

/// A running gateway.
pub struct GatewayHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    server: tokio::task::JoinHandle<()>,
}

impl GatewayHandle {
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.server.await;
    }

    /// Runs until the process is interrupted.
    pub async fn wait(self) {
        let _ = self.server.await;
    }
}

/// Binds `addr` and starts serving `/session`.
pub async fn serve(config: GatewayConfig, addr: SocketAddr) -> Result<GatewayHandle, GatewayError> {
    if !(config.speed.is_finite() && config.speed > 0.0) {
        return Err(GatewayError::Speed(config.speed));
    }
    let resolved = config.scenario.resolve(config.seed)?;
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (frame_tx, _) = broadcast::channel(256);
    let sim = SimThread::new(config, resolved, cmd_rx, frame_tx.clone())?;
    std::thread::Builder::new().name("sim".into()).spawn(move || sim.run())?;

    let state = AppState {
        commands: cmd_tx,
        frames: frame_tx,
        busy: Arc::new(AtomicBool::new(false)),
    };
    let app = Router::new().route("/session", get(upgrade)).with_state(state);
    let (tx, rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        let shutdown = async {
            let _ = rx.await;
        };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
            tracing::error!("server stopped: {e}");
        }
    });
    tracing::info!("serving ws://{addr}/session");
    Ok(GatewayHandle {
        addr,
        shutdown: Some(tx),
        server,
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(mut socket: WebSocket, state: AppState) {
    if state.busy.swap(true, Ordering::SeqCst) {
        let frame = encode_server(&ServerFrame::error(ErrorCode::Busy, "another operator is connected"));
        let _ = socket.send(Message::Text(frame)).await;
        let _ = socket.close().await;
        return;
    }
    tracing::info!("operator connected");
    let mut frames = state.frames.subscribe();
    let mut last_t = [f64::NEG_INFINITY; 2];
    loop {
        tokio::select! {
            out = frames.recv() => match out {
                Ok(text) => {
                    if socket.send(Message::Text(text.to_string())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        let e = ServerFrame::error(ErrorCode::Malformed, "binary frames are not supported");
                        if socket.send(Message::Text(encode_server(&e))).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match decode_client(&text) {
                    Ok(ClientFrame::Input(m)) => {
                        let slot = &mut last_t[m.hand.index()];
                        if let Err(msg) = m.motion() {
                            Some(ServerFrame::error(ErrorCode::Rejected, msg))
                        } else if !(m.t >= *slot) {
                            Some(ServerFrame::error(
                                ErrorCode::Rejected,
                                format!("timestamp {} for {} hand is older than {}", m.t, m.hand, slot),
                            ))
                        } else {
                            *slot = m.t;
                            let _ = state.commands.send(Command::Frame(ClientFrame::Input(m)));
                            None
                        }
                    }
                    Ok(frame) => {
                        let _ = state.commands.send(Command::Frame(frame));
                        None
                    }
                    Err(e) => Some(ServerFrame::Error(e)),
                };
                if let Some(reply) = reply {
                    if socket.send(Message::Text(encode_server(&reply))).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
    let _ = state.commands.send(Command::Disconnected);
    state.busy.store(false, Ordering::SeqCst);
    tracing::info!("operator disconnected");
}

struct SimThread {
    config: GatewayConfig,
    resolved: ResolvedScenario,
    session: Session,
    state: TrialState,
    commands: mpsc::UnboundedReceiver<Command>,
    frames: broadcast::Sender<Arc<str>>,
    /// Wall-clock instant and tick at which stepping (re)started.
    epoch: Option<(Instant, u64)>,
}

impl SimThread {
    fn new(
        config: GatewayConfig,
        resolved: ResolvedScenario,
        commands: mpsc::UnboundedReceiver<Command>,
        frames: broadcast::Sender<Arc<str>>,
    ) -> Result<Self, GatewayError> {
        let session = Self::fresh(&resolved, &config)?;
        Ok(Self {
            config,
            resolved,
            session,
            state: TrialState::Idle,
            commands,
            frames,
            epoch: None,
        })
    }

    fn fresh(resolved: &ResolvedScenario, config: &GatewayConfig) -> Result<Session, HarnessError> {
        let mut s = Session::new(resolved, config.condition, config.seed, format!("operator-{}", config.seed))?;
        s.record_trace();
        Ok(s)
    }

    fn publish(&self, frame: &ServerFrame) {
        let _ = self.frames.send(Arc::from(encode_server(frame)));
    }

    fn run(mut self) {
        let interval = Duration::from_secs_f64(1.0 / SNAPSHOT_RATE);
        let mut next_snapshot = Instant::now();
        loop {
            loop {
                match self.commands.try_recv() {
                    Ok(cmd) => self.handle(cmd),
                    Err(mpsc::error::TryRecvError::Empty) => break,
                    Err(mpsc::error::TryRecvError::Disconnected) => return,
                }
            }
            if self.state == TrialState::Running {
                self.catch_up();
            }
            let now = Instant::now();
            if now >= next_snapshot {
                let snap = StateSnapshot::capture(&self.session, self.state);
                self.publish(&ServerFrame::Snapshot(snap));
                next_snapshot += interval;
                if next_snapshot < now {
                    next_snapshot = now + interval;
                }
            }
            std::thread::sleep(Duration::from_micros(500));
        }
    }

    /// Steps until simulated time matches scaled wall-clock time.
    fn catch_up(&mut self) {
        let Some((start, tick0)) = self.epoch else {
            return;
        };
        let dt = self.session.world().dt;
        let due = tick0 + (start.elapsed().as_secs_f64() * self.config.speed / dt) as u64;
        let mut budget = MAX_CATCH_UP;
        while self.session.tick_count() < due && budget > 0 {
            budget -= 1;
            match self.session.tick() {
                Ok(_) => {}
                Err(e) => {
                    tracing::error!("simulation halted: {e}");
                    self.publish(&ServerFrame::error(ErrorCode::Rejected, format!("simulation halted: {e}")));
                    self.finish(TrialState::Stopped);
                    return;
                }
            }
            if self.session.is_finished() {
                self.finish(TrialState::Finished);
                return;
            }
        }
        if budget == 0 {
            // Too far behind: drop the backlog rather than spiral.
            self.epoch = Some((Instant::now(), self.session.tick_count()));
        }
    }

    fn finish(&mut self, state: TrialState) {
        self.state = state;
        self.epoch = None;
        if let Some(path) = &self.config.trace_out {
            if let Err(e) = save_trace(self.session.trace(), path) {
                tracing::error!("writing trace: {e}");
            }
        }
        if let Some(path) = &self.config.records_out {
            if let Err(e) = export_csv(self.session.records(), path) {
                tracing::error!("writing records: {e}");
            }
        }
        self.publish(&ServerFrame::Trial(TrialSummary {
            records: self.session.records().to_vec(),
            all_completed: self.session.all_completed(),
        }));
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Disconnected => {
                // Targets freeze where they are.
                for hand in Hand::BOTH {
                    self.session.queue(SessionInput::Release { hand });
                }
            }
            Command::Frame(ClientFrame::Input(m)) => {
                if self.state != TrialState::Running {
                    return;
                }
                if let Ok(state) = m.motion() {
                    self.session.queue(SessionInput::Hand {
                        hand: m.hand,
                        state,
                        button: m.button,
                    });
                }
            }
            Command::Frame(ClientFrame::Control(c)) => self.control(c),
        }
    }

    fn control(&mut self, c: ControlMessage) {
        match c {
            ControlMessage::Start => match self.state {
                TrialState::Running => {}
                TrialState::Idle => self.start(),
                TrialState::Finished | TrialState::Stopped => match Self::fresh(&self.resolved, &self.config) {
                    Ok(s) => {
                        self.session = s;
                        self.start();
                    }
                    Err(e) => self.publish(&ServerFrame::error(ErrorCode::Rejected, e.to_string())),
                },
            },
            ControlMessage::Stop => {
                if self.state == TrialState::Running {
                    self.session.queue(SessionInput::Stop);
                    if let Err(e) = self.session.tick() {
                        tracing::error!("{e}");
                    }
                    self.finish(TrialState::Stopped);
                }
            }
            ControlMessage::SetCondition { condition } => {
                self.config.condition = condition;
                self.session.set_condition(condition);
            }
            ControlMessage::LoadScenario { scenario, seed } => {
                let seed = seed.unwrap_or(self.config.seed);
                let loaded = ScenarioFile::parse(&scenario).and_then(|f| {
                    let r = f.resolve(seed)?;
                    Ok((f, r))
                });
                match loaded.and_then(|(f, r)| {
                    let mut cfg = self.config.clone();
                    cfg.seed = seed;
                    let s = Self::fresh(&r, &cfg)?;
                    Ok((f, r, s, cfg))
                }) {
                    Ok((f, r, s, mut cfg)) => {
                        cfg.scenario = f;
                        self.config = cfg;
                        self.resolved = r;
                        self.session = s;
                        self.state = TrialState::Idle;
                        self.epoch = None;
                    }
                    Err(e) => self.publish(&ServerFrame::error(ErrorCode::Rejected, e.to_string())),
                }
            }
            ControlMessage::ResetBoxUpright => {
                if self.state == TrialState::Running {
                    self.session.queue(SessionInput::ResetBoxUpright);
                }
            }
        }
    }

    fn start(&mut self) {
        self.state = TrialState::Running;
        self.epoch = Some((Instant::now(), self.session.tick_count()));
    }
}
