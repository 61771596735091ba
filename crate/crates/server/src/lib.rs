//! WebSocket session service.
//!
//! `GET /session` upgrades to a socket carrying one live session; `GET /scenes`
//! lists the loaded scenes. Each connection gets one task that owns its
//! [`Session`] exclusively and a writer task that owns the socket sink.
//! Events travel to the writer over an unbounded channel (lossless, ordered);
//! state snapshots go through a latest-value slot, so a stalled client loses
//! snapshots but never events.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::stream::SplitStream;
use futures::{SinkExt, StreamExt};
use gazeguide_core::protocol::{
    decode_client_message, encode, ClientMessage, ErrorCode, SceneListing, SceneSummary, ServerMessage, StateSnapshot,
    MAX_FRAME_BYTES, PROTOCOL_SCHEMA_VERSION,
};
use gazeguide_core::records::persist_run;
use gazeguide_core::scene::SceneCatalog;
use gazeguide_core::session::{Session, SessionError};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio::time::MissedTickBehavior;
use tracing::{debug, info, warn};

pub const BIND_ENV: &str = "GAZEGUIDE_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8765";
pub const DEFAULT_MAX_SESSIONS: usize = 16;
const CLOSE_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid bind address '{0}'")]
    Bind(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Resolves the listen address: an explicit port keeps the host from
/// `env_value` (or the default host); otherwise `env_value` or the default.
pub fn resolve_bind(env_value: Option<&str>, port: Option<u16>) -> Result<SocketAddr, ServerError> {
    let text = env_value.filter(|s| !s.is_empty()).unwrap_or(DEFAULT_BIND);
    let mut addr: SocketAddr = text.parse().map_err(|_| ServerError::Bind(text.to_string()))?;
    if let Some(p) = port {
        addr.set_port(p);
    }
    Ok(addr)
}

#[derive(Debug)]
pub struct AppState {
    catalog: SceneCatalog,
    records_dir: Option<PathBuf>,
    max_sessions: usize,
    active: AtomicUsize,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(catalog: SceneCatalog, records_dir: Option<PathBuf>, max_sessions: usize) -> Arc<Self> {
        Arc::new(Self { catalog, records_dir, max_sessions, active: AtomicUsize::new(0), next_id: AtomicU64::new(1) })
    }

    pub fn active_sessions(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }

    fn try_acquire(self: &Arc<Self>) -> Option<SlotGuard> {
        let mut cur = self.active.load(Ordering::SeqCst);
        loop {
            if cur >= self.max_sessions {
                return None;
            }
            match self.active.compare_exchange(cur, cur + 1, Ordering::SeqCst, Ordering::SeqCst) {
                Ok(_) => return Some(SlotGuard(Arc::clone(self))),
                Err(now) => cur = now,
            }
        }
    }
}

struct SlotGuard(Arc<AppState>);

impl Drop for SlotGuard {
    fn drop(&mut self) {
        self.0.active.fetch_sub(1, Ordering::SeqCst);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new().route("/session", get(upgrade)).route("/scenes", get(list_scenes)).with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> Result<(), ServerError> {
    info!(addr = ?listener.local_addr().ok(), scenes = state.catalog.len(), "session service listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn list_scenes(State(state): State<Arc<AppState>>) -> Json<SceneListing> {
    Json(SceneListing {
        schema_version: PROTOCOL_SCHEMA_VERSION,
        scenes: state.catalog.iter().map(SceneSummary::from).collect(),
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    // oversized frames are reported as MalformedMessage instead of dropping the socket
    ws.max_message_size(MAX_FRAME_BYTES * 4).on_upgrade(move |socket| handle_socket(socket, state))
}

enum Outbound {
    Message(ServerMessage),
    Close,
}

/// Owns the sink; assigns outbound `seq`.
async fn writer(
    mut sink: futures::stream::SplitSink<WebSocket, Message>,
    mut events: mpsc::UnboundedReceiver<Outbound>,
    mut snapshots: watch::Receiver<Option<StateSnapshot>>,
) {
    let mut seq = 0u64;
    let mut snapshots_open = true;
    loop {
        let msg = tokio::select! {
            biased;
            ev = events.recv() => match ev {
                Some(Outbound::Message(m)) => m,
                Some(Outbound::Close) | None => break,
            },
            changed = snapshots.changed(), if snapshots_open => {
                if changed.is_err() {
                    snapshots_open = false;
                    continue;
                }
                match snapshots.borrow_and_update().clone() {
                    Some(s) => ServerMessage::StateSnapshot(s),
                    None => continue,
                }
            }
        };
        if sink.send(Message::Text(encode(seq, msg).into())).await.is_err() {
            return;
        }
        seq += 1;
    }
    let _ = sink.send(Message::Close(None)).await;
}

struct Outputs {
    events: mpsc::UnboundedSender<Outbound>,
    snapshots: watch::Sender<Option<StateSnapshot>>,
}

impl Outputs {
    fn send(&self, msg: ServerMessage) {
        let _ = self.events.send(Outbound::Message(msg));
    }

    fn error(&self, err: &SessionError) {
        self.send(err.to_message());
    }
}

enum Inbound {
    Frame(String),
    Ignore,
    Gone,
}

async fn next_frame(stream: &mut SplitStream<WebSocket>) -> Inbound {
    match stream.next().await {
        Some(Ok(Message::Text(t))) => Inbound::Frame(t.to_string()),
        Some(Ok(Message::Binary(b))) => Inbound::Frame(String::from_utf8_lossy(&b).into_owned()),
        Some(Ok(Message::Close(_))) | Some(Err(_)) | None => Inbound::Gone,
        Some(Ok(_)) => Inbound::Ignore,
    }
}

async fn handle_socket(socket: WebSocket, state: Arc<AppState>) {
    let (sink, mut stream) = socket.split();
    let (ev_tx, ev_rx) = mpsc::unbounded_channel();
    let (snap_tx, snap_rx) = watch::channel(None);
    let writer = tokio::spawn(writer(sink, ev_rx, snap_rx));
    let out = Outputs { events: ev_tx, snapshots: snap_tx };

    if let Some((session, slot)) = await_start(&mut stream, &out, &state).await {
        run_session(session, &mut stream, &out, &state).await;
        drop(slot);
    }
    let _ = out.events.send(Outbound::Close);
    drop(out);
    // keep reading until the client answers the close frame; dropping a socket
    // with unread input resets the connection and can eat our last messages
    let drain = async { while !matches!(next_frame(&mut stream).await, Inbound::Gone) {} };
    let _ = tokio::time::timeout(CLOSE_GRACE, drain).await;
    let _ = writer.await;
}

/// Reads frames until a valid SessionStart opens a session.
async fn await_start(
    stream: &mut SplitStream<WebSocket>,
    out: &Outputs,
    state: &Arc<AppState>,
) -> Option<(Session, SlotGuard)> {
    loop {
        let text = match next_frame(stream).await {
            Inbound::Frame(t) => t,
            Inbound::Ignore => continue,
            Inbound::Gone => return None,
        };
        let env = match decode_client_message(&text) {
            Ok(env) => env,
            Err(e) => {
                out.send(ServerMessage::error(ErrorCode::MalformedMessage, e.to_string()));
                continue;
            }
        };
        let ClientMessage::SessionStart { scene_id, config } = env.body else {
            out.send(ServerMessage::error(ErrorCode::MalformedMessage, "expected SessionStart"));
            continue;
        };
        let Ok(scene) = state.catalog.get(&scene_id) else {
            out.error(&SessionError::SceneNotFound(scene_id));
            continue;
        };
        let Some(slot) = state.try_acquire() else {
            out.error(&SessionError::CapacityExceeded);
            return None;
        };
        let id = format!("s{:06}", state.next_id.fetch_add(1, Ordering::SeqCst));
        match Session::open(id, scene, config.unwrap_or_default()) {
            Ok((mut session, ack)) => {
                let _ = session.accept_seq(env.seq);
                info!(session = session.id(), scene = %scene.id, "session opened");
                out.send(ServerMessage::SessionStart(ack));
                return Some((session, slot));
            }
            Err(e) => out.error(&e),
        }
    }
}

async fn run_session(mut session: Session, stream: &mut SplitStream<WebSocket>, out: &Outputs, state: &AppState) {
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / f64::from(session.tick_hz())));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
    loop {
        tokio::select! {
            frame = next_frame(stream) => match frame {
                Inbound::Frame(text) => {
                    if handle_frame(&mut session, &text, out) {
                        break;
                    }
                }
                Inbound::Ignore => {}
                Inbound::Gone => {
                    debug!(session = session.id(), "client went away");
                    break;
                }
            },
            _ = ticker.tick() => match session.tick() {
                Ok(step) => {
                    for ev in step.events {
                        out.send(ServerMessage::from_event(ev));
                    }
                    if let Some(s) = step.snapshot {
                        let _ = out.snapshots.send(Some(s));
                    }
                    if step.finished {
                        break;
                    }
                }
                Err(e) => {
                    warn!(session = session.id(), error = %e, "engine error");
                    out.error(&e);
                    break;
                }
            },
        }
    }
    finish(&mut session, out, state);
}

/// Applies one inbound frame; returns true when the client ended the session.
fn handle_frame(session: &mut Session, text: &str, out: &Outputs) -> bool {
    let env = match decode_client_message(text) {
        Ok(env) => env,
        Err(e) => {
            out.send(ServerMessage::error(ErrorCode::MalformedMessage, e.to_string()));
            return false;
        }
    };
    if let Err(e) = session.accept_seq(env.seq) {
        out.error(&e);
        return false;
    }
    match env.body {
        ClientMessage::GazeInput { x, y, valid, .. } => {
            if let Err(e) = session.ingest_gaze(x, y, valid) {
                out.error(&e);
            }
            false
        }
        ClientMessage::SessionStart { .. } => {
            out.send(ServerMessage::error(ErrorCode::MalformedMessage, "session already started"));
            false
        }
        ClientMessage::SessionEnd => true,
    }
}

fn finish(session: &mut Session, out: &Outputs, state: &AppState) {
    let Ok(run) = session.close() else { return };
    let token = session.id().to_string();
    if let Some(dir) = &state.records_dir {
        if let Err(e) = persist_run(&run, dir, &token) {
            warn!(session = %token, error = %e, "could not persist session trace");
        }
    }
    // the closing snapshot rides the lossless channel so it precedes SessionEnd
    out.send(ServerMessage::StateSnapshot(session.snapshot()));
    info!(session = %token, completed = run.metrics.completed, "session closed");
    out.send(ServerMessage::SessionEnd { metrics: run.metrics, replay_token: token });
}
