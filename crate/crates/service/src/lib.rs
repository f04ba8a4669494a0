//! Command/telemetry service for UI clients.
//!
//! One classification stream runs on a background thread; every command it
//! emits is broadcast to all connected WebSocket clients as a JSON text
//! message. Clients steer the stream with control messages (see
//! [`protocol`]). Fan-out never blocks the classifier: a client that falls
//! behind the broadcast buffer is disconnected.

pub mod protocol;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use mibci::pipeline::TrainedClassifier;
use mibci::realtime::{
    check_channels, stream_classify, ClassToggle, FrameSource, Flow, RealtimeError, SourceSpec,
    StreamControl, StreamOptions,
};
use mibci::signal::{ChannelSet, ClassLabel, SampleFrame, SignalError};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot};

use protocol::{parse_client, ClientMessage, Parsed, ServerMessage, StreamState};

/// Messages a client may fall behind by before it is dropped.
const BROADCAST_CAPACITY: usize = 256;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot start stream: {0}")]
    Source(#[from] RealtimeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default)]
struct Counters {
    frames: AtomicU64,
    commands: AtomicU64,
    dropped: AtomicU64,
    last_decision: Mutex<Option<f64>>,
}

/// Counts frames as the producer pulls them.
struct Counted {
    inner: Box<dyn FrameSource>,
    counters: Arc<Counters>,
}

impl FrameSource for Counted {
    fn next_frame(&mut self) -> Option<Result<SampleFrame, SignalError>> {
        let f = self.inner.next_frame();
        if matches!(f, Some(Ok(_))) {
            self.counters.frames.fetch_add(1, Ordering::Relaxed);
        }
        f
    }

    fn is_live(&self) -> bool {
        self.inner.is_live()
    }

    fn channels(&self) -> ChannelSet {
        self.inner.channels()
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

struct Current {
    generation: u64,
    control: StreamControl,
    source: String,
    state: StreamState,
}

/// Owns the running stream and its shared switches.
struct Engine {
    model: Arc<TrainedClassifier>,
    toggle: ClassToggle,
    tx: broadcast::Sender<ServerMessage>,
    counters: Arc<Counters>,
    current: Mutex<Current>,
}

impl Engine {
    fn new(model: Arc<TrainedClassifier>) -> Arc<Self> {
        let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
        Arc::new(Engine {
            model,
            toggle: ClassToggle::default(),
            tx,
            counters: Arc::default(),
            current: Mutex::new(Current {
                generation: 0,
                control: StreamControl::new(),
                source: "none".into(),
                state: StreamState::Ended,
            }),
        })
    }

    fn publish(&self, msg: ServerMessage) {
        // No subscribers is fine.
        let _ = self.tx.send(msg);
    }

    fn status(&self) -> ServerMessage {
        let cur = self.current.lock().unwrap();
        ServerMessage::Status {
            state: cur.state,
            source: cur.source.clone(),
            class: self.toggle.get().to_string(),
        }
    }

    /// Opens `spec` (blocking: a listener waits for its inlet), checks it
    /// against the model and swaps it in for the running stream.
    fn switch_source(self: &Arc<Self>, spec: &SourceSpec) -> Result<(), RealtimeError> {
        let source = spec.open(&self.toggle)?;
        check_channels(&source, &self.model)?;
        let description = source.describe();
        let control = StreamControl::new();
        let generation = {
            let mut cur = self.current.lock().unwrap();
            cur.control.stop();
            if cur.state == StreamState::Paused {
                control.pause();
            }
            cur.generation += 1;
            cur.control = control.clone();
            cur.source = description;
            if cur.state == StreamState::Ended {
                cur.state = StreamState::Running;
            }
            cur.generation
        };
        let source = Counted {
            inner: source,
            counters: self.counters.clone(),
        };
        let engine = self.clone();
        thread::spawn(move || engine.run(source, control, generation));
        self.publish(self.status());
        Ok(())
    }

    fn run(self: Arc<Self>, source: Counted, control: StreamControl, generation: u64) {
        let is_current = || self.current.lock().unwrap().generation == generation;
        let result = stream_classify(source, self.model.clone(), &StreamOptions::default(), &control, |cmd| {
            // A superseded stream may still be draining; keep it off the wire.
            if !is_current() {
                return Flow::Stop;
            }
            self.counters.commands.fetch_add(1, Ordering::Relaxed);
            *self.counters.last_decision.lock().unwrap() = Some(cmd.decision_value);
            self.publish(ServerMessage::command(&cmd));
            Flow::Continue
        });
        match result {
            Ok(stats) => {
                self.counters.dropped.fetch_add(stats.frames_dropped, Ordering::Relaxed);
                log::info!(
                    "stream ended: {} frames, {} commands, {} dropped, {} gap resets",
                    stats.frames_received,
                    stats.commands,
                    stats.frames_dropped,
                    stats.gap_resets
                );
            }
            Err(e) => {
                log::error!("stream failed: {e}");
                if is_current() {
                    self.publish(ServerMessage::error(format!("stream failed: {e}")));
                }
            }
        }
        let ended = {
            let mut cur = self.current.lock().unwrap();
            let ended = cur.generation == generation;
            if ended {
                cur.state = StreamState::Ended;
            }
            ended
        };
        if ended {
            self.publish(self.status());
        }
    }

    fn set_paused(&self, paused: bool) {
        let mut cur = self.current.lock().unwrap();
        if cur.state == StreamState::Ended {
            return;
        }
        if paused {
            cur.control.pause();
            cur.state = StreamState::Paused;
        } else {
            cur.control.resume();
            cur.state = StreamState::Running;
        }
    }

    fn stop(&self) {
        self.current.lock().unwrap().control.stop();
    }

    async fn telemetry_loop(self: Arc<Self>) {
        let mut tick = tokio::time::interval(Duration::from_secs(1));
        tick.tick().await;
        let mut last = (0u64, 0u64, tokio::time::Instant::now());
        loop {
            tick.tick().await;
            let now = tokio::time::Instant::now();
            let frames = self.counters.frames.load(Ordering::Relaxed);
            let commands = self.counters.commands.load(Ordering::Relaxed);
            let dt = (now - last.2).as_secs_f64().max(1e-9);
            let paused = self.current.lock().unwrap().state == StreamState::Paused;
            self.publish(ServerMessage::Telemetry {
                fps: (frames - last.0) as f64 / dt,
                cps: (commands - last.1) as f64 / dt,
                decision: *self.counters.last_decision.lock().unwrap(),
                dropped: self.counters.dropped.load(Ordering::Relaxed),
                paused,
            });
            last = (frames, commands, now);
        }
    }
}

/// A running service; dropping it leaves the server running until
/// [`shutdown`](Self::shutdown).
pub struct ServiceHandle {
    pub addr: SocketAddr,
    engine: Arc<Engine>,
    shutdown: Option<oneshot::Sender<()>>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    /// The shared toggle that drives the synthetic source.
    pub fn set_class(&self, label: ClassLabel) {
        self.engine.toggle.set(label);
    }

    pub async fn shutdown(mut self) -> std::io::Result<()> {
        self.engine.stop();
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.server.await.unwrap_or(Ok(()))
    }

    /// Serves until the process ends.
    pub async fn wait(self) -> std::io::Result<()> {
        self.server.await.unwrap_or(Ok(()))
    }
}

/// Starts streaming from `source` and listens on `addr` (port 0 picks a free
/// port). Refuses to start when the source cannot feed the model.
pub async fn start(
    model: Arc<TrainedClassifier>,
    source: SourceSpec,
    addr: SocketAddr,
) -> Result<ServiceHandle, ServiceError> {
    model.validate().map_err(RealtimeError::from)?;
    let engine = Engine::new(model);
    {
        let engine = engine.clone();
        tokio::task::spawn_blocking(move || engine.switch_source(&source))
            .await
            .expect("source opener panicked")?;
    }
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    log::info!("serving on ws://{addr}/");
    tokio::spawn(engine.clone().telemetry_loop());

    let app = Router::new()
        .route("/", get(upgrade))
        .route("/ws", get(upgrade))
        .with_state(engine.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServiceHandle {
        addr,
        engine,
        shutdown: Some(tx),
        server,
    })
}

/// Long-running form of [`start`].
pub async fn serve(model: Arc<TrainedClassifier>, source: SourceSpec, port: u16) -> Result<(), ServiceError> {
    let handle = start(model, source, SocketAddr::from(([127, 0, 0, 1], port))).await?;
    handle.wait().await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(engine): State<Arc<Engine>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, engine))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    socket.send(Message::Text(msg.to_text().into())).await.is_ok()
}

async fn client(mut socket: WebSocket, engine: Arc<Engine>) {
    // Subscribe first: the client sees only what happens from now on.
    let mut rx = engine.tx.subscribe();
    if !send(&mut socket, &engine.status()).await {
        return;
    }
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(m) => {
                    if !send(&mut socket, &m).await {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("client fell {n} messages behind; disconnecting");
                    let _ = send(&mut socket, &ServerMessage::error("too slow; disconnected")).await;
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => {
                let text = match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
                    Some(Ok(Message::Binary(_))) => {
                        violation(&mut socket, "binary frames are not part of the protocol").await;
                        return;
                    }
                };
                match parse_client(&text) {
                    Parsed::Violation(why) => {
                        violation(&mut socket, &why).await;
                        return;
                    }
                    Parsed::Rejected(why) => {
                        if !send(&mut socket, &ServerMessage::error(why)).await {
                            return;
                        }
                    }
                    Parsed::Message(m) => {
                        if let Err(why) = control(&engine, m).await {
                            if !send(&mut socket, &ServerMessage::error(why)).await {
                                return;
                            }
                        }
                    }
                }
            }
        }
    }
}

async fn violation(socket: &mut WebSocket, why: &str) {
    log::warn!("closing client after protocol violation: {why}");
    let _ = send(socket, &ServerMessage::error(format!("protocol violation: {why}"))).await;
    let _ = socket.send(Message::Close(None)).await;
}

/// Applies a control message; state changes are acknowledged to everyone
/// with a status broadcast.
async fn control(engine: &Arc<Engine>, msg: ClientMessage) -> Result<(), String> {
    match msg {
        ClientMessage::SetClass(label) => engine.toggle.set(label),
        ClientMessage::Pause => engine.set_paused(true),
        ClientMessage::Resume => engine.set_paused(false),
        ClientMessage::SetSource(spec) => {
            let engine = engine.clone();
            return tokio::task::spawn_blocking(move || engine.switch_source(&spec))
                .await
                .map_err(|e| e.to_string())?
                .map_err(|e| format!("set_source refused: {e}"));
        }
    }
    engine.publish(engine.status());
    Ok(())
}
