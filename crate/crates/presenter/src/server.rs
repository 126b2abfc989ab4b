//! Websocket transport. Connections pick a role by path: `/producer`,
//! `/consumer` (also `/`) or `/debug`. All frames funnel through one
//! pipeline task; consumers share pre-serialized broadcast messages.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::StatusCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;

use crate::protocol::{codes, Role, SessionMessage, SCHEMA_VERSION};
use crate::session::{Session, SessionError};
use magboard_core::tracking::ObservationFrame;

/// Inbound frames waiting for the pipeline task.
pub const INPUT_CAPACITY: usize = 256;
/// Outbound messages a consumer may fall behind by before it is dropped.
pub const BROADCAST_CAPACITY: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Wall-clock quiet time after which buffered frames are processed.
    pub idle_flush: Duration,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            idle_flush: Duration::from_millis(250),
        }
    }
}

#[derive(Debug)]
struct Outbound {
    debug_only: bool,
    text: String,
}

enum Input {
    Frame {
        frame: ObservationFrame,
        reply: mpsc::Sender<SessionMessage>,
    },
    Subscribe {
        reply: oneshot::Sender<(String, broadcast::Receiver<Arc<Outbound>>)>,
    },
    ProducerClosed,
}

/// A running server. Dropping it without [`RunningServer::shutdown`] aborts
/// the tasks.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    producer_done: watch::Receiver<u64>,
    pipeline: Option<JoinHandle<Session>>,
    accept: JoinHandle<()>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Resolves once `n` producer connections have closed in total.
    pub async fn producers_closed(&mut self, n: u64) {
        let _ = self.producer_done.wait_for(|c| *c >= n).await;
    }

    /// Stops accepting, finalizes the session, broadcasts the last messages
    /// and returns the session.
    pub async fn shutdown(mut self) -> Session {
        self.accept.abort();
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.pipeline.take().expect("joined once").await.expect("pipeline task panicked")
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.accept.abort();
        if let Some(p) = &self.pipeline {
            p.abort();
        }
    }
}

struct Shared {
    story_id: String,
    input: mpsc::Sender<Input>,
    producer_busy: AtomicBool,
}

pub async fn start(session: Session, listen: SocketAddr, opts: ServerOptions) -> Result<RunningServer, ServerError> {
    let listener = TcpListener::bind(listen).await.map_err(|source| ServerError::Bind { addr: listen, source })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind { addr: listen, source })?;
    let (input_tx, input_rx) = mpsc::channel(INPUT_CAPACITY);
    let (shutdown_tx, shutdown_rx) = oneshot::channel();
    let (done_tx, done_rx) = watch::channel(0u64);
    let shared = Arc::new(Shared {
        story_id: session.story_id().to_string(),
        input: input_tx,
        producer_busy: AtomicBool::new(false),
    });
    let pipeline = tokio::spawn(pipeline_task(session, input_rx, shutdown_rx, done_tx, opts));
    let accept = tokio::spawn(accept_loop(listener, shared));
    log::info!("listening on ws://{addr}");
    Ok(RunningServer {
        addr,
        shutdown: Some(shutdown_tx),
        producer_done: done_rx,
        pipeline: Some(pipeline),
        accept,
    })
}

fn audience(m: &SessionMessage) -> Option<bool> {
    match m {
        SessionMessage::State(_) | SessionMessage::Error { .. } => Some(false),
        SessionMessage::Action(_) | SessionMessage::Command(_) => Some(true),
        SessionMessage::Hello(_) | SessionMessage::Frame(_) => None,
    }
}

fn publish(tx: &broadcast::Sender<Arc<Outbound>>, msgs: Vec<SessionMessage>) {
    for m in msgs {
        if let Some(debug_only) = audience(&m) {
            // No receivers is fine.
            let _ = tx.send(Arc::new(Outbound {
                debug_only,
                text: m.to_line(),
            }));
        }
    }
}

async fn pipeline_task(
    mut session: Session,
    mut input: mpsc::Receiver<Input>,
    mut shutdown: oneshot::Receiver<()>,
    producer_done: watch::Sender<u64>,
    opts: ServerOptions,
) -> Session {
    let (tx, _) = broadcast::channel::<Arc<Outbound>>(BROADCAST_CAPACITY);
    loop {
        let idle = tokio::time::sleep(opts.idle_flush);
        tokio::select! {
            biased;
            _ = &mut shutdown => break,
            msg = input.recv() => match msg {
                None => break,
                Some(Input::Frame { frame, reply }) => match session.offer(frame) {
                    Ok(msgs) => publish(&tx, msgs),
                    Err(e) => {
                        let code = match e {
                            SessionError::Recognizer(_) => codes::RECOGNIZER,
                            _ => codes::STALE_FRAME,
                        };
                        let _ = reply.try_send(SessionMessage::error(code, e.to_string()));
                    }
                },
                Some(Input::Subscribe { reply }) => {
                    let _ = reply.send((session.snapshot().to_line(), tx.subscribe()));
                }
                Some(Input::ProducerClosed) => {
                    flush(&mut session, &tx);
                    producer_done.send_modify(|c| *c += 1);
                }
            },
            _ = idle, if session.buffered() > 0 => flush(&mut session, &tx),
        }
    }
    match session.finish() {
        Ok(msgs) => publish(&tx, msgs),
        Err(e) => log::error!("finalizing session: {e}"),
    }
    session
}

fn flush(session: &mut Session, tx: &broadcast::Sender<Arc<Outbound>>) {
    match session.flush() {
        Ok(msgs) => publish(tx, msgs),
        Err(e) => log::error!("flushing frames: {e}"),
    }
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let shared = shared.clone();
                tokio::spawn(async move {
                    if let Err(e) = handle(stream, shared).await {
                        log::debug!("connection {peer}: {e}");
                    }
                });
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}

type Ws = WebSocketStream<TcpStream>;

async fn send(ws: &mut Ws, m: &SessionMessage) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    ws.send(Message::text(m.to_line())).await
}

async fn fail(ws: &mut Ws, code: &str, detail: impl Into<String>) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    send(ws, &SessionMessage::error(code, detail)).await?;
    ws.close(None).await
}

async fn handle(stream: TcpStream, shared: Arc<Shared>) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let mut role = None;
    #[allow(clippy::result_large_err)] // signature fixed by tungstenite
    let callback = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        role = Role::from_path(req.uri().path());
        if role.is_none() {
            let mut err = ErrorResponse::new(Some(format!("unknown endpoint {}", req.uri().path())));
            *err.status_mut() = StatusCode::NOT_FOUND;
            return Err(err);
        }
        Ok(resp)
    };
    let mut ws = tokio_tungstenite::accept_hdr_async(stream, callback).await?;
    let role = role.expect("set by the handshake");
    send(&mut ws, &SessionMessage::hello(&shared.story_id, role)).await?;
    match role {
        Role::Producer => {
            if shared.producer_busy.swap(true, Ordering::SeqCst) {
                return fail(&mut ws, codes::PRODUCER_TAKEN, "a producer is already connected").await;
            }
            let result = producer(&mut ws, &shared).await;
            shared.producer_busy.store(false, Ordering::SeqCst);
            let _ = shared.input.send(Input::ProducerClosed).await;
            result
        }
        Role::Consumer | Role::Debug => consumer(&mut ws, &shared, role == Role::Debug).await,
    }
}

fn check_hello(h: &crate::protocol::Hello) -> Result<(), String> {
    if h.schema_version != SCHEMA_VERSION {
        return Err(format!("schema_version {} unsupported, server speaks {SCHEMA_VERSION}", h.schema_version));
    }
    Ok(())
}

async fn producer(ws: &mut Ws, shared: &Shared) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let (reply_tx, mut reply_rx) = mpsc::channel::<SessionMessage>(64);
    loop {
        tokio::select! {
            Some(m) = reply_rx.recv() => send(ws, &m).await?,
            inbound = ws.next() => {
                let Some(inbound) = inbound else { return Ok(()) };
                let text = match inbound? {
                    Message::Text(t) => t,
                    Message::Close(_) => return Ok(()),
                    Message::Binary(_) => return fail(ws, codes::PROTOCOL, "binary messages are not supported").await,
                    _ => continue,
                };
                match SessionMessage::parse(&text) {
                    Ok(SessionMessage::Frame(frame)) => {
                        let input = Input::Frame { frame, reply: reply_tx.clone() };
                        if shared.input.send(input).await.is_err() {
                            return ws.close(None).await;
                        }
                    }
                    Ok(SessionMessage::Hello(h)) => {
                        if let Err(detail) = check_hello(&h) {
                            return fail(ws, codes::SCHEMA_VERSION, detail).await;
                        }
                    }
                    Ok(other) => {
                        return fail(ws, codes::FORBIDDEN, format!("producers may not send `{}`", other.type_name())).await
                    }
                    Err(e) => return fail(ws, codes::PROTOCOL, e.to_string()).await,
                }
            }
        }
    }
}

async fn consumer(ws: &mut Ws, shared: &Shared, debug: bool) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let (tx, rx) = oneshot::channel();
    if shared.input.send(Input::Subscribe { reply: tx }).await.is_err() {
        return ws.close(None).await;
    }
    let Ok((snapshot, mut feed)) = rx.await else {
        return ws.close(None).await;
    };
    ws.send(Message::text(snapshot)).await?;
    loop {
        tokio::select! {
            out = feed.recv() => match out {
                Ok(m) => {
                    if debug || !m.debug_only {
                        ws.send(Message::text(m.text.clone())).await?;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    return fail(ws, codes::LAGGED, format!("fell {n} messages behind; reconnect for a fresh snapshot")).await;
                }
                Err(broadcast::error::RecvError::Closed) => return ws.close(None).await,
            },
            inbound = ws.next() => {
                let Some(inbound) = inbound else { return Ok(()) };
                let text = match inbound? {
                    Message::Text(t) => t,
                    Message::Close(_) => return Ok(()),
                    Message::Binary(_) => return fail(ws, codes::PROTOCOL, "binary messages are not supported").await,
                    _ => continue,
                };
                match SessionMessage::parse(&text) {
                    Ok(SessionMessage::Hello(h)) => {
                        if let Err(detail) = check_hello(&h) {
                            return fail(ws, codes::SCHEMA_VERSION, detail).await;
                        }
                    }
                    Ok(other) => {
                        return fail(ws, codes::FORBIDDEN, format!("consumers may not send `{}`", other.type_name())).await
                    }
                    Err(e) => return fail(ws, codes::PROTOCOL, e.to_string()).await,
                }
            }
        }
    }
}
