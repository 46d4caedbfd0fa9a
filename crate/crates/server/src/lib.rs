//! Streaming service for interactive listening.
//!
//! `GET /scenes` lists the scene documents in the configured directory.
//! `POST /sessions` opens a render session for one of them and answers with
//! the socket to connect to. Over that socket the client sends listener
//! poses and receives the binaural render chunk by chunk (see
//! [`protocol`]).

pub mod protocol;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use sixdof_core::scene::{load_scene_config, LoadedScene};
use sixdof_core::session::{Session, SessionError, SessionSource, DEFAULT_CHUNK_LEN};
use sixdof_core::ListenerPose;
use tokio::sync::mpsc;
use uuid::Uuid;

use protocol::{
    ClientMessage, CreateSession, ErrorBody, PoseBody, SceneList, SceneSummary, ServerMessage,
    SessionCreated, SourceSample,
};

/// Environment variable holding the `host:port` to listen on.
pub const BIND_ENV: &str = "SIXDOF_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Directory of `<id>.toml` scene documents.
    pub scenes_dir: PathBuf,
    /// Pace chunks to the audio clock instead of sending as fast as they
    /// render.
    pub realtime: bool,
    /// Chunks the sender may run ahead of the audio clock when pacing.
    pub lead_chunks: u64,
}

impl ServerConfig {
    pub fn new(scenes_dir: impl Into<PathBuf>) -> Self {
        Self {
            scenes_dir: scenes_dir.into(),
            realtime: true,
            lead_chunks: 2,
        }
    }
}

/// Address from [`BIND_ENV`], or [`DEFAULT_BIND`].
pub fn bind_addr_from_env() -> Result<SocketAddr, String> {
    let raw = std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_string());
    raw.parse()
        .map_err(|e| format!("{BIND_ENV}={raw:?} is not a socket address: {e}"))
}

struct AppState {
    config: ServerConfig,
    scenes: Mutex<HashMap<String, Arc<SessionSource>>>,
    /// Sessions created but not yet connected.
    pending: Mutex<HashMap<Uuid, (Session, u32)>>,
}

pub fn router(config: ServerConfig) -> Router {
    let state = Arc::new(AppState {
        config,
        scenes: Mutex::default(),
        pending: Mutex::default(),
    });
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/socket", get(connect_session))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, config: ServerConfig) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, scenes = %config.scenes_dir.display(), "listening");
    axum::serve(listener, router(config)).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

fn valid_scene_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn scene_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.toml"))
}

async fn list_scenes(State(state): State<Arc<AppState>>) -> Response {
    let dir = state.config.scenes_dir.clone();
    let listed = tokio::task::spawn_blocking(move || {
        let mut ids: Vec<String> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .filter_map(|p| p.file_stem()?.to_str().map(str::to_string))
            .filter(|id| valid_scene_id(id))
            .collect();
        ids.sort();
        let scenes = ids
            .into_iter()
            .filter_map(|id| match load_scene_config(&scene_path(&dir, &id)) {
                Ok((cfg, _)) => Some(SceneSummary {
                    gain_cap: cfg.gain_cap,
                    listener_default: PoseBody {
                        x: cfg.listener_default.x,
                        y: cfg.listener_default.y,
                        heading_deg: cfg.listener_default.heading.to_degrees(),
                    },
                    source: cfg
                        .source
                        .samples()
                        .iter()
                        .map(|(t, p)| SourceSample { t: *t, x: p.x, y: p.y })
                        .collect(),
                    id,
                }),
                Err(e) => {
                    tracing::warn!(scene = %id, "skipping unloadable scene: {e}");
                    None
                }
            })
            .collect();
        Ok::<_, std::io::Error>(SceneList { scenes })
    })
    .await
    .expect("scene listing panicked");
    match listed {
        Ok(list) => Json(list).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("cannot read scene directory: {e}")),
    }
}

async fn scene_source(state: &Arc<AppState>, id: &str) -> Result<Arc<SessionSource>, Response> {
    if let Some(src) = state.scenes.lock().expect("scene cache poisoned").get(id) {
        return Ok(src.clone());
    }
    let path = scene_path(&state.config.scenes_dir, id);
    if !path.is_file() {
        return Err(error(StatusCode::NOT_FOUND, format!("unknown scene `{id}`")));
    }
    let loaded = tokio::task::spawn_blocking(move || {
        let (cfg, _) = load_scene_config(&path)?;
        LoadedScene::load(cfg)
    })
    .await
    .expect("scene loading panicked")
    .map_err(|e| error(StatusCode::UNPROCESSABLE_ENTITY, format!("scene `{id}`: {e}")))?;
    let src = Arc::new(SessionSource::from_scene(&loaded));
    state
        .scenes
        .lock()
        .expect("scene cache poisoned")
        .insert(id.to_string(), src.clone());
    tracing::info!(scene = %id, rate = src.sample_rate, samples = src.signal.len(), "scene loaded");
    Ok(src)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<CreateSession>,
) -> Response {
    if !valid_scene_id(&req.scene_id) {
        return error(StatusCode::BAD_REQUEST, "scene_id may hold only letters, digits, `-` and `_`");
    }
    let src = match scene_source(&state, &req.scene_id).await {
        Ok(s) => s,
        Err(resp) => return resp,
    };
    let chunk_len = req.chunk_len.unwrap_or(DEFAULT_CHUNK_LEN);
    let session = match Session::new(&src, chunk_len) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    if let Some(p) = req.pose {
        let pose = ListenerPose::from_degrees(p.x, p.y, p.heading_deg);
        if let Err(e) = session.update_pose(pose, f64::MIN) {
            return error(StatusCode::BAD_REQUEST, e.to_string());
        }
    }
    let id = Uuid::new_v4();
    state.pending.lock().expect("session map poisoned").insert(id, (session, src.sample_rate));
    let host = headers
        .get(header::HOST)
        .and_then(|h| h.to_str().ok())
        .unwrap_or("localhost");
    tracing::info!(session = %id, scene = %req.scene_id, chunk_len, "session created");
    (
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: id.to_string(),
            socket_url: format!("ws://{host}/sessions/{id}/socket"),
            sample_rate: src.sample_rate,
            chunk_len,
        }),
    )
        .into_response()
}

async fn connect_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    ws: WebSocketUpgrade,
) -> Response {
    let Ok(uuid) = id.parse::<Uuid>() else {
        return error(StatusCode::NOT_FOUND, "unknown session");
    };
    let Some((session, rate)) = state.pending.lock().expect("session map poisoned").remove(&uuid) else {
        return error(StatusCode::NOT_FOUND, "unknown or already connected session");
    };
    let realtime = state.config.realtime.then_some(state.config.lead_chunks);
    ws.on_upgrade(move |socket| run_socket(socket, uuid, session, rate, realtime))
}

fn text(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server messages serialize").into())
}

/// One connected session: a reader feeding the pose mailbox, the render
/// loop, and a single writer so chunk headers and payloads stay adjacent.
async fn run_socket(socket: WebSocket, id: Uuid, mut session: Session, rate: u32, pacing: Option<u64>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::channel::<Vec<Message>>(16);

    let writer = tokio::spawn(async move {
        while let Some(group) = rx.recv().await {
            for m in group {
                if sink.send(m).await.is_err() {
                    return;
                }
            }
        }
        let _ = sink.send(Message::Close(None)).await;
    });

    let mailbox = session.mailbox();
    let acks = tx.clone();
    let reader = tokio::spawn(async move {
        while let Some(msg) = stream.next().await {
            let reply = match msg {
                Ok(Message::Text(t)) => match serde_json::from_str::<ClientMessage>(&t) {
                    Ok(ClientMessage::Pose {
                        x,
                        y,
                        heading_deg,
                        client_time,
                    }) => match mailbox.update(ListenerPose::from_degrees(x, y, heading_deg), client_time) {
                        Ok(ack) => ServerMessage::Ack {
                            client_time,
                            status: ack.as_str().to_string(),
                        },
                        Err(SessionError::Closed) => break,
                        Err(e) => ServerMessage::Error { message: e.to_string() },
                    },
                    Err(e) => ServerMessage::Error {
                        message: format!("bad message: {e}"),
                    },
                },
                Ok(Message::Binary(_)) => ServerMessage::Error {
                    message: "binary messages are not accepted".into(),
                },
                Ok(Message::Close(_)) | Err(_) => break,
                Ok(_) => continue,
            };
            if acks.send(vec![text(&reply)]).await.is_err() {
                break;
            }
        }
        mailbox.close();
    });

    let chunk_len = session.chunk_len();
    let _ = tx
        .send(vec![text(&ServerMessage::Ready {
            session_id: id.to_string(),
            sample_rate: rate,
            chunk_len,
            channels: 2,
        })])
        .await;

    let chunk_dur = Duration::from_secs_f64(chunk_len as f64 / f64::from(rate));
    let start = tokio::time::Instant::now();
    let mut sent = 0u64;
    loop {
        let (back, result) = tokio::task::spawn_blocking(move || {
            let r = session.next_chunk();
            (session, r)
        })
        .await
        .expect("render task panicked");
        session = back;
        let group = match result {
            Ok(chunk) => {
                let header = text(&ServerMessage::Chunk {
                    seq: chunk.seq,
                    frames: chunk.frames,
                });
                vec![header, Message::Binary(chunk.to_le_bytes().into())]
            }
            Err(SessionError::EndOfStream) => {
                let _ = tx.send(vec![text(&ServerMessage::Eos { chunks: sent })]).await;
                break;
            }
            Err(SessionError::Closed) => break,
            Err(e) => {
                tracing::error!(session = %id, "render failed: {e}");
                let _ = tx.send(vec![text(&ServerMessage::Error { message: e.to_string() })]).await;
                break;
            }
        };
        if tx.send(group).await.is_err() {
            break;
        }
        sent += 1;
        if let Some(lead) = pacing {
            if sent > lead {
                tokio::time::sleep_until(start + chunk_dur * (sent - lead) as u32).await;
            }
        }
    }
    session.close();
    drop(tx);
    reader.abort();
    let _ = writer.await;
    tracing::info!(session = %id, chunks = sent, "session finished");
}
