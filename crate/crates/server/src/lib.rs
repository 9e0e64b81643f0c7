//! HTTP API over tutorloop sessions: commands are posted as JSON, state is
//! read back as a projection of the session, and progress is streamed as
//! server-sent events.

mod error;
mod view;
mod worker;

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tutorloop_core::bench::{bundled_suite, ScenarioSpec};
use tutorloop_core::config::EngineConfig;
use tutorloop_core::orchestrator::{Engine, EngineError, RepairRequest};
use tutorloop_core::prompt::RuntimeMode;
use tutorloop_core::session::{Session, SessionEvent, SubTaskId, SubTaskKind};

pub use error::{ApiError, ServerError};
pub use view::{
    find_lint_message, lint_message_id, project, AnswerView, LintMessageView, SessionView,
    SubTaskView,
};
pub use worker::WorkerStatus;

use worker::{Job, SessionSlot};

/// Shared state behind every route.
pub struct AppState {
    engine: Arc<Engine>,
    defaults: EngineConfig,
    scenarios: Vec<ScenarioSpec>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    shutdown: watch::Receiver<bool>,
}

impl AppState {
    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))
    }

    fn drain(&self) {
        let slots: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect();
        for slot in slots {
            slot.drain();
        }
    }
}

/// Full session view plus the state of its worker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiSessionView {
    #[serde(flatten)]
    pub session: SessionView,
    pub worker: WorkerStatus,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CreateBody {
    config: Option<EngineConfig>,
    scenario: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SubmitBody {
    question: String,
    /// Defaults to true once the session has a subtask.
    followup: Option<bool>,
    force: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RepairBody {
    message_id: Option<String>,
    mode: Option<RuntimeMode>,
    text: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DefineBody {
    subtask: Option<SubTaskId>,
}

#[derive(Debug, Serialize)]
struct JobAccepted {
    job_id: String,
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    after: Option<u64>,
}

fn parse_body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice::<Option<T>>(bytes)
        .map(Option::unwrap_or_default)
        .map_err(|e| ApiError::unprocessable("invalid_body", e.to_string()))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    bytes: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let body: CreateBody = parse_body(&bytes)?;
    let scenario = match body.scenario {
        None => None,
        Some(id) => Some(
            state
                .scenarios
                .iter()
                .find(|s| s.id == id)
                .cloned()
                .ok_or_else(|| {
                    ApiError::unprocessable("unknown_scenario", format!("no scenario {id:?}"))
                })?,
        ),
    };
    let config = body.config.unwrap_or_else(|| state.defaults.clone());
    let session = Session::new(scenario, config)
        .map_err(|e| ApiError::unprocessable("invalid_config", e.to_string()))?;
    let id = session.id.clone();
    let slot = SessionSlot::spawn(session, state.engine.clone());
    state
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), slot);
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "id": id }))))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ApiSessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let session = project(&slot.session());
    Ok(Json(ApiSessionView {
        session,
        worker: slot.status(),
    }))
}

/// Claims the session's worker, runs `check` against the current state and
/// queues the job it returns. The claim is released when the check fails.
fn dispatch(
    slot: &SessionSlot,
    check: impl FnOnce(&Session) -> Result<Job, ApiError>,
) -> Result<(StatusCode, Json<JobAccepted>), ApiError> {
    if !slot.try_claim() {
        return Err(ApiError::conflict(
            "busy",
            "a job is already running for this session",
        ));
    }
    let job = {
        let session = slot.session();
        check(&session)
    };
    let job = match job {
        Ok(job) => job,
        Err(e) => {
            slot.release();
            return Err(e);
        }
    };
    let job_id = uuid::Uuid::new_v4().to_string();
    if !slot.enqueue(job_id.clone(), job) {
        return Err(ApiError::unavailable("the session worker has stopped"));
    }
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })))
}

async fn submit_subtask(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&id)?;
    let body: SubmitBody = parse_body(&bytes)?;
    if body.question.trim().is_empty() {
        return Err(ApiError::unprocessable(
            "empty_question",
            "question is empty",
        ));
    }
    dispatch(&slot, |s| {
        if let Some(open) = s.open_subtask() {
            return Err(ApiError::conflict(
                "busy",
                format!("subtask {} is still open", open.id),
            ));
        }
        if body.force && s.last_completed_code().is_none() {
            return Err(ApiError::conflict(
                "no_prior_code",
                EngineError::NoPriorCode.to_string(),
            ));
        }
        Ok(Job::Submit {
            followup: body.followup.unwrap_or(!s.subtasks().is_empty()),
            question: body.question,
            force: body.force,
        })
    })
}

async fn request_repair(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&id)?;
    let body: RepairBody = parse_body(&bytes)?;
    dispatch(&slot, |s| {
        let Some(t) = s.in_progress() else {
            return Err(ApiError::conflict(
                "nothing_in_progress",
                "no subtask is in progress",
            ));
        };
        let Some(code) = t.code() else {
            return Err(ApiError::conflict(
                "no_code",
                format!("subtask {} has no code", t.id),
            ));
        };
        let request = match (body.message_id, body.mode, body.text) {
            (Some(message_id), None, None) => {
                let message = find_lint_message(s, &message_id).ok_or_else(|| {
                    ApiError::unprocessable(
                        "unknown_message_id",
                        format!("no pending lint message {message_id:?}"),
                    )
                })?;
                if t.lint_iters >= s.config.max_lint_iters {
                    return Err(ApiError::conflict(
                        "budget_spent",
                        "lint repair budget is spent",
                    ));
                }
                RepairRequest::Lint(Some(message))
            }
            (None, Some(mode), Some(text)) => {
                if text.trim().is_empty() {
                    return Err(ApiError::unprocessable(
                        "empty_text",
                        "error or request text is empty",
                    ));
                }
                if !code.lint_passed() {
                    return Err(ApiError::conflict(
                        "lint_failing",
                        "the code must pass lint first",
                    ));
                }
                if t.runtime_iters >= s.config.max_runtime_iters {
                    return Err(ApiError::conflict(
                        "budget_spent",
                        "runtime repair budget is spent",
                    ));
                }
                RepairRequest::Runtime { mode, text }
            }
            _ => {
                return Err(ApiError::unprocessable(
                    "invalid_body",
                    "expected either message_id or both mode and text",
                ))
            }
        };
        Ok(Job::Repair(request))
    })
}

async fn define_keyword(
    State(state): State<Arc<AppState>>,
    Path((id, surface)): Path<(String, String)>,
    bytes: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&id)?;
    let body: DefineBody = parse_body(&bytes)?;
    dispatch(&slot, |s| {
        let owner = s
            .subtasks()
            .iter()
            .rev()
            .filter(|t| {
                t.kind == SubTaskKind::Concept && body.subtask.is_none_or(|want| want == t.id)
            })
            .find(|t| t.concept().is_some_and(|c| c.keyword(&surface).is_some()));
        match owner {
            Some(t) => Ok(Job::Define {
                subtask: t.id,
                surface: surface.clone(),
            }),
            None => Err(ApiError::unprocessable(
                "unknown_keyword",
                format!("unknown keyword {surface:?}"),
            )),
        }
    })
}

async fn accept(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&id)?;
    let (tx, rx) = oneshot::channel();
    let _queued = dispatch(&slot, |_| Ok(Job::Accept(tx)))?;
    let result = rx
        .await
        .map_err(|_| ApiError::unavailable("the session worker has stopped"))?;
    match result {
        Ok(subtask) => Ok(Json(serde_json::json!({ "subtask": subtask }))),
        Err(e @ EngineError::NothingInProgress) => {
            Err(ApiError::conflict("nothing_in_progress", e.to_string()))
        }
        Err(e @ EngineError::NotAcceptable(..)) => {
            Err(ApiError::conflict("not_acceptable", e.to_string()))
        }
        Err(e) => Err(ApiError::internal(e.to_string())),
    }
}

fn to_sse(e: &SessionEvent) -> Event {
    let kind = serde_json::to_value(e.kind())
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    Event::default()
        .id(e.seq.to_string())
        .event(kind)
        .json_data(e)
        .unwrap_or_else(|_| Event::default().comment("unserializable event"))
}

/// Replays events after `after` and then follows the live stream until the
/// client leaves or the server shuts down.
async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let slot = state.slot(&id)?;
    let after = query.after.or_else(|| {
        headers
            .get("last-event-id")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok())
    });
    let after = after.unwrap_or(0);
    let mut live = slot.subscribe();
    let mut shutdown = state.shutdown.clone();
    let (tx, rx) = mpsc::channel::<SessionEvent>(256);
    tokio::spawn(async move {
        let mut last = after;
        let backlog = |last: u64| -> Vec<SessionEvent> {
            slot.session()
                .events()
                .iter()
                .filter(|e| e.seq > last)
                .cloned()
                .collect()
        };
        for e in backlog(last) {
            last = e.seq;
            if tx.send(e).await.is_err() {
                return;
            }
        }
        loop {
            let batch = tokio::select! {
                r = live.recv() => match r {
                    Ok(e) => vec![e],
                    Err(broadcast::error::RecvError::Lagged(_)) => backlog(last),
                    Err(broadcast::error::RecvError::Closed) => return,
                },
                _ = shutdown.changed() => return,
                _ = tx.closed() => return,
            };
            for e in batch {
                if e.seq <= last {
                    continue;
                }
                last = e.seq;
                if tx.send(e).await.is_err() {
                    return;
                }
            }
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        let e = rx.recv().await?;
        Some((Ok(to_sse(&e)), rx))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/subtasks", post(submit_subtask))
        .route("/sessions/{id}/repairs", post(request_repair))
        .route(
            "/sessions/{id}/keywords/{surface}/define",
            post(define_keyword),
        )
        .route("/sessions/{id}/accept", post(accept))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

pub async fn bind(addr: &str) -> Result<TcpListener, ServerError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: addr.to_string(),
            source,
        })
}

/// A running server.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    task: JoinHandle<std::io::Result<()>>,
    state: Arc<AppState>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections, ends event streams and waits for the
    /// running jobs of every session to finish.
    pub async fn shutdown(self) -> Result<(), ServerError> {
        let _ = self.shutdown.send(true);
        self.task
            .await
            .map_err(|e| ServerError::Io(std::io::Error::other(e)))?
            .map_err(ServerError::Io)?;
        let state = self.state;
        tokio::task::spawn_blocking(move || state.drain())
            .await
            .map_err(|e| ServerError::Io(std::io::Error::other(e)))?;
        Ok(())
    }
}

/// Serves the API on `listener`. New sessions start from `defaults` unless
/// the request carries its own config.
pub fn start(
    listener: TcpListener,
    engine: Arc<Engine>,
    defaults: EngineConfig,
) -> Result<ServerHandle, ServerError> {
    let addr = listener.local_addr().map_err(ServerError::Io)?;
    let (shutdown, rx) = watch::channel(false);
    let state = Arc::new(AppState {
        engine,
        defaults,
        scenarios: bundled_suite(),
        sessions: RwLock::new(HashMap::new()),
        shutdown: rx.clone(),
    });
    let app = router(state.clone());
    let mut signal = rx;
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = signal.wait_for(|stop| *stop).await;
            })
            .await
    });
    tracing::info!("listening on {addr}");
    Ok(ServerHandle {
        addr,
        shutdown,
        task,
        state,
    })
}
