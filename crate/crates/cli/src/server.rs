//! Local HTTP service. Every request runs on the committer thread, so HTTP
//! and any other in-process caller share one total order.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use sovereign_core::audit::export_package;
use sovereign_core::committer::Committer;
use sovereign_core::envelope::EnvelopeSpec;
use sovereign_core::model::{ActorId, ActorSpec};
use sovereign_core::{Kernel, KernelError};
use tokio::sync::watch;

use crate::api::{self, ActionRequest, ApiError, DecisionRequest, EventQuery};
use crate::creds::Credentials;

/// Longest a pending-holds poll may wait.
pub const MAX_WAIT: Duration = Duration::from_secs(60);

pub struct AppState {
    committer: Committer,
    data_dir: PathBuf,
    creds: RwLock<Credentials>,
    version: watch::Sender<Version>,
}

/// What pollers wait on: log growth and changes to the set of holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Version {
    pub tree_size: u64,
    pub holds: u64,
}

impl Version {
    pub fn of(k: &Kernel) -> Result<Version, KernelError> {
        // Grows by one when a hold is created and one when it resolves.
        let holds = k.holds().map(|h| if h.is_pending() { 1 } else { 2 }).sum();
        Ok(Version { tree_size: k.tree_size()?, holds })
    }
}

impl AppState {
    pub fn new(committer: Committer, data_dir: PathBuf) -> Result<Arc<AppState>, ApiError> {
        let creds = Credentials::load(&data_dir).map_err(|e| ApiError::internal(e.to_string()))?;
        let v = committer
            .call(|k| Version::of(k))
            .map_err(|e| ApiError::internal(e.to_string()))??;
        Ok(Arc::new(AppState {
            committer,
            data_dir,
            creds: RwLock::new(creds),
            version: watch::channel(v).0,
        }))
    }

    /// Runs `f` on the committer and publishes the resulting version to
    /// pollers.
    pub async fn run<R, F>(&self, f: F) -> Result<R, ApiError>
    where
        R: Send + 'static,
        F: FnOnce(&mut Kernel) -> Result<R, ApiError> + Send + 'static,
    {
        let c = self.committer.clone();
        let tx = self.version.clone();
        tokio::task::spawn_blocking(move || {
            c.call(move |k| {
                let out = f(k);
                if let Ok(n) = Version::of(k) {
                    tx.send_if_modified(|v| std::mem::replace(v, n) != n);
                }
                out
            })
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(e.to_string()))?
    }

    fn lookup(&self, token: &str) -> Option<ActorId> {
        if let Some(a) = self.creds.read().unwrap().actor_for(token) {
            return Some(a.clone());
        }
        // Tokens may have been issued by the CLI since startup.
        let fresh = Credentials::load(&self.data_dir).ok()?;
        let found = fresh.actor_for(token).cloned();
        *self.creds.write().unwrap() = fresh;
        found
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// The actor bound to the request's bearer token.
pub struct Caller(pub ActorId);

impl FromRequestParts<Arc<AppState>> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Caller, ApiError> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(ApiError::unauthorized)?;
        state.lookup(token.trim()).map(Caller).ok_or_else(ApiError::unauthorized)
    }
}

fn body<T: DeserializeOwned>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn query<T: DeserializeOwned>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn reply((status, v): (u16, Value)) -> Response {
    (StatusCode::from_u16(status).unwrap_or(StatusCode::OK), Json(v)).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/status", get(status))
        .route("/v1/actors", post(create_actor))
        .route("/v1/envelopes", post(issue_envelope))
        .route("/v1/actions", post(submit))
        .route("/v1/events", get(events))
        .route("/v1/holds/pending", get(pending_holds))
        .route("/v1/holds/{id}", post(decide))
        .route("/v1/proof/inclusion", get(inclusion))
        .route("/v1/proof/consistency", get(consistency))
        .route("/v1/log/checkpoint", get(checkpoint))
        .route("/v1/export", get(export))
        .fallback(|| async { ApiError::new(404, "NOT_FOUND", "no such endpoint") })
        .with_state(state)
}

async fn status(State(st): State<Arc<AppState>>, _c: Caller) -> Result<Json<Value>, ApiError> {
    st.run(|k| api::status(k)).await.map(Json)
}

async fn create_actor(
    State(st): State<Arc<AppState>>,
    Caller(caller): Caller,
    b: Result<Json<ActorSpec>, JsonRejection>,
) -> Result<Response, ApiError> {
    let spec = body(b)?;
    let actor = st.run(move |k| Ok(k.register_actor(spec, &caller)?)).await?;
    let token = {
        let mut creds = st.creds.write().unwrap();
        if let Ok(fresh) = Credentials::load(&st.data_dir) {
            *creds = fresh;
        }
        let t = creds.issue(&actor.id);
        creds.save(&st.data_dir).map_err(|e| ApiError::internal(e.to_string()))?;
        t
    };
    Ok(reply((201, json!({ "actor": actor, "token": token }))))
}

async fn issue_envelope(
    State(st): State<Arc<AppState>>,
    Caller(caller): Caller,
    b: Result<Json<EnvelopeSpec>, JsonRejection>,
) -> Result<Response, ApiError> {
    let spec = body(b)?;
    let env = st.run(move |k| Ok(k.issue_envelope(&caller, spec)?)).await?;
    Ok(reply((201, json!(env))))
}

async fn submit(
    State(st): State<Arc<AppState>>,
    Caller(caller): Caller,
    b: Result<Json<ActionRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(b)?;
    st.run(move |k| api::submit(k, &caller, req)).await.map(reply)
}

async fn events(
    State(st): State<Arc<AppState>>,
    _c: Caller,
    q: Result<Query<EventQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    st.run(move |k| api::events(k, &q)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct PendingQuery {
    wait: Option<String>,
    since: Option<u64>,
    holds_since: Option<u64>,
}

/// `30s`, `500ms`, `2m` or bare seconds.
pub fn parse_wait(s: &str) -> Option<Duration> {
    let s = s.trim();
    let (num, unit) = s.split_at(s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len()));
    let n: u64 = num.parse().ok()?;
    match unit {
        "" | "s" => Some(Duration::from_secs(n)),
        "ms" => Some(Duration::from_millis(n)),
        "m" => Some(Duration::from_secs(n.checked_mul(60)?)),
        _ => None,
    }
}

/// Pending holds. With `wait`, blocks until the wait runs out or something
/// changes: the log grows past `since`, or the hold version moves past
/// `holds_since`. With neither, waits for the holds to change from now.
async fn pending_holds(
    State(st): State<Arc<AppState>>,
    _c: Caller,
    q: Result<Query<PendingQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    if let Some(w) = &q.wait {
        let wait = parse_wait(w).ok_or_else(|| ApiError::bad_request(format!("bad wait {w:?}")))?.min(MAX_WAIT);
        let mut rx = st.version.subscribe();
        let now = *rx.borrow();
        let holds_since = match (q.since, q.holds_since) {
            (None, None) => Some(now.holds),
            (_, h) => h,
        };
        let changed = |v: &Version| q.since.is_some_and(|s| v.tree_size > s) || holds_since.is_some_and(|h| v.holds > h);
        let _ = tokio::time::timeout(wait, rx.wait_for(changed)).await;
    }
    st.run(|k| {
        let v = Version::of(k)?;
        Ok(json!({
            "tree_size": v.tree_size,
            "hold_version": v.holds,
            "holds": k.pending_holds(),
        }))
    })
    .await
    .map(Json)
}

async fn decide(
    State(st): State<Arc<AppState>>,
    Caller(caller): Caller,
    Path(id): Path<String>,
    b: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(b)?;
    st.run(move |k| api::decide(k, &caller, &id, req.decision)).await.map(reply)
}

#[derive(Debug, Deserialize)]
struct InclusionQuery {
    seq: u64,
    size: Option<u64>,
}

async fn inclusion(
    State(st): State<Arc<AppState>>,
    _c: Caller,
    q: Result<Query<InclusionQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    st.run(move |k| Ok(json!(k.prove_inclusion(q.seq, q.size)?))).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct ConsistencyQuery {
    old: u64,
    new: Option<u64>,
}

async fn consistency(
    State(st): State<Arc<AppState>>,
    _c: Caller,
    q: Result<Query<ConsistencyQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    st.run(move |k| Ok(json!(k.prove_consistency(q.old, q.new)?))).await.map(Json)
}

async fn checkpoint(State(st): State<Arc<AppState>>, _c: Caller) -> Result<Response, ApiError> {
    let note = st.run(|k| Ok(k.publish_checkpoint()?.format())).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], note).into_response())
}

async fn export(
    State(st): State<Arc<AppState>>,
    _c: Caller,
    q: Result<Query<EventQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    st.run(move |k| Ok(json!(export_package(k, &q.filter())?))).await.map(Json)
}

/// Appends a production tick whenever the interval has elapsed and sweeps
/// timed-out holds.
pub async fn scheduler(st: Arc<AppState>, interval: Duration) {
    let mut every = tokio::time::interval(interval);
    every.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        every.tick().await;
        let res = st
            .run(|k| {
                let expired = k.expire_holds()?;
                match k.tick() {
                    Ok(_) | Err(KernelError::State(_)) => Ok(expired),
                    Err(e) => Err(e.into()),
                }
            })
            .await;
        match res {
            Ok(expired) if !expired.is_empty() => log::info!("timed out holds: {}", expired.join(", ")),
            Ok(_) => {}
            Err(e) => log::warn!("scheduled tick failed: {e}"),
        }
    }
}

/// Serves until ctrl-c, then returns the kernel.
pub async fn serve(kernel: Kernel, addr: SocketAddr, ticks: bool) -> std::io::Result<Kernel> {
    let data_dir = kernel.data_dir();
    let interval = Duration::from_millis(kernel.config().capacity.tick_interval_ms.max(1));
    let (committer, handle) = Committer::spawn(kernel);
    let st = AppState::new(committer, data_dir).map_err(|e| std::io::Error::other(e.to_string()))?;
    let sched = ticks.then(|| tokio::spawn(scheduler(st.clone(), interval)));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(st))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(s) = sched {
        s.abort();
        let _ = s.await;
    }
    // All committer handles are gone once the router and scheduler are.
    tokio::task::spawn_blocking(move || handle.join())
        .await
        .map_err(std::io::Error::other)?
        .map_err(|_| std::io::Error::other("committer thread panicked"))
}
