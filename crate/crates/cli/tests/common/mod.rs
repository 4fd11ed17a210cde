#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::Value;
use sovereign_cli::creds::Credentials;
use sovereign_cli::server::{router, AppState};
use sovereign_core::clock::ManualClock;
use sovereign_core::committer::Committer;
use sovereign_core::config::KernelConfig;
use sovereign_core::kernel::KernelOptions;
use sovereign_core::model::ActorId;
use sovereign_core::store::Durability;
use sovereign_core::Kernel;
use tower::ServiceExt;

pub const T0: u64 = 1_700_000_000_000_000_000;

pub struct Svc {
    pub dir: tempfile::TempDir,
    pub state: Arc<AppState>,
    pub app: Router,
    pub root: String,
    pub clock: ManualClock,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
    pub text: String,
}

impl Svc {
    pub fn new() -> Svc {
        let dir = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(T0);
        let opts = KernelOptions::default().clock(clock.clone()).durability(Durability::Normal);
        let kernel = Kernel::init(dir.path(), KernelConfig::default(), opts).unwrap();
        let mut creds = Credentials::default();
        let root = creds.issue(&ActorId::root());
        creds.save(dir.path()).unwrap();
        let (committer, _handle) = Committer::spawn(kernel);
        let state = AppState::new(committer, dir.path().to_path_buf()).unwrap();
        let app = router(state.clone());
        Svc { dir, state, app, root, clock }
    }

    pub fn path(&self) -> PathBuf {
        self.dir.path().to_path_buf()
    }

    pub async fn call(&self, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let text = String::from_utf8(bytes.to_vec()).unwrap();
        let body = serde_json::from_str(&text).unwrap_or(Value::Null);
        Reply { status, body, text }
    }

    pub async fn get(&self, uri: &str, token: &str) -> Reply {
        self.call("GET", uri, Some(token), None).await
    }

    pub async fn post(&self, uri: &str, token: &str, body: Value) -> Reply {
        self.call("POST", uri, Some(token), Some(body)).await
    }

    /// One production tick, as the scheduler would append it.
    pub async fn tick(&self) {
        self.clock.advance_secs(1);
        self.state.run(|k| Ok(k.tick()?)).await.unwrap();
    }

    pub async fn size(&self) -> u64 {
        self.get("/v1/status", &self.root.clone()).await.body["tree_size"].as_u64().unwrap()
    }
}
