#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use crowdscreen_service::api::{router, AppState};
use crowdscreen_service::store::ProjectStore;
use serde_json::{json, Value};
use ureq::Agent;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

/// The fixture inputs as a `POST /projects` body.
pub fn create_body() -> Value {
    json!({
        "papers": fixture_text("papers.csv"),
        "criteria": serde_json::from_str::<Value>(&fixture_text("criteria.json")).unwrap(),
        "tests": serde_json::from_str::<Value>(&fixture_text("tests.json")).unwrap(),
        "config": {},
    })
}

/// An API server on an ephemeral port, running on its own runtime.
pub struct Server {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    _runtime: tokio::runtime::Runtime,
}

impl Server {
    pub fn start(store_dir: &Path) -> Self {
        let store = ProjectStore::open(store_dir).unwrap();
        let (state, _warnings) = AppState::open(store).unwrap();
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr = listener.local_addr().unwrap();
        let app = router(state.clone());
        runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self {
            addr,
            state,
            _runtime: runtime,
        }
    }

    pub fn base(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}/api/v1{path}", self.addr)
    }
}

pub fn agent() -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into()
}

/// Status code and JSON body (Null when empty).
pub fn get(url: &str) -> (u16, Value) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap() })
}

pub fn post(url: &str, body: &Value) -> (u16, Value) {
    post_raw(url, &body.to_string())
}

pub fn post_raw(url: &str, body: &str) -> (u16, Value) {
    let mut resp = agent()
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap_or(Value::String(text)) })
}
