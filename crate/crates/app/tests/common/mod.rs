#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gaia_app::server::{start_background, AppState, BackendFactory, RunningServer, ServiceConfig};
use gaia_core::fixture::villa;
use gaia_core::project::save_project;
use serde_json::Value;

pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["gaia"];
    argv.extend_from_slice(args);
    let code = gaia_app::cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// Writes the villa fixture into `dir` and returns its path.
pub fn villa_project(dir: &Path) -> PathBuf {
    let path = dir.join("villa.json");
    save_project(&villa(), &path).unwrap();
    path
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

pub struct Reply {
    pub status: u16,
    pub body: Value,
}

pub fn get(agent: &ureq::Agent, url: &str) -> Reply {
    let mut r = agent.get(url).call().unwrap();
    let status = r.status().as_u16();
    let body = r.body_mut().read_json::<Value>().unwrap_or(Value::Null);
    Reply { status, body }
}

pub fn post(agent: &ureq::Agent, url: &str, body: &Value, request_id: Option<&str>) -> Reply {
    let mut req = agent.post(url);
    if let Some(id) = request_id {
        req = req.header("X-Request-Id", id);
    }
    let mut r = req.send_json(body).unwrap();
    let status = r.status().as_u16();
    let body = r.body_mut().read_json::<Value>().unwrap_or(Value::Null);
    Reply { status, body }
}

pub fn serve(config: ServiceConfig, factory: Option<BackendFactory>) -> RunningServer {
    let model = gaia_core::project::load_project(&config.project_path).unwrap();
    let state = match factory {
        Some(f) => AppState::with_factory(config, model, f).unwrap(),
        None => AppState::new(config, model).unwrap(),
    };
    start_background(state, "127.0.0.1:0".parse().unwrap()).unwrap()
}

/// Polls the open proposal until it leaves `pending`.
pub fn wait_proposal(agent: &ureq::Agent, server: &RunningServer, session: &str) -> Value {
    let url = server.url(&format!("/api/sessions/{session}/proposal"));
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let r = get(agent, &url);
        assert_eq!(r.status, 200, "{}", r.body);
        if r.body["status"] != "pending" {
            return r.body;
        }
        assert!(Instant::now() < deadline, "proposal never settled");
        std::thread::sleep(Duration::from_millis(10));
    }
}

pub fn new_session(agent: &ureq::Agent, server: &RunningServer) -> String {
    let r = post(agent, &server.url("/api/sessions"), &Value::Null, None);
    assert_eq!(r.status, 201, "{}", r.body);
    r.body["session_id"].as_str().unwrap().to_string()
}
