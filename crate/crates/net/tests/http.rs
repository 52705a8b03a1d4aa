use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use dialhub_core::config::Config;
use dialhub_core::portal::PortalSettings;
use dialhub_core::protocol::conformance::{run_conformance, Check, ConformanceProbe, Fault, FaultyAgent};
use dialhub_core::protocol::{
    AgentDirectory, InitialState, NewCallResponse, NextResponse, ProtocolError, RemoteAgent,
};
use dialhub_net::{agent_router, http_fallback, portal_router, spawn, HttpAgent, ServerHandle};
use serde_json::{json, Value};

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn serve_agent(agent: Arc<dyn RemoteAgent>) -> ServerHandle {
    spawn(agent_router(agent), local()).unwrap()
}

#[test]
fn reference_agent_conforms_over_http() {
    let server = serve_agent(Config::shipped().unwrap().bistro());
    let client = HttpAgent::new(&server.url());
    let report = run_conformance(&client, &ConformanceProbe::restaurant()).unwrap();
    assert!(report.all_passed(), "{report}");
}

#[test]
fn broken_agent_fails_only_report_check_over_http() {
    let broken = FaultyAgent::new(Config::shipped().unwrap().bistro(), Fault::OmitReport);
    let server = serve_agent(Arc::new(broken));
    let report = run_conformance(&HttpAgent::new(&server.url()), &ConformanceProbe::restaurant()).unwrap();
    assert_eq!(report.failed(), [Check::ReportOnEnd], "{report}");
}

#[test]
fn protocol_errors_cross_the_wire() {
    let server = serve_agent(Config::shipped().unwrap().bistro());
    let client = HttpAgent::new(&server.url());
    assert!(matches!(client.next("nope", "hi"), Err(ProtocolError::SessionUnknown(_))));
    let resp = ureq::post(&format!("{}/newcall", server.url()))
        .config()
        .http_status_as_error(false)
        .build()
        .send("{not json")
        .unwrap();
    assert_eq!(resp.status().as_u16(), 400);
}

#[test]
fn unreachable_endpoint() {
    let port = {
        let l = std::net::TcpListener::bind(local()).unwrap();
        l.local_addr().unwrap().port()
    };
    let client = HttpAgent::new(&format!("http://127.0.0.1:{port}"));
    assert!(matches!(
        client.new_call("u", &InitialState::default()),
        Err(ProtocolError::Unreachable(_))
    ));
}

struct Slow {
    calls: AtomicUsize,
}

impl RemoteAgent for Slow {
    fn new_call(&self, _: &str, _: &InitialState) -> Result<NewCallResponse, ProtocolError> {
        Ok(NewCallResponse {
            v: 1,
            token: "t".into(),
            reply: "hi".into(),
        })
    }

    fn next(&self, _: &str, _: &str) -> Result<NextResponse, ProtocolError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(600));
        Ok(NextResponse {
            v: 1,
            reply: "late".into(),
            ended: false,
            report: None,
        })
    }
}

#[test]
fn timed_out_next_is_not_retried() {
    let slow = Arc::new(Slow {
        calls: AtomicUsize::new(0),
    });
    let server = serve_agent(slow.clone());
    let client = HttpAgent::with_timeout(&server.url(), Duration::from_millis(150));
    assert!(matches!(client.next("t", "hello"), Err(ProtocolError::Unreachable(_))));
    std::thread::sleep(Duration::from_millis(700));
    assert_eq!(slow.calls.load(Ordering::SeqCst), 1);
}

struct Api {
    base: String,
    agent: ureq::Agent,
}

impl Api {
    fn new(server: &ServerHandle) -> Self {
        Api {
            base: server.url(),
            agent: ureq::Agent::config_builder().http_status_as_error(false).build().into(),
        }
    }

    fn post(&self, path: &str, body: Option<Value>) -> (u16, Value) {
        let req = self.agent.post(&format!("{}{path}", self.base));
        let mut resp = match body {
            Some(b) => req.header("content-type", "application/json").send(b.to_string()).unwrap(),
            None => req.send_empty().unwrap(),
        };
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }
}

#[test]
fn tour_over_http_with_remote_http_agent() {
    let config = Config::shipped().unwrap();
    let agent_server = serve_agent(config.bistro());
    let mut config = config;
    config.set_endpoint("bistro", &agent_server.url()).unwrap();
    let dir = AgentDirectory::new().with_fallback(http_fallback);
    let portal = Arc::new(config.portal(Arc::new(dir), PortalSettings::default()).unwrap());
    let server = spawn(portal_router(portal, None), local()).unwrap();
    let api = Api::new(&server);

    let (status, created) = api.post("/api/session", None);
    assert_eq!(status, 200);
    assert_eq!(created["active_agent"], "portal");
    let id = created["session_id"].as_str().unwrap().to_string();
    let script = [
        ("what is the weather", "portal"),
        ("Pittsburgh", "portal"),
        ("tomorrow", "portal"),
        ("Recommend a restaurant in Pittsburgh", "bistro"),
        ("thai", "bistro"),
        ("cheap", "portal"),
        ("goodbye", "portal"),
    ];
    for (text, agent) in script {
        let (status, reply) = api.post(&format!("/api/session/{id}/utterance"), Some(json!({ "text": text })));
        assert_eq!(status, 200, "{reply}");
        assert_eq!(reply["active_agent"], agent, "{text}: {reply}");
        assert!(reply["reply"].is_string());
        assert!(reply["ended"].is_boolean());
    }
    let (status, transcript) = api.get(&format!("/api/session/{id}/transcript"));
    assert_eq!(status, 200);
    let entries = transcript.as_array().unwrap();
    assert_eq!(entries.len(), 15);
    let report = entries.iter().find_map(|e| e.get("reports")).unwrap();
    assert_eq!(report[0]["agent"], "bistro");

    let (status, body) = api.post(&format!("/api/session/{id}/utterance"), Some(json!({ "text": "hi" })));
    assert_eq!((status, body["error"].as_str()), (410, Some("session_ended")));
    let (status, body) = api.post("/api/session/nope/utterance", Some(json!({ "text": "hi" })));
    assert_eq!((status, body["error"].as_str()), (404, Some("unknown_session")));
    let (status, body) = api.post(&format!("/api/session/{id}/utterance"), Some(json!({ "txt": "hi" })));
    assert_eq!((status, body["error"].as_str()), (400, Some("bad_request")));
    let (status, _) = api.get("/api/session/nope/transcript");
    assert_eq!(status, 404);
}

#[test]
fn cors_headers_for_allowed_origin() {
    let config = Config::shipped().unwrap();
    let portal = Arc::new(config.portal(Arc::new(config.directory()), PortalSettings::default()).unwrap());
    let origins = vec!["http://localhost:5173".to_string()];
    let server = spawn(portal_router(portal, Some(&origins)), local()).unwrap();
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let resp = agent
        .post(&format!("{}/api/session", server.url()))
        .header("origin", "http://localhost:5173")
        .send_empty()
        .unwrap();
    assert_eq!(
        resp.headers().get("access-control-allow-origin").unwrap(),
        "http://localhost:5173"
    );
    let resp = agent
        .post(&format!("{}/api/session", server.url()))
        .header("origin", "http://evil.example")
        .send_empty()
        .unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}
