//! Text remote agent protocol.
//!
//! A remote agent exposes two calls: `newcall`, which opens a session given
//! the user id and the slots already known to the portal, and `next`, which
//! relays one user utterance and returns the reply plus an end-of-session
//! flag. The final `next` must carry a [`DialogReport`].
//!
//! Messages are JSON and every message carries `"v": 1`:
//!
//! ```text
//! POST /newcall  {"v":1,"user_id":"u","s0":{"known_slots":{"location":{"value":"Pittsburgh","conf":0.95}}}}
//!             -> {"v":1,"token":"...","reply":"..."}
//! POST /next     {"v":1,"token":"...","utt":"..."}
//!             -> {"v":1,"reply":"...","ended":false,"report":null}
//! ```
//!
//! This module holds the message types and codec, the client-side
//! [`RemoteAgent`] abstraction, and [`SessionHost`], the transport-independent
//! half of the server kit.

pub mod conformance;
pub mod knowledge;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

fn version() -> u32 {
    PROTOCOL_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotValue {
    pub value: String,
    pub conf: f64,
}

/// Slots the portal already knows when it opens a remote session, so the
/// agent can skip questions that were already answered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    #[serde(default)]
    pub known_slots: BTreeMap<String, SlotValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locale: Option<String>,
}

impl InitialState {
    pub fn with_slot(mut self, name: &str, value: &str, conf: f64) -> Self {
        self.known_slots.insert(
            name.to_string(),
            SlotValue {
                value: value.to_string(),
                conf,
            },
        );
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTurn {
    pub speaker: Speaker,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Completed,
    Abandoned,
    Error,
}

/// End-of-session record returned with the final `next` reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogReport {
    pub session_token: String,
    pub turns: Vec<ReportTurn>,
    pub outcome: Outcome,
    #[serde(default)]
    pub extras: BTreeMap<String, serde_json::Value>,
}

impl DialogReport {
    pub fn user_texts(&self) -> Vec<&str> {
        self.turns
            .iter()
            .filter(|t| t.speaker == Speaker::User)
            .map(|t| t.text.as_str())
            .collect()
    }

    pub fn is_time_ordered(&self) -> bool {
        self.turns.windows(2).all(|w| w[0].timestamp <= w[1].timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewCallRequest {
    #[serde(default = "version")]
    pub v: u32,
    pub user_id: String,
    #[serde(default)]
    pub s0: InitialState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewCallResponse {
    #[serde(default = "version")]
    pub v: u32,
    pub token: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextRequest {
    #[serde(default = "version")]
    pub v: u32,
    pub token: String,
    pub utt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextResponse {
    #[serde(default = "version")]
    pub v: u32,
    pub reply: String,
    pub ended: bool,
    #[serde(default)]
    pub report: Option<DialogReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    SessionUnknown,
    Refused,
    BadRequest,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    #[serde(default = "version")]
    pub v: u32,
    pub error: ErrorCode,
    #[serde(default)]
    pub message: String,
}

impl NewCallRequest {
    pub fn new(user_id: &str, s0: InitialState) -> Self {
        NewCallRequest {
            v: PROTOCOL_VERSION,
            user_id: user_id.to_string(),
            s0,
        }
    }
}

impl NextRequest {
    pub fn new(token: &str, utt: &str) -> Self {
        NextRequest {
            v: PROTOCOL_VERSION,
            token: token.to_string(),
            utt: utt.to_string(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProtocolError {
    #[error("agent unreachable: {0}")]
    Unreachable(String),
    #[error("malformed protocol message: {0}")]
    Malformed(String),
    #[error("agent refused the call: {0}")]
    AgentRefused(String),
    #[error("unknown or closed session `{0}`")]
    SessionUnknown(String),
    #[error("agent failed: {0}")]
    AgentFailed(String),
}

impl ProtocolError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ProtocolError::SessionUnknown(_) => ErrorCode::SessionUnknown,
            ProtocolError::AgentRefused(_) => ErrorCode::Refused,
            ProtocolError::Malformed(_) => ErrorCode::BadRequest,
            ProtocolError::Unreachable(_) | ProtocolError::AgentFailed(_) => ErrorCode::Internal,
        }
    }

    pub fn to_response(&self) -> ErrorResponse {
        let message = match self {
            ProtocolError::Unreachable(m)
            | ProtocolError::Malformed(m)
            | ProtocolError::AgentRefused(m)
            | ProtocolError::SessionUnknown(m)
            | ProtocolError::AgentFailed(m) => m.clone(),
        };
        ErrorResponse {
            v: PROTOCOL_VERSION,
            error: self.code(),
            message,
        }
    }

    pub fn from_response(resp: ErrorResponse) -> Self {
        match resp.error {
            ErrorCode::SessionUnknown => ProtocolError::SessionUnknown(resp.message),
            ErrorCode::Refused => ProtocolError::AgentRefused(resp.message),
            ErrorCode::BadRequest => ProtocolError::Malformed(resp.message),
            ErrorCode::Internal => ProtocolError::AgentFailed(resp.message),
        }
    }
}

/// Messages that carry the protocol version.
pub trait Versioned {
    fn version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn version(&self) -> u32 {
                self.v
            }
        }
    )*};
}
versioned!(NewCallRequest, NewCallResponse, NextRequest, NextResponse, ErrorResponse);

pub fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(msg).expect("protocol messages always serialize")
}

pub fn decode<T: DeserializeOwned + Versioned>(body: &str) -> Result<T, ProtocolError> {
    let msg: T = serde_json::from_str(body).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if msg.version() != PROTOCOL_VERSION {
        return Err(ProtocolError::Malformed(format!(
            "unsupported protocol version {}",
            msg.version()
        )));
    }
    Ok(msg)
}

/// Client view of a text remote agent, independent of transport.
pub trait RemoteAgent: Send + Sync {
    fn new_call(&self, user_id: &str, s0: &InitialState) -> Result<NewCallResponse, ProtocolError>;
    fn next(&self, token: &str, utt: &str) -> Result<NextResponse, ProtocolError>;
}

/// Handle on one open remote session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSession {
    pub agent_name: String,
    pub endpoint: String,
    pub session_token: String,
    pub ended: bool,
    pub report: Option<DialogReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextOutcome {
    pub reply: String,
    pub ended: bool,
    pub report: Option<DialogReport>,
}

/// Opens a session and returns it with the agent's first reply.
pub fn new_call(
    agent: &dyn RemoteAgent,
    agent_name: &str,
    endpoint: &str,
    user_id: &str,
    s0: &InitialState,
) -> Result<(AgentSession, String), ProtocolError> {
    let resp = agent.new_call(user_id, s0)?;
    if resp.token.is_empty() {
        return Err(ProtocolError::Malformed("empty session token".into()));
    }
    let session = AgentSession {
        agent_name: agent_name.to_string(),
        endpoint: endpoint.to_string(),
        session_token: resp.token,
        ended: false,
        report: None,
    };
    Ok((session, resp.reply))
}

/// Relays one utterance. Once the agent signals the end, the session is
/// marked ended and keeps the report; further calls fail with `SessionUnknown`.
pub fn next(
    agent: &dyn RemoteAgent,
    session: &mut AgentSession,
    utt: &str,
) -> Result<NextOutcome, ProtocolError> {
    if session.ended {
        return Err(ProtocolError::SessionUnknown(session.session_token.clone()));
    }
    let resp = agent.next(&session.session_token, utt)?;
    if resp.report.is_some() && !resp.ended {
        return Err(ProtocolError::Malformed("report sent before end of session".into()));
    }
    if resp.ended {
        session.ended = true;
        session.report = resp.report.clone();
    }
    Ok(NextOutcome {
        reply: resp.reply,
        ended: resp.ended,
        report: resp.report,
    })
}

/// Resolves endpoints to agents.
pub trait RemoteConnector: Send + Sync {
    fn connect(&self, endpoint: &str) -> Result<Arc<dyn RemoteAgent>, ProtocolError>;
}

type Fallback = Box<dyn Fn(&str) -> Option<Arc<dyn RemoteAgent>> + Send + Sync>;

/// Endpoint registry: explicit registrations first, then an optional factory
/// (for example one that builds HTTP clients for `http://` endpoints).
#[derive(Default)]
pub struct AgentDirectory {
    agents: RwLock<BTreeMap<String, Arc<dyn RemoteAgent>>>,
    fallback: Option<Fallback>,
}

impl AgentDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fallback(
        mut self,
        f: impl Fn(&str) -> Option<Arc<dyn RemoteAgent>> + Send + Sync + 'static,
    ) -> Self {
        self.fallback = Some(Box::new(f));
        self
    }

    pub fn register(&self, endpoint: &str, agent: Arc<dyn RemoteAgent>) {
        self.agents
            .write()
            .expect("directory lock")
            .insert(endpoint.to_string(), agent);
    }
}

impl RemoteConnector for AgentDirectory {
    fn connect(&self, endpoint: &str) -> Result<Arc<dyn RemoteAgent>, ProtocolError> {
        if let Some(a) = self.agents.read().expect("directory lock").get(endpoint) {
            return Ok(a.clone());
        }
        self.fallback
            .as_ref()
            .and_then(|f| f(endpoint))
            .ok_or_else(|| ProtocolError::Unreachable(format!("no agent at {endpoint}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandlerReply {
    pub reply: String,
    pub ended: bool,
    pub report: Option<DialogReport>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HandlerError {
    #[error("refused: {0}")]
    Refused(String),
    #[error("failed: {0}")]
    Failed(String),
}

/// What a third party implements to expose a text remote agent.
pub trait AgentHandler: Send + Sync {
    fn name(&self) -> &str;
    fn on_new_call(&self, token: &str, user_id: &str, s0: &InitialState) -> Result<String, HandlerError>;
    fn on_next(&self, token: &str, utt: &str) -> Result<HandlerReply, HandlerError>;
}

pub fn now_millis() -> i64 {
    chrono::Utc::now().timestamp_millis()
}

#[derive(Debug)]
struct HostedSession {
    open: bool,
    user_turns: Vec<ReportTurn>,
}

/// Session bookkeeping for the server side: issues tokens, rejects unknown
/// or closed sessions, serializes calls per token, and substitutes a minimal
/// report when a handler ends a session without one.
pub struct SessionHost {
    handler: Arc<dyn AgentHandler>,
    sessions: Mutex<HashMap<String, Arc<Mutex<HostedSession>>>>,
}

impl SessionHost {
    pub fn new(handler: Arc<dyn AgentHandler>) -> Self {
        SessionHost {
            handler,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn handler(&self) -> &Arc<dyn AgentHandler> {
        &self.handler
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    pub fn new_call(&self, req: &NewCallRequest) -> Result<NewCallResponse, ProtocolError> {
        if req.s0.known_slots.values().any(|s| !(0.0..=1.0).contains(&s.conf)) {
            return Err(ProtocolError::Malformed("slot confidence outside [0, 1]".into()));
        }
        let token = uuid::Uuid::new_v4().simple().to_string();
        let reply = self
            .handler
            .on_new_call(&token, &req.user_id, &req.s0)
            .map_err(|e| match e {
                HandlerError::Refused(m) => ProtocolError::AgentRefused(m),
                HandlerError::Failed(m) => ProtocolError::AgentFailed(m),
            })?;
        self.sessions.lock().expect("session map").insert(
            token.clone(),
            Arc::new(Mutex::new(HostedSession {
                open: true,
                user_turns: Vec::new(),
            })),
        );
        Ok(NewCallResponse {
            v: PROTOCOL_VERSION,
            token,
            reply,
        })
    }

    pub fn next(&self, req: &NextRequest) -> Result<NextResponse, ProtocolError> {
        let entry = self
            .sessions
            .lock()
            .expect("session map")
            .get(&req.token)
            .cloned()
            .ok_or_else(|| ProtocolError::SessionUnknown(req.token.clone()))?;
        let mut session = entry.lock().expect("session entry");
        if !session.open {
            return Err(ProtocolError::SessionUnknown(req.token.clone()));
        }
        session.user_turns.push(ReportTurn {
            speaker: Speaker::User,
            text: req.utt.clone(),
            timestamp: now_millis(),
        });
        let reply = self.handler.on_next(&req.token, &req.utt).map_err(|e| match e {
            HandlerError::Refused(m) => ProtocolError::AgentRefused(m),
            HandlerError::Failed(m) => ProtocolError::AgentFailed(m),
        })?;
        let report = if reply.ended {
            session.open = false;
            self.sessions.lock().expect("session map").remove(&req.token);
            Some(reply.report.unwrap_or_else(|| {
                log::warn!(
                    "agent `{}` ended session {} without a report; substituting one",
                    self.handler.name(),
                    req.token
                );
                let mut extras = BTreeMap::new();
                extras.insert("substituted".to_string(), serde_json::Value::Bool(true));
                DialogReport {
                    session_token: req.token.clone(),
                    turns: session.user_turns.clone(),
                    outcome: Outcome::Error,
                    extras,
                }
            }))
        } else {
            None
        };
        Ok(NextResponse {
            v: PROTOCOL_VERSION,
            reply: reply.reply,
            ended: reply.ended,
            report,
        })
    }
}

/// A [`SessionHost`] reached without a network hop. Every message still goes
/// through the JSON codec so in-process and HTTP agents see identical bytes.
pub struct InProcessAgent {
    host: SessionHost,
}

impl InProcessAgent {
    pub fn new(handler: Arc<dyn AgentHandler>) -> Self {
        InProcessAgent {
            host: SessionHost::new(handler),
        }
    }

    pub fn host(&self) -> &SessionHost {
        &self.host
    }
}

impl RemoteAgent for InProcessAgent {
    fn new_call(&self, user_id: &str, s0: &InitialState) -> Result<NewCallResponse, ProtocolError> {
        let req: NewCallRequest = decode(&encode(&NewCallRequest::new(user_id, s0.clone())))?;
        let resp = self.host.new_call(&req)?;
        decode(&encode(&resp))
    }

    fn next(&self, token: &str, utt: &str) -> Result<NextResponse, ProtocolError> {
        let req: NextRequest = decode(&encode(&NextRequest::new(token, utt)))?;
        let resp = self.host.next(&req)?;
        decode(&encode(&resp))
    }
}
