//! The portal: session manager and per-turn pipeline.
//!
//! A user turn flows `nlu -> dm -> nlg` over the [`Bus`], strictly one turn
//! at a time per session. A second request that arrives while a turn is in
//! flight is rejected with [`PortalError::Busy`] rather than queued.

pub mod bus;
pub mod transcript;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::act::SystemAction;
use crate::engine::{DialogState, Engine, EngineError};
use crate::nlg::{self, NlgError, TemplateSet};
use crate::nlu::{self, Lexicon};

pub use bus::{Bus, BusMessage, Tap, Topic};
pub use transcript::{read_log, EmbeddedReport, EntryKind, TranscriptEntry, TranscriptLog};

pub const PORTAL_NAME: &str = "portal";

/// Idle time after which a session may be expired.
pub fn default_session_ttl() -> Duration {
    Duration::minutes(30)
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PortalError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("a turn for session `{0}` is already in flight")]
    Busy(String),
    #[error("session `{0}` has ended")]
    SessionEnded(String),
    #[error("internal error (correlation id {correlation_id})")]
    Internal { correlation_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub reply: String,
    pub active_agent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnReply {
    pub reply: String,
    pub active_agent: String,
    pub ended: bool,
}

#[derive(Debug, Clone)]
pub struct PortalSettings {
    /// The portal's own agent name, reported while no remote agent holds the floor.
    pub agent_name: String,
    /// Base seed for template choice; the turn number is added per turn.
    pub seed: u64,
    pub session_ttl: Duration,
    /// How long transcripts of expired sessions stay readable.
    pub retention: Duration,
    /// Utterance relayed to an open remote session when the portal closes it.
    pub close_sentinel: String,
}

impl Default for PortalSettings {
    fn default() -> Self {
        PortalSettings {
            agent_name: PORTAL_NAME.into(),
            seed: 0,
            session_ttl: default_session_ttl(),
            retention: Duration::hours(24),
            close_sentinel: "goodbye".into(),
        }
    }
}

/// One portal session.
#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub session_id: String,
    pub state: DialogState,
    pub created_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
    pub active_agent_name: String,
    pub transcript: Vec<TranscriptEntry>,
    /// Bus sequence number of the latest request.
    pub seq: u64,
}

struct SessionSlot {
    busy: AtomicBool,
    session: Mutex<Session>,
}

/// Holds a session's in-flight flag until dropped.
struct BusyGuard<'a>(&'a AtomicBool);

impl<'a> BusyGuard<'a> {
    fn acquire(flag: &'a AtomicBool) -> Option<Self> {
        flag.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| BusyGuard(flag))
    }
}

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

struct Retired {
    expired_at: DateTime<Utc>,
    transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Error)]
enum StageError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Nlg(#[from] NlgError),
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

pub struct Portal {
    engine: Arc<Engine>,
    lexicon: Arc<Lexicon>,
    templates: Arc<TemplateSet>,
    settings: PortalSettings,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    retired: Mutex<HashMap<String, Retired>>,
    bus: Bus,
    log: Option<TranscriptLog>,
    clock: Clock,
}

impl Portal {
    pub fn new(engine: Engine, lexicon: Arc<Lexicon>, templates: Arc<TemplateSet>, settings: PortalSettings) -> Self {
        Portal {
            engine: Arc::new(engine),
            lexicon,
            templates,
            settings,
            sessions: RwLock::new(HashMap::new()),
            retired: Mutex::new(HashMap::new()),
            bus: Bus::new(),
            log: None,
            clock: Arc::new(Utc::now),
        }
    }

    pub fn with_log(mut self, log: TranscriptLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn settings(&self) -> &PortalSettings {
        &self.settings
    }

    pub fn agent_name(&self) -> &str {
        &self.settings.agent_name
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map").len()
    }

    fn slot(&self, session_id: &str) -> Result<Arc<SessionSlot>, PortalError> {
        self.sessions
            .read()
            .expect("session map")
            .get(session_id)
            .cloned()
            .ok_or_else(|| PortalError::UnknownSession(session_id.to_string()))
    }

    fn internal(&self, session_id: &str, message: String) -> PortalError {
        let correlation_id = uuid::Uuid::new_v4().simple().to_string();
        log::error!("session {session_id}: internal error {correlation_id}: {message}");
        PortalError::Internal {
            correlation_id,
            message,
        }
    }

    fn active_agent_of(&self, state: &DialogState) -> String {
        state
            .active_remote
            .as_ref()
            .map(|r| r.concept.clone())
            .unwrap_or_else(|| self.settings.agent_name.clone())
    }

    fn write_log(&self, entries: &[TranscriptEntry]) {
        if let Some(log) = &self.log {
            if let Err(e) = log.append(entries) {
                log::error!("transcript log {}: {e}", log.dir().display());
            }
        }
    }

    fn render(&self, session_id: &str, seq: u64, action: &SystemAction, seed: u64) -> Result<String, StageError> {
        self.bus.call(Topic::NlgRequest, session_id, seq, to_json(action), || {
            let text = nlg::render(action, &self.templates, seed)?;
            let v = json!({ "reply": text });
            Ok((text, v))
        })
    }

    pub fn create_session(&self) -> Result<CreatedSession, PortalError> {
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let now = (self.clock)();
        let opened = catch_unwind(AssertUnwindSafe(|| -> Result<_, StageError> {
            let (state, action) = self.bus.call(Topic::DmRequest, &session_id, 1, json!({ "start": true }), || {
                let (state, action) = self.engine.start_session(&session_id)?;
                let v = to_json(&action);
                Ok::<_, StageError>(((state, action.clone()), v))
            })?;
            let reply = self.render(&session_id, 2, &action, self.settings.seed)?;
            Ok((state, action, reply))
        }));
        let (state, action, reply) = match opened {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => return Err(self.internal(&session_id, e.to_string())),
            Err(p) => return Err(self.internal(&session_id, panic_message(p))),
        };
        let agent = self.active_agent_of(&state);
        let greeting = TranscriptEntry {
            session_id: session_id.clone(),
            index: 0,
            kind: EntryKind::Greeting,
            agent: agent.clone(),
            text: reply.clone(),
            acts: action.acts,
            reports: Vec::new(),
            timestamp: now,
        };
        self.write_log(std::slice::from_ref(&greeting));
        let session = Session {
            session_id: session_id.clone(),
            state,
            created_at: now,
            last_active: now,
            active_agent_name: agent.clone(),
            transcript: vec![greeting],
            seq: 2,
        };
        self.sessions.write().expect("session map").insert(
            session_id.clone(),
            Arc::new(SessionSlot {
                busy: AtomicBool::new(false),
                session: Mutex::new(session),
            }),
        );
        log::info!("session {session_id}: created");
        Ok(CreatedSession {
            session_id,
            reply,
            active_agent: agent,
        })
    }

    pub fn post_utterance(&self, session_id: &str, text: &str) -> Result<TurnReply, PortalError> {
        let slot = self.slot(session_id)?;
        let _guard = BusyGuard::acquire(&slot.busy).ok_or_else(|| PortalError::Busy(session_id.to_string()))?;
        let mut session = slot.session.lock().unwrap_or_else(|e| e.into_inner());
        if session.state.ended {
            return Err(PortalError::SessionEnded(session_id.to_string()));
        }
        match catch_unwind(AssertUnwindSafe(|| self.turn(&mut session, text))) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(self.internal(session_id, e.to_string())),
            Err(p) => Err(self.internal(session_id, panic_message(p))),
        }
    }

    fn turn(&self, s: &mut Session, text: &str) -> Result<TurnReply, StageError> {
        let now = (self.clock)();
        let addressed = s.active_agent_name.clone();
        let reports_before = s.state.remote_reports.len();
        let id = s.session_id.clone();

        s.seq += 1;
        let frame = self
            .bus
            .call(Topic::NluRequest, &id, s.seq, json!({ "text": text }), || {
                let frame = nlu::parse(text, &self.lexicon);
                let v = to_json(&frame);
                Ok::<_, StageError>((frame, v))
            })?;

        s.seq += 1;
        let state = &mut s.state;
        let action = self.bus.call(Topic::DmRequest, &id, s.seq, to_json(&frame), || {
            let action = self.engine.run_turn(state, &frame)?;
            let v = to_json(&action);
            Ok::<_, StageError>((action, v))
        })?;

        s.seq += 1;
        let seed = self.settings.seed.wrapping_add(u64::from(s.state.turn_count));
        let reply = self.render(&id, s.seq, &action, seed)?;

        let agent = self.active_agent_of(&s.state);
        s.active_agent_name = agent.clone();
        s.last_active = now;
        let reports = s.state.remote_reports[reports_before..]
            .iter()
            .map(EmbeddedReport::from)
            .collect();
        let base = s.transcript.len();
        let entries = [
            TranscriptEntry {
                session_id: id.clone(),
                index: base,
                kind: EntryKind::User,
                agent: addressed,
                text: text.to_string(),
                acts: Vec::new(),
                reports: Vec::new(),
                timestamp: now,
            },
            TranscriptEntry {
                session_id: id,
                index: base + 1,
                kind: EntryKind::System,
                agent: agent.clone(),
                text: reply.clone(),
                acts: action.acts,
                reports,
                timestamp: now,
            },
        ];
        self.write_log(&entries);
        s.transcript.extend(entries);
        Ok(TurnReply {
            reply,
            active_agent: agent,
            ended: s.state.ended,
        })
    }

    /// Full history of a live session, or of one expired within the
    /// retention window.
    pub fn get_transcript(&self, session_id: &str) -> Result<Vec<TranscriptEntry>, PortalError> {
        if let Ok(slot) = self.slot(session_id) {
            let session = slot.session.lock().unwrap_or_else(|e| e.into_inner());
            return Ok(session.transcript.clone());
        }
        self.retired
            .lock()
            .expect("retired sessions")
            .get(session_id)
            .map(|r| r.transcript.clone())
            .ok_or_else(|| PortalError::UnknownSession(session_id.to_string()))
    }

    /// Runs `f` on a live session; waits for an in-flight turn to finish.
    pub fn inspect<R>(&self, session_id: &str, f: impl FnOnce(&Session) -> R) -> Result<R, PortalError> {
        let slot = self.slot(session_id)?;
        let session = slot.session.lock().unwrap_or_else(|e| e.into_inner());
        Ok(f(&session))
    }

    /// Removes sessions idle for at least `ttl`, closing any open remote
    /// session with the close sentinel first. Sessions with a turn in
    /// flight are left alone. Returns how many were expired.
    pub fn expire_sessions(&self, now: DateTime<Utc>, ttl: Duration) -> usize {
        let slots: Vec<(String, Arc<SessionSlot>)> = self
            .sessions
            .read()
            .expect("session map")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut expired = 0;
        for (id, slot) in slots {
            let Some(_guard) = BusyGuard::acquire(&slot.busy) else {
                continue;
            };
            let mut session = slot.session.lock().unwrap_or_else(|e| e.into_inner());
            if now - session.last_active < ttl {
                continue;
            }
            self.sessions.write().expect("session map").remove(&id);
            let mut reports = Vec::new();
            if session.state.active_remote.is_some() {
                let sentinel = self.settings.close_sentinel.clone();
                let closed = catch_unwind(AssertUnwindSafe(|| self.engine.close_remote(&mut session.state, &sentinel)));
                match closed {
                    Ok(Some(record)) => reports.push(EmbeddedReport::from(&record)),
                    Ok(None) => {}
                    Err(p) => log::error!("session {id}: closing remote panicked: {}", panic_message(p)),
                }
            }
            let entry = TranscriptEntry {
                session_id: id.clone(),
                index: session.transcript.len(),
                kind: EntryKind::Expired,
                agent: self.settings.agent_name.clone(),
                text: String::new(),
                acts: Vec::new(),
                reports,
                timestamp: now,
            };
            self.write_log(std::slice::from_ref(&entry));
            session.transcript.push(entry);
            session.active_agent_name = self.settings.agent_name.clone();
            self.retired.lock().expect("retired sessions").insert(
                id.clone(),
                Retired {
                    expired_at: now,
                    transcript: std::mem::take(&mut session.transcript),
                },
            );
            log::info!("session {id}: expired");
            expired += 1;
        }
        let retention = self.settings.retention;
        self.retired
            .lock()
            .expect("retired sessions")
            .retain(|_, r| now - r.expired_at <= retention);
        expired
    }

    /// [`Portal::expire_sessions`] with the configured TTL and the portal clock.
    pub fn expire_idle(&self) -> usize {
        self.expire_sessions((self.clock)(), self.settings.session_ttl)
    }
}
