//! In-process message bus between the portal stages.
//!
//! Every stage call is a request/result pair sharing one sequence number.
//! Sequence numbers are per session and strictly increasing, messages are
//! delivered to taps synchronously in publication order (FIFO per session,
//! at most once).

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topic {
    #[serde(rename = "nlu.request")]
    NluRequest,
    #[serde(rename = "nlu.result")]
    NluResult,
    #[serde(rename = "dm.request")]
    DmRequest,
    #[serde(rename = "dm.result")]
    DmResult,
    #[serde(rename = "nlg.request")]
    NlgRequest,
    #[serde(rename = "nlg.result")]
    NlgResult,
}

impl Topic {
    pub const ALL: [Topic; 6] = [
        Topic::NluRequest,
        Topic::NluResult,
        Topic::DmRequest,
        Topic::DmResult,
        Topic::NlgRequest,
        Topic::NlgResult,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::NluRequest => "nlu.request",
            Topic::NluResult => "nlu.result",
            Topic::DmRequest => "dm.request",
            Topic::DmResult => "dm.result",
            Topic::NlgRequest => "nlg.request",
            Topic::NlgResult => "nlg.result",
        }
    }

    /// The result topic answering a request topic.
    pub fn result(self) -> Option<Topic> {
        match self {
            Topic::NluRequest => Some(Topic::NluResult),
            Topic::DmRequest => Some(Topic::DmResult),
            Topic::NlgRequest => Some(Topic::NlgResult),
            _ => None,
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusMessage {
    pub topic: Topic,
    pub session_id: String,
    pub seq: u64,
    pub payload: Value,
}

pub type Tap = Arc<dyn Fn(&BusMessage) + Send + Sync>;

#[derive(Default)]
pub struct Bus {
    taps: RwLock<Vec<Tap>>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Observes every message published from now on.
    pub fn tap(&self, tap: Tap) {
        self.taps.write().expect("bus taps").push(tap);
    }

    fn publish(&self, msg: BusMessage) {
        for tap in self.taps.read().expect("bus taps").iter() {
            tap(&msg);
        }
    }

    /// Publishes `request`, runs `stage`, and publishes exactly one result
    /// with the same sequence number. A failed stage still gets a result,
    /// carrying `{"error": ...}`.
    pub fn call<T, E: fmt::Display>(
        &self,
        request: Topic,
        session_id: &str,
        seq: u64,
        payload: Value,
        stage: impl FnOnce() -> Result<(T, Value), E>,
    ) -> Result<T, E> {
        let result_topic = request.result().expect("request topic");
        self.publish(BusMessage {
            topic: request,
            session_id: session_id.to_string(),
            seq,
            payload,
        });
        let (out, payload) = match stage() {
            Ok((t, v)) => (Ok(t), v),
            Err(e) => {
                let v = serde_json::json!({ "error": e.to_string() });
                (Err(e), v)
            }
        };
        self.publish(BusMessage {
            topic: result_topic,
            session_id: session_id.to_string(),
            seq,
            payload,
        });
        out
    }
}
