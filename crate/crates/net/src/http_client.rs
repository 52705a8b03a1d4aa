//! HTTP client side of the remote agent protocol.

use std::sync::Arc;
use std::time::Duration;

use dialhub_core::protocol::{
    decode, encode, ErrorResponse, InitialState, NewCallRequest, NewCallResponse, NextRequest, NextResponse,
    ProtocolError, RemoteAgent,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// A text remote agent reached over HTTP at `base_url` (`POST {base}/newcall`,
/// `POST {base}/next`). Each call times out after [`DEFAULT_TIMEOUT`]; a call
/// that never reached the agent is retried once, a delivered one never.
pub struct HttpAgent {
    base: String,
    agent: ureq::Agent,
}

impl HttpAgent {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpAgent {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn post(&self, path: &str, body: &str) -> Result<String, ProtocolError> {
        let url = format!("{}/{path}", self.base);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let sent = self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(body);
            let mut resp = match sent {
                Ok(r) => r,
                Err(e) if attempt == 1 && not_delivered(&e) => {
                    log::warn!("{url}: {e}; retrying once");
                    continue;
                }
                Err(e) => return Err(ProtocolError::Unreachable(format!("{url}: {e}"))),
            };
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| ProtocolError::Unreachable(format!("{url}: reading body: {e}")))?;
            if status == 200 {
                return Ok(text);
            }
            return Err(match decode::<ErrorResponse>(&text) {
                Ok(err) => ProtocolError::from_response(err),
                Err(_) => ProtocolError::AgentFailed(format!("{url}: HTTP {status}")),
            });
        }
    }
}

/// True for failures that happen before the request could reach the agent.
fn not_delivered(e: &ureq::Error) -> bool {
    use std::io::ErrorKind;
    match e {
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => true,
        ureq::Error::Io(io) => matches!(
            io.kind(),
            ErrorKind::ConnectionRefused | ErrorKind::NotConnected | ErrorKind::AddrNotAvailable
        ),
        _ => false,
    }
}

impl RemoteAgent for HttpAgent {
    fn new_call(&self, user_id: &str, s0: &InitialState) -> Result<NewCallResponse, ProtocolError> {
        let body = self.post("newcall", &encode(&NewCallRequest::new(user_id, s0.clone())))?;
        decode(&body)
    }

    fn next(&self, token: &str, utt: &str) -> Result<NextResponse, ProtocolError> {
        let body = self.post("next", &encode(&NextRequest::new(token, utt)))?;
        decode(&body)
    }
}

/// Directory fallback that builds an [`HttpAgent`] for `http(s)://` endpoints.
pub fn http_fallback(endpoint: &str) -> Option<Arc<dyn RemoteAgent>> {
    (endpoint.starts_with("http://") || endpoint.starts_with("https://"))
        .then(|| Arc::new(HttpAgent::new(endpoint)) as Arc<dyn RemoteAgent>)
}
