//! Black-box conformance checks for a text remote agent.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, Mutex};

use super::{InitialState, NewCallResponse, NextResponse, Outcome, ProtocolError, RemoteAgent, SlotValue};

/// How to drive the agent under test.
#[derive(Debug, Clone)]
pub struct ConformanceProbe {
    pub user_id: String,
    /// Utterances sent in order until the agent ends the session. When the
    /// script runs out, `fallback_utterance` is repeated.
    pub script: Vec<String>,
    pub fallback_utterance: String,
    pub max_turns: usize,
    /// A slot whose presence in `s0` should change the agent's opening.
    pub skip_slot: (String, SlotValue),
}

impl ConformanceProbe {
    /// Probe matching the bundled restaurant agent.
    pub fn restaurant() -> Self {
        ConformanceProbe {
            user_id: "conformance".into(),
            script: vec!["Pittsburgh".into(), "thai".into(), "cheap".into()],
            fallback_utterance: "never mind".into(),
            max_turns: 12,
            skip_slot: (
                "location".into(),
                SlotValue {
                    value: "Pittsburgh".into(),
                    conf: 0.95,
                },
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// newcall, then next until ended, then the closed token is rejected.
    Lifecycle,
    /// The final reply carries a complete, non-error report.
    ReportOnEnd,
    /// A token that was never issued is rejected.
    ClosedSessionRejection,
    /// A known slot in `s0` changes the opening question.
    InitialStateSkip,
}

impl Check {
    pub const ALL: [Check; 4] = [
        Check::Lifecycle,
        Check::ReportOnEnd,
        Check::ClosedSessionRejection,
        Check::InitialStateSkip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Lifecycle => "lifecycle",
            Check::ReportOnEnd => "report-on-end",
            Check::ClosedSessionRejection => "closed-session-rejection",
            Check::InitialStateSkip => "s0-skip",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ConformanceReport {
    pub results: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failed(&self) -> Vec<Check> {
        self.results.iter().filter(|r| !r.passed).map(|r| r.check).collect()
    }

    pub fn passed(&self, check: Check) -> bool {
        self.results.iter().any(|r| r.check == check && r.passed)
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            let mark = if r.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{mark} {:<26} {}", r.check.name(), r.detail)?;
        }
        Ok(())
    }
}

fn result(check: Check, outcome: Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult {
            check,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            check,
            passed: false,
            detail,
        },
    }
}

/// Runs every check. Fails outright only if the agent cannot be reached.
pub fn run_conformance(
    agent: &dyn RemoteAgent,
    probe: &ConformanceProbe,
) -> Result<ConformanceReport, ProtocolError> {
    let opening = match agent.new_call(&probe.user_id, &InitialState::default()) {
        Ok(r) => r,
        Err(e @ ProtocolError::Unreachable(_)) => return Err(e),
        Err(e) => {
            let detail = format!("newcall failed: {e}");
            return Ok(ConformanceReport {
                results: Check::ALL
                    .iter()
                    .map(|&c| result(c, Err(detail.clone())))
                    .collect(),
            });
        }
    };

    let mut results = Vec::new();

    // Drive one session to its end.
    let mut sent = Vec::new();
    let mut final_report = None;
    let mut lifecycle: Result<String, String> = Err("session never ended".into());
    if opening.token.is_empty() || opening.reply.is_empty() {
        lifecycle = Err("newcall returned an empty token or reply".into());
    } else {
        for turn in 0..probe.max_turns {
            let utt = probe
                .script
                .get(turn)
                .cloned()
                .unwrap_or_else(|| probe.fallback_utterance.clone());
            sent.push(utt.clone());
            match agent.next(&opening.token, &utt) {
                Ok(resp) if resp.ended => {
                    final_report = Some(resp.report);
                    lifecycle = match agent.next(&opening.token, "are you still there?") {
                        Err(ProtocolError::SessionUnknown(_)) => {
                            Ok(format!("ended after {} turns; closed token rejected", turn + 1))
                        }
                        Ok(_) => Err("agent accepted next after end of session".into()),
                        Err(e) => Err(format!("next after end failed with {e}, expected session_unknown")),
                    };
                    break;
                }
                Ok(resp) if resp.report.is_some() => {
                    lifecycle = Err("report sent before end of session".into());
                    break;
                }
                Ok(_) => {}
                Err(e) => {
                    lifecycle = Err(format!("next failed on turn {}: {e}", turn + 1));
                    break;
                }
            }
        }
    }
    results.push(result(Check::Lifecycle, lifecycle));

    let report_check = match final_report {
        None => Err("session did not end, no report to check".into()),
        Some(None) => Err("final reply carried no report".into()),
        Some(Some(report)) => {
            let texts = report.user_texts();
            if report.outcome == Outcome::Error {
                Err("report outcome is `error` (missing or substituted report)".into())
            } else if texts != sent.iter().map(String::as_str).collect::<Vec<_>>() {
                Err(format!("report user turns {texts:?} differ from sent {sent:?}"))
            } else if !report.is_time_ordered() {
                Err("report turns out of timestamp order".into())
            } else if report.session_token != opening.token {
                Err("report token differs from session token".into())
            } else {
                Ok(format!("{} turns reported", report.turns.len()))
            }
        }
    };
    results.push(result(Check::ReportOnEnd, report_check));

    let bogus = format!("never-issued-{}", uuid::Uuid::new_v4().simple());
    let rejection = match agent.next(&bogus, "hello") {
        Err(ProtocolError::SessionUnknown(_)) => Ok("unknown token rejected".into()),
        Ok(_) => Err("agent accepted a token it never issued".into()),
        Err(e) => Err(format!("expected session_unknown, got {e}")),
    };
    results.push(result(Check::ClosedSessionRejection, rejection));

    let (slot, value) = &probe.skip_slot;
    let skip = agent
        .new_call(&probe.user_id, &InitialState::default().with_slot(slot, &value.value, value.conf))
        .map_err(|e| format!("newcall with s0 failed: {e}"))
        .and_then(|with| {
            if with.reply != opening.reply {
                Ok(format!("opening changed with `{slot}` known"))
            } else {
                Err(format!("opening `{}` ignores known slot `{slot}`", with.reply))
            }
        });
    results.push(result(Check::InitialStateSkip, skip));

    Ok(ConformanceReport { results })
}

/// A protocol violation [`FaultyAgent`] commits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Ends sessions without a report.
    OmitReport,
    /// Keeps answering a session after it ended.
    AcceptAfterEnd,
}

/// Wraps a well-behaved agent and breaks one rule of the protocol, for
/// exercising the checks above.
pub struct FaultyAgent {
    inner: Arc<dyn RemoteAgent>,
    fault: Fault,
    ended: Mutex<HashSet<String>>,
}

impl FaultyAgent {
    pub fn new(inner: Arc<dyn RemoteAgent>, fault: Fault) -> Self {
        FaultyAgent {
            inner,
            fault,
            ended: Mutex::new(HashSet::new()),
        }
    }
}

impl RemoteAgent for FaultyAgent {
    fn new_call(&self, user_id: &str, s0: &InitialState) -> Result<NewCallResponse, ProtocolError> {
        self.inner.new_call(user_id, s0)
    }

    fn next(&self, token: &str, utt: &str) -> Result<NextResponse, ProtocolError> {
        if self.fault == Fault::AcceptAfterEnd && self.ended.lock().expect("ended set").contains(token) {
            return Ok(NextResponse {
                v: super::PROTOCOL_VERSION,
                reply: "I'm still here.".into(),
                ended: false,
                report: None,
            });
        }
        let mut resp = self.inner.next(token, utt)?;
        if resp.ended {
            self.ended.lock().expect("ended set").insert(token.to_string());
            if self.fault == Fault::OmitReport {
                resp.report = None;
            }
        }
        Ok(resp)
    }
}
