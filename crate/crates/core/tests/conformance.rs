use std::sync::Arc;

use dialhub_core::config::Config;
use dialhub_core::protocol::conformance::{run_conformance, Check, ConformanceProbe, Fault, FaultyAgent};
use dialhub_core::protocol::{
    AgentHandler, HandlerError, HandlerReply, InProcessAgent, InitialState, NewCallResponse, NextResponse,
    ProtocolError, RemoteAgent,
};

fn bistro() -> Arc<dyn RemoteAgent> {
    Config::shipped().unwrap().bistro()
}

#[test]
fn reference_agent_passes_everything() {
    let report = run_conformance(bistro().as_ref(), &ConformanceProbe::restaurant()).unwrap();
    assert!(report.all_passed(), "{report}");
    assert_eq!(report.results.len(), Check::ALL.len());
}

#[test]
fn missing_report_fails_only_that_check() {
    let agent = FaultyAgent::new(bistro(), Fault::OmitReport);
    let report = run_conformance(&agent, &ConformanceProbe::restaurant()).unwrap();
    assert_eq!(report.failed(), [Check::ReportOnEnd], "{report}");
}

#[test]
fn answering_after_end_fails_lifecycle() {
    let agent = FaultyAgent::new(bistro(), Fault::AcceptAfterEnd);
    let report = run_conformance(&agent, &ConformanceProbe::restaurant()).unwrap();
    assert_eq!(report.failed(), [Check::Lifecycle], "{report}");
}

/// Ends after two turns and never looks at s0.
struct Forgetful;

impl AgentHandler for Forgetful {
    fn name(&self) -> &str {
        "forgetful"
    }

    fn on_new_call(&self, _: &str, _: &str, _: &InitialState) -> Result<String, HandlerError> {
        Ok("Where are you?".into())
    }

    fn on_next(&self, _: &str, utt: &str) -> Result<HandlerReply, HandlerError> {
        Ok(HandlerReply {
            reply: format!("ok, {utt}"),
            ended: utt == "thai",
            report: None,
        })
    }
}

#[test]
fn agent_ignoring_s0_fails_skip_and_gets_substituted_report() {
    let agent = InProcessAgent::new(Arc::new(Forgetful));
    let report = run_conformance(&agent, &ConformanceProbe::restaurant()).unwrap();
    let mut failed = report.failed();
    failed.sort_by_key(|c| c.name());
    assert_eq!(failed, [Check::ReportOnEnd, Check::InitialStateSkip], "{report}");
}

struct Down;

impl RemoteAgent for Down {
    fn new_call(&self, _: &str, _: &InitialState) -> Result<NewCallResponse, ProtocolError> {
        Err(ProtocolError::Unreachable("connection refused".into()))
    }

    fn next(&self, _: &str, _: &str) -> Result<NextResponse, ProtocolError> {
        Err(ProtocolError::Unreachable("connection refused".into()))
    }
}

#[test]
fn unreachable_agent_is_an_error() {
    assert!(matches!(
        run_conformance(&Down, &ConformanceProbe::restaurant()),
        Err(ProtocolError::Unreachable(_))
    ));
}
