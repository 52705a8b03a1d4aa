use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use dialhub_cli::{conformance, local_portal, repl, replay, CliError, Script};
use dialhub_core::config::Config;
use dialhub_core::portal::PortalSettings;
use dialhub_core::protocol::conformance::{Check, ConformanceProbe, Fault, FaultyAgent};
use dialhub_net::{agent_router, spawn};
use proptest::prelude::*;

const TOUR_TURNS: [&str; 7] = [
    "what is the weather",
    "Pittsburgh",
    "tomorrow",
    "Recommend a restaurant in Pittsburgh",
    "thai",
    "cheap",
    "goodbye",
];

fn tour_script() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scripts/tour.script")
}

fn dialhub(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_dialhub"))
        .args(args)
        .env("RUST_LOG", "off")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn dialhub");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

#[test]
fn shipped_tour_script_passes() {
    let o = dialhub(&["replay", tour_script().to_str().unwrap()], "");
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("7 of 7 steps passed"));
}

#[test]
fn wrong_agent_fails_that_step() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.script");
    std::fs::write(&path, "> what is the weather\n@ portal\n> Pittsburgh\n@ bistro\n").unwrap();
    let o = dialhub(&["replay", path.to_str().unwrap()], "");
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL  1 > Pittsburgh"), "{}", stdout(&o));

    let config = Config::shipped().unwrap();
    let portal = local_portal(&config, PortalSettings::default()).unwrap();
    let script = Script::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(replay(&script, &portal).unwrap().failed, [1]);
}

#[test]
fn empty_script_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.script");
    std::fs::write(&path, "# nothing here\n").unwrap();
    let o = dialhub(&["replay", path.to_str().unwrap()], "");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no steps"));
}

#[test]
fn steps_after_the_end_fail() {
    let config = Config::shipped().unwrap();
    let portal = local_portal(&config, PortalSettings::default()).unwrap();
    let script = Script::parse("> goodbye\n~ Goodbye!\n> hello\n").unwrap();
    let report = replay(&script, &portal).unwrap();
    assert_eq!(report.failed, [1]);
}

#[test]
fn repl_reproduces_tour() {
    let input = TOUR_TURNS.join("\n") + "\n";
    let o = dialhub(&["repl"], &input);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1 + TOUR_TURNS.len(), "{out}");
    assert!(lines[0].starts_with("[portal] Hello"));
    assert_eq!(lines[1], "[portal] Which city?");
    assert_eq!(lines[2], "[portal] For which day?");
    assert!(lines[3].contains("light rain"));
    assert!(lines[4].starts_with("[bistro] ") && lines[4].contains("What kind of food"));
    assert!(lines[5].starts_with("[bistro] "));
    assert!(lines[6].starts_with("[portal] How about Thai Cuisine?"));
    assert_eq!(lines[7], "[portal] Goodbye!");
}

#[test]
fn repl_library_matches_binary() {
    let config = Config::shipped().unwrap();
    let portal = local_portal(&config, PortalSettings::default()).unwrap();
    let input = TOUR_TURNS.join("\n");
    let mut out = Vec::new();
    repl(&portal, input.as_bytes(), &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), stdout(&dialhub(&["repl"], &input)));
}

#[test]
fn repl_immediate_eof() {
    let o = dialhub(&["repl"], "");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn bad_config_exits_2() {
    let o = dialhub(&["repl", "--ontology", "/nonexistent/ontology.toml"], "");
    assert_eq!(o.status.code(), Some(2));
    let o = dialhub(&["repl", "--endpoint", "bistro"], "");
    assert_eq!(o.status.code(), Some(2));
    let o = dialhub(&["repl", "--chat-threshold", "1.5"], "");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn conformance_against_http_agents() {
    let config = Config::shipped().unwrap();
    let good = spawn(agent_router(config.bistro()), any_port()).unwrap();
    let o = dialhub(&["conformance", &good.url()], "");
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 4);

    let no_report = spawn(
        agent_router(Arc::new(FaultyAgent::new(config.bistro(), Fault::OmitReport))),
        any_port(),
    )
    .unwrap();
    let o = dialhub(&["conformance", &no_report.url()], "");
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL report-on-end"), "{}", stdout(&o));
    let report = conformance(&no_report.url(), &ConformanceProbe::restaurant()).unwrap();
    assert_eq!(report.failed(), [Check::ReportOnEnd]);

    let sticky = spawn(
        agent_router(Arc::new(FaultyAgent::new(config.bistro(), Fault::AcceptAfterEnd))),
        any_port(),
    )
    .unwrap();
    let report = conformance(&sticky.url(), &ConformanceProbe::restaurant()).unwrap();
    assert_eq!(report.failed(), [Check::Lifecycle]);
}

#[test]
fn conformance_unreachable_exits_3() {
    let addr = std::net::TcpListener::bind(any_port()).unwrap().local_addr().unwrap();
    let url = format!("http://{addr}");
    assert_eq!(dialhub(&["conformance", &url], "").status.code(), Some(3));
    assert!(matches!(
        conformance(&url, &ConformanceProbe::restaurant()),
        Err(CliError::Unreachable(_))
    ));
}

#[test]
fn portal_reaches_bistro_over_http() {
    let config = Config::shipped().unwrap();
    let agent = spawn(agent_router(config.bistro()), any_port()).unwrap();
    let endpoint = format!("bistro={}", agent.url());
    let o = dialhub(&["replay", tour_script().to_str().unwrap(), "--endpoint", &endpoint], "");
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn replay_is_deterministic() {
    let a = dialhub(&["replay", tour_script().to_str().unwrap(), "--seed", "7"], "");
    let b = dialhub(&["replay", tour_script().to_str().unwrap(), "--seed", "7"], "");
    assert_eq!(stdout(&a), stdout(&b));
}

fn render(steps: &[(String, Option<String>, Option<String>)]) -> String {
    let mut s = String::new();
    for (send, contains, agent) in steps {
        s += &format!("> {send}\n");
        if let Some(c) = contains {
            s += &format!("~ {c}\n");
        }
        if let Some(a) = agent {
            s += &format!("# note\n@ {a}\n");
        }
    }
    s
}

proptest! {
    #[test]
    fn script_round_trips(steps in prop::collection::vec(
        ("[a-z][a-z ]{0,20}[a-z]", prop::option::of("[A-Za-z?][A-Za-z ?]{0,10}[a-z?]"), prop::option::of("[a-z]{1,8}")),
        1..8,
    )) {
        let script = Script::parse(&render(&steps)).unwrap();
        prop_assert_eq!(script.steps.len(), steps.len());
        for (step, (send, contains, agent)) in script.steps.iter().zip(&steps) {
            prop_assert_eq!(&step.send, send);
            prop_assert_eq!(&step.expect_contains, contains);
            prop_assert_eq!(&step.expect_agent, agent);
        }
    }
}
