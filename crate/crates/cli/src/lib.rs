//! Operator harness: an interactive loop against an in-process portal,
//! scripted replay with assertions, and conformance runs against remote
//! agents over HTTP.
//!
//! Script format, one directive per line:
//!
//! ```text
//! # comment
//! > user text          send this utterance
//! ~ expected substring the reply must contain it
//! @ expected agent     the reply must come from this agent
//! ```
//!
//! `~` and `@` lines attach to the most recent `>` line, at most one of each.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dialhub_core::config::{Config, ConfigError};
use dialhub_core::portal::{Portal, PortalError, PortalSettings};
use dialhub_core::protocol::conformance::{run_conformance, ConformanceProbe, ConformanceReport};
use dialhub_core::protocol::{ProtocolError, RemoteConnector};
use dialhub_net::{http_fallback, HttpAgent};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub send: String,
    pub expect_contains: Option<String>,
    pub expect_agent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    pub steps: Vec<Step>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScriptParseError {
    /// 1-based; 0 for whole-script problems.
    pub line: usize,
    pub message: String,
}

impl ScriptParseError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ScriptParseError {
            line,
            message: message.into(),
        }
    }
}

impl Script {
    pub fn parse(source: &str) -> Result<Script, ScriptParseError> {
        let mut steps: Vec<Step> = Vec::new();
        for (i, raw) in source.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (marker, rest) = line.split_at(1);
            let text = rest.trim().to_string();
            if text.is_empty() {
                return Err(ScriptParseError::at(n, format!("`{marker}` needs text")));
            }
            match marker {
                ">" => steps.push(Step {
                    send: text,
                    expect_contains: None,
                    expect_agent: None,
                }),
                "~" | "@" => {
                    let step = steps
                        .last_mut()
                        .ok_or_else(|| ScriptParseError::at(n, "expectation before any `>` line"))?;
                    let slot = if marker == "~" {
                        &mut step.expect_contains
                    } else {
                        &mut step.expect_agent
                    };
                    if slot.is_some() {
                        return Err(ScriptParseError::at(n, format!("second `{marker}` for one step")));
                    }
                    *slot = Some(text);
                }
                _ => return Err(ScriptParseError::at(n, format!("unknown directive `{marker}`"))),
            }
        }
        if steps.is_empty() {
            return Err(ScriptParseError::at(0, "script has no steps"));
        }
        Ok(Script { steps })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Script {
        path: PathBuf,
        source: ScriptParseError,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Portal(#[from] PortalError),
    #[error("agent unreachable: {0}")]
    Unreachable(String),
    #[error("protocol error: {0}")]
    Protocol(ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Script { .. } | CliError::Read { .. } | CliError::Usage(_) => 2,
            CliError::Unreachable(_) => 3,
            _ => 1,
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Unreachable(m) => CliError::Unreachable(m),
            other => CliError::Protocol(other),
        }
    }
}

pub fn load_script(path: &Path) -> Result<Script, CliError> {
    let source = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Script::parse(&source).map_err(|source| CliError::Script {
        path: path.to_path_buf(),
        source,
    })
}

/// Connector for the CLI: the bundled agent in-process, anything else over HTTP.
pub fn connector(config: &Config) -> Arc<dyn RemoteConnector> {
    Arc::new(config.directory().with_fallback(http_fallback))
}

pub fn local_portal(config: &Config, settings: PortalSettings) -> Result<Portal, CliError> {
    Ok(config.portal(connector(config), settings)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub send: String,
    pub reply: String,
    pub active_agent: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub session_id: String,
    pub greeting: String,
    pub steps: Vec<StepOutcome>,
    /// Indexes into `steps`, from 0.
    pub failed: Vec<usize>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.failed.is_empty()
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "    {}", self.greeting)?;
        for (i, s) in self.steps.iter().enumerate() {
            let mark = if s.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{mark} {i:>2} > {}", s.send)?;
            writeln!(f, "        [{}] {}", s.active_agent, s.reply)?;
        }
        let total = self.steps.len();
        writeln!(f, "{} of {total} steps passed", total - self.failed.len())
    }
}

/// Runs every step on a fresh session. A session that ends early fails the
/// remaining steps.
pub fn replay(script: &Script, portal: &Portal) -> Result<ReplayReport, CliError> {
    let created = portal.create_session()?;
    let mut report = ReplayReport {
        session_id: created.session_id.clone(),
        greeting: created.reply,
        steps: Vec::new(),
        failed: Vec::new(),
    };
    for (i, step) in script.steps.iter().enumerate() {
        let (reply, agent) = match portal.post_utterance(&created.session_id, &step.send) {
            Ok(r) => (r.reply, r.active_agent),
            Err(e @ PortalError::SessionEnded(_)) => (format!("<{e}>"), String::new()),
            Err(e) => return Err(e.into()),
        };
        let passed = !agent.is_empty()
            && step.expect_contains.as_ref().is_none_or(|s| reply.contains(s.as_str()))
            && step.expect_agent.as_ref().is_none_or(|a| *a == agent);
        if !passed {
            report.failed.push(i);
        }
        report.steps.push(StepOutcome {
            send: step.send.clone(),
            reply,
            active_agent: agent,
            passed,
        });
    }
    Ok(report)
}

/// Interactive loop: prints the greeting, then one `[agent] reply` line per
/// input line until end of input or the end of the session.
pub fn repl(portal: &Portal, input: impl BufRead, mut out: impl Write) -> Result<(), CliError> {
    let created = portal.create_session()?;
    writeln!(out, "[{}] {}", created.active_agent, created.reply)?;
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let r = portal.post_utterance(&created.session_id, text)?;
        writeln!(out, "[{}] {}", r.active_agent, r.reply)?;
        if r.ended {
            break;
        }
    }
    out.flush()?;
    Ok(())
}

/// Runs the conformance suite against an HTTP agent.
pub fn conformance(url: &str, probe: &ConformanceProbe) -> Result<ConformanceReport, CliError> {
    let agent = HttpAgent::new(url);
    Ok(run_conformance(&agent, probe)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_steps() {
        let s = Script::parse("# hi\n> hello\n~ Which\n@ portal\n\n> bye\n").unwrap();
        assert_eq!(s.steps.len(), 2);
        assert_eq!(s.steps[0].expect_contains.as_deref(), Some("Which"));
        assert_eq!(s.steps[0].expect_agent.as_deref(), Some("portal"));
        assert_eq!(s.steps[1].expect_agent, None);
    }

    #[test]
    fn rejects_bad_scripts() {
        assert_eq!(Script::parse("").unwrap_err().line, 0);
        assert_eq!(Script::parse("# only\n\n").unwrap_err().line, 0);
        assert_eq!(Script::parse("~ x\n> y").unwrap_err().line, 1);
        assert_eq!(Script::parse("> y\n@ a\n@ b").unwrap_err().line, 3);
        assert_eq!(Script::parse("> y\n! z").unwrap_err().line, 2);
        assert_eq!(Script::parse(">").unwrap_err().line, 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Unreachable("x".into()).exit_code(), 3);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Protocol(ProtocolError::Malformed("x".into())).exit_code(), 1);
    }
}
