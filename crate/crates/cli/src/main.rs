use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use dialhub_cli::{conformance, load_script, local_portal, repl, replay, CliError};
use dialhub_core::config::{Config, ConfigPaths};
use dialhub_core::portal::{PortalSettings, TranscriptLog};
use dialhub_core::protocol::conformance::ConformanceProbe;
use dialhub_net::portal_server::start_expiry_thread;
use dialhub_net::{agent_router, portal_router, serve_until_interrupted};

#[derive(Parser)]
#[command(name = "dialhub", version, about = "Multi-agent dialog portal")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, global = true, env = "DIALHUB_ONTOLOGY")]
    ontology: Option<PathBuf>,
    #[arg(long, global = true, env = "DIALHUB_TREE")]
    tree: Option<PathBuf>,
    #[arg(long, global = true, env = "DIALHUB_LEXICON")]
    lexicon: Option<PathBuf>,
    #[arg(long, global = true, env = "DIALHUB_TEMPLATES")]
    templates: Option<PathBuf>,
    #[arg(long, global = true, env = "DIALHUB_CHAT_PAIRS")]
    chat_pairs: Option<PathBuf>,
    #[arg(long, global = true, env = "DIALHUB_WEATHER")]
    weather: Option<PathBuf>,
    #[arg(long, global = true, env = "DIALHUB_RESTAURANTS")]
    restaurants: Option<PathBuf>,
    /// Remote agent endpoint override, `concept=url`. Repeatable.
    #[arg(long = "endpoint", global = true, value_name = "CONCEPT=URL")]
    endpoints: Vec<String>,
    /// Base seed for template choice.
    #[arg(long, global = true, env = "DIALHUB_SEED", default_value_t = 0)]
    seed: u64,
    /// Minimum cosine similarity for a chatbot answer.
    #[arg(long, global = true, env = "DIALHUB_CHAT_THRESHOLD")]
    chat_threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Talk to an in-process portal on stdin/stdout.
    Repl,
    /// Run a script against an in-process portal and check its expectations.
    Replay { script: PathBuf },
    /// Run the remote agent conformance suite against an HTTP agent.
    Conformance { url: String },
    /// Serve the portal HTTP API.
    Serve {
        #[arg(long, env = "DIALHUB_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Idle minutes before a session is closed.
        #[arg(long, env = "DIALHUB_SESSION_TTL", default_value_t = 30)]
        session_ttl: i64,
        /// Directory for the daily transcript logs.
        #[arg(long, env = "DIALHUB_LOG_DIR")]
        log_dir: Option<PathBuf>,
        /// Allowed browser origin. Repeatable; any origin when omitted.
        #[arg(long = "cors-origin", env = "DIALHUB_CORS_ORIGINS", value_delimiter = ',')]
        cors_origins: Vec<String>,
    },
    /// Serve the bundled restaurant agent over the remote agent protocol.
    Agent {
        #[arg(long, env = "DIALHUB_AGENT_BIND", default_value = "127.0.0.1:8090")]
        bind: SocketAddr,
    },
}

impl ConfigArgs {
    fn load(&self) -> Result<Config, CliError> {
        let paths = ConfigPaths {
            ontology: self.ontology.clone(),
            tree: self.tree.clone(),
            lexicon: self.lexicon.clone(),
            templates: self.templates.clone(),
            chat_pairs: self.chat_pairs.clone(),
            weather: self.weather.clone(),
            restaurants: self.restaurants.clone(),
        };
        let mut config = Config::load(&paths)?;
        for entry in &self.endpoints {
            let (concept, url) = entry
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--endpoint expects CONCEPT=URL, got `{entry}`")))?;
            config.set_endpoint(concept.trim(), url.trim())?;
        }
        if let Some(t) = self.chat_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Usage(format!("--chat-threshold must be in [0, 1], got {t}")));
            }
            config.settings.chat_threshold = t;
        }
        Ok(config)
    }

    fn portal_settings(&self) -> PortalSettings {
        PortalSettings {
            seed: self.seed,
            ..Default::default()
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Repl => {
            let config = cli.config.load()?;
            let portal = local_portal(&config, cli.config.portal_settings())?;
            repl(&portal, io::stdin().lock(), io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { script } => {
            let script = load_script(&script)?;
            let config = cli.config.load()?;
            let portal = local_portal(&config, cli.config.portal_settings())?;
            let report = replay(&script, &portal)?;
            print!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Conformance { url } => {
            let report = conformance(&url, &ConformanceProbe::restaurant())?;
            print!("{report}");
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Serve {
            bind,
            session_ttl,
            log_dir,
            cors_origins,
        } => {
            if session_ttl <= 0 {
                return Err(CliError::Usage("--session-ttl must be positive".into()));
            }
            let config = cli.config.load()?;
            let settings = PortalSettings {
                session_ttl: chrono::Duration::minutes(session_ttl),
                ..cli.config.portal_settings()
            };
            let mut portal = local_portal(&config, settings)?;
            if let Some(dir) = log_dir {
                portal = portal.with_log(TranscriptLog::new(dir)?);
            }
            let portal = Arc::new(portal);
            start_expiry_thread(portal.clone(), Duration::from_secs(30));
            let origins = (!cors_origins.is_empty()).then_some(cors_origins.as_slice());
            eprintln!("portal listening on http://{bind}");
            serve_until_interrupted(portal_router(portal, origins), bind)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Agent { bind } => {
            let config = cli.config.load()?;
            eprintln!("bistro listening on http://{bind}");
            serve_until_interrupted(agent_router(config.bistro()), bind)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dialhub: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
