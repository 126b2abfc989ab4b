use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use magboard_core::pipeline::run_frames;
use magboard_core::story::validate_story;
use magboard_core::tracking::{parse_stream, random_script, script_scenario, serialize_stream, GestureScript, RandomScriptParams};
use magboard_presenter::config::{self, ReplayInput};
use magboard_presenter::server::{self, ServerOptions};
use magboard_presenter::session::{frames_from_log, write_traces, Session, SessionLog};

#[derive(Parser)]
#[command(name = "magboard", version, about = "Tangible magnet-board presentation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Engine {
    /// Story document.
    #[arg(long)]
    story: PathBuf,
    /// Built-in command set id or a command-set file.
    #[arg(long, default_value = "default")]
    command_set: String,
    /// TOML file overriding recognizer thresholds.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Serve a live session over websockets.
    Run {
        #[command(flatten)]
        engine: Engine,
        #[arg(long, default_value = "127.0.0.1:8765")]
        listen: SocketAddr,
        /// Session log (JSONL of every frame, action, command and diff).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Trace files written on shutdown.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Frames are held this long (in stream time) for reordering.
        #[arg(long, default_value_t = 100)]
        reorder_ms: u64,
        /// End the session when the first producer disconnects.
        #[arg(long)]
        exit_on_producer_close: bool,
    },
    /// Run a frames file, gesture script or session log offline.
    Replay {
        #[command(flatten)]
        engine: Engine,
        #[arg(long, conflicts_with_all = ["script", "log"], required_unless_present_any = ["script", "log"])]
        frames: Option<PathBuf>,
        #[arg(long, conflicts_with = "log")]
        script: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Sampling rate override for --script.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check a story document; exit 0 if valid, 1 on violations, 2 if unreadable.
    ValidateStory { path: PathBuf },
    /// Print a built-in command set.
    ExportCommandSet {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand a gesture script (or a seeded random one) into a frames file.
    Script {
        #[arg(long)]
        story: PathBuf,
        #[arg(long, required_unless_present = "seed")]
        script: Option<PathBuf>,
        /// Generate a random script from this seed instead.
        #[arg(long, conflicts_with = "script")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 6)]
        magnets: usize,
        #[arg(long, default_value_t = 20_000)]
        duration_ms: u64,
        #[arg(long)]
        rate: Option<f64>,
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ValidateStory { path } => return validate(&path),
        Command::Run {
            engine,
            listen,
            log,
            out_dir,
            reorder_ms,
            exit_on_producer_close,
        } => run(engine, listen, log, out_dir, reorder_ms, exit_on_producer_close),
        Command::Replay {
            engine,
            frames,
            script,
            log,
            rate,
            out_dir,
        } => {
            let input = match (frames, script, log) {
                (Some(p), _, _) => ReplayInput::Frames(p),
                (_, Some(p), _) => ReplayInput::Script(p),
                (_, _, Some(p)) => ReplayInput::Log(p),
                _ => unreachable!("clap requires one input"),
            };
            replay(engine, input, rate, &out_dir)
        }
        Command::ExportCommandSet { id, out } => export(&id, out.as_deref()),
        Command::Script {
            story,
            script,
            seed,
            magnets,
            duration_ms,
            rate,
            out,
        } => expand(&story, script.as_deref(), seed, magnets, duration_ms, rate, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn validate(path: &Path) -> ExitCode {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let doc = match serde_json::from_slice(&bytes) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {} is not a story document: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let report = validate_story(&doc);
    println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
    if report.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(
    engine: Engine,
    listen: SocketAddr,
    log: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    reorder_ms: u64,
    exit_on_producer_close: bool,
) -> anyhow::Result<()> {
    let story = config::load_story(&engine.story)?;
    let set = config::load_command_set(&engine.command_set)?;
    let cfg = config::load_recognizer_config(engine.config.as_deref())?;
    let mut session = Session::new(story, set, cfg, reorder_ms)?;
    if let Some(path) = &log {
        let file = SessionLog::create(path).with_context(|| format!("creating {}", path.display()))?;
        session = session.with_log(file)?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    let session = rt.block_on(async {
        let mut srv = server::start(session, listen, ServerOptions::default()).await?;
        eprintln!("listening on ws://{}", srv.local_addr());
        if exit_on_producer_close {
            tokio::select! {
                _ = srv.producers_closed(1) => {}
                _ = tokio::signal::ctrl_c() => {}
            }
        } else {
            tokio::signal::ctrl_c().await?;
        }
        // Let in-flight broadcasts drain before closing connections.
        tokio::time::sleep(Duration::from_millis(50)).await;
        anyhow::Ok(srv.shutdown().await)
    })?;
    if let Some(dir) = out_dir {
        session.write_outputs(&dir).with_context(|| format!("writing {}", dir.display()))?;
    }
    Ok(())
}

fn load_script(path: &Path, rate: Option<f64>) -> anyhow::Result<GestureScript> {
    let mut script: GestureScript = serde_json::from_slice(&config::read(path)?)
        .with_context(|| format!("parsing script {}", path.display()))?;
    if let Some(r) = rate {
        script.rate_hz = r;
    }
    Ok(script)
}

fn replay(engine: Engine, input: ReplayInput, rate: Option<f64>, out_dir: &Path) -> anyhow::Result<()> {
    let story = config::load_story(&engine.story)?;
    let set = config::load_command_set(&engine.command_set)?;
    let cfg = config::load_recognizer_config(engine.config.as_deref())?;
    let text = |p: &Path| -> anyhow::Result<String> {
        String::from_utf8(config::read(p)?).with_context(|| format!("{} is not UTF-8", p.display()))
    };
    let frames = match &input {
        ReplayInput::Frames(p) => parse_stream(&text(p)?).map_err(|e| anyhow!("{}: {e}", p.display()))?,
        ReplayInput::Script(p) => script_scenario(&load_script(p, rate)?, &story.magnets)?,
        ReplayInput::Log(p) => {
            frames_from_log(&text(p)?).map_err(|(line, e)| anyhow!("{}: line {line}: {e}", p.display()))?
        }
    };
    if rate.is_some() && !matches!(input, ReplayInput::Script(_)) {
        bail!("--rate applies to --script only");
    }
    let trace = run_frames(&story, &set, &cfg, &frames)?;
    for r in &trace.rejected {
        log::warn!("rejected {} at {} ms: {}", r.command.kind.name(), r.command.t_ms, r.reason);
    }
    write_traces(out_dir, &trace.events, &trace.commands, &trace.state)
        .with_context(|| format!("writing {}", out_dir.display()))?;
    eprintln!(
        "{} frames, {} actions, {} commands, revision {}",
        frames.len(),
        trace.events.len(),
        trace.commands.len(),
        trace.state.revision
    );
    Ok(())
}

fn export(id: &str, out: Option<&Path>) -> anyhow::Result<()> {
    let set = magboard_core::mapper::CommandSet::builtin(id)?;
    let text = set.to_json_pretty();
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn expand(
    story: &Path,
    script: Option<&Path>,
    seed: Option<u64>,
    magnets: usize,
    duration_ms: u64,
    rate: Option<f64>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let story = config::load_story(story)?;
    let script = match (script, seed) {
        (Some(p), _) => load_script(p, rate)?,
        (None, Some(seed)) => {
            let params = RandomScriptParams {
                magnets: magnets.min(story.magnets.len()),
                duration_ms,
                rate_hz: rate.unwrap_or(60.0),
            };
            random_script(&mut ChaCha8Rng::seed_from_u64(seed), &story, params)
        }
        (None, None) => bail!("either --script or --seed is required"),
    };
    let frames = script_scenario(&script, &story.magnets)?;
    let text = serialize_stream(&frames);
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
