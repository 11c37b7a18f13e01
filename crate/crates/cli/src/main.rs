use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use reviver::config::{Config, ModelMode};
use reviver::{server, setup};
use reviver_core::builder::{build_memory_tree, BuildOptions};
use reviver_core::domain::{load_manifest, save_json, save_tree, validate_tree, EngineKind, Phase, SessionState};
use reviver_core::eval::{run_batch, score_annotations, AnnotationSet, BatchCell, Persona, UserScript};
use reviver_core::Exec;

#[derive(Parser)]
#[command(name = "reviver", version, about = "Build memory trees from photo collections and chat about them")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "REVIVER_CONFIG")]
    config: Option<PathBuf>,
    /// Model backend; overrides the config file and REVIVER_MODEL_MODE.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModelMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a memory tree from a collection manifest.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        portrait: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Defaults to tree.json next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Check a stored tree against the structural invariants.
    Validate {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Chat on the terminal, one message per line of stdin.
    Chat {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value = "reviver")]
        engine: EngineKind,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Write the transcript here when the chat ends.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run scripted users against an engine and report the metrics.
    Eval {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value = "reviver")]
        engine: EngineKind,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// JSON user script; takes precedence over --persona.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value = "compliant")]
        persona: Persona,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of sessions, seeded seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long)]
        sequential: bool,
        /// Metrics as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Transcript of the first run.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Score human statement labels for a tree.
    Score {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,reviver=info,reviver_core=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    match cli.command {
        Command::Build { manifest, portrait, threshold, out, sequential } => {
            let out = out.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("tree.json"));
            let m = load_manifest(&manifest)?;
            let gateway = cfg.gateway(Some(&manifest))?;
            let opts = BuildOptions {
                threshold: threshold.unwrap_or(cfg.build.threshold),
                exec: if sequential { Exec::Sequential } else { cfg.build.exec },
                source_manifest: Some(setup::relative_to(&manifest, out.parent().unwrap_or(Path::new(".")))),
                ..Default::default()
            };
            let tree = build_memory_tree(&m, portrait.as_deref(), &gateway, &opts)?;
            save_tree(&tree, &out)?;
            println!(
                "{}: {} photos, {} scenes, {} details -> {}",
                tree.collection_id,
                m.photos.len(),
                tree.scenes.len(),
                tree.detail_count(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { tree, manifest } => {
            let loaded = setup::load(&tree, manifest.as_deref())?;
            let report = validate_tree(&loaded.tree, loaded.manifest.as_ref());
            if report.is_valid() {
                println!("valid: {} scenes", loaded.tree.scenes.len());
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &report.violations {
                    println!("{v}");
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Chat { tree, engine, manifest, transcript } => {
            let loaded = setup::load(&tree, manifest.as_deref())?;
            let engine = setup::engine(&cfg, engine, &loaded)?;
            chat(&engine, transcript.as_deref())
        }
        Command::Eval { tree, engine, manifest, script, persona, seed, runs, sequential, report, transcript } => {
            let loaded = setup::load(&tree, manifest.as_deref())?;
            let engine = setup::engine(&cfg, engine, &loaded)?;
            let script = match script {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => UserScript::persona(persona),
            };
            let cells: Vec<BatchCell> = (seed..seed + runs.max(1))
                .map(|s| BatchCell { engine: &engine, tree: &loaded.tree, script: script.clone(), seed: s })
                .collect();
            let exec = if sequential { Exec::Sequential } else { cfg.build.exec };
            let runs = run_batch(&cells, exec).into_iter().collect::<Result<Vec<_>, _>>()?;
            println!("seed\tcoverage\tuser_turns\tdetails\tconcluded");
            for r in &runs {
                let m = &r.metrics;
                println!(
                    "{}\t{:.3}\t{}\t{}/{}\t{}",
                    m.seed, m.scene_coverage, m.user_turns, m.details_emitted, m.details_total, m.concluded
                );
            }
            if let Some(p) = report {
                let metrics: Vec<_> = runs.iter().map(|r| &r.metrics).collect();
                save_json(&metrics, &p)?;
            }
            if let (Some(p), Some(first)) = (transcript, runs.first()) {
                save_json(&first.transcript, &p)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Score { tree, annotations } => {
            let loaded = setup::load(&tree, None)?;
            let set: AnnotationSet = serde_json::from_str(&std::fs::read_to_string(&annotations)?)
                .with_context(|| format!("parsing {}", annotations.display()))?;
            let report = score_annotations(&loaded.tree, &set)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { host, port, data_dir } => {
            let data_dir = data_dir.or_else(|| cfg.data_dir.clone()).unwrap_or_else(|| PathBuf::from("reviver-data"));
            let app = server::AppState::open(cfg, &data_dir)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(app, (host, port).into()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn chat(engine: &reviver_core::engine::ChatEngine, transcript: Option<&Path>) -> anyhow::Result<ExitCode> {
    let interactive = std::io::stdin().is_terminal();
    let mut state: SessionState = engine.start_session(uuid::Uuid::new_v4().to_string());
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}\n", state.history[0].text)?;
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    while state.phase != Phase::Concluded {
        if interactive {
            eprint!("> ");
        }
        out.flush()?;
        let Some(line) = lines.next().transpose()? else { break };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let turn = engine.reply(&mut state, line)?;
        writeln!(out, "{}\n", turn.text)?;
    }
    out.flush()?;
    if let Some(p) = transcript {
        save_json(&engine.transcript(&state), p)?;
    }
    if state.history.iter().any(|t| t.is_error()) {
        eprintln!("some turns failed; see the transcript for details");
    }
    Ok(ExitCode::SUCCESS)
}
