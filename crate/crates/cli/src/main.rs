use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ssm_cli::{experiments, with_threads, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "ssm", version, about = "Stochastic sandpile and ARWD experiments")]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit the timestamp header line.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Graph spec such as `torus:n=32,d=2`, `box:L=50,d=1` or `cycle:n=100`.
    #[arg(long, global = true)]
    graph: Option<String>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    mus: Option<Vec<f64>>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    v: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    vs: Option<Vec<usize>>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    ls: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    cap: Option<u64>,
    #[arg(long, global = true)]
    r: Option<usize>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite; exits nonzero on any failure.
    Selfcheck {
        #[arg(long)]
        fast: bool,
    },
    FixationScan,
    TorusTime,
    WeakProbe,
    Domination,
    ConfinementProbe,
    HierarchyCheck,
    ParityProbe,
    GhostProbe,
    LemmaChecks,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Selfcheck { .. } => "selfcheck",
            Command::FixationScan => "fixation-scan",
            Command::TorusTime => "torus-time",
            Command::WeakProbe => "weak-probe",
            Command::Domination => "domination",
            Command::ConfinementProbe => "confinement-probe",
            Command::HierarchyCheck => "hierarchy-check",
            Command::ParityProbe => "parity-probe",
            Command::GhostProbe => "ghost-probe",
            Command::LemmaChecks => "lemma-checks",
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.subcommand = cli.command.name().to_string();
    let c = cli.common;
    cfg.overlay(Overrides {
        graph: c.graph,
        mu: c.mu,
        mus: c.mus,
        lambda: c.lambda,
        v: c.v,
        vs: c.vs,
        beta: c.beta,
        alpha: c.alpha,
        ls: c.ls,
        ns: c.ns,
        trials: c.trials,
        seed: c.seed,
        cap: c.cap,
        output: c.output,
        r: c.r,
        steps: c.steps,
    });
    if let Command::Selfcheck { fast: true } = cli.command {
        cfg.fast = Some(true);
    }
    let table = with_threads(cli.threads, || experiments::run(&cfg))??;
    let timestamp = (!cli.no_timestamp).then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    let text = table.render(&cfg, timestamp);
    match &cfg.output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(table.pass.unwrap_or(true))
}
