//! Command-line front end: `kvchaos <subcommand> [--config FILE] [flags...]`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use kvchaos::harness::{all_pass, run, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "kvchaos", version, about = "Chaos expansions of coalescing stochastic flows")]
struct Cli {
    /// Flat key = value experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (the KVCHAOS_OUT variable takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the n-point motion and record merge scenarios.
    SimulateFlow(Common),
    /// List strictly decreasing chains of interval partitions.
    EnumeratePartitions(Common),
    /// Expansion of f at the Wiener process stopped at zero.
    ExpandStopped(Common),
    /// Expansion of f(u + w(t)).
    ExpandFlat(Common),
    /// Matrix stochastic exponential series against an Euler path.
    ExpandLie(Common),
    /// Orders 0 and 1 of the n-point expansion.
    ExpandNpoint(Common),
    /// Run the acceptance checks.
    Verify(Common),
}

#[derive(Args, Default)]
struct Common {
    #[arg(short = 'K', long = "order")]
    order: Option<usize>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    u: Option<String>,
    /// Comma-separated starting points.
    #[arg(long)]
    starts: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Builtin function name or grid CSV file.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// leader, uniform or sequential.
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    cells: Option<usize>,
    /// Matrix rows separated by `;`.
    #[arg(long)]
    matrix: Option<String>,
    /// Fraction of acceptance sample sizes (verify only).
    #[arg(long)]
    scale: Option<String>,
    /// Extra `key=value` settings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn split(&self) -> (Experiment, &Common) {
        match self {
            Self::SimulateFlow(c) => (Experiment::SimulateFlow, c),
            Self::EnumeratePartitions(c) => (Experiment::EnumeratePartitions, c),
            Self::ExpandStopped(c) => (Experiment::ExpandStopped, c),
            Self::ExpandFlat(c) => (Experiment::ExpandFlat, c),
            Self::ExpandLie(c) => (Experiment::ExpandLie, c),
            Self::ExpandNpoint(c) => (Experiment::ExpandNpoint, c),
            Self::Verify(c) => (Experiment::Verify, c),
        }
    }
}

fn build_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let (experiment, flags) = cli.command.split();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::for_experiment(experiment),
    };
    cfg.experiment = experiment;
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.into(), v));
        }
    };
    push("order", flags.order.map(|x| x.to_string()));
    push("t", flags.t.clone());
    push("dt", flags.dt.clone());
    push("u", flags.u.clone());
    push("n", flags.n.map(|x| x.to_string()));
    push("starts", flags.starts.clone());
    push("f", flags.f.clone());
    push("reps", flags.reps.map(|x| x.to_string()));
    push("rule", flags.rule.clone());
    push("cells", flags.cells.map(|x| x.to_string()));
    push("matrix", flags.matrix.clone());
    push("scale", flags.scale.clone());
    push("seed", cli.seed.map(|x| x.to_string()));
    push("out_dir", cli.out.as_ref().map(|p| p.display().to_string()));
    for kv in &flags.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("`--set {kv}` is not KEY=VALUE"))?;
        pairs.push((k.trim().into(), v.into()));
    }
    for (k, v) in pairs {
        cfg.set(&k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = build_config(cli)?;
    let rows = run(&cfg)?;
    let dir = cfg.output_dir();
    match cfg.experiment {
        Experiment::ExpandStopped | Experiment::ExpandFlat | Experiment::ExpandLie | Experiment::ExpandNpoint => {
            print!("{}", std::fs::read_to_string(dir.join("terms.csv"))?);
        }
        _ => {
            for r in &rows {
                println!("{r}");
            }
        }
    }
    let ok = all_pass(&rows);
    eprintln!("{} rows, {} failed; results in {}", rows.len(), rows.iter().filter(|r| !r.pass).count(), dir.display());
    Ok(ok)
}
