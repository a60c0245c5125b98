//! Benchmark CLI: runs the phased reduced-order-model pipeline.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rombench::config::ExperimentConfig;
use rombench::phases::Workspace;
use rombench::report::Method;
use romkit::Result;

#[derive(Parser)]
#[command(
    name = "rombench",
    about = "Reduced-order-model benchmarks: full-order sweeps, basis \
             construction, surrogate training, evaluation, and CSV reports.",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full-order model over the whole test grid and collect
    /// the training snapshots.
    HdmSweep(RunArgs),
    /// Compute the orthonormal reduced basis from the snapshots.
    BuildBasis(RunArgs),
    /// Train the velocity surrogate network for every reduced dimension.
    TrainNn(RunArgs),
    /// Integrate the reduced models at every test parameter and record
    /// relative errors.
    Evaluate(RunArgs),
    /// Emit per-parameter, summary, and sweep CSV reports.
    Report(RunArgs),
    /// Run every phase in order.
    FullRun(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::HdmSweep(a)
            | Command::BuildBasis(a)
            | Command::TrainNn(a)
            | Command::Evaluate(a)
            | Command::Report(a)
            | Command::FullRun(a) => a,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (flat `key = value` lines); omit to use a preset.
    #[arg(long, conflicts_with = "small")]
    config: Option<PathBuf>,

    /// Built-in experiment preset used when no config file is given.
    #[arg(long, value_enum, default_value_t = Preset::BurgersA)]
    preset: Preset,

    /// Shortcut for the reduced flame preset (20x10 grid, 5x5 test grid).
    #[arg(long)]
    small: bool,

    /// Worker threads for parameter-level fan-out (default: all cores).
    #[arg(long)]
    workers: Option<usize>,

    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the reduced dimensions, comma separated (e.g. 80,120,160).
    #[arg(long = "k-u", value_delimiter = ',')]
    k_u: Option<Vec<usize>>,

    /// Reduced-model families to evaluate.
    #[arg(long, value_enum, default_value_t = MethodArg::All)]
    method: MethodArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// Burgers trained on the 2x2x2 corner grid.
    BurgersA,
    /// Burgers trained on the 3x3x3 grid.
    BurgersB,
    /// Flame basis-size sweep on the 40x20 grid.
    FlameSweep,
    /// Reduced flame problem for quick runs.
    FlameSmall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Rom,
    Deim,
    Romnn,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Rom => vec![Method::Rom],
            MethodArg::Deim => vec![Method::Deim],
            MethodArg::Romnn => vec![Method::RomNn],
            MethodArg::All => vec![Method::Rom, Method::Deim, Method::RomNn],
        }
    }
}

impl RunArgs {
    fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.small) {
            (Some(path), _) => ExperimentConfig::parse_file(path)?,
            (None, true) => ExperimentConfig::flame_small(),
            (None, false) => match self.preset {
                Preset::BurgersA => ExperimentConfig::burgers_experiment_a(),
                Preset::BurgersB => ExperimentConfig::burgers_experiment_b(),
                Preset::FlameSweep => ExperimentConfig::flame_sweep(),
                Preset::FlameSmall => ExperimentConfig::flame_small(),
            },
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(k_u) = &self.k_u {
            cfg.k_u = k_u.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let args = cli.command.args();
    if let Some(workers) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| romkit::Error::InvalidConfig(format!("worker pool: {e}")))?;
    }
    let methods = args.method.methods();
    let cfg = args.resolve_config()?;
    log::info!(
        "{} -> {} (seed {})",
        cfg.problem.name(),
        cfg.out_dir.display(),
        cfg.seed
    );
    let ws = Workspace::open(cfg)?;
    match cli.command {
        Command::HdmSweep(_) => ws.phase_hdm(),
        Command::BuildBasis(_) => {
            ws.phase_hdm()?;
            ws.phase_basis()
        }
        Command::TrainNn(_) => {
            ws.phase_hdm()?;
            ws.phase_basis()?;
            ws.phase_train()
        }
        Command::Evaluate(_) => ws.phase_evaluate(&methods),
        Command::Report(_) => ws.phase_report(),
        Command::FullRun(_) => ws.run_all(&methods),
    }
}

/// Single-line JSON rendering of a failure for machine consumption.
fn error_json(e: &romkit::Error) -> String {
    let mut escaped = String::new();
    for c in e.to_string().chars() {
        match c {
            '"' => escaped.push_str("\\\""),
            '\\' => escaped.push_str("\\\\"),
            '\n' => escaped.push_str("\\n"),
            '\r' => escaped.push_str("\\r"),
            '\t' => escaped.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                escaped.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => escaped.push(c),
        }
    }
    format!("{{\"error\":\"{escaped}\"}}")
}

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or("info"),
    )
    .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", error_json(&e));
        std::process::exit(1);
    }
}
