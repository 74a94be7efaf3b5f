use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod run;

use run::{Failure, Options};

/// Simulate and design photon-mediated donor–ion entanglement.
#[derive(Parser, Debug)]
#[command(name = "hybridlink", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory receiving all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for sweeps (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Overrides the optimizer seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Omit the run metadata (version, timestamp) from the summary.
    #[arg(long, global = true)]
    no_metadata: bool,

    /// Print the fully resolved configuration (internal units) to stdout.
    #[arg(long, global = true)]
    print_effective_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate both emitters, overlap their photons and evaluate the protocol.
    Simulate,
    /// Optimize the free pulse, then simulate with the result.
    Optimize,
    /// Protocol figures of merit and the heralded density matrix.
    Protocol,
    /// Classify a (Q, V) grid of cavity designs.
    CavityMap,
    /// Evaluate the figures of merit while stepping one numeric key.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Dotted configuration key (e.g. `protocol.eta`, `donor.pulse.tau`) or `p1`.
    #[arg(long)]
    param: String,
    #[arg(long, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, allow_hyphen_values = true)]
    hi: f64,
    #[arg(long)]
    steps: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let c = cli.common;
    let config = c.config.ok_or_else(|| Failure::config("--config is required"))?;
    let mut scenario = hybridlink::Scenario::from_path(&config).map_err(Failure::from_config)?;
    if let Some(seed) = c.seed {
        scenario = scenario.with_seed(seed);
    }
    if c.print_effective_config {
        print!("{}", scenario.effective_toml());
    }
    if c.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(c.jobs)
            .build_global()
            .map_err(|e| Failure::io(e.to_string()))?;
    }
    let command = match &cli.command {
        Command::Simulate => "simulate",
        Command::Optimize => "optimize",
        Command::Protocol => "protocol",
        Command::CavityMap => "cavity-map",
        Command::Sweep(_) => "sweep",
    };
    let opts = Options { out_dir: c.out_dir, metadata: !c.no_metadata, command };
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Failure::io(format!("{}: {e}", opts.out_dir.display())))?;
    match cli.command {
        Command::Simulate => run::simulate(&scenario, &opts),
        Command::Optimize => run::optimize(&scenario, &opts),
        Command::Protocol => run::protocol(&scenario, &opts),
        Command::CavityMap => run::cavity_map(&scenario, &opts),
        Command::Sweep(a) => run::sweep(&scenario, &opts, &a.param, a.lo, a.hi, a.steps),
    }
}
