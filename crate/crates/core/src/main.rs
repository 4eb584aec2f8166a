use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qmf::experiment::{self, Experiment, ExperimentConfig};
use qmf::model::InitConfig;

#[derive(Parser)]
#[command(name = "qmf", version, about = "Disordered mean-field diffusions: simulation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check model assumptions, initial law and disorder convergence.
    Validate(Flags),
    /// Simulate the interacting system and dump the ensemble.
    Simulate(Flags),
    /// Particle slices against the McKean–Vlasov flow along an N ladder.
    Lln(Flags),
    /// Truncated-disorder coupling bound along an M ladder.
    Coupling(Flags),
    /// Solve the McKean–Vlasov family and dump the flow.
    Mkv(Flags),
    /// Girsanov normalization, rate zero, ordering and flow consistency.
    RateCheck(Flags),
    /// Finite-space Sanov and Legendre checks.
    Sanov(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// JSON experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// kuramoto, daido or active_rotator.
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "K")]
    k: Option<f64>,
    /// Disorder law, e.g. binary:0.5 or gaussian:0,1.
    #[arg(long)]
    mu: Option<String>,
    /// quantile or iid:SEED.
    #[arg(long, alias = "disorder")]
    sequence: Option<String>,
    /// gaussian:OFFSET,STD[,SLOPE], uniform:LO,HI, uniform_circle, dirac:C[,SLOPE].
    #[arg(long)]
    init: Option<String>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "Ns", value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long = "Ms", value_delimiter = ',')]
    ms: Option<Vec<f64>>,
    #[arg(long)]
    seeds: Option<usize>,
    /// PDE cells.
    #[arg(long)]
    cells: Option<usize>,
    /// PDE horizon.
    #[arg(long)]
    pde_t: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long = "E")]
    e: Option<usize>,
    #[arg(long = "F")]
    f: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

impl Flags {
    fn apply(&self, c: &mut ExperimentConfig) -> Result<(), String> {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        if let Some(v) = &self.model {
            c.model.name = v.clone();
        }
        if let Some(v) = self.k {
            c.model.k = v;
        }
        if let Some(v) = &self.mu {
            c.mu = v.clone();
        }
        if let Some(v) = &self.sequence {
            c.sequence = v.clone();
        }
        if let Some(v) = &self.init {
            c.init = InitConfig::parse(v).ok_or_else(|| format!("cannot parse --init `{v}`"))?;
        }
        if let Some(v) = self.n {
            c.sim.n = v;
        }
        if let Some(v) = self.t {
            c.sim.t_end = v;
        }
        if let Some(v) = self.dt {
            c.sim.dt = v;
        }
        if let Some(v) = &self.ns {
            c.lln.ns = v.clone();
        }
        if let Some(v) = &self.ms {
            c.coupling.ms = v.clone();
        }
        if let Some(v) = self.seeds {
            c.lln.seeds = v;
            c.coupling.seeds = v;
        }
        if let Some(v) = self.cells {
            c.pde.cells = v;
        }
        if let Some(v) = self.pde_t {
            c.pde.t_end = v;
        }
        if let Some(v) = self.reps {
            c.rate.reps = v;
        }
        if let Some(v) = self.e {
            c.sanov.e = v;
        }
        if let Some(v) = self.f {
            c.sanov.f = v;
        }
        if let Some(v) = self.trials {
            c.sanov.trials = v;
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, flags) = match cli.command {
        Command::Validate(f) => (Experiment::Validate, f),
        Command::Simulate(f) => (Experiment::Simulate, f),
        Command::Lln(f) => (Experiment::Lln, f),
        Command::Coupling(f) => (Experiment::Coupling, f),
        Command::Mkv(f) => (Experiment::Mkv, f),
        Command::RateCheck(f) => (Experiment::RateCheck, f),
        Command::Sanov(f) => (Experiment::Sanov, f),
    };
    let mut cfg = match experiment::load_or_default(flags.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = flags.apply(&mut cfg) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    cfg.experiment = Some(experiment);
    match experiment::run(&cfg, experiment) {
        Ok(outcome) => {
            let files: Vec<String> = outcome.files.iter().map(|p| p.display().to_string()).collect();
            let line = serde_json::json!({
                "experiment": experiment.name(),
                "passed": outcome.passed,
                "files": files,
            });
            println!("{line}");
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
