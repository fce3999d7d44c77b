//! `ldvote`: equilibrium solving, threshold sweeps, simulation and
//! subject-data analysis for voting with delegation or abstention.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldvote_core::analysis::ClusterLevel;
use ldvote_core::model::{System, Treatment};

use crate::config::{Format, RunConfig, UsageError};

#[derive(Parser, Debug)]
#[command(name = "ldvote", version, about)]
struct Cli {
    /// JSON config file, or a manifest from an earlier run. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for output files and the manifest [default: .]
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// What to print on stdout.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for symmetric threshold equilibria.
    Equilibrium(EquilibriumArgs),
    /// Ex-ante utility relative to majority voting along a threshold grid.
    Sweep(SweepArgs),
    /// Monte Carlo batch of elections.
    Simulate(SimulateArgs),
    /// Compare LD, MVA and MV on the heterogeneous-accuracy population.
    Compare(CompareArgs),
    /// Subject-level bootstrap of decision accuracy from a dataset.
    Bootstrap(BootstrapArgs),
    /// Withdrawal frequencies, per-subject thresholds and KS tests.
    Analyze(AnalyzeArgs),
    /// Write a synthetic subject dataset played at a given behaviour.
    GenSynthetic(SyntheticArgs),
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// ld, mva or mv.
    #[arg(long)]
    system: Option<System>,
    /// Electorate size (odd).
    #[arg(long)]
    n: Option<usize>,
    /// Number of experts (odd, less than n).
    #[arg(long)]
    k: Option<usize>,
    /// Expert precision [default: 0.7]
    #[arg(long)]
    p: Option<f64>,
    /// Non-expert precision law: uniform:LO:HI, binned:LO:HI:W, point:Q or
    /// empirical:Q=W,... [default: uniform:0.5:0.7]
    #[arg(long)]
    dist: Option<String>,
}

#[derive(Args, Debug, Default)]
struct BehaviorArgs {
    /// Common threshold [default: the lowest interior equilibrium].
    #[arg(long)]
    threshold: Option<f64>,
    /// JSON file holding a behaviour (strategy profile or behavioural law).
    #[arg(long, conflicts_with = "threshold")]
    behavior: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct EquilibriumArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Root tolerance [default: 1e-4]
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// LO:HI:STEP [default: the support at step 0.002]
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args, Debug, Default)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    behavior: BehaviorArgs,
    /// Elections [default: 100000]
    #[arg(long)]
    reps: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Write the first N election records to audit.jsonl.
    #[arg(long, value_name = "N")]
    audit: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct CompareArgs {
    /// Electorate sizes [default: 5,15,125]
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Replications per size [default: 10000]
    #[arg(long)]
    reps: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Non-expert delegation propensity under LD [default: 0.5]
    #[arg(long)]
    delegate_prob: Option<f64>,
    /// Non-expert abstention propensity under MVA [default: 0.3]
    #[arg(long)]
    abstain_prob: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Subject dataset CSV; repeat to combine files.
    #[arg(long)]
    input: Option<Vec<PathBuf>>,
    /// Precision support LO:HI [default: 0.5:0.7]
    #[arg(long)]
    support: Option<String>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Replications [default: 10000]
    #[arg(long)]
    reps: Option<u64>,
    /// Restrict to one treatment (LD or MVA).
    #[arg(long)]
    treatment: Option<Treatment>,
    /// Restrict to one group size.
    #[arg(long)]
    group_size: Option<u32>,
}

#[derive(Args, Debug, Default)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// session, subject or group [default: session]
    #[arg(long)]
    cluster: Option<ClusterLevel>,
    /// KS permutations [default: 10000]
    #[arg(long)]
    permutations: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct SyntheticArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    behavior: BehaviorArgs,
    /// [default: 4]
    #[arg(long)]
    sessions: Option<usize>,
    /// Subjects per session [default: 15]
    #[arg(long)]
    subjects: Option<usize>,
    /// [default: 20]
    #[arg(long)]
    rounds: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) {
        c.system = self.system;
        c.n = self.n;
        c.k = self.k;
        c.p = self.p;
        c.dist = self.dist;
    }
}

impl BehaviorArgs {
    fn apply(self, c: &mut RunConfig) -> anyhow::Result<()> {
        c.threshold = self.threshold;
        if let Some(path) = self.behavior {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| config::usage(format!("reading behaviour {}: {e}", path.display())))?;
            c.behavior = Some(
                serde_json::from_str(&text).map_err(|e| config::usage(format!("{}: {e}", path.display())))?,
            );
        }
        Ok(())
    }
}

impl DataArgs {
    fn apply(self, c: &mut RunConfig) {
        c.input = self.input;
        c.support = self.support;
        c.seed = self.seed;
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Equilibrium(_) => "equilibrium",
            Command::Sweep(_) => "sweep",
            Command::Simulate(_) => "simulate",
            Command::Compare(_) => "compare",
            Command::Bootstrap(_) => "bootstrap",
            Command::Analyze(_) => "analyze",
            Command::GenSynthetic(_) => "gen-synthetic",
        }
    }

    /// The flag values of this invocation as a config layer.
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let mut c = RunConfig {
            command: Some(self.name().to_string()),
            ..Default::default()
        };
        match self {
            Command::Equilibrium(a) => {
                a.model.apply(&mut c);
                c.tol = a.tol;
            }
            Command::Sweep(a) => {
                a.model.apply(&mut c);
                c.grid = a.grid;
            }
            Command::Simulate(a) => {
                a.model.apply(&mut c);
                a.behavior.apply(&mut c)?;
                c.reps = a.reps;
                c.seed = a.seed;
                c.audit = a.audit;
            }
            Command::Compare(a) => {
                c.sizes = a.sizes;
                c.reps = a.reps;
                c.seed = a.seed;
                c.delegate_prob = a.delegate_prob;
                c.abstain_prob = a.abstain_prob;
            }
            Command::Bootstrap(a) => {
                a.data.apply(&mut c);
                c.reps = a.reps;
                c.treatment = a.treatment;
                c.group_size = a.group_size;
            }
            Command::Analyze(a) => {
                a.data.apply(&mut c);
                c.cluster = a.cluster;
                c.permutations = a.permutations;
            }
            Command::GenSynthetic(a) => {
                a.model.apply(&mut c);
                a.behavior.apply(&mut c)?;
                c.sessions = a.sessions;
                c.subjects = a.subjects;
                c.rounds = a.rounds;
                c.seed = a.seed;
            }
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut flags = match cli.command {
        Some(cmd) => {
            let name = cmd.name();
            if let Some(other) = file.command.as_deref().filter(|&c| c != name) {
                return Err(config::usage(format!("config is for '{other}', not '{name}'")));
            }
            cmd.into_config()?
        }
        None if file.command.is_some() => RunConfig::default(),
        None => return Err(config::usage("no subcommand given and the config names none; see --help")),
    };
    // a behaviour given on the command line replaces the file's, whichever form it takes
    if flags.threshold.is_some() || flags.behavior.is_some() {
        file.threshold = None;
        file.behavior = None;
    }
    flags.out = cli.out;
    flags.format = cli.format;
    let merged = flags.over(file);

    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(config::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    commands::dispatch(merged)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
