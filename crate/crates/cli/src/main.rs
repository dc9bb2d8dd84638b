mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use proxyfit_core::evaluation::{Approach, Weighting};
use proxyfit_core::{ReferenceConfig, Task};

use crate::config::{ReferenceKind, RunConfig};

/// Fit probabilistic reference models and project them onto small decision trees.
#[derive(Debug, Parser)]
#[command(name = "proxyfit", version)]
struct Cli {
    /// Worker threads for parallel fitting (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a reference model on the training split and save it.
    FitReference(CommonArgs),
    /// Project a saved reference model onto a tree, globally or around one point.
    Explain(ExplainArgs),
    /// Test RMSE of prior and utility trees over a range of sizes.
    Sweep(SweepArgs),
    /// Pairwise dissimilarity of trees fit to bootstrap resamples.
    Stability(StabilityArgs),
    /// Local fidelity of utility and direct-fit trees over the test split.
    Fidelity(FidelityArgs),
    /// Render the tree of an explanation report as Graphviz DOT.
    ExportDot(ExportDotArgs),
    /// Write the bundled synthetic datasets.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target column name.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, value_enum)]
    reference: Option<ReferenceKind>,
    /// Ensemble size (ensemble reference only).
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProxyArgs {
    /// Fixed number of leaves.
    #[arg(long, conflicts_with = "cv")]
    size: Option<usize>,
    /// Choose the size by cross-validation.
    #[arg(long)]
    cv: bool,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
}

#[derive(Debug, Args)]
struct NeighborhoodArgs {
    /// Neighborhood standard deviation.
    #[arg(long)]
    sd: Option<f64>,
    /// Neighborhood sample count.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Global,
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ApproachArg {
    Prior,
    Utility,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WeightingArg {
    InternalNodes,
    Leaves,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    proxy: ProxyArgs,
    #[command(flatten)]
    neighborhood: NeighborhoodArgs,
    /// Saved reference model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "global")]
    mode: Mode,
    /// Row of the test split to explain (local mode).
    #[arg(long, conflicts_with = "center")]
    center_row: Option<usize>,
    /// Explicit point to explain, comma separated (local mode).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    center: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    proxy: ProxyArgs,
    /// Leaf counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    proxy: ProxyArgs,
    #[arg(long, value_enum)]
    approach: Option<ApproachArg>,
    /// Number of bootstrap resamples.
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long, value_enum)]
    weighting: Option<WeightingArg>,
}

#[derive(Debug, Args)]
struct FidelityArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    proxy: ProxyArgs,
    #[command(flatten)]
    neighborhood: NeighborhoodArgs,
    /// Saved reference model; fit on the training split when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Score at most this many test rows.
    #[arg(long)]
    test_points: Option<usize>,
    /// Training rows used by the direct-fit local tree.
    #[arg(long)]
    n_local: Option<usize>,
}

#[derive(Debug, Args)]
struct ExportDotArgs {
    /// Explanation report JSON.
    #[arg(long)]
    report: PathBuf,
    /// Output file; defaults to `tree.dot` next to the report.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CommonArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(p) = &self.data {
            cfg.data.path = Some(p.clone());
        }
        if let Some(t) = &self.target {
            cfg.data.target = Some(t.clone());
        }
        if let Some(t) = self.task {
            cfg.data.task = match t {
                TaskArg::Regression => Task::Regression,
                TaskArg::Classification => Task::Classification,
            };
        }
        if let Some(k) = self.reference {
            cfg.set_reference_kind(k);
        }
        if let Some(n) = self.n_trees {
            match &mut cfg.reference {
                ReferenceConfig::Ensemble(e) => e.n_trees = n,
                ReferenceConfig::Gp(_) => {
                    return Err(proxyfit_core::Error::InvalidConfig(
                        "--n-trees needs an ensemble reference".into(),
                    )
                    .into())
                }
            }
        }
        if let Some(f) = self.train_fraction {
            cfg.data.train_fraction = f;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        Ok(cfg)
    }
}

impl ProxyArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.size {
            cfg.proxy.size = Some(s);
        }
        if self.cv {
            cfg.proxy.size = None;
        }
        if let Some(d) = self.max_depth {
            cfg.proxy.max_depth = Some(d);
        }
        if let Some(m) = self.min_leaf {
            cfg.proxy.min_leaf = m;
        }
    }
}

impl NeighborhoodArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(sd) = self.sd {
            cfg.neighborhood.sd = sd;
        }
        if let Some(n) = self.samples {
            cfg.neighborhood.samples = n;
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(proxyfit_core::Error::InvalidConfig("--jobs must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::FitReference(a) => {
            let cfg = a.resolve()?;
            commands::fit_reference(&cfg)
        }
        Command::Explain(a) => {
            let mut cfg = a.common.resolve()?;
            a.proxy.apply(&mut cfg);
            a.neighborhood.apply(&mut cfg);
            let center = match (a.center_row, a.center) {
                (Some(r), _) => Some(commands::Center::Row(r)),
                (None, Some(v)) => Some(commands::Center::Point(v)),
                (None, None) => None,
            };
            commands::explain(&cfg, &a.model, a.mode, center)
        }
        Command::Sweep(a) => {
            let mut cfg = a.common.resolve()?;
            a.proxy.apply(&mut cfg);
            if let Some(s) = a.sizes {
                cfg.evaluation.sizes = s;
            }
            if let Some(r) = a.runs {
                cfg.evaluation.runs = r;
            }
            commands::sweep(&cfg)
        }
        Command::Stability(a) => {
            let mut cfg = a.common.resolve()?;
            a.proxy.apply(&mut cfg);
            if let Some(ap) = a.approach {
                cfg.evaluation.approach = match ap {
                    ApproachArg::Prior => Approach::Prior,
                    ApproachArg::Utility => Approach::Utility,
                };
            }
            if let Some(b) = a.resamples {
                cfg.evaluation.resamples = b;
            }
            if let Some(w) = a.weighting {
                cfg.evaluation.weighting = match w {
                    WeightingArg::InternalNodes => Weighting::InternalNodes,
                    WeightingArg::Leaves => Weighting::Leaves,
                };
            }
            commands::stability(&cfg)
        }
        Command::Fidelity(a) => {
            let mut cfg = a.common.resolve()?;
            a.proxy.apply(&mut cfg);
            a.neighborhood.apply(&mut cfg);
            if let Some(t) = a.test_points {
                cfg.evaluation.test_points = Some(t);
            }
            if let Some(n) = a.n_local {
                cfg.evaluation.n_local = n;
            }
            commands::fidelity(&cfg, a.model.as_deref())
        }
        Command::ExportDot(a) => commands::export_dot(&a.report, a.output.as_deref()),
        Command::Synth(a) => commands::synth(&a.out_dir, a.seed),
    }
}

/// 2 for bad input or configuration, 1 for numerical or runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<proxyfit_core::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
