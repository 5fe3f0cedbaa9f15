use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use ldl_liftsap::dataset::{load_dataset, Format, LoadOptions};
use ldl_liftsap::experiment::{
    read_score_cells, run_ablation, run_experiment, run_grid_search, run_stats, write_stats,
    ExperimentConfig, RunOutput,
};
use ldl_liftsap::synthetic::{gaussian_mixture, softmax_linear, MixtureConfig};
use ldl_liftsap::variant::WeightSpec;

#[derive(Parser)]
#[command(name = "liftsap", version, about = "Label distribution learning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repeated train/test trials of one variant.
    Run(ExperimentArgs),
    /// Variants A-D with shared seeds and clustering.
    Ablate(ExperimentArgs),
    /// Fusion-weight grid search on whole datasets.
    Gridsearch {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Lattice spacing.
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Friedman test and Nemenyi critical difference over report CSVs.
    Stats(StatsArgs),
    /// Converts a dataset between canonical text and CSV.
    Convert(ConvertArgs),
    /// Writes a synthetic dataset.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file (canonical text, or CSV by extension). Repeatable.
    #[arg(long)]
    dataset: Vec<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `l,m,e`, `grid` or `grid:STEP`.
    #[arg(long)]
    weights: Option<WeightSpec>,
    /// A, B, C or D.
    #[arg(long)]
    variant: Option<String>,
    /// Prototype clustering: spectral or kmeans.
    #[arg(long)]
    clusterer: Option<String>,
    /// Prototypes per anchor-point block, or `none` for a single block.
    #[arg(long)]
    block_size: Option<String>,
    /// Training share of each trial split.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Rescale label rows that sum to within 1e-3 of one.
    #[arg(long)]
    renormalize: bool,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if !self.dataset.is_empty() {
            cfg.datasets = self.dataset.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = self.sigma {
            cfg.train.feature.sigma = v;
        }
        if let Some(v) = self.alpha {
            cfg.train.feature.alpha = v;
        }
        if let Some(v) = self.weights {
            cfg.weights = v;
            if let WeightSpec::Fixed(w) = v {
                cfg.train.feature.fusion = w;
            }
        }
        if let Some(v) = &self.variant {
            cfg.variant = v.clone();
        }
        if let Some(v) = &self.clusterer {
            cfg.train.feature.clusterer = v.clone();
        }
        if let Some(v) = &self.block_size {
            cfg.train.feature.target_block_size = match v.as_str() {
                "none" => None,
                n => Some(n.parse().with_context(|| format!("bad block size `{n}`"))?),
            };
        }
        if let Some(v) = self.split {
            cfg.split_fraction = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.renormalize |= self.renormalize;
        if cfg.datasets.is_empty() {
            bail!("no dataset given; pass --dataset or a config file");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct StatsArgs {
    /// Report CSV with dataset, algorithm|variant, metric and mean|value
    /// columns. Repeatable.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Critical value of the F distribution to compare against.
    #[arg(long)]
    cv: f64,
    /// Overrides the built-in alpha = 0.05 studentized range table.
    #[arg(long)]
    q_alpha: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Input format (canonical or csv); guessed from the extension if absent.
    #[arg(long)]
    from: Option<Format>,
    /// Output format; guessed from the extension if absent.
    #[arg(long)]
    to: Option<Format>,
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// `mixture` (Gaussian mixture, geometry-driven labels) or `linear`
    /// (softmax of a random linear map).
    #[arg(long, default_value = "mixture")]
    kind: String,
    #[arg(long, default_value_t = 300)]
    instances: usize,
    #[arg(long, default_value_t = 4)]
    features: usize,
    #[arg(long, default_value_t = 4)]
    labels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn finish(run: &RunOutput, out: &Path) -> Result<()> {
    info!(
        "{} trial records written to {} (config {})",
        run.records.len(),
        out.display(),
        &run.config_hash[..12]
    );
    for d in &run.datasets {
        for v in &run.variants {
            if let Some(r) = run.report(d, v) {
                let m = r.overall.mean;
                println!(
                    "{d} {v}: chebyshev {:.4} kl {:.4} intersection {:.4}",
                    m.chebyshev, m.kl, m.intersection
                );
            }
        }
    }
    if !run.failures.is_empty() {
        for f in &run.failures {
            warn!("{} trial {}: {}", f.dataset, f.trial, f.error);
        }
        bail!("{} trial(s) failed", run.failures.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let run = run_experiment(&cfg)?;
            finish(&run, &cfg.out)
        }
        Command::Ablate(args) => {
            let cfg = args.resolve()?;
            let run = run_ablation(&cfg)?;
            finish(&run, &cfg.out)
        }
        Command::Gridsearch { exp, step } => {
            let cfg = exp.resolve()?;
            for r in run_grid_search(&cfg, step)? {
                println!("{}: {} (val kl {:.6})", r.dataset, r.best.weights, r.best.val_kl);
            }
            Ok(())
        }
        Command::Stats(args) => {
            let cells = read_score_cells(&args.input)?;
            let stats = run_stats(&cells, args.cv, args.q_alpha)?;
            write_stats(&args.out, &stats)?;
            for s in &stats {
                println!(
                    "{}: chi2 {:.4} F_F {:?} CD {:.4}",
                    s.metric, s.chi_sq, s.f_f, s.diagram.cd
                );
            }
            Ok(())
        }
        Command::Convert(args) => {
            let from = args.from.unwrap_or_else(|| Format::from_path(&args.input));
            let to = args.to.unwrap_or_else(|| Format::from_path(&args.output));
            let ds = load_dataset(
                &args.input,
                from,
                LoadOptions {
                    renormalize: args.renormalize,
                },
            )?;
            ds.write(&args.output, to)?;
            info!(
                "wrote {} instances to {}",
                ds.instance_count(),
                args.output.display()
            );
            Ok(())
        }
        Command::Generate(args) => {
            let ds = match args.kind.as_str() {
                "mixture" => gaussian_mixture(
                    &MixtureConfig {
                        instances: args.instances,
                        features: args.features,
                        labels: args.labels,
                        ..MixtureConfig::default()
                    },
                    args.seed,
                )?,
                "linear" => softmax_linear(args.instances, args.features, args.labels, 1.0, args.seed)?,
                other => bail!("unknown synthetic kind `{other}`"),
            };
            ds.write(&args.output, Format::from_path(&args.output))?;
            Ok(())
        }
    }
}
