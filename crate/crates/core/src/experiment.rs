//! Repeated-trial benchmark harness.
//!
//! Trial `t` splits each dataset with seed `seed + t`, trains on the
//! training split and evaluates on the test split. Trials run concurrently
//! on a dedicated thread pool; records are merged in (dataset, trial)
//! order, so every report is byte-identical for any worker count. Wall
//! clock timings go to a separate file for that reason.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_dataset, split_random, Format, LabelDistributionDataset, LoadOptions};
use crate::error::{LdlError, Result};
use crate::lsf::{FusionWeights, LsfMapper};
use crate::metrics::{aggregate, evaluate, MetricRegistry, Summary, TrialReport, METRIC_NAMES};
use crate::pipeline::{CandidateScore, FeatureStage, LabelDims, TrainConfig};
use crate::stats::{cd_diagram_data, friedman, nemenyi_cd, q_alpha_05, rank, CdDiagram, FStatistic};
use crate::variant::{Variant, VariantRegistry, WeightSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub datasets: Vec<PathBuf>,
    pub trials: usize,
    /// Share of each dataset used for training in a trial.
    pub split_fraction: f64,
    pub train: TrainConfig,
    pub weights: WeightSpec,
    pub variant: String,
    pub out: PathBuf,
    /// Thread count; 0 uses every available core. Never serialized, since
    /// it cannot change any result.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub renormalize: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            trials: 10,
            split_fraction: 0.5,
            train: TrainConfig::default(),
            weights: WeightSpec::default(),
            variant: "D".into(),
            out: PathBuf::from("out"),
            workers: 0,
            renormalize: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(LdlError::InvalidArgument("trials must be at least 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(LdlError::InvalidArgument(format!(
                "split fraction {} outside (0, 1)",
                self.split_fraction
            )));
        }
        self.train.validate()
    }
}

/// A dataset together with the digest of its canonical text.
#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub data: LabelDistributionDataset,
    pub digest: String,
}

impl NamedDataset {
    pub fn new(data: LabelDistributionDataset) -> Self {
        let digest = sha256_hex(data.to_canonical_string().as_bytes());
        Self { data, digest }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Vec<NamedDataset>> {
    if cfg.datasets.is_empty() {
        return Err(LdlError::InvalidArgument("no datasets given".into()));
    }
    let opts = LoadOptions {
        renormalize: cfg.renormalize,
    };
    cfg.datasets
        .iter()
        .map(|p| load_dataset(p, Format::from_path(p), opts).map(NamedDataset::new))
        .collect()
}

/// Digest of everything that determines the outputs: the settings minus
/// paths and worker count, plus the dataset contents.
pub fn config_hash(cfg: &ExperimentConfig, datasets: &[NamedDataset]) -> Result<String> {
    let mut view = cfg.clone();
    view.datasets.clear();
    view.out = PathBuf::new();
    let mut text = serde_json::to_string(&view)?;
    for d in datasets {
        text.push('\n');
        text.push_str(&d.digest);
    }
    Ok(sha256_hex(text.as_bytes()))
}

/// Digest of the weight-independent parts of fitted mappers.
pub fn artifact_hash(mappers: &[LsfMapper]) -> Result<String> {
    let mut hasher = Sha256::new();
    for m in mappers {
        hasher.update(serde_json::to_string(&(&m.partition, &m.prototypes, &m.blocks, &m.saps))?);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub dataset: String,
    pub variant: String,
    pub trial: usize,
    pub seed: u64,
    pub weights: FusionWeights,
    pub val_kl: f64,
    /// Metrics over the trial's test instances.
    pub summary: Summary,
    pub label_dims: Vec<LabelDims>,
    pub artifact_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub dataset: String,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub dataset: String,
    pub trial: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config_hash: String,
    pub seed: u64,
    pub variants: Vec<String>,
    pub datasets: Vec<String>,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub timings: Vec<TrialTiming>,
}

impl RunOutput {
    /// Report over trials for one dataset and variant, if any trial passed.
    pub fn report(&self, dataset: &str, variant: &str) -> Option<TrialReport> {
        let trials: Vec<Summary> = self
            .records
            .iter()
            .filter(|r| r.dataset == dataset && r.variant == variant)
            .map(|r| r.summary)
            .collect();
        TrialReport::from_trials(trials).ok()
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LdlError::InvalidArgument(format!("cannot build thread pool: {e}")))
}

fn run_trial(
    ds: &LabelDistributionDataset,
    trial: usize,
    cfg: &ExperimentConfig,
    variants: &[Arc<dyn Variant>],
) -> Result<Vec<TrialRecord>> {
    let seed = cfg.train.seed.wrapping_add(trial as u64);
    let split = split_random(ds.instance_count(), cfg.split_fraction, seed)?;
    let train_ds = ds.subset(&split.train);
    let test_ds = ds.subset(&split.test);
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let stage = FeatureStage::fit(&train_ds, &train_cfg)?;
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        let candidates = v.candidates(&cfg.weights)?;
        let sel = stage.select(&candidates)?;
        let preds = sel.pipeline.predict_rows(test_ds.features().view())?;
        let per_instance = preds
            .outer_iter()
            .zip(test_ds.distributions().outer_iter())
            .map(|(q, y)| evaluate(q.as_slice().expect("contiguous"), &y.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        out.push(TrialRecord {
            dataset: ds.name.clone(),
            variant: v.name().to_string(),
            trial,
            seed,
            weights: sel.best.weights,
            val_kl: sel.best.val_kl,
            summary: aggregate(&per_instance)?,
            label_dims: sel.pipeline.label_dims(),
            artifact_hash: artifact_hash(&sel.pipeline.mappers)?,
        });
    }
    Ok(out)
}

/// Runs every trial of every dataset for each of `variants`. Variants of
/// one trial share the fitted feature stage.
pub fn run_trials(
    datasets: &[NamedDataset],
    cfg: &ExperimentConfig,
    variants: &[Arc<dyn Variant>],
) -> Result<RunOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..cfg.trials).map(move |t| (d, t)))
        .collect();
    let pool = thread_pool(cfg.workers)?;
    let results: Vec<(Result<Vec<TrialRecord>>, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, t)| {
                let start = Instant::now();
                let r = run_trial(&datasets[d].data, t, cfg, variants);
                (r, start.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut timings = Vec::new();
    for (&(d, t), (r, secs)) in jobs.iter().zip(results) {
        let dataset = datasets[d].data.name.clone();
        match r {
            Ok(recs) => records.extend(recs),
            Err(e) => {
                log::error!("{dataset} trial {t} failed: {e}");
                failures.push(TrialFailure {
                    dataset: dataset.clone(),
                    trial: t,
                    error: e.to_string(),
                });
            }
        }
        timings.push(TrialTiming {
            dataset,
            trial: t,
            seconds: secs,
        });
    }
    Ok(RunOutput {
        config_hash: config_hash(cfg, datasets)?,
        seed: cfg.train.seed,
        variants: variants.iter().map(|v| v.name().to_string()).collect(),
        datasets: datasets.iter().map(|d| d.data.name.clone()).collect(),
        records,
        failures,
        timings,
    })
}

fn stamp(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}\n")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LdlError::io(path, e))
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    dataset: &'a str,
    variant: &'a str,
    report: TrialReport,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config_hash: &'a str,
    seed: u64,
    results: Vec<SummaryEntry<'a>>,
}

#[derive(Serialize)]
struct ManifestTrial<'a> {
    dataset: &'a str,
    variant: &'a str,
    trial: usize,
    seed: u64,
    weights: FusionWeights,
    val_kl: f64,
    artifact_hash: &'a str,
    label_dims: &'a [LabelDims],
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    datasets: Vec<(&'a str, &'a str)>,
    trials: Vec<ManifestTrial<'a>>,
    failures: &'a [TrialFailure],
}

#[derive(Serialize)]
struct TimingsFile<'a> {
    config_hash: &'a str,
    seed: u64,
    trials: &'a [TrialTiming],
}

/// Writes `trials.csv`, `summary.csv`, `summary.json`, `plot.csv`,
/// `manifest.json` and `timings.json` (plus `ablation.csv` when several
/// variants ran) into `dir`. Returns the written paths.
pub fn write_run(
    dir: &Path,
    run: &RunOutput,
    cfg: &ExperimentConfig,
    datasets: &[NamedDataset],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| LdlError::io(dir, e))?;
    let head = stamp(&run.config_hash, run.seed);
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        write_file(&p, &text)?;
        written.push(p);
        Ok(())
    };

    let mut trials = head.clone();
    trials.push_str("dataset,variant,trial,seed,lambda,mu,epsilon,val_kl");
    for m in METRIC_NAMES {
        let _ = write!(trials, ",{m}");
    }
    trials.push('\n');
    let mut plot = head.clone();
    plot.push_str("dataset,variant,metric,trial,value\n");
    for r in &run.records {
        let w = r.weights;
        let _ = write!(
            trials,
            "{},{},{},{},{},{},{},{}",
            r.dataset, r.variant, r.trial, r.seed, w.lambda, w.mu, w.epsilon, r.val_kl
        );
        for (m, v) in METRIC_NAMES.iter().zip(r.summary.mean.to_array()) {
            let _ = write!(trials, ",{v}");
            let _ = writeln!(plot, "{},{},{},{},{}", r.dataset, r.variant, m, r.trial, v);
        }
        trials.push('\n');
    }
    emit("trials.csv", trials)?;
    emit("plot.csv", plot)?;

    let mut summary = head.clone();
    summary.push_str("dataset,variant,metric,mean,std\n");
    let mut entries = Vec::new();
    for d in &run.datasets {
        for v in &run.variants {
            let Some(rep) = run.report(d, v) else { continue };
            for ((m, mean), std) in METRIC_NAMES
                .iter()
                .zip(rep.overall.mean.to_array())
                .zip(rep.overall.std.to_array())
            {
                let _ = writeln!(summary, "{d},{v},{m},{mean},{std}");
            }
            entries.push(SummaryEntry {
                dataset: d,
                variant: v,
                report: rep,
            });
        }
    }
    emit("summary.csv", summary)?;

    if run.variants.len() > 1 {
        let mut ablation = head.clone();
        let _ = writeln!(ablation, "dataset,metric,{}", run.variants.join(","));
        for d in &run.datasets {
            let reps: Vec<Option<TrialReport>> = run.variants.iter().map(|v| run.report(d, v)).collect();
            for (i, m) in METRIC_NAMES.iter().enumerate() {
                let cells: Vec<String> = reps
                    .iter()
                    .map(|r| r.as_ref().map_or(String::new(), |r| r.overall.mean.to_array()[i].to_string()))
                    .collect();
                let _ = writeln!(ablation, "{d},{m},{}", cells.join(","));
            }
        }
        emit("ablation.csv", ablation)?;
    }

    let summary_json = SummaryFile {
        config_hash: &run.config_hash,
        seed: run.seed,
        results: entries,
    };
    emit("summary.json", serde_json::to_string_pretty(&summary_json)? + "\n")?;

    let manifest = Manifest {
        config_hash: &run.config_hash,
        seed: run.seed,
        config: cfg,
        datasets: datasets
            .iter()
            .map(|d| (d.data.name.as_str(), d.digest.as_str()))
            .collect(),
        trials: run
            .records
            .iter()
            .map(|r| ManifestTrial {
                dataset: &r.dataset,
                variant: &r.variant,
                trial: r.trial,
                seed: r.seed,
                weights: r.weights,
                val_kl: r.val_kl,
                artifact_hash: &r.artifact_hash,
                label_dims: &r.label_dims,
            })
            .collect(),
        failures: &run.failures,
    };
    emit("manifest.json", serde_json::to_string_pretty(&manifest)? + "\n")?;

    let timings = TimingsFile {
        config_hash: &run.config_hash,
        seed: run.seed,
        trials: &run.timings,
    };
    emit("timings.json", serde_json::to_string_pretty(&timings)? + "\n")?;
    Ok(written)
}

/// Runs the configured variant on every dataset and writes the reports.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let variant = VariantRegistry::standard().get(&cfg.variant)?;
    let datasets = load_datasets(cfg)?;
    let run = run_trials(&datasets, cfg, &[variant])?;
    write_run(&cfg.out, &run, cfg, &datasets)?;
    Ok(run)
}

/// Runs all four variants with shared seeds and shared clustering.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let registry = VariantRegistry::standard();
    let variants = registry
        .names()
        .into_iter()
        .map(|n| registry.get(n))
        .collect::<Result<Vec<_>>>()?;
    let datasets = load_datasets(cfg)?;
    let run = run_trials(&datasets, cfg, &variants)?;
    write_run(&cfg.out, &run, cfg, &datasets)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: String,
    pub step: f64,
    pub best: CandidateScore,
    pub scores: Vec<CandidateScore>,
}

/// Grid search on the whole of each dataset, used as a training split.
pub fn run_grid_search(cfg: &ExperimentConfig, step: f64) -> Result<Vec<GridReport>> {
    cfg.validate()?;
    let lattice = FusionWeights::lattice(step)?;
    let datasets = load_datasets(cfg)?;
    let hash = config_hash(cfg, &datasets)?;
    let pool = thread_pool(cfg.workers)?;
    let reports = pool.install(|| {
        datasets
            .iter()
            .map(|d| {
                let stage = FeatureStage::fit(&d.data, &cfg.train)?;
                let sel = stage.select(&lattice)?;
                Ok(GridReport {
                    config_hash: hash.clone(),
                    seed: cfg.train.seed,
                    dataset: d.data.name.clone(),
                    step,
                    best: sel.best,
                    scores: sel.scores,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    fs::create_dir_all(&cfg.out).map_err(|e| LdlError::io(&cfg.out, e))?;
    let path = cfg.out.join("gridsearch.json");
    write_file(&path, &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    Ok(reports)
}

/// One score of one algorithm on one dataset for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub dataset: String,
    pub algorithm: String,
    pub metric: String,
    pub value: f64,
}

/// Reads score cells from report CSVs. Accepted columns: `dataset`,
/// `algorithm` or `variant`, `metric`, and `mean` or `value`. Lines starting
/// with `#` are ignored. Repeated cells (e.g. one per trial) are averaged.
pub fn read_score_cells(paths: &[PathBuf]) -> Result<Vec<ScoreCell>> {
    let mut sums: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    for path in paths {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |names: &[&str]| {
            headers
                .iter()
                .position(|h| names.contains(&h.trim()))
                .ok_or_else(|| {
                    LdlError::InvalidArgument(format!(
                        "{}: missing column {}",
                        path.display(),
                        names.join("/")
                    ))
                })
        };
        let (cd, ca, cm, cv) = (
            col(&["dataset"])?,
            col(&["algorithm", "variant"])?,
            col(&["metric"])?,
            col(&["mean", "value"])?,
        );
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let value: f64 = rec[cv].trim().parse().map_err(|_| LdlError::Parse {
                line: i + 2,
                message: format!("{}: bad score `{}`", path.display(), &rec[cv]),
            })?;
            let e = sums
                .entry((rec[cd].to_string(), rec[ca].to_string(), rec[cm].to_string()))
                .or_insert((0.0, 0));
            e.0 += value;
            e.1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|((dataset, algorithm, metric), (s, n))| ScoreCell {
            dataset,
            algorithm,
            metric,
            value: s / n as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub metric: String,
    pub higher_is_better: bool,
    pub datasets: Vec<String>,
    pub algorithms: Vec<String>,
    pub chi_sq: f64,
    pub f_f: FStatistic,
    /// Critical value of the F distribution the statistic is compared to.
    pub critical_value: f64,
    pub rejects_equivalence: bool,
    pub q_alpha: f64,
    pub diagram: CdDiagram,
}

/// Friedman and Nemenyi results for every metric in `cells`. `q_alpha`
/// overrides the built-in alpha = 0.05 table.
pub fn run_stats(cells: &[ScoreCell], cv: f64, q_alpha: Option<f64>) -> Result<Vec<MetricStats>> {
    let registry = MetricRegistry::standard();
    let mut by_metric: BTreeMap<&str, Vec<&ScoreCell>> = BTreeMap::new();
    for c in cells {
        by_metric.entry(c.metric.as_str()).or_default().push(c);
    }
    let position = |m: &str| registry.names().iter().position(|n| *n == m).unwrap_or(usize::MAX);
    let mut metrics: Vec<&str> = by_metric.keys().copied().collect();
    metrics.sort_by_key(|m| (position(m), m.to_string()));

    let mut out = Vec::new();
    for metric in metrics {
        let higher = registry.get(metric)?.higher_is_better();
        let cells = &by_metric[metric];
        let mut datasets: Vec<String> = cells.iter().map(|c| c.dataset.clone()).collect();
        let mut algorithms: Vec<String> = cells.iter().map(|c| c.algorithm.clone()).collect();
        datasets.sort();
        datasets.dedup();
        algorithms.sort();
        algorithms.dedup();
        let lookup: BTreeMap<(&str, &str), f64> = cells
            .iter()
            .map(|c| ((c.dataset.as_str(), c.algorithm.as_str()), c.value))
            .collect();
        let mut scores = ndarray::Array2::zeros((datasets.len(), algorithms.len()));
        for (i, d) in datasets.iter().enumerate() {
            for (j, a) in algorithms.iter().enumerate() {
                scores[(i, j)] = *lookup.get(&(d.as_str(), a.as_str())).ok_or_else(|| {
                    LdlError::MissingCell {
                        dataset: d.clone(),
                        algorithm: a.clone(),
                        metric: metric.to_string(),
                    }
                })?;
            }
        }
        let table = rank(scores.view(), higher)?;
        let fr = friedman(&table);
        let s = algorithms.len();
        let q = match q_alpha {
            Some(q) => q,
            None => q_alpha_05(s).ok_or_else(|| {
                LdlError::InvalidArgument(format!(
                    "no tabulated q for {s} algorithms; pass one explicitly"
                ))
            })?,
        };
        let cd = nemenyi_cd(s, datasets.len(), q)?;
        let rejects = match fr.f_f {
            FStatistic::Value(f) => f > cv,
            FStatistic::Saturated => true,
        };
        out.push(MetricStats {
            metric: metric.to_string(),
            higher_is_better: higher,
            diagram: cd_diagram_data(&table, &algorithms, cd)?,
            datasets,
            algorithms,
            chi_sq: fr.chi_sq,
            f_f: fr.f_f,
            critical_value: cv,
            rejects_equivalence: rejects,
            q_alpha: q,
        });
    }
    Ok(out)
}

/// Writes `stats.json` and `stats.csv` into `dir`.
pub fn write_stats(dir: &Path, stats: &[MetricStats]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| LdlError::io(dir, e))?;
    let json = dir.join("stats.json");
    write_file(&json, &(serde_json::to_string_pretty(stats)? + "\n"))?;
    let mut csv = String::new();
    if let Some(first) = stats.first() {
        let _ = writeln!(csv, "# cd={:.4} q_alpha={}", first.diagram.cd, first.q_alpha);
    }
    csv.push_str("metric,datasets,algorithms,chi_sq,f_f,critical_value,rejects,cd\n");
    for s in stats {
        let f = match s.f_f {
            FStatistic::Value(v) => v.to_string(),
            FStatistic::Saturated => "saturated".into(),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            s.metric,
            s.datasets.len(),
            s.algorithms.len(),
            s.chi_sq,
            f,
            s.critical_value,
            s.rejects_equivalence,
            s.diagram.cd
        );
    }
    let path = dir.join("stats.csv");
    write_file(&path, &csv)?;
    Ok(vec![json, path])
}
