//! The six label-distribution metrics and their aggregation over instances
//! and trials.
//!
//! Distances (lower is better): Chebyshev, Clark, Canberra, Kullback-Leibler.
//! Similarities (higher is better): cosine, intersection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};

/// Predictions are clipped to at least this value before the KL divergence.
pub const KL_CLIP: f64 = 1e-12;

/// Metric names in report order.
pub const METRIC_NAMES: [&str; 6] = [
    "chebyshev",
    "clark",
    "canberra",
    "kl",
    "cosine",
    "intersection",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub chebyshev: f64,
    pub clark: f64,
    pub canberra: f64,
    pub kl: f64,
    pub cosine: f64,
    pub intersection: f64,
}

impl MetricVector {
    /// Values in [`METRIC_NAMES`] order.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.chebyshev,
            self.clark,
            self.canberra,
            self.kl,
            self.cosine,
            self.intersection,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            chebyshev: v[0],
            clark: v[1],
            canberra: v[2],
            kl: v[3],
            cosine: v[4],
            intersection: v[5],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.to_array()[i])
    }
}

/// One evaluation measure between a predicted and a true distribution.
pub trait Metric: Send + Sync {
    fn name(&self) -> &'static str;
    fn higher_is_better(&self) -> bool;
    /// Inputs are assumed validated: equal, non-zero length, non-negative.
    fn compute(&self, pred: &[f64], truth: &[f64]) -> f64;
}

pub struct Chebyshev;
pub struct Clark;
pub struct Canberra;
pub struct KullbackLeibler;
pub struct Cosine;
pub struct Intersection;

impl Metric for Chebyshev {
    fn name(&self) -> &'static str {
        "chebyshev"
    }

    fn higher_is_better(&self) -> bool {
        false
    }

    fn compute(&self, pred: &[f64], truth: &[f64]) -> f64 {
        pred.iter()
            .zip(truth)
            .fold(0.0, |m, (p, t)| m.max((p - t).abs()))
    }
}

// both-zero terms contribute nothing
fn ratio_terms<'a>(pred: &'a [f64], truth: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    pred.iter().zip(truth).map(|(p, t)| {
        let s = p + t;
        if s > 0.0 {
            (p - t).abs() / s
        } else {
            0.0
        }
    })
}

impl Metric for Clark {
    fn name(&self) -> &'static str {
        "clark"
    }

    fn higher_is_better(&self) -> bool {
        false
    }

    fn compute(&self, pred: &[f64], truth: &[f64]) -> f64 {
        ratio_terms(pred, truth).map(|r| r * r).sum::<f64>().sqrt()
    }
}

impl Metric for Canberra {
    fn name(&self) -> &'static str {
        "canberra"
    }

    fn higher_is_better(&self) -> bool {
        false
    }

    fn compute(&self, pred: &[f64], truth: &[f64]) -> f64 {
        ratio_terms(pred, truth).sum()
    }
}

impl Metric for KullbackLeibler {
    fn name(&self) -> &'static str {
        "kl"
    }

    fn higher_is_better(&self) -> bool {
        false
    }

    /// `sum_j y_j ln(y_j / q_j)` with `q` clipped at [`KL_CLIP`] and
    /// renormalized; terms with `y_j = 0` vanish.
    fn compute(&self, pred: &[f64], truth: &[f64]) -> f64 {
        let clipped: Vec<f64> = pred.iter().map(|p| p.max(KL_CLIP)).collect();
        let mass: f64 = clipped.iter().sum();
        truth
            .iter()
            .zip(&clipped)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, q)| t * (t / (q / mass)).ln())
            .sum()
    }
}

impl Metric for Cosine {
    fn name(&self) -> &'static str {
        "cosine"
    }

    fn higher_is_better(&self) -> bool {
        true
    }

    fn compute(&self, pred: &[f64], truth: &[f64]) -> f64 {
        let dot: f64 = pred.iter().zip(truth).map(|(p, t)| p * t).sum();
        let np = pred.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nt = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        if np == 0.0 || nt == 0.0 {
            0.0
        } else {
            (dot / (np * nt)).min(1.0)
        }
    }
}

impl Metric for Intersection {
    fn name(&self) -> &'static str {
        "intersection"
    }

    fn higher_is_better(&self) -> bool {
        true
    }

    fn compute(&self, pred: &[f64], truth: &[f64]) -> f64 {
        pred.iter().zip(truth).map(|(p, t)| p.min(*t)).sum()
    }
}

/// Metrics selectable by name.
#[derive(Clone)]
pub struct MetricRegistry {
    entries: Vec<Arc<dyn Metric>>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    /// The six standard metrics in [`METRIC_NAMES`] order.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Chebyshev));
        r.register(Arc::new(Clark));
        r.register(Arc::new(Canberra));
        r.register(Arc::new(KullbackLeibler));
        r.register(Arc::new(Cosine));
        r.register(Arc::new(Intersection));
        r
    }

    /// Adds `metric`, replacing any entry with the same name.
    pub fn register(&mut self, metric: Arc<dyn Metric>) {
        match self.entries.iter().position(|m| m.name() == metric.name()) {
            Some(i) => self.entries[i] = metric,
            None => self.entries.push(metric),
        }
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Metric>> {
        self.entries
            .iter()
            .find(|m| m.name() == name)
            .cloned()
            .ok_or_else(|| LdlError::UnknownStrategy {
                kind: "metric",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|m| m.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn Metric>> {
        self.entries.iter()
    }
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(LdlError::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(LdlError::InvalidArgument("empty distribution".into()));
    }
    for &v in pred.iter().chain(truth) {
        if !v.is_finite() || v < 0.0 {
            return Err(LdlError::InvalidArgument(format!(
                "distribution entries must be finite and non-negative, got {v}"
            )));
        }
    }
    Ok(())
}

/// All six metrics of `pred` against `truth`.
pub fn evaluate(pred: &[f64], truth: &[f64]) -> Result<MetricVector> {
    check_pair(pred, truth)?;
    Ok(MetricVector {
        chebyshev: Chebyshev.compute(pred, truth),
        clark: Clark.compute(pred, truth),
        canberra: Canberra.compute(pred, truth),
        kl: KullbackLeibler.compute(pred, truth),
        cosine: Cosine.compute(pred, truth),
        intersection: Intersection.compute(pred, truth),
    })
}

/// Mean and population standard deviation of a set of metric vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: MetricVector,
    pub std: MetricVector,
    pub count: usize,
}

pub fn aggregate(values: &[MetricVector]) -> Result<Summary> {
    if values.is_empty() {
        return Err(LdlError::InvalidArgument(
            "cannot aggregate an empty list".into(),
        ));
    }
    let n = values.len() as f64;
    let mut mean = [0.0; 6];
    for v in values {
        for (m, x) in mean.iter_mut().zip(v.to_array()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 6];
    for v in values {
        for ((s, x), m) in var.iter_mut().zip(v.to_array()).zip(mean) {
            *s += (x - m) * (x - m);
        }
    }
    Ok(Summary {
        mean: MetricVector::from_array(mean),
        std: MetricVector::from_array(var.map(|s| (s / n).sqrt())),
        count: values.len(),
    })
}

/// Per-trial summaries over test instances plus the summary of the trial
/// means across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: Vec<Summary>,
    pub overall: Summary,
}

impl TrialReport {
    pub fn from_trials(trials: Vec<Summary>) -> Result<Self> {
        let means: Vec<MetricVector> = trials.iter().map(|t| t.mean).collect();
        let overall = aggregate(&means)?;
        Ok(Self { trials, overall })
    }
}
