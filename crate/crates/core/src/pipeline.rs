//! Two-stage stacking learner.
//!
//! Training standardizes the features, fits one feature mapper per label on
//! the whole training split, then divides the split into a `Tr` group and a
//! `Val` group shared by every label. Base model `j` learns label `j` from
//! its mapped `Tr` rows and predicts the `Val` rows; the meta model learns
//! the true `Val` distributions from the stacked `Val` predictions.
//!
//! Fusion weights only rescale the mapped features, so one fitted
//! [`FeatureStage`] serves every weight candidate of a grid search or an
//! ablation.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_random, LabelDistributionDataset, SplitIndices};
use crate::error::{LdlError, Result};
use crate::lsf::{fit_lsf_mapper, FeatureConfig, FusionWeights, LsfMapper};
use crate::maxent::{predict_base, predict_meta, train_base, train_meta, BaseModel, MetaModel, OptimizerConfig};
use crate::metrics::{KullbackLeibler, Metric};
use crate::seed::{self, Stage};

/// Version tag of the serialized pipeline.
pub const FORMAT_VERSION: u32 = 1;

/// Smallest training split [`train`] accepts.
pub const MIN_TRAINING_INSTANCES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub feature: FeatureConfig,
    pub optimizer: OptimizerConfig,
    /// Share of the training split assigned to the `Tr` group.
    pub tr_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            feature: FeatureConfig::default(),
            optimizer: OptimizerConfig::default(),
            tr_fraction: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        self.optimizer.validate()?;
        if !(self.tr_fraction > 0.0 && self.tr_fraction < 1.0) {
            return Err(LdlError::InvalidArgument(format!(
                "tr_fraction {} outside (0, 1)",
                self.tr_fraction
            )));
        }
        Ok(())
    }
}

/// Per-feature z-scoring with training statistics. Constant features keep
/// unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
        let scale = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.mean.len() {
            return Err(LdlError::DimensionMismatch {
                expected: self.mean.len(),
                actual: x.len(),
            });
        }
        Ok(Array1::from_iter(
            x.iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(v, (m, s))| (v - m) / s),
        ))
    }

    pub fn apply_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = x.to_owned();
        for mut row in out.outer_iter_mut() {
            let z = self.apply(row.view())?;
            row.assign(&z);
        }
        Ok(out)
    }
}

/// A trained predictor. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub format_version: u32,
    /// Training settings, with the fusion weights actually used.
    pub config: TrainConfig,
    pub standardizer: Standardizer,
    pub mappers: Vec<LsfMapper>,
    pub base_models: Vec<BaseModel>,
    pub meta: MetaModel,
}

impl TrainedPipeline {
    pub fn label_count(&self) -> usize {
        self.mappers.len()
    }

    pub fn feature_count(&self) -> usize {
        self.standardizer.mean.len()
    }

    /// Predicted label distribution of one raw feature vector.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        let z = self.standardizer.apply(x)?;
        let stacked = self
            .mappers
            .iter()
            .zip(&self.base_models)
            .map(|(m, b)| predict_base(b, &m.transform(z.view())?))
            .collect::<Result<Vec<f64>>>()?;
        predict_meta(&self.meta, &stacked)
    }

    /// Predictions for every row of `x`.
    pub fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let rows = (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict(x.row(i)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros((x.nrows(), self.label_count()));
        for (mut o, r) in out.outer_iter_mut().zip(rows) {
            o.assign(&ArrayView1::from(&r));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: TrainedPipeline = serde_json::from_str(text)?;
        if p.format_version != FORMAT_VERSION {
            return Err(LdlError::InvalidArgument(format!(
                "unsupported pipeline format version {}",
                p.format_version
            )));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| LdlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LdlError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Dimensions of the fitted per-label feature spaces.
    pub fn label_dims(&self) -> Vec<LabelDims> {
        self.mappers.iter().map(LabelDims::of).collect()
    }
}

/// Sizes recorded for one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDims {
    pub label: usize,
    pub positive: usize,
    pub negative: usize,
    pub uncertain: usize,
    pub clusters: usize,
    pub uncertain_clusters: usize,
    pub anchor_points: usize,
    pub output_dim: usize,
    pub degenerate_clustering: bool,
}

impl LabelDims {
    pub fn of(m: &LsfMapper) -> Self {
        let p = &m.prototypes;
        Self {
            label: m.label_index,
            positive: m.partition.positive.len(),
            negative: m.partition.negative.len(),
            uncertain: m.partition.uncertain.len(),
            clusters: p.positive.k(),
            uncertain_clusters: p.uncertain.k(),
            anchor_points: m.saps.len(),
            output_dim: m.output_dim,
            degenerate_clustering: p.positive.degenerate
                || p.negative.degenerate
                || p.uncertain.degenerate,
        }
    }
}

/// Unweighted feature parts of a set of rows for one label.
#[derive(Debug, Clone)]
struct PartRows {
    phi: Array2<f64>,
    chi: Array2<f64>,
    psi: Array2<f64>,
}

impl PartRows {
    fn build(mapper: &LsfMapper, x: ArrayView2<f64>) -> Result<Self> {
        let parts = x
            .outer_iter()
            .map(|r| mapper.parts(r))
            .collect::<Result<Vec<_>>>()?;
        let stack = |f: &dyn Fn(usize) -> Vec<f64>, width: usize| {
            let mut a = Array2::zeros((parts.len(), width));
            for (i, mut row) in a.outer_iter_mut().enumerate() {
                row.assign(&ArrayView1::from(&f(i)));
            }
            a
        };
        let (wp, wc) = parts
            .first()
            .map_or((0, 0), |p| (p.phi.len(), p.chi.len()));
        Ok(Self {
            phi: stack(&|i| parts[i].phi.clone(), wp),
            chi: stack(&|i| parts[i].chi.clone(), wc),
            psi: stack(&|i| parts[i].psi.clone(), wc),
        })
    }

    // column layout matches `lsf::fuse`
    fn fuse(&self, w: FusionWeights) -> Array2<f64> {
        let (n, a) = self.phi.dim();
        let b = self.chi.ncols();
        let mut out = Array2::zeros((n, a + 2 * b));
        out.slice_mut(s![.., ..a]).assign(&(&self.phi * w.lambda));
        out.slice_mut(s![.., a..a + b]).assign(&(&self.chi * w.mu));
        out.slice_mut(s![.., a + b..]).assign(&(&self.psi * w.epsilon));
        out
    }
}

/// Everything in training that does not depend on the fusion weights.
pub struct FeatureStage {
    config: TrainConfig,
    standardizer: Standardizer,
    mappers: Vec<LsfMapper>,
    split: SplitIndices,
    tr_parts: Vec<PartRows>,
    val_parts: Vec<PartRows>,
    tr_degrees: Array2<f64>,
    val_truth: Array2<f64>,
}

/// Outcome of evaluating one weight candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub weights: FusionWeights,
    /// Mean KL divergence of the meta model's predictions on `Val`.
    pub val_kl: f64,
}

/// The chosen candidate and its pipeline.
#[derive(Debug, Clone)]
pub struct Selection {
    pub pipeline: TrainedPipeline,
    pub best: CandidateScore,
    /// Every evaluated candidate, in input order.
    pub scores: Vec<CandidateScore>,
}

struct Models {
    base: Vec<BaseModel>,
    meta: MetaModel,
    val_kl: f64,
}

impl FeatureStage {
    /// Standardizes, splits into `Tr`/`Val` and fits every label's mapper.
    pub fn fit(dataset: &LabelDistributionDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let n = dataset.instance_count();
        if n < MIN_TRAINING_INSTANCES {
            return Err(LdlError::InvalidArgument(format!(
                "training needs at least {MIN_TRAINING_INSTANCES} instances, got {n}"
            )));
        }
        let standardizer = Standardizer::fit(dataset.features().view());
        let x = standardizer.apply_rows(dataset.features().view())?;
        let y = dataset.distributions();
        let split = split_random(n, cfg.tr_fraction, seed::derive(cfg.seed, 0, Stage::TrainValSplit))?;
        if split.train.len() < 2 {
            return Err(LdlError::InvalidArgument(format!(
                "Tr group of {} instances is too small",
                split.train.len()
            )));
        }

        let mappers = (0..dataset.label_count())
            .into_par_iter()
            .map(|j| fit_lsf_mapper(x.view(), y.column(j), j, &cfg.feature, cfg.seed))
            .collect::<Result<Vec<_>>>()?;
        for m in &mappers {
            if m.prototypes.positive.degenerate || m.prototypes.negative.degenerate {
                log::warn!("label {}: clustering fell back on identical points", m.label_index);
            }
        }

        let x_tr = x.select(Axis(0), &split.train);
        let x_val = x.select(Axis(0), &split.test);
        let (tr_parts, val_parts): (Vec<_>, Vec<_>) = mappers
            .par_iter()
            .map(|m| Ok((PartRows::build(m, x_tr.view())?, PartRows::build(m, x_val.view())?)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self {
            config: cfg.clone(),
            standardizer,
            tr_degrees: y.select(Axis(0), &split.train),
            val_truth: y.select(Axis(0), &split.test),
            mappers,
            split,
            tr_parts,
            val_parts,
        })
    }

    pub fn mappers(&self) -> &[LsfMapper] {
        &self.mappers
    }

    /// Row indices (into the training split) of the `Tr` and `Val` groups.
    pub fn tr_val_split(&self) -> (&[usize], &[usize]) {
        (&self.split.train, &self.split.test)
    }

    fn fit_models(&self, w: FusionWeights) -> Result<Models> {
        let opt = &self.config.optimizer;
        let per_label = (0..self.mappers.len())
            .into_par_iter()
            .map(|j| {
                let z_tr = self.tr_parts[j].fuse(w);
                let base = train_base(j, z_tr.view(), self.tr_degrees.column(j), opt)?;
                let z_val = self.val_parts[j].fuse(w);
                let preds = z_val
                    .outer_iter()
                    .map(|r| predict_base(&base, r.as_slice().expect("contiguous")))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((base, preds))
            })
            .collect::<Result<Vec<_>>>()?;

        let n_val = self.val_truth.nrows();
        let mut stacked = Array2::zeros((n_val, per_label.len()));
        for (j, (_, preds)) in per_label.iter().enumerate() {
            stacked.column_mut(j).assign(&ArrayView1::from(preds));
        }
        let meta = train_meta(stacked.view(), self.val_truth.view(), opt)?;
        let mut kl = 0.0;
        for (f, y) in stacked.outer_iter().zip(self.val_truth.outer_iter()) {
            let q = predict_meta(&meta, f.as_slice().expect("contiguous"))?;
            kl += KullbackLeibler.compute(&q, y.as_slice().expect("contiguous"));
        }
        Ok(Models {
            base: per_label.into_iter().map(|(b, _)| b).collect(),
            meta,
            val_kl: kl / n_val as f64,
        })
    }

    fn assemble(&self, w: FusionWeights, models: Models) -> TrainedPipeline {
        let mut config = self.config.clone();
        config.feature.fusion = w;
        TrainedPipeline {
            format_version: FORMAT_VERSION,
            config,
            standardizer: self.standardizer.clone(),
            mappers: self.mappers.iter().map(|m| m.with_fusion(w)).collect(),
            base_models: models.base,
            meta: models.meta,
        }
    }

    /// Trains base and meta models with fixed weights.
    pub fn train(&self, w: FusionWeights) -> Result<(TrainedPipeline, CandidateScore)> {
        let models = self.fit_models(w)?;
        let score = CandidateScore {
            weights: w,
            val_kl: models.val_kl,
        };
        Ok((self.assemble(w, models), score))
    }

    /// Trains with every candidate and keeps the one with the lowest mean
    /// `Val` KL divergence; exact ties go to the lexicographically smallest
    /// `(lambda, mu, epsilon)`.
    pub fn select(&self, candidates: &[FusionWeights]) -> Result<Selection> {
        if candidates.is_empty() {
            return Err(LdlError::InvalidArgument("no weight candidates".into()));
        }
        if let [w] = candidates {
            let (pipeline, best) = self.train(*w)?;
            return Ok(Selection {
                pipeline,
                best,
                scores: vec![best],
            });
        }
        let scores = candidates
            .par_iter()
            .map(|&w| {
                self.fit_models(w).map(|m| CandidateScore {
                    weights: w,
                    val_kl: m.val_kl,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let best = *scores
            .iter()
            .min_by(|a, b| {
                a.val_kl.total_cmp(&b.val_kl).then_with(|| {
                    let key = |c: &CandidateScore| [c.weights.lambda, c.weights.mu, c.weights.epsilon];
                    let (ka, kb) = (key(a), key(b));
                    ka.iter()
                        .zip(&kb)
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
            })
            .expect("non-empty");
        let (pipeline, _) = self.train(best.weights)?;
        Ok(Selection {
            pipeline,
            best,
            scores,
        })
    }
}

/// Trains a pipeline with the fusion weights in `cfg`.
pub fn train(dataset: &LabelDistributionDataset, cfg: &TrainConfig) -> Result<TrainedPipeline> {
    let stage = FeatureStage::fit(dataset, cfg)?;
    Ok(stage.train(cfg.feature.fusion)?.0)
}

/// Searches the weight lattice with spacing `step` and returns the weights
/// with the lowest mean `Val` KL divergence.
pub fn grid_search_fusion(
    dataset: &LabelDistributionDataset,
    cfg: &TrainConfig,
    step: f64,
) -> Result<FusionWeights> {
    let lattice = FusionWeights::lattice(step)?;
    let stage = FeatureStage::fit(dataset, cfg)?;
    Ok(stage.select(&lattice)?.best.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::softmax_linear;
    use ndarray::array;

    fn small_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn standardizer_hand_values() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view());
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.apply(array![3.0, 7.0].view()).unwrap().to_vec(), vec![1.0, 2.0]);
        assert!(s.apply(array![1.0].view()).is_err());
    }

    #[test]
    fn fused_rows_match_mapper_transform() {
        let ds = softmax_linear(40, 3, 3, 1.0, 5).unwrap();
        let stage = FeatureStage::fit(&ds, &small_cfg(1)).unwrap();
        let w = FusionWeights::new(0.2, 0.3, 0.5).unwrap();
        let x = stage.standardizer.apply_rows(ds.features().view()).unwrap();
        let tr = x.select(Axis(0), &stage.split.train);
        for (j, m) in stage.mappers.iter().enumerate() {
            let fused = stage.tr_parts[j].fuse(w);
            let direct = m.with_fusion(w).transform_rows(tr.view()).unwrap();
            assert_eq!(fused, direct);
        }
    }

    #[test]
    fn predictions_lie_on_simplex() {
        let ds = softmax_linear(60, 3, 4, 1.0, 2).unwrap();
        let p = train(&ds, &small_cfg(3)).unwrap();
        let preds = p.predict_rows(ds.features().view()).unwrap();
        for row in preds.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
        let a = p.predict(ds.features().row(0)).unwrap();
        let b = p.predict(ds.features().row(0)).unwrap();
        assert_eq!(a, b);
        assert!(p.predict(array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn single_label_predicts_one() {
        let x = Array2::from_shape_fn((12, 2), |(i, k)| (i * 3 + k) as f64 * 0.1);
        let y = Array2::ones((12, 1));
        let ds = LabelDistributionDataset::new("one", x, y).unwrap();
        let p = train(&ds, &small_cfg(0)).unwrap();
        assert_eq!(p.predict(array![0.3, 0.1].view()).unwrap(), vec![1.0]);
    }

    #[test]
    fn too_small_training_split() {
        let ds = softmax_linear(3, 2, 2, 1.0, 0).unwrap();
        assert!(train(&ds, &small_cfg(0)).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ds = softmax_linear(40, 3, 3, 1.0, 8).unwrap();
        let p = train(&ds, &small_cfg(4)).unwrap();
        let text = p.to_json().unwrap();
        let back = TrainedPipeline::from_json(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_json().unwrap(), text);
        let again = train(&ds, &small_cfg(4)).unwrap().to_json().unwrap();
        assert_eq!(again, text);
    }

    #[test]
    fn selection_never_worse_on_val_than_any_candidate() {
        let ds = softmax_linear(60, 3, 3, 1.5, 6).unwrap();
        let stage = FeatureStage::fit(&ds, &small_cfg(2)).unwrap();
        let lattice = FusionWeights::lattice(0.5).unwrap();
        let sel = stage.select(&lattice).unwrap();
        assert_eq!(sel.scores.len(), 6);
        assert!(sel.scores.iter().all(|s| sel.best.val_kl <= s.val_kl));
        assert_eq!(sel.pipeline.config.feature.fusion, sel.best.weights);
        let (_, direct) = stage.train(sel.best.weights).unwrap();
        assert_eq!(direct.val_kl, sel.best.val_kl);
    }

    #[test]
    fn ties_go_to_the_lexicographically_smallest() {
        // a constant target makes every candidate fit equally well
        let x = Array2::from_shape_fn((20, 2), |(i, k)| ((i * 7 + k * 3) % 11) as f64);
        let y = Array2::from_elem((20, 2), 0.5);
        let ds = LabelDistributionDataset::new("flat", x, y).unwrap();
        let stage = FeatureStage::fit(&ds, &small_cfg(0)).unwrap();
        let mut lattice = FusionWeights::lattice(0.5).unwrap();
        lattice.reverse();
        let sel = stage.select(&lattice).unwrap();
        let min = sel.scores.iter().map(|s| s.val_kl).fold(f64::INFINITY, f64::min);
        let tied: Vec<_> = sel.scores.iter().filter(|s| s.val_kl == min).collect();
        let smallest = tied
            .iter()
            .map(|s| (s.weights.lambda, s.weights.mu, s.weights.epsilon))
            .fold((2.0, 2.0, 2.0), |a, b| if b < a { b } else { a });
        let w = sel.best.weights;
        assert_eq!((w.lambda, w.mu, w.epsilon), smallest);
    }
}
