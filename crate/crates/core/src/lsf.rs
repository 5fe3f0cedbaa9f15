//! Label-specific feature construction.
//!
//! For one label, training instances are split into positive, negative and
//! uncertain sets, each set is clustered into prototypes, and prototypes are
//! grouped into blocks. Structural anchor points (SAPs) are the midpoints of
//! every prototype pair inside a block. An instance is then described by
//!
//! * `phi`: Euclidean distances to every prototype,
//! * `chi`: Euclidean distances to every SAP,
//! * `psi`: cosines between the instance and every SAP,
//!
//! with uncertain-set entries discounted by `alpha`, and the three parts
//! scaled by the fusion weights and concatenated.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::clustering::{form_blocks, BlockStructure, ClusterResult, Clusterer, ClustererRegistry};
use crate::error::{LdlError, Result};
use crate::numeric::{ceil_count, dot, euclidean, norm};
use crate::partition::{
    partition_by_percentile, LabelPartition, DEFAULT_NEGATIVE_FRACTION, DEFAULT_POSITIVE_FRACTION,
};
use crate::seed::{self, Stage};

/// Vectors shorter than this have no direction.
pub const ZERO_NORM: f64 = 1e-12;

/// Scales applied to the prototype-distance, SAP-distance and SAP-direction
/// parts. The three weights are non-negative and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
}

impl FusionWeights {
    pub fn new(lambda: f64, mu: f64, epsilon: f64) -> Result<Self> {
        let w = Self {
            lambda,
            mu,
            epsilon,
        };
        if [lambda, mu, epsilon].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LdlError::InvalidArgument(format!(
                "fusion weights must be non-negative, got {w}"
            )));
        }
        if (lambda + mu + epsilon - 1.0).abs() > 1e-9 {
            return Err(LdlError::InvalidArgument(format!(
                "fusion weights must sum to 1, got {w}"
            )));
        }
        Ok(w)
    }

    /// Prototype distances only.
    pub fn lift_only() -> Self {
        Self {
            lambda: 1.0,
            mu: 0.0,
            epsilon: 0.0,
        }
    }

    pub fn equal() -> Self {
        Self {
            lambda: 1.0 / 3.0,
            mu: 1.0 / 3.0,
            epsilon: 1.0 / 3.0,
        }
    }

    /// Every weight triple on the simplex lattice with spacing `step`, in
    /// lexicographic order of `(lambda, mu, epsilon)`.
    pub fn lattice(step: f64) -> Result<Vec<FusionWeights>> {
        let steps = (1.0 / step).round();
        if !(step > 0.0 && step <= 1.0) || (steps * step - 1.0).abs() > 1e-9 {
            return Err(LdlError::InvalidArgument(format!(
                "grid step {step} does not divide 1"
            )));
        }
        let s = steps as usize;
        let mut out = Vec::with_capacity((s + 1) * (s + 2) / 2);
        for a in 0..=s {
            for b in 0..=(s - a) {
                let c = s - a - b;
                out.push(FusionWeights {
                    lambda: a as f64 / s as f64,
                    mu: b as f64 / s as f64,
                    epsilon: c as f64 / s as f64,
                });
            }
        }
        Ok(out)
    }
}

impl std::fmt::Display for FusionWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.lambda, self.mu, self.epsilon)
    }
}

impl std::str::FromStr for FusionWeights {
    type Err = LdlError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| LdlError::InvalidArgument(format!("cannot parse weights `{s}`")))?;
        match parts[..] {
            [l, m, e] => FusionWeights::new(l, m, e),
            _ => Err(LdlError::InvalidArgument(format!(
                "expected three comma-separated weights, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Ratio of instances turned into clusters.
    pub sigma: f64,
    /// Discount on uncertain-set features.
    pub alpha: f64,
    pub pos_frac: f64,
    pub neg_frac: f64,
    /// Average number of prototypes per SAP block; `None` keeps one block.
    pub target_block_size: Option<usize>,
    pub fusion: FusionWeights,
    /// Name of the prototype clustering strategy.
    pub clusterer: String,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            alpha: 0.5,
            pos_frac: DEFAULT_POSITIVE_FRACTION,
            neg_frac: DEFAULT_NEGATIVE_FRACTION,
            target_block_size: Some(4),
            fusion: FusionWeights::equal(),
            clusterer: "spectral".into(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sigma) || !(0.0..=1.0).contains(&self.alpha) {
            return Err(LdlError::InvalidArgument(format!(
                "sigma and alpha must lie in [0, 1], got {} and {}",
                self.sigma, self.alpha
            )));
        }
        FusionWeights::new(self.fusion.lambda, self.fusion.mu, self.fusion.epsilon)?;
        Ok(())
    }
}

/// Number of positive/negative clusters and uncertain clusters.
pub fn cluster_counts(p_size: usize, n_size: usize, u_size: usize, sigma: f64) -> (usize, usize) {
    let shared = ceil_count(sigma * p_size.min(n_size) as f64).max(1);
    let uncertain = if u_size == 0 {
        0
    } else {
        ceil_count(sigma * u_size as f64)
    };
    (shared, uncertain)
}

/// Prototypes of the positive, negative and uncertain sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    pub positive: ClusterResult,
    pub negative: ClusterResult,
    pub uncertain: ClusterResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blocks {
    pub positive: BlockStructure,
    pub negative: BlockStructure,
    pub uncertain: BlockStructure,
}

impl Blocks {
    pub fn single(prototypes: &Prototypes) -> Self {
        Self {
            positive: BlockStructure::single(prototypes.positive.k()),
            negative: BlockStructure::single(prototypes.negative.k()),
            uncertain: BlockStructure::single(prototypes.uncertain.k()),
        }
    }
}

/// Structural anchor points, one row per SAP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SapSet {
    pub positive: Array2<f64>,
    pub negative: Array2<f64>,
    pub uncertain: Array2<f64>,
}

impl SapSet {
    pub fn len(&self) -> usize {
        self.positive.nrows() + self.negative.nrows() + self.uncertain.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_dim(x: ArrayView1<f64>, expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(LdlError::DimensionMismatch {
            expected,
            actual: x.len(),
        });
    }
    Ok(())
}

/// Distances from `x` to every prototype; uncertain entries scaled by `alpha`.
pub fn build_phi(x: ArrayView1<f64>, prototypes: &Prototypes, alpha: f64) -> Result<Vec<f64>> {
    check_dim(x, prototypes.positive.centers.ncols())?;
    let x = x.to_vec();
    let mut out = Vec::with_capacity(
        prototypes.positive.k() + prototypes.negative.k() + prototypes.uncertain.k(),
    );
    let parts = [
        (&prototypes.positive.centers, 1.0),
        (&prototypes.negative.centers, 1.0),
        (&prototypes.uncertain.centers, alpha),
    ];
    for (centers, scale) in parts {
        out.extend(centers.outer_iter().map(|c| scale * euclidean(&x, c.as_slice().unwrap())));
    }
    Ok(out)
}

fn midpoints(centers: &Array2<f64>, blocks: &BlockStructure) -> Array2<f64> {
    let m = centers.ncols();
    let mut data = Vec::new();
    let mut count = 0;
    for members in blocks.members() {
        for (a, &k1) in members.iter().enumerate() {
            for &k2 in &members[a + 1..] {
                data.extend(
                    centers
                        .row(k1)
                        .iter()
                        .zip(centers.row(k2))
                        .map(|(u, v)| 0.5 * (u + v)),
                );
                count += 1;
            }
        }
    }
    Array2::from_shape_vec((count, m), data).expect("midpoint rows")
}

/// Midpoints of every unordered prototype pair within a block, ordered by
/// block then by pair.
pub fn build_saps(prototypes: &Prototypes, blocks: &Blocks) -> Result<SapSet> {
    let pairs = [
        (&prototypes.positive, &blocks.positive),
        (&prototypes.negative, &blocks.negative),
        (&prototypes.uncertain, &blocks.uncertain),
    ];
    for (protos, block) in pairs {
        if block.block_of.len() != protos.k() {
            return Err(LdlError::DimensionMismatch {
                expected: protos.k(),
                actual: block.block_of.len(),
            });
        }
    }
    Ok(SapSet {
        positive: midpoints(&prototypes.positive.centers, &blocks.positive),
        negative: midpoints(&prototypes.negative.centers, &blocks.negative),
        uncertain: midpoints(&prototypes.uncertain.centers, &blocks.uncertain),
    })
}

fn sap_feature(
    x: ArrayView1<f64>,
    saps: &SapSet,
    alpha: f64,
    f: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<Vec<f64>> {
    if saps.is_empty() {
        return Ok(Vec::new());
    }
    check_dim(x, saps.positive.ncols())?;
    let x = x.to_vec();
    let mut out = Vec::with_capacity(saps.len());
    for (set, scale) in [
        (&saps.positive, 1.0),
        (&saps.negative, 1.0),
        (&saps.uncertain, alpha),
    ] {
        out.extend(set.outer_iter().map(|s| scale * f(&x, s.as_slice().unwrap())));
    }
    Ok(out)
}

/// Distances from `x` to every SAP.
pub fn build_chi(x: ArrayView1<f64>, saps: &SapSet, alpha: f64) -> Result<Vec<f64>> {
    sap_feature(x, saps, alpha, euclidean)
}

/// Cosine between `x` and every SAP vector; zero when either is (nearly)
/// the zero vector.
pub fn build_psi(x: ArrayView1<f64>, saps: &SapSet, alpha: f64) -> Result<Vec<f64>> {
    sap_feature(x, saps, alpha, cosine)
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na < ZERO_NORM || nb < ZERO_NORM {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// `[lambda * phi, mu * chi, epsilon * psi]`.
pub fn fuse(phi: &[f64], chi: &[f64], psi: &[f64], w: FusionWeights) -> Vec<f64> {
    phi.iter()
        .map(|v| w.lambda * v)
        .chain(chi.iter().map(|v| w.mu * v))
        .chain(psi.iter().map(|v| w.epsilon * v))
        .collect()
}

/// Unweighted feature parts of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LsfParts {
    pub phi: Vec<f64>,
    pub chi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl LsfParts {
    pub fn fuse(&self, w: FusionWeights) -> Vec<f64> {
        fuse(&self.phi, &self.chi, &self.psi, w)
    }
}

/// Fitted per-label feature transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsfMapper {
    pub label_index: usize,
    pub partition: LabelPartition,
    pub prototypes: Prototypes,
    pub blocks: Blocks,
    pub saps: SapSet,
    pub config: FeatureConfig,
    pub output_dim: usize,
}

/// Fits the feature mapper for label `label` on the (already standardized)
/// training features and that label's degrees.
pub fn fit_lsf_mapper(
    features: ArrayView2<f64>,
    degrees: ArrayView1<f64>,
    label: usize,
    config: &FeatureConfig,
    seed: u64,
) -> Result<LsfMapper> {
    let clusterer = ClustererRegistry::standard().get(&config.clusterer)?;
    fit_with(features, degrees, label, config, seed, clusterer.as_ref())
}

/// As [`fit_lsf_mapper`] with an explicit clustering strategy.
pub fn fit_with(
    features: ArrayView2<f64>,
    degrees: ArrayView1<f64>,
    label: usize,
    config: &FeatureConfig,
    seed: u64,
    clusterer: &dyn Clusterer,
) -> Result<LsfMapper> {
    config.validate()?;
    if features.nrows() == 0 {
        return Err(LdlError::InvalidArgument("empty training set".into()));
    }
    check_dim(degrees, features.nrows())?;
    let degrees = degrees.to_vec();
    let partition = partition_by_percentile(label, &degrees, config.pos_frac, config.neg_frac)?;
    let (shared, uncertain) = cluster_counts(
        partition.positive.len(),
        partition.negative.len(),
        partition.uncertain.len(),
        config.sigma,
    );

    let cluster_set = |indices: &[usize], k: usize, stage: Stage| -> Result<ClusterResult> {
        let points = features.select(Axis(0), indices);
        if k == 0 {
            return Ok(ClusterResult {
                centers: Array2::zeros((0, features.ncols())),
                assignment: Vec::new(),
                degenerate: false,
            });
        }
        clusterer.cluster(points.view(), k, seed::derive(seed, label, stage))
    };
    let prototypes = Prototypes {
        positive: cluster_set(&partition.positive, shared, Stage::PositiveClusters)?,
        negative: cluster_set(&partition.negative, shared, Stage::NegativeClusters)?,
        uncertain: cluster_set(&partition.uncertain, uncertain, Stage::UncertainClusters)?,
    };
    let block = |r: &ClusterResult, stage: Stage| {
        form_blocks(
            r.centers.view(),
            config.target_block_size,
            seed::derive(seed, label, stage),
        )
    };
    let blocks = Blocks {
        positive: block(&prototypes.positive, Stage::PositiveBlocks)?,
        negative: block(&prototypes.negative, Stage::NegativeBlocks)?,
        uncertain: block(&prototypes.uncertain, Stage::UncertainBlocks)?,
    };
    let saps = build_saps(&prototypes, &blocks)?;
    let output_dim = prototypes.positive.k()
        + prototypes.negative.k()
        + prototypes.uncertain.k()
        + 2 * saps.len();
    Ok(LsfMapper {
        label_index: label,
        partition,
        prototypes,
        blocks,
        saps,
        config: config.clone(),
        output_dim,
    })
}

impl LsfMapper {
    pub fn input_dim(&self) -> usize {
        self.prototypes.positive.centers.ncols()
    }

    pub fn parts(&self, x: ArrayView1<f64>) -> Result<LsfParts> {
        check_dim(x, self.input_dim())?;
        let alpha = self.config.alpha;
        Ok(LsfParts {
            phi: build_phi(x, &self.prototypes, alpha)?,
            chi: build_chi(x, &self.saps, alpha)?,
            psi: build_psi(x, &self.saps, alpha)?,
        })
    }

    /// Fused label-specific features of `x`; length [`LsfMapper::output_dim`].
    pub fn transform(&self, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        Ok(self.parts(x)?.fuse(self.config.fusion))
    }

    /// Transforms every row of `xs`.
    pub fn transform_rows(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((xs.nrows(), self.output_dim));
        for (x, mut row) in xs.outer_iter().zip(out.outer_iter_mut()) {
            let z = self.transform(x)?;
            row.assign(&ArrayView1::from(&z));
        }
        Ok(out)
    }

    /// Same fitted state with different fusion weights.
    pub fn with_fusion(&self, fusion: FusionWeights) -> LsfMapper {
        let mut m = self.clone();
        m.config.fusion = fusion;
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn result(centers: Array2<f64>) -> ClusterResult {
        let k = centers.nrows();
        ClusterResult {
            centers,
            assignment: (0..k).collect(),
            degenerate: false,
        }
    }

    fn protos(p: Array2<f64>, n: Array2<f64>, u: Array2<f64>) -> Prototypes {
        Prototypes {
            positive: result(p),
            negative: result(n),
            uncertain: result(u),
        }
    }

    #[test]
    fn cluster_count_examples() {
        assert_eq!(cluster_counts(100, 50, 0, 0.1), (5, 0));
        assert_eq!(cluster_counts(100, 50, 2, 0.1).1, 1);
        assert_eq!(cluster_counts(11, 7, 2, 0.1), (1, 1));
        assert_eq!(cluster_counts(11, 7, 2, 0.0), (1, 0));
    }

    #[test]
    fn phi_examples() {
        let pr = protos(array![[3.0, 4.0]], array![[1.0, 1.0]], array![[0.0, 2.0]]);
        let phi = build_phi(array![0.0, 0.0].view(), &pr, 0.5).unwrap();
        assert_eq!(phi[0], 5.0);
        assert_eq!(phi[2], 1.0);
        let at_proto = build_phi(array![3.0, 4.0].view(), &pr, 0.5).unwrap();
        assert_eq!(at_proto[0], 0.0);
        let no_uncertain = build_phi(array![1.0, 2.0].view(), &pr, 0.0).unwrap();
        assert_eq!(no_uncertain[2], 0.0);
        assert!(matches!(
            build_phi(array![1.0].view(), &pr, 0.5),
            Err(LdlError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sap_examples() {
        let pr = protos(
            array![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]],
            array![[5.0, 5.0]],
            Array2::zeros((0, 2)),
        );
        let saps = build_saps(&pr, &Blocks::single(&pr)).unwrap();
        assert_eq!(saps.positive, array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        assert_eq!(saps.negative.nrows(), 0);
        assert_eq!(saps.uncertain.nrows(), 0);

        let four = protos(
            Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64),
            array![[0.0, 0.0]],
            Array2::zeros((0, 2)),
        );
        assert_eq!(build_saps(&four, &Blocks::single(&four)).unwrap().positive.nrows(), 6);
    }

    #[test]
    fn sap_pairs_stay_within_blocks() {
        let pr = protos(
            array![[0.0], [1.0], [10.0], [11.0], [12.0]],
            array![[0.0]],
            Array2::zeros((0, 1)),
        );
        let blocks = Blocks {
            positive: BlockStructure {
                block_of: vec![0, 0, 1, 1, 1],
                block_count: 2,
            },
            ..Blocks::single(&pr)
        };
        let saps = build_saps(&pr, &blocks).unwrap();
        assert_eq!(saps.positive, array![[0.5], [10.5], [11.0], [11.5]]);
    }

    #[test]
    fn chi_and_psi_examples() {
        let saps = SapSet {
            positive: array![[4.0, 5.0], [1.0, 1.0]],
            negative: array![[0.0, 3.0]],
            uncertain: array![[2.0, 2.0]],
        };
        let chi = build_chi(array![1.0, 1.0].view(), &saps, 0.5).unwrap();
        assert_eq!(chi[0], 5.0);
        assert_eq!(chi[1], 0.0);

        let psi = build_psi(array![1.0, 0.0].view(), &saps, 0.5).unwrap();
        assert!((psi[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(psi[2], 0.0);
        assert!((psi[3] - 0.5 * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        let parallel = build_psi(array![8.0, 10.0].view(), &saps, 0.5).unwrap();
        assert!((parallel[0] - 1.0).abs() < 1e-12);
        let zero = build_psi(array![0.0, 0.0].view(), &saps, 0.5).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let empty = SapSet {
            positive: Array2::zeros((0, 2)),
            negative: Array2::zeros((0, 2)),
            uncertain: Array2::zeros((0, 2)),
        };
        assert!(build_chi(array![1.0, 1.0].view(), &empty, 0.5).unwrap().is_empty());
        assert!(build_psi(array![1.0].view(), &saps, 0.5).is_err());
    }

    #[test]
    fn fuse_examples() {
        let w = FusionWeights::equal();
        let out = fuse(&[3.0], &[6.0], &[9.0], w);
        for (a, b) in out.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(
            fuse(&[1.5, 2.0], &[4.0], &[0.3], FusionWeights::lift_only()),
            vec![1.5, 2.0, 0.0, 0.0]
        );
        let w = FusionWeights::new(0.5, 0.25, 0.25).unwrap();
        assert_eq!(fuse(&[2.0, 4.0], &[], &[], w), vec![1.0, 2.0]);
    }

    #[test]
    fn weights_validation_and_parsing() {
        assert!(FusionWeights::new(0.5, 0.5, 0.1).is_err());
        assert!(FusionWeights::new(1.2, -0.2, 0.0).is_err());
        let w: FusionWeights = "0.2, 0.3,0.5".parse().unwrap();
        assert_eq!(w, FusionWeights::new(0.2, 0.3, 0.5).unwrap());
        assert!("0.5,0.5".parse::<FusionWeights>().is_err());
    }

    #[test]
    fn lattice_sizes() {
        let half = FusionWeights::lattice(0.5).unwrap();
        let triples: Vec<(f64, f64, f64)> =
            half.iter().map(|w| (w.lambda, w.mu, w.epsilon)).collect();
        assert_eq!(
            triples,
            vec![
                (0.0, 0.0, 1.0),
                (0.0, 0.5, 0.5),
                (0.0, 1.0, 0.0),
                (0.5, 0.0, 0.5),
                (0.5, 0.5, 0.0),
                (1.0, 0.0, 0.0)
            ]
        );
        assert_eq!(FusionWeights::lattice(0.05).unwrap().len(), 231);
        assert!(FusionWeights::lattice(0.3).is_err());
    }
}
