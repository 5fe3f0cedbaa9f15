//! Synthetic label-distribution datasets for tests and benchmarks.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabelDistributionDataset;
use crate::error::{LdlError, Result};
use crate::maxent::meta::softmax;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub instances: usize,
    pub features: usize,
    pub labels: usize,
    pub components: usize,
    /// Spread of the component centers relative to unit noise.
    pub separation: f64,
    /// Logit weight of the distance to a label's component.
    pub distance_weight: f64,
    /// Logit weight of the direction from a label's component.
    pub direction_weight: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            instances: 300,
            features: 4,
            labels: 4,
            components: 6,
            separation: 4.0,
            distance_weight: 1.0,
            direction_weight: 1.5,
        }
    }
}

fn check_shape(instances: usize, features: usize, labels: usize) -> Result<()> {
    if instances == 0 || features == 0 || labels == 0 {
        return Err(LdlError::InvalidArgument(
            "synthetic data needs instances, features and labels".into(),
        ));
    }
    Ok(())
}

fn normal_vec(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

/// Instances drawn from a Gaussian mixture. Label `j` is tied to component
/// `j mod components`; its logit falls with the distance to that
/// component's center and rises when the offset from the center points
/// along a label-specific direction. Degrees are the softmax of the logits.
pub fn gaussian_mixture(cfg: &MixtureConfig, seed: u64) -> Result<LabelDistributionDataset> {
    check_shape(cfg.instances, cfg.features, cfg.labels)?;
    if cfg.components == 0 {
        return Err(LdlError::InvalidArgument("mixture needs components".into()));
    }
    let mut rng = seed::rng(seed);
    let m = cfg.features;
    let centers: Vec<Vec<f64>> = (0..cfg.components)
        .map(|_| normal_vec(&mut rng, m, cfg.separation))
        .collect();
    let directions: Vec<Vec<f64>> = (0..cfg.labels)
        .map(|_| unit(normal_vec(&mut rng, m, 1.0)))
        .collect();

    let mut features = Array2::zeros((cfg.instances, m));
    let mut degrees = Array2::zeros((cfg.instances, cfg.labels));
    for i in 0..cfg.instances {
        let c = &centers[rng.random_range(0..cfg.components)];
        let x: Vec<f64> = c
            .iter()
            .zip(normal_vec(&mut rng, m, 1.0))
            .map(|(a, b)| a + b)
            .collect();
        let logits: Vec<f64> = (0..cfg.labels)
            .map(|j| {
                let anchor = &centers[j % cfg.components];
                let offset: Vec<f64> = x.iter().zip(anchor).map(|(a, b)| a - b).collect();
                let dist = offset.iter().map(|v| v * v).sum::<f64>().sqrt();
                let cos = offset.iter().zip(&directions[j]).map(|(a, b)| a * b).sum::<f64>()
                    / dist.max(1e-12);
                -cfg.distance_weight * dist / cfg.separation + cfg.direction_weight * cos
            })
            .collect();
        for (k, v) in x.iter().enumerate() {
            features[(i, k)] = *v;
        }
        for (j, q) in softmax(&logits).into_iter().enumerate() {
            degrees[(i, j)] = q;
        }
    }
    LabelDistributionDataset::new("gaussian-mixture", features, degrees)
}

/// `x ~ N(0, I)`, `y = softmax(W x)` with `W` entries `~ N(0, scale^2)`.
pub fn softmax_linear(
    instances: usize,
    features: usize,
    labels: usize,
    scale: f64,
    seed: u64,
) -> Result<LabelDistributionDataset> {
    check_shape(instances, features, labels)?;
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, scale)
        .map_err(|e| LdlError::InvalidArgument(format!("bad weight scale: {e}")))?;
    let w: Vec<f64> = (0..labels * features).map(|_| noise.sample(&mut rng)).collect();
    let mut x = Array2::zeros((instances, features));
    let mut y = Array2::zeros((instances, labels));
    for i in 0..instances {
        let row = normal_vec(&mut rng, features, 1.0);
        let logits: Vec<f64> = w
            .chunks_exact(features)
            .map(|wj| wj.iter().zip(&row).map(|(a, b)| a * b).sum())
            .collect();
        for (k, v) in row.iter().enumerate() {
            x[(i, k)] = *v;
        }
        for (j, q) in softmax(&logits).into_iter().enumerate() {
            y[(i, j)] = q;
        }
    }
    LabelDistributionDataset::new("softmax-linear", x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_simplex() {
        let ds = gaussian_mixture(&MixtureConfig::default(), 1).unwrap();
        assert_eq!(ds.instance_count(), 300);
        assert_eq!(ds.feature_count(), 4);
        assert_eq!(ds.label_count(), 4);
        let lin = softmax_linear(50, 3, 5, 1.0, 2).unwrap();
        for row in lin.distributions().outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded() {
        let a = gaussian_mixture(&MixtureConfig::default(), 9).unwrap();
        let b = gaussian_mixture(&MixtureConfig::default(), 9).unwrap();
        let c = gaussian_mixture(&MixtureConfig::default(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
