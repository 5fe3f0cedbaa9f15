use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::bfgs::{bfgs_minimize, Objective};
use super::{sigmoid, softplus, xlogx, OptimizerConfig, TARGET_CLIP};
use crate::error::{LdlError, Result};

/// Logistic predictor of one label's description degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModel {
    pub label_index: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Two-outcome KL divergence between targets `[t, 1 - t]` and predictions
/// `[q, 1 - q]`, `q = sigmoid(w.z + b)`, summed over instances, plus
/// `l2 * |w|^2`. Parameters are laid out as `[w..., b]`.
pub struct BinaryKlObjective<'a> {
    features: ArrayView2<'a, f64>,
    targets: Array1<f64>,
    l2: f64,
}

impl<'a> BinaryKlObjective<'a> {
    pub fn new(features: ArrayView2<'a, f64>, targets: ArrayView1<f64>, l2: f64) -> Self {
        Self {
            features,
            targets: targets.mapv(|t| t.clamp(TARGET_CLIP, 1.0 - TARGET_CLIP)),
            l2,
        }
    }
}

impl Objective for BinaryKlObjective<'_> {
    fn dimension(&self) -> usize {
        self.features.ncols() + 1
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.features.ncols();
        let w = ArrayView1::from(&theta[..d]);
        let b = theta[d];
        let eta = self.features.dot(&w);
        let mut loss = 0.0;
        let mut residual = Array1::<f64>::zeros(eta.len());
        for ((r, &e), &t) in residual.iter_mut().zip(eta.iter()).zip(self.targets.iter()) {
            loss += xlogx(t) + xlogx(1.0 - t) + t * softplus(-(e + b)) + (1.0 - t) * softplus(e + b);
            *r = sigmoid(e + b) - t;
        }
        let gw = self.features.t().dot(&residual);
        for (g, (gw, wi)) in grad.iter_mut().zip(gw.iter().zip(w.iter())) {
            *g = gw + 2.0 * self.l2 * wi;
        }
        grad[d] = residual.sum();
        loss + self.l2 * w.dot(&w)
    }
}

/// Fits a [`BaseModel`] to `(features, degrees)` starting from zero weights.
pub fn train_base(
    label_index: usize,
    features: ArrayView2<f64>,
    degrees: ArrayView1<f64>,
    cfg: &OptimizerConfig,
) -> Result<BaseModel> {
    cfg.validate()?;
    if features.nrows() != degrees.len() {
        return Err(LdlError::DimensionMismatch {
            expected: features.nrows(),
            actual: degrees.len(),
        });
    }
    if features.nrows() < 2 {
        return Err(LdlError::InvalidArgument(
            "base model needs at least two instances".into(),
        ));
    }
    if degrees.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(LdlError::InvalidArgument(
            "base model targets must lie in [0, 1]".into(),
        ));
    }
    let objective = BinaryKlObjective::new(features, degrees, cfg.l2_penalty);
    let x0 = vec![0.0; objective.dimension()];
    let min = bfgs_minimize(&objective, &x0, cfg)?;
    let d = features.ncols();
    Ok(BaseModel {
        label_index,
        weights: min.x[..d].to_vec(),
        bias: min.x[d],
    })
}

/// Predicted degree, strictly inside (0, 1).
pub fn predict_base(model: &BaseModel, z: &[f64]) -> Result<f64> {
    if z.len() != model.weights.len() {
        return Err(LdlError::DimensionMismatch {
            expected: model.weights.len(),
            actual: z.len(),
        });
    }
    let eta: f64 = model.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + model.bias;
    Ok(sigmoid(eta).clamp(1e-15, 1.0 - 1e-15))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn zero_model_predicts_half() {
        let m = BaseModel {
            label_index: 0,
            weights: vec![0.0; 3],
            bias: 0.0,
        };
        assert_eq!(predict_base(&m, &[1.0, -2.0, 3.0]).unwrap(), 0.5);
        assert!(predict_base(&m, &[1.0]).is_err());
    }

    #[test]
    fn hand_sigmoid() {
        let m = BaseModel {
            label_index: 0,
            weights: vec![0.5, -1.0],
            bias: 0.25,
        };
        // eta = 0.5*2 - 1*0.5 + 0.25 = 0.75
        let expected = 1.0 / (1.0 + (-0.75f64).exp());
        assert!((predict_base(&m, &[2.0, 0.5]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_bias_and_strictly_inside() {
        let mut prev = 0.0;
        for b in [-50.0, -5.0, 0.0, 5.0, 50.0] {
            let m = BaseModel {
                label_index: 0,
                weights: vec![1.0],
                bias: b,
            };
            let q = predict_base(&m, &[0.0]).unwrap();
            assert!(q > prev && q < 1.0);
            prev = q;
        }
    }

    #[test]
    fn constant_half_targets() {
        let mut rng = seed::rng(4);
        let x = Array2::from_shape_fn((30, 3), |_| rng.random_range(-2.0..2.0));
        let t = Array1::from_elem(30, 0.5);
        let m = train_base(0, x.view(), t.view(), &OptimizerConfig::default()).unwrap();
        for row in x.outer_iter() {
            let q = predict_base(&m, row.as_slice().unwrap()).unwrap();
            assert!((q - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn separable_degrees_keep_order() {
        let x = array![[1.0], [-1.0], [1.0], [-1.0]];
        let t = array![0.9, 0.1, 0.9, 0.1];
        let m = train_base(0, x.view(), t.view(), &OptimizerConfig::default()).unwrap();
        let hi = predict_base(&m, &[1.0]).unwrap();
        let lo = predict_base(&m, &[-1.0]).unwrap();
        assert!(hi > lo);
        assert!((hi - 0.9).abs() < 1e-3);
    }

    #[test]
    fn objective_is_zero_at_exact_fit() {
        let x = array![[0.0], [0.0]];
        let t = array![0.5, 0.5];
        let obj = BinaryKlObjective::new(x.view(), t.view(), 1e-6);
        let mut g = [0.0; 2];
        assert!(obj.evaluate(&[0.0, 0.0], &mut g).abs() < 1e-15);
        assert!(obj.evaluate(&[0.0, 1.0], &mut g) > 0.0);
    }

    #[test]
    fn rejects_bad_targets() {
        let x = array![[0.0], [1.0]];
        assert!(train_base(0, x.view(), array![0.5, 1.5].view(), &OptimizerConfig::default()).is_err());
        assert!(train_base(0, x.view(), array![0.5].view(), &OptimizerConfig::default()).is_err());
    }
}
