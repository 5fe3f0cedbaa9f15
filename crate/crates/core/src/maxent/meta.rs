use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::bfgs::{bfgs_minimize, Objective};
use super::{xlogx, OptimizerConfig};
use crate::error::{LdlError, Result};

/// Softmax model over `p` labels taking a length-`p` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    /// `weights[[j, k]]` scales input `k` in the logit of label `j`.
    pub weights: Array2<f64>,
    pub bias: Vec<f64>,
}

impl MetaModel {
    pub fn label_count(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Sum over instances of `KL(y_i || softmax(W f_i + b))` plus
/// `l2 * |W|_F^2`. Parameters are `W` row-major followed by `b`.
pub struct SoftmaxKlObjective<'a> {
    inputs: ArrayView2<'a, f64>,
    truths: ArrayView2<'a, f64>,
    entropy: f64,
    l2: f64,
}

impl<'a> SoftmaxKlObjective<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, truths: ArrayView2<'a, f64>, l2: f64) -> Self {
        let entropy = truths.iter().map(|&y| xlogx(y)).sum();
        Self {
            inputs,
            truths,
            entropy,
            l2,
        }
    }

    fn labels(&self) -> usize {
        self.truths.ncols()
    }
}

impl Objective for SoftmaxKlObjective<'_> {
    fn dimension(&self) -> usize {
        self.labels() * (self.inputs.ncols() + 1)
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.labels();
        let d = self.inputs.ncols();
        let w = ArrayView2::from_shape((p, d), &theta[..p * d]).expect("parameter layout");
        let b = ArrayView1::from(&theta[p * d..]);
        let mut logits = self.inputs.dot(&w.t());
        logits += &b;

        let mut loss = self.entropy;
        let mut residual = Array2::<f64>::zeros(logits.raw_dim());
        for ((z, y), mut r) in logits
            .outer_iter()
            .zip(self.truths.outer_iter())
            .zip(residual.outer_iter_mut())
        {
            let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let mass = y.sum();
            for k in 0..p {
                loss -= y[k] * (z[k] - lse);
                r[k] = mass * (z[k] - lse).exp() - y[k];
            }
        }
        let gw = residual.t().dot(&self.inputs);
        for (g, (gv, wv)) in grad[..p * d].iter_mut().zip(gw.iter().zip(w.iter())) {
            *g = gv + 2.0 * self.l2 * wv;
        }
        for (g, s) in grad[p * d..].iter_mut().zip(residual.sum_axis(Axis(0))) {
            *g = s;
        }
        loss + self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Fits a [`MetaModel`] on stacked base predictions and true distributions.
pub fn train_meta(
    inputs: ArrayView2<f64>,
    truths: ArrayView2<f64>,
    cfg: &OptimizerConfig,
) -> Result<MetaModel> {
    cfg.validate()?;
    if inputs.nrows() != truths.nrows() {
        return Err(LdlError::DimensionMismatch {
            expected: inputs.nrows(),
            actual: truths.nrows(),
        });
    }
    if inputs.nrows() == 0 {
        return Err(LdlError::InvalidArgument("meta model needs instances".into()));
    }
    let p = truths.ncols();
    if inputs.nrows() < p {
        log::warn!(
            "meta model trained on {} instances for {p} labels",
            inputs.nrows()
        );
    }
    let objective = SoftmaxKlObjective::new(inputs, truths, cfg.l2_penalty);
    let min = bfgs_minimize(&objective, &vec![0.0; objective.dimension()], cfg)?;
    let d = inputs.ncols();
    Ok(MetaModel {
        weights: Array2::from_shape_vec((p, d), min.x[..p * d].to_vec()).expect("layout"),
        bias: min.x[p * d..].to_vec(),
    })
}

/// Predicted label distribution: strictly positive and summing to one.
pub fn predict_meta(model: &MetaModel, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != model.input_dim() {
        return Err(LdlError::DimensionMismatch {
            expected: model.input_dim(),
            actual: f.len(),
        });
    }
    let logits: Array1<f64> = model.weights.dot(&ArrayView1::from(f)) + &ArrayView1::from(&model.bias);
    Ok(softmax(logits.as_slice().expect("contiguous")))
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut q: Vec<f64> = z.iter().map(|v| (v - max).exp().max(f64::MIN_POSITIVE)).collect();
    let sum: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= sum);
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::base::{predict_base, train_base};
    use crate::seed;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn zero_model_is_uniform() {
        let m = MetaModel {
            weights: Array2::zeros((4, 4)),
            bias: vec![0.0; 4],
        };
        assert_eq!(predict_meta(&m, &[0.3, 0.1, 0.5, 0.1]).unwrap(), vec![0.25; 4]);
        assert!(predict_meta(&m, &[0.3]).is_err());
    }

    #[test]
    fn hand_softmax() {
        let m = MetaModel {
            weights: array![[1.0, 0.0], [0.5, 2.0]],
            bias: vec![0.0, -1.0],
        };
        // logits: [0.2, 0.1 + 1.6 - 1.0] = [0.2, 0.7]
        let q = predict_meta(&m, &[0.2, 0.8]).unwrap();
        let e0 = 0.2f64.exp();
        let e1 = 0.7f64.exp();
        assert!((q[0] - e0 / (e0 + e1)).abs() < 1e-15);
        assert!((q[1] - e1 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance_and_extremes() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        let extreme = softmax(&[0.0, 2000.0]);
        assert!(extreme[0] > 0.0);
        assert!((extreme.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_truths_are_reproduced() {
        let mut rng = seed::rng(2);
        let inputs = Array2::from_shape_fn((25, 3), |_| rng.random_range(0.0..1.0));
        let truth = [0.2, 0.5, 0.3];
        let truths = Array2::from_shape_fn((25, 3), |(_, j)| truth[j]);
        let m = train_meta(inputs.view(), truths.view(), &OptimizerConfig::default()).unwrap();
        for f in inputs.outer_iter() {
            let q = predict_meta(&m, f.as_slice().unwrap()).unwrap();
            for (a, b) in q.iter().zip(truth) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn two_labels_match_the_logistic_learner() {
        let mut rng = seed::rng(17);
        let n = 60;
        let inputs = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let t: Array1<f64> = inputs
            .outer_iter()
            .map(|f| {
                let eta: f64 = 1.5 * f[0] - 0.7 * f[1] + 0.2;
                let clean = 1.0 / (1.0 + (-eta).exp());
                (clean + rng.random_range(-0.1f64..0.1)).clamp(0.05, 0.95)
            })
            .collect();
        let truths = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { t[i] } else { 1.0 - t[i] });
        let cfg = OptimizerConfig::default();
        let meta = train_meta(inputs.view(), truths.view(), &cfg).unwrap();
        let base = train_base(0, inputs.view(), t.view(), &cfg).unwrap();
        for f in inputs.outer_iter() {
            let f = f.as_slice().unwrap();
            let qm = predict_meta(&meta, f).unwrap()[0];
            let qb = predict_base(&base, f).unwrap();
            assert!((qm - qb).abs() < 1e-4, "{qm} vs {qb}");
        }
    }

    #[test]
    fn kl_objective_zero_only_at_truth() {
        let inputs = array![[0.0], [0.0]];
        let truths = array![[0.5, 0.5], [0.5, 0.5]];
        let obj = SoftmaxKlObjective::new(inputs.view(), truths.view(), 1e-6);
        let mut g = [0.0; 4];
        assert!(obj.evaluate(&[0.0, 0.0, 0.0, 0.0], &mut g).abs() < 1e-15);
        assert!(obj.evaluate(&[0.0, 0.0, 0.3, 0.0], &mut g) > 0.0);
    }
}
