//! Per-label division of training instances into positive, negative and
//! uncertain sets.

use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};
use crate::numeric::{ceil_count, floor_count};

pub const DEFAULT_POSITIVE_FRACTION: f64 = 0.55;
pub const DEFAULT_NEGATIVE_FRACTION: f64 = 0.35;

/// Index sets (into the training rows) for one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPartition {
    pub label_index: usize,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub uncertain: Vec<usize>,
}

impl LabelPartition {
    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len() + self.uncertain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Percentile split: the top `ceil(pos_frac * n)` degrees are positive, the
/// bottom `floor(neg_frac * n)` are negative, the rest uncertain.
///
/// Instances are ranked by degree descending; equal degrees keep ascending
/// index order. Index lists are returned in ranking order.
pub fn partition_by_percentile(
    label_index: usize,
    degrees: &[f64],
    pos_frac: f64,
    neg_frac: f64,
) -> Result<LabelPartition> {
    let n = degrees.len();
    if n == 0 {
        return Err(LdlError::InvalidArgument(
            "cannot partition an empty degree vector".into(),
        ));
    }
    if !(0.0..=1.0).contains(&pos_frac) || !(0.0..=1.0).contains(&neg_frac) {
        return Err(LdlError::InvalidArgument(format!(
            "fractions must lie in [0, 1], got {pos_frac} and {neg_frac}"
        )));
    }
    if pos_frac + neg_frac > 1.0 + 1e-12 {
        return Err(LdlError::InvalidArgument(format!(
            "positive fraction {pos_frac} + negative fraction {neg_frac} exceeds 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| degrees[b].total_cmp(&degrees[a]).then(a.cmp(&b)));

    let n_pos = ceil_count(pos_frac * n as f64).min(n);
    let n_neg = floor_count(neg_frac * n as f64).min(n - n_pos);
    if n_pos == 0 || n_neg == 0 {
        return Err(LdlError::InvalidArgument(format!(
            "percentile split of {n} instances leaves the positive or negative set empty"
        )));
    }
    Ok(LabelPartition {
        label_index,
        positive: order[..n_pos].to_vec(),
        uncertain: order[n_pos..n - n_neg].to_vec(),
        negative: order[n - n_neg..].to_vec(),
    })
}

/// Literal threshold rule: degree > `tau_high` is positive, degree <
/// `tau_low` negative, anything in between uncertain.
pub fn partition_by_threshold(
    label_index: usize,
    degrees: &[f64],
    tau_high: f64,
    tau_low: f64,
) -> Result<LabelPartition> {
    if tau_low > tau_high {
        return Err(LdlError::InvalidArgument(format!(
            "tau_low {tau_low} exceeds tau_high {tau_high}"
        )));
    }
    let mut part = LabelPartition {
        label_index,
        positive: Vec::new(),
        negative: Vec::new(),
        uncertain: Vec::new(),
    };
    for (i, &d) in degrees.iter().enumerate() {
        if d > tau_high {
            part.positive.push(i);
        } else if d < tau_low {
            part.negative.push(i);
        } else {
            part.uncertain.push(i);
        }
    }
    if part.positive.is_empty() || part.negative.is_empty() {
        return Err(LdlError::InvalidArgument(
            "thresholds leave the positive or negative set empty".into(),
        ));
    }
    Ok(part)
}
