//! Friedman test and Nemenyi critical difference for comparing several
//! algorithms over several datasets.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};

/// Studentized range over `sqrt(2)` at alpha = 0.05 for 2..=10 algorithms.
const Q_ALPHA_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];

/// Nemenyi `q` at alpha = 0.05 for `algorithms` competitors, if tabulated.
pub fn q_alpha_05(algorithms: usize) -> Option<f64> {
    algorithms
        .checked_sub(2)
        .and_then(|i| Q_ALPHA_05.get(i).copied())
}

/// Scores of `s` algorithms on `N` datasets and their per-dataset ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    /// `N x s`.
    pub scores: Array2<f64>,
    pub higher_is_better: bool,
    /// `N x s`, 1 is best, ties share the average of their positions.
    pub ranks: Array2<f64>,
    pub avg_ranks: Array1<f64>,
}

impl RankTable {
    pub fn datasets(&self) -> usize {
        self.scores.nrows()
    }

    pub fn algorithms(&self) -> usize {
        self.scores.ncols()
    }
}

/// Ranks every row of `scores` (datasets x algorithms).
pub fn rank(scores: ArrayView2<f64>, higher_is_better: bool) -> Result<RankTable> {
    let (n, s) = scores.dim();
    if n < 2 || s < 2 {
        return Err(LdlError::InvalidArgument(format!(
            "ranking needs at least 2 datasets and 2 algorithms, got {n} x {s}"
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(LdlError::InvalidArgument("non-finite score".into()));
    }
    let mut ranks = Array2::zeros((n, s));
    for (row, mut out) in scores.outer_iter().zip(ranks.outer_iter_mut()) {
        let key = |j: usize| if higher_is_better { -row[j] } else { row[j] };
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let mut i = 0;
        while i < s {
            let mut end = i + 1;
            while end < s && key(order[end]) == key(order[i]) {
                end += 1;
            }
            // positions i+1 ..= end share their mean
            let shared = (i + 1 + end) as f64 / 2.0;
            for &j in &order[i..end] {
                out[j] = shared;
            }
            i = end;
        }
    }
    let avg_ranks = ranks.mean_axis(ndarray::Axis(0)).expect("non-empty");
    Ok(RankTable {
        scores: scores.to_owned(),
        higher_is_better,
        ranks,
        avg_ranks,
    })
}

/// The F statistic, or `Saturated` when its denominator vanishes (every
/// dataset ranks the algorithms identically, with no ties).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FStatistic {
    Value(f64),
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi_sq: f64,
    pub f_f: FStatistic,
}

/// Friedman chi-square on average ranks and its Iman-Davenport F form.
pub fn friedman(table: &RankTable) -> FriedmanResult {
    let n = table.datasets() as f64;
    let s = table.algorithms() as f64;
    let sum_sq: f64 = table.avg_ranks.iter().map(|r| r * r).sum();
    let chi_sq = (12.0 * n / (s * (s + 1.0)) * (sum_sq - s * (s + 1.0).powi(2) / 4.0)).max(0.0);
    let denom = n * (s - 1.0) - chi_sq;
    let f_f = if denom <= 1e-12 * n * s {
        FStatistic::Saturated
    } else {
        FStatistic::Value((n - 1.0) * chi_sq / denom)
    };
    FriedmanResult { chi_sq, f_f }
}

/// Nemenyi critical difference `q * sqrt(s (s + 1) / (6 N))`.
pub fn nemenyi_cd(algorithms: usize, datasets: usize, q_alpha: f64) -> Result<f64> {
    if algorithms < 2 || datasets < 1 || !(q_alpha > 0.0) {
        return Err(LdlError::InvalidArgument(format!(
            "critical difference needs s >= 2, N >= 1, q > 0; got {algorithms}, {datasets}, {q_alpha}"
        )));
    }
    let s = algorithms as f64;
    Ok(q_alpha * (s * (s + 1.0) / (6.0 * datasets as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAlgorithm {
    pub name: String,
    pub avg_rank: f64,
}

/// Declarative critical-difference diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdDiagram {
    pub cd: f64,
    /// Sorted by average rank, best first.
    pub algorithms: Vec<RankedAlgorithm>,
    /// Maximal sets of algorithms whose pairwise rank differences are all
    /// below `cd`, drawn as one connecting bar each.
    pub groups: Vec<Vec<String>>,
}

/// Builds diagram data for `table` with algorithm `names` in column order.
pub fn cd_diagram_data(table: &RankTable, names: &[String], cd: f64) -> Result<CdDiagram> {
    if names.len() != table.algorithms() {
        return Err(LdlError::DimensionMismatch {
            expected: table.algorithms(),
            actual: names.len(),
        });
    }
    let mut algorithms: Vec<RankedAlgorithm> = names
        .iter()
        .zip(table.avg_ranks.iter())
        .map(|(n, &r)| RankedAlgorithm {
            name: n.clone(),
            avg_rank: r,
        })
        .collect();
    algorithms.sort_by(|a, b| a.avg_rank.total_cmp(&b.avg_rank));

    // On sorted ranks a set is within CD iff its end points are, so the
    // maximal sets are the maximal windows.
    let s = algorithms.len();
    let mut groups = Vec::new();
    let mut last_end = 0;
    for start in 0..s {
        let mut end = start;
        while end + 1 < s && algorithms[end + 1].avg_rank - algorithms[start].avg_rank < cd {
            end += 1;
        }
        if end > start && end > last_end {
            groups.push(
                algorithms[start..=end]
                    .iter()
                    .map(|a| a.name.clone())
                    .collect(),
            );
            last_end = end;
        }
    }
    Ok(CdDiagram {
        cd,
        algorithms,
        groups,
    })
}
