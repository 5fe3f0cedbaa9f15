use ndarray::ArrayView2;
use rand::Rng;

use super::{check_k, cluster_means, ClusterResult};
use crate::error::Result;
use crate::numeric::squared_distance;
use crate::seed;

pub const DEFAULT_MAX_ITER: usize = 100;

/// Lloyd iterations from k-means++ seeding until the assignment stops
/// changing or `max_iter` is reached. Empty clusters take the point farthest
/// from its center in the currently largest cluster.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64, max_iter: usize) -> Result<ClusterResult> {
    lloyd(points, k, seed, max_iter).map(|(r, _)| r)
}

/// Returns the result and the inertia after every iteration.
pub(crate) fn lloyd(
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(ClusterResult, Vec<f64>)> {
    let n = points.nrows();
    check_k(k, n)?;
    let rows: Vec<Vec<f64>> = points.outer_iter().map(|r| r.to_vec()).collect();

    let mut centers = plus_plus_seeds(&rows, k, seed);
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();

    for _ in 0..max_iter.max(1) {
        let mut next: Vec<usize> = rows.iter().map(|x| nearest(x, &centers).0).collect();
        repair_empty(&rows, &mut next, k);
        let changed = next != assignment;
        assignment = next;
        centers = means(&rows, &assignment, k);
        history.push(inertia(&rows, &assignment, &centers));
        if !changed {
            break;
        }
    }

    let result = ClusterResult {
        centers: cluster_means(points, &assignment, k),
        assignment,
        degenerate: false,
    };
    Ok((result, history))
}

fn plus_plus_seeds(rows: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut rng = seed::rng(seed);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = rows
        .iter()
        .map(|x| squared_distance(x, &rows[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every remaining point coincides with a chosen one
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        for (d, x) in d2.iter_mut().zip(rows) {
            *d = d.min(squared_distance(x, &rows[pick]));
        }
    }
    chosen.into_iter().map(|i| rows[i].clone()).collect()
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn repair_empty(rows: &[Vec<f64>], assignment: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &c in assignment.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = (0..k).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
        let current = means(rows, assignment, k);
        let victim = (0..rows.len())
            .filter(|&i| assignment[i] == largest)
            .max_by(|&a, &b| {
                squared_distance(&rows[a], &current[largest])
                    .total_cmp(&squared_distance(&rows[b], &current[largest]))
                    .then(b.cmp(&a))
            })
            .expect("largest cluster is non-empty");
        assignment[victim] = empty;
    }
}

fn means(rows: &[Vec<f64>], assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let m = rows[0].len();
    let mut sums = vec![vec![0.0; m]; k];
    let mut counts = vec![0usize; k];
    for (x, &c) in rows.iter().zip(assignment) {
        for (s, v) in sums[c].iter_mut().zip(x) {
            *s += v;
        }
        counts[c] += 1;
    }
    for (s, &cnt) in sums.iter_mut().zip(&counts) {
        if cnt > 0 {
            s.iter_mut().for_each(|v| *v /= cnt as f64);
        }
    }
    sums
}

fn inertia(rows: &[Vec<f64>], assignment: &[usize], centers: &[Vec<f64>]) -> f64 {
    rows.iter()
        .zip(assignment)
        .map(|(x, &c)| squared_distance(x, &centers[c]))
        .sum()
}
