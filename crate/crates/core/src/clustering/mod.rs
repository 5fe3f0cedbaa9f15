//! Clustering of instance sets into prototypes, and grouping of prototypes
//! into blocks.
//!
//! Prototype clustering is pluggable: each algorithm implements
//! [`Clusterer`] and is registered by name in [`ClustererRegistry`].
//! `spectral` is the default used by the feature mappers.

mod blocks;
mod kmeans;
mod spectral;

use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};

pub use blocks::{form_blocks, BlockStructure};
pub use kmeans::{kmeans, DEFAULT_MAX_ITER};
pub use spectral::spectral_cluster;

/// Cluster centers plus the cluster index of every input point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub centers: Array2<f64>,
    pub assignment: Vec<usize>,
    /// Set when the input could not be clustered meaningfully (all points
    /// identical) and a balanced fallback assignment was used.
    #[serde(default)]
    pub degenerate: bool,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    /// Within-cluster sum of squared distances.
    pub fn inertia(&self, points: ArrayView2<f64>) -> f64 {
        points
            .outer_iter()
            .zip(&self.assignment)
            .map(|(x, &c)| {
                x.iter()
                    .zip(self.centers.row(c))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Mean of each cluster's points. Clusters without points get a zero row.
pub(crate) fn cluster_means(points: ArrayView2<f64>, assignment: &[usize], k: usize) -> Array2<f64> {
    let mut centers = Array2::<f64>::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (x, &c) in points.outer_iter().zip(assignment) {
        let mut row = centers.row_mut(c);
        row += &x;
        counts[c] += 1;
    }
    for (mut row, &n) in centers.axis_iter_mut(Axis(0)).zip(&counts) {
        if n > 0 {
            row /= n as f64;
        }
    }
    centers
}

pub(crate) fn check_k(k: usize, points: usize) -> Result<()> {
    if k == 0 || k > points {
        return Err(LdlError::TooManyClusters { k, points });
    }
    Ok(())
}

/// A prototype clustering algorithm.
pub trait Clusterer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Groups the rows of `points` into exactly `k` non-empty clusters.
    fn cluster(&self, points: ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusterResult>;
}

/// Normalized spectral clustering with a Gaussian affinity.
#[derive(Debug, Default, Clone, Copy)]
pub struct Spectral;

impl Clusterer for Spectral {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn cluster(&self, points: ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusterResult> {
        spectral_cluster(points, k, seed)
    }
}

/// Lloyd's k-means with k-means++ seeding.
#[derive(Debug, Clone, Copy)]
pub struct KMeans {
    pub max_iter: usize,
}

impl Default for KMeans {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl Clusterer for KMeans {
    fn name(&self) -> &'static str {
        "kmeans"
    }

    fn cluster(&self, points: ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusterResult> {
        kmeans(points, k, seed, self.max_iter)
    }
}

/// Name-indexed set of clustering strategies.
#[derive(Clone)]
pub struct ClustererRegistry {
    entries: Vec<Arc<dyn Clusterer>>,
}

impl Default for ClustererRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl ClustererRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    /// `spectral` and `kmeans`.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Spectral));
        r.register(Arc::new(KMeans::default()));
        r
    }

    /// Adds a strategy, replacing any existing one with the same name.
    pub fn register(&mut self, clusterer: Arc<dyn Clusterer>) {
        self.entries.retain(|c| c.name() != clusterer.name());
        self.entries.push(clusterer);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Clusterer>> {
        self.entries
            .iter()
            .find(|c| c.name() == name)
            .cloned()
            .ok_or_else(|| LdlError::UnknownStrategy {
                kind: "clusterer",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|c| c.name()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn registry_lookup() {
        let reg = ClustererRegistry::standard();
        assert_eq!(reg.names(), vec!["spectral", "kmeans"]);
        assert_eq!(reg.get("kmeans").unwrap().name(), "kmeans");
        assert!(matches!(
            reg.get("dbscan"),
            Err(LdlError::UnknownStrategy { .. })
        ));
    }

    #[test]
    fn strategies_agree_on_trivial_input() {
        let pts = array![[0.0], [10.0]];
        for name in ["spectral", "kmeans"] {
            let r = ClustererRegistry::standard()
                .get(name)
                .unwrap()
                .cluster(pts.view(), 2, 3)
                .unwrap();
            let mut c: Vec<f64> = r.centers.iter().copied().collect();
            c.sort_by(f64::total_cmp);
            assert_eq!(c, vec![0.0, 10.0]);
        }
    }
}
