use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};

use super::{check_k, cluster_means, kmeans, ClusterResult, DEFAULT_MAX_ITER};
use crate::error::Result;
use crate::numeric::euclidean;

/// Normalized spectral clustering.
///
/// Affinity `a_uv = exp(-|x_u - x_v|^2 / (2 g^2))` with `g` the median
/// pairwise distance and zero self-affinity; embedding from the `k`
/// eigenvectors of `I - D^-1/2 A D^-1/2` with the smallest eigenvalues,
/// rows scaled to unit length, then k-means on the embedded rows. Centers
/// are cluster means in the input space.
pub fn spectral_cluster(points: ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusterResult> {
    let n = points.nrows();
    check_k(k, n)?;
    if k == 1 {
        return Ok(from_assignment(points, vec![0; n], 1, false));
    }
    if k == n {
        return Ok(from_assignment(points, (0..n).collect(), n, false));
    }
    let Some(affinity) = gaussian_affinity(points) else {
        warn!("spectral clustering on {n} identical points, using a balanced assignment");
        let assignment = (0..n).map(|i| i % k).collect();
        return Ok(from_assignment(points, assignment, k, true));
    };

    let embedding = spectral_embedding(&affinity, k);
    let rows = kmeans(embedding.view(), k, seed, DEFAULT_MAX_ITER)?;
    Ok(from_assignment(points, rows.assignment, k, false))
}

fn from_assignment(
    points: ArrayView2<f64>,
    assignment: Vec<usize>,
    k: usize,
    degenerate: bool,
) -> ClusterResult {
    ClusterResult {
        centers: cluster_means(points, &assignment, k),
        assignment,
        degenerate,
    }
}

/// Gaussian affinity matrix, or `None` when all points coincide.
pub(crate) fn gaussian_affinity(points: ArrayView2<f64>) -> Option<DMatrix<f64>> {
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = points.outer_iter().map(|r| r.to_vec()).collect();
    let mut dist = DMatrix::<f64>::zeros(n, n);
    let mut pairwise = Vec::with_capacity(n * (n - 1) / 2);
    for u in 0..n {
        for v in (u + 1)..n {
            let d = euclidean(&rows[u], &rows[v]);
            dist[(u, v)] = d;
            dist[(v, u)] = d;
            pairwise.push(d);
        }
    }
    let mut width = median(&mut pairwise);
    if width <= 0.0 {
        // more than half of the pairs coincide; fall back to the positive ones
        let mut positive: Vec<f64> = pairwise.into_iter().filter(|&d| d > 0.0).collect();
        if positive.is_empty() {
            return None;
        }
        width = median(&mut positive);
    }
    let scale = 2.0 * width * width;
    let mut a = dist.map(|d| (-d * d / scale).exp());
    a.fill_diagonal(0.0);
    Some(a)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn spectral_embedding(affinity: &DMatrix<f64>, k: usize) -> Array2<f64> {
    let n = affinity.nrows();
    let inv_sqrt: Vec<f64> = affinity
        .row_iter()
        .map(|r| {
            let d: f64 = r.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut laplacian = DMatrix::<f64>::identity(n, n);
    for u in 0..n {
        for v in 0..n {
            laplacian[(u, v)] -= inv_sqrt[u] * affinity[(u, v)] * inv_sqrt[v];
        }
    }
    let eig = SymmetricEigen::new(laplacian);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut embedding = Array2::<f64>::zeros((n, k));
    for (col, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        for row in 0..n {
            embedding[(row, col)] = v[row];
        }
    }
    for mut row in embedding.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            row /= norm;
        }
    }
    embedding
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::{array, Array2};
    use rand_distr::{Distribution, Normal};

    fn two_blobs(per: usize, separation: f64, seed: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut data = Vec::new();
        for b in 0..2 {
            for _ in 0..per {
                data.push(b as f64 * separation + noise.sample(&mut rng));
                data.push(noise.sample(&mut rng));
            }
        }
        Array2::from_shape_vec((2 * per, 2), data).unwrap()
    }

    fn normalized_cut(a: &DMatrix<f64>, side: &[bool]) -> f64 {
        let n = side.len();
        let (mut cut, mut vol_a, mut vol_b) = (0.0, 0.0, 0.0);
        for u in 0..n {
            for v in 0..n {
                let w = a[(u, v)];
                if side[u] {
                    vol_a += w;
                } else {
                    vol_b += w;
                }
                if side[u] && !side[v] {
                    cut += w;
                }
            }
        }
        cut / vol_a + cut / vol_b
    }

    #[test]
    fn separates_two_blobs() {
        let pts = two_blobs(20, 10.0, 3);
        let r = spectral_cluster(pts.view(), 2, 1).unwrap();
        let first = r.assignment[0];
        assert!(r.assignment[..20].iter().all(|&c| c == first));
        assert!(r.assignment[20..].iter().all(|&c| c != first));
    }

    #[test]
    fn matches_brute_force_normalized_cut() {
        let pts = two_blobs(7, 10.0, 8);
        let n = pts.nrows();
        let a = gaussian_affinity(pts.view()).unwrap();
        let mut best = (f64::INFINITY, vec![]);
        // point 0 fixed on side A; every other subset enumerated
        for mask in 0u32..(1 << (n - 1)) {
            let side: Vec<bool> = (0..n)
                .map(|i| i == 0 || (mask >> (i - 1)) & 1 == 1)
                .collect();
            if side.iter().all(|&s| s) {
                continue;
            }
            let c = normalized_cut(&a, &side);
            if c < best.0 {
                best = (c, side);
            }
        }
        let r = spectral_cluster(pts.view(), 2, 4).unwrap();
        let ours: Vec<bool> = r.assignment.iter().map(|&c| c == r.assignment[0]).collect();
        assert_eq!(ours, best.1);
    }

    #[test]
    fn trivial_cluster_counts() {
        let pts = array![[1.0, 0.0], [3.0, 2.0], [5.0, 4.0]];
        let one = spectral_cluster(pts.view(), 1, 0).unwrap();
        assert_eq!(one.centers.row(0).to_vec(), vec![3.0, 2.0]);
        let all = spectral_cluster(pts.view(), 3, 0).unwrap();
        assert_eq!(all.centers, pts);
        assert!(spectral_cluster(pts.view(), 4, 0).is_err());
    }

    #[test]
    fn identical_points_fall_back() {
        let pts = array![[2.0], [2.0], [2.0], [2.0]];
        let r = spectral_cluster(pts.view(), 2, 0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.assignment, vec![0, 1, 0, 1]);
    }

    #[test]
    fn eigen_residual_is_small() {
        let pts = two_blobs(10, 5.0, 1);
        let a = gaussian_affinity(pts.view()).unwrap();
        let n = a.nrows();
        let d: Vec<f64> = a.row_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
        let l = DMatrix::from_fn(n, n, |u, v| {
            (if u == v { 1.0 } else { 0.0 }) - d[u] * a[(u, v)] * d[v]
        });
        let eig = SymmetricEigen::new(l.clone());
        for i in 0..n {
            let v = eig.eigenvectors.column(i);
            let r = &l * v - v * eig.eigenvalues[i];
            assert!(r.norm() <= 1e-8);
        }
    }

    #[test]
    fn invariant_under_point_permutation() {
        let pts = two_blobs(15, 10.0, 21);
        let n = pts.nrows();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let shuffled = pts.select(ndarray::Axis(0), &perm);
        let a = spectral_cluster(pts.view(), 2, 5).unwrap();
        let b = spectral_cluster(shuffled.view(), 2, 5).unwrap();
        for i in 0..n {
            for j in 0..n {
                let same_a = a.assignment[perm[i]] == a.assignment[perm[j]];
                let same_b = b.assignment[i] == b.assignment[j];
                assert_eq!(same_a, same_b);
            }
        }
    }
}
