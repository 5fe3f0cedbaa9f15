//! Dense BFGS with a strong Wolfe line search.

use log::debug;

use super::OptimizerConfig;
use crate::error::{LdlError, Result};

/// Sufficient-decrease constant of the line search.
pub const C1: f64 = 1e-4;
/// Curvature constant of the line search.
pub const C2: f64 = 0.9;

const MAX_LINE_SEARCH: usize = 40;
const MAX_STEP: f64 = 1e10;

/// A differentiable function. `evaluate` writes the gradient at `x` into
/// `grad` and returns the value.
pub trait Objective {
    fn dimension(&self) -> usize;
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at the start and after every accepted step.
    pub history: Vec<f64>,
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective` from `x0`.
///
/// Stops when the gradient's infinity norm drops to
/// `cfg.gradient_tolerance`, after `cfg.max_iterations` iterations, or when
/// no step along the current direction lowers the objective.
pub fn bfgs_minimize(
    objective: &dyn Objective,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Minimum> {
    let n = x0.len();
    if n != objective.dimension() {
        return Err(LdlError::DimensionMismatch {
            expected: objective.dimension(),
            actual: n,
        });
    }
    let mut g = vec![0.0; n];
    let f = objective.evaluate(x0, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(LdlError::NonFiniteObjective { iteration: 0 });
    }
    let mut cur = Point {
        x: x0.to_vec(),
        f,
        g,
    };
    let mut history = vec![cur.f];
    // inverse Hessian approximation, row-major; None means identity
    let mut h: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut converged = inf_norm(&cur.g) <= cfg.gradient_tolerance;

    while !converged && iterations < cfg.max_iterations {
        let mut dir = match &h {
            Some(h) => mat_vec(h, &cur.g, n).into_iter().map(|v| -v).collect(),
            None => cur.g.iter().map(|v| -v).collect::<Vec<_>>(),
        };
        if dot(&dir, &cur.g) >= 0.0 {
            h = None;
            dir = cur.g.iter().map(|v| -v).collect();
        }
        let first_step = if h.is_none() {
            (1.0 / inf_norm(&cur.g)).min(1.0)
        } else {
            1.0
        };

        let next = match line_search(objective, &cur, &dir, first_step) {
            Some(p) => p,
            None if h.is_some() => {
                debug!("line search failed on quasi-Newton direction, resetting");
                h = None;
                continue;
            }
            None => {
                debug!("line search failed on steepest descent, stopping");
                break;
            }
        };
        iterations += 1;

        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * yy.sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            let hm = h.get_or_insert_with(|| {
                let scale = sy / yy;
                let mut id = vec![0.0; n * n];
                (0..n).for_each(|i| id[i * n + i] = scale);
                id
            });
            update_inverse_hessian(hm, &s, &y, sy, n);
        }
        cur = next;
        history.push(cur.f);
        converged = inf_norm(&cur.g) <= cfg.gradient_tolerance;
    }

    Ok(Minimum {
        gradient_inf_norm: inf_norm(&cur.g),
        x: cur.x,
        value: cur.f,
        iterations,
        converged,
        history,
    })
}

fn mat_vec(h: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    h.chunks_exact(n).map(|row| dot(row, v)).collect()
}

// H <- (I - r s y^T) H (I - r y s^T) + r s s^T, with r = 1 / (s^T y)
fn update_inverse_hessian(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        let row = &mut h[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

struct Probe {
    alpha: f64,
    point: Point,
    slope: f64,
}

fn probe(objective: &dyn Objective, from: &Point, dir: &[f64], alpha: f64) -> Probe {
    let x: Vec<f64> = from.x.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
    let mut g = vec![0.0; x.len()];
    let f = objective.evaluate(&x, &mut g);
    let slope = dot(&g, dir);
    Probe {
        alpha,
        point: Point { x, f, g },
        slope,
    }
}

fn finite(p: &Probe) -> bool {
    p.point.f.is_finite() && p.slope.is_finite()
}

// Strong Wolfe bracketing search followed by zoom.
fn line_search(objective: &dyn Objective, cur: &Point, dir: &[f64], first: f64) -> Option<Point> {
    let f0 = cur.f;
    let d0 = dot(&cur.g, dir);
    let armijo = |p: &Probe| finite(p) && p.point.f <= f0 + C1 * p.alpha * d0;
    let curvature = |p: &Probe| p.slope.abs() <= -C2 * d0;

    let mut prev = Probe {
        alpha: 0.0,
        point: Point {
            x: cur.x.clone(),
            f: cur.f,
            g: cur.g.clone(),
        },
        slope: d0,
    };
    let mut alpha = first;
    for i in 0..MAX_LINE_SEARCH {
        let p = probe(objective, cur, dir, alpha);
        if !armijo(&p) || (i > 0 && p.point.f >= prev.point.f) {
            return zoom(objective, cur, dir, prev, p, f0, d0);
        }
        if curvature(&p) {
            return Some(p.point);
        }
        if p.slope >= 0.0 {
            return zoom(objective, cur, dir, p, prev, f0, d0);
        }
        alpha = (2.0 * alpha).min(MAX_STEP);
        prev = p;
        if prev.alpha >= MAX_STEP {
            return Some(prev.point);
        }
    }
    (prev.alpha > 0.0).then_some(prev.point)
}

fn zoom(
    objective: &dyn Objective,
    cur: &Point,
    dir: &[f64],
    mut lo: Probe,
    mut hi: Probe,
    f0: f64,
    d0: f64,
) -> Option<Point> {
    for _ in 0..MAX_LINE_SEARCH {
        let alpha = interpolate(&lo, &hi);
        let p = probe(objective, cur, dir, alpha);
        let sufficient = finite(&p) && p.point.f <= f0 + C1 * alpha * d0;
        if !sufficient || p.point.f >= lo.point.f {
            hi = p;
        } else {
            if p.slope.abs() <= -C2 * d0 {
                return Some(p.point);
            }
            if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
    }
    // interval collapsed: accept the best decreasing point if there is one
    (lo.alpha > 0.0 && lo.point.f < f0).then_some(lo.point)
}

// Safeguarded cubic interpolation between the bracket ends.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let width = b - a;
    let bisect = a + 0.5 * width;
    if !finite(hi) {
        return bisect;
    }
    let (fa, fb, ga, gb) = (lo.point.f, hi.point.f, lo.slope, hi.slope);
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if disc < 0.0 {
        return bisect;
    }
    let d2 = width.signum() * disc.sqrt();
    let t = b - width * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if t.is_finite() && t > left + margin && t < right - margin {
        t
    } else {
        bisect
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn quadratic_reaches_center() {
        let c = [1.5, -2.0, 0.25, 4.0];
        let obj = FnObjective::new(4, |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..4 {
                g[i] = 2.0 * (x[i] - c[i]);
                f += (x[i] - c[i]).powi(2);
            }
            f
        });
        for x0 in [[0.0; 4], [10.0, -10.0, 3.0, 1e3]] {
            let m = bfgs_minimize(&obj, &x0, &OptimizerConfig::default()).unwrap();
            for (a, b) in m.x.iter().zip(c) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let obj = FnObjective::new(2, rosenbrock);
        let m = bfgs_minimize(&obj, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
        for w in m.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn rosenbrock_grid_search_agrees() {
        // independent check: the minimum over a fine grid sits at (1, 1)
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut g = [0.0; 2];
        for i in 0..=400 {
            for j in 0..=400 {
                let x = [-2.0 + i as f64 * 0.01, -1.0 + j as f64 * 0.01];
                let f = rosenbrock(&x, &mut g);
                if f < best.0 {
                    best = (f, x[0], x[1]);
                }
            }
        }
        let obj = FnObjective::new(2, rosenbrock);
        let m = bfgs_minimize(&obj, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!((m.x[0] - best.1).abs() < 1e-4 + 0.01);
        assert!((m.x[1] - best.2).abs() < 1e-4 + 0.01);
        assert!(m.value <= best.0 + 1e-10);
    }

    #[test]
    fn optimal_start_is_returned_unchanged() {
        let obj = FnObjective::new(2, rosenbrock);
        let m = bfgs_minimize(&obj, &[1.0, 1.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(m.x, vec![1.0, 1.0]);
        assert_eq!(m.iterations, 0);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let obj = FnObjective::new(1, |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            x[0].ln()
        });
        assert!(matches!(
            bfgs_minimize(&obj, &[-1.0], &OptimizerConfig::default()),
            Err(LdlError::NonFiniteObjective { iteration: 0 })
        ));
    }

    #[test]
    fn line_search_backs_off_from_non_finite_region() {
        // -ln(x) + x has its minimum at 1 and is undefined for x <= 0
        let obj = FnObjective::new(1, |x: &[f64], g: &mut [f64]| {
            g[0] = -1.0 / x[0] + 1.0;
            if x[0] <= 0.0 {
                f64::NAN
            } else {
                -x[0].ln() + x[0]
            }
        });
        let m = bfgs_minimize(&obj, &[0.05], &OptimizerConfig::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }
}
