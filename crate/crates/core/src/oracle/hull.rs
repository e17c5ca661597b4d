use nalgebra::{DMatrix, DVector};

use super::fd::{limiting_gradient, FdSchedule};
use super::OracleError;
use crate::asd::{sample_direction, seeded_rng};
use crate::graph::ProgramDef;
use crate::library::LibraryRegistry;

/// Minimum-norm point of `conv(points)` by Wolfe's algorithm. Returns the
/// point and its convex weights.
pub fn min_norm_point(points: &[Vec<f64>], tol: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(!points.is_empty(), "empty point set");
    let m = points.len();
    let dim = points[0].len();
    let p: Vec<DVector<f64>> = points.iter().map(|q| DVector::from_column_slice(q)).collect();
    let scale = p.iter().map(|q| q.norm_squared()).fold(0.0, f64::max).max(1.0);
    let start = (0..m).min_by(|&a, &b| p[a].norm_squared().total_cmp(&p[b].norm_squared())).unwrap();
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let combine = |active: &[usize], lambda: &[f64]| {
        let mut x = DVector::zeros(dim);
        for (&i, &l) in active.iter().zip(lambda) {
            x += &p[i] * l;
        }
        x
    };
    let mut x = p[start].clone();
    for _ in 0..(50 * (m + dim + 1)) {
        let j = (0..m).min_by(|&a, &b| x.dot(&p[a]).total_cmp(&x.dot(&p[b]))).unwrap();
        if x.norm_squared() - x.dot(&p[j]) <= tol * tol * scale * 1e-3 || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(0.0);
        loop {
            let alpha = affine_min(&p, &active);
            if alpha.iter().all(|&a| a > 1e-14) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-14 {
                    let t = l / (l - a);
                    if t < theta {
                        theta = t;
                    }
                }
            }
            let theta = theta.clamp(0.0, 1.0);
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            let mut k = 0;
            while k < active.len() {
                if lambda[k] <= 1e-14 {
                    active.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            if active.len() <= 1 {
                if let Some(l) = lambda.first_mut() {
                    *l = 1.0;
                }
                break;
            }
        }
        x = combine(&active, &lambda);
    }
    let mut weights = vec![0.0; m];
    let total: f64 = lambda.iter().sum();
    for (&i, &l) in active.iter().zip(&lambda) {
        weights[i] = l / total;
    }
    (combine(&active, &lambda).iter().copied().collect(), weights)
}

/// Weights minimizing `|Σ α_i p_i|` over the affine hull of the active set.
fn affine_min(p: &[DVector<f64>], active: &[usize]) -> Vec<f64> {
    let k = active.len();
    let mut a = DMatrix::zeros(k + 1, k + 1);
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            a[(r, c)] = p[i].dot(&p[j]);
        }
        a[(r, k)] = 1.0;
        a[(k, r)] = 1.0;
    }
    let mut b = DVector::zeros(k + 1);
    b[k] = 1.0;
    let sol = a
        .clone()
        .lu()
        .solve(&b)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .or_else(|| a.svd(true, true).solve(&b, 1e-12).ok())
        .unwrap_or_else(|| {
            let mut s = DVector::zeros(k + 1);
            s[0] = 1.0;
            s
        });
    sol.iter().take(k).copied().collect()
}

/// Euclidean distance from `u` to `conv(points)`.
pub fn hull_distance(points: &[Vec<f64>], u: &[f64], tol: f64) -> f64 {
    let shifted: Vec<Vec<f64>> =
        points.iter().map(|q| q.iter().zip(u).map(|(a, b)| a - b).collect()).collect();
    let (x, _) = min_norm_point(&shifted, tol / 10.0);
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HullOptions {
    pub n_dirs: usize,
    pub tol: f64,
    pub dedup_tol: f64,
    pub seed: u64,
    pub schedule: FdSchedule,
}

impl Default for HullOptions {
    fn default() -> Self {
        HullOptions { n_dirs: 32, tol: 1e-6, dedup_tol: 1e-8, seed: 0, schedule: FdSchedule::default() }
    }
}

/// Distinct limiting gradients collected around a point.
#[derive(Clone, Debug, PartialEq)]
pub struct HullVertices {
    pub vertices: Vec<Vec<f64>>,
    /// Directions whose limiting gradient could be computed.
    pub valid_samples: usize,
    pub directions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HullVerdict {
    Member { distance: f64 },
    NonMember { distance: f64 },
    /// Too few directions yielded a limiting gradient.
    Inconclusive { valid_samples: usize },
}

impl HullVerdict {
    pub fn is_member(&self) -> bool {
        matches!(self, HullVerdict::Member { .. })
    }
}

pub const MAX_HULL_DIM: usize = 4;

/// Limiting gradients along `opts.n_dirs` random directions, deduplicated.
pub fn hull_vertices(
    prog: &ProgramDef,
    x: &[f64],
    lib: &LibraryRegistry,
    opts: &HullOptions,
) -> Result<HullVertices, OracleError> {
    let d = prog.input_arity;
    if d > MAX_HULL_DIM {
        return Err(OracleError::TooManyInputs { found: d, limit: MAX_HULL_DIM });
    }
    if opts.n_dirs < 2 * d + 2 {
        return Err(OracleError::TooFewDirections { found: opts.n_dirs, needed: 2 * d + 2 });
    }
    let mut rng = seeded_rng(opts.seed);
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let mut valid = 0;
    for _ in 0..opts.n_dirs {
        let v = sample_direction(d, &mut rng);
        let g = match limiting_gradient(prog, x, &v, lib, &opts.schedule) {
            Ok(g) => g.gradient,
            Err(OracleError::NoValidSteps) => continue,
            Err(e) => return Err(e),
        };
        valid += 1;
        let dup = vertices
            .iter()
            .any(|w| w.iter().zip(&g).all(|(a, b)| (a - b).abs() <= opts.dedup_tol));
        if !dup {
            vertices.push(g);
        }
    }
    Ok(HullVertices { vertices, valid_samples: valid, directions: opts.n_dirs })
}

impl HullVertices {
    pub fn verdict(&self, u: &[f64], tol: f64) -> HullVerdict {
        if self.valid_samples < 2 || self.vertices.is_empty() {
            return HullVerdict::Inconclusive { valid_samples: self.valid_samples };
        }
        let distance = hull_distance(&self.vertices, u, tol);
        if distance <= tol {
            HullVerdict::Member { distance }
        } else {
            HullVerdict::NonMember { distance }
        }
    }
}

/// Whether `u` lies within `tol` of the convex hull of sampled limiting
/// gradients at `x`. A pass is evidence from finitely many directions.
pub fn clarke_hull_check(
    prog: &ProgramDef,
    x: &[f64],
    u: &[f64],
    lib: &LibraryRegistry,
    opts: &HullOptions,
) -> Result<HullVerdict, OracleError> {
    if u.len() != prog.input_arity {
        return Err(OracleError::Dimension { expected: prog.input_arity, found: u.len() });
    }
    Ok(hull_vertices(prog, x, lib, opts)?.verdict(u, opts.tol))
}
