//! Half-spaces, polyhedral cones with dual vectors, the cone projection, and
//! epsilon-nets on spheres.
//!
//! A cone is given by a full-rank matrix `A` (rows `a_i`) and bias `b`. Its
//! dual vectors are the columns of `A^-1`, so `a_j . a_i* = delta_ij`, and the
//! apex solves `A x0 + b = 0`. Every point has the expansion
//! `x = x0 + sum_i lambda_i a_i*` with `lambda = A x + b`; the projection keeps
//! the non-negative coefficients and drops the negative ones.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, COND_LIMIT};
use crate::rng;

/// Closed half-space `{x : normal . x + offset >= 0}` with unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    normal: Vec<f64>,
    offset: f64,
}

impl HalfSpace {
    /// Normalizes `normal`; the offset is rescaled so the set is unchanged.
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let n = linalg::norm(&normal);
        if !(n > 0.0) || !n.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidParameter {
                name: "normal".into(),
                reason: "half-space normal must be a finite non-zero vector".into(),
            });
        }
        if (n - 1.0).abs() <= 1e-15 {
            return Ok(Self { normal, offset });
        }
        Ok(Self {
            normal: normal.into_iter().map(|v| v / n).collect(),
            offset: offset / n,
        })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed distance `normal . x + offset`.
    pub fn value(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.normal, x) + self.offset
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.value(x) >= 0.0
    }

    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        self.value(x).abs() <= tol
    }
}

/// Sign pattern of a point relative to a cone: `plus` holds the indices with
/// positive coefficient, `minus` the negative ones. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionLabel {
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
}

/// Polyhedral cone `S = {x : A x + b >= 0}` in R^n.
#[derive(Debug, Clone)]
pub struct Cone {
    a: DMatrix<f64>,
    b: Vec<f64>,
    dual: DMatrix<f64>,
    apex: Vec<f64>,
    cond: f64,
}

impl Cone {
    /// Fails if `A` is singular or its condition number exceeds 1e12.
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let (dual, cond) = linalg::inverse_with_cond(&a)?;
        if cond > COND_LIMIT {
            return Err(Error::IllConditioned {
                cond,
                limit: COND_LIMIT,
                layer: None,
            });
        }
        let apex = linalg::mat_vec(&dual, &b).into_iter().map(|v| -v).collect();
        Ok(Self {
            a,
            b,
            dual,
            apex,
            cond,
        })
    }

    /// The non-negative orthant: `A = I`, `b = 0`, apex at the origin.
    pub fn orthant(n: usize) -> Self {
        Self {
            a: DMatrix::identity(n, n),
            b: vec![0.0; n],
            dual: DMatrix::identity(n, n),
            apex: vec![0.0; n],
            cond: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    /// Columns are the dual vectors `a_i*`.
    pub fn dual(&self) -> &DMatrix<f64> {
        &self.dual
    }

    pub fn apex(&self) -> &[f64] {
        &self.apex
    }

    pub fn cond(&self) -> f64 {
        self.cond
    }

    /// Expansion coefficients `lambda_i = a_i . x + b_i`.
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        let mut lambda = linalg::mat_vec(&self.a, x);
        for (l, b) in lambda.iter_mut().zip(&self.b) {
            *l += b;
        }
        lambda
    }

    /// `apex + sum_i lambda_i a_i*`.
    pub fn reconstruct(&self, lambda: &[f64]) -> Vec<f64> {
        let mut x = linalg::mat_vec(&self.dual, lambda);
        for (xi, a) in x.iter_mut().zip(&self.apex) {
            *xi += a;
        }
        x
    }

    /// Coefficients above `tol` go to `plus`, below `-tol` to `minus`; the
    /// rest lie on a facet of the closure and belong to neither.
    pub fn classify(&self, x: &[f64], tol: f64) -> PartitionLabel {
        let mut label = PartitionLabel::default();
        for (i, l) in self.coords(x).into_iter().enumerate() {
            if l > tol {
                label.plus.push(i);
            } else if l < -tol {
                label.minus.push(i);
            }
        }
        label
    }

    /// Projection onto the cone: drops the negative coefficients of `x`.
    ///
    /// Points already in the cone are returned unchanged. Otherwise the
    /// result is `x - sum_{lambda_i < 0} lambda_i a_i*`, which equals
    /// `apex + dual relu(A x + b)` but leaves `x` untouched along the kept
    /// directions.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let lambda = self.coords(x);
        let mut out = x.to_vec();
        for (i, &l) in lambda.iter().enumerate() {
            if l < 0.0 {
                for (o, a) in out.iter_mut().zip(self.dual.column(i).iter()) {
                    *o -= l * a;
                }
            }
        }
        out
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.coords(x).iter().all(|&l| l >= -tol)
    }
}

/// Default tie tolerance for [`Cone::classify`].
pub fn default_partition_tol(x: &[f64]) -> f64 {
    1e-9 * (1.0 + linalg::norm(x))
}

/// Upper bound `2d (1 + 2r/eps)^(d-1)` on the size of a maximal
/// eps-separated subset of the sphere of radius `r` in R^d.
pub fn epsnet_cardinality_bound(d: usize, r: f64, eps: f64) -> f64 {
    2.0 * d as f64 * (1.0 + 2.0 * r / eps).powi(d as i32 - 1)
}

/// Samples without a net point within `eps` that the repair pass must see in
/// a row before a greedy net is accepted.
const REPAIR_CLEAN_RUN: usize = 1_000_000;
const REPAIR_MAX_SAMPLES: usize = 50_000_000;
const POOL_FACTOR: f64 = 50.0;
const POOL_CAP: usize = 4_000_000;

/// An eps-net of the sphere of radius `r` centred at the origin of R^d whose
/// points are also pairwise more than `eps` apart.
///
/// For `d = 2` the points are evenly spaced in angle, using the largest
/// count whose neighbour chord still exceeds `eps`; the seed is unused. For
/// `d >= 3` a greedy maximal separation is taken over a seeded pool of
/// `50 x bound` random sphere points, then extended with any fresh random
/// sample that is still farther than `eps` from the net, until a long run of
/// samples finds no gap.
pub fn epsnet_sphere(d: usize, r: f64, eps: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d < 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter {
            name: "eps".into(),
            reason: format!("must be positive, got {eps}"),
        });
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r".into(),
            reason: format!("must be positive, got {r}"),
        });
    }
    if d == 2 {
        return Ok(circle_net(r, eps));
    }
    Ok(greedy_net(d, r, eps, seed))
}

/// Number of evenly spaced circle points used by the planar net.
pub fn circle_net_size(r: f64, eps: f64) -> usize {
    let theta = 2.0 * (eps.min(2.0 * r) / (2.0 * r)).asin();
    let ratio = std::f64::consts::TAU / theta;
    // largest n with 2 pi / n > theta, i.e. neighbour chord > eps
    let mut n = ((ratio.ceil() as usize).saturating_sub(1)).max(1);
    while n > 1 && 2.0 * r * (std::f64::consts::PI / n as f64).sin() <= eps {
        n -= 1;
    }
    n
}

fn circle_net(r: f64, eps: f64) -> Vec<Vec<f64>> {
    let n = circle_net_size(r, eps);
    (0..n)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / n as f64;
            vec![r * angle.cos(), r * angle.sin()]
        })
        .collect()
}

/// Uniform hash grid with cell width `eps`, used for radius-`eps` queries.
struct CellGrid {
    cell: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl CellGrid {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            buckets: HashMap::new(),
        }
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    fn insert(&mut self, p: &[f64], idx: usize) {
        let key = self.key(p);
        self.buckets.entry(key).or_default().push(idx);
    }

    /// True if some stored point lies within distance `<= radius` of `p`.
    fn any_within(&self, points: &[Vec<f64>], p: &[f64], radius: f64) -> bool {
        let base = self.key(p);
        let d = base.len();
        let mut offset = vec![-1i64; d];
        let mut key = vec![0i64; d];
        loop {
            for i in 0..d {
                key[i] = base[i] + offset[i];
            }
            if let Some(bucket) = self.buckets.get(&key) {
                if bucket.iter().any(|&i| linalg::dist(&points[i], p) <= radius) {
                    return true;
                }
            }
            // odometer over {-1, 0, 1}^d
            let mut i = 0;
            while i < d {
                offset[i] += 1;
                if offset[i] <= 1 {
                    break;
                }
                offset[i] = -1;
                i += 1;
            }
            if i == d {
                return false;
            }
        }
    }
}

fn greedy_net(d: usize, r: f64, eps: f64, seed: u64) -> Vec<Vec<f64>> {
    let bound = epsnet_cardinality_bound(d, r, eps);
    let pool_size = ((POOL_FACTOR * bound).ceil() as usize).clamp(1, POOL_CAP);
    let mut pool_rng = rng::stream(seed, rng::streams::NET_POOL);

    let mut net: Vec<Vec<f64>> = Vec::new();
    let mut grid = CellGrid::new(eps);
    let offer = |p: Vec<f64>, net: &mut Vec<Vec<f64>>, grid: &mut CellGrid| -> bool {
        if grid.any_within(net, &p, eps) {
            return false;
        }
        grid.insert(&p, net.len());
        net.push(p);
        true
    };

    for _ in 0..pool_size {
        let p = rng::on_sphere(&mut pool_rng, d, r);
        offer(p, &mut net, &mut grid);
    }

    let mut repair_rng = rng::stream(seed, rng::streams::NET_REPAIR);
    let mut clean = 0usize;
    let mut drawn = 0usize;
    while clean < REPAIR_CLEAN_RUN && drawn < REPAIR_MAX_SAMPLES {
        let p = rng::on_sphere(&mut repair_rng, d, r);
        drawn += 1;
        if offer(p, &mut net, &mut grid) {
            clean = 0;
        } else {
            clean += 1;
        }
    }
    net
}

/// Largest distance from `n_samples` seeded uniform sphere points to their
/// nearest net point. Brute force; used as the coverage oracle.
pub fn empirical_covering_radius(
    net: &[Vec<f64>],
    d: usize,
    r: f64,
    n_samples: usize,
    seed: u64,
) -> f64 {
    use rayon::prelude::*;
    let mut sampler = rng::stream(seed, rng::streams::COVERAGE);
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| rng::on_sphere(&mut sampler, d, r))
        .collect();
    samples
        .par_iter()
        .map(|s| {
            net.iter()
                .map(|q| linalg::dist(q, s))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Smallest pairwise distance in a point set (infinity for fewer than two).
pub fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.min(linalg::dist(&points[i], &points[j]));
        }
    }
    best
}
