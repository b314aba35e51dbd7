//! Decision boundary extraction, error measurement and the invariant suite.
//!
//! Every network here has the form `F(x, y) = phi_hat(x) - y`, so the
//! decision height is `phi_hat(x) = F(x, 0)`. The slope in `y` is checked
//! rather than assumed.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::construction::{self, constants, DELTA_FRACTION, SHRINK};
use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg;
use crate::network::{DecisionFunction, ModifiedNetwork, ReluNetwork, StageInfo};
use crate::rng::{self, streams};
use crate::surfaces::SurfaceFunction;

/// Allowed deviation of `F(x, 1) - F(x, 0)` from -1.
pub const SLOPE_TOL: f64 = 1e-9;

/// Slack added to every lemma bound in the invariant suite.
pub const LEMMA_SLACK: f64 = 1e-9;

/// `F(x, 0)`, after checking that `F` has slope -1 in `y` at `x`.
pub fn decision_height<N: DecisionFunction + ?Sized>(net: &N, x: &[f64]) -> Result<f64> {
    let (h, dev) = height_and_slope(net, x);
    if dev > SLOPE_TOL {
        return Err(Error::SlopeCheck {
            x: x.to_vec(),
            slope: net.eval(x, 1.0) - h,
        });
    }
    Ok(h)
}

/// `F(x, 0)` and the largest deviation from slope -1 seen at `y = 1` and
/// `y = -1`.
fn height_and_slope<N: DecisionFunction + ?Sized>(net: &N, x: &[f64]) -> (f64, f64) {
    let h = net.eval(x, 0.0);
    let up = (net.eval(x, 1.0) - h + 1.0).abs();
    let down = (h - net.eval(x, -1.0) + 1.0).abs();
    (h, up.max(down))
}

/// Root of `y -> F(x, y)` by bisection. A cross-check for
/// [`decision_height`] that does not rely on the slope identity.
pub fn decision_height_bisect<N: DecisionFunction + ?Sized>(net: &N, x: &[f64], tol: f64) -> f64 {
    let mut lo = -1.0;
    let mut hi = 1.0;
    while net.eval(x, lo) < 0.0 {
        lo *= 2.0;
    }
    while net.eval(x, hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if net.eval(x, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Uniform Cartesian grid on `[-R, R]^d`, masked to `|x| <= R - h` where `h`
/// is the cell size.
#[derive(Debug, Clone)]
pub struct Grid {
    pub d: usize,
    pub res: usize,
    pub radius: f64,
    pub cell: f64,
}

impl Grid {
    pub fn new(d: usize, res: usize, radius: f64) -> Result<Self> {
        if res < 2 {
            return Err(Error::InvalidParameter {
                name: "grid".into(),
                reason: format!("need at least 2 points per axis, got {res}"),
            });
        }
        Ok(Self {
            d,
            res,
            radius,
            cell: 2.0 * radius / (res - 1) as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.res.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        for xi in x.iter_mut() {
            *xi = -self.radius + (index % self.res) as f64 * self.cell;
            index /= self.res;
        }
        x
    }

    pub fn in_mask(&self, x: &[f64]) -> bool {
        linalg::norm(x) <= self.radius - self.cell + 1e-12
    }
}

/// Heights on the masked grid, in grid index order.
#[derive(Debug, Clone)]
pub struct GridHeights {
    pub grid: Grid,
    /// `(index, x, phi(x), phi_hat(x), slope deviation)` for masked points.
    pub rows: Vec<(usize, Vec<f64>, f64, f64, f64)>,
}

impl GridHeights {
    pub fn compute<N: DecisionFunction + ?Sized>(
        net: &N,
        phi: &SurfaceFunction,
        grid: Grid,
    ) -> Self {
        let rows = (0..grid.len())
            .into_par_iter()
            .filter_map(|i| {
                let x = grid.point(i);
                if !grid.in_mask(&x) {
                    return None;
                }
                let (h, dev) = height_and_slope(net, &x);
                let f = phi.value(&x);
                Some((i, x, f, h, dev))
            })
            .collect();
        Self { grid, rows }
    }

    /// CSV with columns `x0..x{d-1},phi,phi_hat`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.grid.d {
            out.push_str(&format!("x{i},"));
        }
        out.push_str("phi,phi_hat\n");
        for (_, x, f, h, _) in &self.rows {
            for v in x {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{f},{h}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub d: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub delta: f64,
    #[serde(rename = "D")]
    pub d_bound: f64,
    pub grid_res: usize,
    pub cell: f64,
    pub points: usize,
    pub sup_error: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub argmax: Vec<f64>,
    pub phi_at_argmax: f64,
    pub phi_hat_at_argmax: f64,
    /// Largest difference quotient of `phi_hat` between grid neighbours.
    pub lipschitz_emp: f64,
    pub slope_max_deviation: f64,
    pub slope_ok: bool,
    pub layers: usize,
    pub stages: usize,
    pub layer_bound: f64,
    pub stage_bound: f64,
}

/// Sup of `|phi - phi_hat|` over the masked grid, with the theorem bound.
pub fn sup_error<N: DecisionFunction + ?Sized>(
    net: &N,
    phi: &SurfaceFunction,
    grid_res: usize,
) -> Result<ErrorReport> {
    let heights = GridHeights::compute(net, phi, Grid::new(net.dim(), grid_res, net.meta().radius)?);
    error_report(net, &heights)
}

pub fn error_report<N: DecisionFunction + ?Sized>(net: &N, heights: &GridHeights) -> Result<ErrorReport> {
    let meta = net.meta();
    let d = net.dim();
    let grid = &heights.grid;
    let bound = construction::error_bound(d, meta.radius, meta.delta, meta.d_bound)?;

    // First index wins ties, so the argmax is reproducible.
    let mut best: Option<usize> = None;
    let mut sup = 0.0f64;
    let mut slope_dev = 0.0f64;
    for (row, (_, _, f, h, dev)) in heights.rows.iter().enumerate() {
        let e = (f - h).abs();
        if best.is_none() || e > sup {
            sup = e;
            best = Some(row);
        }
        slope_dev = slope_dev.max(*dev);
    }

    let mut by_index = std::collections::HashMap::with_capacity(heights.rows.len());
    for (i, _, _, h, _) in &heights.rows {
        by_index.insert(*i, *h);
    }
    let mut lipschitz = 0.0f64;
    for (i, _, _, h, _) in &heights.rows {
        let mut stride = 1;
        for _ in 0..d {
            let coord = (i / stride) % grid.res;
            if coord + 1 < grid.res {
                if let Some(hn) = by_index.get(&(i + stride)) {
                    lipschitz = lipschitz.max((hn - h).abs() / grid.cell);
                }
            }
            stride *= grid.res;
        }
    }

    let (argmax, phi_at, hat_at) = match best {
        Some(row) => {
            let (_, x, f, h, _) = &heights.rows[row];
            (x.clone(), *f, *h)
        }
        None => (vec![], 0.0, 0.0),
    };
    Ok(ErrorReport {
        d,
        radius: meta.radius,
        delta: meta.delta,
        d_bound: meta.d_bound,
        grid_res: grid.res,
        cell: grid.cell,
        points: heights.rows.len(),
        sup_error: sup,
        bound,
        within_bound: sup <= bound,
        argmax,
        phi_at_argmax: phi_at,
        phi_hat_at_argmax: hat_at,
        lipschitz_emp: lipschitz,
        slope_max_deviation: slope_dev,
        slope_ok: slope_dev <= SLOPE_TOL,
        layers: net.layer_count(),
        stages: net.stage_count(),
        layer_bound: construction::layer_count_bound(d, meta.radius, meta.delta),
        stage_bound: construction::stage_count_bound(meta.radius, meta.delta),
    })
}

/// The band `{(x, y) : |f(x) - y| <= eps}` over the domain of `f`.
#[derive(Debug, Clone, Copy)]
pub struct BandSpec<'a> {
    pub base: &'a SurfaceFunction,
    pub eps: f64,
}

impl BandSpec<'_> {
    pub fn contains(&self, x: &[f64], y: f64) -> bool {
        (self.base.value(x) - y).abs() <= self.eps
    }
}

pub fn band_contains(band: &BandSpec<'_>, x: &[f64], y: f64) -> bool {
    band.contains(x, y)
}

/// Draws `n` points uniform in `B_R x [-c, c]` outside the band of
/// half-width `eps` around the graph of `phi`.
pub fn sample_outside_band(
    phi: &SurfaceFunction,
    radius: f64,
    c: f64,
    eps: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let band = BandSpec { base: phi, eps };
    let mut s = rng::stream(seed, streams::SIGN_CHECK);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * n.max(1000) {
            return Err(Error::InvalidParameter {
                name: "eps".into(),
                reason: format!("band of half-width {eps} leaves no room in [-{c}, {c}]"),
            });
        }
        let x = rng::in_ball(&mut s, phi.dim(), radius);
        let y = s.random_range(-c..=c);
        if !band.contains(&x, y) {
            out.push((x, y));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SignCheck {
    pub samples: usize,
    pub correct: usize,
    pub fraction: f64,
    pub eps: f64,
    pub first_failure: Option<(Vec<f64>, f64)>,
}

/// Fraction of points outside the `eps`-band with `sgn F(x, y) = sgn(phi(x) - y)`.
pub fn sign_check<N: DecisionFunction + ?Sized>(
    net: &N,
    phi: &SurfaceFunction,
    eps: f64,
    c: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SignCheck> {
    let points = sample_outside_band(phi, net.meta().radius, c, eps, n_samples, seed)?;
    let ok: Vec<bool> = points
        .par_iter()
        .map(|(x, y)| {
            let f = net.eval(x, *y);
            let truth = phi.value(x) - y;
            f.signum() == truth.signum() && f != 0.0
        })
        .collect();
    let correct = ok.iter().filter(|&&b| b).count();
    let first_failure = ok.iter().position(|&b| !b).map(|i| points[i].clone());
    Ok(SignCheck {
        samples: points.len(),
        correct,
        fraction: if points.is_empty() {
            1.0
        } else {
            correct as f64 / points.len() as f64
        },
        eps,
        first_failure,
    })
}

/// Class 1 where `phi > 0`, class 2 where `phi < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Label {
    One,
    Two,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    /// `counts[true][predicted]`, index 0 for class 1.
    pub counts: [[usize; 2]; 2],
    /// Points with `F(x, 0) = 0`, which belong to neither class.
    pub unclassified: usize,
}

impl Confusion {
    pub fn errors(&self) -> usize {
        self.counts[0][1] + self.counts[1][0] + self.unclassified
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum::<usize>() + self.unclassified
    }
}

/// Classifies each `x` by the sign of `F(x, 0)`.
pub fn classify_demo<N: DecisionFunction + ?Sized>(net: &N, points: &[(Vec<f64>, Label)]) -> Confusion {
    let preds: Vec<Option<Label>> = points
        .par_iter()
        .map(|(x, _)| {
            let f = net.eval(x, 0.0);
            if f > 0.0 {
                Some(Label::One)
            } else if f < 0.0 {
                Some(Label::Two)
            } else {
                None
            }
        })
        .collect();
    let mut c = Confusion::default();
    let idx = |l: Label| if l == Label::One { 0 } else { 1 };
    for ((_, truth), pred) in points.iter().zip(preds) {
        match pred {
            Some(p) => c.counts[idx(*truth)][idx(p)] += 1,
            None => c.unclassified += 1,
        }
    }
    c
}

/// `n_per_class` points per class in `B_R` with `|phi(x)| > margin`.
pub fn labeled_points(
    phi: &SurfaceFunction,
    radius: f64,
    margin: f64,
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Label)>> {
    let mut s = rng::stream(seed, streams::CLASSIFY);
    let mut ones = Vec::new();
    let mut twos = Vec::new();
    let limit = 1000 * n_per_class.max(100);
    for _ in 0..limit {
        if ones.len() >= n_per_class && twos.len() >= n_per_class {
            break;
        }
        let x = rng::in_ball(&mut s, phi.dim(), radius);
        let f = phi.value(&x);
        if f > margin && ones.len() < n_per_class {
            ones.push((x, Label::One));
        } else if f < -margin && twos.len() < n_per_class {
            twos.push((x, Label::Two));
        }
    }
    if ones.len() < n_per_class || twos.len() < n_per_class {
        return Err(Error::InvalidParameter {
            name: "margin".into(),
            reason: format!(
                "found only {} / {} points with |phi| > {margin}",
                ones.len(),
                twos.len()
            ),
        });
    }
    ones.extend(twos);
    Ok(ones)
}

/// Points at level `+margin` or `-margin` up to bisection precision, on the
/// outer side of the level, so `|phi(x)| > margin` holds strictly.
pub fn margin_points(
    phi: &SurfaceFunction,
    radius: f64,
    margin: f64,
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Label)>> {
    let mut s = rng::stream(seed, streams::CLASSIFY ^ 1);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for (label, level) in [(Label::One, margin), (Label::Two, -margin)] {
        let sign = if label == Label::One { 1.0 } else { -1.0 };
        let mut found = 0;
        let mut tries = 0;
        while found < n_per_class {
            tries += 1;
            if tries > 1000 * n_per_class.max(100) {
                return Err(Error::InvalidParameter {
                    name: "margin".into(),
                    reason: format!("level {level} not reached inside the ball"),
                });
            }
            let a = rng::in_ball(&mut s, phi.dim(), radius);
            let b = rng::in_ball(&mut s, phi.dim(), radius);
            // `outer` strictly beyond the level, `inner` not.
            let (mut outer, mut inner) = {
                let ga = sign * (phi.value(&a) - level);
                let gb = sign * (phi.value(&b) - level);
                if ga > 0.0 && gb <= 0.0 {
                    (a, b)
                } else if gb > 0.0 && ga <= 0.0 {
                    (b, a)
                } else {
                    continue;
                }
            };
            for _ in 0..200 {
                let mid: Vec<f64> = outer.iter().zip(&inner).map(|(p, q)| 0.5 * (p + q)).collect();
                if mid == outer || mid == inner {
                    break;
                }
                if sign * (phi.value(&mid) - level) > 0.0 {
                    outer = mid;
                } else {
                    inner = mid;
                }
            }
            out.push((outer, label));
            found += 1;
        }
    }
    Ok(out)
}

/// Least-squares slope of `log(errors)` against `log(deltas)`.
pub fn loglog_slope(deltas: &[f64], errors: &[f64]) -> f64 {
    let n = deltas.len() as f64;
    let xs: Vec<f64> = deltas.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Sample counts for the invariant suite.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantOptions {
    /// Traced starts on each stage sphere.
    pub starts_per_stage: usize,
    /// Monte-Carlo samples for net coverage, per stage.
    pub coverage_samples: usize,
    /// Graph points pushed through the whole network.
    pub graph_samples: usize,
    /// Directions and points for the nesting check, per stage pair.
    pub nesting_samples: usize,
    pub seed: u64,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self {
            starts_per_stage: 1000,
            coverage_samples: 100_000,
            graph_samples: 10_000,
            nesting_samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageCheck {
    pub k: usize,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

/// One named check. For per-stage checks the top-level values are those of
/// the stage with the smallest margin.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    /// `bound - measured` for upper bounds, `measured - bound` for lower.
    pub margin: f64,
    pub passed: bool,
    pub samples: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_stage: Vec<StageCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Check {
    /// Passes when `measured <= bound`.
    pub fn at_most(name: &str, measured: f64, bound: f64, samples: usize) -> Self {
        scalar_check(name, measured, bound, Sense::Upper, samples)
    }

    /// Passes when `measured >= bound`.
    pub fn at_least(name: &str, measured: f64, bound: f64, samples: usize) -> Self {
        scalar_check(name, measured, bound, Sense::Lower, samples)
    }
}

impl InvariantReport {
    pub fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Sense {
    /// `measured <= bound`
    Upper,
    /// `measured >= bound`
    Lower,
}

fn scalar_check(name: &str, measured: f64, bound: f64, sense: Sense, samples: usize) -> Check {
    let margin = match sense {
        Sense::Upper => bound - measured,
        Sense::Lower => measured - bound,
    };
    Check {
        name: name.into(),
        measured,
        bound,
        margin,
        passed: margin >= 0.0 && !measured.is_nan(),
        samples,
        per_stage: vec![],
    }
}

fn staged_check(name: &str, per_stage: Vec<StageCheck>, sense: Sense, samples: usize) -> Check {
    let margin_of = |s: &StageCheck| match sense {
        Sense::Upper => s.bound - s.measured,
        Sense::Lower => s.measured - s.bound,
    };
    let worst = per_stage
        .iter()
        .min_by(|a, b| margin_of(a).total_cmp(&margin_of(b)));
    let (measured, bound, margin) = match worst {
        Some(w) => (w.measured, w.bound, margin_of(w)),
        None => (0.0, 0.0, 0.0),
    };
    Check {
        name: name.into(),
        measured,
        bound,
        margin,
        passed: per_stage.iter().all(|s| s.passed),
        samples,
        per_stage,
    }
}

fn stage_entry(k: usize, measured: f64, bound: f64, sense: Sense) -> StageCheck {
    let passed = match sense {
        Sense::Upper => measured <= bound,
        Sense::Lower => measured >= bound,
    } && !measured.is_nan();
    StageCheck {
        k,
        measured,
        bound,
        passed,
    }
}

/// Radial function of the stage polytope: the largest `t` with `t u` inside.
fn radial(net: &ModifiedNetwork, k: usize, u: &[f64]) -> f64 {
    net.stage_layers(k)
        .iter()
        .filter_map(|l| {
            let c = linalg::dot(l.beta(), u);
            (c < 0.0).then(|| l.offset() / -c)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Net points `q = -r beta` of a stage.
fn net_points(net: &ModifiedNetwork, s: &StageInfo) -> Vec<Vec<f64>> {
    net.stage_layers(s.k)
        .iter()
        .map(|l| l.beta().iter().map(|b| -b * s.r).collect())
        .collect()
}

struct StageTraces {
    landing_inside: f64,
    landing_on: f64,
    path: f64,
    step_excess: f64,
    y_dev: f64,
}

fn trace_stage(net: &ModifiedNetwork, phi: &SurfaceFunction, s: &StageInfo, n: usize, seed: u64) -> StageTraces {
    let d = net.dim();
    let mut sampler = rng::stream(seed ^ (s.k as u64 + 1), streams::VERIFY);
    let starts: Vec<Vec<f64>> = (0..n).map(|_| rng::on_sphere(&mut sampler, d, s.r)).collect();
    let layers = net.stage_layers(s.k);
    let inner = s.r - s.delta;
    let per: Vec<StageTraces> = starts
        .par_iter()
        .map(|x0| {
            let mut x = x0.clone();
            let mut y = phi.value(x0);
            let mut path = 0.0;
            let mut step_excess = f64::NEG_INFINITY;
            for l in layers {
                let before = linalg::dot(&x, &x);
                let t = crate::layers::apply_projection_layer_in_place(l, &mut x, &mut y);
                if t > 0.0 {
                    let after = linalg::dot(&x, &x);
                    step_excess = step_excess.max(t - (before - after) / (2.0 * inner));
                }
                path += t;
            }
            let values: Vec<f64> = layers.iter().map(|l| l.halfspace().value(&x)).collect();
            let inside = values.iter().fold(f64::INFINITY, |a, &v| a.min(v));
            let on = values.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
            StageTraces {
                landing_inside: -inside,
                landing_on: on,
                path,
                step_excess,
                y_dev: (y - phi.value(&x)).abs(),
            }
        })
        .collect();
    per.into_iter().fold(
        StageTraces {
            landing_inside: f64::NEG_INFINITY,
            landing_on: 0.0,
            path: 0.0,
            step_excess: f64::NEG_INFINITY,
            y_dev: 0.0,
        },
        |a, b| StageTraces {
            landing_inside: a.landing_inside.max(b.landing_inside),
            landing_on: a.landing_on.max(b.landing_on),
            path: a.path.max(b.path),
            step_excess: a.step_excess.max(b.step_excess),
            y_dev: a.y_dev.max(b.y_dev),
        },
    )
}

/// Worst `|phi(x) + t g - phi(x + t beta)| / t` over sampled cap points.
fn single_projection_ratio(
    net: &ModifiedNetwork,
    phi: &SurfaceFunction,
    s: &StageInfo,
    n: usize,
    seed: u64,
) -> f64 {
    let d = net.dim();
    let layers = net.stage_layers(s.k);
    if layers.is_empty() {
        return 0.0;
    }
    let mut sampler = rng::stream(seed ^ (s.k as u64 + 1), streams::VERIFY ^ 1);
    let cap_radius = (2.0 * s.r * s.delta).sqrt();
    let mut cases = Vec::with_capacity(n);
    let mut tries = 0;
    while cases.len() < n && tries < 100 * n {
        tries += 1;
        let l = &layers[cases.len() % layers.len()];
        let q: Vec<f64> = l.beta().iter().map(|b| -b * s.r).collect();
        let off = rng::in_ball(&mut sampler, d, cap_radius);
        let x: Vec<f64> = q.iter().zip(&off).map(|(a, b)| a + b).collect();
        if linalg::norm(&x) <= s.r && l.halfspace().value(&x) < 0.0 {
            cases.push((l, x));
        }
    }
    cases
        .par_iter()
        .map(|(l, x)| {
            let t = -l.halfspace().value(x);
            let moved: Vec<f64> = x.iter().zip(l.beta()).map(|(a, b)| a + t * b).collect();
            (phi.value(x) + t * l.g() - phi.value(&moved)).abs() / t
        })
        .reduce(|| 0.0, f64::max)
}

/// Runs every lemma check on `net` against the surface it was built from.
pub fn invariant_suite(net: &ModifiedNetwork, phi: &SurfaceFunction, opts: &InvariantOptions) -> InvariantReport {
    let d = net.dim();
    let meta = net.meta().clone();
    let dd = meta.d_bound;
    let stages = net.stages();
    let mut checks = Vec::new();

    checks.push(staged_check(
        "delta_condition",
        stages
            .iter()
            .map(|s| stage_entry(s.k, s.delta / s.r, DELTA_FRACTION + 1e-12, Sense::Upper))
            .collect(),
        Sense::Upper,
        0,
    ));
    checks.push(staged_check(
        "eps_relation",
        stages
            .iter()
            .map(|s| stage_entry(s.k, (s.eps * s.eps - s.delta * s.r / 2.0).abs(), 1e-15, Sense::Upper))
            .collect(),
        Sense::Upper,
        0,
    ));
    checks.push(staged_check(
        "delta_schedule",
        stages
            .iter()
            .map(|s| {
                let want = construction::delta_schedule(s.r, meta.delta);
                stage_entry(s.k, (s.delta - want).abs(), 0.0, Sense::Upper)
            })
            .collect(),
        Sense::Upper,
        0,
    ));
    checks.push(staged_check(
        "tangency",
        stages
            .iter()
            .map(|s| {
                let inner = s.r - s.delta;
                let worst = net
                    .stage_layers(s.k)
                    .iter()
                    .map(|l| {
                        let a = (l.offset() - inner).abs();
                        let b = (linalg::norm(l.tangent()) - inner).abs();
                        let c = l.halfspace().value(l.tangent()).abs();
                        a.max(b).max(c)
                    })
                    .fold(0.0, f64::max);
                stage_entry(s.k, worst, 1e-12 * (1.0 + s.r), Sense::Upper)
            })
            .collect(),
        Sense::Upper,
        0,
    ));
    checks.push(staged_check(
        "radius_recurrence",
        stages
            .windows(2)
            .map(|w| stage_entry(w[1].k, w[1].r, w[0].r - SHRINK * w[0].delta + 1e-12, Sense::Upper))
            .collect(),
        Sense::Upper,
        0,
    ));
    // The last stage has r > delta and its successor radius does not.
    let stop_ok = stages.last().map_or(meta.radius <= meta.delta, |s| {
        s.r > meta.delta && s.r - SHRINK * s.delta <= meta.delta
    });
    checks.push(scalar_check(
        "stopping_rule",
        if stop_ok { 0.0 } else { 1.0 },
        0.0,
        Sense::Upper,
        0,
    ));
    checks.push(scalar_check(
        "stage_count",
        stages.len() as f64,
        construction::stage_count_bound(meta.radius, meta.delta),
        Sense::Upper,
        0,
    ));
    checks.push(scalar_check(
        "layer_count",
        net.layers().len() as f64,
        construction::layer_count_bound(d, meta.radius, meta.delta),
        Sense::Upper,
        0,
    ));

    // Nets.
    let nets: Vec<Vec<Vec<f64>>> = stages.iter().map(|s| net_points(net, s)).collect();
    checks.push(staged_check(
        "net_cardinality",
        stages
            .iter()
            .map(|s| {
                stage_entry(
                    s.k,
                    nets[s.k].len() as f64,
                    geometry::epsnet_cardinality_bound(d, s.r, s.eps),
                    Sense::Upper,
                )
            })
            .collect(),
        Sense::Upper,
        0,
    ));
    checks.push(staged_check(
        "net_separation",
        stages
            .iter()
            .map(|s| {
                let sep = geometry::min_pairwise_distance(&nets[s.k]);
                let entry = stage_entry(s.k, sep, s.eps, Sense::Lower);
                StageCheck {
                    passed: sep > s.eps,
                    ..entry
                }
            })
            .collect(),
        Sense::Lower,
        0,
    ));
    checks.push(staged_check(
        "net_coverage",
        stages
            .iter()
            .map(|s| {
                let cover = geometry::empirical_covering_radius(
                    &nets[s.k],
                    d,
                    s.r,
                    opts.coverage_samples,
                    opts.seed ^ (s.k as u64 + 1),
                );
                stage_entry(s.k, cover, s.eps, Sense::Upper)
            })
            .collect(),
        Sense::Upper,
        opts.coverage_samples,
    ));

    // Pairwise hyperplane angles where the hyperplanes meet inside the ball.
    checks.push(staged_check(
        "hyperplane_angle",
        stages
            .iter()
            .map(|s| {
                let (r, dl) = (s.r, s.delta);
                let bound = (r * r - 4.0 * r * dl + 2.0 * dl * dl) / (r * r) - LEMMA_SLACK;
                let layers = net.stage_layers(s.k);
                let inner = r - dl;
                let worst = (0..layers.len())
                    .into_par_iter()
                    .map(|i| {
                        let mut w = f64::INFINITY;
                        for j in (i + 1)..layers.len() {
                            let c = linalg::dot(layers[i].beta(), layers[j].beta());
                            if c <= -1.0 + 1e-12 || c >= 1.0 - 1e-15 {
                                continue;
                            }
                            // Minimum-norm point of the intersection: x = a bi + b bj with
                            // bi.x = bj.x = -inner.
                            let a = -inner / (1.0 + c);
                            let x: Vec<f64> = layers[i]
                                .beta()
                                .iter()
                                .zip(layers[j].beta())
                                .map(|(p, q)| a * (p + q))
                                .collect();
                            if linalg::norm(&x) <= r {
                                w = w.min(c);
                            }
                        }
                        w
                    })
                    .reduce(|| f64::INFINITY, f64::min);
                let measured = if worst.is_finite() { worst } else { 1.0 };
                stage_entry(s.k, measured, bound, Sense::Lower)
            })
            .collect(),
        Sense::Lower,
        0,
    ));

    // Enclosure and nesting through the radial functions.
    let mut dirs_rng = rng::stream(opts.seed, streams::VERIFY ^ 2);
    let dirs: Vec<Vec<f64>> = (0..opts.nesting_samples)
        .map(|_| rng::on_sphere(&mut dirs_rng, d, 1.0))
        .collect();
    checks.push(staged_check(
        "enclosure",
        stages
            .iter()
            .map(|s| {
                let worst = dirs
                    .par_iter()
                    .map(|u| radial(net, s.k, u))
                    .reduce(|| 0.0, f64::max);
                stage_entry(s.k, worst, s.r + LEMMA_SLACK, Sense::Upper)
            })
            .collect(),
        Sense::Upper,
        opts.nesting_samples,
    ));
    checks.push(staged_check(
        "nesting",
        stages
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].k, w[1].k);
                let radial_excess = dirs
                    .par_iter()
                    .map(|u| radial(net, b, u) - radial(net, a, u))
                    .reduce(|| f64::NEG_INFINITY, f64::max);
                let mut pts_rng = rng::stream(opts.seed ^ (b as u64), streams::VERIFY ^ 3);
                let violations = (0..opts.nesting_samples)
                    .map(|_| rng::in_ball(&mut pts_rng, d, w[1].r))
                    .filter(|x| {
                        let sb = StagePolytope { net, k: b };
                        let sa = StagePolytope { net, k: a };
                        sb.contains(x) && !sa.contains_tol(x, LEMMA_SLACK)
                    })
                    .count();
                let measured = if violations > 0 {
                    f64::INFINITY
                } else {
                    radial_excess
                };
                stage_entry(b, measured, LEMMA_SLACK, Sense::Upper)
            })
            .collect(),
        Sense::Upper,
        opts.nesting_samples,
    ));

    // Traced boundary starts, one batch per stage.
    let traces: Vec<StageTraces> = stages
        .iter()
        .map(|s| trace_stage(net, phi, s, opts.starts_per_stage, opts.seed))
        .collect();
    let tol_of = |_: &StageInfo| LEMMA_SLACK;
    checks.push(staged_check(
        "landing_inside",
        stages
            .iter()
            .map(|s| stage_entry(s.k, traces[s.k].landing_inside, tol_of(s), Sense::Upper))
            .collect(),
        Sense::Upper,
        opts.starts_per_stage,
    ));
    checks.push(staged_check(
        "landing_on_boundary",
        stages
            .iter()
            .map(|s| stage_entry(s.k, traces[s.k].landing_on, tol_of(s), Sense::Upper))
            .collect(),
        Sense::Upper,
        opts.starts_per_stage,
    ));
    checks.push(staged_check(
        "path_length",
        stages
            .iter()
            .map(|s| stage_entry(s.k, traces[s.k].path, constants::C2 * s.delta + LEMMA_SLACK, Sense::Upper))
            .collect(),
        Sense::Upper,
        opts.starts_per_stage,
    ));
    checks.push(staged_check(
        "step_bound",
        stages
            .iter()
            .map(|s| {
                let m = traces[s.k].step_excess;
                stage_entry(s.k, if m.is_finite() { m } else { 0.0 }, LEMMA_SLACK, Sense::Upper)
            })
            .collect(),
        Sense::Upper,
        opts.starts_per_stage,
    ));
    checks.push(staged_check(
        "y_deviation",
        stages
            .iter()
            .map(|s| {
                let bound = constants::c3(dd) * (d as f64 - 1.0) * s.r.sqrt() * s.delta.powf(1.5);
                stage_entry(s.k, traces[s.k].y_dev, bound + LEMMA_SLACK, Sense::Upper)
            })
            .collect(),
        Sense::Upper,
        opts.starts_per_stage,
    ));
    checks.push(staged_check(
        "single_projection",
        stages
            .iter()
            .map(|s| {
                let ratio = single_projection_ratio(net, phi, s, opts.starts_per_stage, opts.seed);
                let bound = constants::c1(dd) * (d as f64 - 1.0) * (s.r * s.delta).sqrt();
                stage_entry(s.k, ratio, bound + LEMMA_SLACK, Sense::Upper)
            })
            .collect(),
        Sense::Upper,
        opts.starts_per_stage,
    ));

    checks.push(graph_image_check(net, phi, opts));
    checks.push(slope_check(net, opts));

    InvariantReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

struct StagePolytope<'a> {
    net: &'a ModifiedNetwork,
    k: usize,
}

impl StagePolytope<'_> {
    fn contains(&self, x: &[f64]) -> bool {
        self.contains_tol(x, 0.0)
    }

    fn contains_tol(&self, x: &[f64], tol: f64) -> bool {
        self.net
            .stage_layers(self.k)
            .iter()
            .all(|l| l.halfspace().value(x) >= -tol)
    }
}

/// Graph points pushed through every stage end on the graph over the last
/// polytope or within the band of half-width `C4 (d-1) R^(3/2) delta^(1/2)`
/// over its boundary.
fn graph_image_check(net: &ModifiedNetwork, phi: &SurfaceFunction, opts: &InvariantOptions) -> Check {
    let meta = net.meta();
    let d = net.dim();
    let eps = construction::band_width(d, meta.radius, meta.delta, meta.d_bound);
    let band = BandSpec { base: phi, eps };
    let last = net.stages().len().checked_sub(1);
    let mut s = rng::stream(opts.seed, streams::VERIFY ^ 4);
    let xs: Vec<Vec<f64>> = (0..opts.graph_samples)
        .map(|_| rng::in_ball(&mut s, d, meta.radius))
        .collect();
    let tol = LEMMA_SLACK * (1.0 + meta.radius);
    // Per point: band deviation if on the boundary, or +inf when the point
    // is neither on the graph nor on the boundary.
    let worst = xs
        .par_iter()
        .map(|x0| {
            let mut x = x0.clone();
            let mut y = phi.value(x0);
            net.propagate(&mut x, &mut y);
            let dev = (y - phi.value(&x)).abs();
            let Some(k) = last else {
                return dev;
            };
            let values: Vec<f64> = net
                .stage_layers(k)
                .iter()
                .map(|l| l.halfspace().value(&x))
                .collect();
            let inside = values.iter().all(|&v| v >= -tol);
            let on_boundary = inside && values.iter().any(|&v| v.abs() <= tol);
            if inside && dev == 0.0 {
                0.0
            } else if on_boundary && band.contains(&x, y) {
                dev
            } else {
                f64::INFINITY
            }
        })
        .reduce(|| 0.0, f64::max);
    scalar_check("graph_image", worst, eps, Sense::Upper, opts.graph_samples)
}

/// `|F(x, 1) - F(x, 0) + 1|` on sampled `x`.
fn slope_check(net: &ModifiedNetwork, opts: &InvariantOptions) -> Check {
    let d = net.dim();
    let mut s = rng::stream(opts.seed, streams::VERIFY ^ 5);
    let xs: Vec<Vec<f64>> = (0..opts.graph_samples.max(1))
        .map(|_| rng::in_ball(&mut s, d, net.meta().radius))
        .collect();
    let worst = xs
        .par_iter()
        .map(|x| height_and_slope(net, x).1)
        .reduce(|| 0.0, f64::max);
    scalar_check("slope", worst, SLOPE_TOL, Sense::Upper, xs.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    /// Largest `|F~ - F| / (1 + |F~|)`.
    pub max_rel_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub max_cond: f64,
    pub cumulative_cond: f64,
}

/// Compares both forms on `n` points uniform in `B_R x [-c, c]`.
pub fn equivalence(
    modified: &ModifiedNetwork,
    relu: &ReluNetwork,
    c: f64,
    n: usize,
    tolerance: f64,
    seed: u64,
) -> EquivalenceReport {
    let d = modified.dim();
    let mut s = rng::stream(seed, streams::EQUIVALENCE);
    let pts: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|_| {
            let x = rng::in_ball(&mut s, d, modified.meta().radius);
            let y = s.random_range(-c..=c);
            (x, y)
        })
        .collect();
    let worst = pts
        .par_iter()
        .map(|(x, y)| {
            let a = modified.eval(x, *y);
            let b = relu.eval(x, *y);
            (a - b).abs() / (1.0 + a.abs())
        })
        .reduce(|| 0.0, f64::max);
    EquivalenceReport {
        samples: n,
        max_rel_diff: worst,
        tolerance,
        passed: worst <= tolerance,
        max_cond: relu.max_cond(),
        cumulative_cond: relu.cumulative_cond(),
    }
}
