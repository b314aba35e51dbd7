//! Stage-by-stage construction of the projection layers.
//!
//! Stage `k` works on the sphere of radius `r_k`: an `eps_k`-net on it gives
//! one half-space per net point, tangent to the ball of radius
//! `r_k - delta_k`. The next radius is `r_k - 3 delta_k / 4` and the loop
//! stops at the first `r_k <= delta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::layers::ProjectionLayer;
use crate::linalg;
use crate::surfaces::{directional_derivative, SurfaceFunction, SurfaceSpec};

/// `1 - 1/sqrt 2`, the largest admissible cap height relative to the radius.
pub const DELTA_FRACTION: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Radius shrink per stage, as a multiple of `delta_k`.
pub const SHRINK: f64 = 0.75;

/// Error constants as functions of the curvature bound `D`.
pub mod constants {
    use std::f64::consts::SQRT_2;

    /// Single-projection offset constant `3D/sqrt 2`.
    pub fn c1(d_bound: f64) -> f64 {
        3.0 * d_bound / SQRT_2
    }

    /// Path-length constant `(1 + sqrt 2)/2`.
    pub const C2: f64 = (1.0 + SQRT_2) / 2.0;

    pub fn c3(d_bound: f64) -> f64 {
        C2 * c1(d_bound)
    }

    pub fn c4(d_bound: f64) -> f64 {
        7.0 / 3.0 * c3(d_bound)
    }

    pub fn c5(d_bound: f64) -> f64 {
        2.0 * c4(d_bound)
    }
}

fn default_margin() -> f64 {
    1.0
}

/// Parameters of one build. Field names follow the config file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub d: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub delta: f64,
    pub surface: SurfaceSpec,
    #[serde(default)]
    pub seed: u64,
    /// Bias slack of the non-active cone rows beyond `rho`.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::UnsupportedDimension(self.d));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidParameter {
                name: "R".into(),
                reason: format!("must be a positive finite number, got {}", self.radius),
            });
        }
        let max = self.radius * DELTA_FRACTION;
        if !(self.delta > 0.0) || self.delta > max {
            return Err(Error::DeltaCondition {
                delta: self.delta,
                radius: self.radius,
                max,
            });
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::InvalidParameter {
                name: "margin".into(),
                reason: format!("must be positive, got {}", self.margin),
            });
        }
        Ok(())
    }

    pub fn surface(&self) -> Result<SurfaceFunction> {
        self.surface.build(self.d, self.radius)
    }
}

/// One stage: its radius, cap height, net parameter and layers.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub k: usize,
    pub r: f64,
    pub delta: f64,
    pub eps: f64,
    pub layers: Vec<ProjectionLayer>,
}

impl StagePlan {
    /// Radius of the ball every stage hyperplane is tangent to.
    pub fn inner_radius(&self) -> f64 {
        self.r - self.delta
    }

    /// Membership in the stage polytope (intersection of its half-spaces).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.layers.iter().all(|l| l.halfspace().value(x) >= -tol)
    }
}

/// The affine head: `l(x) = w0 + w . x`, applied to `(x, y)` as `l(x) - y`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalAffine {
    pub w: Vec<f64>,
    pub w0: f64,
}

impl FinalAffine {
    /// First-order Taylor polynomial of `phi` at the origin.
    pub fn from_surface(phi: &SurfaceFunction) -> Self {
        let origin = vec![0.0; phi.dim()];
        Self {
            w: phi.gradient(&origin),
            w0: phi.value(&origin),
        }
    }

    pub fn affine(&self, x: &[f64]) -> f64 {
        self.w0 + linalg::dot(&self.w, x)
    }

    pub fn apply(&self, x: &[f64], y: f64) -> f64 {
        self.affine(x) - y
    }
}

/// Cap height for a stage of radius `r`.
pub fn delta_schedule(r: f64, delta: f64) -> f64 {
    let max = r * DELTA_FRACTION;
    if delta <= max {
        delta
    } else {
        max
    }
}

/// Net seed for stage `k`, so stages draw independent pools.
fn stage_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn build_stage(
    phi: &SurfaceFunction,
    k: usize,
    r: f64,
    delta: f64,
    seed: u64,
) -> Result<StagePlan> {
    if !(delta > 0.0) || delta > r * DELTA_FRACTION * (1.0 + 1e-12) {
        return Err(Error::DeltaCondition {
            delta,
            radius: r,
            max: r * DELTA_FRACTION,
        });
    }
    let d = phi.dim();
    let eps = (delta * r / 2.0).sqrt();
    let net = geometry::epsnet_sphere(d, r, eps, stage_seed(seed, k))?;
    let inner = r - delta;
    let layers = net
        .par_iter()
        .map(|q| {
            let beta: Vec<f64> = q.iter().map(|v| -v / r).collect();
            let p: Vec<f64> = q.iter().map(|v| inner * v / r).collect();
            let g = directional_derivative(phi, &p, &beta);
            ProjectionLayer::new(beta, inner, g, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StagePlan {
        k,
        r,
        delta,
        eps,
        layers,
    })
}

/// All stages for `config`, plus the affine head.
pub fn build_sequence(
    phi: &SurfaceFunction,
    config: &BuildConfig,
) -> Result<(Vec<StagePlan>, FinalAffine)> {
    config.validate()?;
    if phi.dim() != config.d {
        return Err(Error::DimensionMismatch {
            expected: config.d,
            found: phi.dim(),
        });
    }
    let mut stages = Vec::new();
    let mut r = config.radius;
    while r > config.delta {
        let k = stages.len();
        let dk = delta_schedule(r, config.delta);
        stages.push(build_stage(phi, k, r, dk, config.seed)?);
        r -= SHRINK * dk;
    }
    Ok((stages, FinalAffine::from_surface(phi)))
}

/// A-priori bound `7R/(3 delta)` on the number of stages.
pub fn stage_count_bound(radius: f64, delta: f64) -> f64 {
    7.0 * radius / (3.0 * delta)
}

/// A-priori bound `(14/3) d (32R/delta)^((d+1)/2)` on the number of layers.
pub fn layer_count_bound(d: usize, radius: f64, delta: f64) -> f64 {
    14.0 / 3.0 * d as f64 * (32.0 * radius / delta).powf((d as f64 + 1.0) / 2.0)
}

/// Sup-error bound `C5 (d-1) R^(3/2) delta^(1/2)` of the decision surface.
pub fn error_bound(d: usize, radius: f64, delta: f64, d_bound: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    Ok(constants::c5(d_bound) * (d as f64 - 1.0) * radius.powf(1.5) * delta.sqrt())
}

/// Half-width of the graph band after all stages, `C4 (d-1) R^(3/2) delta^(1/2)`.
pub fn band_width(d: usize, radius: f64, delta: f64, d_bound: f64) -> f64 {
    constants::c4(d_bound) * (d as f64 - 1.0) * radius.powf(1.5) * delta.sqrt()
}
