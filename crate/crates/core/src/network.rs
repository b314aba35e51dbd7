//! The modified network `F~ = L~ o pi_N o ... o pi_1`, its standard ReLU
//! form `F = L o T_N o ... o T_1`, and trajectory tracing.

use std::ops::Range;

use rayon::prelude::*;

use crate::construction::{self, BuildConfig, FinalAffine, StagePlan};
use crate::error::{Error, Result};
use crate::geometry::Cone;
use crate::layers::{
    apply_projection_layer_in_place, realize_cone, to_relu_pair, ProjectionLayer, ReluLayerParams,
};
use crate::linalg;
use crate::surfaces::SurfaceFunction;

/// Common interface of both network forms, as a function of `(x, y)`.
pub trait DecisionFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], y: f64) -> f64;
    fn meta(&self) -> &NetworkMeta;
    fn layer_count(&self) -> usize;
    fn stage_count(&self) -> usize;
}

impl DecisionFunction for ModifiedNetwork {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64], y: f64) -> f64 {
        ModifiedNetwork::eval(self, x, y)
    }
    fn meta(&self) -> &NetworkMeta {
        &self.meta
    }
    fn layer_count(&self) -> usize {
        self.layers.len()
    }
    fn stage_count(&self) -> usize {
        self.stages.len()
    }
}

impl DecisionFunction for ReluNetwork {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64], y: f64) -> f64 {
        ReluNetwork::eval(self, x, y)
    }
    fn meta(&self) -> &NetworkMeta {
        &self.meta
    }
    fn layer_count(&self) -> usize {
        self.layers.len()
    }
    fn stage_count(&self) -> usize {
        self.stage_radii.len()
    }
}

/// Build parameters carried along with a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMeta {
    pub radius: f64,
    pub delta: f64,
    /// Curvature bound `D` of the surface.
    pub d_bound: f64,
    pub seed: u64,
    pub sup_abs: f64,
    pub sup_grad: f64,
}

impl NetworkMeta {
    /// Largest change in `y` along a trajectory: `sup|grad phi| C2 delta M`.
    pub fn height_drift(&self, stages: usize) -> f64 {
        self.sup_grad * construction::constants::C2 * self.delta * stages as f64
    }

    /// Half-height `c` of the evaluation region `K = B_R x [-c, c]`:
    /// `sup|phi| + drift + error_bound + 1`.
    pub fn evaluation_height(&self, d: usize, stages: usize) -> f64 {
        let eb = construction::error_bound(d, self.radius, self.delta, self.d_bound).unwrap_or(0.0);
        self.sup_abs + self.height_drift(stages) + eb + 1.0
    }

    /// Radius of a ball in R^{d+1} holding every intermediate point of a
    /// trajectory started in `K`. Starting heights reach `c` and can drift
    /// once more along the way, so the drift is added again.
    pub fn evaluation_radius(&self, d: usize, stages: usize) -> f64 {
        let c = self.evaluation_height(d, stages) + self.height_drift(stages);
        (self.radius * self.radius + c * c).sqrt()
    }
}

/// Stage boundaries within the flat layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInfo {
    pub k: usize,
    pub r: f64,
    pub delta: f64,
    pub eps: f64,
    pub layers: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedNetwork {
    d: usize,
    layers: Vec<ProjectionLayer>,
    stages: Vec<StageInfo>,
    head: FinalAffine,
    meta: NetworkMeta,
}

impl ModifiedNetwork {
    /// Flattens the stages in order. Fails if a layer or the head has the
    /// wrong dimension, or the stage ranges do not tile the layer list.
    pub fn new(
        d: usize,
        layers: Vec<ProjectionLayer>,
        stages: Vec<StageInfo>,
        head: FinalAffine,
        meta: NetworkMeta,
    ) -> Result<Self> {
        if let Some(bad) = layers.iter().find(|l| l.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
        if head.w.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: head.w.len(),
            });
        }
        let mut next = 0;
        for s in &stages {
            if s.layers.start != next || s.layers.end < s.layers.start {
                return Err(Error::Malformed(format!(
                    "stage {} covers layers {:?}, expected to start at {next}",
                    s.k, s.layers
                )));
            }
            next = s.layers.end;
        }
        if next != layers.len() {
            return Err(Error::Malformed(format!(
                "stages cover {next} layers but the network has {}",
                layers.len()
            )));
        }
        Ok(Self {
            d,
            layers,
            stages,
            head,
            meta,
        })
    }

    pub fn from_stages(
        phi: &SurfaceFunction,
        config: &BuildConfig,
        stages: Vec<StagePlan>,
        head: FinalAffine,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut info = Vec::with_capacity(stages.len());
        for s in stages {
            let start = layers.len();
            layers.extend(s.layers);
            info.push(StageInfo {
                k: s.k,
                r: s.r,
                delta: s.delta,
                eps: s.eps,
                layers: start..layers.len(),
            });
        }
        let meta = NetworkMeta {
            radius: config.radius,
            delta: config.delta,
            d_bound: phi.second_derivative_bound(),
            seed: config.seed,
            sup_abs: phi.sup_abs(),
            sup_grad: phi.sup_grad(),
        };
        Self::new(config.d, layers, info, head, meta)
    }

    /// Validates `config`, builds its surface and all stages.
    pub fn build(config: &BuildConfig) -> Result<(Self, SurfaceFunction)> {
        config.validate()?;
        let phi = config.surface()?;
        let (stages, head) = construction::build_sequence(&phi, config)?;
        Ok((Self::from_stages(&phi, config, stages, head)?, phi))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn layers(&self) -> &[ProjectionLayer] {
        &self.layers
    }

    pub fn stages(&self) -> &[StageInfo] {
        &self.stages
    }

    pub fn head(&self) -> &FinalAffine {
        &self.head
    }

    pub fn meta(&self) -> &NetworkMeta {
        &self.meta
    }

    pub fn stage_layers(&self, k: usize) -> &[ProjectionLayer] {
        &self.layers[self.stages[k].layers.clone()]
    }

    /// Copy with layer `index` given a different `g`.
    pub fn with_layer_g(&self, index: usize, g: f64) -> Self {
        let mut out = self.clone();
        out.layers[index] = out.layers[index].with_g(g);
        out
    }

    /// Runs all layers on `(x, y)` in place.
    pub fn propagate(&self, x: &mut [f64], y: &mut f64) {
        for l in &self.layers {
            apply_projection_layer_in_place(l, x, y);
        }
    }

    /// Runs the layers of stage `k` in place.
    pub fn propagate_stage(&self, k: usize, x: &mut [f64], y: &mut f64) {
        for l in self.stage_layers(k) {
            apply_projection_layer_in_place(l, x, y);
        }
    }

    /// `F~(x, y)`.
    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        let mut x = x.to_vec();
        let mut y = y;
        self.propagate(&mut x, &mut y);
        self.head.apply(&x, y)
    }

    /// `F~(x, y)` together with whether `x` lies outside the domain ball.
    pub fn eval_flagged(&self, x: &[f64], y: f64) -> (f64, bool) {
        (self.eval(x, y), linalg::norm(x) > self.meta.radius)
    }

    /// Evaluates points `(x, y)` given as rows of length `d + 1`, in parallel
    /// and in input order.
    pub fn eval_many(&self, points: &[Vec<f64>]) -> Vec<f64> {
        points
            .par_iter()
            .map(|p| self.eval(&p[..self.d], p[self.d]))
            .collect()
    }

    pub fn trace(&self, x: &[f64], y: f64) -> Trajectory {
        let mut x = x.to_vec();
        let mut y = y;
        let mut points = Vec::with_capacity(self.layers.len() + 1);
        let mut steps = Vec::with_capacity(self.layers.len());
        points.push((x.clone(), y));
        for l in &self.layers {
            steps.push(apply_projection_layer_in_place(l, &mut x, &mut y));
            points.push((x.clone(), y));
        }
        let path_length = steps.iter().sum();
        Trajectory {
            points,
            steps,
            path_length,
        }
    }

    /// Half-height of the evaluation region `B_R x [-c, c]`.
    pub fn evaluation_height(&self) -> f64 {
        self.meta.evaluation_height(self.d, self.stages.len())
    }

    /// Default `rho` for [`ModifiedNetwork::convert`].
    pub fn evaluation_radius(&self) -> f64 {
        self.meta.evaluation_radius(self.d, self.stages.len())
    }

    /// Standard form on the ball of radius `rho` in R^{d+1}.
    pub fn convert(&self, rho: f64, margin: f64) -> Result<ReluNetwork> {
        let cones: Vec<Result<Cone>> = self
            .layers
            .par_iter()
            .map(|l| realize_cone(l, rho, margin))
            .collect();
        let cones = first_error(cones)?;
        let pairs: Vec<Result<ReluLayerParams>> = (0..cones.len())
            .into_par_iter()
            .map(|k| {
                let prev = k.checked_sub(1).map(|j| &cones[j]);
                to_relu_pair(&cones[k], prev, k).map_err(|e| match e {
                    Error::SingularMatrix => Error::IllConditioned {
                        cond: f64::INFINITY,
                        limit: linalg::COND_LIMIT,
                        layer: Some(k),
                    },
                    other => other,
                })
            })
            .collect();
        let layers = first_error(pairs)?;

        let mut w_tilde = self.head.w.clone();
        w_tilde.push(-1.0);
        let (final_w, final_b) = match cones.last() {
            None => (w_tilde, self.head.w0),
            Some(last) => {
                let fw = linalg::mat_vec(&last.dual().transpose(), &w_tilde);
                let fb = linalg::dot(&w_tilde, last.apex()) + self.head.w0;
                (fw, fb)
            }
        };
        Ok(ReluNetwork {
            d: self.d,
            layers,
            final_w,
            final_b,
            meta: self.meta.clone(),
            stage_radii: self.stages.iter().map(|s| s.r).collect(),
            stage_deltas: self.stages.iter().map(|s| s.delta).collect(),
            rho,
            margin,
        })
    }
}

fn first_error<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

/// Per-layer record of one point pushed through the modified network.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(x_i, y_i)` for `i = 0..=N`.
    pub points: Vec<(Vec<f64>, f64)>,
    /// Step `t_i` of layer `i` (0 where the layer acted as the identity).
    pub steps: Vec<f64>,
    /// Total path length `S = sum t_i`.
    pub path_length: f64,
}

impl Trajectory {
    pub fn partial_length(&self, layers: Range<usize>) -> f64 {
        self.steps[layers].iter().sum()
    }
}

/// Standard ReLU network of constant width `d + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    pub d: usize,
    pub layers: Vec<ReluLayerParams>,
    pub final_w: Vec<f64>,
    pub final_b: f64,
    pub meta: NetworkMeta,
    pub stage_radii: Vec<f64>,
    pub stage_deltas: Vec<f64>,
    /// Radius of the region on which the cones were realized.
    pub rho: f64,
    pub margin: f64,
}

impl ReluNetwork {
    pub fn width(&self) -> usize {
        self.d + 1
    }

    /// `F(x, y)`.
    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        let mut h: Vec<f64> = x.iter().copied().chain(std::iter::once(y)).collect();
        let mut next = vec![0.0; h.len()];
        for l in &self.layers {
            l.forward_into(&h, &mut next);
            std::mem::swap(&mut h, &mut next);
        }
        linalg::dot(&self.final_w, &h) + self.final_b
    }

    pub fn eval_many(&self, points: &[Vec<f64>]) -> Vec<f64> {
        points
            .par_iter()
            .map(|p| self.eval(&p[..self.d], p[self.d]))
            .collect()
    }

    /// Condition numbers of the layer matrices, in layer order.
    pub fn cond_diag(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.cond).collect()
    }

    pub fn max_cond(&self) -> f64 {
        self.layers.iter().map(|l| l.cond).fold(1.0, f64::max)
    }

    /// Sum of the per-layer condition numbers: a first-order estimate of how
    /// much rounding error the chain can accumulate, in units of epsilon.
    pub fn cumulative_cond(&self) -> f64 {
        self.layers.iter().map(|l| l.cond).sum()
    }
}
