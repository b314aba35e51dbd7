//! Projection layers of the modified architecture and their realization as
//! standard ReLU layers.
//!
//! A projection layer acts on `(x, y)` in R^{d+1}. Inside its half-space it
//! is the identity; outside it moves `x` onto the hyperplane along the inward
//! normal `beta` and shifts `y` by the same step times `g = beta . grad phi(p)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Cone, HalfSpace};
use crate::linalg::{self, COND_LIMIT};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLayer {
    halfspace: HalfSpace,
    g: f64,
    tangent: Vec<f64>,
}

impl ProjectionLayer {
    /// `beta` is normalized by [`HalfSpace::new`]; `tangent` is the point
    /// `p` on the hyperplane where `g` was taken.
    pub fn new(beta: Vec<f64>, offset: f64, g: f64, tangent: Vec<f64>) -> Result<Self> {
        if beta.len() != tangent.len() {
            return Err(Error::DimensionMismatch {
                expected: beta.len(),
                found: tangent.len(),
            });
        }
        if !g.is_finite() {
            return Err(Error::InvalidParameter {
                name: "g".into(),
                reason: "directional derivative must be finite".into(),
            });
        }
        Ok(Self {
            halfspace: HalfSpace::new(beta, offset)?,
            g,
            tangent,
        })
    }

    pub fn dim(&self) -> usize {
        self.halfspace.dim()
    }

    pub fn halfspace(&self) -> &HalfSpace {
        &self.halfspace
    }

    pub fn beta(&self) -> &[f64] {
        self.halfspace.normal()
    }

    pub fn offset(&self) -> f64 {
        self.halfspace.offset()
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn tangent(&self) -> &[f64] {
        &self.tangent
    }

    /// Projection direction `xi = (beta, g)` in R^{d+1}.
    pub fn xi(&self) -> Vec<f64> {
        let mut xi = self.beta().to_vec();
        xi.push(self.g);
        xi
    }

    /// Copy with a different `g`. Used for fault injection in tests.
    pub fn with_g(&self, g: f64) -> Self {
        Self {
            g,
            ..self.clone()
        }
    }
}

/// Applies the layer in place and returns the step `t` (0 inside the
/// half-space, where nothing is touched).
pub fn apply_projection_layer_in_place(layer: &ProjectionLayer, x: &mut [f64], y: &mut f64) -> f64 {
    let s = layer.halfspace.value(x);
    if s >= 0.0 {
        return 0.0;
    }
    let t = -s;
    for (xi, b) in x.iter_mut().zip(layer.beta()) {
        *xi += t * b;
    }
    *y += t * layer.g;
    t
}

pub fn apply_projection_layer(layer: &ProjectionLayer, x: &[f64], y: f64) -> (Vec<f64>, f64) {
    let mut x = x.to_vec();
    let mut y = y;
    apply_projection_layer_in_place(layer, &mut x, &mut y);
    (x, y)
}

/// Orthonormal basis of the complement of `xi`, by Gram-Schmidt on the
/// standard basis with the coordinate of largest `|xi_i|` left out.
fn orthogonal_complement(xi: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = xi.len();
    let norm = linalg::norm(xi);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    let unit: Vec<f64> = xi.iter().map(|v| v / norm).collect();
    let drop = (0..n)
        .max_by(|&i, &j| unit[i].abs().total_cmp(&unit[j].abs()))
        .unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for k in (0..n).filter(|&k| k != drop) {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        // Two passes of modified Gram-Schmidt keep the rows orthogonal to
        // working precision.
        for _ in 0..2 {
            for u in std::iter::once(&unit).chain(basis.iter()) {
                let c = linalg::dot(&v, u);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let vn = linalg::norm(&v);
        if !(vn > 1e-8) {
            return Err(Error::DegenerateDirection);
        }
        basis.push(v.into_iter().map(|x| x / vn).collect());
    }
    Ok(basis)
}

/// Cone whose projection agrees with the layer on the ball of radius `rho`
/// in R^{d+1}.
///
/// Row 0 is `(beta, 0)` with bias `offset`. The remaining rows span the
/// complement of `xi` and carry bias `rho + margin`, so their coefficients
/// stay positive on the ball. The first dual vector is then `xi` itself.
pub fn realize_cone(layer: &ProjectionLayer, rho: f64, margin: f64) -> Result<Cone> {
    if !(rho >= 0.0) || !(margin > 0.0) || !(rho + margin).is_finite() {
        return Err(Error::InvalidParameter {
            name: "rho".into(),
            reason: format!("need rho >= 0 and margin > 0, got rho = {rho}, margin = {margin}"),
        });
    }
    let xi = layer.xi();
    let n = xi.len();
    let rows = orthogonal_complement(&xi)?;
    let mut a = DMatrix::zeros(n, n);
    for (c, b) in layer.beta().iter().enumerate() {
        a[(0, c)] = *b;
    }
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            a[(r + 1, c)] = *v;
        }
    }
    let mut bias = vec![rho + margin; n];
    bias[0] = layer.offset();
    Cone::new(a, bias)
}

/// One standard layer `h -> relu(W h + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluLayerParams {
    pub w: DMatrix<f64>,
    pub bias: Vec<f64>,
    /// Infinity-norm condition number of `W`.
    pub cond: f64,
}

impl ReluLayerParams {
    pub fn width(&self) -> usize {
        self.bias.len()
    }

    pub fn forward_into(&self, h: &[f64], out: &mut [f64]) {
        linalg::mat_vec_into(&self.w, h, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o = (*o + b).max(0.0);
        }
    }
}

/// Chains `cone` after `prev` (or after the raw input when `prev` is
/// `None`): `W = A_k A_{k-1}^{-1}`, `bias = b_k - W b_{k-1}`.
///
/// `layer` is the 0-based index reported on conditioning failure.
pub fn to_relu_pair(cone: &Cone, prev: Option<&Cone>, layer: usize) -> Result<ReluLayerParams> {
    let (w, bias) = match prev {
        None => (cone.matrix().clone(), cone.bias().to_vec()),
        Some(p) => {
            if p.dim() != cone.dim() {
                return Err(Error::DimensionMismatch {
                    expected: cone.dim(),
                    found: p.dim(),
                });
            }
            let w = cone.matrix() * p.dual();
            let wb = linalg::mat_vec(&w, p.bias());
            let bias = cone.bias().iter().zip(wb).map(|(b, v)| b - v).collect();
            (w, bias)
        }
    };
    let cond = match linalg::inverse_with_cond(&w) {
        Ok((_, c)) => c,
        Err(_) => f64::INFINITY,
    };
    if !(cond <= COND_LIMIT) {
        return Err(Error::IllConditioned {
            cond,
            limit: COND_LIMIT,
            layer: Some(layer),
        });
    }
    Ok(ReluLayerParams { w, bias, cond })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn example_layer() -> ProjectionLayer {
        ProjectionLayer::new(vec![-1.0, 0.0], 0.8, 2.0, vec![0.8, 0.0]).unwrap()
    }

    #[test]
    fn apply_examples() {
        let layer = example_layer();
        let (x, y) = apply_projection_layer(&layer, &[0.5, 0.0], 1.0);
        assert_eq!((x, y), (vec![0.5, 0.0], 1.0));
        let (x, y) = apply_projection_layer(&layer, &[0.9, 0.0], 0.5);
        assert!((x[0] - 0.8).abs() < 1e-15 && x[1] == 0.0);
        assert!((y - 0.7).abs() < 1e-15);

        let flat = layer.with_g(0.0);
        for x0 in [0.0, 0.9, 3.0, -2.0] {
            assert_eq!(apply_projection_layer(&flat, &[x0, 0.3], -0.25).1, -0.25);
        }
    }

    #[test]
    fn projected_points_land_on_hyperplane_and_shift_in_y() {
        let mut s = rng::stream(3, 0);
        for _ in 0..1000 {
            let beta = rng::on_sphere(&mut s, 3, 1.0);
            let layer =
                ProjectionLayer::new(beta.clone(), 0.6, s.random_range(-2.0..2.0), vec![0.0; 3])
                    .unwrap();
            let x = rng::in_ball(&mut s, 3, 2.0);
            let y = s.random_range(-1.0..1.0);
            let (xp, yp) = apply_projection_layer(&layer, &x, y);
            if layer.halfspace().value(&x) < 0.0 {
                assert!(layer.halfspace().value(&xp).abs() <= 1e-12 * (1.0 + linalg::norm(&x)));
            } else {
                assert_eq!(xp, x);
                assert_eq!(yp, y);
            }
            let h = 0.375;
            let (xh, yh) = apply_projection_layer(&layer, &x, y + h);
            assert_eq!(xh, xp);
            // one rounding apart: (y + h) + t g versus (y + t g) + h
            assert!((yh - (yp + h)).abs() <= 4.0 * f64::EPSILON * (1.0 + yp.abs() + h));
        }
    }

    #[test]
    fn realize_cone_one_dimensional_example() {
        let layer = ProjectionLayer::new(vec![-1.0], 0.8, 0.0, vec![0.8]).unwrap();
        let cone = realize_cone(&layer, 2.0, 1.0).unwrap();
        let p = cone.project(&[0.9, 0.5]);
        assert!((p[0] - 0.8).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert_eq!(cone.project(&[0.5, 0.5]), vec![0.5, 0.5]);
        let apex = cone.apex().to_vec();
        let pa = cone.project(&apex);
        assert!(linalg::dist(&pa, &apex) < 1e-12);
    }

    #[test]
    fn first_dual_vector_is_xi() {
        let layer = ProjectionLayer::new(vec![0.6, 0.8], -0.3, 1.7, vec![0.18, 0.24]).unwrap();
        let cone = realize_cone(&layer, 5.0, 1.0).unwrap();
        let col: Vec<f64> = cone.dual().column(0).iter().copied().collect();
        assert!(linalg::dist(&col, &layer.xi()) < 1e-12);
        assert!(matches!(
            realize_cone(&layer.with_g(0.0), -1.0, 1.0),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn cone_agrees_with_layer_on_rho_ball() {
        let mut s = rng::stream(5, 0);
        let rho = 4.0;
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let beta = rng::on_sphere(&mut s, 2, 1.0);
            let layer = ProjectionLayer::new(
                beta,
                s.random_range(-1.0..1.0),
                s.random_range(-3.0..3.0),
                vec![0.0; 2],
            )
            .unwrap();
            let cone = realize_cone(&layer, rho, 1.0).unwrap();
            for _ in 0..100 {
                let z = rng::in_ball(&mut s, 3, rho);
                let (x, y) = apply_projection_layer(&layer, &z[..2], z[2]);
                let p = cone.project(&z);
                worst = worst.max(linalg::dist(&p, &[x[0], x[1], y]));
                // relu(A z + b) = A pi(z) + b
                let lhs: Vec<f64> = cone.coords(&z).into_iter().map(|v| v.max(0.0)).collect();
                let rhs = cone.coords(&p);
                assert!(linalg::dist(&lhs, &rhs) < 1e-9);
            }
        }
        assert!(worst <= 1e-9, "max deviation {worst}");
    }

    #[test]
    fn relu_pair_examples() {
        let layer = example_layer();
        let cone = realize_cone(&layer, 3.0, 1.0).unwrap();
        let first = to_relu_pair(&cone, None, 0).unwrap();
        assert_eq!(&first.w, cone.matrix());
        assert_eq!(first.bias, cone.bias());

        let same = to_relu_pair(&cone, Some(&cone), 1).unwrap();
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((same.w - id).abs().max() < 1e-12);
        assert!(same.bias.iter().all(|b| b.abs() < 1e-12));
    }

    // Three random layers chained as cones versus applied directly.
    #[test]
    fn chained_pairs_match_direct_application() {
        let mut s = rng::stream(9, 0);
        let rho = 6.0;
        let layers: Vec<ProjectionLayer> = (0..3)
            .map(|_| {
                ProjectionLayer::new(
                    rng::on_sphere(&mut s, 2, 1.0),
                    0.5,
                    s.random_range(-1.0..1.0),
                    vec![0.0; 2],
                )
                .unwrap()
            })
            .collect();
        let cones: Vec<Cone> = layers
            .iter()
            .map(|l| realize_cone(l, rho, 1.0).unwrap())
            .collect();
        let pairs: Vec<ReluLayerParams> = cones
            .iter()
            .enumerate()
            .map(|(k, c)| to_relu_pair(c, k.checked_sub(1).map(|j| &cones[j]), k).unwrap())
            .collect();
        for _ in 0..1000 {
            let z = rng::in_ball(&mut s, 3, 1.5);
            let (mut x, mut y) = (z[..2].to_vec(), z[2]);
            for l in &layers {
                apply_projection_layer_in_place(l, &mut x, &mut y);
            }
            let mut h = z.clone();
            let mut next = vec![0.0; 3];
            for p in &pairs {
                p.forward_into(&h, &mut next);
                std::mem::swap(&mut h, &mut next);
            }
            let out = cones[2].reconstruct(&h);
            let want = [x[0], x[1], y];
            assert!(linalg::dist(&out, &want) <= 1e-8 * (1.0 + linalg::norm(&want)));
        }
    }

    #[test]
    fn degenerate_direction_rejected() {
        assert!(matches!(
            orthogonal_complement(&[0.0, 0.0, 0.0]),
            Err(Error::DegenerateDirection)
        ));
    }
}
