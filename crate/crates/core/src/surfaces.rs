//! Level-set functions with closed-form gradients and a curvature bound.
//!
//! `D` bounds every second directional derivative on the domain ball, i.e.
//! the spectral norm of the Hessian. That is what the single-projection
//! estimate needs once coordinates are rotated to the cap frame.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

pub type SurfaceParams = BTreeMap<String, ParamValue>;

/// Catalog name plus parameters, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub name: String,
    #[serde(default)]
    pub params: SurfaceParams,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Zero,
    Affine {
        slope: Vec<f64>,
        intercept: f64,
    },
    /// `curvature/2 |x|^2 + linear . x + shift`
    Quadratic {
        curvature: f64,
        linear: Vec<f64>,
        shift: f64,
    },
    /// `amplitude exp(-|x - center|^2 / (2 width^2)) + shift`
    GaussianBump {
        amplitude: f64,
        width: f64,
        center: Vec<f64>,
        shift: f64,
    },
    /// `amplitude sum_i sin(frequency x_i) + shift`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        shift: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFunction {
    dim: usize,
    kind: Kind,
    second_derivative_bound: f64,
    sup_abs: f64,
    sup_grad: f64,
}

impl SurfaceFunction {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Affine { slope, intercept } => intercept + linalg::dot(slope, x),
            Kind::Quadratic {
                curvature,
                linear,
                shift,
            } => 0.5 * curvature * linalg::dot(x, x) + linalg::dot(linear, x) + shift,
            Kind::GaussianBump {
                amplitude,
                width,
                center,
                shift,
            } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp() + shift
            }
            Kind::Sinusoid {
                amplitude,
                frequency,
                shift,
            } => amplitude * x.iter().map(|v| (frequency * v).sin()).sum::<f64>() + shift,
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Zero => vec![0.0; self.dim],
            Kind::Affine { slope, .. } => slope.clone(),
            Kind::Quadratic {
                curvature, linear, ..
            } => x.iter().zip(linear).map(|(v, l)| curvature * v + l).collect(),
            Kind::GaussianBump {
                amplitude,
                width,
                center,
                ..
            } => {
                let w2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let e = amplitude * (-r2 / (2.0 * w2)).exp();
                x.iter().zip(center).map(|(a, c)| -e * (a - c) / w2).collect()
            }
            Kind::Sinusoid {
                amplitude,
                frequency,
                ..
            } => x
                .iter()
                .map(|v| amplitude * frequency * (frequency * v).cos())
                .collect(),
        }
    }

    /// The curvature bound `D`.
    pub fn second_derivative_bound(&self) -> f64 {
        self.second_derivative_bound
    }

    /// Bound on `|phi|` over the domain ball.
    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// Bound on `|grad phi|` over the domain ball.
    pub fn sup_grad(&self) -> f64 {
        self.sup_grad
    }
}

/// `beta . grad phi(p)`.
pub fn directional_derivative(phi: &SurfaceFunction, p: &[f64], beta: &[f64]) -> f64 {
    linalg::dot(beta, &phi.gradient(p))
}

fn scalar(params: &SurfaceParams, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(ParamValue::Scalar(v)) if v.is_finite() => Ok(*v),
        Some(_) => Err(Error::InvalidParameter {
            name: key.into(),
            reason: "expected a finite number".into(),
        }),
    }
}

fn vector(params: &SurfaceParams, key: &str, d: usize) -> Result<Vec<f64>> {
    match params.get(key) {
        None => Ok(vec![0.0; d]),
        Some(ParamValue::Vector(v)) if v.len() == d && v.iter().all(|x| x.is_finite()) => {
            Ok(v.clone())
        }
        Some(ParamValue::Vector(v)) if v.len() != d => Err(Error::InvalidParameter {
            name: key.into(),
            reason: format!("expected {d} components, got {}", v.len()),
        }),
        Some(_) => Err(Error::InvalidParameter {
            name: key.into(),
            reason: format!("expected a list of {d} finite numbers"),
        }),
    }
}

fn check_keys(params: &SurfaceParams, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::InvalidParameter {
            name: k.clone(),
            reason: format!("not a parameter of this surface (allowed: {})", allowed.join(", ")),
        }),
        None => Ok(()),
    }
}

/// Builds a catalog surface on the ball of radius `radius` in R^d.
///
/// | name | parameters (defaults) | D |
/// |---|---|---|
/// | `zero` | none | 0 |
/// | `affine` | `slope` (0), `intercept` (0) | 0 |
/// | `quadratic` | `curvature` (1), `linear` (0), `shift` (0) | `|curvature|` |
/// | `gaussian_bump` | `amplitude` (1), `width` (0.5), `center` (0), `shift` (0) | `|amplitude| / width^2` |
/// | `sinusoid` | `amplitude` (0.1), `frequency` (2), `shift` (0) | `|amplitude| frequency^2 d` |
pub fn catalog(name: &str, params: &SurfaceParams, d: usize, radius: f64) -> Result<SurfaceFunction> {
    if d == 0 {
        return Err(Error::UnsupportedDimension(d));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter {
            name: "R".into(),
            reason: format!("domain radius must be positive, got {radius}"),
        });
    }
    let (kind, bound, sup_abs, sup_grad) = match name {
        "zero" => {
            check_keys(params, &[])?;
            (Kind::Zero, 0.0, 0.0, 0.0)
        }
        "affine" => {
            check_keys(params, &["slope", "intercept"])?;
            let slope = vector(params, "slope", d)?;
            let intercept = scalar(params, "intercept", 0.0)?;
            let g = linalg::norm(&slope);
            (
                Kind::Affine { slope, intercept },
                0.0,
                intercept.abs() + g * radius,
                g,
            )
        }
        "quadratic" => {
            check_keys(params, &["curvature", "linear", "shift"])?;
            let curvature = scalar(params, "curvature", 1.0)?;
            let linear = vector(params, "linear", d)?;
            let shift = scalar(params, "shift", 0.0)?;
            let l = linalg::norm(&linear);
            (
                Kind::Quadratic {
                    curvature,
                    linear,
                    shift,
                },
                curvature.abs(),
                0.5 * curvature.abs() * radius * radius + l * radius + shift.abs(),
                curvature.abs() * radius + l,
            )
        }
        "gaussian_bump" => {
            check_keys(params, &["amplitude", "width", "center", "shift"])?;
            let amplitude = scalar(params, "amplitude", 1.0)?;
            let width = scalar(params, "width", 0.5)?;
            if !(width > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "width".into(),
                    reason: "must be positive".into(),
                });
            }
            let center = vector(params, "center", d)?;
            let shift = scalar(params, "shift", 0.0)?;
            (
                Kind::GaussianBump {
                    amplitude,
                    width,
                    center,
                    shift,
                },
                amplitude.abs() / (width * width),
                amplitude.abs() + shift.abs(),
                amplitude.abs() * (-0.5f64).exp() / width,
            )
        }
        "sinusoid" => {
            check_keys(params, &["amplitude", "frequency", "shift"])?;
            let amplitude = scalar(params, "amplitude", 0.1)?;
            let frequency = scalar(params, "frequency", 2.0)?;
            let shift = scalar(params, "shift", 0.0)?;
            (
                Kind::Sinusoid {
                    amplitude,
                    frequency,
                    shift,
                },
                amplitude.abs() * frequency * frequency * d as f64,
                amplitude.abs() * d as f64 + shift.abs(),
                amplitude.abs() * frequency.abs() * (d as f64).sqrt(),
            )
        }
        other => return Err(Error::UnknownSurface(other.to_string())),
    };
    Ok(SurfaceFunction {
        dim: d,
        kind,
        second_derivative_bound: bound,
        sup_abs,
        sup_grad,
    })
}

impl SurfaceSpec {
    pub fn build(&self, d: usize, radius: f64) -> Result<SurfaceFunction> {
        catalog(&self.name, &self.params, d, radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn params(pairs: &[(&str, ParamValue)]) -> SurfaceParams {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn directional_derivative_examples() {
        let zero = catalog("zero", &SurfaceParams::new(), 2, 1.0).unwrap();
        assert_eq!(directional_derivative(&zero, &[0.4, -0.2], &[0.6, 0.8]), 0.0);

        let affine = catalog(
            "affine",
            &params(&[("slope", ParamValue::Vector(vec![1.0, 0.0]))]),
            2,
            1.0,
        )
        .unwrap();
        assert_eq!(directional_derivative(&affine, &[0.3, 0.1], &[1.0, 0.0]), 1.0);

        let quad = catalog("quadratic", &SurfaceParams::new(), 2, 1.0).unwrap();
        assert_eq!(directional_derivative(&quad, &[0.5, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn catalog_bounds() {
        let zero = catalog("zero", &SurfaceParams::new(), 2, 1.0).unwrap();
        assert_eq!(zero.second_derivative_bound(), 0.0);
        let quad = catalog("quadratic", &SurfaceParams::new(), 2, 1.0).unwrap();
        assert_eq!(quad.second_derivative_bound(), 1.0);
        assert_eq!(quad.value(&[1.0, 1.0]), 1.0);
        let sin = catalog(
            "sinusoid",
            &params(&[
                ("amplitude", ParamValue::Scalar(0.5)),
                ("frequency", ParamValue::Scalar(3.0)),
            ]),
            2,
            1.0,
        )
        .unwrap();
        assert_eq!(sin.second_derivative_bound(), 0.5 * 9.0 * 2.0);
    }

    #[test]
    fn catalog_errors() {
        assert!(matches!(
            catalog("cubic", &SurfaceParams::new(), 2, 1.0),
            Err(Error::UnknownSurface(_))
        ));
        assert!(catalog(
            "quadratic",
            &params(&[("linear", ParamValue::Vector(vec![1.0]))]),
            2,
            1.0
        )
        .is_err());
        assert!(catalog(
            "zero",
            &params(&[("amplitude", ParamValue::Scalar(1.0))]),
            2,
            1.0
        )
        .is_err());
    }

    fn all_surfaces(d: usize) -> Vec<SurfaceFunction> {
        vec![
            catalog("zero", &SurfaceParams::new(), d, 1.0).unwrap(),
            catalog(
                "affine",
                &params(&[
                    ("slope", ParamValue::Vector((0..d).map(|i| 0.5 - i as f64).collect())),
                    ("intercept", ParamValue::Scalar(0.3)),
                ]),
                d,
                1.0,
            )
            .unwrap(),
            catalog(
                "quadratic",
                &params(&[
                    ("curvature", ParamValue::Scalar(-2.0)),
                    ("linear", ParamValue::Vector(vec![1.0; d])),
                ]),
                d,
                1.0,
            )
            .unwrap(),
            catalog(
                "gaussian_bump",
                &params(&[
                    ("width", ParamValue::Scalar(0.4)),
                    ("center", ParamValue::Vector(vec![0.2; d])),
                    ("shift", ParamValue::Scalar(-0.3)),
                ]),
                d,
                1.0,
            )
            .unwrap(),
            catalog(
                "sinusoid",
                &params(&[
                    ("amplitude", ParamValue::Scalar(0.3)),
                    ("frequency", ParamValue::Scalar(4.0)),
                ]),
                d,
                1.0,
            )
            .unwrap(),
        ]
    }

    // Central-difference checks on 10^3 seeded points per surface.
    #[test]
    fn finite_difference_gradient_and_curvature() {
        let h = 1e-4;
        for d in [2usize, 3] {
            for phi in all_surfaces(d) {
                let mut sampler = rng::stream(11, d as u64);
                let dd = phi.second_derivative_bound();
                for _ in 0..1000 {
                    let x = rng::in_ball(&mut sampler, d, 1.0 - 2.0 * h);
                    let grad = phi.gradient(&x);
                    assert!(phi.value(&x).abs() <= phi.sup_abs() + 1e-12);
                    assert!(linalg::norm(&grad) <= phi.sup_grad() + 1e-12);
                    for i in 0..d {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[i] += h;
                        xm[i] -= h;
                        let fp = phi.value(&xp);
                        let fm = phi.value(&xm);
                        let f0 = phi.value(&x);
                        let fd = (fp - fm) / (2.0 * h);
                        // truncation 10 h^2 D d plus round-off of the quotient
                        assert!(
                            (fd - grad[i]).abs() <= 10.0 * h * h * dd.max(1.0) * d as f64 + 1e-10,
                            "{phi:?} at {x:?}"
                        );
                        let second = (fp - 2.0 * f0 + fm) / (h * h);
                        assert!(second.abs() <= dd * (1.0 + 1e-3) + 1e-6, "{phi:?} at {x:?}");
                    }
                }
            }
        }
    }
}
