//! Small dense helpers shared by the geometry and network code.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Condition numbers above this are treated as construction failures.
pub const COND_LIMIT: f64 = 1e12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Infinity-norm of a dense matrix (max absolute row sum).
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse by LU with partial pivoting, together with the infinity-norm
/// condition number `|A| |A^-1|`.
pub fn inverse_with_cond(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let inv = a.clone().lu().try_inverse().ok_or(Error::SingularMatrix)?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    let cond = norm_inf(a) * norm_inf(&inv);
    Ok((inv, cond))
}

/// `y = M x` without allocating.
pub fn mat_vec_into(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let (rows, cols) = m.shape();
    debug_assert_eq!(cols, x.len());
    debug_assert_eq!(rows, out.len());
    out.iter_mut().for_each(|v| *v = 0.0);
    for (c, &xc) in x.iter().enumerate() {
        if xc == 0.0 {
            continue;
        }
        let col = m.column(c);
        for (o, a) in out.iter_mut().zip(col.iter()) {
            *o += a * xc;
        }
    }
}

pub fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    mat_vec_into(m, x, &mut out);
    out
}
