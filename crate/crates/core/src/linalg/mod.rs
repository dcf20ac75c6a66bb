//! Sparse and banded linear algebra for the fine-scale solvers.

mod band;
mod sparse;

pub use band::{BandCholesky, BandMatrix};
pub use sparse::SparseOperator;

use crate::error::{Error, Result};

/// Default relative residual for [`solve_spd`].
pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// Jacobi-preconditioned conjugate gradients for a symmetric positive definite operator.
///
/// Stops when `‖b − A x‖ ≤ tol · ‖b‖`. Hitting the iteration cap (ten times the
/// dimension, at least 1000) usually means the system is indefinite or badly
/// conditioned and is reported as [`Error::IterationCap`].
pub fn solve_spd(op: &SparseOperator, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::Shape(format!("rhs length {} for operator of dimension {n}", rhs.len())));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let bnorm = norm(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = op
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = (10 * n).max(1000);
    let mut res = bnorm;
    for _ in 0..cap {
        op.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: 0, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r);
        if res <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::IterationCap { iterations: cap, residual: res / bnorm, tol })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
