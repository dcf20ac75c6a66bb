//! Error measures shared by data generation, training and reports.

use crate::error::{Error, Result};
use crate::linalg::{norm, SparseOperator};
use crate::msreduction::MultiscaleBasis;

/// `‖target − pred‖₂ / ‖target‖₂`.
pub fn relative_l2(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("prediction has {} entries, target {}", pred.len(), target.len())));
    }
    let denom = norm(target);
    if denom == 0.0 {
        return Err(Error::InvalidArgument("target has zero norm".into()));
    }
    let diff: f64 = pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum::<f64>().sqrt();
    Ok(diff / denom)
}

/// Mass-norm relative error `‖R c − u_h‖_M / ‖u_h‖_M` of the fine field rebuilt from coarse coefficients.
pub fn fine_relative_l2(pred_coarse: &[f64], u_h: &[f64], basis: &MultiscaleBasis, mass: &SparseOperator) -> Result<f64> {
    if pred_coarse.len() != basis.n_cols() || u_h.len() != basis.n || mass.dim() != basis.n {
        return Err(Error::Shape("coarse vector, fine vector, basis and mass disagree".into()));
    }
    let denom = mass.bilinear(u_h, u_h);
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument("fine solution has zero norm".into()));
    }
    let e: Vec<f64> = basis.apply(pred_coarse).iter().zip(u_h).map(|(r, u)| r - u).collect();
    Ok((mass.bilinear(&e, &e) / denom).sqrt())
}
