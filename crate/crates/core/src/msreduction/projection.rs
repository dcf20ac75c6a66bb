use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::msreduction::MultiscaleBasis;

/// Least-squares projector onto `span(R)`: `u ↦ (RᵀR)⁻¹ Rᵀ u`.
#[derive(Debug, Clone)]
pub struct CoarseProjector {
    gram: Cholesky<f64, Dyn>,
}

impl CoarseProjector {
    pub fn new(basis: &MultiscaleBasis) -> Result<Self> {
        let gram = basis.gram().cholesky().ok_or(Error::SingularGram)?;
        Ok(Self { gram })
    }

    pub fn coarse_target(&self, basis: &MultiscaleBasis, u_h: &[f64]) -> Result<Vec<f64>> {
        if u_h.len() != basis.n {
            return Err(Error::Shape(format!("fine vector has {} entries, basis has {} rows", u_h.len(), basis.n)));
        }
        let rhs = DVector::from_vec(basis.apply_transpose(u_h));
        Ok(self.gram.solve(&rhs).as_slice().to_vec())
    }
}

/// Coefficients of the least-squares fit of `u_h` in `span(R)`.
pub fn coarse_target(u_h: &[f64], basis: &MultiscaleBasis) -> Result<Vec<f64>> {
    CoarseProjector::new(basis)?.coarse_target(basis, u_h)
}

/// `F0 · R[:, S]` for a row-major `m0 × n` matrix `f0`; zero entries of `f0` are skipped.
pub fn project_source(f0: &[f64], m0: usize, basis: &MultiscaleBasis, columns: &[usize]) -> Result<Vec<f64>> {
    if columns.is_empty() {
        return Err(Error::InvalidArgument("column subset is empty".into()));
    }
    if f0.len() != m0 * basis.n {
        return Err(Error::Shape(format!("source has {} entries, expected {m0} × {}", f0.len(), basis.n)));
    }
    if let Some(&bad) = columns.iter().find(|&&k| k >= basis.n_cols()) {
        return Err(Error::InvalidArgument(format!("column {bad} out of range")));
    }
    let s = columns.len();
    let mut out = vec![0.0; m0 * s];
    for t in 0..m0 {
        let row = &f0[t * basis.n..(t + 1) * basis.n];
        let dst = &mut out[t * s..(t + 1) * s];
        for (p, &fv) in row.iter().enumerate() {
            if fv == 0.0 {
                continue;
            }
            let rp = basis.row(p);
            for (d, &k) in dst.iter_mut().zip(columns) {
                *d += fv * rp[k];
            }
        }
    }
    Ok(out)
}

/// Dense `R[:, S]` as an `n × |S|` matrix.
pub fn basis_columns(basis: &MultiscaleBasis, columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(basis.n, columns.len(), |p, c| basis.row(p)[columns[c]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_fem::{build_mesh_pair, Field};
    use crate::linalg::{dot, norm};
    use crate::msreduction::{auxiliary_spectrum, cem_basis, kappa_tilde, partition_of_unity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis() -> MultiscaleBasis {
        let m = build_mesh_pair(3, 3).unwrap();
        let k = Field::elemental((0..m.n_fine_elements()).map(|e| if e % 5 == 0 { 50.0 } else { 1.0 }).collect());
        let kt = kappa_tilde(&m, &k, &partition_of_unity(&m)).unwrap();
        let aux = auxiliary_spectrum(&m, &k, &kt, 3).unwrap();
        cem_basis(&m, &k, &aux, 1).unwrap()
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn reproduces_span_elements() {
        let b = basis();
        let c = random(b.n_cols(), 1);
        let got = coarse_target(&b.apply(&c), &b).unwrap();
        let err: f64 = got.iter().zip(&c).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * norm(&c));
    }

    #[test]
    fn orthogonal_complement_maps_to_zero() {
        let b = basis();
        let u = random(b.n, 2);
        let proj = CoarseProjector::new(&b).unwrap();
        let fit = b.apply(&proj.coarse_target(&b, &u).unwrap());
        let resid: Vec<f64> = u.iter().zip(&fit).map(|(x, y)| x - y).collect();
        let c = proj.coarse_target(&b, &resid).unwrap();
        assert!(norm(&c) <= 1e-8 * norm(&u));
        // residual is orthogonal to every column
        for k in 0..b.n_cols() {
            assert!(dot(&b.column(k), &resid).abs() <= 1e-10 * norm(&u));
        }
    }

    #[test]
    fn idempotent() {
        let b = basis();
        let proj = CoarseProjector::new(&b).unwrap();
        let c1 = proj.coarse_target(&b, &random(b.n, 3)).unwrap();
        let c2 = proj.coarse_target(&b, &b.apply(&c1)).unwrap();
        for (x, y) in c1.iter().zip(&c2) {
            assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn projected_column_is_a_gram_row() {
        let b = basis();
        let g = b.gram();
        let k = 7;
        let out = project_source(&b.column(k), 1, &b, &b.all_columns()).unwrap();
        for (c, v) in out.iter().enumerate() {
            assert!((v - g[(k, c)]).abs() <= 1e-13 * g[(k, k)]);
        }
    }

    #[test]
    fn project_source_matches_dense_product() {
        let b = basis();
        let m0 = 4;
        let f0 = random(m0 * b.n, 4);
        let cols = b.columns_for_mode(1);
        let out = project_source(&f0, m0, &b, &cols).unwrap();
        let dense = DMatrix::from_row_slice(m0, b.n, &f0) * basis_columns(&b, &cols);
        for t in 0..m0 {
            for c in 0..cols.len() {
                assert!((out[t * cols.len() + c] - dense[(t, c)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_source_and_bad_subsets() {
        let b = basis();
        let out = project_source(&vec![0.0; 2 * b.n], 2, &b, &b.all_columns()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(project_source(&vec![0.0; b.n], 1, &b, &[]).is_err());
        assert!(project_source(&vec![0.0; b.n], 1, &b, &[b.n_cols()]).is_err());
    }
}
