use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid_fem::{assemble_dense_local, Field, MeshPair, LOCAL_MASS_UNIT, LOCAL_STIFFNESS};

/// Coarse-grid partition of unity: one bilinear hat per coarse node,
/// sampled at the fine nodes.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    coarse_side: usize,
    /// `values[j][node]` is `χ_j` at fine node `node`.
    pub values: Vec<Vec<f64>>,
}

fn hat(t: f64, center: f64, h: f64) -> f64 {
    (1.0 - (t - center).abs() / h).max(0.0)
}

/// Bilinear coarse hats interpolated to the fine nodes; they sum to one everywhere.
pub fn partition_of_unity(mesh: &MeshPair) -> PartitionOfUnity {
    let nc = mesh.coarse_cells_per_side();
    let hc = mesh.coarse_h();
    let r = mesh.refinement();
    let mut values = Vec::with_capacity(mesh.n_coarse_nodes());
    for jy in 0..=nc {
        for jx in 0..=nc {
            let (cx, cy) = (jx as f64 / nc as f64, jy as f64 / nc as f64);
            let mut v = vec![0.0; mesh.n_fine_nodes()];
            // support is the fine-node box within one coarse cell of the vertex
            let ix0 = (jx * r).saturating_sub(r);
            let ix1 = (jx * r + r).min(mesh.fine_cells_per_side());
            let iy0 = (jy * r).saturating_sub(r);
            let iy1 = (jy * r + r).min(mesh.fine_cells_per_side());
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    let n = mesh.node_index(ix, iy);
                    let (x, y) = mesh.node_coords(n);
                    v[n] = hat(x, cx, hc) * hat(y, cy, hc);
                }
            }
            values.push(v);
        }
    }
    PartitionOfUnity { coarse_side: nc, values }
}

impl PartitionOfUnity {
    /// Coarse nodes whose hats do not vanish on coarse element `i`.
    pub fn hats_on(&self, i: usize) -> [usize; 4] {
        let nc = self.coarse_side;
        let (cx, cy) = (i % nc, i / nc);
        let id = |x: usize, y: usize| y * (nc + 1) + x;
        [id(cx, cy), id(cx + 1, cy), id(cx + 1, cy + 1), id(cx, cy + 1)]
    }

    /// Element-averaged gradient of hat `j` on fine element `e`.
    pub fn gradient(&self, mesh: &MeshPair, j: usize, e: usize) -> (f64, f64) {
        let [a, b, c, d] = mesh.element_nodes(e).map(|n| self.values[j][n]);
        let h = mesh.fine_h();
        (((b - a) + (c - d)) / (2.0 * h), ((d - a) + (c - b)) / (2.0 * h))
    }
}

/// `κ̃ = κ Σ_j |∇χ_j|²`, gradients averaged per fine element.
pub fn kappa_tilde(mesh: &MeshPair, kappa: &Field, chi: &PartitionOfUnity) -> Result<Field> {
    kappa.check_positive_elemental(mesh)?;
    let values = (0..mesh.n_fine_elements())
        .map(|e| {
            let i = mesh.coarse_of_fine_element(e);
            let s: f64 = chi
                .hats_on(i)
                .iter()
                .map(|&j| {
                    let (gx, gy) = chi.gradient(mesh, j, e);
                    gx * gx + gy * gy
                })
                .sum();
            kappa.values[e] * s
        })
        .collect();
    Ok(Field::elemental(values))
}

/// Low-lying eigenpairs of the local spectral problem on one coarse element.
#[derive(Debug, Clone)]
pub struct LocalModes {
    /// Fine nodes of the closed coarse element, row-major.
    pub nodes: Vec<usize>,
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns (`nodes.len() × L`), `s_i`-orthonormal.
    pub vectors: DMatrix<f64>,
    /// Local `κ̃`-weighted mass matrix `S_i`.
    pub mass: DMatrix<f64>,
    /// Local `κ`-weighted stiffness.
    pub stiffness: DMatrix<f64>,
}

impl LocalModes {
    /// Constraint rows `S_i φ_j`, one column per retained mode.
    pub fn weighted(&self) -> DMatrix<f64> {
        &self.mass * &self.vectors
    }
}

/// Auxiliary space: `L_i` modes per coarse element plus the `κ̃` used to build it.
#[derive(Debug, Clone)]
pub struct AuxiliarySpace {
    pub modes: Vec<LocalModes>,
    pub kappa_tilde: Field,
    pub modes_per_element: usize,
}

impl AuxiliarySpace {
    pub fn n_modes(&self) -> usize {
        self.modes.len() * self.modes_per_element
    }
}

/// Makes the largest-magnitude entry positive (first index wins ties).
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].abs() > v[best].abs() {
            best = k;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Solves `A φ = λ S φ` densely for a symmetric `A` and SPD `S`, returning
/// all pairs in ascending order with `φᵀ S φ = 1`.
pub fn generalized_symmetric_eigen(a: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let chol = s.clone().cholesky()?;
    let l = chol.l();
    let n = a.nrows();
    // C = L⁻¹ A L⁻ᵀ
    let linv_a = l.solve_lower_triangular(a)?;
    let c = l.solve_lower_triangular(&linv_a.transpose())?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order on ties
    order.sort_by(|&p, &q| eig.eigenvalues[p].partial_cmp(&eig.eigenvalues[q]).unwrap_or(std::cmp::Ordering::Equal));
    let lt = l.transpose();
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(k).into_owned();
        let mut phi = lt.solve_upper_triangular(&y)?;
        let norm = (phi.transpose() * s * &phi)[(0, 0)].sqrt();
        phi /= norm;
        fix_sign(phi.as_mut_slice());
        vectors.set_column(col, &phi);
        values.push(eig.eigenvalues[k]);
    }
    Some((values, vectors))
}

/// Solves the local spectral problem on every coarse element and keeps the
/// first `l_i` eigenpairs.
pub fn auxiliary_spectrum(mesh: &MeshPair, kappa: &Field, kappa_tilde: &Field, l_i: usize) -> Result<AuxiliarySpace> {
    kappa.check_positive_elemental(mesh)?;
    let local_dofs = (mesh.refinement() + 1) * (mesh.refinement() + 1);
    if l_i == 0 || l_i > local_dofs {
        return Err(Error::InvalidArgument(format!("L_i must be in 1..={local_dofs}, got {l_i}")));
    }
    let h2 = mesh.fine_h() * mesh.fine_h();
    let modes = (0..mesh.n_coarse_elements())
        .into_par_iter()
        .map(|i| {
            let nodes = mesh.coarse_fine_nodes(i);
            let elements = mesh.coarse_fine_elements(i);
            let a = assemble_dense_local(mesh, &nodes, &elements, &kappa.values, &LOCAL_STIFFNESS, 1.0)?;
            let s = assemble_dense_local(mesh, &nodes, &elements, &kappa_tilde.values, &LOCAL_MASS_UNIT, h2)?;
            let (values, vectors) = generalized_symmetric_eigen(&a, &s).ok_or(Error::BadKappaTilde { element: i })?;
            Ok(LocalModes {
                nodes,
                eigenvalues: values[..l_i].to_vec(),
                vectors: vectors.columns(0, l_i).into_owned(),
                mass: s,
                stiffness: a,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuxiliarySpace { modes, kappa_tilde: kappa_tilde.clone(), modes_per_element: l_i })
}
