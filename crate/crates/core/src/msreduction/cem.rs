use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_fem::{assemble_band, DofMap, Field, MeshPair, MeshSpec, LOCAL_STIFFNESS};
use crate::io;
use crate::msreduction::{oversample_region, AuxiliarySpace, CoarseRegion};

/// Localized CEM basis, stored as the dense matrix `R` (`n × 𝒩`, row-major).
///
/// Column `(i, j)` (coarse element `i`, mode `j`) has index `i·L + j` and is
/// supported on the open interior of its oversampled region `regions[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleBasis {
    pub mesh: MeshSpec,
    pub ell: usize,
    pub modes_per_element: usize,
    /// Number of fine nodes.
    pub n: usize,
    pub r: Vec<f64>,
    pub regions: Vec<CoarseRegion>,
    /// Auxiliary eigenvalues per coarse element.
    pub eigenvalues: Vec<Vec<f64>>,
    pub kappa_hash: String,
}

impl MultiscaleBasis {
    pub fn n_elements(&self) -> usize {
        self.regions.len()
    }

    pub fn n_cols(&self) -> usize {
        self.regions.len() * self.modes_per_element
    }

    pub fn column_index(&self, element: usize, mode: usize) -> usize {
        element * self.modes_per_element + mode
    }

    /// `(element, mode)` of column `k`.
    pub fn column_owner(&self, k: usize) -> (usize, usize) {
        (k / self.modes_per_element, k % self.modes_per_element)
    }

    /// Row `node` of `R`.
    pub fn row(&self, node: usize) -> &[f64] {
        let w = self.n_cols();
        &self.r[node * w..(node + 1) * w]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        let w = self.n_cols();
        (0..self.n).map(|p| self.r[p * w + k]).collect()
    }

    /// Columns built from auxiliary mode `mode` on every element, in element order.
    pub fn columns_for_mode(&self, mode: usize) -> Vec<usize> {
        (0..self.n_elements()).map(|i| self.column_index(i, mode)).collect()
    }

    pub fn all_columns(&self) -> Vec<usize> {
        (0..self.n_cols()).collect()
    }

    /// `R c`.
    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.n_cols());
        (0..self.n).map(|p| crate::linalg::dot(self.row(p), c)).collect()
    }

    /// `Rᵀ u`.
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n);
        let mut out = vec![0.0; self.n_cols()];
        for (p, &up) in u.iter().enumerate() {
            if up != 0.0 {
                for (o, &rv) in out.iter_mut().zip(self.row(p)) {
                    *o += up * rv;
                }
            }
        }
        out
    }

    /// `RᵀR`.
    pub fn gram(&self) -> DMatrix<f64> {
        let w = self.n_cols();
        let mut g = DMatrix::<f64>::zeros(w, w);
        for p in 0..self.n {
            let row = self.row(p);
            for (a, &ra) in row.iter().enumerate() {
                if ra == 0.0 {
                    continue;
                }
                for (b, &rb) in row.iter().enumerate().skip(a) {
                    g[(a, b)] += ra * rb;
                }
            }
        }
        for a in 0..w {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }

    /// Largest `|R[p, k]|` over nodes `p` outside the open interior of column `k`'s region.
    pub fn max_outside_support(&self, mesh: &MeshPair) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.n_cols() {
            let (i, _) = self.column_owner(k);
            let (x0, x1, y0, y1) = self.regions[i].fine_box(mesh);
            for p in 0..self.n {
                let (ix, iy) = mesh.node_grid(p);
                let inside = ix > x0 && ix < x1 && iy > y0 && iy < y1;
                if !inside {
                    worst = worst.max(self.r[p * self.n_cols() + k].abs());
                }
            }
        }
        worst
    }

    /// Writes `manifest.json` and the `R` blob into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mesh_hash = crate::io::hash_json(&self.mesh);
        let side = io::write_array(dir, "R", &[self.n, self.n_cols()], &self.r, "basis", &mesh_hash)?;
        let manifest = BasisManifest {
            mesh: self.mesh,
            mesh_hash,
            kappa_hash: self.kappa_hash.clone(),
            ell: self.ell,
            modes_per_element: self.modes_per_element,
            eigenvalues: self.eigenvalues.clone(),
            r_sha256: side.sha256,
        };
        io::write_json(&dir.join("manifest.json"), &manifest)
    }

    /// Loads a basis saved with [`MultiscaleBasis::save`] and checks it against `mesh`.
    pub fn load(dir: &Path, mesh: &MeshPair) -> Result<Self> {
        let manifest = BasisManifest::read(dir)?;
        if manifest.mesh != mesh.spec() {
            return Err(Error::Config(format!(
                "basis in {} was built for mesh {:?}, not {:?}",
                dir.display(),
                manifest.mesh,
                mesh.spec()
            )));
        }
        let (side, r) = io::read_array(dir, "R")?;
        if side.sha256 != manifest.r_sha256 {
            return Err(Error::Config(format!("basis blob in {} does not match its manifest", dir.display())));
        }
        let n_cols = mesh.n_coarse_elements() * manifest.modes_per_element;
        if side.shape != [mesh.n_fine_nodes(), n_cols] {
            return Err(Error::Shape(format!("basis blob has shape {:?}", side.shape)));
        }
        let regions = (0..mesh.n_coarse_elements()).map(|i| oversample_region(mesh, i, manifest.ell)).collect();
        Ok(Self {
            mesh: manifest.mesh,
            ell: manifest.ell,
            modes_per_element: manifest.modes_per_element,
            n: mesh.n_fine_nodes(),
            r,
            regions,
            eigenvalues: manifest.eigenvalues,
            kappa_hash: manifest.kappa_hash,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisManifest {
    pub mesh: MeshSpec,
    pub mesh_hash: String,
    pub kappa_hash: String,
    pub ell: usize,
    pub modes_per_element: usize,
    pub eigenvalues: Vec<Vec<f64>>,
    pub r_sha256: String,
}

impl BasisManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        io::read_json(&dir.join("manifest.json"))
    }
}

/// Sparse constraint row: `(local dof, weight)` pairs.
type ConstraintRow = Vec<(usize, f64)>;

/// Constraint rows `s(·, φ_{j'}^{(i')})` for every mode of every element in the
/// region, ordered by element (row-major) then mode.
fn constraint_rows(mesh: &MeshPair, aux: &AuxiliarySpace, region: &CoarseRegion, dofs: &DofMap) -> Vec<(usize, ConstraintRow)> {
    let l = aux.modes_per_element;
    let mut rows = Vec::new();
    for ip in region.elements(mesh) {
        let modes = &aux.modes[ip];
        let w = modes.weighted();
        for jp in 0..l {
            let row = modes
                .nodes
                .iter()
                .enumerate()
                .filter_map(|(k, &node)| dofs.local[node].map(|p| (p, w[(k, jp)])))
                .collect();
            rows.push((ip * l + jp, row));
        }
    }
    rows
}

/// Minimizers for all modes of coarse element `i`, as local vectors on the region's dofs.
fn element_basis(mesh: &MeshPair, kappa: &Field, aux: &AuxiliarySpace, i: usize, region: &CoarseRegion) -> Result<(DofMap, Vec<Vec<f64>>)> {
    let (x0, x1, y0, y1) = region.fine_box(mesh);
    let dofs = DofMap::open_box(mesh, x0, x1, y0, y1);
    let a = assemble_band(mesh, &dofs, &region.fine_elements(mesh), Some(&kappa.values), None);
    let chol = a.cholesky().map_err(|_| Error::SingularKkt { element: i })?;
    let rows = constraint_rows(mesh, aux, region, &dofs);
    let m = rows.len();
    // Z = A⁻¹ Bᵀ, one column per constraint
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|(_, row)| {
            let mut col = vec![0.0; dofs.len()];
            for &(p, v) in row {
                col[p] = v;
            }
            chol.solve_in_place(&mut col);
            col
        })
        .collect();
    // Schur complement B A⁻¹ Bᵀ
    let mut schur = DMatrix::<f64>::zeros(m, m);
    for (a_idx, (_, row)) in rows.iter().enumerate() {
        for (b_idx, zb) in z.iter().enumerate().skip(a_idx) {
            let v: f64 = row.iter().map(|&(p, w)| w * zb[p]).sum();
            schur[(a_idx, b_idx)] = v;
            schur[(b_idx, a_idx)] = v;
        }
    }
    let schur_chol = schur.cholesky().ok_or(Error::SingularKkt { element: i })?;
    let l = aux.modes_per_element;
    let mut out = Vec::with_capacity(l);
    for j in 0..l {
        let target = rows.iter().position(|(k, _)| *k == i * l + j).expect("own modes are in the region");
        let mut e = DVector::<f64>::zeros(m);
        e[target] = 1.0;
        let mu = schur_chol.solve(&e);
        let mut psi = vec![0.0; dofs.len()];
        for (zb, &mb) in z.iter().zip(mu.iter()) {
            for (p, &zv) in psi.iter_mut().zip(zb) {
                *p += mb * zv;
            }
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularKkt { element: i });
        }
        out.push(psi);
    }
    Ok((dofs, out))
}

/// Builds the localized CEM basis with `ell` oversampling layers.
///
/// Each column minimizes the `κ`-energy over functions vanishing on the
/// boundary of `K_{i,ℓ}`, subject to `s(ψ, φ_{j'}^{(i')}) = δ_{ii'}δ_{jj'}` for all
/// auxiliary modes of elements inside the region.
pub fn cem_basis(mesh: &MeshPair, kappa: &Field, aux: &AuxiliarySpace, ell: usize) -> Result<MultiscaleBasis> {
    kappa.check_positive_elemental(mesh)?;
    if ell == 0 {
        return Err(Error::InvalidArgument("oversampling layers must be at least 1".into()));
    }
    if aux.modes.len() != mesh.n_coarse_elements() {
        return Err(Error::Shape(format!(
            "auxiliary space has {} elements, mesh has {}",
            aux.modes.len(),
            mesh.n_coarse_elements()
        )));
    }
    let regions: Vec<CoarseRegion> = (0..mesh.n_coarse_elements()).map(|i| oversample_region(mesh, i, ell)).collect();
    let locals = regions
        .par_iter()
        .enumerate()
        .map(|(i, region)| element_basis(mesh, kappa, aux, i, region))
        .collect::<Result<Vec<_>>>()?;
    let l = aux.modes_per_element;
    let n = mesh.n_fine_nodes();
    let w = regions.len() * l;
    let mut r = vec![0.0; n * w];
    for (i, (dofs, psis)) in locals.iter().enumerate() {
        for (j, psi) in psis.iter().enumerate() {
            let k = i * l + j;
            for (&node, &v) in dofs.nodes.iter().zip(psi) {
                r[node * w + k] = v;
            }
        }
    }
    Ok(MultiscaleBasis {
        mesh: mesh.spec(),
        ell,
        modes_per_element: l,
        n,
        r,
        regions,
        eigenvalues: aux.modes.iter().map(|m| m.eigenvalues.clone()).collect(),
        kappa_hash: kappa.hash(),
    })
}

/// `max |s(ψ_k, φ_{j'}^{(i')}) − δ|` over every column and every auxiliary mode.
pub fn constraint_residual(basis: &MultiscaleBasis, aux: &AuxiliarySpace) -> f64 {
    let l = aux.modes_per_element;
    let w = basis.n_cols();
    let weighted: Vec<DMatrix<f64>> = aux.modes.iter().map(|m| m.weighted()).collect();
    (0..w)
        .into_par_iter()
        .map(|k| {
            let mut worst = 0.0f64;
            for (ip, modes) in aux.modes.iter().enumerate() {
                for jp in 0..l {
                    let s: f64 = modes.nodes.iter().enumerate().map(|(q, &node)| weighted[ip][(q, jp)] * basis.r[node * w + k]).sum();
                    let delta = if ip * l + jp == k { 1.0 } else { 0.0 };
                    worst = worst.max((s - delta).abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// `κ`-energy `a(ψ, ψ)` of a nodal vector over the listed fine elements.
pub fn energy_on(mesh: &MeshPair, kappa: &Field, v: &[f64], elements: impl Iterator<Item = usize>) -> f64 {
    let mut total = 0.0;
    for e in elements {
        let loc = mesh.element_nodes(e).map(|n| v[n]);
        let mut q = 0.0;
        for p in 0..4 {
            for s in 0..4 {
                q += loc[p] * LOCAL_STIFFNESS[p][s] * loc[s];
            }
        }
        total += kappa.values[e] * q;
    }
    total
}

/// Fraction of the energy of column `k` lying outside `K_{i,layers}`.
pub fn tail_energy_fraction(mesh: &MeshPair, kappa: &Field, basis: &MultiscaleBasis, k: usize, layers: usize) -> f64 {
    let (i, _) = basis.column_owner(k);
    let psi = basis.column(k);
    let inner = oversample_region(mesh, i, layers);
    let total = energy_on(mesh, kappa, &psi, 0..mesh.n_fine_elements());
    let outside = energy_on(
        mesh,
        kappa,
        &psi,
        (0..mesh.n_fine_elements()).filter(|&e| !inner.contains(mesh, mesh.coarse_of_fine_element(e))),
    );
    outside / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_fem::{assemble_stiffness, build_mesh_pair};
    use crate::msreduction::{auxiliary_spectrum, kappa_tilde, partition_of_unity};

    fn setup(nc: usize, r: usize, kappa: impl Fn(f64, f64) -> f64) -> (MeshPair, Field, AuxiliarySpace) {
        let m = build_mesh_pair(nc, r).unwrap();
        let k = Field::elemental((0..m.n_fine_elements()).map(|e| {
            let (x, y) = m.element_center(e);
            kappa(x, y)
        }).collect());
        let chi = partition_of_unity(&m);
        let kt = kappa_tilde(&m, &k, &chi).unwrap();
        let aux = auxiliary_spectrum(&m, &k, &kt, 2).unwrap();
        (m, k, aux)
    }

    fn channels(x: f64, y: f64) -> f64 {
        if ((x * 7.0).floor() as i64 + (y * 5.0).floor() as i64) % 3 == 0 { 100.0 } else { 1.0 }
    }

    /// Dense KKT solve of the column `(i, j)` on the whole interior, all constraints active.
    fn dense_global_minimizer(m: &MeshPair, k: &Field, aux: &AuxiliarySpace, col: usize) -> Vec<f64> {
        let dofs = DofMap::interior(m);
        let a = assemble_stiffness(m, k).unwrap().restrict(&dofs.nodes).to_dense();
        let l = aux.modes_per_element;
        let nc = aux.modes.len() * l;
        let nd = dofs.len();
        let mut kkt = DMatrix::<f64>::zeros(nd + nc, nd + nc);
        kkt.view_mut((0, 0), (nd, nd)).copy_from(&a);
        for (ip, modes) in aux.modes.iter().enumerate() {
            let s_phi = &modes.mass * &modes.vectors;
            for jp in 0..l {
                for (q, &node) in modes.nodes.iter().enumerate() {
                    if let Some(p) = dofs.local[node] {
                        kkt[(nd + ip * l + jp, p)] += s_phi[(q, jp)];
                        kkt[(p, nd + ip * l + jp)] += s_phi[(q, jp)];
                    }
                }
            }
        }
        let mut rhs = DVector::<f64>::zeros(nd + nc);
        rhs[nd + col] = 1.0;
        let sol = kkt.lu().solve(&rhs).unwrap();
        dofs.scatter(sol.rows(0, nd).as_slice(), m.n_fine_nodes())
    }

    #[test]
    fn constraints_and_locality_hold() {
        let (m, k, aux) = setup(4, 3, channels);
        let b = cem_basis(&m, &k, &aux, 1).unwrap();
        assert_eq!(b.n_cols(), 32);
        assert!(constraint_residual(&b, &aux) <= 1e-9);
        assert_eq!(b.max_outside_support(&m), 0.0);
    }

    #[test]
    fn whole_domain_region_matches_dense_global_kkt() {
        let (m, k, aux) = setup(3, 3, channels);
        let b = cem_basis(&m, &k, &aux, 3).unwrap();
        let a = assemble_stiffness(&m, &k).unwrap();
        for col in [0, 5, 9, 17] {
            let dense = dense_global_minimizer(&m, &k, &aux, col);
            let psi = b.column(col);
            let (e_loc, e_glob) = (a.bilinear(&psi, &psi), a.bilinear(&dense, &dense));
            assert!((e_loc - e_glob).abs() <= 1e-10 * e_glob, "col {col}: {e_loc} vs {e_glob}");
            let diff = psi.iter().zip(&dense).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let scale = dense.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(diff <= 1e-8 * scale);
        }
    }

    #[test]
    fn localized_energy_exceeds_global() {
        // shrinking the feasible set cannot lower the minimum
        let (m, k, aux) = setup(4, 3, channels);
        let a = assemble_stiffness(&m, &k).unwrap();
        let local = cem_basis(&m, &k, &aux, 1).unwrap();
        let col = local.column_index(5, 0);
        let psi = local.column(col);
        let dense = dense_global_minimizer(&m, &k, &aux, col);
        assert!(a.bilinear(&psi, &psi) >= a.bilinear(&dense, &dense) * (1.0 - 1e-12));
    }

    #[test]
    fn tail_energy_decays_with_layers() {
        let (m, k, aux) = setup(7, 3, channels);
        let i = m.coarse_index(3, 3);
        let fractions: Vec<f64> = (1..=3)
            .map(|ell| {
                let b = cem_basis(&m, &k, &aux, ell).unwrap();
                tail_energy_fraction(&m, &k, &b, b.column_index(i, 0), ell - 1)
            })
            .collect();
        assert!(fractions[0] > fractions[1] && fractions[1] > fractions[2], "{fractions:?}");
    }

    #[test]
    fn mode_columns_partition_all_columns() {
        let (m, k, aux) = setup(2, 2, |_, _| 1.0);
        let b = cem_basis(&m, &k, &aux, 1).unwrap();
        let mut all: Vec<usize> = (0..2).flat_map(|j| b.columns_for_mode(j)).collect();
        all.sort();
        assert_eq!(all, b.all_columns());
    }

    #[test]
    fn save_load_round_trip_and_determinism() {
        let (m, k, aux) = setup(3, 2, channels);
        let b = cem_basis(&m, &k, &aux, 1).unwrap();
        let again = cem_basis(&m, &k, &aux, 1).unwrap();
        assert_eq!(io::hash_f64s(&b.r), io::hash_f64s(&again.r));
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        assert_eq!(MultiscaleBasis::load(dir.path(), &m).unwrap(), b);
        let other = build_mesh_pair(3, 3).unwrap();
        assert!(matches!(MultiscaleBasis::load(dir.path(), &other), Err(Error::Config(_))));
    }

    #[test]
    fn zero_layers_rejected() {
        let (m, k, aux) = setup(2, 2, |_, _| 1.0);
        assert!(matches!(cem_basis(&m, &k, &aux, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gram_matches_dense_product() {
        let (m, k, aux) = setup(2, 3, channels);
        let b = cem_basis(&m, &k, &aux, 1).unwrap();
        let dense = DMatrix::from_row_slice(b.n, b.n_cols(), &b.r);
        let g = dense.transpose() * &dense;
        assert!((b.gram() - g).abs().max() <= 1e-14 * b.gram().abs().max());
    }
}
