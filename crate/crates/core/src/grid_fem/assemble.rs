use crate::error::{Error, Result};
use crate::grid_fem::{Field, MeshPair};
use crate::linalg::{BandMatrix, SparseOperator};

/// Q1 stiffness of a unit-coefficient square element (independent of its side).
pub const LOCAL_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Q1 mass of a unit-weight square element, divided by `h²`.
pub const LOCAL_MASS_UNIT: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

fn assemble(mesh: &MeshPair, coeff: &Field, local: &[[f64; 4]; 4], scale: f64) -> Result<SparseOperator> {
    coeff.check_positive_elemental(mesh)?;
    let mut trip = Vec::with_capacity(16 * mesh.n_fine_elements());
    for e in 0..mesh.n_fine_elements() {
        let nodes = mesh.element_nodes(e);
        let c = coeff.values[e] * scale;
        for a in 0..4 {
            for b in 0..4 {
                trip.push((nodes[a], nodes[b], c * local[a][b]));
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_fine_nodes(), &trip, true)
}

/// `K_ij = Σ_e κ_e ∫_e ∇φ_i·∇φ_j` on all fine nodes (no boundary elimination).
pub fn assemble_stiffness(mesh: &MeshPair, kappa: &Field) -> Result<SparseOperator> {
    assemble(mesh, kappa, &LOCAL_STIFFNESS, 1.0)
}

/// `M_ij = Σ_e w_e ∫_e φ_i φ_j` on all fine nodes.
pub fn assemble_mass(mesh: &MeshPair, weight: &Field) -> Result<SparseOperator> {
    let h = mesh.fine_h();
    assemble(mesh, weight, &LOCAL_MASS_UNIT, h * h)
}

/// Numbering of the unknowns left after eliminating Dirichlet nodes.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Global node of each local unknown.
    pub nodes: Vec<usize>,
    /// Local unknown of each global node, if any.
    pub local: Vec<Option<usize>>,
}

impl DofMap {
    /// Unknowns are the fine nodes strictly inside the box `[x0, x1] × [y0, y1]`
    /// (fine-node grid indices), numbered row-major.
    pub fn open_box(mesh: &MeshPair, x0: usize, x1: usize, y0: usize, y1: usize) -> Self {
        let mut nodes = Vec::new();
        let mut local = vec![None; mesh.n_fine_nodes()];
        for iy in (y0 + 1)..y1 {
            for ix in (x0 + 1)..x1 {
                let n = mesh.node_index(ix, iy);
                local[n] = Some(nodes.len());
                nodes.push(n);
            }
        }
        Self { nodes, local }
    }

    /// All interior nodes of the unit square.
    pub fn interior(mesh: &MeshPair) -> Self {
        let nf = mesh.fine_cells_per_side();
        Self::open_box(mesh, 0, nf, 0, nf)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&n| global[n]).collect()
    }

    pub fn scatter(&self, local: &[f64], n_global: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_global];
        for (k, &n) in self.nodes.iter().enumerate() {
            out[n] = local[k];
        }
        out
    }

    /// Half bandwidth of nearest-neighbour operators on these unknowns.
    fn bandwidth(&self, mesh: &MeshPair) -> usize {
        // two unknowns coupled through an element differ by at most one grid line plus one
        let mut bw = 0;
        for (k, &n) in self.nodes.iter().enumerate() {
            let (ix, iy) = mesh.node_grid(n);
            if ix + 1 < mesh.fine_side() && iy + 1 < mesh.fine_side() {
                if let Some(j) = self.local[mesh.node_index(ix + 1, iy + 1)] {
                    bw = bw.max(j - k);
                }
            }
            if ix > 0 && iy + 1 < mesh.fine_side() {
                if let Some(j) = self.local[mesh.node_index(ix - 1, iy + 1)] {
                    bw = bw.max(j - k);
                }
            }
            if ix + 1 < mesh.fine_side() {
                if let Some(j) = self.local[mesh.node_index(ix + 1, iy)] {
                    bw = bw.max(j - k);
                }
            }
        }
        bw
    }
}

/// Assembles `Σ_e (a_e K_e + b_e h² M_e)` restricted to `dofs` directly into band storage.
///
/// `elements` lists the fine elements to include; `stiff` and `mass` give the
/// per-element coefficients (indexed by global fine element). Either may be `None`.
pub fn assemble_band(
    mesh: &MeshPair,
    dofs: &DofMap,
    elements: &[usize],
    stiff: Option<&[f64]>,
    mass: Option<&[f64]>,
) -> BandMatrix {
    let mut band = BandMatrix::zeros(dofs.len(), dofs.bandwidth(mesh));
    let h2 = mesh.fine_h() * mesh.fine_h();
    for &e in elements {
        let nodes = mesh.element_nodes(e);
        let loc = nodes.map(|n| dofs.local[n]);
        let a = stiff.map_or(0.0, |s| s[e]);
        let b = mass.map_or(0.0, |m| m[e] * h2);
        for p in 0..4 {
            let Some(i) = loc[p] else { continue };
            for q in 0..4 {
                let Some(j) = loc[q] else { continue };
                if j <= i {
                    band.add(i, j, a * LOCAL_STIFFNESS[p][q] + b * LOCAL_MASS_UNIT[p][q]);
                }
            }
        }
    }
    band
}

/// Dense local matrix `Σ_{e ∈ elements} c_e L` on the closed node list `nodes`.
pub fn assemble_dense_local(
    mesh: &MeshPair,
    nodes: &[usize],
    elements: &[usize],
    coeff: &[f64],
    local: &[[f64; 4]; 4],
    scale: f64,
) -> Result<nalgebra::DMatrix<f64>> {
    let mut index = std::collections::HashMap::with_capacity(nodes.len());
    for (k, &n) in nodes.iter().enumerate() {
        index.insert(n, k);
    }
    let mut m = nalgebra::DMatrix::zeros(nodes.len(), nodes.len());
    for &e in elements {
        let en = mesh.element_nodes(e);
        let mut loc = [0usize; 4];
        for p in 0..4 {
            loc[p] = *index
                .get(&en[p])
                .ok_or_else(|| Error::Shape(format!("element {e} node {} not in local node list", en[p])))?;
        }
        let c = coeff[e] * scale;
        for p in 0..4 {
            for q in 0..4 {
                m[(loc[p], loc[q])] += c * local[p][q];
            }
        }
    }
    Ok(m)
}
