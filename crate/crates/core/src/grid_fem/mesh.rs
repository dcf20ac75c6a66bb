use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nested structured meshes of the unit square.
///
/// The coarse grid has `coarse_cells_per_side²` square elements; each one is
/// split into `refinement²` fine elements. Fine nodes are numbered row-major
/// with `x` fastest: node `(ix, iy)` has index `iy * (nf + 1) + ix` and sits at
/// `(ix / nf, iy / nf)`. Fine elements use the same convention, and the
/// local node order of an element is counter-clockwise from its lower-left
/// corner.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshPair {
    coarse_cells_per_side: usize,
    refinement: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    boundary: Vec<bool>,
}

/// Identity of a mesh pair for hashing and persistence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub coarse_cells_per_side: usize,
    pub refinement: usize,
}

impl MeshSpec {
    pub fn build(&self) -> Result<MeshPair> {
        build_mesh_pair(self.coarse_cells_per_side, self.refinement)
    }
}

/// Builds the coarse/fine mesh pair. Both inputs must be at least one.
pub fn build_mesh_pair(coarse_cells_per_side: usize, refinement: usize) -> Result<MeshPair> {
    if coarse_cells_per_side == 0 || refinement == 0 {
        return Err(Error::InvalidArgument(format!(
            "mesh needs coarse_cells_per_side >= 1 and refinement >= 1, got ({coarse_cells_per_side}, {refinement})"
        )));
    }
    let nf = coarse_cells_per_side * refinement;
    let side = nf + 1;
    let mut x = Vec::with_capacity(side * side);
    let mut y = Vec::with_capacity(side * side);
    let mut boundary = Vec::with_capacity(side * side);
    for iy in 0..side {
        for ix in 0..side {
            // i / nf rather than i * h so that grid-aligned literals (0.8, 0.15, ...) compare exactly
            x.push(ix as f64 / nf as f64);
            y.push(iy as f64 / nf as f64);
            boundary.push(ix == 0 || iy == 0 || ix == nf || iy == nf);
        }
    }
    Ok(MeshPair { coarse_cells_per_side, refinement, x, y, boundary })
}

impl MeshPair {
    pub fn spec(&self) -> MeshSpec {
        MeshSpec { coarse_cells_per_side: self.coarse_cells_per_side, refinement: self.refinement }
    }

    pub fn coarse_cells_per_side(&self) -> usize {
        self.coarse_cells_per_side
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn fine_cells_per_side(&self) -> usize {
        self.coarse_cells_per_side * self.refinement
    }

    /// Nodes per side of the fine grid.
    pub fn fine_side(&self) -> usize {
        self.fine_cells_per_side() + 1
    }

    /// Coarse mesh size `H`.
    pub fn coarse_h(&self) -> f64 {
        1.0 / self.coarse_cells_per_side as f64
    }

    /// Fine mesh size `h`.
    pub fn fine_h(&self) -> f64 {
        1.0 / self.fine_cells_per_side() as f64
    }

    pub fn n_fine_nodes(&self) -> usize {
        self.fine_side() * self.fine_side()
    }

    pub fn n_fine_elements(&self) -> usize {
        self.fine_cells_per_side() * self.fine_cells_per_side()
    }

    /// Number of coarse elements `N`.
    pub fn n_coarse_elements(&self) -> usize {
        self.coarse_cells_per_side * self.coarse_cells_per_side
    }

    /// Number of coarse nodes `N_c`.
    pub fn n_coarse_nodes(&self) -> usize {
        (self.coarse_cells_per_side + 1) * (self.coarse_cells_per_side + 1)
    }

    #[inline]
    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.fine_side() + ix
    }

    #[inline]
    pub fn node_grid(&self, node: usize) -> (usize, usize) {
        (node % self.fine_side(), node / self.fine_side())
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        (self.x[node], self.y[node])
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    /// Interior (non-Dirichlet) nodes in increasing order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_fine_nodes()).filter(|&n| !self.boundary[n]).collect()
    }

    #[inline]
    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.fine_cells_per_side() + ex
    }

    #[inline]
    pub fn element_grid(&self, e: usize) -> (usize, usize) {
        (e % self.fine_cells_per_side(), e / self.fine_cells_per_side())
    }

    /// Fine element nodes, counter-clockwise from the lower-left corner.
    #[inline]
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = self.element_grid(e);
        [
            self.node_index(ex, ey),
            self.node_index(ex + 1, ey),
            self.node_index(ex + 1, ey + 1),
            self.node_index(ex, ey + 1),
        ]
    }

    pub fn element_center(&self, e: usize) -> (f64, f64) {
        let (ex, ey) = self.element_grid(e);
        let nf = self.fine_cells_per_side() as f64;
        ((ex as f64 + 0.5) / nf, (ey as f64 + 0.5) / nf)
    }

    #[inline]
    pub fn coarse_index(&self, cx: usize, cy: usize) -> usize {
        cy * self.coarse_cells_per_side + cx
    }

    #[inline]
    pub fn coarse_grid(&self, i: usize) -> (usize, usize) {
        (i % self.coarse_cells_per_side, i / self.coarse_cells_per_side)
    }

    /// Coarse element containing fine element `e`.
    pub fn coarse_of_fine_element(&self, e: usize) -> usize {
        let (ex, ey) = self.element_grid(e);
        self.coarse_index(ex / self.refinement, ey / self.refinement)
    }

    /// Fine elements of coarse element `i`, row-major.
    pub fn coarse_fine_elements(&self, i: usize) -> Vec<usize> {
        let (cx, cy) = self.coarse_grid(i);
        let r = self.refinement;
        let mut out = Vec::with_capacity(r * r);
        for ey in cy * r..(cy + 1) * r {
            for ex in cx * r..(cx + 1) * r {
                out.push(self.element_index(ex, ey));
            }
        }
        out
    }

    /// Fine nodes of coarse element `i` (closed element, row-major). Nodes on
    /// coarse edges appear in every adjacent element's list.
    pub fn coarse_fine_nodes(&self, i: usize) -> Vec<usize> {
        let (cx, cy) = self.coarse_grid(i);
        let r = self.refinement;
        let mut out = Vec::with_capacity((r + 1) * (r + 1));
        for iy in cy * r..=(cy + 1) * r {
            for ix in cx * r..=(cx + 1) * r {
                out.push(self.node_index(ix, iy));
            }
        }
        out
    }

    /// Stable identity hash of the mesh.
    pub fn hash(&self) -> String {
        crate::io::hash_json(&self.spec())
    }
}
