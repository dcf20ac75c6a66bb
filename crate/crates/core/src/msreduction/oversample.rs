use serde::{Deserialize, Serialize};

use crate::grid_fem::MeshPair;

/// Rectangular block of coarse elements `[x0, x1) × [y0, y1)` (coarse cell indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseRegion {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl CoarseRegion {
    pub fn contains(&self, mesh: &MeshPair, i: usize) -> bool {
        let (cx, cy) = mesh.coarse_grid(i);
        (self.x0..self.x1).contains(&cx) && (self.y0..self.y1).contains(&cy)
    }

    /// Coarse elements of the region, row-major.
    pub fn elements(&self, mesh: &MeshPair) -> Vec<usize> {
        let mut out = Vec::with_capacity((self.x1 - self.x0) * (self.y1 - self.y0));
        for cy in self.y0..self.y1 {
            for cx in self.x0..self.x1 {
                out.push(mesh.coarse_index(cx, cy));
            }
        }
        out
    }

    /// Fine elements of the region, row-major.
    pub fn fine_elements(&self, mesh: &MeshPair) -> Vec<usize> {
        let r = mesh.refinement();
        let mut out = Vec::with_capacity((self.x1 - self.x0) * (self.y1 - self.y0) * r * r);
        for ey in self.y0 * r..self.y1 * r {
            for ex in self.x0 * r..self.x1 * r {
                out.push(mesh.element_index(ex, ey));
            }
        }
        out
    }

    /// Fine-node index box `(x0, x1, y0, y1)` of the closed region.
    pub fn fine_box(&self, mesh: &MeshPair) -> (usize, usize, usize, usize) {
        let r = mesh.refinement();
        (self.x0 * r, self.x1 * r, self.y0 * r, self.y1 * r)
    }
}

/// `K_{i,ℓ}`: coarse element `i` grown by `ell` layers of vertex neighbours,
/// clipped to the domain.
pub fn oversample_region(mesh: &MeshPair, i: usize, ell: usize) -> CoarseRegion {
    let nc = mesh.coarse_cells_per_side();
    let (cx, cy) = mesh.coarse_grid(i);
    CoarseRegion {
        x0: cx.saturating_sub(ell),
        x1: (cx + ell + 1).min(nc),
        y0: cy.saturating_sub(ell),
        y1: (cy + ell + 1).min(nc),
    }
}
