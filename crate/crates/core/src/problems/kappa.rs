use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_fem::{Field, MeshPair};

/// How to obtain the permeability of the time-dependent problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KappaSpec {
    Constant { value: f64 },
    Synthetic(SyntheticKappa),
    /// A field saved with [`Field::save`]: directory and array name.
    File { dir: PathBuf, name: String },
}

impl Default for KappaSpec {
    fn default() -> Self {
        KappaSpec::Synthetic(SyntheticKappa::default())
    }
}

/// Seeded high-contrast field: a unit background with thin high-value
/// channels and small square inclusions, laid out on the fine element grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticKappa {
    pub background: f64,
    pub high: f64,
    pub seed: u64,
    /// Horizontal channels, one fine element thick.
    pub channels: usize,
    /// Inclusions per 100 × 100 fine elements; scaled with the mesh area.
    pub inclusion_density: usize,
    /// Inclusion side in fine elements.
    pub inclusion_size: usize,
    /// Placements that would give a coarse element more separate
    /// high-value components than this are skipped.
    pub max_features_per_element: usize,
}

impl Default for SyntheticKappa {
    fn default() -> Self {
        Self { background: 1.0, high: 1e4, seed: 2021, channels: 6, inclusion_density: 40, inclusion_size: 2, max_features_per_element: 2 }
    }
}

impl SyntheticKappa {
    pub fn generate(&self, mesh: &MeshPair) -> Result<Field> {
        if !(self.background > 0.0) || !(self.high > 0.0) {
            return Err(Error::Config("synthetic kappa values must be positive".into()));
        }
        let nf = mesh.fine_cells_per_side();
        let mut high = vec![false; mesh.n_fine_elements()];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let place = |cells: Vec<usize>, high: &mut Vec<bool>| {
            let before = high.clone();
            for &e in &cells {
                high[e] = true;
            }
            if !features_fit(mesh, high, &cells, self.max_features_per_element) {
                *high = before;
            }
        };
        for _ in 0..self.channels {
            let ey = if nf >= 3 { rng.random_range(1..nf - 1) } else { 0 };
            let len = ((rng.random_range(0.3..0.7) * nf as f64).round() as usize).clamp(1, nf);
            let ex0 = rng.random_range(0..=nf - len);
            place((ex0..ex0 + len).map(|ex| mesh.element_index(ex, ey)).collect(), &mut high);
        }
        let count = (self.inclusion_density * nf * nf + 5000) / 10000;
        let size = self.inclusion_size.clamp(1, nf);
        for _ in 0..count {
            let ex0 = rng.random_range(0..=nf - size);
            let ey0 = rng.random_range(0..=nf - size);
            let cells = (ey0..ey0 + size).flat_map(|ey| (ex0..ex0 + size).map(move |ex| (ex, ey)));
            place(cells.map(|(ex, ey)| mesh.element_index(ex, ey)).collect(), &mut high);
        }
        Ok(Field::elemental(high.iter().map(|&h| if h { self.high } else { self.background }).collect()))
    }
}

/// Connected high-value components (edge adjacency) inside coarse element `i`.
pub fn features_in_coarse_element(mesh: &MeshPair, high: &[bool], i: usize) -> usize {
    let (cx, cy) = mesh.coarse_grid(i);
    let r = mesh.refinement();
    let mut seen = vec![false; r * r];
    let mut count = 0;
    for start in 0..r * r {
        let e0 = mesh.element_index(cx * r + start % r, cy * r + start / r);
        if seen[start] || !high[e0] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            let (lx, ly) = (k % r, k / r);
            let mut visit = |nx: usize, ny: usize| {
                let nk = ny * r + nx;
                if !seen[nk] && high[mesh.element_index(cx * r + nx, cy * r + ny)] {
                    seen[nk] = true;
                    stack.push(nk);
                }
            };
            if lx > 0 {
                visit(lx - 1, ly);
            }
            if lx + 1 < r {
                visit(lx + 1, ly);
            }
            if ly > 0 {
                visit(lx, ly - 1);
            }
            if ly + 1 < r {
                visit(lx, ly + 1);
            }
        }
    }
    count
}

fn features_fit(mesh: &MeshPair, high: &[bool], changed: &[usize], limit: usize) -> bool {
    let mut touched: Vec<usize> = changed.iter().map(|&e| mesh.coarse_of_fine_element(e)).collect();
    touched.sort_unstable();
    touched.dedup();
    touched.iter().all(|&i| features_in_coarse_element(mesh, high, i) <= limit)
}

/// Builds or loads the permeability described by `spec` and checks it is positive.
pub fn load_or_generate_kappa(spec: &KappaSpec, mesh: &MeshPair) -> Result<Field> {
    let field = match spec {
        KappaSpec::Constant { value } => Field::constant_elemental(mesh, *value),
        KappaSpec::Synthetic(s) => s.generate(mesh)?,
        KappaSpec::File { dir, name } => Field::load(dir, name, mesh)?,
    };
    field.check_positive_elemental(mesh)?;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_fem::build_mesh_pair;

    #[test]
    fn constant_spec() {
        let m = build_mesh_pair(2, 3).unwrap();
        let k = load_or_generate_kappa(&KappaSpec::Constant { value: 1.0 }, &m).unwrap();
        assert!(k.values.iter().all(|&v| v == 1.0));
        assert!(load_or_generate_kappa(&KappaSpec::Constant { value: 0.0 }, &m).is_err());
    }

    #[test]
    fn synthetic_contrast_and_determinism() {
        let m = build_mesh_pair(10, 10).unwrap();
        let spec = KappaSpec::default();
        let k = load_or_generate_kappa(&spec, &m).unwrap();
        assert_eq!(k.min(), 1.0);
        assert_eq!(k.max(), 1e4);
        assert_eq!(k, load_or_generate_kappa(&spec, &m).unwrap());
        let high = k.values.iter().filter(|&&v| v == 1e4).count();
        assert!(high > 100 && high < 1000, "{high}");
    }

    #[test]
    fn synthetic_respects_feature_limit() {
        let m = build_mesh_pair(10, 10).unwrap();
        let k = load_or_generate_kappa(&KappaSpec::default(), &m).unwrap();
        let high: Vec<bool> = k.values.iter().map(|&v| v > 1.0).collect();
        let counts: Vec<usize> = (0..m.n_coarse_elements()).map(|i| features_in_coarse_element(&m, &high, i)).collect();
        assert!(counts.iter().all(|&c| c <= 2));
        assert!(counts.iter().filter(|&&c| c == 2).count() > 5);
    }

    #[test]
    fn feature_count_by_hand() {
        let m = build_mesh_pair(1, 4).unwrap();
        // two separate cells and one L-shaped pair
        let mut high = vec![false; 16];
        for (ex, ey) in [(0, 0), (2, 0), (2, 2), (3, 2), (3, 3)] {
            high[m.element_index(ex, ey)] = true;
        }
        assert_eq!(features_in_coarse_element(&m, &high, 0), 3);
    }

    #[test]
    fn synthetic_small_mesh() {
        let m = build_mesh_pair(5, 5).unwrap();
        let k = load_or_generate_kappa(&KappaSpec::default(), &m).unwrap();
        assert_eq!((k.min(), k.max()), (1.0, 1e4));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let m = build_mesh_pair(3, 3).unwrap();
        let k = Field::elemental((0..m.n_fine_elements()).map(|e| 1.0 + (e as f64).sqrt() / 7.0).collect());
        let dir = tempfile::tempdir().unwrap();
        k.save(dir.path(), "kappa", &m).unwrap();
        let spec = KappaSpec::File { dir: dir.path().to_path_buf(), name: "kappa".into() };
        assert_eq!(load_or_generate_kappa(&spec, &m).unwrap(), k);
        let other = build_mesh_pair(3, 4).unwrap();
        assert!(matches!(load_or_generate_kappa(&spec, &other), Err(Error::Shape(_))));
    }
}
