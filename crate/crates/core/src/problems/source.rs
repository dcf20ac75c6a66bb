use rand::Rng;

use crate::grid_fem::{MeshPair, Trajectory};

/// Closed rectangles `[x0, x1] × [y0, y1]` carrying the five source components.
pub const SOURCE_REGIONS: [[f64; 4]; 5] = [
    [0.15, 0.25, 0.8, 0.9],
    [0.8, 0.9, 0.3, 0.4],
    [0.2, 0.3, 0.15, 0.25],
    [0.8, 0.9, 0.45, 0.55],
    [0.2, 0.3, 0.3, 0.4],
];

/// Time profile of component `k` without its random offset.
pub fn source_profile(k: usize, t: f64) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => (1.0 + t.cos()).exp(),
        1 => -(1.0 + t.cos()).exp(),
        2 => 6.0 * t.cos(),
        3 => 0.5 * t * t + 0.5,
        4 => -0.5 * (PI - t) * (PI - t),
        _ => panic!("source component {k} out of range"),
    }
}

/// Index of the region containing `(x, y)`, first match wins.
pub fn source_region(x: f64, y: f64) -> Option<usize> {
    SOURCE_REGIONS.iter().position(|r| x >= r[0] && x <= r[1] && y >= r[2] && y <= r[3])
}

/// Pointwise source `f(t, x, y)` for offsets `xi`.
pub fn source_value(x: f64, y: f64, t: f64, xi: &[f64; 5]) -> f64 {
    source_region(x, y).map_or(0.0, |k| source_profile(k, t) + xi[k])
}

/// Random offsets `ξ_k ~ U(−0.5, 0.5)`.
pub fn sample_xi<R: Rng>(rng: &mut R) -> [f64; 5] {
    std::array::from_fn(|_| rng.random_range(-0.5..0.5))
}

/// Region of every fine node (`None` outside all five).
pub fn node_regions(mesh: &MeshPair) -> Vec<Option<u8>> {
    (0..mesh.n_fine_nodes())
        .map(|n| {
            let (x, y) = mesh.node_coords(n);
            source_region(x, y).map(|k| k as u8)
        })
        .collect()
}

/// `F0`: the source at `t_i = i·T/m0`, `i = 1..=m0`, on every fine node.
pub fn source_from_xi(mesh: &MeshPair, xi: &[f64; 5], m0: usize, t_final: f64) -> Trajectory {
    source_from_regions(&node_regions(mesh), xi, m0, t_final)
}

/// [`source_from_xi`] with the node regions precomputed.
pub fn source_from_regions(regions: &[Option<u8>], xi: &[f64; 5], m0: usize, t_final: f64) -> Trajectory {
    let mut f0 = Trajectory::zeros(m0, t_final, regions.len());
    for i in 0..m0 {
        let t = f0.time(i);
        let values: [f64; 5] = std::array::from_fn(|k| source_profile(k, t) + xi[k]);
        for (v, r) in f0.row_mut(i).iter_mut().zip(regions) {
            if let Some(k) = r {
                *v = values[*k as usize];
            }
        }
    }
    f0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSample {
    pub xi: [f64; 5],
    pub f0: Trajectory,
}

pub fn sample_source<R: Rng>(rng: &mut R, mesh: &MeshPair, m0: usize, t_final: f64) -> SourceSample {
    let xi = sample_xi(rng);
    SourceSample { xi, f0: source_from_xi(mesh, &xi, m0, t_final) }
}
