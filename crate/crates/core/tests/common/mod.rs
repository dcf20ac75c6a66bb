//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use mstage::grid_fem::MeshPair;

/// Series solution of `−Δu = 1` on the unit square with zero boundary values,
/// summed over odd `m, n ≤ terms`.
pub fn poisson_unit_source(x: f64, y: f64, terms: usize) -> f64 {
    let mut u = 0.0;
    for m in (1..=terms).step_by(2) {
        for n in (1..=terms).step_by(2) {
            let (mf, nf) = (m as f64, n as f64);
            u += 16.0 / (PI.powi(4) * mf * nf * (mf * mf + nf * nf)) * (mf * PI * x).sin() * (nf * PI * y).sin();
        }
    }
    u
}

const GAUSS3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// `‖u_h − u‖_{L²}` with `u_h` the bilinear interpolant of nodal values,
/// integrated by 3×3 Gauss quadrature on every fine element.
pub fn l2_error(mesh: &MeshPair, u_h: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let h = mesh.fine_h();
    let mut total = 0.0;
    for e in 0..mesh.n_fine_elements() {
        let nodes = mesh.element_nodes(e);
        let (x0, y0) = nodes.iter().map(|&n| mesh.node_coords(n)).fold((f64::MAX, f64::MAX), |a, b| (a.0.min(b.0), a.1.min(b.1)));
        let val = |x: f64, y: f64| {
            // bilinear interpolation from the four corner values
            let (s, t) = ((x - x0) / h, (y - y0) / h);
            let corner = |cx: f64, cy: f64| {
                let n = nodes.iter().copied().find(|&n| {
                    let (nx, ny) = mesh.node_coords(n);
                    (nx - cx).abs() < 1e-12 && (ny - cy).abs() < 1e-12
                });
                u_h[n.expect("corner node")]
            };
            corner(x0, y0) * (1.0 - s) * (1.0 - t)
                + corner(x0 + h, y0) * s * (1.0 - t)
                + corner(x0, y0 + h) * (1.0 - s) * t
                + corner(x0 + h, y0 + h) * s * t
        };
        for &(gx, wx) in &GAUSS3 {
            for &(gy, wy) in &GAUSS3 {
                let (x, y) = (x0 + 0.5 * h * (gx + 1.0), y0 + 0.5 * h * (gy + 1.0));
                let d = val(x, y) - exact(x, y);
                total += wx * wy * 0.25 * h * h * d * d;
            }
        }
    }
    total.sqrt()
}

/// Observed orders `log2(e_k / e_{k+1})` for errors on meshes halving `h`.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
