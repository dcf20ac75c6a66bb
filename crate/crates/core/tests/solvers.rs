mod common;

use std::f64::consts::PI;

use mstage::grid_fem::{build_mesh_pair, solve_parabolic_linear, solve_parabolic_nonlinear, solve_steady, Field, MeshPair, Trajectory};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Element stiffness and mass of the bilinear hats, by 2×2 Gauss quadrature
/// in physical coordinates (exact for these integrands).
fn element_matrices(mesh: &MeshPair, e: usize) -> ([usize; 4], [[f64; 4]; 4], [[f64; 4]; 4]) {
    let nodes = mesh.element_nodes(e);
    let h = mesh.fine_h();
    let xy: Vec<(f64, f64)> = nodes.iter().map(|&n| mesh.node_coords(n)).collect();
    let (x0, y0) = xy.iter().fold((f64::MAX, f64::MAX), |a, b| (a.0.min(b.0), a.1.min(b.1)));
    let (mut k, mut m) = ([[0.0; 4]; 4], [[0.0; 4]; 4]);
    for gx in GAUSS2 {
        for gy in GAUSS2 {
            let (x, y) = (x0 + 0.5 * h * (gx + 1.0), y0 + 0.5 * h * (gy + 1.0));
            let w = 0.25 * h * h;
            let hat = |a: usize| {
                let (xa, ya) = xy[a];
                let (sx, sy) = (1.0 - (x - xa).abs() / h, 1.0 - (y - ya).abs() / h);
                let (dx, dy) = (-(x - xa).signum() / h, -(y - ya).signum() / h);
                (sx * sy, dx * sy, sx * dy)
            };
            for a in 0..4 {
                for b in 0..4 {
                    let (pa, ax, ay) = hat(a);
                    let (pb, bx, by) = hat(b);
                    k[a][b] += w * (ax * bx + ay * by);
                    m[a][b] += w * pa * pb;
                }
            }
        }
    }
    (nodes, k, m)
}

/// Backward Euler for `u_t = ∇·(κe^{γū}∇u) + f` with Newton's method on each
/// step, `ū` the element mean of the nodal values. Dense, for small meshes.
fn newton_trajectory(mesh: &MeshPair, kappa: &[f64], gamma: f64, source: &Trajectory) -> Trajectory {
    let n = mesh.n_fine_nodes();
    let interior = mesh.interior_nodes();
    let mut slot = vec![usize::MAX; n];
    for (i, &p) in interior.iter().enumerate() {
        slot[p] = i;
    }
    let ni = interior.len();
    let locals: Vec<_> = (0..mesh.n_fine_elements()).map(|e| element_matrices(mesh, e)).collect();
    let mut mass_full = DMatrix::<f64>::zeros(n, n);
    for (nodes, _, m) in &locals {
        for a in 0..4 {
            for b in 0..4 {
                mass_full[(nodes[a], nodes[b])] += m[a][b];
            }
        }
    }
    let dt = source.dt();
    let mut out = Trajectory::zeros(source.m0, source.t_final, n);
    let mut prev = vec![0.0; n];
    for step in 0..source.m0 {
        let f: DVector<f64> = &mass_full * DVector::from_column_slice(source.row(step));
        let mut u = prev.clone();
        for _ in 0..50 {
            let mut res = DVector::<f64>::zeros(ni);
            let mut jac = DMatrix::<f64>::zeros(ni, ni);
            for (e, (nodes, k, m)) in locals.iter().enumerate() {
                let mean = nodes.iter().map(|&p| u[p]).sum::<f64>() / 4.0;
                let c = kappa[e] * (gamma * mean).exp();
                for a in 0..4 {
                    let i = slot[nodes[a]];
                    if i == usize::MAX {
                        continue;
                    }
                    let ku: f64 = (0..4).map(|b| k[a][b] * u[nodes[b]]).sum();
                    res[i] += dt * c * ku + (0..4).map(|b| m[a][b] * (u[nodes[b]] - prev[nodes[b]])).sum::<f64>();
                    for b in 0..4 {
                        let j = slot[nodes[b]];
                        if j == usize::MAX {
                            continue;
                        }
                        jac[(i, j)] += m[a][b] + dt * c * k[a][b] + dt * ku * c * gamma / 4.0;
                    }
                }
            }
            for (i, &p) in interior.iter().enumerate() {
                res[i] -= dt * f[p];
            }
            let delta = jac.lu().solve(&res).expect("nonsingular Jacobian");
            for (i, &p) in interior.iter().enumerate() {
                u[p] -= delta[i];
            }
            if delta.norm() <= 1e-14 * u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300) {
                break;
            }
        }
        out.row_mut(step).copy_from_slice(&u);
        prev = u;
    }
    out
}

fn bump(mesh: &MeshPair, m0: usize, t_final: f64, amp: f64) -> Trajectory {
    let mut s = Trajectory::zeros(m0, t_final, mesh.n_fine_nodes());
    for i in 0..m0 {
        let t = s.time(i);
        for p in 0..mesh.n_fine_nodes() {
            let (x, y) = mesh.node_coords(p);
            s.row_mut(i)[p] = amp * (1.0 + t.sin()) * (-(30.0 * ((x - 0.4).powi(2) + (y - 0.55).powi(2)))).exp();
        }
    }
    s
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    d / b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn picard_fixed_point_matches_newton() {
    let mesh = build_mesh_pair(2, 4).unwrap();
    let kappa: Vec<f64> = (0..mesh.n_fine_elements()).map(|e| if e % 7 == 3 { 20.0 } else { 1.0 }).collect();
    let source = bump(&mesh, 5, 1.0, 4.0);
    for gamma in [0.0, 2.0, 6.0] {
        let (picard, stats) = solve_parabolic_nonlinear(&mesh, &Field::elemental(kappa.clone()), gamma, &source).unwrap();
        let newton = newton_trajectory(&mesh, &kappa, gamma, &source);
        for step in 0..source.m0 {
            let d = rel_diff(picard.row(step), newton.row(step));
            assert!(d < 1e-7, "gamma {gamma} step {step}: {d:e}");
        }
        if gamma > 0.0 {
            assert!(stats.iterations.iter().all(|&k| k > 1));
        }
    }
}

#[test]
fn linear_solver_matches_dense_backward_euler() {
    let mesh = build_mesh_pair(2, 3).unwrap();
    let kappa: Vec<f64> = (0..mesh.n_fine_elements()).map(|e| 1.0 + (e % 3) as f64).collect();
    let source = bump(&mesh, 4, 0.5, 1.0);
    let fem = solve_parabolic_linear(&mesh, &Field::elemental(kappa.clone()), &source).unwrap();
    // γ = 0 makes the Newton oracle a plain dense backward Euler solve
    let dense = newton_trajectory(&mesh, &kappa, 0.0, &source);
    for step in 0..4 {
        assert!(rel_diff(fem.row(step), dense.row(step)) < 1e-12);
    }
}

#[test]
fn poisson_centre_value_matches_series() {
    let series = common::poisson_unit_source(0.5, 0.5, 401);
    assert!((series - 0.073671).abs() < 1e-6, "series {series}");
    let mesh = build_mesh_pair(10, 10).unwrap();
    let u = solve_steady(&mesh, &Field::constant_elemental(&mesh, 1.0), &vec![1.0; mesh.n_fine_nodes()]).unwrap();
    let centre = u[mesh.node_index(50, 50)];
    assert!((centre - series).abs() < 1e-4, "fem {centre} series {series}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    /// Second-order L² convergence for smooth manufactured solutions.
    #[test]
    fn manufactured_solutions_converge_at_second_order(a in 1usize..3, b in 1usize..3, contrast in 0.0f64..2.0) {
        let (af, bf) = (a as f64 * PI, b as f64 * PI);
        let exact = move |x: f64, y: f64| (af * x).sin() * (bf * y).sin();
        let mut errors = Vec::new();
        for r in [8, 16, 32] {
            let mesh = build_mesh_pair(1, r).unwrap();
            // constant coefficient, so f = κ(a²+b²)π² u
            let kappa = 1.0 + contrast;
            let f: Vec<f64> = (0..mesh.n_fine_nodes())
                .map(|p| {
                    let (x, y) = mesh.node_coords(p);
                    kappa * (af * af + bf * bf) * exact(x, y)
                })
                .collect();
            let u = solve_steady(&mesh, &Field::constant_elemental(&mesh, kappa), &f).unwrap();
            errors.push(common::l2_error(&mesh, &u, exact));
        }
        for order in common::observed_orders(&errors) {
            prop_assert!(order >= 1.9, "errors {errors:?}");
        }
    }

    /// Positive loads give nonnegative solutions for any positive coefficient.
    #[test]
    fn positive_load_gives_nonnegative_solution(seed in 0u64..1000, high in 1.0f64..1e4) {
        let mesh = build_mesh_pair(2, 5).unwrap();
        let kappa: Vec<f64> = (0..mesh.n_fine_elements())
            .map(|e| if (e as u64 * 2654435761 + seed).is_multiple_of(5) { high } else { 1.0 })
            .collect();
        let f: Vec<f64> = (0..mesh.n_fine_nodes()).map(|p| 1.0 + ((p as u64 + seed) % 3) as f64).collect();
        let u = solve_steady(&mesh, &Field::elemental(kappa), &f).unwrap();
        prop_assert!(u.iter().all(|&v| v >= -1e-14));
        prop_assert!(u.iter().any(|&v| v > 0.0));
    }
}
