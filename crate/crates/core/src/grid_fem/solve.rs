use crate::error::{Error, Result};
use crate::grid_fem::assemble::{assemble_band, assemble_mass, DofMap};
use crate::grid_fem::{Field, MeshPair, Trajectory};
use crate::linalg::{self, BandCholesky, BandMatrix, SparseOperator};

/// Relative change between successive Picard iterates that counts as converged.
pub const PICARD_TOL: f64 = 1e-8;
/// Picard iteration cap per time step.
pub const PICARD_MAX_ITERS: usize = 50;
/// Largest admissible `γ·u` before the exponential coefficient is treated as blown up.
pub const OVERFLOW_LIMIT: f64 = 30.0;

fn all_elements(mesh: &MeshPair) -> Vec<usize> {
    (0..mesh.n_fine_elements()).collect()
}

fn check_nodal(mesh: &MeshPair, v: &[f64], what: &str) -> Result<()> {
    if v.len() != mesh.n_fine_nodes() {
        return Err(Error::Shape(format!("{what} has {} entries, mesh has {} nodes", v.len(), mesh.n_fine_nodes())));
    }
    Ok(())
}

fn check_source(mesh: &MeshPair, source: &Trajectory) -> Result<()> {
    if source.n != mesh.n_fine_nodes() {
        return Err(Error::Shape(format!("source has {} columns, mesh has {} nodes", source.n, mesh.n_fine_nodes())));
    }
    if source.m0 == 0 || !(source.t_final > 0.0) {
        return Err(Error::InvalidArgument(format!("need m0 >= 1 and T > 0, got m0 = {}, T = {}", source.m0, source.t_final)));
    }
    Ok(())
}

/// Unit-weight mass matrix on all fine nodes.
pub fn unit_mass(mesh: &MeshPair) -> SparseOperator {
    assemble_mass(mesh, &Field::constant_elemental(mesh, 1.0)).expect("unit weight is positive")
}

/// Solves `−∇·(κ∇u) = f` with homogeneous Dirichlet data.
///
/// `f` holds nodal source values; the load is its consistent mass projection.
pub fn solve_steady(mesh: &MeshPair, kappa: &Field, f: &[f64]) -> Result<Vec<f64>> {
    kappa.check_positive_elemental(mesh)?;
    check_nodal(mesh, f, "source")?;
    let dofs = DofMap::interior(mesh);
    let load = dofs.gather(&unit_mass(mesh).matvec(f));
    if dofs.is_empty() {
        return Ok(vec![0.0; mesh.n_fine_nodes()]);
    }
    let band = assemble_band(mesh, &dofs, &all_elements(mesh), Some(&kappa.values), None);
    let u = band.cholesky()?.solve(&load);
    Ok(dofs.scatter(&u, mesh.n_fine_nodes()))
}

/// Same as [`solve_steady`] but with Jacobi-preconditioned CG on the reduced system.
pub fn solve_steady_cg(mesh: &MeshPair, kappa: &Field, f: &[f64], tol: f64) -> Result<Vec<f64>> {
    kappa.check_positive_elemental(mesh)?;
    check_nodal(mesh, f, "source")?;
    let dofs = DofMap::interior(mesh);
    let load = dofs.gather(&unit_mass(mesh).matvec(f));
    let k = crate::grid_fem::assemble_stiffness(mesh, kappa)?.restrict(&dofs.nodes);
    let u = linalg::solve_spd(&k, &load, tol)?;
    Ok(dofs.scatter(&u, mesh.n_fine_nodes()))
}

/// Backward Euler for `M u' + K u = M f` on an already reduced system.
///
/// Each step solves `(M + Δt K) uⁱ = M uⁱ⁻¹ + Δt·loadⁱ` with a factorization
/// computed once.
#[derive(Debug, Clone)]
pub struct BackwardEuler {
    mass: SparseOperator,
    factor: BandCholesky,
    dt: f64,
}

impl BackwardEuler {
    pub fn new(mass: SparseOperator, stiffness: &SparseOperator, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let system = mass.add_scaled(stiffness, dt)?;
        let factor = BandMatrix::from_sparse(&system).cholesky()?;
        Ok(Self { mass, factor, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step; `load` is the already mass-weighted source `M f(tⁱ)`.
    pub fn step(&self, u_prev: &[f64], load: &[f64]) -> Vec<f64> {
        let mut rhs = self.mass.matvec(u_prev);
        for (r, l) in rhs.iter_mut().zip(load) {
            *r += self.dt * l;
        }
        self.factor.solve_in_place(&mut rhs);
        rhs
    }
}

/// Linear heat solver with the time-stepping factorization cached, so many
/// sources can be run against the same `κ`.
#[derive(Debug, Clone)]
pub struct LinearHeatSolver {
    n: usize,
    m0: usize,
    t_final: f64,
    dofs: DofMap,
    mass_full: SparseOperator,
    stepper: Option<BackwardEuler>,
}

impl LinearHeatSolver {
    pub fn new(mesh: &MeshPair, kappa: &Field, m0: usize, t_final: f64) -> Result<Self> {
        kappa.check_positive_elemental(mesh)?;
        if m0 == 0 || !(t_final > 0.0) {
            return Err(Error::InvalidArgument(format!("need m0 >= 1 and T > 0, got m0 = {m0}, T = {t_final}")));
        }
        let dofs = DofMap::interior(mesh);
        let mass_full = unit_mass(mesh);
        let stepper = if dofs.is_empty() {
            None
        } else {
            let k = crate::grid_fem::assemble_stiffness(mesh, kappa)?.restrict(&dofs.nodes);
            Some(BackwardEuler::new(mass_full.restrict(&dofs.nodes), &k, t_final / m0 as f64)?)
        };
        Ok(Self { n: mesh.n_fine_nodes(), m0, t_final, dofs, mass_full, stepper })
    }

    /// Runs all `m0` steps from `initial` (zero when `None`).
    pub fn run(&self, source: &Trajectory, initial: Option<&[f64]>) -> Result<Trajectory> {
        if source.n != self.n || source.m0 != self.m0 {
            return Err(Error::Shape(format!(
                "source is {}x{}, solver expects {}x{}",
                source.m0, source.n, self.m0, self.n
            )));
        }
        let mut out = Trajectory::zeros(self.m0, self.t_final, self.n);
        let Some(stepper) = &self.stepper else { return Ok(out) };
        let mut u = match initial {
            Some(u0) => self.dofs.gather(u0),
            None => vec![0.0; self.dofs.len()],
        };
        for i in 0..self.m0 {
            let load = self.dofs.gather(&self.mass_full.matvec(source.row(i)));
            u = stepper.step(&u, &load);
            out.row_mut(i).copy_from_slice(&self.dofs.scatter(&u, self.n));
        }
        Ok(out)
    }
}

/// Backward Euler for `u_t = ∇·(κ∇u) + f`, zero initial state, zero boundary values.
pub fn solve_parabolic_linear(mesh: &MeshPair, kappa: &Field, source: &Trajectory) -> Result<Trajectory> {
    solve_parabolic_linear_from(mesh, kappa, source, None)
}

/// [`solve_parabolic_linear`] from a given initial state.
pub fn solve_parabolic_linear_from(mesh: &MeshPair, kappa: &Field, source: &Trajectory, initial: Option<&[f64]>) -> Result<Trajectory> {
    check_source(mesh, source)?;
    if let Some(u0) = initial {
        check_nodal(mesh, u0, "initial state")?;
    }
    LinearHeatSolver::new(mesh, kappa, source.m0, source.t_final)?.run(source, initial)
}

/// Per-step Picard iteration counts of a nonlinear solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardStats {
    pub iterations: Vec<usize>,
}

/// Element averages of a nodal vector.
pub fn element_averages(mesh: &MeshPair, u: &[f64]) -> Vec<f64> {
    (0..mesh.n_fine_elements())
        .map(|e| mesh.element_nodes(e).iter().map(|&n| u[n]).sum::<f64>() * 0.25)
        .collect()
}

/// Backward Euler with Picard linearization for `u_t = ∇·(κ e^{γu} ∇u) + f`.
///
/// The coefficient on each fine element uses the element average of the
/// current iterate. Iterates until the relative change drops to
/// [`PICARD_TOL`] or [`PICARD_MAX_ITERS`] is hit.
pub fn solve_parabolic_nonlinear(mesh: &MeshPair, kappa: &Field, gamma: f64, source: &Trajectory) -> Result<(Trajectory, PicardStats)> {
    kappa.check_positive_elemental(mesh)?;
    check_source(mesh, source)?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be nonnegative, got {gamma}")));
    }
    let n = mesh.n_fine_nodes();
    let dofs = DofMap::interior(mesh);
    let mass_full = unit_mass(mesh);
    let mass = mass_full.restrict(&dofs.nodes);
    let elements = all_elements(mesh);
    let ones = vec![1.0; mesh.n_fine_elements()];
    let dt = source.dt();
    let mut out = Trajectory::zeros(source.m0, source.t_final, n);
    let mut stats = PicardStats::default();
    if dofs.is_empty() {
        stats.iterations = vec![1; source.m0];
        return Ok((out, stats));
    }

    let mut u_prev = vec![0.0; dofs.len()];
    let mut coeff = vec![0.0; mesh.n_fine_elements()];
    for step in 0..source.m0 {
        let mut rhs = mass.matvec(&u_prev);
        let load = dofs.gather(&mass_full.matvec(source.row(step)));
        for (r, l) in rhs.iter_mut().zip(&load) {
            *r += dt * l;
        }
        let mut iterate = u_prev.clone();
        let mut converged = false;
        let mut change = f64::INFINITY;
        let mut iters = 0;
        while iters < PICARD_MAX_ITERS {
            iters += 1;
            let full = dofs.scatter(&iterate, n);
            for (e, avg) in element_averages(mesh, &full).into_iter().enumerate() {
                let g = gamma * avg;
                if g > OVERFLOW_LIMIT {
                    return Err(Error::Overflow { step, value: g });
                }
                coeff[e] = dt * kappa.values[e] * g.exp();
            }
            let band = assemble_band(mesh, &dofs, &elements, Some(&coeff), Some(&ones));
            let next = band.cholesky()?.solve(&rhs);
            let diff: f64 = next.iter().zip(&iterate).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let size = linalg::norm(&next);
            change = if size == 0.0 { diff } else { diff / size };
            iterate = next;
            if change <= PICARD_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardDiverged { step, iterations: iters, change });
        }
        stats.iterations.push(iters);
        out.row_mut(step).copy_from_slice(&dofs.scatter(&iterate, n));
        u_prev = iterate;
    }
    Ok((out, stats))
}
