//! Structured Q1 finite elements on the unit square: meshes, operator
//! assembly and the steady / time-dependent fine-scale solvers.

mod assemble;
mod field;
mod mesh;
mod solve;

pub use assemble::{
    assemble_band, assemble_dense_local, assemble_mass, assemble_stiffness, DofMap, LOCAL_MASS_UNIT, LOCAL_STIFFNESS,
};
pub use field::{Field, FieldKind, Trajectory};
pub use mesh::{build_mesh_pair, MeshPair, MeshSpec};
pub use solve::{
    element_averages, solve_parabolic_linear, solve_parabolic_linear_from, solve_parabolic_nonlinear, solve_steady,
    solve_steady_cg, unit_mass, BackwardEuler, LinearHeatSolver, PicardStats, OVERFLOW_LIMIT, PICARD_MAX_ITERS,
    PICARD_TOL,
};
