//! Multiscale model reduction: auxiliary spectral modes, the localized
//! constraint-energy-minimizing basis `R`, and projections onto it.

mod cem;
mod oversample;
mod projection;
mod spectral;

pub use cem::{cem_basis, constraint_residual, energy_on, tail_energy_fraction, BasisManifest, MultiscaleBasis};
pub use oversample::{oversample_region, CoarseRegion};
pub use projection::{basis_columns, coarse_target, project_source, CoarseProjector};
pub use spectral::{
    auxiliary_spectrum, generalized_symmetric_eigen, kappa_tilde, partition_of_unity, AuxiliarySpace, LocalModes,
    PartitionOfUnity,
};

/// Auxiliary modes kept per coarse element.
pub const DEFAULT_MODES_PER_ELEMENT: usize = 3;
/// Oversampling layers.
pub const DEFAULT_OVERSAMPLING: usize = 3;
