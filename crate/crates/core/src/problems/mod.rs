//! Experiment definitions: random sources, permeability fields, the steady
//! parametric coefficient, max pooling, and dataset generation.

mod dataset;
mod kappa;
mod pool;
mod source;
mod steady;

pub use dataset::{
    generate_dataset, mean_baseline, sample_rng, train_count, DatasetManifest, DatasetRequest, ProblemKind, SampleSet,
    Table, TimeSettings,
};
pub use kappa::{features_in_coarse_element, load_or_generate_kappa, KappaSpec, SyntheticKappa};
pub use pool::{max_pool_reduce, pool_windows};
pub use source::{
    node_regions, sample_source, sample_xi, source_from_regions, source_from_xi, source_profile, source_region,
    source_value, SourceSample, SOURCE_REGIONS,
};
pub use steady::{
    coarse_node_averages, sample_admissible_params, sample_params, steady_features, steady_target, SteadyParams,
    EPSILON, MAX_REDRAWS, PARAM_HALF_WIDTHS,
};
