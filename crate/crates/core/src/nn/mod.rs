//! Small reverse-mode tensor engine and the stage networks built on it.

mod adam;
mod gradcheck;
mod graph;
mod model;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{gradient_check, GradCheckReport, ParamCheck, FD_STEP, ROUNDOFF_ULPS};
pub use graph::{Gradients, Graph, Var, LAYER_NORM_EPS};
pub use model::{
    sinusoidal_encoding, AttentionConfig, Backbone, Combination, StageModel, StageModelConfig, DEFAULT_HEADS,
};
pub use params::{ParamId, ParamInfo, ParamStore};
pub use tensor::Tensor;
