//! Multi-stage training: each stage sees its own reduced view of the raw
//! data and corrects the frozen prediction of the stage before it.

mod config;
mod inputs;
mod pipeline;
mod report;
mod train;

pub use config::{InputSelector, PipelineConfig, StageSpec, TrainingConfig, DEFAULT_STEADY_HIDDEN, DIMENSION_ROWS};
pub use inputs::{build_inputs, StageInputs, Standardizer, STD_FLOOR};
pub use pipeline::{config_hash, evaluate_checkpoints, run_pipeline, steady_two_stage, PipelineRun};
pub use report::{CsvStageRow, EvalReport, StageReport, REGRESSION_TOLERANCE};
pub use train::{model_config, target_scale, train_stage, StageCheckpoint, TrainedStage};
