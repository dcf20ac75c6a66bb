use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ProblemKind;

/// Which reduced view of the raw data a stage sees.
///
/// Indices are zero-based: `BasisIndexProjection { index: 0 }` selects the
/// first auxiliary mode of every coarse element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputSelector {
    /// `F0 R` with every basis function.
    AllBasisProjection,
    /// `F0 R` restricted to the basis functions of one mode index.
    BasisIndexProjection { index: usize },
    /// Max pooling of each time slice of `F0`.
    MaxPool { pool: usize, stride: usize },
    /// Coarse-element averages of one coefficient component.
    SteadyFeature { index: usize },
    /// Max-pooled total coefficient.
    SteadyPooledKappa,
}

impl InputSelector {
    pub fn is_time_dependent(self) -> bool {
        matches!(self, Self::AllBasisProjection | Self::BasisIndexProjection { .. } | Self::MaxPool { .. })
    }
}

impl fmt::Display for InputSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AllBasisProjection => write!(f, "basis(all)"),
            Self::BasisIndexProjection { index } => write!(f, "basis({index})"),
            Self::MaxPool { pool, stride } => write!(f, "maxpool({pool};{stride})"),
            Self::SteadyFeature { index } => write!(f, "feature({index})"),
            Self::SteadyPooledKappa => write!(f, "pooled_kappa"),
        }
    }
}

/// Optimizer and stopping rule of one stage.
///
/// A plateau is `patience` epochs in which the epoch-mean training loss does
/// not improve on its best value by a relative `min_improvement`. The first
/// `lr_decays` plateaus divide the learning rate by ten; the next one stops
/// training. `max_epochs` caps the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_improvement: f64,
    pub lr_decays: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 32, max_epochs: 5000, patience: 200, min_improvement: 1e-3, lr_decays: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub selector: InputSelector,
    /// Output time and space dimensions `(m1, r1)` of the attention reduction.
    #[serde(default)]
    pub dims: Option<(usize, usize)>,
    /// Hidden width of the dense generator (steady problems).
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub problem: ProblemKind,
    pub stages: Vec<StageSpec>,
    /// Also compute fine-scale errors (time-dependent sets with stored fine solutions).
    #[serde(default = "yes")]
    pub fine_errors: bool,
}

fn yes() -> bool {
    true
}

pub const DEFAULT_STEADY_HIDDEN: usize = 128;

/// The five `(m1, r1)` rows of the time-dependent experiments.
pub const DIMENSION_ROWS: [(usize, usize); 5] = [(30, 10), (25, 12), (20, 15), (15, 20), (10, 30)];

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("pipeline needs at least one stage".into()));
        }
        let td = self.problem.is_time_dependent();
        for (k, s) in self.stages.iter().enumerate() {
            let at = |m: &str| Err(Error::Config(format!("stages[{k}]: {m}")));
            if s.selector.is_time_dependent() != td {
                return at(&format!("selector {} does not apply to the {} problem", s.selector, self.problem));
            }
            if td {
                match s.dims {
                    Some((m1, r1)) if m1 > 0 && r1 > 0 => {}
                    _ => return at("time-dependent stages need positive dims [m1, r1]"),
                }
            } else if s.hidden == Some(0) {
                return at("hidden width must be positive");
            }
            if let InputSelector::MaxPool { pool, stride } = s.selector {
                if pool == 0 || stride == 0 {
                    return at("pool and stride must be positive");
                }
            }
            let t = &s.training;
            if !(t.lr > 0.0) || t.batch_size == 0 || t.max_epochs == 0 || !(t.min_improvement >= 0.0) {
                return at("training needs lr > 0, batch_size > 0, max_epochs > 0 and min_improvement >= 0");
            }
        }
        Ok(())
    }

    fn time_stages(problem: ProblemKind, selectors: &[InputSelector], dims: (usize, usize), training: TrainingConfig) -> Self {
        let stages = selectors
            .iter()
            .enumerate()
            .map(|(k, &selector)| StageSpec {
                selector,
                dims: Some(dims),
                hidden: None,
                training: TrainingConfig { seed: training.seed + k as u64, ..training },
            })
            .collect();
        Self { problem, stages, fine_errors: true }
    }

    /// Three stages that all see the full basis projection.
    pub fn coupled(problem: ProblemKind, dims: (usize, usize), training: TrainingConfig) -> Self {
        Self::time_stages(problem, &[InputSelector::AllBasisProjection; 3], dims, training)
    }

    /// One mode index per stage.
    pub fn decoupled(problem: ProblemKind, dims: (usize, usize), training: TrainingConfig) -> Self {
        let sel: Vec<_> = (0..3).map(|index| InputSelector::BasisIndexProjection { index }).collect();
        Self::time_stages(problem, &sel, dims, training)
    }

    /// Two basis stages followed by pooled raw source data.
    pub fn pooled(problem: ProblemKind, dims: (usize, usize), pool: usize, stride: usize, training: TrainingConfig) -> Self {
        let sel = [
            InputSelector::BasisIndexProjection { index: 0 },
            InputSelector::BasisIndexProjection { index: 1 },
            InputSelector::MaxPool { pool, stride },
        ];
        Self::time_stages(problem, &sel, dims, training)
    }

    /// Steady problem: first component, then either the second component or
    /// the pooled coefficient.
    pub fn steady_two_stage(pooled: bool, training: TrainingConfig) -> Self {
        let second = if pooled { InputSelector::SteadyPooledKappa } else { InputSelector::SteadyFeature { index: 1 } };
        let stages = [InputSelector::SteadyFeature { index: 0 }, second]
            .iter()
            .enumerate()
            .map(|(k, &selector)| StageSpec {
                selector,
                dims: None,
                hidden: Some(DEFAULT_STEADY_HIDDEN),
                training: TrainingConfig { seed: training.seed + k as u64, ..training },
            })
            .collect();
        Self { problem: ProblemKind::Steady, stages, fine_errors: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        let t = TrainingConfig::default();
        for p in [ProblemKind::Linear, ProblemKind::Nonlinear] {
            PipelineConfig::coupled(p, (30, 10), t).validate().unwrap();
            PipelineConfig::decoupled(p, (10, 30), t).validate().unwrap();
            PipelineConfig::pooled(p, (20, 15), 10, 10, t).validate().unwrap();
        }
        PipelineConfig::steady_two_stage(false, t).validate().unwrap();
        PipelineConfig::steady_two_stage(true, t).validate().unwrap();
    }

    #[test]
    fn selectors_must_match_problem() {
        let mut c = PipelineConfig::steady_two_stage(false, TrainingConfig::default());
        c.problem = ProblemKind::Linear;
        assert!(c.validate().unwrap_err().is_config());
        let mut c = PipelineConfig::coupled(ProblemKind::Linear, (30, 10), TrainingConfig::default());
        c.stages.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = PipelineConfig::pooled(ProblemKind::Nonlinear, (20, 15), 10, 10, TrainingConfig::default());
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"max_pool\""));
        let back: PipelineConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let minimal: PipelineConfig = serde_json::from_str(
            r#"{"problem":"steady","stages":[{"selector":{"type":"steady_feature","index":0}}]}"#,
        )
        .unwrap();
        assert_eq!(minimal.stages[0].training, TrainingConfig::default());
        assert!(minimal.fine_errors);
    }
}
