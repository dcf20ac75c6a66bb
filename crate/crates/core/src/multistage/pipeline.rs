use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid_fem::{unit_mass, MeshPair};
use crate::io;
use crate::linalg::SparseOperator;
use crate::metrics::{fine_relative_l2, relative_l2};
use crate::msreduction::MultiscaleBasis;
use crate::multistage::{
    build_inputs, train_stage, EvalReport, PipelineConfig, StageReport, TrainedStage, REGRESSION_TOLERANCE,
};
use crate::nn::Backbone;
use crate::problems::{mean_baseline, SampleSet, Table};

/// Trained stages and their report.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: EvalReport,
    pub stages: Vec<TrainedStage>,
}

/// Hash of the configuration together with the dataset it runs on.
pub fn config_hash(config: &PipelineConfig, set: &SampleSet) -> String {
    io::hash_json(&(config, &set.manifest))[..16].to_string()
}

fn mean_rel(pred: &Table, target: &Table, range: std::ops::Range<usize>) -> Result<f64> {
    let n = range.len();
    if n == 0 {
        return Ok(0.0);
    }
    let errs: Vec<f64> = range.map(|i| relative_l2(pred.row(i), target.row(i))).collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / n as f64)
}

struct FineContext<'a> {
    basis: &'a MultiscaleBasis,
    mass: SparseOperator,
    fine: &'a Table,
    computed: Vec<f64>,
}

impl<'a> FineContext<'a> {
    fn new(set: &'a SampleSet, mesh: &MeshPair, basis: &'a MultiscaleBasis, coarse: &Table) -> Result<Self> {
        let fine = set.target("fine")?;
        let mass = unit_mass(mesh);
        let n_train = set.n_train();
        let computed = (0..fine.rows)
            .into_par_iter()
            .map(|k| fine_relative_l2(coarse.row(n_train + k), fine.row(k), basis, &mass))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { basis, mass, fine, computed })
    }

    /// Per test sample fine errors of `pred`.
    fn errors(&self, pred: &Table, n_train: usize) -> Result<Vec<f64>> {
        (0..self.fine.rows)
            .into_par_iter()
            .map(|k| fine_relative_l2(pred.row(n_train + k), self.fine.row(k), self.basis, &self.mass))
            .collect()
    }
}

fn check_inputs(config: &PipelineConfig, set: &SampleSet, mesh: &MeshPair) -> Result<()> {
    config.validate()?;
    if config.problem != set.manifest.problem {
        return Err(Error::Config(format!(
            "config is for the {} problem but the dataset holds {}",
            config.problem, set.manifest.problem
        )));
    }
    if set.manifest.mesh != mesh.spec() {
        return Err(Error::Config("dataset was generated on a different mesh".into()));
    }
    if set.n_train() == 0 || set.manifest.n_test == 0 {
        return Err(Error::Config("dataset needs training and test samples".into()));
    }
    Ok(())
}

/// Runs the stages in order (or reloads them from `checkpoints`) and evaluates each.
fn drive(
    config: &PipelineConfig,
    set: &SampleSet,
    mesh: &MeshPair,
    basis: Option<&MultiscaleBasis>,
    checkpoints: Option<&Path>,
) -> Result<PipelineRun> {
    check_inputs(config, set, mesh)?;
    let targets = set.target("coarse")?;
    let (n_train, count) = (set.n_train(), set.len());
    let td = config.problem.is_time_dependent();
    let fine = match (td && config.fine_errors, basis) {
        (true, Some(b)) if set.targets.contains_key("fine") => Some(FineContext::new(set, mesh, b, targets)?),
        _ => None,
    };

    let mut stages: Vec<TrainedStage> = Vec::new();
    let mut reports: Vec<StageReport> = Vec::new();
    let mut ge = (0, 0);
    for (k, spec) in config.stages.iter().enumerate() {
        let inputs = build_inputs(spec.selector, set, mesh, basis)?;
        let prev = stages.last().map(|s| &s.predictions);
        let trained = match checkpoints {
            Some(dir) => TrainedStage::load(dir, k, &inputs, prev)?,
            None => train_stage(k, spec, &inputs, targets, n_train, prev, td)
                .map_err(|e| Error::Stage { stage: k + 1, source: Box::new(e) })?,
        };
        let pred = &trained.predictions;
        let test_err = mean_rel(pred, targets, n_train..count)?;
        let fine_l2 = match &fine {
            Some(f) => {
                let errs = f.errors(pred, n_train)?;
                for (e, c) in errs.iter().zip(&f.computed) {
                    ge.1 += 1;
                    if e >= c {
                        ge.0 += 1;
                    }
                }
                Some(errs.iter().sum::<f64>() / errs.len() as f64)
            }
            None => None,
        };
        let (m1, r1) = match &trained.model.config.backbone {
            Backbone::Attention(c) => (Some(c.m1), Some(c.r1)),
            Backbone::Dense { .. } => (None, None),
        };
        let regressed = reports.last().is_some_and(|p: &StageReport| test_err > p.test_err * (1.0 + REGRESSION_TOLERANCE));
        if regressed {
            log::warn!("stage {}: test error {test_err:.4e} regressed; flagged as an optimization failure", k + 1);
        }
        reports.push(StageReport {
            stage: k + 1,
            selector: spec.selector.to_string(),
            m1,
            r1,
            train_err: mean_rel(pred, targets, 0..n_train)?,
            test_err,
            fine_l2,
            params: trained.model.parameter_count(),
            epochs: trained.checkpoint.epochs,
            seed: spec.training.seed,
            regressed,
        });
        stages.push(trained);
    }
    let report = EvalReport {
        problem: config.problem,
        config_hash: config_hash(config, set),
        dataset_seed: set.manifest.seed,
        n_train,
        n_test: count - n_train,
        mean_baseline: mean_baseline(&targets.slice(0..n_train), &targets.slice(n_train..count))?,
        computed_fine_l2: fine.as_ref().map(|f| f.computed.iter().sum::<f64>() / f.computed.len() as f64),
        learned_ge_computed: fine.as_ref().map(|_| ge),
        total_params: reports.iter().map(|r| r.params).sum(),
        stages: reports,
    };
    Ok(PipelineRun { report, stages })
}

/// Trains every stage in order, each on top of the frozen predictions of
/// the previous one, and evaluates after each stage.
pub fn run_pipeline(config: &PipelineConfig, set: &SampleSet, mesh: &MeshPair, basis: Option<&MultiscaleBasis>) -> Result<PipelineRun> {
    drive(config, set, mesh, basis, None)
}

/// Recomputes the report from saved stage checkpoints without training.
pub fn evaluate_checkpoints(
    config: &PipelineConfig,
    set: &SampleSet,
    mesh: &MeshPair,
    basis: Option<&MultiscaleBasis>,
    dir: &Path,
) -> Result<PipelineRun> {
    drive(config, set, mesh, basis, Some(dir))
}

/// The two-stage steady experiment (second stage on the second coefficient
/// component, or on the pooled coefficient when `pooled`).
pub fn steady_two_stage(set: &SampleSet, mesh: &MeshPair, pooled: bool, training: crate::multistage::TrainingConfig) -> Result<PipelineRun> {
    run_pipeline(&PipelineConfig::steady_two_stage(pooled, training), set, mesh, None)
}

impl PipelineRun {
    /// Writes `report.json`, `report.csv`, `report.md` and every stage checkpoint.
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        for s in &self.stages {
            s.save(dir)?;
        }
        self.save_report(dir)
    }

    pub fn save_report(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join("report.json"), &self.report)?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|source| Error::Io { path: p, source })
        };
        write("report.csv", self.report.to_csv())?;
        write("report.md", self.report.to_markdown())
    }
}
