use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::multistage::{StageInputs, StageSpec, Standardizer, DEFAULT_STEADY_HIDDEN};
use crate::nn::{Adam, AdamConfig, AttentionConfig, Backbone, Combination, Graph, StageModel, StageModelConfig, Tensor};
use crate::problems::Table;

/// Everything besides the weights needed to rerun a trained stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCheckpoint {
    pub stage: usize,
    pub spec: StageSpec,
    pub model: StageModelConfig,
    pub standardizer: Standardizer,
    /// Targets are divided by this before training.
    pub target_scale: f64,
    pub epochs: usize,
    /// Epoch-mean training loss, in scaled units.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedStage {
    pub checkpoint: StageCheckpoint,
    pub model: StageModel,
    /// Combined prediction of every sample, in target units.
    pub predictions: Table,
}

/// Root-mean-square of the training targets; one scalar shared by all stages.
pub fn target_scale(targets: &Table, train: std::ops::Range<usize>) -> f64 {
    let vals = &targets.data[train.start * targets.cols..train.end * targets.cols];
    let rms = (vals.iter().map(|v| v * v).sum::<f64>() / vals.len().max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        rms
    } else {
        1.0
    }
}

/// Network shape for a stage. An `r1` above the input width is clipped to it
/// (the attention block only reduces).
pub fn model_config(stage: usize, spec: &StageSpec, inputs: &StageInputs, output: usize, time_dependent: bool) -> Result<StageModelConfig> {
    let backbone = if time_dependent {
        let (m1, r1) = spec.dims.ok_or_else(|| Error::Config(format!("stage {stage} needs dims")))?;
        let r1_eff = r1.min(inputs.cols);
        if r1_eff != r1 {
            log::warn!("stage {stage}: r1 = {r1} exceeds the input width {}; using {r1_eff}", inputs.cols);
        }
        Backbone::Attention(AttentionConfig::new(inputs.rows, inputs.cols, m1, r1_eff).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(format!("stage {stage}: {m}")),
            other => other,
        })?)
    } else {
        Backbone::Dense { input: inputs.cols, hidden: spec.hidden.unwrap_or(DEFAULT_STEADY_HIDDEN) }
    };
    let combination = (stage > 0).then_some(if time_dependent { Combination::Linear } else { Combination::TwoLayer });
    Ok(StageModelConfig { backbone, output, combination })
}

/// Predictions of `model` for every sample, in scaled units.
fn predict_scaled(model: &StageModel, inputs: &StageInputs, prev: Option<&Table>, scale: f64) -> Result<Vec<f64>> {
    const CHUNK: usize = 64;
    let l = model.config.output;
    let mut out = Vec::with_capacity(inputs.samples * l);
    let idx: Vec<usize> = (0..inputs.samples).collect();
    for chunk in idx.chunks(CHUNK) {
        let x = inputs.gather(chunk);
        let p = prev.map(|p| gather_rows(p, chunk, 1.0 / scale));
        out.extend(model.predict(&x, p.as_ref())?.data);
    }
    Ok(out)
}

fn gather_rows(t: &Table, idx: &[usize], factor: f64) -> Tensor {
    let mut data = Vec::with_capacity(idx.len() * t.cols);
    for &i in idx {
        data.extend(t.row(i).iter().map(|v| v * factor));
    }
    Tensor::new(idx.len(), t.cols, data)
}

/// Trains stage `stage` on the first `n_train` samples with `prev` frozen,
/// then predicts every sample.
pub fn train_stage(
    stage: usize,
    spec: &StageSpec,
    inputs: &StageInputs,
    targets: &Table,
    n_train: usize,
    prev: Option<&Table>,
    time_dependent: bool,
) -> Result<TrainedStage> {
    if (stage > 0) != prev.is_some() {
        return Err(Error::InvalidArgument(format!("stage {stage}: previous predictions required exactly from the second stage")));
    }
    if inputs.samples != targets.rows || n_train == 0 || n_train > targets.rows {
        return Err(Error::Shape(format!("{} inputs, {} targets, {n_train} training samples", inputs.samples, targets.rows)));
    }
    let standardizer = Standardizer::fit(inputs, 0..n_train)?;
    let x = standardizer.apply(inputs);
    let scale = target_scale(targets, 0..n_train);
    let l = targets.cols;
    let config = model_config(stage, spec, inputs, l, time_dependent)?;
    let t = &spec.training;
    let mut model = StageModel::new(config.clone(), t.seed)?;
    if stage == 0 {
        let b = model.generator_bias();
        let bias = &mut model.store.value_mut(b).data;
        for i in 0..n_train {
            bias.iter_mut().zip(targets.row(i)).for_each(|(m, v)| *m += v / scale / n_train as f64);
        }
    }

    let mut adam = Adam::new(AdamConfig { lr: t.lr, ..AdamConfig::default() }, &model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed ^ 0x5eed_0000_0000_0000);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut decays = 0;
    for epoch in 0..t.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(t.batch_size) {
            let mut g = Graph::new();
            let xb = g.input(x.gather(batch));
            let pb = prev.map(|p| g.input(gather_rows(p, batch, 1.0 / scale)));
            let y = model.forward(&mut g, xb, pb)?;
            let loss = g.l1_loss(y, gather_rows(targets, batch, 1.0 / scale))?;
            let lv = g.value(loss).data[0];
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("training loss of stage {stage} at epoch {epoch}")));
            }
            total += lv * batch.len() as f64;
            model.store.zero_grads();
            g.backward(loss).accumulate_into(&g, &mut model.store);
            adam.step(&mut model.store)?;
        }
        let mean = total / n_train as f64;
        losses.push(mean);
        if mean < best * (1.0 - t.min_improvement) {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= t.patience {
                if decays == t.lr_decays {
                    break;
                }
                decays += 1;
                adam.config.lr *= 0.1;
                stale = 0;
            }
        }
    }
    log::info!("stage {stage}: {} epochs, final loss {:.4e}", losses.len(), losses.last().copied().unwrap_or(f64::NAN));

    let pred = predict_scaled(&model, &x, prev, scale)?;
    let predictions = Table { rows: targets.rows, cols: l, data: pred.iter().map(|v| v * scale).collect() };
    let checkpoint = StageCheckpoint {
        stage,
        spec: spec.clone(),
        model: config,
        standardizer,
        target_scale: scale,
        epochs: losses.len(),
        losses,
    };
    Ok(TrainedStage { checkpoint, model, predictions })
}

impl TrainedStage {
    /// Writes `stage<k>.ckpt.json` and the `stage<k>` parameter blob.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let name = format!("stage{}", self.checkpoint.stage);
        io::write_json(&dir.join(format!("{name}.ckpt.json")), &self.checkpoint)?;
        self.model.store.save(dir, &name)
    }

    /// Rebuilds a saved stage and predicts every sample of `inputs`.
    pub fn load(dir: &Path, stage: usize, inputs: &StageInputs, prev: Option<&Table>) -> Result<Self> {
        let name = format!("stage{stage}");
        let checkpoint: StageCheckpoint = io::read_json(&dir.join(format!("{name}.ckpt.json")))?;
        let mut model = StageModel::new(checkpoint.model.clone(), checkpoint.spec.training.seed)?;
        model.store.load_into(dir, &name)?;
        if checkpoint.standardizer.mean.len() != inputs.rows * inputs.cols {
            return Err(Error::Config(format!("{name}: checkpoint inputs do not match the dataset")));
        }
        let x = checkpoint.standardizer.apply(inputs);
        let scale = checkpoint.target_scale;
        let pred = predict_scaled(&model, &x, prev, scale)?;
        let l = model.config.output;
        let predictions = Table { rows: inputs.samples, cols: l, data: pred.iter().map(|v| v * scale).collect() };
        Ok(Self { checkpoint, model, predictions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::relative_l2;
    use crate::multistage::{InputSelector, TrainingConfig};

    fn spec(selector: InputSelector, dims: Option<(usize, usize)>, training: TrainingConfig) -> StageSpec {
        StageSpec { selector, dims, hidden: Some(16), training }
    }

    fn toy(samples: usize, rows: usize, cols: usize, l: usize, constant: bool) -> (StageInputs, Table) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        let data: Vec<f64> = (0..samples * rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let inputs = StageInputs { samples, rows, cols, data };
        let targets: Vec<f64> = (0..samples)
            .flat_map(|i| {
                let s = inputs.sample(i).iter().sum::<f64>();
                (0..l).map(move |j| if constant { 0.7 } else { 1.0 + 0.3 * s * (j as f64 + 1.0) / l as f64 }).collect::<Vec<_>>()
            })
            .collect();
        (inputs, Table { rows: samples, cols: l, data: targets })
    }

    fn mean_test_error(pred: &Table, target: &Table, range: std::ops::Range<usize>) -> f64 {
        range.clone().map(|i| relative_l2(pred.row(i), target.row(i)).unwrap()).sum::<f64>() / range.len() as f64
    }

    #[test]
    fn constant_targets_are_fitted() {
        let (x, y) = toy(40, 4, 3, 5, true);
        let t = TrainingConfig { batch_size: 8, ..Default::default() };
        let s = train_stage(0, &spec(InputSelector::AllBasisProjection, Some((3, 2)), t), &x, &y, 30, None, true).unwrap();
        let e = mean_test_error(&s.predictions, &y, 30..40);
        assert!(e < 1e-3, "{e} after {} epochs", s.checkpoint.epochs);
    }

    #[test]
    fn second_stage_starts_from_previous_prediction() {
        let (x, y) = toy(40, 1, 6, 4, false);
        let t = TrainingConfig { max_epochs: 30, patience: 10, batch_size: 8, ..Default::default() };
        let s1 = train_stage(0, &spec(InputSelector::SteadyFeature { index: 0 }, None, t), &x, &y, 30, None, false).unwrap();
        let untrained = TrainingConfig { max_epochs: 1, lr: 1e-300, ..t };
        let s2 = train_stage(
            1,
            &spec(InputSelector::SteadyFeature { index: 1 }, None, untrained),
            &x,
            &y,
            30,
            Some(&s1.predictions),
            false,
        )
        .unwrap();
        let (e1, e2) = (mean_test_error(&s1.predictions, &y, 30..40), mean_test_error(&s2.predictions, &y, 30..40));
        assert!((e1 - e2).abs() < 1e-12, "{e1} vs {e2}");
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_reproduce() {
        let (x, y) = toy(24, 3, 4, 3, false);
        let t = TrainingConfig { max_epochs: 20, patience: 5, batch_size: 5, seed: 9, ..Default::default() };
        let sp = spec(InputSelector::AllBasisProjection, Some((2, 3)), t);
        let a = train_stage(0, &sp, &x, &y, 18, None, true).unwrap();
        let b = train_stage(0, &sp, &x, &y, 18, None, true).unwrap();
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.checkpoint, b.checkpoint);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let c = TrainedStage::load(dir.path(), 0, &x, None).unwrap();
        assert_eq!(c.predictions, a.predictions);
        assert_eq!(c.checkpoint, a.checkpoint);
    }

    #[test]
    fn previous_prediction_is_required_exactly_from_stage_two() {
        let (x, y) = toy(10, 1, 2, 2, false);
        let sp = spec(InputSelector::SteadyFeature { index: 0 }, None, TrainingConfig { max_epochs: 1, ..Default::default() });
        assert!(train_stage(1, &sp, &x, &y, 8, None, false).is_err());
        assert!(train_stage(0, &sp, &x, &y, 8, Some(&y), false).is_err());
    }

    #[test]
    fn wide_r1_is_clipped_to_the_input() {
        let (x, _) = toy(2, 5, 4, 2, false);
        let sp = spec(InputSelector::AllBasisProjection, Some((3, 9)), TrainingConfig::default());
        match model_config(0, &sp, &x, 2, true).unwrap().backbone {
            Backbone::Attention(c) => assert_eq!((c.m1, c.r1), (3, 4)),
            other => panic!("{other:?}"),
        }
        let sp = spec(InputSelector::AllBasisProjection, Some((6, 2)), TrainingConfig::default());
        assert!(model_config(0, &sp, &x, 2, true).unwrap_err().is_config());
    }
}
