use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_fem::MeshPair;
use crate::msreduction::{project_source, MultiscaleBasis};
use crate::multistage::InputSelector;
use crate::nn::Tensor;
use crate::problems::{max_pool_reduce, node_regions, source_from_regions, SampleSet};

/// Maps one sample's source matrix to its reduced stage input.
type Reducer<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a>;

/// Reduced inputs of every sample; sample `i` is the `rows × cols` block `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInputs {
    pub samples: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl StageInputs {
    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[i * n..(i + 1) * n]
    }

    /// Samples `idx` stacked into one `(|idx|·rows) × cols` tensor.
    pub fn gather(&self, idx: &[usize]) -> Tensor {
        let n = self.rows * self.cols;
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(self.sample(i));
        }
        Tensor::new(idx.len() * self.rows, self.cols, data)
    }
}

/// Builds the stage inputs selected by `selector`.
///
/// Time-dependent selectors rebuild each source matrix from its stored offsets.
pub fn build_inputs(selector: InputSelector, set: &SampleSet, mesh: &MeshPair, basis: Option<&MultiscaleBasis>) -> Result<StageInputs> {
    let count = set.len();
    let steady = |name: &str| -> Result<StageInputs> {
        let t = set.input(name)?;
        Ok(StageInputs { samples: count, rows: 1, cols: t.cols, data: t.data.clone() })
    };
    match selector {
        InputSelector::SteadyFeature { index } => steady(&format!("f{index}")),
        InputSelector::SteadyPooledKappa => steady("pooled_kappa"),
        InputSelector::AllBasisProjection | InputSelector::BasisIndexProjection { .. } | InputSelector::MaxPool { .. } => {
            let time = set
                .manifest
                .time
                .ok_or_else(|| Error::Config(format!("selector {selector} needs a time-dependent dataset")))?;
            let m0 = time.m0;
            let regions = node_regions(mesh);
            let (cols, reduce): (usize, Reducer<'_>) = match selector {
                InputSelector::MaxPool { pool, stride } => {
                    let side = mesh.fine_side();
                    let w = crate::problems::pool_windows(side, pool, stride)?.len();
                    (w * w, Box::new(move |f0: &[f64]| max_pool_reduce(f0, m0, side, pool, stride)))
                }
                _ => {
                    let basis = basis.ok_or_else(|| Error::Config(format!("selector {selector} needs a basis")))?;
                    if basis.mesh != mesh.spec() {
                        return Err(Error::Config("basis was built for a different mesh".into()));
                    }
                    let columns = match selector {
                        InputSelector::BasisIndexProjection { index } if index < basis.modes_per_element => {
                            basis.columns_for_mode(index)
                        }
                        InputSelector::BasisIndexProjection { index } => {
                            return Err(Error::Config(format!(
                                "mode index {index} out of range (basis has {} per element)",
                                basis.modes_per_element
                            )))
                        }
                        _ => basis.all_columns(),
                    };
                    (columns.len(), Box::new(move |f0: &[f64]| project_source(f0, m0, basis, &columns)))
                }
            };
            let blocks: Vec<Vec<f64>> = (0..count)
                .into_par_iter()
                .map(|i| {
                    let f0 = source_from_regions(&regions, &set.xi(i)?, m0, time.t_final);
                    reduce(&f0.data)
                })
                .collect::<Result<_>>()?;
            Ok(StageInputs { samples: count, rows: m0, cols, data: blocks.concat() })
        }
    }
}

/// Per-entry affine standardization fitted on the training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Entries whose spread is below this fraction of the largest spread are only centred.
pub const STD_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn fit(inputs: &StageInputs, train: std::ops::Range<usize>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("no training samples to standardize with".into()));
        }
        let n = inputs.rows * inputs.cols;
        let mut mean = vec![0.0; n];
        for i in train.clone() {
            mean.iter_mut().zip(inputs.sample(i)).for_each(|(m, v)| *m += v);
        }
        let count = train.len() as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; n];
        for i in train {
            for ((s, v), m) in var.iter_mut().zip(inputs.sample(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / count).sqrt()).collect();
        let top = std.iter().fold(0.0f64, |a, &b| a.max(b));
        let scale = std.iter().map(|&s| if s > STD_FLOOR * top && s > 0.0 { s } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, inputs: &StageInputs) -> StageInputs {
        let n = self.mean.len();
        let mut out = inputs.clone();
        for block in out.data.chunks_exact_mut(n) {
            for ((v, m), s) in block.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}
