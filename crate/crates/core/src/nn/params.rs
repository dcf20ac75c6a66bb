use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::nn::Tensor;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Named trainable tensors with their gradient accumulators.
///
/// Initialization draws from one seeded stream in creation order, so a model
/// built twice with the same seed is bit-identical.
#[derive(Debug, Clone)]
pub struct ParamStore {
    info: Vec<ParamInfo>,
    values: Vec<Tensor>,
    grads: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self { info: Vec::new(), values: Vec::new(), grads: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(self.find(name).is_none(), "duplicate parameter {name}");
        self.info.push(ParamInfo { name: name.to_string(), rows: value.rows, cols: value.cols });
        self.grads.push(vec![0.0; value.len()]);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// `U(-1/√fan_in, 1/√fan_in)` entries.
    pub fn add_uniform(&mut self, name: &str, rows: usize, cols: usize, fan_in: usize) -> ParamId {
        let a = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.random_range(-a..a)).collect();
        self.add(name, Tensor::new(rows, cols, data))
    }

    /// Weight `fan_in × fan_out` with fan-in init and a zero `1 × fan_out` bias.
    pub fn add_dense(&mut self, name: &str, fan_in: usize, fan_out: usize) -> (ParamId, ParamId) {
        let w = self.add_uniform(&format!("{name}.w"), fan_in, fan_out, fan_in);
        let b = self.add(&format!("{name}.b"), Tensor::zeros(1, fan_out));
        (w, b)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.info.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.info[id.0].name
    }

    pub fn info(&self) -> &[ParamInfo] {
        &self.info
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Total number of scalar weights and biases.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// All values concatenated in creation order.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count() {
            return Err(Error::Shape(format!("{} parameter values for a model with {}", flat.len(), self.count())));
        }
        let mut off = 0;
        for t in &mut self.values {
            let n = t.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Writes `<name>.layout.json` and the `<name>` blob.
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_json(&dir.join(format!("{name}.layout.json")), &self.info)?;
        io::write_array(dir, name, &[self.count()], &self.flat(), "parameters", "")?;
        Ok(())
    }

    /// Loads values saved by [`ParamStore::save`] into a store of identical layout.
    pub fn load_into(&mut self, dir: &Path, name: &str) -> Result<()> {
        let info: Vec<ParamInfo> = io::read_json(&dir.join(format!("{name}.layout.json")))?;
        if info != self.info {
            return Err(Error::Config(format!("checkpoint {name} does not match the model layout")));
        }
        let (_, values) = io::read_array(dir, name)?;
        self.set_flat(&values)
    }
}
