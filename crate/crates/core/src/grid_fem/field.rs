use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_fem::MeshPair;
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// One value per fine node.
    Nodal,
    /// One value per fine element.
    Elemental,
}

impl FieldKind {
    fn tag(self) -> &'static str {
        match self {
            FieldKind::Nodal => "nodal",
            FieldKind::Elemental => "elemental",
        }
    }
}

/// Scalar field on the fine mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl Field {
    pub fn nodal(values: Vec<f64>) -> Self {
        Self { kind: FieldKind::Nodal, values }
    }

    pub fn elemental(values: Vec<f64>) -> Self {
        Self { kind: FieldKind::Elemental, values }
    }

    pub fn constant_elemental(mesh: &MeshPair, value: f64) -> Self {
        Self::elemental(vec![value; mesh.n_fine_elements()])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { kind: self.kind, values: self.values.iter().map(|v| v * c).collect() }
    }

    /// Checks that this is an elemental field matching `mesh` with strictly positive entries.
    pub fn check_positive_elemental(&self, mesh: &MeshPair) -> Result<()> {
        if self.kind != FieldKind::Elemental {
            return Err(Error::InvalidArgument("coefficient must be an elemental field".into()));
        }
        if self.values.len() != mesh.n_fine_elements() {
            return Err(Error::Shape(format!(
                "elemental field has {} entries, mesh has {} fine elements",
                self.values.len(),
                mesh.n_fine_elements()
            )));
        }
        for (index, &value) in self.values.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveCoefficient { index, value });
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        io::hash_f64s(&self.values)
    }

    pub fn save(&self, dir: &Path, name: &str, mesh: &MeshPair) -> Result<()> {
        io::write_array(dir, name, &[self.values.len()], &self.values, self.kind.tag(), &mesh.hash())?;
        Ok(())
    }

    /// Loads a field saved with [`Field::save`], checking it against `mesh`.
    pub fn load(dir: &Path, name: &str, mesh: &MeshPair) -> Result<Self> {
        let (side, values) = io::read_array(dir, name)?;
        let kind = match side.kind.as_str() {
            "nodal" => FieldKind::Nodal,
            "elemental" => FieldKind::Elemental,
            other => return Err(Error::Config(format!("unknown field kind {other:?}"))),
        };
        let expected = match kind {
            FieldKind::Nodal => mesh.n_fine_nodes(),
            FieldKind::Elemental => mesh.n_fine_elements(),
        };
        if values.len() != expected {
            return Err(Error::Shape(format!("field {name} has {} values, mesh expects {expected}", values.len())));
        }
        Ok(Self { kind, values })
    }
}

/// Values at `m0` time levels `t_i = i·T/m0`, `i = 1..=m0`, on every fine node.
///
/// Row-major `m0 × n`; the state at `t_0` is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub m0: usize,
    pub t_final: f64,
    pub n: usize,
    pub data: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(m0: usize, t_final: f64, n: usize) -> Self {
        Self { m0, t_final, n, data: vec![0.0; m0 * n] }
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.m0 as f64
    }

    /// Time of row `i` (zero-based), i.e. `t_{i+1}`.
    pub fn time(&self, row: usize) -> f64 {
        (row + 1) as f64 * self.t_final / self.m0 as f64
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.m0 - 1)
    }

    pub fn save(&self, dir: &Path, name: &str, mesh: &MeshPair) -> Result<()> {
        io::write_array(dir, name, &[self.m0, self.n], &self.data, "trajectory", &mesh.hash())?;
        Ok(())
    }

    pub fn load(dir: &Path, name: &str, t_final: f64) -> Result<Self> {
        let (side, data) = io::read_array(dir, name)?;
        if side.shape.len() != 2 {
            return Err(Error::Shape(format!("trajectory {name} must be 2-d, got {:?}", side.shape)));
        }
        Ok(Self { m0: side.shape[0], t_final, n: side.shape[1], data })
    }
}
