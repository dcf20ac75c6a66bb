use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_fem::{solve_parabolic_nonlinear, solve_steady, Field, LinearHeatSolver, MeshPair, MeshSpec};
use crate::io;
use crate::metrics::relative_l2;
use crate::msreduction::{CoarseProjector, MultiscaleBasis};
use crate::problems::{max_pool_reduce, node_regions, sample_admissible_params, sample_xi, source_from_regions, steady_features, steady_target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Linear,
    Nonlinear,
    Steady,
}

impl ProblemKind {
    pub fn is_time_dependent(self) -> bool {
        !matches!(self, ProblemKind::Steady)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Linear => "linear",
            ProblemKind::Nonlinear => "nonlinear",
            ProblemKind::Steady => "steady",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ProblemKind::Linear),
            "nonlinear" => Ok(ProblemKind::Nonlinear),
            "steady" => Ok(ProblemKind::Steady),
            other => Err(Error::Config(format!("unknown problem {other:?} (expected linear, nonlinear or steady)"))),
        }
    }
}

/// Time discretization of the parabolic problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSettings {
    pub m0: usize,
    pub t_final: f64,
    /// Exponent of the nonlinear coefficient `κ e^{γu}`.
    pub gamma: f64,
}

impl Default for TimeSettings {
    fn default() -> Self {
        Self { m0: 31, t_final: PI, gamma: 20.0 }
    }
}

/// Row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Table {
    pub fn from_rows(cols: usize, rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged table");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Rows `range` as a new table.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self { rows: range.len(), cols: self.cols, data: self.data[range.start * self.cols..range.end * self.cols].to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub problem: ProblemKind,
    pub seed: u64,
    pub count: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub mesh: MeshSpec,
    pub mesh_hash: String,
    #[serde(default)]
    pub kappa_hash: Option<String>,
    #[serde(default)]
    pub basis_hash: Option<String>,
    #[serde(default)]
    pub time: Option<TimeSettings>,
    /// Pool size and stride of the pooled steady coefficient.
    #[serde(default)]
    pub pool: Option<usize>,
    /// Steady draws rejected for a nonpositive coefficient.
    #[serde(default)]
    pub rejected_draws: usize,
    /// SHA-256 of every persisted blob, by array name.
    #[serde(default)]
    pub arrays: BTreeMap<String, String>,
}

/// Generated samples: named inputs and targets plus the train/test split.
///
/// Time-dependent sets hold the source offsets `xi` (the source matrix is a
/// deterministic function of them), the coarse targets, and the terminal fine
/// solution of the test samples (`fine`, row `k` is sample `n_train + k`).
/// Steady sets hold `params`, the features `f0`, `f1`, `f2`, the pooled
/// coefficient `pooled_kappa`, and the coarse averages as targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub manifest: DatasetManifest,
    pub inputs: BTreeMap<String, Table>,
    pub targets: BTreeMap<String, Table>,
}

impl SampleSet {
    pub fn n_train(&self) -> usize {
        self.manifest.n_train
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.manifest.n_train
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.manifest.n_train..self.manifest.count
    }

    pub fn input(&self, name: &str) -> Result<&Table> {
        self.inputs
            .get(name)
            .ok_or_else(|| Error::Config(format!("dataset has no input {name:?} (problem {})", self.manifest.problem)))
    }

    pub fn target(&self, name: &str) -> Result<&Table> {
        self.targets
            .get(name)
            .ok_or_else(|| Error::Config(format!("dataset has no target {name:?} (problem {})", self.manifest.problem)))
    }

    /// Source offsets of sample `i` (time-dependent sets).
    pub fn xi(&self, i: usize) -> Result<[f64; 5]> {
        let row = self.input("xi")?.row(i);
        Ok(std::array::from_fn(|k| row[k]))
    }

    /// Writes `manifest.json`, `inputs_<name>.bin` and `targets_<name>.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut manifest = self.manifest.clone();
        manifest.arrays.clear();
        for (prefix, group) in [("inputs", &self.inputs), ("targets", &self.targets)] {
            for (name, t) in group {
                let file = format!("{prefix}_{name}");
                let side = io::write_array(dir, &file, &[t.rows, t.cols], &t.data, prefix, &manifest.mesh_hash)?;
                manifest.arrays.insert(file, side.sha256);
            }
        }
        io::write_json(&dir.join("manifest.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = match io::read_json(&dir.join("manifest.json")) {
            Err(Error::NotFound(_)) => return Err(Error::Config(format!("dataset not found in {}", dir.display()))),
            other => other?,
        };
        let mut inputs = BTreeMap::new();
        let mut targets = BTreeMap::new();
        for (file, sha) in &manifest.arrays {
            let (side, data) = io::read_array(dir, file)?;
            if &side.sha256 != sha || io::hash_f64s(&data) != *sha {
                return Err(Error::Config(format!("{file} in {} does not match the manifest", dir.display())));
            }
            let table = Table { rows: side.shape[0], cols: side.shape[1], data };
            if let Some(name) = file.strip_prefix("inputs_") {
                inputs.insert(name.to_string(), table);
            } else if let Some(name) = file.strip_prefix("targets_") {
                targets.insert(name.to_string(), table);
            }
        }
        Ok(Self { manifest, inputs, targets })
    }
}

/// Everything needed to generate a dataset.
#[derive(Debug, Clone, Copy)]
pub struct DatasetRequest<'a> {
    pub problem: ProblemKind,
    pub count: usize,
    pub seed: u64,
    pub mesh: &'a MeshPair,
    /// Permeability of the time-dependent problems.
    pub kappa: Option<&'a Field>,
    /// Basis defining the coarse targets of the time-dependent problems.
    pub basis: Option<&'a MultiscaleBasis>,
    pub time: TimeSettings,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

/// Number of training samples for `count` samples (first three quarters).
pub fn train_count(count: usize) -> usize {
    count * 3 / 4
}

/// Independent generator for sample `index`: the dataset seed selects the key,
/// the index selects the stream.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct SampleOut {
    inputs: Vec<(&'static str, Vec<f64>)>,
    coarse: Vec<f64>,
    fine: Option<Vec<f64>>,
    rejected: usize,
}

fn run_in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Draws, solves and reduces `count` samples. Output order is the sample
/// index regardless of which worker finished first.
pub fn generate_dataset(req: &DatasetRequest<'_>) -> Result<SampleSet> {
    let mesh = req.mesh;
    let n_train = train_count(req.count);
    let mut manifest = DatasetManifest {
        problem: req.problem,
        seed: req.seed,
        count: req.count,
        n_train,
        n_test: req.count - n_train,
        mesh: mesh.spec(),
        mesh_hash: mesh.hash(),
        kappa_hash: None,
        basis_hash: None,
        time: None,
        pool: None,
        rejected_draws: 0,
        arrays: BTreeMap::new(),
    };

    let samples: Vec<SampleOut> = if req.problem.is_time_dependent() {
        let kappa = req.kappa.ok_or_else(|| Error::Config("time-dependent problems need a permeability field".into()))?;
        let basis = req.basis.ok_or_else(|| Error::Config("time-dependent problems need a multiscale basis".into()))?;
        if basis.mesh != mesh.spec() {
            return Err(Error::Config("basis was built for a different mesh".into()));
        }
        kappa.check_positive_elemental(mesh)?;
        manifest.kappa_hash = Some(kappa.hash());
        manifest.basis_hash = Some(io::hash_f64s(&basis.r));
        manifest.time = Some(req.time);
        let TimeSettings { m0, t_final, gamma } = req.time;
        let projector = CoarseProjector::new(basis)?;
        let heat = match req.problem {
            ProblemKind::Linear => Some(LinearHeatSolver::new(mesh, kappa, m0, t_final)?),
            _ => None,
        };
        let regions = node_regions(mesh);
        let one = |index: usize| -> Result<SampleOut> {
            let mut rng = sample_rng(req.seed, index);
            let xi = sample_xi(&mut rng);
            let f0 = source_from_regions(&regions, &xi, m0, t_final);
            let traj = match &heat {
                Some(h) => h.run(&f0, None)?,
                None => solve_parabolic_nonlinear(mesh, kappa, gamma, &f0)?.0,
            };
            let u = traj.last().to_vec();
            let coarse = projector.coarse_target(basis, &u)?;
            Ok(SampleOut { inputs: vec![("xi", xi.to_vec())], coarse, fine: (index >= n_train).then_some(u), rejected: 0 })
        };
        run_in_pool(req.workers, || {
            (0..req.count)
                .into_par_iter()
                .map(|i| one(i).map_err(|e| Error::Sample { index: i, source: Box::new(e) }))
                .collect::<Result<Vec<_>>>()
        })??
    } else {
        let pool = mesh.refinement();
        manifest.pool = Some(pool);
        let ones = vec![1.0; mesh.n_fine_nodes()];
        let side = mesh.fine_side();
        let one = |index: usize| -> Result<SampleOut> {
            let mut rng = sample_rng(req.seed, index);
            let (p, rejected) = sample_admissible_params(&mut rng, mesh)?;
            let u = solve_steady(mesh, &p.kappa_field(mesh)?, &ones)?;
            let pooled = max_pool_reduce(&p.nodal_kappa(mesh), 1, side, pool, pool)?;
            Ok(SampleOut {
                inputs: vec![
                    ("params", p.p.to_vec()),
                    ("f0", steady_features(&p.nodal_component(mesh, 0), mesh)),
                    ("f1", steady_features(&p.nodal_component(mesh, 1), mesh)),
                    ("f2", steady_features(&p.nodal_component(mesh, 2), mesh)),
                    ("pooled_kappa", pooled),
                ],
                coarse: steady_target(&u, mesh),
                fine: None,
                rejected,
            })
        };
        run_in_pool(req.workers, || {
            (0..req.count)
                .into_par_iter()
                .map(|i| one(i).map_err(|e| Error::Sample { index: i, source: Box::new(e) }))
                .collect::<Result<Vec<_>>>()
        })??
    };

    manifest.rejected_draws = samples.iter().map(|s| s.rejected).sum();
    let mut inputs = BTreeMap::new();
    let mut targets = BTreeMap::new();
    if let Some(first) = samples.first() {
        for (k, (name, v)) in first.inputs.iter().enumerate() {
            let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.inputs[k].1.clone()).collect();
            inputs.insert(name.to_string(), Table::from_rows(v.len(), &rows));
        }
        let coarse: Vec<Vec<f64>> = samples.iter().map(|s| s.coarse.clone()).collect();
        targets.insert("coarse".to_string(), Table::from_rows(first.coarse.len(), &coarse));
        let fine: Vec<Vec<f64>> = samples.iter().filter_map(|s| s.fine.clone()).collect();
        if !fine.is_empty() {
            targets.insert("fine".to_string(), Table::from_rows(mesh.n_fine_nodes(), &fine));
        }
    }
    Ok(SampleSet { manifest, inputs, targets })
}

/// Mean relative l2 error of predicting the mean training target for every
/// test target. Test targets with zero norm are skipped.
pub fn mean_baseline(train: &Table, test: &Table) -> Result<f64> {
    if train.rows == 0 || test.rows == 0 {
        return Err(Error::InvalidArgument("mean baseline needs nonempty train and test sets".into()));
    }
    let mut mean = vec![0.0; train.cols];
    for i in 0..train.rows {
        for (m, v) in mean.iter_mut().zip(train.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train.rows as f64);
    let mut total = 0.0;
    let mut used = 0;
    for i in 0..test.rows {
        match relative_l2(&mean, test.row(i)) {
            Ok(e) => {
                total += e;
                used += 1;
            }
            Err(Error::InvalidArgument(_)) => log::warn!("test target {i} has zero norm; excluded from the mean baseline"),
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::InvalidArgument("every test target has zero norm".into()));
    }
    Ok(total / used as f64)
}
