//! Command-line driver. Every subcommand reads one JSON configuration
//! document (all sections optional) and works inside a workspace directory:
//!
//! ```text
//! <workspace>/basis/<key>/        multiscale basis + permeability
//! <workspace>/data/<problem>-<key>/  generated samples
//! <workspace>/runs/<config hash>/   checkpoints, reports, run manifest
//! ```
//!
//! Keys are hashes of everything an artifact depends on, so a changed input
//! produces a new directory instead of overwriting an old one.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mstage::grid_fem::{MeshPair, MeshSpec};
use mstage::io;
use mstage::msreduction::{
    auxiliary_spectrum, cem_basis, constraint_residual, kappa_tilde, partition_of_unity, MultiscaleBasis,
    DEFAULT_MODES_PER_ELEMENT, DEFAULT_OVERSAMPLING,
};
use mstage::multistage::{evaluate_checkpoints, run_pipeline, EvalReport, InputSelector, PipelineConfig, TrainingConfig};
use mstage::problems::{generate_dataset, load_or_generate_kappa, DatasetRequest, KappaSpec, ProblemKind, SampleSet, TimeSettings};
use mstage::{Error, Result};

/// Layout version recorded in every manifest written by this tool.
pub const WORKSPACE_VERSION: u32 = 1;

pub const WORKSPACE_ENV: &str = "MSTAGE_WORKSPACE";

#[derive(Debug, Parser)]
#[command(name = "mstage", version, about = "Multiscale reduced-order data, staged training and reports")]
pub struct Cli {
    /// JSON configuration document.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Workspace directory.
    #[arg(long, global = true, env = WORKSPACE_ENV, default_value = "workspace")]
    pub workspace: PathBuf,
    /// Dataset seed (gen-data) or base training seed (train).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sample generation; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub problem: Option<ProblemArg>,
    /// Number of samples (three quarters train, the rest test).
    #[arg(long, global = true)]
    pub count: Option<usize>,
    /// Pool size of every max-pool stage.
    #[arg(long, global = true)]
    pub pool: Option<usize>,
    /// Pool stride of every max-pool stage.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Oversampling layers of the basis.
    #[arg(long, global = true)]
    pub ell: Option<usize>,
    /// Output dimensions `m1,r1` of every attention stage.
    #[arg(long, global = true, value_parser = parse_dims)]
    pub dims: Option<(usize, usize)>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Linear,
    Nonlinear,
    Steady,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Linear => ProblemKind::Linear,
            ProblemArg::Nonlinear => ProblemKind::Nonlinear,
            ProblemArg::Steady => ProblemKind::Steady,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Md,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print mesh sizes.
    MeshInfo,
    /// Build (or reuse) the multiscale basis.
    BuildBasis,
    /// Generate a dataset.
    GenData,
    /// Train the staged pipeline and write checkpoints and reports.
    Train,
    /// Recompute the report of a finished run from its checkpoints.
    Eval,
    /// Print the report of a finished run.
    Report {
        #[arg(long, value_enum, default_value = "md")]
        format: ReportFormat,
    },
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected m1,r1")?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub coarse: usize,
    pub refinement: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self { coarse: 10, refinement: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    pub modes_per_element: usize,
    pub ell: usize,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self { modes_per_element: DEFAULT_MODES_PER_ELEMENT, ell: DEFAULT_OVERSAMPLING }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub problem: ProblemKind,
    pub count: usize,
    pub seed: u64,
    pub workers: usize,
    pub time: TimeSettings,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { problem: ProblemKind::Linear, count: 1600, seed: 7, workers: 0, time: TimeSettings::default() }
    }
}

/// The whole configuration document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub kappa: KappaSpec,
    pub basis: BasisSection,
    pub data: DataSection,
    pub train: Option<PipelineConfig>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies command-line overrides; flags win over the file.
    pub fn apply_overrides(&mut self, cli: &Cli) {
        if let Some(p) = cli.problem {
            self.data.problem = p.into();
        }
        if let Some(c) = cli.count {
            self.data.count = c;
        }
        if let Some(w) = cli.workers {
            self.data.workers = w;
        }
        if let Some(e) = cli.ell {
            self.basis.ell = e;
        }
        let training_seed = matches!(cli.command, Command::Train);
        if let (Some(s), false) = (cli.seed, training_seed) {
            self.data.seed = s;
        }
        if let Some(train) = &mut self.train {
            for (k, st) in train.stages.iter_mut().enumerate() {
                if let (Some(s), true) = (cli.seed, training_seed) {
                    st.training.seed = s + k as u64;
                }
                if let Some(d) = cli.dims {
                    if st.selector.is_time_dependent() {
                        st.dims = Some(d);
                    }
                }
                if let InputSelector::MaxPool { pool, stride } = &mut st.selector {
                    *pool = cli.pool.unwrap_or(*pool);
                    *stride = cli.stride.unwrap_or(*stride);
                }
            }
        }
    }

    pub fn mesh(&self) -> Result<MeshPair> {
        MeshSpec { coarse_cells_per_side: self.mesh.coarse, refinement: self.mesh.refinement }
            .build()
            .map_err(|e| Error::Config(format!("mesh: {e}")))
    }

    /// Stages to train; a missing `train` section gives the default preset
    /// for the configured problem.
    pub fn pipeline(&self) -> PipelineConfig {
        self.train.clone().unwrap_or_else(|| match self.data.problem {
            ProblemKind::Steady => PipelineConfig::steady_two_stage(false, TrainingConfig::default()),
            p => PipelineConfig::decoupled(p, (30, 10), TrainingConfig::default()),
        })
    }
}

fn short(hash: String) -> String {
    hash[..16].to_string()
}

/// Hash naming the basis directory.
pub fn basis_key(cfg: &RunConfig, mesh: &MeshPair, kappa_hash: &str) -> String {
    short(io::hash_json(&(mesh.spec(), kappa_hash, &cfg.basis)))
}

pub fn data_key(cfg: &RunConfig, mesh: &MeshPair, basis_key: Option<&str>) -> String {
    let d = &cfg.data;
    let time = d.problem.is_time_dependent().then_some(d.time);
    short(io::hash_json(&(d.problem, d.count, d.seed, mesh.spec(), basis_key, time)))
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    workspace_version: u32,
    tool_version: String,
    config_hash: String,
    dataset: PathBuf,
    basis: Option<PathBuf>,
    pipeline: PipelineConfig,
    seeds: Vec<u64>,
}

struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn basis_dir(&self, key: &str) -> PathBuf {
        self.root.join("basis").join(key)
    }

    fn data_dir(&self, problem: ProblemKind, key: &str) -> PathBuf {
        self.root.join("data").join(format!("{problem}-{key}"))
    }

    fn run_dir(&self, hash: &str) -> PathBuf {
        self.root.join("runs").join(hash)
    }
}

struct Session<'a> {
    cfg: RunConfig,
    ws: Workspace,
    mesh: MeshPair,
    out: &'a mut dyn std::io::Write,
}

impl Session<'_> {
    fn say(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.out, "{msg}");
    }

    fn kappa_hash(&self) -> Result<String> {
        Ok(load_or_generate_kappa(&self.cfg.kappa, &self.mesh)?.hash())
    }

    /// Directory of the basis for the current configuration, if time-dependent.
    fn basis_location(&self) -> Result<Option<(String, PathBuf)>> {
        if !self.cfg.data.problem.is_time_dependent() {
            return Ok(None);
        }
        let key = basis_key(&self.cfg, &self.mesh, &self.kappa_hash()?);
        let dir = self.ws.basis_dir(&key);
        Ok(Some((key, dir)))
    }

    fn load_basis(&self) -> Result<Option<(String, MultiscaleBasis)>> {
        match self.basis_location()? {
            None => Ok(None),
            Some((key, dir)) => match MultiscaleBasis::load(&dir, &self.mesh) {
                Ok(b) => Ok(Some((key, b))),
                Err(Error::NotFound(_)) => Err(Error::Config(format!(
                    "basis not found in {}; run build-basis with the same configuration first",
                    dir.display()
                ))),
                Err(e) => Err(e),
            },
        }
    }

    fn dataset_dir(&self) -> Result<PathBuf> {
        let key = self.basis_location()?.map(|(k, _)| k);
        let dk = data_key(&self.cfg, &self.mesh, key.as_deref());
        Ok(self.ws.data_dir(self.cfg.data.problem, &dk))
    }

    fn mesh_info(&mut self) -> Result<()> {
        let m = &self.mesh;
        let lines = [
            format!("coarse elements: {} ({} per side, H = {})", m.n_coarse_elements(), m.coarse_cells_per_side(), m.coarse_h()),
            format!("fine elements:   {} (refinement {}, h = {})", m.n_fine_elements(), m.refinement(), m.fine_h()),
            format!("fine nodes:      {}", m.n_fine_nodes()),
            format!("basis functions: {}", m.n_coarse_elements() * self.cfg.basis.modes_per_element),
            format!("mesh hash:       {}", m.hash()),
        ];
        for l in lines {
            self.say(l);
        }
        Ok(())
    }

    fn build_basis(&mut self) -> Result<()> {
        let kappa = load_or_generate_kappa(&self.cfg.kappa, &self.mesh)?;
        let key = basis_key(&self.cfg, &self.mesh, &kappa.hash());
        let dir = self.ws.basis_dir(&key);
        if let Ok(existing) = MultiscaleBasis::load(&dir, &self.mesh) {
            if existing.kappa_hash == kappa.hash() {
                self.say(format!("cache hit: basis {key} already built in {}", dir.display()));
                return Ok(());
            }
        }
        let b = &self.cfg.basis;
        let chi = partition_of_unity(&self.mesh);
        let kt = kappa_tilde(&self.mesh, &kappa, &chi)?;
        let aux = auxiliary_spectrum(&self.mesh, &kappa, &kt, b.modes_per_element)?;
        let basis = cem_basis(&self.mesh, &kappa, &aux, b.ell)?;
        let residual = constraint_residual(&basis, &aux);
        kappa.save(&dir, "kappa", &self.mesh)?;
        basis.save(&dir)?;
        self.say(format!(
            "built basis {key}: {} functions, constraint residual {residual:.3e}, in {}",
            basis.n_cols(),
            dir.display()
        ));
        Ok(())
    }

    fn gen_data(&mut self) -> Result<()> {
        let dir = self.dataset_dir()?;
        if dir.join("manifest.json").exists() {
            SampleSet::load(&dir)?;
            self.say(format!("cache hit: dataset already generated in {}", dir.display()));
            return Ok(());
        }
        let basis = self.load_basis()?;
        let kappa = match self.cfg.data.problem.is_time_dependent() {
            true => Some(load_or_generate_kappa(&self.cfg.kappa, &self.mesh)?),
            false => None,
        };
        let d = &self.cfg.data;
        let set = generate_dataset(&DatasetRequest {
            problem: d.problem,
            count: d.count,
            seed: d.seed,
            mesh: &self.mesh,
            kappa: kappa.as_ref(),
            basis: basis.as_ref().map(|(_, b)| b),
            time: d.time,
            workers: d.workers,
        })?;
        set.save(&dir)?;
        self.say(format!(
            "generated {} {} samples ({} train / {} test) in {}",
            set.len(),
            d.problem,
            set.manifest.n_train,
            set.manifest.n_test,
            dir.display()
        ));
        Ok(())
    }

    fn load_dataset(&self) -> Result<(PathBuf, SampleSet)> {
        let dir = self.dataset_dir()?;
        let set = SampleSet::load(&dir)?;
        Ok((dir, set))
    }

    fn train(&mut self) -> Result<()> {
        let pipeline = self.cfg.pipeline();
        let (data_dir, set) = self.load_dataset()?;
        let basis = self.load_basis()?;
        let run = run_pipeline(&pipeline, &set, &self.mesh, basis.as_ref().map(|(_, b)| b))?;
        let dir = self.ws.run_dir(&run.report.config_hash);
        run.save(&dir)?;
        let manifest = RunManifest {
            workspace_version: WORKSPACE_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: run.report.config_hash.clone(),
            dataset: data_dir,
            basis: self.basis_location()?.map(|(_, d)| d),
            seeds: pipeline.stages.iter().map(|s| s.training.seed).collect(),
            pipeline,
        };
        io::write_json(&dir.join("run.json"), &manifest)?;
        self.say(run.report.to_markdown());
        self.say(format!("run written to {}", dir.display()));
        Ok(())
    }

    fn run_dir(&self) -> Result<(PathBuf, SampleSet)> {
        let (_, set) = self.load_dataset()?;
        let hash = mstage::multistage::config_hash(&self.cfg.pipeline(), &set);
        let dir = self.ws.run_dir(&hash);
        if !dir.join("report.json").exists() {
            return Err(Error::Config(format!("no finished run in {}; run train first", dir.display())));
        }
        Ok((dir, set))
    }

    fn eval(&mut self) -> Result<()> {
        let (dir, set) = self.run_dir()?;
        let basis = self.load_basis()?;
        let run = evaluate_checkpoints(&self.cfg.pipeline(), &set, &self.mesh, basis.as_ref().map(|(_, b)| b), &dir)?;
        let persisted: EvalReport = io::read_json(&dir.join("report.json"))?;
        let fresh = serde_json::to_string(&run.report).expect("report serializes");
        let old = serde_json::to_string(&persisted).expect("report serializes");
        self.say(run.report.to_markdown());
        if fresh != old {
            return Err(Error::NonFinite(format!("recomputed report differs from {}", dir.join("report.json").display())));
        }
        self.say(format!("report reproduced exactly from the checkpoints in {}", dir.display()));
        Ok(())
    }

    fn report(&mut self, format: ReportFormat) -> Result<()> {
        let (dir, _) = self.run_dir()?;
        let r: EvalReport = io::read_json(&dir.join("report.json"))?;
        let text = match format {
            ReportFormat::Md => r.to_markdown(),
            ReportFormat::Csv => r.to_csv(),
            ReportFormat::Json => serde_json::to_string_pretty(&r).expect("report serializes"),
        };
        let _ = write!(self.out, "{text}");
        Ok(())
    }
}

/// Runs one invocation and returns the process exit status: 0 on success,
/// 2 for configuration errors, 1 for numerical failures.
pub fn dispatch<I, T>(argv: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let code = match e.downcast_ref::<Error>() {
                Some(inner) if inner.is_config() => 2,
                Some(_) => 1,
                None => 2,
            };
            let _ = writeln!(err, "error: {e:#}");
            code
        }
    }
}

fn run(cli: &Cli, out: &mut dyn std::io::Write) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_overrides(cli);
    if let Some(train) = &cfg.train {
        if train.problem != cfg.data.problem {
            return Err(Error::Config(format!(
                "train section is for the {} problem but data.problem is {}",
                train.problem, cfg.data.problem
            ))
            .into());
        }
    }
    let mesh = cfg.mesh()?;
    let mut ctx = Session { cfg, ws: Workspace { root: cli.workspace.clone() }, mesh, out };
    let what = match &cli.command {
        Command::MeshInfo => ctx.mesh_info(),
        Command::BuildBasis => ctx.build_basis(),
        Command::GenData => ctx.gen_data(),
        Command::Train => ctx.train(),
        Command::Eval => ctx.eval(),
        Command::Report { format } => ctx.report(*format),
    };
    what.with_context(|| format!("{:?} failed", cli.command).to_lowercase())
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book {}
