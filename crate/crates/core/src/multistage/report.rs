use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ProblemKind;

/// Test error increase (relative) above which a stage is flagged as an
/// optimization failure.
pub const REGRESSION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// One-based stage number.
    pub stage: usize,
    pub selector: String,
    pub m1: Option<usize>,
    pub r1: Option<usize>,
    /// Mean relative l2 error of the coarse prediction.
    pub train_err: f64,
    pub test_err: f64,
    /// Mean relative L2 error of the reconstructed fine field over the test set.
    pub fine_l2: Option<f64>,
    pub params: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Test error above the previous stage's by more than [`REGRESSION_TOLERANCE`].
    pub regressed: bool,
}

/// One parsed CSV stage row: stage, selector, m1, r1, train error, test
/// error, fine L2 error, parameters.
pub type CsvStageRow = (usize, String, Option<usize>, Option<usize>, f64, f64, Option<f64>, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub problem: ProblemKind,
    pub config_hash: String,
    pub dataset_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub mean_baseline: f64,
    /// Fine error of the exact coarse projection, averaged over the test set.
    pub computed_fine_l2: Option<f64>,
    /// Test samples on which the final learned fine error is not below the
    /// projection error, out of all test samples.
    pub learned_ge_computed: Option<(usize, usize)>,
    pub stages: Vec<StageReport>,
    pub total_params: usize,
}

const CSV_HEADER: &str = "stage,selector,m1,r1,train_err,test_err,fine_L2,params";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

impl EvalReport {
    /// One row per stage. Floats use the shortest representation that parses
    /// back to the same value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.stages {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.stage,
                r.selector,
                opt(&r.m1),
                opt(&r.r1),
                r.train_err,
                r.test_err,
                opt(&r.fine_l2),
                r.params
            );
        }
        s
    }

    /// Parses the stage rows written by [`EvalReport::to_csv`].
    pub fn stages_from_csv(csv: &str) -> Result<Vec<CsvStageRow>> {
        let mut lines = csv.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Config("report CSV has an unexpected header".into()));
        }
        let bad = |l: &str| Error::Config(format!("malformed report row {l:?}"));
        lines
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 8 {
                    return Err(bad(l));
                }
                let ou = |s: &str| if s.is_empty() { Ok(None) } else { s.parse().map(Some) };
                let of = |s: &str| if s.is_empty() { Ok(None) } else { s.parse().map(Some) };
                Ok((
                    f[0].parse().map_err(|_| bad(l))?,
                    f[1].to_string(),
                    ou(f[2]).map_err(|_| bad(l))?,
                    ou(f[3]).map_err(|_| bad(l))?,
                    f[4].parse().map_err(|_| bad(l))?,
                    f[5].parse().map_err(|_| bad(l))?,
                    of(f[6]).map_err(|_| bad(l))?,
                    f[7].parse().map_err(|_| bad(l))?,
                ))
            })
            .collect()
    }

    /// Table with stages as columns, in the layout of a results table.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} problem\n", self.problem);
        let _ = writeln!(s, "config `{}`, {} train / {} test samples\n", self.config_hash, self.n_train, self.n_test);
        let head: Vec<String> = self.stages.iter().map(|r| format!("Stage {}", r.stage)).collect();
        let _ = writeln!(s, "| | {} |", head.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(self.stages.len()));
        let row = |name: &str, f: &dyn Fn(&StageReport) -> String| {
            format!("| {name} | {} |\n", self.stages.iter().map(f).collect::<Vec<_>>().join(" | "))
        };
        s += &row("input", &|r| r.selector.clone());
        s += &row("(m1, r1)", &|r| match (r.m1, r.r1) {
            (Some(a), Some(b)) => format!("({a}, {b})"),
            _ => "-".into(),
        });
        s += &row("train error", &|r| format!("{:.5}", r.train_err));
        s += &row("test error", &|r| format!("{:.5}", r.test_err));
        if self.stages.iter().any(|r| r.fine_l2.is_some()) {
            s += &row("fine L2 error", &|r| r.fine_l2.map_or("-".into(), |v| format!("{v:.5}")));
        }
        s += &row("parameters", &|r| r.params.to_string());
        s += &row("epochs", &|r| r.epochs.to_string());
        let _ = writeln!(s, "\nmean baseline: {:.5}", self.mean_baseline);
        if let Some(c) = self.computed_fine_l2 {
            let _ = writeln!(s, "projection (computed) fine L2 error: {c:.5}");
        }
        if let Some((ok, n)) = self.learned_ge_computed {
            let _ = writeln!(s, "learned fine error >= projection error on {ok} of {n} test samples");
        }
        let flagged: Vec<String> = self.stages.iter().filter(|r| r.regressed).map(|r| r.stage.to_string()).collect();
        if !flagged.is_empty() {
            let _ = writeln!(s, "optimization failure flagged at stage(s) {}", flagged.join(", "));
        }
        let _ = writeln!(s, "total parameters: {}", self.total_params);
        s
    }

    pub fn test_errors(&self) -> Vec<f64> {
        self.stages.iter().map(|r| r.test_err).collect()
    }

    /// Test error strictly decreasing from stage to stage.
    pub fn strictly_improving(&self) -> bool {
        self.stages.windows(2).all(|w| w[1].test_err < w[0].test_err)
    }
}
