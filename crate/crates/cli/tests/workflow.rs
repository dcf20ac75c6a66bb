use std::path::Path;

use mstage::multistage::{EvalReport, PipelineConfig, TrainingConfig};
use mstage::problems::ProblemKind;
use mstage_cli::dispatch;
use serde_json::json;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(ws: &Path, args: &[&str]) -> Out {
    let mut argv = vec!["mstage".to_string(), "--workspace".into(), ws.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = dispatch(argv, &mut o, &mut e);
    Out { code, stdout: String::from_utf8(o).unwrap(), stderr: String::from_utf8(e).unwrap() }
}

fn quick_training() -> TrainingConfig {
    TrainingConfig { max_epochs: 4, batch_size: 4, ..TrainingConfig::default() }
}

/// Small mesh, few samples, a couple of epochs per stage.
fn write_config(dir: &Path, problem: ProblemKind, train: PipelineConfig) -> String {
    let cfg = json!({
        "mesh": { "coarse": 2, "refinement": 4 },
        "kappa": { "type": "synthetic", "background": 1.0, "high": 100.0, "seed": 3, "channels": 1,
                   "inclusion_density": 40, "inclusion_size": 1, "max_features_per_element": 2 },
        "basis": { "modes_per_element": 3, "ell": 1 },
        "data": { "problem": problem, "count": 8, "seed": 5, "workers": 1,
                  "time": { "m0": 7, "t_final": 1.0, "gamma": 1.0 } },
        "train": train,
    });
    let path = dir.join(format!("{problem}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn mesh_info_reports_sizes() {
    let ws = tempfile::tempdir().unwrap();
    let cfg = write_config(ws.path(), ProblemKind::Linear, PipelineConfig::coupled(ProblemKind::Linear, (5, 4), quick_training()));
    let out = run(ws.path(), &["--config", &cfg, "mesh-info"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    // 2×2 coarse cells refined 4 times: 8×8 fine elements, 81 nodes, 12 basis functions
    assert!(out.stdout.contains("coarse elements: 4"));
    assert!(out.stdout.contains("fine elements:   64"));
    assert!(out.stdout.contains("fine nodes:      81"));
    assert!(out.stdout.contains("basis functions: 12"));
}

#[test]
fn linear_workflow_end_to_end() {
    let ws = tempfile::tempdir().unwrap();
    let train = PipelineConfig::coupled(ProblemKind::Linear, (5, 4), quick_training());
    let cfg = write_config(ws.path(), ProblemKind::Linear, train);

    let first = run(ws.path(), &["--config", &cfg, "build-basis"]);
    assert_eq!(first.code, 0, "{}", first.stderr);
    assert!(first.stdout.contains("built basis"));
    let second = run(ws.path(), &["--config", &cfg, "build-basis"]);
    assert_eq!(second.code, 0, "{}", second.stderr);
    assert!(second.stdout.contains("cache hit"), "{}", second.stdout);

    let gen = run(ws.path(), &["--config", &cfg, "gen-data"]);
    assert_eq!(gen.code, 0, "{}", gen.stderr);
    assert!(gen.stdout.contains("6 train / 2 test"), "{}", gen.stdout);
    let again = run(ws.path(), &["--config", &cfg, "gen-data"]);
    assert!(again.stdout.contains("cache hit"));

    let trained = run(ws.path(), &["--config", &cfg, "train"]);
    assert_eq!(trained.code, 0, "{}", trained.stderr);
    assert!(trained.stdout.contains("Stage 3"));

    let eval = run(ws.path(), &["--config", &cfg, "eval"]);
    assert_eq!(eval.code, 0, "{}", eval.stderr);
    assert!(eval.stdout.contains("reproduced exactly"));

    let csv = run(ws.path(), &["--config", &cfg, "report", "--format", "csv"]);
    assert_eq!(csv.code, 0, "{}", csv.stderr);
    let rows = EvalReport::stages_from_csv(&csv.stdout).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.6.is_some()), "time-dependent runs report fine errors");

    let runs: Vec<_> = std::fs::read_dir(ws.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run_dir = runs[0].as_ref().unwrap().path();
    for f in ["run.json", "report.json", "report.csv", "report.md", "stage0.ckpt.json", "stage2.ckpt.json"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
}

#[test]
fn steady_workflow_needs_no_basis() {
    let ws = tempfile::tempdir().unwrap();
    let cfg = write_config(ws.path(), ProblemKind::Steady, PipelineConfig::steady_two_stage(true, quick_training()));
    assert_eq!(run(ws.path(), &["--config", &cfg, "gen-data"]).code, 0);
    let out = run(ws.path(), &["--config", &cfg, "train"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let md = run(ws.path(), &["--config", &cfg, "report"]);
    assert!(md.stdout.contains("# steady problem"));
    assert!(md.stdout.contains("pooled_kappa"));
}

#[test]
fn missing_dataset_is_a_config_error() {
    let ws = tempfile::tempdir().unwrap();
    let cfg = write_config(ws.path(), ProblemKind::Steady, PipelineConfig::steady_two_stage(false, quick_training()));
    let out = run(ws.path(), &["--config", &cfg, "train"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("dataset not found"), "{}", out.stderr);
}

#[test]
fn missing_basis_is_a_config_error() {
    let ws = tempfile::tempdir().unwrap();
    let cfg = write_config(ws.path(), ProblemKind::Linear, PipelineConfig::coupled(ProblemKind::Linear, (5, 4), quick_training()));
    let out = run(ws.path(), &["--config", &cfg, "gen-data"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("build-basis"), "{}", out.stderr);
}

#[test]
fn malformed_config_reports_position() {
    let ws = tempfile::tempdir().unwrap();
    let path = ws.path().join("bad.json");
    std::fs::write(&path, "{\n  \"mesh\": { \"coarse\": 2,, }\n}").unwrap();
    let out = run(ws.path(), &["--config", path.to_str().unwrap(), "mesh-info"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("line 2"), "{}", out.stderr);

    std::fs::write(&path, r#"{"mesh": {"coarse": 2, "refinment": 4}}"#).unwrap();
    let out = run(ws.path(), &["--config", path.to_str().unwrap(), "mesh-info"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("refinment"), "{}", out.stderr);
}

#[test]
fn invalid_stage_settings_are_config_errors() {
    let ws = tempfile::tempdir().unwrap();
    let mut train = PipelineConfig::coupled(ProblemKind::Linear, (5, 4), quick_training());
    // more output time rows than input rows violates the reduction
    train.stages[0].dims = Some((50, 4));
    let cfg = write_config(ws.path(), ProblemKind::Linear, train);
    assert_eq!(run(ws.path(), &["--config", &cfg, "build-basis"]).code, 0);
    assert_eq!(run(ws.path(), &["--config", &cfg, "gen-data"]).code, 0);
    let out = run(ws.path(), &["--config", &cfg, "train"]);
    assert_eq!(out.code, 2, "{}", out.stderr);
}

#[test]
fn flags_override_the_file() {
    let ws = tempfile::tempdir().unwrap();
    let cfg = write_config(ws.path(), ProblemKind::Steady, PipelineConfig::steady_two_stage(false, quick_training()));
    let out = run(ws.path(), &["--config", &cfg, "--count", "12", "--seed", "9", "gen-data"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("generated 12 steady samples (9 train / 3 test)"), "{}", out.stdout);
    let data: Vec<_> = std::fs::read_dir(ws.path().join("data")).unwrap().collect();
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data[0].as_ref().unwrap().path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
}

#[test]
fn help_and_unknown_commands() {
    let ws = tempfile::tempdir().unwrap();
    let help = run(ws.path(), &["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("build-basis") && help.stdout.contains("gen-data"));
    assert_eq!(run(ws.path(), &["frobnicate"]).code, 2);
    assert_eq!(run(ws.path(), &["--dims", "30", "mesh-info"]).code, 2);
}

#[test]
fn binary_exit_status_follows_error_class() {
    let ws = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_mstage");
    let ok = std::process::Command::new(bin).args(["mesh-info"]).env("MSTAGE_WORKSPACE", ws.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("fine nodes:      10201"));
    let bad = std::process::Command::new(bin)
        .args(["--problem", "steady", "train"])
        .env("MSTAGE_WORKSPACE", ws.path())
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
