use std::fs;
use std::path::Path;
use std::process::Command;

use morebrac::pipeline::{emit_report, run_matrix, Ablation, Pipeline, RunConfig, Stage, StageStatus, Variant};
use morebrac::Error;

const TINY: &str = include_str!("fixtures/tiny.toml");

fn tiny() -> RunConfig {
    RunConfig::from_toml(TINY).unwrap()
}

fn pipeline(out: &Path) -> Pipeline {
    Pipeline::new(tiny(), out, 0, false).unwrap()
}

#[test]
fn stages_chain_and_skip_when_up_to_date() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path());
    let full = Variant::full();

    let err = p.run(Stage::TrainSim, &full).unwrap_err();
    match err {
        Error::MissingArtifact(path) => assert!(path.ends_with("seed-0/data/pretrain-random.manifest.json"), "{path:?}"),
        other => panic!("unexpected {other}"),
    }

    assert_eq!(p.run(Stage::GenerateData, &full).unwrap(), StageStatus::Ran);
    assert_eq!(p.run(Stage::GenerateData, &full).unwrap(), StageStatus::Skipped);
    assert_eq!(p.run(Stage::TrainSim, &full).unwrap(), StageStatus::Ran);
    assert_eq!(p.run(Stage::TrainSim, &full).unwrap(), StageStatus::Skipped);
    let forced = Pipeline { force: true, ..p.clone() };
    assert_eq!(forced.run(Stage::TrainSim, &full).unwrap(), StageStatus::Ran);

    assert!(matches!(p.run(Stage::Synthesize, &full), Err(Error::MissingArtifact(_))));
    p.run(Stage::TrainVae, &full).unwrap();
    p.run(Stage::Synthesize, &full).unwrap();

    let mut changed = tiny();
    changed.world_model.learning_rate = 5e-3;
    let stale = Pipeline::new(changed, dir.path(), 0, false).unwrap();
    assert!(matches!(stale.load_world_model(), Err(Error::ConfigHashMismatch { .. })));
    assert!(stale.load_vae().is_ok());

    let eval = p.run_all(&full).unwrap();
    assert!(eval.score.is_finite());
    assert_eq!(eval.returns.len(), 2);
    let metrics = fs::read_to_string(p.layout.metrics(&full)).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    let csv = fs::read_to_string(p.layout.variant_dir(&full).join("verdicts.csv")).unwrap();
    assert!(csv.starts_with("rollout,step,manifold_u,sensitivity_var,epistemic_var,decision"));
}

#[test]
fn identical_configs_give_identical_metrics() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let v = Variant::full();
    pipeline(a.path()).run_all(&v).unwrap();
    pipeline(b.path()).run_all(&v).unwrap();
    let read = |d: &Path| fs::read(pipeline(d).layout.metrics(&v)).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn matrix_summarizes_variants_and_reports_render() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let variants = cfg.matrix_variants();
    let report = run_matrix(&cfg, dir.path(), &[0], &variants, false).unwrap();
    assert_eq!(report.failures(), 0);
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.rows[0].delta_pct, Some(0.0));
    assert_eq!(report.rows[0].std, Some(0.0));
    let tsv = fs::read_to_string(dir.path().join("summary.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 3);

    let baseline = Variant::single(Ablation::NoSynthesis);
    let layout = morebrac::pipeline::Layout::new(dir.path(), 0);
    assert!(fs::read_to_string(layout.metrics(&baseline)).unwrap().contains("\"buffer\":[2000,0,"));

    let first = emit_report(dir.path()).unwrap();
    assert_eq!(first.runs, 2);
    assert_eq!(first.skipped, 0);
    let chart = dir.path().join("report/seed-0-full.svg");
    let bytes = fs::read(&chart).unwrap();
    emit_report(dir.path()).unwrap();
    assert_eq!(fs::read(&chart).unwrap(), bytes);

    let m = layout.metrics(&Variant::full());
    let mut text = fs::read_to_string(&m).unwrap();
    text.push_str("garbage\n");
    fs::write(&m, text).unwrap();
    assert_eq!(emit_report(dir.path()).unwrap().skipped, 1);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_morebrac"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let code = |args: &[&str]| cli().args(args).output().unwrap().status.code();

    assert_eq!(code(&["bogus-stage", "--config", "x"]), Some(1));
    assert_eq!(code(&["run"]), Some(1));
    assert_eq!(code(&["run", "--config", "/nonexistent.toml"]), Some(1));
    assert_eq!(code(&["train-sim", "--config", cfg.to_str().unwrap(), "--ablate", "no-such"]), Some(1));
    assert_eq!(code(&["train-sim", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), Some(2));
    let gen = cli()
        .args(["generate-data", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(gen.status.code(), Some(0));
    let again = cli()
        .args(["generate-data", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&again.stderr).contains("up to date"));
    assert_eq!(code(&["report", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), Some(0));
}
