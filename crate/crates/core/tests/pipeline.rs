//! End-to-end runs of the staged pipeline on small synthetic corpora.

use std::fs;
use std::path::Path;

use repgeom::pipeline::{manifest_digest, read_manifest, run_pipeline, RunConfig};
use repgeom::Error;

fn config(out: &Path, seed: u64, extra: &str) -> RunConfig {
    let text = format!(
        r#"stages = ["synth", "count", "build", "embed", "project", "fit-kernel", "predict", "compare"]
seed = {seed}
out_dir = "{}"

[limits]
full_vocabulary = true

[synth]
tokens = 2e5

[count]
window = 32

[project]
words = ["january", "february", "march", "april", "may", "june",
         "july", "august", "september", "october", "november", "december"]

[fit_kernel]
lattice = ["january", "february", "march", "april", "may", "june",
           "july", "august", "september", "october", "november", "december"]

[predict]
modes = 11
{extra}
"#,
        out.display()
    );
    RunConfig::from_toml(&text, &[]).expect("valid config")
}

#[test]
fn identical_configs_give_byte_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_pipeline(&config(a.path(), 17, "")).unwrap();
    let mb = run_pipeline(&config(b.path(), 17, "")).unwrap();
    let (da, db) = (manifest_digest(&ma), manifest_digest(&mb));
    assert!(da.contains_key("comparison.json"), "{da:?}");
    assert_eq!(da, db);
    assert_eq!(ma.config_sha256, mb.config_sha256);
    assert_eq!(read_manifest(&a.path().join("manifest.json")).unwrap(), ma);
    for f in ma.files() {
        let bytes = fs::read(a.path().join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes, "{}", f.path);
    }
}

#[test]
fn seed_changes_the_corpus() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = "";
    let mut ca = config(a.path(), 1, extra);
    let mut cb = config(b.path(), 2, extra);
    ca.stages.truncate(1);
    cb.stages.truncate(1);
    let da = manifest_digest(&run_pipeline(&ca).unwrap());
    let db = manifest_digest(&run_pipeline(&cb).unwrap());
    assert_ne!(da["corpus.txt"], db["corpus.txt"]);
}

#[test]
fn outputs_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 4, "");
    let m = run_pipeline(&cfg).unwrap();
    assert_eq!(m.config_sha256, cfg.hash());
    for name in ["comparison.json", "kernel_fit.json", "synth.json"] {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(name)).unwrap()).unwrap();
        assert_eq!(v["config_sha256"].as_str(), Some(cfg.hash().as_str()), "{name}");
    }
    let cmp: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("comparison.json")).unwrap()).unwrap();
    let angle = cmp["top_pair_angle"].as_f64().expect("top pair compared").to_degrees();
    assert!(angle < 20.0, "top pair angle {angle}°");
}

#[test]
fn later_stages_resume_from_saved_files() {
    let dir = tempfile::tempdir().unwrap();
    let full = run_pipeline(&config(dir.path(), 9, "")).unwrap();
    let again = tempfile::tempdir().unwrap();
    let text = format!(
        r#"stages = ["embed"]
out_dir = "{}"
[embed]
matrix = "{}"
"#,
        again.path().display(),
        dir.path().join("matrix.rgmx").display()
    );
    let m = run_pipeline(&RunConfig::from_toml(&text, &[]).unwrap()).unwrap();
    assert_eq!(
        manifest_digest(&m)["embedding.rgem"],
        manifest_digest(&full)["embedding.rgem"]
    );
}

#[test]
fn missing_input_fails_before_anything_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = format!(
        r#"stages = ["count", "build"]
out_dir = "{}"
[limits]
full_vocabulary = true
[count]
corpus = "{}"
"#,
        out.display(),
        dir.path().join("no-such-corpus.txt").display()
    );
    let err = run_pipeline(&RunConfig::from_toml(&text, &[]).unwrap()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("no-such-corpus.txt"), "{err}");
    assert!(!out.exists());
}

#[test]
fn failing_stage_leaves_earlier_outputs_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 3, "");
    cfg.fit_kernel.lattice = vec!["january".into(), "smarch".into(), "march".into()];
    let err = run_pipeline(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, completed, .. } => {
            assert_eq!(stage, "fit-kernel");
            assert!(completed.iter().any(|(p, _)| p == "geometry.csv"), "{completed:?}");
        }
        other => panic!("expected a stage error, got {other}"),
    }
    assert!(err.to_string().contains("smarch"), "{err}");
    assert!(dir.path().join("geometry.csv").exists());
    assert!(!dir.path().join("kernel_fit.json").exists());
    assert!(!dir.path().join("manifest.json").exists());
    assert!(!dir.path().join(".staging").exists());
}

#[test]
fn overrides_reach_nested_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("stages = [\"synth\"]\nout_dir = \"{}\"\n", dir.path().display());
    let cfg = RunConfig::from_toml(&text, &["synth.helpers=7".into(), "seed=12".into()]).unwrap();
    assert_eq!(cfg.synth.helpers, 7);
    assert_eq!(cfg.seed, 12);
    let err = RunConfig::from_toml(&text, &["synth.nope=1".into()]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
