use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MONTHS: &str =
    "january\nfebruary\nmarch\napril\nmay\njune\njuly\naugust\nseptember\noctober\nnovember\ndecember\n";

fn repgeom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repgeom"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn repgeom")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&repgeom(dir.path(), &[])), 1);
    assert_eq!(code(&repgeom(dir.path(), &["embed", "--bogus"])), 1);
    assert_eq!(
        code(&repgeom(
            dir.path(),
            &["build", "--stats", "x", "--out", "y", "--kind", "svd"]
        )),
        1
    );
    assert_eq!(code(&repgeom(dir.path(), &["--help"])), 0);
}

#[test]
fn missing_input_is_a_data_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = repgeom(dir.path(), &["embed", "--matrix", "absent.rgmx", "--out", "e.rgem"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("absent.rgmx"), "{}", stderr(&o));
    assert!(!dir.path().join("e.rgem").exists());
}

#[test]
fn corrupt_matrix_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.rgmx"), b"RGMX\x01garbage").unwrap();
    let o = repgeom(dir.path(), &["embed", "--matrix", "bad.rgmx", "--out", "e.rgem"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn invalid_parameter_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = repgeom(
        dir.path(),
        &["predict", "-L", "12", "--sigma", "-0.5", "--out", "p.csv"],
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn predict_writes_one_row_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = repgeom(
        dir.path(),
        &[
            "predict", "--bc", "open", "-L", "20", "--sigma", "0.3", "--modes", "5", "--out", "p.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("mu,kind,"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    // 20 site samples per row
    assert!(rows.iter().all(|r| r.split(',').count() == header.split(',').count()));
}

#[test]
fn combined_spectrum_matches_dense_diagonalization() {
    let dir = tempfile::tempdir().unwrap();
    let o = repgeom(
        dir.path(),
        &[
            "combined-spectrum",
            "--N",
            "24",
            "--attrs",
            "0.3,0.5,0.7",
            "--verify",
            "--out",
            "c.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 24 * 8);
    assert!(v["dense_max_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn stepwise_commands_recover_the_month_circle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("months.txt"), MONTHS).unwrap();
    let steps: [&[&str]; 6] = [
        &["synth", "--tokens", "3e5", "--seed", "11", "--out", "corpus.txt"],
        &["count", "--corpus", "corpus.txt", "--window", "32", "--out", "cooc.csv"],
        &["build", "--stats", "cooc.csv", "--full-vocabulary", "--out", "m.rgmx"],
        &["embed", "--matrix", "m.rgmx", "-d", "10", "--out", "e.rgem"],
        &[
            "project",
            "--embeddings",
            "e.rgem",
            "--words",
            "months.txt",
            "--out",
            "geo.csv",
        ],
        &[
            "fit-kernel",
            "--matrix",
            "m.rgmx",
            "--lattice",
            "periodic:months.txt",
            "--periodized",
            "--shift",
            "--out",
            "fit.json",
        ],
    ];
    for args in steps {
        let o = repgeom(d, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    assert!(d.join("corpus.txt.json").exists());
    assert!(d.join("cooc.csv.vocab.tsv").exists());

    // first two principal components put consecutive months at ~30° apart
    let geo = fs::read_to_string(d.join("geo.csv")).unwrap();
    let angles: Vec<f64> = geo
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').skip(1).take(2).map(|x| x.parse().unwrap()).collect();
            f[1].atan2(f[0])
        })
        .collect();
    assert_eq!(angles.len(), 12);
    let tau = std::f64::consts::TAU;
    let steps: Vec<f64> = (0..12)
        .map(|i| (angles[(i + 1) % 12] - angles[i]).rem_euclid(tau))
        .collect();
    let forward = steps.iter().all(|&s| s < tau / 4.0);
    let backward = steps.iter().all(|&s| s > 3.0 * tau / 4.0);
    assert!(forward || backward, "months not in circular order: {steps:?}");

    let fit: serde_json::Value = serde_json::from_slice(&fs::read(d.join("fit.json")).unwrap()).unwrap();
    let sigma = fit["sigma"].as_f64().unwrap();
    assert!(sigma > 0.1 && sigma < 0.6, "σ = {sigma}");
}

#[test]
fn run_honours_set_overrides_and_reports_stage_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.toml"),
        r#"stages = ["synth", "count", "build", "embed"]
seed = 5
out_dir = "out"

[limits]
full_vocabulary = true

[synth]
tokens = 1e5

[count]
window = 16
"#,
    )
    .unwrap();
    let o = repgeom(d, &["run", "--config", "run.toml", "--set", "embed.d=4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(d.join("out/manifest.json")).unwrap();
    assert!(manifest.contains("embedding.rgem"));
    assert!(!d.join("out/.staging").exists());

    let bad = repgeom(d, &["run", "--config", "run.toml", "--set", "embed.dd=4"]);
    assert_eq!(code(&bad), 1, "{}", stderr(&bad));

    // a word outside the vocabulary fails inside the project stage
    let o = repgeom(
        d,
        &[
            "run",
            "--config",
            "run.toml",
            "--set",
            r#"stages=["synth","count","build","embed","project"]"#,
            "--set",
            r#"project.words=["january","zzzz"]"#,
            "--set",
            r#"out_dir="out2""#,
        ],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("project") && err.contains("zzzz"), "{err}");
    assert!(err.contains("embedding.rgem"), "completed files not listed: {err}");
    assert!(d.join("out2/embedding.rgem").exists());
    assert!(!d.join("out2/geometry.csv").exists());
}
