use std::path::{Path, PathBuf};
use std::process::Command;

fn run(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_histoctx")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "histoctx {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn pipeline(root: &Path, config: &Path) {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = root.join("data");
    let models = root.join("models");
    let manifest = s(&data.join("manifest.json"));
    let cfg = s(config);
    run(&["synth", "--config", &cfg, "--out", &s(&data)]);
    run(&["train-region", "--config", &cfg, "--manifest", &manifest, "--out", &s(&models)]);
    run(&["train-cell", "--config", &cfg, "--manifest", &manifest, "--mode", "morphology", "--out", &s(&models)]);
    run(&[
        "predict",
        "--config",
        &cfg,
        "--manifest",
        &manifest,
        "--model",
        &s(&models.join("cell_model_morphology.json")),
        "--region-model",
        &s(&models.join("region_model.json")),
        "--mode",
        "voting",
        "--overlays",
        "--out",
        &s(&root.join("pred")),
    ]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"seed": 11, "synthetic": {"train_images": 3, "test_images": 2, "width": 320, "height": 320, "tiles_per_image": 2}}"#,
    )
    .unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    pipeline(&a, &config);
    pipeline(&b, &config);
    let fa = files(&a);
    let fb = files(&b);
    assert_eq!(fa.len(), fb.len());
    assert!(fa.iter().any(|p| p.ends_with("pred/report.json")));
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        if x.file_name().unwrap() == "timings.json" {
            continue;
        }
        assert!(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn mode_and_model_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_histoctx"))
        .args(["train-cell", "--manifest", "missing.json", "--mode", "voting", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("voting"));
}
