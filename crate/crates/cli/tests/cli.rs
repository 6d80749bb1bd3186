mod common;

use std::fs;

use common::*;
use tempfile::tempdir;
use uno3d::container::{load_role, load_tensor, peek_header, read_manifest, Dtype};
use uno3d::tensorcore::Tensor;

#[test]
fn geology_generation_is_reproducible() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_CONFIG);
    for out in ["a", "b"] {
        run_ok(&["gen-geology", "--config", s(&cfg), "--seed", "3", "--count", "3", "--out", s(&dir.path().join(out))]);
    }
    let a = snapshot(&dir.path().join("a"));
    assert_eq!(a.len(), 4);
    assert_eq!(a, snapshot(&dir.path().join("b")));

    run_ok(&["gen-geology", "--config", s(&cfg), "--seed", "4", "--count", "3", "--out", s(&dir.path().join("c"))]);
    assert_ne!(a, snapshot(&dir.path().join("c")));
}

#[test]
fn default_geology_is_full_size_single_precision() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("g");
    run_ok(&["gen-geology", "--out", s(&out)]);
    let m = read_manifest(&out).unwrap();
    assert_eq!(m.kind, "geology");
    assert_eq!(m.samples.len(), 1);
    let file = m.samples[0].file("vs").unwrap();
    assert_eq!(file.dtype, Dtype::F32);
    let vs: Tensor<f32> = load_role(&out, &m.samples[0], "vs").unwrap();
    assert_eq!(vs.shape(), &[64, 64, 64]);
    assert!(vs.min() >= 1071.0 && vs.max() <= 4500.0);
}

#[test]
fn zero_count_writes_an_empty_manifest() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("g");
    run_ok(&["gen-geology", "--count", "0", "--out", s(&out)]);
    let m = read_manifest(&out).unwrap();
    assert!(m.samples.is_empty() && m.failed.is_empty());
}

#[test]
fn simulation_of_a_missing_dataset_fails_cleanly() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("sim");
    let res = run(&["simulate", "--geology", s(&dir.path().join("nowhere")), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn configuration_errors_exit_with_usage() {
    let dir = tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[geology]\ngrid = [16, 16, 16]\nspeed = 3\n");
    let res = run(&["gen-geology", "--config", s(&bad), "--out", s(&dir.path().join("g"))]);
    assert_eq!(res.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("speed") && msg.contains("line 3"), "{msg}");

    let bad = write_config(dir.path(), "bad2.toml", "[training]\nbatch_size = 0\n");
    assert_eq!(run(&["gen-geology", "--config", s(&bad), "--out", s(&dir.path().join("g"))]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["gen-geology", "--workers", "0", "--out", s(&dir.path().join("g"))]).status.code(), Some(1));
}

#[test]
fn pipeline_round_trip_on_a_small_dataset() {
    let dir = tempdir().unwrap();
    let (_, sim) = small_dataset(dir.path(), 4, 21, 2);
    let m = read_manifest(&sim).unwrap();
    assert_eq!(m.kind, "simulation");
    assert_eq!(m.samples.len(), 4);
    let split = m.split.clone().unwrap();
    assert_eq!(split.train.len() + split.validation.len(), 4);
    let target: Tensor<f32> = load_role(&sim, &m.samples[0], "target").unwrap();
    assert_eq!(target.shape(), &[3, 16, 16, 32]);

    // a dataset compared with itself is a perfect match
    let self_eval = dir.path().join("self");
    run_ok(&["evaluate", "--pred", s(&sim), "--data", s(&sim), "--out", s(&self_eval)]);
    let summary = read_json(&self_eval.join("summary.json"));
    for c in ["E", "N", "Z"] {
        assert_eq!(summary["mean_mae"][c].as_f64(), Some(0.0));
    }
    assert_eq!(summary["envelope_above_6"].as_f64(), Some(1.0));
    assert_eq!(summary["phase_above_8"].as_f64(), Some(1.0));
    let gof = fs::read_to_string(self_eval.join("gof.csv")).unwrap();
    for line in gof.lines().skip(1).filter(|l| !l.contains("silent")) {
        let scores: Vec<f64> = line.rsplit(',').take(2).map(|v| v.parse().unwrap()).collect();
        assert_eq!(scores, [10.0, 10.0], "{line}");
    }

    let cfg = write_config(
        dir.path(),
        "train.toml",
        &format!("{SMALL_CONFIG}\n[training]\nepochs = 2\nbatch_size = 2\n"),
    );
    let run_dir = dir.path().join("run");
    run_ok(&["train", "--config", s(&cfg), "--data", s(&sim), "--out", s(&run_dir)]);
    let loss = fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);
    assert!(run_dir.join("final").join("model.json").exists());
    assert!(run_dir.join("best").join("weights.nopd").exists());

    let pred = dir.path().join("pred");
    let ckpt = run_dir.join("final");
    run_ok(&["predict", "--checkpoint", s(&ckpt), "--data", s(&sim), "--validation", "--out", s(&pred)]);
    let pm = read_manifest(&pred).unwrap();
    assert_eq!(pm.samples.iter().map(|e| e.index).collect::<Vec<_>>(), split.validation);
    let p: Tensor<f32> = load_role(&pred, &pm.samples[0], "prediction").unwrap();
    assert_eq!(p.shape(), target.shape());
    assert!(p.all_finite());

    let eval = dir.path().join("eval");
    run_ok(&["evaluate", "--pred", s(&pred), "--data", s(&sim), "--out", s(&eval)]);
    for f in ["mae.csv", "gof.csv", "gof.json", "traces.csv", "spectra.csv", "pgv.csv", "summary.json"] {
        assert!(eval.join(f).exists(), "{f}");
    }

    let info = run_ok(&["info", s(&ckpt)]);
    let meta: serde_json::Value = serde_json::from_slice(&info.stdout).unwrap();
    assert!(meta.to_string().contains("parameter_count"));
    assert_eq!(
        run(&["predict", "--checkpoint", s(&ckpt), "--data", s(&sim), "--samples", "0", "--validation", "--out", s(&pred)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn damaged_containers_are_rejected() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("g");
    let cfg = write_config(dir.path(), "c.toml", SMALL_CONFIG);
    run_ok(&["gen-geology", "--config", s(&cfg), "--count", "1", "--out", s(&out)]);
    let m = read_manifest(&out).unwrap();
    let path = out.join(&m.samples[0].file("vs").unwrap().path);
    assert_eq!(peek_header(&path).unwrap().shape, vec![16, 16, 16]);
    run_ok(&["info", s(&path)]);

    // the format version follows the four magic bytes
    let mut bytes = fs::read(&path).unwrap();
    bytes[4] = bytes[4].wrapping_add(1);
    fs::write(&path, &bytes).unwrap();
    assert!(load_tensor::<f32>(&path).is_err());
    assert_eq!(run(&["info", s(&path)]).status.code(), Some(2));
    let res = run(&["simulate", "--config", s(&cfg), "--geology", s(&out), "--out", s(&dir.path().join("sim"))]);
    assert_ne!(res.status.code(), Some(0));
}
