use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hri-anomaly"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset: 16-wide features, 30 Hz sensors.
fn synth(dir: &Path, seed: &str, width: &str) -> PathBuf {
    let out = run(&[
        "synth", "--out", s(dir), "--seed", seed, "--n-train", "4", "--drop-cup", "1",
        "--torque-limit", "1", "--extra-person", "1", "--collision", "0",
        "--feature-width", width, "--sensor-rate", "30",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join("manifest.json")
}

const SMALL_MODEL: [&str; 6] = ["--encoder-widths", "8,4", "--epochs", "3", "--batch-size", "16"];

fn train(manifest: &Path, ckpt: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--manifest", s(manifest), "--out", s(ckpt)];
    args.extend_from_slice(&SMALL_MODEL);
    args.extend_from_slice(extra);
    run(&args)
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_reproducible_and_requires_out() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "7", "16");
    synth(&b, "7", "16");
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
    assert!(a.join("spec.json").exists());

    let missing = run(&["synth", "--seed", "7"]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("--out"));
}

#[test]
fn train_score_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("d"), "3", "16");
    let ckpt = tmp.path().join("model.json");
    let out = train(&manifest, &ckpt, &["--modalities", "vision"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("final loss"));
    assert!(ckpt.exists());

    let scores = tmp.path().join("scores.csv");
    let out = run(&["score", "--manifest", s(&manifest), "--checkpoint", s(&ckpt), "--out", s(&scores)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&scores).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "video_id,clip_index,raw_error,normalized_error,prediction,label"
    );
    assert!(lines.count() > 20);

    let pct = tmp.path().join("pct.csv");
    let out = run(&[
        "score", "--manifest", s(&manifest), "--checkpoint", s(&ckpt), "--out", s(&pct),
        "--threshold-mode", "percentile", "--q", "99",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fixed = run(&[
        "score", "--manifest", s(&manifest), "--checkpoint", s(&ckpt), "--out", s(&pct),
        "--threshold-mode", "fixed",
    ]);
    assert_eq!(code(&fixed), 2);

    let report = tmp.path().join("report");
    let out = run(&["eval", "--manifest", s(&manifest), "--checkpoint", s(&ckpt), "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(report.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["configs"][0]["name"], "vision");
    assert!(report.join("roc_vision.csv").exists());
}

#[test]
fn training_refuses_labelled_anomalies() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("d"), "4", "16");
    let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    for v in m["videos"].as_array_mut().unwrap() {
        v["split"] = "train".into();
    }
    std::fs::write(&manifest, serde_json::to_vec(&m).unwrap()).unwrap();
    let out = train(&manifest, &tmp.path().join("m.json"), &[]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("only normal"), "{}", stderr(&out));
}

#[test]
fn multimodal_preset_on_vision_only_manifest_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("d"), "5", "16");
    let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    m["modality_config"] = serde_json::json!({"use_vision": true, "use_sensor": false, "use_scenegraph": false});
    std::fs::write(&manifest, serde_json::to_vec(&m).unwrap()).unwrap();
    let out = run(&[
        "train", "--manifest", s(&manifest), "--out", s(&tmp.path().join("m.json")),
        "--preset", "multimodal", "--epochs", "1",
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn width_mismatch_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let wide = synth(&tmp.path().join("wide"), "6", "16");
    let narrow = synth(&tmp.path().join("narrow"), "6", "12");
    let ckpt = tmp.path().join("m.json");
    assert_eq!(code(&train(&wide, &ckpt, &["--modalities", "vision"])), 0);
    let out = run(&[
        "score", "--manifest", s(&narrow), "--checkpoint", s(&ckpt), "--out",
        s(&tmp.path().join("x.csv")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("width"), "{}", stderr(&out));
}

#[test]
fn ablate_reports_four_configs_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = synth(&tmp.path().join("d"), "8", "16");
    let ablate = |out: &Path| {
        let mut args = vec![
            "ablate", "--manifest", s(&manifest), "--out", s(out),
            "--configs", "vision,vision+sensor,vision+sg,all",
        ];
        args.extend_from_slice(&SMALL_MODEL);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(out.join("summary.json")).unwrap()
    };
    let first = ablate(&tmp.path().join("r1"));
    let second = ablate(&tmp.path().join("r2"));
    assert_eq!(first, second);
    let again = ablate(&tmp.path().join("r1"));
    assert_eq!(first, again);

    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let configs = v["configs"].as_array().unwrap();
    assert_eq!(configs.len(), 4);
    assert!(configs.iter().all(|c| c["auc"].is_f64()));
    assert_eq!(v["settings"]["train"]["epochs"], 3);

    let bad = run(&["ablate", "--manifest", s(&manifest), "--out", "x", "--configs", "vision,sonar"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn config_file_supplies_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    let out_dir = tmp.path().join("d");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "out": s(&out_dir), "n_train": 2, "drop_cup": 1, "torque_limit": 0,
            "extra_person": 0, "collision": 0, "feature_width": 8, "sensor_rate": 20
        })
        .to_string(),
    )
    .unwrap();
    let out = run(&["--config", s(&cfg), "synth", "--n-train", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["videos"].as_array().unwrap().len(), 4);
    assert_eq!(m["feature_width"], 8);
}
