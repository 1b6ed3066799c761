use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use nowcast_cli::{run, Cli};
use nowcast_core::grid::{read_grid_stack, write_grid_stack, Grid2D, GridKind, GridStack};
use nowcast_core::synth::cloud_scene;

fn nowcast(args: &[&str]) -> nowcast_cli::Result<String> {
    let mut full = vec!["nowcast"];
    full.extend_from_slice(args);
    run(Cli::parse_from(full))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn desk_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("desk.cfg");
    fs::write(
        &p,
        format!("model.profile = desk\ntrain.batch_size = 2\ntrain.epochs = 1\n{extra}"),
    )
    .unwrap();
    p
}

fn synth_inputs(dir: &Path) {
    nowcast(&["--out", s(dir), "synth"]).unwrap();
}

fn prep(dir: &Path, out: &Path) -> nowcast_cli::Result<String> {
    nowcast(&[
        "--out",
        s(out),
        "prep",
        "--radiance",
        s(&dir.join("radiance.nwg")),
        "--rain",
        s(&dir.join("rain.nwg")),
    ])
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn prep_makes_one_sample_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    synth_inputs(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let msg = prep(tmp.path(), &a).unwrap();
    assert!(msg.contains("1 samples"), "{msg}");
    prep(tmp.path(), &b).unwrap();
    assert_eq!(tree_bytes(&a), tree_bytes(&b));

    let inputs = read_grid_stack(a.join("prep/sample_0000.inputs.nwg")).unwrap();
    assert_eq!(
        (inputs.len(), inputs.height(), inputs.kind()),
        (4, 256, GridKind::NormalizedRadiance)
    );
    let obs = read_grid_stack(a.join("prep/observed_cumulative.nwg")).unwrap();
    assert_eq!((obs.len(), obs.height(), obs.width()), (1, 1512, 1512));
    let corr: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("prep/correlation.json")).unwrap())
            .unwrap();
    assert_eq!(corr["labels"][0], "IR_097");
    assert_eq!(corr["values"].as_array().unwrap().len(), 4);
}

#[test]
fn missing_rain_names_path_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    synth_inputs(tmp.path());
    let out = tmp.path().join("run");
    let missing = tmp.path().join("nope.nwg");
    let err = nowcast(&[
        "--out",
        s(&out),
        "prep",
        "--radiance",
        s(&tmp.path().join("radiance.nwg")),
        "--rain",
        s(&missing),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("nope.nwg"), "{err}");
    assert!(!out.exists());
}

#[test]
fn invalid_config_is_rejected_before_output() {
    let tmp = tempfile::tempdir().unwrap();
    synth_inputs(tmp.path());
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "flow.lk_window = 4\n").unwrap();
    let out = tmp.path().join("run");
    let err = nowcast(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "prep",
        "--radiance",
        s(&tmp.path().join("radiance.nwg")),
        "--rain",
        s(&tmp.path().join("rain.nwg")),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("lk_window"), "{err}");
    assert!(!out.exists());
}

fn static_inputs(dir: &Path) {
    let scene = cloud_scene(252, 252, 8, (0.0, 0.0));
    let rad = scene
        .map(|v| 150.0 * (v + 1.0))
        .with_kind(GridKind::Radiance);
    let rain = rad
        .map(|v| ((200.0 - v) * 0.08).max(0.0))
        .with_kind(GridKind::RainRate);
    let frames = vec![vec![rad; 4]; 20];
    let stack = GridStack::new(frames, 4, 252, 252, GridKind::Radiance, 0.0, 900.0).unwrap();
    write_grid_stack(&stack, dir.join("radiance.nwg")).unwrap();
    write_grid_stack(
        &GridStack::from_grids(vec![rain; 20], 0.0, 900.0).unwrap(),
        dir.join("rain.nwg"),
    )
    .unwrap();
}

#[test]
fn static_scene_forecast_repeats_last_input() {
    let tmp = tempfile::tempdir().unwrap();
    static_inputs(tmp.path());
    let out = tmp.path().join("run");
    prep(tmp.path(), &out).unwrap();
    nowcast(&["--out", s(&out), "flow", "--emit-pgm"]).unwrap();
    let inputs = read_grid_stack(out.join("prep/sample_0000.inputs.nwg")).unwrap();
    let fc = read_grid_stack(out.join("flow/sample_0000.forecast.nwg")).unwrap();
    assert_eq!(fc.len(), 16);
    for t in 0..16 {
        assert_eq!(fc.grid(t, 0), inputs.grid(3, 0), "lead {}", t + 1);
    }
    for k in 1..=16 {
        let p = out.join(format!("flow/pgm/sample_0000_lead_{k:02}.pgm"));
        assert!(fs::read(&p).unwrap().starts_with(b"P5\n256 256\n255\n"));
    }
    assert_eq!(fs::read_dir(out.join("flow/pgm")).unwrap().count(), 16);
}

#[test]
fn steps_flag_sets_forecast_length() {
    let tmp = tempfile::tempdir().unwrap();
    synth_inputs(tmp.path());
    let out = tmp.path().join("run");
    prep(tmp.path(), &out).unwrap();
    nowcast(&["--out", s(&out), "flow", "--steps", "5"]).unwrap();
    let fc = read_grid_stack(out.join("flow/sample_0000.forecast.nwg")).unwrap();
    assert_eq!(fc.len(), 5);
    let fallback: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("flow/fallback.json")).unwrap()).unwrap();
    assert_eq!(fallback["persistence_fallback"], serde_json::json!([]));
}

#[test]
fn zero_epoch_training_writes_initial_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    synth_inputs(tmp.path());
    let out = tmp.path().join("run");
    prep(tmp.path(), &out).unwrap();
    let cfg = desk_config(tmp.path(), "");
    nowcast(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "train",
        "--epochs",
        "0",
    ])
    .unwrap();
    let ck = nowcast_core::cgan::read_checkpoint(out.join("train/model.nwck")).unwrap();
    assert_eq!(ck.step, 0);
    assert_eq!(
        fs::read_to_string(out.join("train/metrics.jsonl")).unwrap(),
        ""
    );
}

#[test]
fn training_metrics_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    synth_inputs(tmp.path());
    let out = tmp.path().join("run");
    prep(tmp.path(), &out).unwrap();
    let cfg = desk_config(tmp.path(), "");
    let mut streams = Vec::new();
    for _ in 0..2 {
        nowcast(&[
            "--config",
            s(&cfg),
            "--seed",
            "5",
            "--out",
            s(&out),
            "train",
        ])
        .unwrap();
        streams.push(fs::read_to_string(out.join("train/metrics.jsonl")).unwrap());
    }
    assert_eq!(streams[0], streams[1]);
    let lines: Vec<serde_json::Value> = streams[0]
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // 4 pairs, batch 2
    assert_eq!(lines.len(), 2);
    for key in [
        "step",
        "lr",
        "L_D",
        "L_G",
        "pixel",
        "perceptual",
        "adversarial",
    ] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
    assert_eq!(lines[1]["step"], 2);
}

#[test]
fn predict_on_background_is_finite_and_full_resolution() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let bg = Grid2D::filled(256, 256, -1.0, GridKind::NormalizedRadiance);
    let prep_dir = out.join("prep");
    let flow_dir = out.join("flow");
    fs::create_dir_all(&prep_dir).unwrap();
    fs::create_dir_all(&flow_dir).unwrap();
    fs::write(
        prep_dir.join("manifest.json"),
        r#"{"samples":1,"t0":[0.0],"dt_seconds":900.0,"input_len":4,"horizon":16,
            "too_short":false,"unmasked_frames":[],"degenerate_frames":[]}"#,
    )
    .unwrap();
    write_grid_stack(
        &GridStack::from_grids(vec![bg; 16], 3600.0, 900.0).unwrap(),
        flow_dir.join("sample_0000.forecast.nwg"),
    )
    .unwrap();
    let cfg = desk_config(tmp.path(), "");
    let ck = nowcast_core::cgan::GanCheckpoint::init(
        nowcast_core::cgan::GanArchitecture::desk(),
        Default::default(),
    )
    .unwrap();
    let ck_path = tmp.path().join("init.nwck");
    nowcast_core::cgan::write_checkpoint(&ck, &ck_path).unwrap();
    nowcast(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "predict",
        "--checkpoint",
        s(&ck_path),
        "--emit-pgm",
    ])
    .unwrap();
    let first = fs::read(out.join("predict/cumulative.nwg")).unwrap();
    let cum = read_grid_stack(out.join("predict/cumulative.nwg")).unwrap();
    assert_eq!((cum.len(), cum.height(), cum.width()), (1, 1512, 1512));
    assert!(cum
        .grid(0, 0)
        .values()
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0));
    assert!(out.join("predict/sample_0000_cumulative.pgm").is_file());
    nowcast(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "predict",
        "--checkpoint",
        s(&ck_path),
    ])
    .unwrap();
    assert_eq!(first, fs::read(out.join("predict/cumulative.nwg")).unwrap());
}

fn eval_stacks(dir: &Path, offset: f32) -> (PathBuf, PathBuf) {
    let obs: Vec<Grid2D> = (0..2)
        .map(|k| {
            Grid2D::from_fn(64, 64, GridKind::RainRate, |r, c| {
                ((r * 3 + c * 7 + k) % 11) as f32
            })
        })
        .collect();
    let pred: Vec<Grid2D> = obs.iter().map(|g| g.map(|v| v + offset)).collect();
    let (p, o) = (dir.join("pred.nwg"), dir.join("obs.nwg"));
    write_grid_stack(&GridStack::from_grids(pred, 0.0, 900.0).unwrap(), &p).unwrap();
    write_grid_stack(&GridStack::from_grids(obs, 0.0, 900.0).unwrap(), &o).unwrap();
    (p, o)
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("eval/report.json")).unwrap()).unwrap()
}

#[test]
fn eval_identity_and_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let (p, o) = eval_stacks(tmp.path(), 0.0);
    nowcast(&["--out", s(&out), "eval", "--pred", s(&p), "--obs", s(&o)]).unwrap();
    assert_eq!(report(&out)["mean_crps"], 0.0);

    let (p, o) = eval_stacks(tmp.path(), 1.0);
    let msg = nowcast(&[
        "--out",
        s(&out),
        "eval",
        "--pred",
        s(&p),
        "--obs",
        s(&o),
        "--block",
        "16",
    ])
    .unwrap();
    assert!(msg.contains("mean CRPS"), "{msg}");
    let r = report(&out);
    assert!((r["mean_crps"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(r["block_size"], 16);
    assert_eq!(r["n_samples"], 2);
    assert_eq!(r["estimator"], "nrg");
}

#[test]
fn eval_misaligned_names_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, _) = eval_stacks(tmp.path(), 0.0);
    let other = tmp.path().join("short.nwg");
    let g = Grid2D::filled(64, 64, 0.0, GridKind::RainRate);
    write_grid_stack(&GridStack::from_grids(vec![g], 0.0, 900.0).unwrap(), &other).unwrap();
    let err = nowcast(&[
        "--out",
        s(tmp.path()),
        "eval",
        "--pred",
        s(&p),
        "--obs",
        s(&other),
    ])
    .unwrap_err();
    assert!(
        err.to_string().contains("2 predictions vs 1 observations"),
        "{err}"
    );
}

#[test]
fn fair_estimator_needs_ensembles() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, o) = eval_stacks(tmp.path(), 0.0);
    let err = nowcast(&[
        "--out",
        s(tmp.path()),
        "eval",
        "--pred",
        s(&p),
        "--obs",
        s(&o),
        "--estimator",
        "fair",
    ])
    .unwrap_err();
    assert!(err.to_string().contains("two ensemble members"), "{err}");
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, "paths.out = from-config\neval.block = 8\n").unwrap();
    let (p, o) = eval_stacks(tmp.path(), 1.0);
    let out = tmp.path().join("from-flag");
    nowcast(&[
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "eval",
        "--pred",
        s(&p),
        "--obs",
        s(&o),
    ])
    .unwrap();
    assert_eq!(report(&out)["block_size"], 8);
    assert!(!tmp.path().join("from-config").exists());
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_nowcast");
    let tmp = tempfile::tempdir().unwrap();
    let (p, o) = eval_stacks(tmp.path(), 0.0);
    let ok = Process::new(exe)
        .args([
            "--out",
            s(tmp.path()),
            "eval",
            "--pred",
            s(&p),
            "--obs",
            s(&o),
        ])
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("mean CRPS 0.000000"));
    let bad = Process::new(exe)
        .args([
            "--out",
            s(tmp.path()),
            "eval",
            "--pred",
            "/missing.nwg",
            "--obs",
            s(&o),
        ])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("/missing.nwg"));
}
