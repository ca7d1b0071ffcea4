//! The command-line tool, driven as a subprocess.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpip::io;
use mpip::runner::TickRecord;
use mpip_core::mpc::{Controller, MpcSession, NullClock};

fn mpip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpip"))
        .args(args)
        .env("MPIP_LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mpip(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    mpip(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Trains a small model and generates a test session under `dir`.
fn prepared(dir: &Path, strides: &str) -> (PathBuf, PathBuf) {
    let train = dir.join("train");
    let test = dir.join("test");
    let model = dir.join("model.json");
    ok(&["generate", "--seed", "1", "--strides", "12", "--out", s(&train)]);
    ok(&["train", s(&train.join("manifest.json")), "--out", s(&model)]);
    ok(&["generate", "--seed", "2", "--strides", strides, "--out", s(&test)]);
    (model, test.join("manifest.json"))
}

fn ticks(run_dir: &Path) -> Vec<TickRecord> {
    fs::read_to_string(run_dir.join("log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn generate_is_reproducible_and_sized() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["generate", "--seed", "4", "--strides", "3", "--out", s(&a)]);
    ok(&["generate", "--seed", "4", "--strides", "3", "--out", s(&b)]);
    for f in ["manifest.json", "stride_000.csv", "stride_001.csv", "stride_002.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let one = d.path().join("one");
    ok(&["generate", "--strides", "1", "--out", s(&one)]);
    let csv: Vec<_> = fs::read_dir(&one)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert_eq!(csv.len(), 1);
}

#[test]
fn invalid_inputs_map_to_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let bad_key = d.path().join("bad_key.toml");
    fs::write(&bad_key, "[control]\nhorizon = 0.3\n").unwrap();
    assert_eq!(code(&["generate", "--config", s(&bad_key), "--out", s(d.path())]), 2);

    let preset = d.path().join("preset.toml");
    fs::write(&preset, "[world]\npreset = \"swimming\"\n").unwrap();
    assert_eq!(code(&["generate", "--config", s(&preset), "--out", s(d.path())]), 2);

    let malformed = d.path().join("malformed.toml");
    fs::write(&malformed, "[control\n").unwrap();
    assert_eq!(code(&["generate", "--config", s(&malformed), "--out", s(d.path())]), 3);

    let missing = d.path().join("nothing.json");
    assert_eq!(code(&["train", s(&missing), "--out", s(&d.path().join("m.json"))]), 5);

    let junk = d.path().join("junk.json");
    fs::write(&junk, "{\"format\": \"something-else\"}").unwrap();
    let (_, manifest) = prepared(d.path(), "1");
    assert_eq!(code(&["run", s(&junk), s(&manifest), "--out", s(&d.path().join("r"))]), 3);

    let horizons = ["--horizon-x", "0.1", "--horizon-u", "0.2"];
    let model = d.path().join("model.json");
    let mut args = vec!["run", s(&model), s(&manifest), "--out", "unused"];
    args.extend(horizons);
    assert_eq!(code(&args), 2);
}

#[test]
fn training_needs_two_demonstrations() {
    let d = tempfile::tempdir().unwrap();
    for (n, success) in [("1", false), ("2", true)] {
        let data = d.path().join(n);
        ok(&["generate", "--strides", n, "--out", s(&data)]);
        let out = mpip(&["train", s(&data.join("manifest.json")), "--out", s(&d.path().join(format!("{n}.json")))]);
        assert_eq!(out.status.success(), success, "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn model_file_round_trips_exactly() {
    let d = tempfile::tempdir().unwrap();
    let (model_path, _) = prepared(d.path(), "1");
    let model = io::load_model(&model_path).unwrap();
    let again = d.path().join("again.json");
    io::save_model(&again, &model).unwrap();
    assert_eq!(io::load_model(&again).unwrap(), model);
    assert_eq!(fs::read(&again).unwrap(), fs::read(&model_path).unwrap());
}

#[test]
fn reactive_runs_emit_the_ensemble_mean_control() {
    let d = tempfile::tempdir().unwrap();
    let (model_path, manifest) = prepared(d.path(), "2");
    let out = d.path().join("reactive");
    ok(&["run", "--objective", "reactive", s(&model_path), s(&manifest), "--out", s(&out)]);
    let log = ticks(&out);

    // replay the first stride with a reactive session and read the mean weights directly
    let model = io::load_model(&model_path).unwrap();
    let session = io::read_session(&manifest).unwrap();
    let demo = &session.demos[0];
    let seed = mpip_core::synth::stride_seed(0, 0);
    let mut mpc = MpcSession::new(&model, Controller::Reactive, seed).unwrap();
    let observed = model.observed_channels();
    let u = model.control_channel();
    for (t, tick) in log.iter().filter(|k| k.trial == 0).enumerate() {
        let values = observed.iter().map(|&c| demo.series(c).unwrap()[t]).collect();
        let obs = mpip_core::filter::Observation::new(observed.clone(), values, t as f64 / demo.sample_rate()).unwrap();
        mpc.step(&obs, if t == 0 { 0.0 } else { 1.0 / demo.sample_rate() }, &NullClock).unwrap();
        let w = mpc.ensemble().mean_block(&model.layout(), u).unwrap();
        let phase = mpc.ensemble().mean_phase().clamp(0.0, 1.0);
        let want = model.basis.dot(phase, u, &w).unwrap();
        assert_eq!(tick.control, want, "tick {t}");
        assert!(!tick.fallback);
    }
}

#[test]
fn reduce_runs_never_plan_worse_than_reactive() {
    let d = tempfile::tempdir().unwrap();
    let (model, manifest) = prepared(d.path(), "4");
    let out = d.path().join("reduce");
    let table = ok(&["run", "--objective", "reduce", s(&model), s(&manifest), "--out", s(&out)]);
    assert!(table.contains("invariant violations 0"));
    let log = ticks(&out);
    assert!(log.iter().all(|t| t.cost_achieved <= t.cost_reactive + 1e-12));
    // wherever the horizon still covers part of the stride the planner should find an improvement
    let active: Vec<_> = log.iter().filter(|t| t.phase < 0.9).collect();
    let improved = active.iter().filter(|t| t.cost_achieved < t.cost_reactive).count();
    assert!(improved as f64 >= 0.95 * active.len() as f64, "{improved} of {}", active.len());
    for f in ["log.jsonl", "metrics.json", "config.toml"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn evaluate_aggregates_order_independently() {
    let d = tempfile::tempdir().unwrap();
    let (model, manifest) = prepared(d.path(), "3");
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["run", "--objective", "reactive", s(&model), s(&manifest), "--out", s(&a)]);
    ok(&["run", "--objective", "passive", s(&model), s(&manifest), "--out", s(&b)]);
    let (ma, mb) = (a.join("metrics.json"), b.join("metrics.json"));
    let t1 = d.path().join("t1.json");
    let t2 = d.path().join("t2.json");
    let first = ok(&["evaluate", s(&ma), s(&mb), "--out", s(&t1)]);
    let second = ok(&["evaluate", s(&mb), s(&ma), "--out", s(&t2)]);
    assert_eq!(first, second);
    assert_eq!(fs::read(&t1).unwrap(), fs::read(&t2).unwrap());
    assert!(first.contains("reactive") && first.contains("passive"));

    // a single trial has zero spread
    let (model1, manifest1) = prepared(&d.path().join("single"), "1");
    let c = d.path().join("c");
    ok(&["run", "--objective", "reactive", s(&model1), s(&manifest1), "--out", s(&c)]);
    let rows: Vec<serde_json::Value> = {
        let t = d.path().join("t3.json");
        ok(&["evaluate", s(&c.join("metrics.json")), "--out", s(&t)]);
        serde_json::from_str(&fs::read_to_string(t).unwrap()).unwrap()
    };
    assert!(!rows.is_empty());
    for r in rows {
        assert_eq!(r["std"].as_f64(), Some(0.0), "{r}");
    }
}

#[test]
fn bench_reports_every_stage_reproducibly() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bench.toml");
    fs::write(&cfg, "seed = 3\n[bench]\ndemos = 6\ntrials = 2\n").unwrap();
    let counts: Vec<u64> = (0..2)
        .map(|i| {
            let report = d.path().join(format!("r{i}.json"));
            let text = ok(&["bench", "--config", s(&cfg), "--out", s(&report)]);
            for stage in ["predict", "update", "optimize", "total"] {
                assert!(text.contains(stage), "{stage}");
            }
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
            assert_eq!(v["stages"].as_array().unwrap().len(), 4);
            v["steps"].as_u64().unwrap()
        })
        .collect();
    assert_eq!(counts[0], counts[1]);
    assert!(counts[0] > 0);
}
