//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.
//!
//! Expected values come from oracles written here (quadrature, textbook
//! Kalman update, pseudo-inverse fits, the logistic map's derivative sum),
//! never from the library under test.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use mpip::commands;
use mpip::config::{Mode, RunConfig};
use mpip::runner::{forecast, RunSummary};
use mpip_core::basis::{squared_basis_integral, BasisFamily, BasisModel};
use mpip_core::filter::{Ensemble, Observation, PhaseMode};
use mpip_core::metrics::{lyapunov_exponent, LyapunovParams};
use mpip_core::model::{train, Role, TrainConfig};
use mpip_core::nalgebra::{DMatrix, DVector};
use mpip_core::seeded_rng;
use mpip_core::synth::{generate_session, WorldConfig};
use rand::Rng;

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> RunConfig {
    RunConfig::load(Some(&configs().join(name))).expect("bundled config parses")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- oracles

fn phi(p: f64, mu: f64, s: f64) -> f64 {
    let z = (p - mu) / (2.0 * s);
    (-z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let l = simpson(f, a, m);
    let r = simpson(f, m, b);
    let diff = (l + r - whole).abs();
    if depth == 0 || diff <= 15.0 * eps || diff <= 1e-15 * (l + r).abs() {
        return l + r + (l + r - whole) / 15.0;
    }
    adaptive(f, a, m, l, 0.5 * eps, depth - 1) + adaptive(f, m, b, r, 0.5 * eps, depth - 1)
}

fn quadrature(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let panels = 256;
    let h = (b - a) / panels as f64;
    let coarse: f64 = (0..panels)
        .map(|i| simpson(f, a + i as f64 * h, a + (i + 1) as f64 * h))
        .sum();
    let eps = 1e-13 * coarse.abs().max(f64::MIN_POSITIVE);
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            adaptive(f, lo, lo + h, simpson(f, lo, lo + h), eps / panels as f64, 24)
        })
        .sum()
}

fn design(centers: &[f64], s: f64, phases: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(phases.len(), centers.len(), |t, b| phi(phases[t], centers[b], s))
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn range(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn kalman_mean(x: &DMatrix<f64>, h: &DMatrix<f64>, r: &[f64], y: &[f64]) -> DVector<f64> {
    let (n, e) = (x.nrows(), x.ncols());
    let m = DVector::from_fn(n, |i, _| (0..e).map(|j| x[(i, j)]).sum::<f64>() / e as f64);
    let p = DMatrix::from_fn(n, n, |a, b| {
        (0..e).map(|j| (x[(a, j)] - m[a]) * (x[(b, j)] - m[b])).sum::<f64>() / (e - 1) as f64
    });
    let mut s = h * &p * h.transpose();
    for (i, v) in r.iter().enumerate() {
        s[(i, i)] += v;
    }
    let k = &p * h.transpose() * s.try_inverse().expect("innovation covariance is invertible");
    &m + k * (DVector::from_column_slice(y) - h * &m)
}

fn logistic(n: usize, x0: f64) -> Vec<f64> {
    let mut x = x0;
    for _ in 0..100 {
        x = 4.0 * x * (1.0 - x);
    }
    (0..n)
        .map(|_| {
            x = 4.0 * x * (1.0 - x);
            x
        })
        .collect()
}

// ---------------------------------------------------------------- pipeline

struct Pipeline {
    dir: tempfile::TempDir,
}

impl Pipeline {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().expect("temporary directory"),
        }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    /// generate(train) → train → generate(test); returns (model, test manifest).
    fn prepare(&self, cfg: &RunConfig, train_seed: u64, test_seed: u64, test_strides: usize) -> (PathBuf, PathBuf) {
        let mut c = cfg.clone();
        c.seed = train_seed;
        let train_manifest = commands::generate(&c, &self.path("train")).expect("generate training session");
        let model = self.path("model.json");
        commands::train_model(&c, &train_manifest, &model).expect("train");
        c.seed = test_seed;
        c.strides = test_strides;
        let test_manifest = commands::generate(&c, &self.path("test")).expect("generate test session");
        (model, test_manifest)
    }

    fn run(&self, cfg: &RunConfig, mode: Mode, model: &Path, manifest: &Path) -> RunSummary {
        let mut c = cfg.clone();
        c.control.objective = mode;
        commands::run(&c, model, manifest, &self.path(&format!("run_{}", mode.as_str()))).expect("run")
    }
}

fn channel_mean(run: &RunSummary, channel: &str, metric: fn(&mpip_core::metrics::ChannelMetrics) -> f64) -> f64 {
    let v: Vec<f64> = run
        .trials
        .iter()
        .map(|t| metric(t.channels.iter().find(|c| c.channel == channel).expect("channel is scored")))
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- criteria

fn psi_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(20_240_601);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu = rng.random_range(0.0..1.0);
        let s = rng.random_range(0.02..0.3);
        let (a, b): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let (lo, hi) = (a.min(b), a.max(b));
        let got = squared_basis_integral(mu, s, lo, hi).map_err(|e| e.to_string())?;
        let want = quadrature(&|p| phi(p, mu, s).powi(2), lo, hi);
        worst = worst.max((got - want).abs() / want.abs().max(1e-300));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && secs < 1.0,
        format!("max relative error {worst:.2e} (≤ 1e-9), {secs:.3} s (< 1 s)"),
    )
}

fn basis_round_trip() -> Outcome {
    let b = BasisModel::uniform(BasisFamily::Gaussian, 1, 15).map_err(|e| e.to_string())?;
    let mut rng = seeded_rng(31);
    let phases: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
    let mut in_span: f64 = 0.0;
    for _ in 0..20 {
        let w: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = b.reconstruct_block(&w, &phases, 0).map_err(|e| e.to_string())?;
        let fit = b.fit_weights(&phases, &y, 0, 0.0).map_err(|e| e.to_string())?;
        let back = b.reconstruct_block(&fit, &phases, 0).map_err(|e| e.to_string())?;
        in_span = in_span.max(rmse(&y, &back));
    }

    // gait channels, B = 15, against a pseudo-inverse fit of the same data
    let world = WorldConfig::gait();
    let records = generate_session(&world, 20, 3).map_err(|e| e.to_string())?;
    let demos: Vec<_> = records.into_iter().map(|r| r.demo).collect();
    let model = train(&demos, &TrainConfig { phase_mode: world.phase_mode, ..TrainConfig::default() })
        .map_err(|e| e.to_string())?;
    let layout = model.layout();
    let mut worst: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for (j, demo) in demos.iter().enumerate() {
        for d in 0..demo.channels().len() {
            let y = demo.series(d).map_err(|e| e.to_string())?;
            let block = layout.block(d).map_err(|e| e.to_string())?;
            let w = &model.members[j][2 + block.start..2 + block.end];
            let ours = model.basis.reconstruct_block(w, demo.phases(), d).map_err(|e| e.to_string())?;
            let a = design(model.basis.centers(d).map_err(|e| e.to_string())?, model.basis.width(), demo.phases());
            let pinv = a.clone().pseudo_inverse(1e-12).map_err(|e| e.to_string())?;
            let oracle = &a * (pinv * DVector::from_column_slice(y));
            let r = range(y);
            let rel = rmse(y, &ours) / r;
            worst = worst.max(rel);
            gap = gap.max(rel - rmse(y, oracle.as_slice()) / r);
        }
    }
    check(
        in_span <= 1e-8 && worst <= 0.05 && gap <= 1e-3,
        format!(
            "in-span RMSE {in_span:.2e} (≤ 1e-8); gait channels worst RMSE {:.3}% of range (≤ 5%), \
             {:.1e} above the pseudo-inverse fit",
            100.0 * worst,
            gap.max(0.0)
        ),
    )
}

fn filter_exactness() -> Outcome {
    let roles = [Role::Observed, Role::Observed, Role::Latent];
    let mut worst: f64 = 0.0;
    for instance in 0..50u64 {
        let mut rng = seeded_rng(500 + instance);
        let count = rng.random_range(4..12);
        let basis = BasisModel::uniform(BasisFamily::Gaussian, 3, count).map_err(|e| e.to_string())?;
        let dim = 2 + 3 * count;
        let e = rng.random_range(5..40);
        let phase = rng.random_range(0.0..1.0);
        let members: Vec<Vec<f64>> = (0..e)
            .map(|_| {
                let z: f64 = rng.random_range(-1.0..1.0);
                let mut m = vec![phase, rng.random_range(0.005..0.02)];
                m.extend((0..3 * count).map(|k| z * (k as f64 * 0.7).cos() + 0.2 * rng.random_range(-1.0..1.0)));
                m
            })
            .collect();
        let mut ens = Ensemble::from_members(&members).map_err(|e| e.to_string())?;
        let x = ens.members().clone();
        let mask = if instance % 3 == 0 { vec![1] } else { vec![0, 1] };
        let values: Vec<f64> = mask.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
        let noise: Vec<f64> = mask.iter().map(|_| rng.random_range(0.01..0.5)).collect();
        let mut h = DMatrix::zeros(mask.len(), dim);
        for (row, &d) in mask.iter().enumerate() {
            for (b, &c) in basis.centers(d).map_err(|e| e.to_string())?.iter().enumerate() {
                h[(row, 2 + d * count + b)] = phi(phase, c, basis.width());
            }
        }
        let want = kalman_mean(&x, &h, &noise, &values);
        let obs = Observation::new(mask, values, 0.0).map_err(|e| e.to_string())?;
        ens.update(&obs, &basis, &roles, &noise, false, PhaseMode::Clamp, &mut rng)
            .map_err(|e| e.to_string())?;
        worst = worst.max((ens.posterior().0 - want).amax());
    }
    check(worst <= 1e-10, format!("max deviation from the Kalman mean {worst:.2e} over 50 instances (≤ 1e-10)"))
}

/// The walking world with measurement noise and the exogenous control
/// excitation both scaled down five-fold.
fn low_noise_gait() -> WorldConfig {
    let mut world = WorldConfig::gait();
    world.noise_std /= 5.0;
    world.control.excitation_amplitude /= 5.0;
    world
}

fn predictive_biomechanics(seeds: (u64, u64)) -> Outcome {
    let world = low_noise_gait();
    let train_demos: Vec<_> = generate_session(&world, 20, seeds.0)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.demo)
        .collect();
    let model = train(&train_demos, &TrainConfig { phase_mode: world.phase_mode, ..TrainConfig::default() })
        .map_err(|e| e.to_string())?;
    let force = world.force_index();
    let held_out = generate_session(&world, 20, seeds.1).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut total = 0.0;
    for (i, r) in held_out.iter().enumerate() {
        let (pred, rec) = forecast(&model, &r.demo, force, 0.3, i as u64).map_err(|e| e.to_string())?;
        let rel = rmse(&pred, &rec) / range(r.demo.series(force).map_err(|e| e.to_string())?);
        worst = worst.max(rel);
        total += rel;
    }
    check(
        worst <= 0.15,
        format!(
            "latent force after 30% observed: worst trial RMSE {:.1}% of range, mean {:.1}% (≤ 15%)",
            100.0 * worst,
            100.0 * total / 20.0
        ),
    )
}

fn mpc_efficacy(violations: &mut usize) -> Outcome {
    let start = Instant::now();
    let cfg = config("gait.toml");
    let p = Pipeline::new();
    let (model, test) = p.prepare(&cfg, 1, 2, 50);
    let reactive = p.run(&cfg, Mode::Reactive, &model, &test);
    let reduce = p.run(&cfg, Mode::Reduce, &model, &test);
    let secs = start.elapsed().as_secs_f64();
    *violations += reactive.invariant_violations + reduce.invariant_violations;
    let a = channel_mean(&reactive, "knee_force", |c| c.impulse);
    let b = channel_mean(&reduce, "knee_force", |c| c.impulse);
    let drop = 1.0 - b / a;
    check(
        drop >= 0.10 && secs < 120.0,
        format!(
            "50 strides: impulse reactive {a:.4}, reduce {b:.4} ({:.1}% lower, ≥ 10%), {secs:.1} s (< 120 s)",
            100.0 * drop
        ),
    )
}

fn cost_function_swap(violations: &mut usize) -> Outcome {
    let cfg = config("jumping.toml");
    let p = Pipeline::new();
    let (model, test) = p.prepare(&cfg, 1, 2, 20);
    let runs: Vec<RunSummary> = [Mode::Reactive, Mode::Increase, Mode::Reduce]
        .into_iter()
        .map(|m| p.run(&cfg, m, &model, &test))
        .collect();
    *violations += runs.iter().map(|r| r.invariant_violations).sum::<usize>();
    let [reactive, increase, reduce] = [0, 1, 2].map(|i| channel_mean(&runs[i], "knee_force", |c| c.peak));
    check(
        increase > reactive && reduce < reactive,
        format!("jumping peak force: increase {increase:.3} > reactive {reactive:.3} > reduce {reduce:.3}"),
    )
}

fn plan_invariant(violations: &mut usize) -> Outcome {
    // the remaining objectives on the walking world
    let cfg = config("gait.toml");
    let p = Pipeline::new();
    let (model, test) = p.prepare(&cfg, 5, 6, 20);
    for mode in [Mode::Increase, Mode::Symmetry, Mode::Reduce] {
        *violations += p.run(&cfg, mode, &model, &test).invariant_violations;
    }
    check(*violations == 0, format!("{violations} plans violated cost or box invariants across all runs"))
}

fn realtime_budget() -> Outcome {
    let cfg = config("bench.toml");
    let r = commands::bench(&cfg, None).map_err(|e| e.to_string())?;
    let total = r.stages.iter().find(|s| s.stage == "total").ok_or("no total stage")?;
    check(
        r.ensemble_size == 20 && r.basis_count == 15 && r.channels == 10 && total.p95_ms <= 66.0,
        format!(
            "E = {}, B = {}, D = {}: step p95 {:.3} ms over {} steps (≤ 66 ms)",
            r.ensemble_size, r.basis_count, r.channels, total.p95_ms, r.steps
        ),
    )
}

fn lyapunov_sanity() -> Outcome {
    let s = logistic(10_000, 0.1234);
    let oracle = s.iter().map(|x| (4.0 * (1.0 - 2.0 * x)).abs().ln()).sum::<f64>() / s.len() as f64;
    let params = LyapunovParams {
        embed_dim: 2,
        delay: 1,
        fit_window: 5,
        min_separation: None,
        dt: 1.0,
    };
    let est = lyapunov_exponent(&s, &params).map_err(|e| e.to_string())?;
    let sine: Vec<f64> = (0..3000)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 97.3).sin())
        .collect();
    let flat = lyapunov_exponent(&sine, &LyapunovParams::default()).map_err(|e| e.to_string())?;
    check(
        (est - oracle).abs() <= 0.05 && flat <= 0.01,
        format!("logistic r = 4: {est:.4} vs derivative sum {oracle:.4} (±0.05); sinusoid {flat:.4} (≤ 0.01)"),
    )
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable directory") {
            let path = entry.expect("directory entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).expect("readable file");
                out.push((path.strip_prefix(dir).expect("under root").to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let cfg = config("gait.toml");
    let trees: Vec<_> = (0..2)
        .map(|_| {
            let p = Pipeline::new();
            let (model, test) = p.prepare(&cfg, 11, 12, 5);
            p.run(&cfg, Mode::Reduce, &model, &test);
            p.run(&cfg, Mode::Reactive, &model, &test);
            files_under(p.dir.path())
        })
        .collect();
    let identical = trees[0] == trees[1];
    check(
        identical && !trees[0].is_empty(),
        format!("{} files (datasets, manifests, model, logs, metrics) byte-identical across reruns", trees[0].len()),
    )
}

fn main() -> ExitCode {
    let mut violations = 0;
    let results: Vec<(&str, Outcome)> = vec![
        ("1 Ψ correctness", psi_correctness()),
        ("2 basis round trip", basis_round_trip()),
        ("3 filter exactness", filter_exactness()),
        ("4 predictive biomechanics", predictive_biomechanics((41, 42))),
        ("5 MPC efficacy", mpc_efficacy(&mut violations)),
        ("6 cost-function swap", cost_function_swap(&mut violations)),
        ("7 plan invariant", plan_invariant(&mut violations)),
        ("8 real-time budget", realtime_budget()),
        ("9 Lyapunov sanity", lyapunov_sanity()),
        ("10 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
