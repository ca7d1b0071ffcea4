//! The subcommands, as library functions the binary and tests share.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mpip_core::metrics::summarize;
use mpip_core::model::{train, IPModel};
use mpip_core::synth::{generate_session, stride_seed, StrideRecord, WorldConfig};
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, Result};
use crate::io;
use crate::runner::{run_session, run_trial, summarize_run, Plan, RunSummary, TrialOutcome};
use crate::StdClock;

/// Seed offset separating benchmark trials from benchmark training data.
const BENCH_TRIAL_STREAM: u64 = 0xB3AC_0001;

/// Generates a session and writes it to `out`. Returns the manifest path.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let world = cfg.world.resolve()?;
    let records = generate_session(&world, cfg.strides, cfg.seed)?;
    log::info!("generated {} strides of '{}' with seed {}", records.len(), world.name, cfg.seed);
    io::write_session(out, &world, &records, cfg.seed)
}

/// Trains a model on the session behind `manifest` and writes it to `out`.
pub fn train_model(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<IPModel> {
    let session = io::read_session(manifest)?;
    let mode = session.manifest.world.as_ref().map(|w| w.phase_mode);
    let model = train(&session.demos, &cfg.train_for(mode))?;
    log::info!(
        "trained on {} demonstrations: E = {}, state dimension {}",
        session.demos.len(),
        model.ensemble_size(),
        model.state_dim()
    );
    io::save_model(out, &model)?;
    Ok(model)
}

/// Runs every stride of a generated session under the configured mode and
/// writes `log.jsonl`, `metrics.json` and the effective `config.toml` to `out`.
pub fn run(cfg: &RunConfig, model_path: &Path, manifest: &Path, out: &Path) -> Result<RunSummary> {
    let model = io::load_model(model_path)?;
    let session = io::read_session(manifest)?;
    let (world, records) = session.records()?;
    let outcomes = run_session(&model, &world, &records, &cfg.control, cfg.seed)?;
    let summary = summarize_run(cfg.control.objective, cfg.seed, &outcomes);
    write_run(out, cfg, &outcomes, &summary)?;
    if summary.invariant_violations > 0 {
        log::error!("{} plans violated their invariants", summary.invariant_violations);
    }
    Ok(summary)
}

fn write_run(out: &Path, cfg: &RunConfig, outcomes: &[TrialOutcome], summary: &RunSummary) -> Result<()> {
    let mut log = String::new();
    for tick in outcomes.iter().flat_map(|o| &o.ticks) {
        log.push_str(&serde_json::to_string(tick).map_err(|e| CliError::Config(e.to_string()))?);
        log.push('\n');
    }
    io::write_file(&out.join("log.jsonl"), log.as_bytes())?;
    io::write_json(&out.join("metrics.json"), summary)?;
    io::write_file(&out.join("config.toml"), cfg.to_toml()?.as_bytes())
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    /// Controller mode.
    pub mode: Mode,
    /// Metric name, e.g. `knee_force.impulse`.
    pub metric: String,
    /// Mean over trials.
    pub mean: f64,
    /// Sample standard deviation over trials.
    pub std: f64,
    /// Number of trials.
    pub count: usize,
}

/// Mean ± std of every metric per mode. Values are sorted before summing,
/// so the result does not depend on trial order.
pub fn aggregate(runs: &[RunSummary]) -> Result<Vec<AggregateRow>> {
    let mut values: BTreeMap<(Mode, String), Vec<f64>> = BTreeMap::new();
    for run in runs {
        for trial in &run.trials {
            for c in &trial.channels {
                let mut push = |what: &str, v: f64| {
                    values.entry((run.mode, format!("{}.{what}", c.channel))).or_default().push(v);
                };
                push("impulse", c.impulse);
                push("peak", c.peak);
                if let Some(v) = c.value_at_event {
                    push("value_at_event", v);
                }
            }
            if let Some(s) = trial.stability_exponent {
                values.entry((run.mode, "stability_exponent".into())).or_default().push(s);
            }
        }
        if let Some(s) = run.stability_exponent {
            values.entry((run.mode, "session.stability_exponent".into())).or_default().push(s);
        }
    }
    values
        .into_iter()
        .map(|((mode, metric), mut v)| {
            v.sort_by(f64::total_cmp);
            let s = summarize(&v)?;
            Ok(AggregateRow {
                mode,
                metric,
                mean: s.mean,
                std: s.std,
                count: s.count,
            })
        })
        .collect()
}

/// Plain-text rendering of [`aggregate`].
pub fn format_table(rows: &[AggregateRow]) -> String {
    let width = rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    let mut s = format!("{:<9} {:<width$} {:>14} {:>12} {:>5}\n", "mode", "metric", "mean", "std", "n");
    for r in rows {
        writeln!(
            s,
            "{:<9} {:<width$} {:>14.6} {:>12.6} {:>5}",
            r.mode.as_str(),
            r.metric,
            r.mean,
            r.std,
            r.count
        )
        .expect("writing to a String cannot fail");
    }
    s
}

/// Reads run summaries, aggregates them and optionally writes the JSON twin.
pub fn evaluate(inputs: &[PathBuf], out: Option<&Path>) -> Result<(Vec<AggregateRow>, String)> {
    if inputs.is_empty() {
        return Err(CliError::Config("evaluate needs at least one metrics file".into()));
    }
    let runs = inputs
        .iter()
        .map(|p| io::read_json::<RunSummary>(p))
        .collect::<Result<Vec<_>>>()?;
    let rows = aggregate(&runs)?;
    if let Some(path) = out {
        io::write_json(path, &rows)?;
    }
    let table = format_table(&rows);
    Ok((rows, table))
}

/// Latency percentiles of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    /// Stage name.
    pub stage: String,
    /// Median in milliseconds.
    pub p50_ms: f64,
    /// 95th percentile in milliseconds.
    pub p95_ms: f64,
    /// Maximum in milliseconds.
    pub max_ms: f64,
}

/// Benchmark result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Controller mode.
    pub mode: Mode,
    /// Ensemble size.
    pub ensemble_size: usize,
    /// Channels.
    pub channels: usize,
    /// Basis functions of the first channel.
    pub basis_count: usize,
    /// Control steps measured.
    pub steps: usize,
    /// Per-stage latencies: predict, update, optimize, total.
    pub stages: Vec<StageLatency>,
    /// Throughput over the measured steps.
    pub steps_per_sec: f64,
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times the controller on fresh strides of the configured world. Trains a
/// model from `bench.demos` strides when `model` is `None`.
pub fn bench(cfg: &RunConfig, model: Option<&Path>) -> Result<BenchReport> {
    let world = cfg.world.resolve()?;
    let model = match model {
        Some(p) => io::load_model(p)?,
        None => train_bench_model(cfg, &world)?,
    };
    let trials = generate_session(&world, cfg.bench.trials.max(1), stride_seed(cfg.seed, BENCH_TRIAL_STREAM as usize))?;
    let plan = Plan::resolve(&model, Some(&world), &cfg.control)?;
    let clock = StdClock::new();
    let mut samples: Vec<[u64; 4]> = Vec::new();
    for (i, r) in trials.iter().enumerate() {
        let outcome = run_trial(&model, &world, r, &plan, stride_seed(cfg.seed, i), &clock)?;
        samples.extend(outcome.latencies);
    }
    Ok(report(cfg.control.objective, &model, &samples))
}

fn train_bench_model(cfg: &RunConfig, world: &WorldConfig) -> Result<IPModel> {
    let demos: Vec<StrideRecord> = generate_session(world, cfg.bench.demos, cfg.seed)?;
    let demos: Vec<_> = demos.into_iter().map(|r| r.demo).collect();
    Ok(train(&demos, &cfg.train_for(Some(world.phase_mode)))?)
}

fn report(mode: Mode, model: &IPModel, samples: &[[u64; 4]]) -> BenchReport {
    let names = ["predict", "update", "optimize", "total"];
    let stages = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut v: Vec<u64> = samples.iter().map(|s| s[k]).collect();
            v.sort_unstable();
            StageLatency {
                stage: (*name).into(),
                p50_ms: percentile(&v, 50.0) as f64 * 1e-6,
                p95_ms: percentile(&v, 95.0) as f64 * 1e-6,
                max_ms: v.last().copied().unwrap_or(0) as f64 * 1e-6,
            }
        })
        .collect();
    let total_ns: u64 = samples.iter().map(|s| s[3]).sum();
    BenchReport {
        mode,
        ensemble_size: model.ensemble_size(),
        channels: model.channels.len(),
        basis_count: model.basis.basis_count(0).unwrap_or(0),
        steps: samples.len(),
        stages,
        steps_per_sec: if total_ns > 0 {
            samples.len() as f64 / (total_ns as f64 * 1e-9)
        } else {
            0.0
        },
    }
}

/// Plain-text rendering of a benchmark report.
pub fn format_bench(r: &BenchReport) -> String {
    let mut s = format!(
        "mode {}  E = {}  D = {}  B = {}  steps = {}\n{:<9} {:>10} {:>10} {:>10}\n",
        r.mode.as_str(),
        r.ensemble_size,
        r.channels,
        r.basis_count,
        r.steps,
        "stage",
        "p50 ms",
        "p95 ms",
        "max ms"
    );
    for st in &r.stages {
        writeln!(s, "{:<9} {:>10.4} {:>10.4} {:>10.4}", st.stage, st.p50_ms, st.p95_ms, st.max_ms)
            .expect("writing to a String cannot fail");
    }
    writeln!(s, "steps/sec {:.1}", r.steps_per_sec).expect("writing to a String cannot fail");
    s
}
