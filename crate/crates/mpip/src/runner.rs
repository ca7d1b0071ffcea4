//! Drives recorded strides through the filter and controller and scores the
//! applied control against the world's ground-truth force.
//!
//! Each stride is an independent trial with a fresh ensemble. Kinematics in
//! the synthetic world do not depend on the control, so the recorded
//! observations can be replayed while the force is recomputed from whatever
//! control the controller applies.

use mpip_core::filter::Observation;
use mpip_core::metrics::{self, ChannelMetrics, LyapunovParams, TrialMetrics};
use mpip_core::model::{Demonstration, IPModel, Role};
use mpip_core::mpc::{Clock, Controller, CostConfig, MpcSession, NullClock, Objective, Reference};
use mpip_core::synth::{stride_seed, StrideRecord, WorldConfig};
use serde::{Deserialize, Serialize};

use crate::config::{ControlSettings, Mode};
use crate::error::{CliError, Result};

/// One control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    /// Trial index.
    pub trial: usize,
    /// Sample index within the trial.
    pub tick: usize,
    /// True phase of the sample.
    pub phase_true: f64,
    /// Posterior-mean phase.
    pub phase: f64,
    /// Posterior-mean phase velocity (per sample).
    pub phase_velocity: f64,
    /// Control value applied to the world.
    pub control: f64,
    /// Plan cost.
    pub cost_achieved: f64,
    /// Reactive cost.
    pub cost_reactive: f64,
    /// Planner fell back to the reactive plan.
    pub fallback: bool,
    /// Solver iterations.
    pub iterations: usize,
    /// Posterior-mean prediction of the target channel at the current phase.
    pub predicted_target: f64,
    /// Ground-truth target force under the applied control.
    pub target_true: f64,
}

/// Everything produced by one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// Per-tick log.
    pub ticks: Vec<TickRecord>,
    /// Applied control.
    pub control: Vec<f64>,
    /// Ground-truth force under the applied control.
    pub force: Vec<f64>,
    /// Metrics.
    pub metrics: TrialMetrics,
    /// Plans violating the cost or box invariant.
    pub invariant_violations: usize,
    /// Plans that fell back to the reactive solution.
    pub fallbacks: usize,
    /// Per-tick stage latencies `[predict, update, optimize, total]` in ns.
    pub latencies: Vec<[u64; 4]>,
}

/// Summary written next to the tick log of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Controller mode.
    pub mode: Mode,
    /// Run seed.
    pub seed: u64,
    /// Per-trial metrics.
    pub trials: Vec<TrialMetrics>,
    /// Total plan-invariant violations.
    pub invariant_violations: usize,
    /// Total fallbacks.
    pub fallbacks: usize,
    /// Stability exponent of the force over all strides back to back.
    #[serde(default)]
    pub stability_exponent: Option<f64>,
}

/// A controller resolved against a model and a world.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Mode.
    pub mode: Mode,
    /// Channel scored as force (the cost target of reduce/increase).
    pub force_channel: usize,
    /// Control channel.
    pub control_channel: usize,
    /// Controller handed to the session.
    pub controller: Controller,
}

impl Plan {
    /// Resolves channel names and builds the cost configuration.
    pub fn resolve(model: &IPModel, world: Option<&WorldConfig>, settings: &ControlSettings) -> Result<Self> {
        let control_channel = model.control_channel();
        let force_channel = match &settings.target {
            Some(name) => model.require_channel(name)?,
            None => model
                .channels
                .iter()
                .position(|c| c.role == Role::Latent)
                .ok_or_else(|| CliError::Config("model has no latent channel to use as target".into()))?,
        };
        let cost = |objective, target| {
            let mut c = CostConfig::new(objective, target, control_channel);
            c.horizon_x = settings.horizon_x;
            c.horizon_u = settings.horizon_u;
            c.regularization = settings.regularization;
            c.max_iterations = settings.max_iterations;
            c.gradient_tolerance = settings.gradient_tolerance;
            c
        };
        let controller = match settings.objective {
            Mode::Reduce => Controller::Predictive(cost(Objective::Minimize, force_channel)),
            Mode::Increase => Controller::Predictive(cost(Objective::Maximize, force_channel)),
            Mode::Symmetry => {
                let name = settings
                    .reference
                    .clone()
                    .or_else(|| world.and_then(|w| w.reference_channel.clone()))
                    .ok_or_else(|| CliError::Config("symmetry needs a reference channel".into()))?;
                let reference = model.require_channel(&name)?;
                if model.basis.basis_count(reference)? != model.basis.basis_count(control_channel)? {
                    return Err(CliError::Config(
                        "reference and control channels need the same number of basis functions".into(),
                    ));
                }
                let mut c = cost(Objective::TrackReference, control_channel);
                c.reference = Reference::Channel(reference);
                Controller::Predictive(c)
            }
            Mode::Reactive | Mode::Passive => Controller::Reactive,
        };
        if let Controller::Predictive(c) = &controller {
            c.validate()?;
        }
        Ok(Self {
            mode: settings.objective,
            force_channel,
            control_channel,
            controller,
        })
    }
}

fn observation(model: &IPModel, demo: &Demonstration, t: usize) -> Result<Observation> {
    let channels = model.observed_channels();
    let values = channels
        .iter()
        .map(|&d| demo.series(d).map(|s| s[t]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Observation::new(channels, values, t as f64 / demo.sample_rate())?)
}

fn predicted_value(model: &IPModel, session: &MpcSession<'_>, channel: usize, phase: f64) -> Result<f64> {
    let w = session.ensemble().mean_block(&model.layout(), channel)?;
    Ok(model.basis.dot(phase.clamp(0.0, 1.0), channel, &w)?)
}

/// Runs one stride.
pub fn run_trial<C: Clock>(
    model: &IPModel,
    world: &WorldConfig,
    record: &StrideRecord,
    plan: &Plan,
    seed: u64,
    clock: &C,
) -> Result<TrialOutcome> {
    if record.demo.channels() != model.channels.as_slice() {
        return Err(CliError::Config("trial schema does not match the model".into()));
    }
    let trial = record.truth.index;
    let (lower, upper) = model.block_bounds(plan.control_channel)?;
    let mut session = MpcSession::new(model, plan.controller.clone(), seed)?;
    let n = record.demo.len();
    let dt = 1.0 / record.demo.sample_rate();
    let mut ticks = Vec::with_capacity(n);
    let mut control = Vec::with_capacity(n);
    let mut force = Vec::with_capacity(n);
    let mut latencies = Vec::with_capacity(n);
    let mut violations = 0;
    let mut fallbacks = 0;
    for t in 0..n {
        let obs = observation(model, &record.demo, t)?;
        let (u_model, diag) = session.step(&obs, if t == 0 { 0.0 } else { dt }, clock)?;
        let phase_true = record.truth.phase(t);
        let u = match plan.mode {
            Mode::Passive => world.nominal_control(phase_true),
            _ => u_model,
        };
        if let (Controller::Predictive(_), Some(p)) = (&plan.controller, session.last_plan()) {
            if !p.satisfies_invariants(lower, upper) {
                violations += 1;
                log::warn!("trial {trial} tick {t}: plan violates its invariants");
            }
        }
        fallbacks += usize::from(diag.fallback);
        let f = world.force(&record.truth, phase_true, u);
        ticks.push(TickRecord {
            trial,
            tick: t,
            phase_true,
            phase: diag.phase,
            phase_velocity: diag.phase_velocity,
            control: u,
            cost_achieved: diag.cost_achieved,
            cost_reactive: diag.cost_reactive,
            fallback: diag.fallback,
            iterations: diag.iterations,
            predicted_target: predicted_value(model, &session, plan.force_channel, diag.phase)?,
            target_true: f,
        });
        control.push(u);
        force.push(f);
        latencies.push([diag.predict_ns, diag.update_ns, diag.optimize_ns, diag.total_ns]);
    }

    let event = record.truth.event_sample;
    let channels = vec![
        ChannelMetrics::compute(&model.channels[plan.force_channel].name, &force, dt, event)?,
        ChannelMetrics::compute(&model.channels[plan.control_channel].name, &control, dt, event)?,
    ];
    Ok(TrialOutcome {
        ticks,
        metrics: TrialMetrics {
            trial,
            channels,
            // one stride is too short for the exponent; see `summarize_run`
            stability_exponent: None,
        },
        control,
        force,
        invariant_violations: violations,
        fallbacks,
        latencies,
    })
}

/// Largest short-term Lyapunov exponent of a signal with the default
/// embedding, in units of `1 / sample`; `None` when the signal is too short.
pub fn stability(series: &[f64]) -> Option<f64> {
    metrics::lyapunov_exponent(series, &LyapunovParams::default()).ok()
}

/// Runs every stride of a session; trial `i` is seeded with
/// `stride_seed(seed, i)`.
pub fn run_session(
    model: &IPModel,
    world: &WorldConfig,
    records: &[StrideRecord],
    settings: &ControlSettings,
    seed: u64,
) -> Result<Vec<TrialOutcome>> {
    let plan = Plan::resolve(model, Some(world), settings)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| run_trial(model, world, r, &plan, stride_seed(seed, i), &NullClock))
        .collect()
}

/// Summary of a set of trial outcomes.
pub fn summarize_run(mode: Mode, seed: u64, outcomes: &[TrialOutcome]) -> RunSummary {
    RunSummary {
        mode,
        seed,
        trials: outcomes.iter().map(|o| o.metrics.clone()).collect(),
        invariant_violations: outcomes.iter().map(|o| o.invariant_violations).sum(),
        fallbacks: outcomes.iter().map(|o| o.fallbacks).sum(),
        stability_exponent: stability(&outcomes.iter().flat_map(|o| o.force.iter().copied()).collect::<Vec<_>>()),
    }
}

/// Filters the first `fraction` of a demonstration's samples and predicts
/// `channel` over the remaining samples, extrapolating phase with the
/// posterior-mean phase velocity. Returns `(predicted, recorded)`.
pub fn forecast(
    model: &IPModel,
    demo: &Demonstration,
    channel: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(CliError::Config(format!("observed fraction must lie in (0, 1), got {fraction}")));
    }
    let n = demo.len();
    let seen = ((fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let mut session = MpcSession::new(model, Controller::Reactive, seed)?;
    let dt = 1.0 / demo.sample_rate();
    for t in 0..seen {
        let obs = observation(model, demo, t)?;
        session.step(&obs, if t == 0 { 0.0 } else { dt }, &NullClock)?;
    }
    let ens = session.ensemble();
    let phase = ens.mean_phase();
    let velocity = ens.mean_velocity();
    let weights = ens.mean_block(&model.layout(), channel)?;
    let recorded = demo.series(channel)?;
    let mut predicted = Vec::with_capacity(n - seen);
    for t in seen..n {
        let p = model.phase_mode.apply(phase + velocity * (t + 1 - seen) as f64);
        predicted.push(model.basis.dot(p.clamp(0.0, 1.0), channel, &weights)?);
    }
    Ok((predicted, recorded[seen..].to_vec()))
}
