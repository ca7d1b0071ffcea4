//! Phase-domain model-predictive control.
//!
//! Candidate control weights are mapped to predicted weights of a variable of
//! interest through the Gaussian conditional mean of the current ensemble.
//! The cost integrates squared basis functions over the control and signal
//! horizons, which makes it a quadratic in the control weights with
//! precomputable coefficients Ψ.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisModel, PsiCache, WeightLayout, DEFAULT_PSI_GRID};
use crate::error::{config, domain, numerical};
use crate::filter::{Ensemble, Observation, WEIGHTS};
use crate::model::{IPModel, Role};
use crate::solver::{projected_newton, SmoothObjective, SolverOptions};
use crate::Result;

/// What the cost does with the predicted variable of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Penalize its squared magnitude.
    Minimize,
    /// Reward its squared magnitude.
    Maximize,
    /// Penalize its squared deviation from a reference.
    TrackReference,
}

/// Where a tracking reference comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// No reference (minimize/maximize).
    None,
    /// Fixed weights of the target channel's length.
    Weights(Vec<f64>),
    /// Posterior-mean weights of another channel, re-read every tick.
    Channel(usize),
}

/// Cost settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Sign/shape of the first cost term.
    pub objective: Objective,
    /// Channel whose predicted weights are penalized.
    pub target_channel: usize,
    /// Channel whose weights are optimized.
    pub control_channel: usize,
    /// Signal horizon in phase.
    pub horizon_x: f64,
    /// Control horizon in phase.
    pub horizon_u: f64,
    /// Weight ρ of the control-change term.
    pub regularization: f64,
    /// Reference for [`Objective::TrackReference`].
    pub reference: Reference,
    /// Solver iteration cap.
    pub max_iterations: usize,
    /// Solver projected-gradient tolerance.
    pub gradient_tolerance: f64,
}

impl CostConfig {
    /// Defaults for a target/control pair: horizons 0.25 and 0.10, ρ = 1.
    pub fn new(objective: Objective, target_channel: usize, control_channel: usize) -> Self {
        Self {
            objective,
            target_channel,
            control_channel,
            horizon_x: 0.25,
            horizon_u: 0.10,
            regularization: 1.0,
            reference: Reference::None,
            max_iterations: 50,
            gradient_tolerance: 1e-8,
        }
    }

    /// Checks horizon ordering and signs.
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.horizon_u && self.horizon_u <= self.horizon_x && self.horizon_x <= 1.0) {
            return Err(config!(
                "horizons must satisfy 0 ≤ H_u ≤ H_x ≤ 1, got H_u = {}, H_x = {}",
                self.horizon_u,
                self.horizon_x
            ));
        }
        if !(self.regularization >= 0.0) || !self.regularization.is_finite() {
            return Err(config!("regularization must be non-negative"));
        }
        if self.objective == Objective::TrackReference && self.reference == Reference::None {
            return Err(config!("tracking objective needs a reference"));
        }
        Ok(())
    }
}

/// Affine map from control weights to predicted target weights,
/// `w_x = μ_x + G (w_u − μ_u)` with `G = Σ_xu (Σ_uu + λI)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// Prior mean of the target block.
    pub target_mean: DVector<f64>,
    /// Prior mean of the control block.
    pub control_mean: DVector<f64>,
    /// Gain `G` (target × control).
    pub gain: DMatrix<f64>,
}

impl Coupling {
    /// Builds the coupling from a prior over `[φ, φ̇, w]`.
    pub fn from_prior(
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        layout: &WeightLayout,
        target: usize,
        control: usize,
    ) -> Result<Self> {
        let rx = layout.block(target)?;
        let ru = layout.block(control)?;
        if mean.len() != WEIGHTS + layout.total() || cov.nrows() != mean.len() {
            return Err(domain!("prior does not match the weight layout"));
        }
        let xs = WEIGHTS + rx.start;
        let us = WEIGHTS + ru.start;
        let target_mean = mean.rows(xs, rx.len()).into_owned();
        let control_mean = mean.rows(us, ru.len()).into_owned();
        if target == control {
            return Ok(Self {
                target_mean,
                control_mean,
                gain: DMatrix::identity(ru.len(), ru.len()),
            });
        }
        let s_xu = cov.view((xs, us), (rx.len(), ru.len())).into_owned();
        let mut s_uu = cov.view((us, us), (ru.len(), ru.len())).into_owned();
        let n = ru.len();
        let ridge = 1e-8 * s_uu.trace() / n as f64;
        for i in 0..n {
            s_uu[(i, i)] += ridge;
        }
        let chol = s_uu
            .cholesky()
            .ok_or_else(|| numerical!("control covariance is singular after regularization"))?;
        // G = Σ_xu Σ_uu⁻¹  ⇔  Gᵀ = Σ_uu⁻¹ Σ_ux
        let gain = chol.solve(&s_xu.transpose()).transpose();
        if gain.iter().any(|v| !v.is_finite()) {
            return Err(numerical!("coupling gain is not finite"));
        }
        Ok(Self {
            target_mean,
            control_mean,
            gain,
        })
    }

    /// Builds the coupling from the sample statistics of an ensemble.
    pub fn from_ensemble(
        ensemble: &Ensemble,
        layout: &WeightLayout,
        target: usize,
        control: usize,
    ) -> Result<Self> {
        let (mean, cov) = ensemble.posterior();
        Self::from_prior(&mean, &cov, layout, target, control)
    }

    /// Predicted target weights for candidate control weights.
    pub fn couple(&self, u_weights: &DVector<f64>) -> DVector<f64> {
        &self.target_mean + &self.gain * (u_weights - &self.control_mean)
    }
}

/// Conditional-mean target weights under a prior `(mean, covariance)`.
pub fn couple_weights(
    prior: (&DVector<f64>, &DMatrix<f64>),
    layout: &WeightLayout,
    target: usize,
    control: usize,
    u_weights: &[f64],
) -> Result<Vec<f64>> {
    let c = Coupling::from_prior(prior.0, prior.1, layout, target, control)?;
    if u_weights.len() != c.control_mean.len() {
        return Err(domain!("control weights have the wrong length"));
    }
    Ok(c.couple(&DVector::from_column_slice(u_weights)).iter().copied().collect())
}

/// The phase-domain quadratic cost for one planning instant.
#[derive(Debug, Clone)]
pub struct PlanCost {
    coupling: Coupling,
    psi_x: DVector<f64>,
    psi_u: DVector<f64>,
    reactive: DVector<f64>,
    reference: Option<DVector<f64>>,
    sign: f64,
    regularization: f64,
}

impl PlanCost {
    /// Assembles the cost. `reference` is required for tracking objectives.
    pub fn new(
        coupling: Coupling,
        psi_x: Vec<f64>,
        psi_u: Vec<f64>,
        reactive: Vec<f64>,
        objective: Objective,
        reference: Option<Vec<f64>>,
        regularization: f64,
    ) -> Result<Self> {
        let nx = coupling.target_mean.len();
        let nu = coupling.control_mean.len();
        if psi_x.len() != nx || psi_u.len() != nu || reactive.len() != nu {
            return Err(domain!("Ψ or reactive weights do not match the coupling dimensions"));
        }
        let reference = match objective {
            Objective::TrackReference => {
                let r = reference.ok_or_else(|| domain!("tracking objective needs a reference"))?;
                if r.len() != nx {
                    return Err(domain!("reference has {} weights, target has {nx}", r.len()));
                }
                Some(DVector::from_vec(r))
            }
            _ => None,
        };
        Ok(Self {
            coupling,
            psi_x: DVector::from_vec(psi_x),
            psi_u: DVector::from_vec(psi_u),
            reactive: DVector::from_vec(reactive),
            reference,
            sign: if objective == Objective::Maximize { -1.0 } else { 1.0 },
            regularization,
        })
    }

    fn target_residual(&self, u: &DVector<f64>) -> DVector<f64> {
        let wx = self.coupling.couple(u);
        match &self.reference {
            Some(r) => wx - r,
            None => wx,
        }
    }

    /// First (variable-of-interest) term alone, with its sign.
    pub fn target_term(&self, u: &DVector<f64>) -> f64 {
        let r = self.target_residual(u);
        self.sign * self.psi_x.iter().zip(r.iter()).map(|(p, v)| p * v * v).sum::<f64>()
    }

    /// Second (control-change) term alone, including ρ.
    pub fn control_term(&self, u: &DVector<f64>) -> f64 {
        let du = u - &self.reactive;
        self.regularization * self.psi_u.iter().zip(du.iter()).map(|(p, v)| p * v * v).sum::<f64>()
    }

    /// Reactive (ensemble-mean) control weights.
    pub fn reactive(&self) -> &DVector<f64> {
        &self.reactive
    }
}

impl SmoothObjective for PlanCost {
    fn value(&self, u: &DVector<f64>) -> f64 {
        self.target_term(u) + self.control_term(u)
    }

    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let r = self.target_residual(u);
        let weighted = r.component_mul(&self.psi_x) * (2.0 * self.sign);
        let du = u - &self.reactive;
        self.coupling.gain.tr_mul(&weighted) + du.component_mul(&self.psi_u) * (2.0 * self.regularization)
    }

    fn hessian(&self, _: &DVector<f64>) -> DMatrix<f64> {
        let g = &self.coupling.gain;
        let mut scaled = g.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= 2.0 * self.sign * self.psi_x[i];
        }
        let mut h = g.tr_mul(&scaled);
        for i in 0..h.nrows() {
            h[(i, i)] += 2.0 * self.regularization * self.psi_u[i];
        }
        h
    }
}

/// Evaluates the cost `J` of candidate control weights.
///
/// `J = s·Σ_b ψx_b (w_x − ref)_b² + ρ·Σ_b ψu_b (w_u − ŵ_u)_b²` with `s = −1`
/// for maximization.
pub fn cost(
    u_weights: &[f64],
    reactive: &[f64],
    coupling: &Coupling,
    psi_x: &[f64],
    psi_u: &[f64],
    config: &CostConfig,
    reference: Option<&[f64]>,
) -> Result<f64> {
    let c = PlanCost::new(
        coupling.clone(),
        psi_x.to_vec(),
        psi_u.to_vec(),
        reactive.to_vec(),
        config.objective,
        reference.map(<[f64]>::to_vec),
        config.regularization,
    )?;
    if u_weights.len() != reactive.len() {
        return Err(domain!("control weights have the wrong length"));
    }
    Ok(c.value(&DVector::from_column_slice(u_weights)))
}

/// Result of one planning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPlan {
    /// Optimized control weights `w_u*`.
    pub u_weights: Vec<f64>,
    /// Reactive control weights `ŵ_u` (ensemble mean, projected into the box).
    pub reactive_weights: Vec<f64>,
    /// Cost of `u_weights`.
    pub cost_achieved: f64,
    /// Cost of `reactive_weights`.
    pub cost_reactive: f64,
    /// Phase at which the plan was computed.
    pub phase_at_plan: f64,
    /// True when planning failed and the reactive weights were returned.
    pub fallback: bool,
    /// Solver iterations.
    pub iterations: usize,
}

impl ControlPlan {
    /// Checks the plan invariants against a weight box.
    pub fn satisfies_invariants(&self, lower: &[f64], upper: &[f64]) -> bool {
        self.cost_achieved <= self.cost_reactive + 1e-12
            && self
                .u_weights
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(w, (l, u))| *l <= *w && *w <= *u)
    }
}

/// Ψ vectors for the two horizons starting at `phase`, clipped at 1.
pub fn horizon_psi(
    psi: &mut PsiCache,
    phase: f64,
    config: &CostConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&phase) {
        return Err(domain!("phase {phase} outside [0, 1]"));
    }
    let hx = (phase + config.horizon_x).min(1.0);
    let hu = (phase + config.horizon_u).min(1.0);
    Ok((
        psi.get(phase, hx, config.target_channel)?,
        psi.get(phase, hu, config.control_channel)?,
    ))
}

fn reactive_plan(reactive: Vec<f64>, cost: f64, phase: f64) -> ControlPlan {
    ControlPlan {
        u_weights: reactive.clone(),
        reactive_weights: reactive,
        cost_achieved: cost,
        cost_reactive: cost,
        phase_at_plan: phase,
        fallback: true,
        iterations: 0,
    }
}

/// Box-constrained minimization of the plan cost at the ensemble's current
/// phase, starting from the reactive weights or, if it is strictly better,
/// from a warm start.
///
/// Planning failures never propagate: the reactive plan is returned with
/// `fallback` set. Only invalid configuration is an error.
pub fn optimize_plan(
    ensemble: &Ensemble,
    model: &IPModel,
    config: &CostConfig,
    psi: &mut PsiCache,
    warm_start: Option<&[f64]>,
) -> Result<ControlPlan> {
    config.validate()?;
    let layout = model.layout();
    let (lower, upper) = model.block_bounds(config.control_channel)?;
    layout.block(config.target_channel)?;
    let phase = ensemble.mean_phase().clamp(0.0, 1.0);
    let reactive: Vec<f64> = ensemble
        .mean_block(&layout, config.control_channel)?
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(w, (l, u))| w.clamp(*l, *u))
        .collect();

    let reference = match &config.reference {
        Reference::None => None,
        Reference::Weights(w) => Some(w.clone()),
        Reference::Channel(d) => Some(ensemble.mean_block(&layout, *d)?),
    };
    let (psi_x, psi_u) = horizon_psi(psi, phase, config)?;

    let coupling = match Coupling::from_ensemble(ensemble, &layout, config.target_channel, config.control_channel) {
        Ok(c) => c,
        // no usable coupling: the cost is undefined, so report it as zero
        Err(_) => return Ok(reactive_plan(reactive, 0.0, phase)),
    };
    let cost = PlanCost::new(
        coupling,
        psi_x,
        psi_u,
        reactive.clone(),
        config.objective,
        reference,
        config.regularization,
    )?;
    let reactive_v = DVector::from_column_slice(&reactive);
    let cost_reactive = cost.value(&reactive_v);
    if !cost_reactive.is_finite() {
        return Ok(reactive_plan(reactive, 0.0, phase));
    }

    let lo = DVector::from_column_slice(lower);
    let hi = DVector::from_column_slice(upper);
    let mut start = reactive_v.clone();
    if let Some(w) = warm_start.filter(|w| w.len() == reactive.len()) {
        let mut warm = DVector::from_column_slice(w);
        for i in 0..warm.len() {
            warm[i] = warm[i].clamp(lo[i], hi[i]);
        }
        if cost.value(&warm) < cost_reactive {
            start = warm;
        }
    }
    let report = projected_newton(
        &cost,
        &start,
        &lo,
        &hi,
        SolverOptions {
            max_iterations: config.max_iterations,
            gradient_tolerance: config.gradient_tolerance,
        },
    );
    if !report.value.is_finite() || report.value > cost_reactive {
        let mut plan = reactive_plan(reactive, cost_reactive, phase);
        plan.iterations = report.iterations;
        return Ok(plan);
    }
    Ok(ControlPlan {
        u_weights: report.x.iter().copied().collect(),
        reactive_weights: reactive,
        cost_achieved: report.value,
        cost_reactive,
        phase_at_plan: phase,
        fallback: false,
        iterations: report.iterations,
    })
}

/// Control value `Φ(φ)ᵀ w_u*` of a plan.
pub fn control_output(plan: &ControlPlan, phase: f64, basis: &BasisModel, control_channel: usize) -> Result<f64> {
    basis.dot(phase.clamp(0.0, 1.0), control_channel, &plan.u_weights)
}

/// Monotonic time source used to report per-stage latency.
pub trait Clock {
    /// Nanoseconds since an arbitrary origin.
    fn now_ns(&self) -> u64;
}

/// A clock that always reads zero, for targets without a timer.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

/// How a session turns the posterior into a control value.
#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    /// Emit the ensemble-mean control reconstruction.
    Reactive,
    /// Optimize the plan cost every tick.
    Predictive(CostConfig),
}

/// Per-tick diagnostics of [`MpcSession::step`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Posterior-mean phase after the update.
    pub phase: f64,
    /// Posterior-mean phase velocity after the update.
    pub phase_velocity: f64,
    /// Emitted control value.
    pub control: f64,
    /// Plan cost (equal to the reactive cost for the reactive controller).
    pub cost_achieved: f64,
    /// Reactive cost.
    pub cost_reactive: f64,
    /// The planner fell back to the reactive solution.
    pub fallback: bool,
    /// Solver iterations.
    pub iterations: usize,
    /// Phase reached the end of a clamped action.
    pub completed: bool,
    /// Time spent in prediction.
    pub predict_ns: u64,
    /// Time spent in the measurement update.
    pub update_ns: u64,
    /// Time spent planning.
    pub optimize_ns: u64,
    /// Total step time.
    pub total_ns: u64,
}

/// One live filtering + control session over an immutable model.
///
/// `step` mutates the session and must be called from one thread at a time.
#[derive(Debug, Clone)]
pub struct MpcSession<'m> {
    model: &'m IPModel,
    roles: Vec<Role>,
    ensemble: Ensemble,
    rng: ChaCha8Rng,
    psi: PsiCache,
    controller: Controller,
    perturb: bool,
    last_plan: Option<ControlPlan>,
}

impl<'m> MpcSession<'m> {
    /// Starts a session from the model's prior ensemble.
    pub fn new(model: &'m IPModel, controller: Controller, seed: u64) -> Result<Self> {
        if let Controller::Predictive(c) = &controller {
            c.validate()?;
            if model.channels.get(c.control_channel).map(|s| s.role) != Some(Role::Control) {
                return Err(config!("channel {} is not a control channel", c.control_channel));
            }
            model.layout().block(c.target_channel)?;
        }
        Ok(Self {
            model,
            roles: model.roles(),
            ensemble: model.initial_ensemble(),
            rng: crate::seeded_rng(seed),
            psi: PsiCache::new(model.basis.clone(), DEFAULT_PSI_GRID)?,
            controller,
            perturb: true,
            last_plan: None,
        })
    }

    /// Switches between perturbed (default) and deterministic updates.
    pub fn set_perturb(&mut self, perturb: bool) {
        self.perturb = perturb;
    }

    /// Current ensemble.
    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    /// Most recent plan, if the controller is predictive.
    pub fn last_plan(&self) -> Option<&ControlPlan> {
        self.last_plan.as_ref()
    }

    /// The model.
    pub fn model(&self) -> &'m IPModel {
        self.model
    }

    /// Predict by `dt` seconds (skipped when `dt == 0`), update with `obs`,
    /// plan, and emit the control value at the posterior-mean phase.
    pub fn step<C: Clock>(&mut self, obs: &Observation, dt: f64, clock: &C) -> Result<(f64, StepDiagnostics)> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(domain!("time step must be non-negative, got {dt}"));
        }
        let model = self.model;
        let t0 = clock.now_ns();
        if dt > 0.0 {
            self.ensemble.predict(
                dt,
                model.sample_rate,
                &model.process_noise,
                model.phase_mode,
                &mut self.rng,
            )?;
        }
        let t1 = clock.now_ns();
        let noise = model.noise_for(&obs.channels)?;
        self.ensemble.update(
            obs,
            &model.basis,
            &self.roles,
            &noise,
            self.perturb,
            model.phase_mode,
            &mut self.rng,
        )?;
        let t2 = clock.now_ns();

        let control_channel = match &self.controller {
            Controller::Reactive => model.control_channel(),
            Controller::Predictive(c) => c.control_channel,
        };
        let phase = self.ensemble.mean_phase().clamp(0.0, 1.0);
        let plan = match &self.controller {
            Controller::Reactive => {
                let w = self.ensemble.mean_block(&model.layout(), control_channel)?;
                ControlPlan {
                    u_weights: w.clone(),
                    reactive_weights: w,
                    cost_achieved: 0.0,
                    cost_reactive: 0.0,
                    phase_at_plan: phase,
                    fallback: false,
                    iterations: 0,
                }
            }
            Controller::Predictive(c) => {
                let warm = self.last_plan.as_ref().map(|p| p.u_weights.as_slice());
                optimize_plan(&self.ensemble, model, c, &mut self.psi, warm)?
            }
        };
        let u = control_output(&plan, phase, &model.basis, control_channel)?;
        let t3 = clock.now_ns();
        let diagnostics = StepDiagnostics {
            phase,
            phase_velocity: self.ensemble.mean_velocity(),
            control: u,
            cost_achieved: plan.cost_achieved,
            cost_reactive: plan.cost_reactive,
            fallback: plan.fallback,
            iterations: plan.iterations,
            completed: model.phase_mode == crate::filter::PhaseMode::Clamp && phase >= 1.0,
            predict_ns: t1 - t0,
            update_ns: t2 - t1,
            optimize_ns: t3 - t2,
            total_ns: t3 - t0,
        };
        self.last_plan = Some(plan);
        Ok((u, diagnostics))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisFamily;
    use alloc::vec;

    fn scalar_prior(mx: f64, mu: f64, sxx: f64, sxu: f64, suu: f64) -> (DVector<f64>, DMatrix<f64>, WeightLayout) {
        // state [φ, φ̇, w_x, w_u] with one basis per channel
        let mean = DVector::from_row_slice(&[0.0, 0.0, mx, mu]);
        let mut cov = DMatrix::zeros(4, 4);
        cov[(2, 2)] = sxx;
        cov[(3, 3)] = suu;
        cov[(2, 3)] = sxu;
        cov[(3, 2)] = sxu;
        (mean, cov, WeightLayout::from_counts(&[1, 1]))
    }

    #[test]
    fn coupling_at_prior_mean_and_independence() {
        let (m, c, l) = scalar_prior(1.5, -0.5, 2.0, 0.7, 0.9);
        let w = couple_weights((&m, &c), &l, 0, 1, &[-0.5]).unwrap();
        assert!((w[0] - 1.5).abs() < 1e-15);
        let (m, c, l) = scalar_prior(1.5, -0.5, 2.0, 0.0, 0.9);
        for u in [-3.0, 0.0, 4.0] {
            assert_eq!(couple_weights((&m, &c), &l, 0, 1, &[u]).unwrap()[0], 1.5);
        }
    }

    #[test]
    fn scalar_coupling_matches_regression_slope() {
        let (m, c, l) = scalar_prior(1.5, -0.5, 2.0, 0.7, 0.9);
        let u = 0.8;
        let w = couple_weights((&m, &c), &l, 0, 1, &[u]).unwrap()[0];
        let expect = 1.5 + 0.7 / 0.9 * (u + 0.5);
        assert!((w - expect).abs() < 1e-7);
    }

    #[test]
    fn singular_control_covariance_is_an_error() {
        let (m, c, l) = scalar_prior(1.0, 0.0, 1.0, 0.0, 0.0);
        assert!(matches!(couple_weights((&m, &c), &l, 0, 1, &[0.0]), Err(crate::Error::Numerical(_))));
    }

    #[test]
    fn cost_sign_flip_and_zero_cost() {
        let (m, c, l) = scalar_prior(0.0, 0.2, 1.0, 0.0, 1.0);
        let coupling = Coupling::from_prior(&m, &c, &l, 0, 1).unwrap();
        let mut cfg = CostConfig::new(Objective::Minimize, 0, 1);
        assert_eq!(cost(&[0.2], &[0.2], &coupling, &[1.3], &[0.4], &cfg, None).unwrap(), 0.0);

        let (m, c, l) = scalar_prior(0.6, 0.2, 1.0, 0.5, 1.0);
        let coupling = Coupling::from_prior(&m, &c, &l, 0, 1).unwrap();
        cfg.regularization = 0.0;
        let jmin = cost(&[0.9], &[0.2], &coupling, &[1.3], &[0.4], &cfg, None).unwrap();
        cfg.objective = Objective::Maximize;
        let jmax = cost(&[0.9], &[0.2], &coupling, &[1.3], &[0.4], &cfg, None).unwrap();
        assert_eq!(jmin, -jmax);
        assert!(jmin > 0.0);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let layout = WeightLayout::from_counts(&[3, 3]);
        let gain = DMatrix::from_row_slice(3, 3, &[-0.8, 0.1, 0.0, 0.2, -1.1, 0.3, 0.0, 0.05, -0.6]);
        let coupling = Coupling {
            target_mean: DVector::from_row_slice(&[0.4, 0.9, -0.2]),
            control_mean: DVector::from_row_slice(&[0.1, -0.1, 0.3]),
            gain,
        };
        let _ = layout;
        for objective in [Objective::Minimize, Objective::Maximize, Objective::TrackReference] {
            let c = PlanCost::new(
                coupling.clone(),
                vec![1.2, 0.7, 0.3],
                vec![0.9, 0.2, 0.05],
                vec![0.1, -0.1, 0.3],
                objective,
                Some(vec![0.2, 0.2, 0.2]),
                0.7,
            )
            .unwrap();
            let u = DVector::from_row_slice(&[0.3, -0.4, 0.5]);
            let g = c.gradient(&u);
            let h = c.hessian(&u);
            let eps = 1e-6;
            for i in 0..3 {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += eps;
                dn[i] -= eps;
                let fd = (c.value(&up) - c.value(&dn)) / (2.0 * eps);
                assert!((fd - g[i]).abs() < 1e-7, "{objective:?} {i}: {fd} vs {}", g[i]);
                let gd = (c.gradient(&up) - c.gradient(&dn)) / (2.0 * eps);
                for j in 0..3 {
                    assert!((gd[j] - h[(j, i)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn control_output_of_zero_plan() {
        let basis = BasisModel::uniform(BasisFamily::Gaussian, 2, 5).unwrap();
        let plan = ControlPlan {
            u_weights: vec![0.0; 5],
            reactive_weights: vec![0.0; 5],
            cost_achieved: 0.0,
            cost_reactive: 0.0,
            phase_at_plan: 0.1,
            fallback: false,
            iterations: 0,
        };
        assert_eq!(control_output(&plan, 0.4, &basis, 1).unwrap(), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = CostConfig::new(Objective::Minimize, 0, 1);
        c.validate().unwrap();
        c.horizon_u = 0.5;
        assert!(c.validate().is_err());
        c.horizon_u = 0.1;
        c.regularization = -1.0;
        assert!(c.validate().is_err());
        let t = CostConfig::new(Objective::TrackReference, 0, 1);
        assert!(t.validate().is_err());
    }
}
