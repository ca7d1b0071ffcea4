//! Ensemble Bayesian filter over the latent state `s = [φ, φ̇, w]`.
//!
//! Prediction advances phase at constant velocity; the measurement update is
//! a perturbed-observation ensemble Kalman step whose observation operator
//! evaluates each member's basis reconstruction at that member's own phase.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisModel, WeightLayout};
use crate::error::{domain, numerical};
use crate::model::Role;
use crate::stats;
use crate::Result;

/// Index of the phase in a member state.
pub const PHASE: usize = 0;
/// Index of the phase velocity in a member state.
pub const VELOCITY: usize = 1;
/// Offset of the first weight in a member state.
pub const WEIGHTS: usize = 2;

/// What happens to phase past the end of an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Saturate at 0 and 1 (discrete actions such as a jump).
    Clamp,
    /// Wrap modulo 1 (cyclic actions such as walking).
    Wrap,
}

impl PhaseMode {
    /// Maps a raw phase into `[0, 1]`.
    pub fn apply(self, phase: f64) -> f64 {
        match self {
            PhaseMode::Clamp => phase.clamp(0.0, 1.0),
            PhaseMode::Wrap => {
                let p = phase - libm::floor(phase);
                // can round up to exactly 1.0 for tiny negatives
                if p >= 1.0 {
                    0.0
                } else {
                    p
                }
            }
        }
    }
}

/// Standard deviations of the additive prediction noise `ε_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessNoise {
    /// On φ.
    pub phase_std: f64,
    /// On φ̇.
    pub velocity_std: f64,
    /// On every weight.
    pub weight_std: f64,
}

impl ProcessNoise {
    /// No noise at all.
    pub const ZERO: ProcessNoise = ProcessNoise {
        phase_std: 0.0,
        velocity_std: 0.0,
        weight_std: 0.0,
    };
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            phase_std: 1e-4,
            velocity_std: 1e-5,
            weight_std: 0.0,
        }
    }
}

/// A partial measurement: values for a subset of observed channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Channel indices present in this measurement.
    pub channels: Vec<usize>,
    /// One value per entry of `channels`.
    pub values: Vec<f64>,
    /// Seconds since the start of the action.
    pub timestamp: f64,
}

impl Observation {
    /// Validates the mask/value pairing.
    pub fn new(channels: Vec<usize>, values: Vec<f64>, timestamp: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(domain!("observation mask is empty"));
        }
        if channels.len() != values.len() {
            return Err(domain!(
                "observation has {} channels but {} values",
                channels.len(),
                values.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(domain!("observation value {v} is not finite"));
        }
        Ok(Self {
            channels,
            values,
            timestamp,
        })
    }
}

/// Predicted observation `h(x)` of one member: `Φ(φ)ᵀ w^d` for each masked channel.
pub fn observe_member(
    member: &[f64],
    mask: &[usize],
    basis: &BasisModel,
    roles: &[Role],
) -> Result<Vec<f64>> {
    let layout = basis.layout();
    let mut out = Vec::with_capacity(mask.len());
    for &d in mask {
        match roles.get(d) {
            Some(Role::Observed) => {}
            Some(r) => return Err(domain!("channel {d} has role {} and cannot be observed", r.as_str())),
            None => return Err(domain!("unknown channel index {d}")),
        }
        out.push(observe_channel(member, d, basis, &layout)?);
    }
    Ok(out)
}

fn observe_channel(member: &[f64], d: usize, basis: &BasisModel, layout: &WeightLayout) -> Result<f64> {
    let r = layout.block(d)?;
    let phase = member[PHASE].clamp(0.0, 1.0);
    basis.dot(phase, d, &member[WEIGHTS + r.start..WEIGHTS + r.end])
}

/// `E` member states stored as columns of a `(2 + B) × E` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
    step: u64,
}

impl Ensemble {
    /// Builds an ensemble from member state vectors.
    pub fn from_members(members: &[Vec<f64>]) -> Result<Self> {
        if members.len() < 2 {
            return Err(domain!("an ensemble needs at least 2 members, got {}", members.len()));
        }
        let dim = members[0].len();
        if dim <= WEIGHTS {
            return Err(domain!("member state must hold phase, velocity and weights"));
        }
        if members.iter().any(|m| m.len() != dim) {
            return Err(domain!("members have different state lengths"));
        }
        if members.iter().flatten().any(|v| !v.is_finite()) {
            return Err(domain!("members must be finite"));
        }
        let cols: Vec<DVector<f64>> = members.iter().map(|m| DVector::from_column_slice(m)).collect();
        Ok(Self {
            members: DMatrix::from_columns(&cols),
            step: 0,
        })
    }

    /// Wraps an existing `(2 + B) × E` matrix.
    pub fn from_matrix(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() < 2 || members.nrows() <= WEIGHTS {
            return Err(domain!("ensemble matrix must be (2 + B) × E with E ≥ 2"));
        }
        Ok(Self { members, step: 0 })
    }

    /// Number of members `E`.
    pub fn len(&self) -> usize {
        self.members.ncols()
    }

    /// Always false; an ensemble has at least two members.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Length of each member state.
    pub fn state_dim(&self) -> usize {
        self.members.nrows()
    }

    /// Number of completed measurement updates.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Member states as matrix columns.
    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    /// One member state.
    pub fn member(&self, j: usize) -> Vec<f64> {
        self.members.column(j).iter().copied().collect()
    }

    /// Mean phase across members.
    pub fn mean_phase(&self) -> f64 {
        self.members.row(PHASE).mean()
    }

    /// Mean phase velocity across members.
    pub fn mean_velocity(&self) -> f64 {
        self.members.row(VELOCITY).mean()
    }

    /// Mean weights of one channel block.
    pub fn mean_block(&self, layout: &WeightLayout, channel: usize) -> Result<Vec<f64>> {
        let r = layout.block(channel)?;
        Ok((r.start..r.end)
            .map(|i| self.members.row(WEIGHTS + i).mean())
            .collect())
    }

    /// Constant-velocity prediction with additive noise.
    ///
    /// Each member advances by `φ̇ · dt · rate_scale`, where `rate_scale`
    /// converts seconds into the units of `φ̇` (samples per second when `φ̇`
    /// is phase per sample).
    pub fn predict<R: Rng + ?Sized>(
        &mut self,
        dt: f64,
        rate_scale: f64,
        noise: &ProcessNoise,
        mode: PhaseMode,
        rng: &mut R,
    ) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(domain!("prediction step must be positive, got {dt}"));
        }
        let dim = self.state_dim();
        for mut col in self.members.column_iter_mut() {
            col[PHASE] += col[VELOCITY] * dt * rate_scale;
            if noise.phase_std > 0.0 {
                col[PHASE] += noise.phase_std * rng.sample::<f64, _>(StandardNormal);
            }
            if noise.velocity_std > 0.0 {
                col[VELOCITY] += noise.velocity_std * rng.sample::<f64, _>(StandardNormal);
            }
            if noise.weight_std > 0.0 {
                for i in WEIGHTS..dim {
                    col[i] += noise.weight_std * rng.sample::<f64, _>(StandardNormal);
                }
            }
            col[PHASE] = mode.apply(col[PHASE]);
        }
        Ok(())
    }

    /// Observation matrix `HX`: one row per masked channel, one column per member.
    pub fn observe(&self, mask: &[usize], basis: &BasisModel, roles: &[Role]) -> Result<DMatrix<f64>> {
        let mut hx = DMatrix::zeros(mask.len(), self.len());
        for j in 0..self.len() {
            let col = self.members.column(j);
            let h = observe_member(col.as_slice(), mask, basis, roles)?;
            for (i, v) in h.into_iter().enumerate() {
                hx[(i, j)] = v;
            }
        }
        Ok(hx)
    }

    /// Ensemble Kalman measurement update.
    ///
    /// `noise` is the diagonal of `R` for the masked channels. With
    /// `perturb = false` every member sees the unperturbed observation.
    #[allow(clippy::too_many_arguments)]
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        obs: &Observation,
        basis: &BasisModel,
        roles: &[Role],
        noise: &[f64],
        perturb: bool,
        mode: PhaseMode,
        rng: &mut R,
    ) -> Result<()> {
        let m = obs.channels.len();
        let e = self.len();
        if noise.len() != m {
            return Err(domain!("R has {} entries for {m} observed channels", noise.len()));
        }
        if noise.iter().any(|r| !(*r > 0.0)) {
            return Err(domain!("observation noise must be positive"));
        }
        let hx = self.observe(&obs.channels, basis, roles)?;
        let h_mean = stats::sample_mean(&hx);
        let x_mean = stats::sample_mean(&self.members);
        let mut ha = hx.clone();
        for mut col in ha.column_iter_mut() {
            col -= &h_mean;
        }
        let mut a = self.members.clone();
        for mut col in a.column_iter_mut() {
            col -= &x_mean;
        }
        let scale = 1.0 / (e - 1) as f64;
        let mut s = &ha * ha.transpose() * scale;
        for (i, r) in noise.iter().enumerate() {
            s[(i, i)] += r;
        }

        let mut innovation = DMatrix::zeros(m, e);
        for j in 0..e {
            for i in 0..m {
                let mut y = obs.values[i];
                if perturb {
                    y += libm::sqrt(noise[i]) * rng.sample::<f64, _>(StandardNormal);
                }
                innovation[(i, j)] = y - hx[(i, j)];
            }
        }

        let chol = match s.clone().cholesky() {
            Some(c) => c,
            None => {
                let jitter = 1e-9 * s.trace() / m as f64;
                for i in 0..m {
                    s[(i, i)] += jitter;
                }
                s.cholesky()
                    .ok_or_else(|| numerical!("innovation covariance is singular after jitter"))?
            }
        };
        // X += A (HA)ᵀ S⁻¹ (ỹ − HX) / (E − 1)
        let z = chol.solve(&innovation);
        let correction = &a * (ha.transpose() * z) * scale;
        self.members += correction;
        for mut col in self.members.column_iter_mut() {
            col[PHASE] = mode.apply(col[PHASE]);
        }
        self.step += 1;
        Ok(())
    }

    /// Unbiased sample mean and covariance of the members.
    pub fn posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        stats::sample_mean_cov(&self.members)
    }

    /// Pointwise mean and standard deviation of a channel reconstructed by
    /// every member over `resolution` phases spanning `[lo, hi]`.
    pub fn predict_trajectory(
        &self,
        basis: &BasisModel,
        channel: usize,
        lo: f64,
        hi: f64,
        resolution: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if lo > hi || !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
            return Err(domain!("phase range [{lo}, {hi}] is not inside [0, 1]"));
        }
        let layout = basis.layout();
        let r = layout.block(channel)?;
        let points = if lo == hi { 1 } else { resolution.max(2) };
        let mut mean = vec![0.0; points];
        let mut std = vec![0.0; points];
        let e = self.len() as f64;
        let mut values = vec![0.0; self.len()];
        for (k, (m, s)) in mean.iter_mut().zip(std.iter_mut()).enumerate() {
            let phase = if points == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (points - 1) as f64
            };
            for (j, v) in values.iter_mut().enumerate() {
                let col = self.members.column(j);
                *v = basis.dot(phase, channel, &col.as_slice()[WEIGHTS + r.start..WEIGHTS + r.end])?;
            }
            let mu = values.iter().sum::<f64>() / e;
            let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (e - 1.0);
            *m = mu;
            *s = libm::sqrt(var.max(0.0));
        }
        Ok((mean, std))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisFamily;
    use crate::seeded_rng;

    fn basis() -> BasisModel {
        BasisModel::uniform(BasisFamily::Gaussian, 2, 6).unwrap()
    }

    const ROLES: [Role; 2] = [Role::Observed, Role::Latent];

    fn random_ensemble(seed: u64, e: usize) -> Ensemble {
        let mut rng = seeded_rng(seed);
        let members: Vec<Vec<f64>> = (0..e)
            .map(|_| {
                let mut m = vec![rng.random_range(0.2..0.4), 0.01];
                m.extend((0..12).map(|_| rng.random_range(-1.0..1.0)));
                m
            })
            .collect();
        Ensemble::from_members(&members).unwrap()
    }

    #[test]
    fn noiseless_prediction_is_exact() {
        let mut ens = random_ensemble(1, 4);
        let mut rng = seeded_rng(0);
        let mut fixed = ens.clone();
        for j in 0..4 {
            fixed.members[(VELOCITY, j)] = 0.0;
        }
        let before = fixed.clone();
        fixed.predict(0.01, 100.0, &ProcessNoise::ZERO, PhaseMode::Clamp, &mut rng).unwrap();
        assert_eq!(fixed, before);

        for j in 0..4 {
            ens.members[(PHASE, j)] = 0.2;
            ens.members[(VELOCITY, j)] = 0.001;
        }
        ens.predict(1.0, 100.0, &ProcessNoise::ZERO, PhaseMode::Clamp, &mut rng).unwrap();
        for j in 0..4 {
            assert!((ens.members[(PHASE, j)] - 0.3).abs() < 1e-15);
        }
        assert!(ens.predict(0.0, 100.0, &ProcessNoise::ZERO, PhaseMode::Clamp, &mut rng).is_err());
    }

    #[test]
    fn phase_modes() {
        assert_eq!(PhaseMode::Clamp.apply(1.3), 1.0);
        assert_eq!(PhaseMode::Clamp.apply(-0.1), 0.0);
        assert!((PhaseMode::Wrap.apply(1.25) - 0.25).abs() < 1e-15);
        assert!((PhaseMode::Wrap.apply(-0.25) - 0.75).abs() < 1e-15);
        assert_eq!(PhaseMode::Wrap.apply(-1e-18), 0.0);
    }

    #[test]
    fn process_noise_std_matches_configuration() {
        let noise = ProcessNoise {
            phase_std: 1e-3,
            velocity_std: 1e-4,
            weight_std: 0.0,
        };
        let mut dphase = Vec::new();
        let mut dvel = Vec::new();
        for seed in 0..1000 {
            let mut ens = Ensemble::from_members(&[vec![0.5, 0.0, 1.0], vec![0.5, 0.0, 1.0]]).unwrap();
            let mut rng = seeded_rng(seed);
            ens.predict(0.01, 100.0, &noise, PhaseMode::Wrap, &mut rng).unwrap();
            for j in 0..2 {
                dphase.push(ens.members[(PHASE, j)] - 0.5);
                dvel.push(ens.members[(VELOCITY, j)]);
                assert_eq!(ens.members[(WEIGHTS, j)], 1.0);
            }
        }
        let (_, sp) = stats::mean_std(&dphase);
        let (_, sv) = stats::mean_std(&dvel);
        assert!((sp / 1e-3 - 1.0).abs() < 0.05, "{sp}");
        assert!((sv / 1e-4 - 1.0).abs() < 0.05, "{sv}");
    }

    #[test]
    fn observe_member_rejects_unobservable_channels() {
        let ens = random_ensemble(2, 3);
        let m = ens.member(0);
        assert!(observe_member(&m, &[1], &basis(), &ROLES).is_err());
        assert!(observe_member(&m, &[5], &basis(), &ROLES).is_err());
        let zero = vec![0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(observe_member(&zero, &[0], &basis(), &ROLES).unwrap(), vec![0.0]);
    }

    #[test]
    fn observe_member_matches_reconstruct() {
        let ens = random_ensemble(3, 5);
        let b = basis();
        for j in 0..5 {
            let m = ens.member(j);
            let h = observe_member(&m, &[0], &b, &ROLES).unwrap()[0];
            let r = b.reconstruct_block(&m[WEIGHTS..WEIGHTS + 6], &[m[PHASE]], 0).unwrap()[0];
            assert_eq!(h, r);
        }
    }

    #[test]
    fn zero_innovation_and_zero_gain_leave_ensemble_unchanged() {
        let b = basis();
        let mut rng = seeded_rng(4);
        let ens = random_ensemble(5, 6);
        // every member predicts the same value: shift weights so h(x_j) = 0.7
        let mut same = ens.clone();
        for j in 0..6 {
            let h = observe_member(&same.member(j), &[0], &b, &ROLES).unwrap()[0];
            let phase = same.members[(PHASE, j)];
            let f = b.evaluate(phase, 0).unwrap();
            let norm: f64 = f.iter().map(|v| v * v).sum();
            for (k, fk) in f.iter().enumerate() {
                same.members[(WEIGHTS + k, j)] += (0.7 - h) * fk / norm;
            }
        }
        let obs = Observation::new(vec![0], vec![0.7], 0.0).unwrap();
        let mut updated = same.clone();
        updated.update(&obs, &b, &ROLES, &[0.01], false, PhaseMode::Clamp, &mut rng).unwrap();
        assert!((updated.members() - same.members()).amax() < 1e-12);

        let one = ens.member(0);
        let mut identical = Ensemble::from_members(&[one.clone(), one.clone(), one]).unwrap();
        let before = identical.clone();
        let far = Observation::new(vec![0], vec![42.0], 0.0).unwrap();
        identical.update(&far, &b, &ROLES, &[0.01], true, PhaseMode::Clamp, &mut rng).unwrap();
        assert_eq!(identical.members(), before.members());
    }

    #[test]
    fn update_is_deterministic_per_seed() {
        let b = basis();
        let obs = Observation::new(vec![0], vec![0.1], 0.0).unwrap();
        let run = |seed| {
            let mut ens = random_ensemble(6, 8);
            let mut rng = seeded_rng(seed);
            ens.update(&obs, &b, &ROLES, &[0.05], true, PhaseMode::Clamp, &mut rng).unwrap();
            ens
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn trajectory_of_identical_members_has_zero_spread() {
        let ens = random_ensemble(7, 3);
        let one = ens.member(1);
        let same = Ensemble::from_members(&[one.clone(), one.clone()]).unwrap();
        let b = basis();
        let (mean, std) = same.predict_trajectory(&b, 1, 0.2, 0.9, 30).unwrap();
        let phases: Vec<f64> = (0..30).map(|k| 0.2 + 0.7 * k as f64 / 29.0).collect();
        let recon = b.reconstruct_block(&one[WEIGHTS + 6..], &phases, 1).unwrap();
        for k in 0..30 {
            assert!((mean[k] - recon[k]).abs() < 1e-14);
            assert_eq!(std[k], 0.0);
        }
        let (point, _) = ens.predict_trajectory(&b, 0, 0.4, 0.4, 10).unwrap();
        assert_eq!(point.len(), 1);
        assert!(ens.predict_trajectory(&b, 2, 0.0, 1.0, 10).is_err());
    }
}
