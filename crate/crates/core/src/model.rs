//! Demonstrations, training, and the ensemble prior.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisModel, WeightLayout, DEFAULT_BASIS_COUNT, DEFAULT_RIDGE};
use crate::error::{config, domain, format_err};
use crate::filter::{Ensemble, PhaseMode, ProcessNoise, PHASE, VELOCITY, WEIGHTS};
use crate::Result;

/// What a channel is at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Measured live by sensors.
    Observed,
    /// Never measured at runtime; only predicted.
    Latent,
    /// Commanded by the controller.
    Control,
}

impl Role {
    /// Tag used in dataset files.
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Observed => "observed",
            Role::Latent => "latent",
            Role::Control => "control",
        }
    }

    /// Parses a dataset role tag.
    pub fn parse(tag: &str) -> Option<Role> {
        match tag.trim() {
            "observed" => Some(Role::Observed),
            "latent" => Some(Role::Latent),
            "control" => Some(Role::Control),
            _ => None,
        }
    }
}

/// Name and role of one channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Channel name, unique within a schema.
    pub name: String,
    /// Runtime role.
    pub role: Role,
}

impl ChannelSpec {
    /// Convenience constructor.
    pub fn new(name: impl Into<String>, role: Role) -> Self {
        Self { name: name.into(), role }
    }
}

/// One recorded action instance: `D` channels of equal length `T ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    channels: Vec<ChannelSpec>,
    samples: Vec<Vec<f64>>,
    sample_rate: f64,
    phases: Vec<f64>,
}

impl Demonstration {
    /// Validates channel-major `samples` and assigns linear phases
    /// `φ(t) = t/(T−1)`.
    pub fn new(channels: Vec<ChannelSpec>, samples: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if channels.len() != samples.len() {
            return Err(format_err!(
                "{} channel headers but {} sample columns",
                channels.len(),
                samples.len()
            ));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(format_err!("sample rate must be positive, got {sample_rate}"));
        }
        validate_schema(&channels)?;
        let len = samples.first().map_or(0, Vec::len);
        for (spec, series) in channels.iter().zip(&samples) {
            if series.len() != len {
                return Err(format_err!(
                    "ragged channels: '{}' has {} rows, expected {len}",
                    spec.name,
                    series.len()
                ));
            }
            if let Some(row) = series.iter().position(|v| !v.is_finite()) {
                return Err(format_err!(
                    "non-finite sample in channel '{}' at row {row}",
                    spec.name
                ));
            }
        }
        if len < 2 {
            return Err(format_err!("a demonstration needs at least 2 rows, got {len}"));
        }
        let phases = linear_phases(len);
        Ok(Self {
            channels,
            samples,
            sample_rate,
            phases,
        })
    }

    /// Channel schema.
    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    /// Number of samples `T`.
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    /// Always false; demonstrations hold at least two rows.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sample rate in Hz.
    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Phase of every row.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Samples of one channel.
    pub fn series(&self, channel: usize) -> Result<&[f64]> {
        self.samples
            .get(channel)
            .map(Vec::as_slice)
            .ok_or_else(|| domain!("unknown channel index {channel}"))
    }

    /// Index of a channel by name.
    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    /// Cuts a continuous recording at the given row markers. Each segment
    /// runs from one marker to the next (the last to the end of the
    /// recording) and gets its own phases on `[0, 1]`.
    pub fn split(&self, markers: &[usize]) -> Result<Vec<Demonstration>> {
        if markers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain!("stride markers must be strictly increasing"));
        }
        let mut bounds: Vec<usize> = markers.to_vec();
        bounds.push(self.len());
        bounds
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                if b > self.len() {
                    return Err(domain!("marker {a} beyond recording length {}", self.len()));
                }
                let samples = self.samples.iter().map(|s| s[a..b].to_vec()).collect();
                Demonstration::new(self.channels.clone(), samples, self.sample_rate)
            })
            .collect()
    }
}

fn linear_phases(len: usize) -> Vec<f64> {
    let last = (len - 1) as f64;
    (0..len).map(|t| t as f64 / last).collect()
}

fn validate_schema(channels: &[ChannelSpec]) -> Result<()> {
    let count = |r: Role| channels.iter().filter(|c| c.role == r).count();
    if count(Role::Observed) == 0 {
        return Err(format_err!("schema has no observed channel"));
    }
    if count(Role::Control) == 0 {
        return Err(format_err!("schema has no control channel"));
    }
    for (i, c) in channels.iter().enumerate() {
        if channels[..i].iter().any(|o| o.name == c.name) {
            return Err(format_err!("duplicate channel name '{}'", c.name));
        }
    }
    Ok(())
}

/// Training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Basis family shared by all channels.
    pub family: BasisFamily,
    /// Basis functions per channel.
    pub basis_count: usize,
    /// Basis width; `1/basis_count` when absent.
    pub width: Option<f64>,
    /// Ridge of the weight fit.
    pub ridge: f64,
    /// Ensemble size; all demonstrations are used when absent or larger than `N`.
    pub ensemble_size: Option<usize>,
    /// Seed for member subsampling.
    pub seed: u64,
    /// Observation-noise floor as a fraction of each channel's squared range.
    pub noise_floor: f64,
    /// Process noise of the filter.
    pub process_noise: ProcessNoise,
    /// Phase handling at the end of an action.
    pub phase_mode: PhaseMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            family: BasisFamily::Gaussian,
            basis_count: DEFAULT_BASIS_COUNT,
            width: None,
            ridge: DEFAULT_RIDGE,
            ensemble_size: None,
            seed: 0,
            noise_floor: 1e-6,
            process_noise: ProcessNoise::default(),
            phase_mode: PhaseMode::Clamp,
        }
    }
}

/// A trained interaction-primitive model.
///
/// Members are stored row-wise as `[φ, φ̇, w]`; `φ̇` is in phase per sample,
/// so it is multiplied by the sample rate when the filter advances by
/// seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IPModel {
    /// Channel schema shared by all demonstrations.
    pub channels: Vec<ChannelSpec>,
    /// Basis shared by all channels.
    pub basis: BasisModel,
    /// Initial ensemble members.
    pub members: Vec<Vec<f64>>,
    /// Elementwise minimum of the member weights.
    pub weight_lower: Vec<f64>,
    /// Elementwise maximum of the member weights.
    pub weight_upper: Vec<f64>,
    /// Mean phase velocity per sample.
    pub mean_phase_velocity: f64,
    /// Sample rate of the training data in Hz.
    pub sample_rate: f64,
    /// Diagonal observation noise per channel; `None` for unobserved channels.
    pub observation_noise: Vec<Option<f64>>,
    /// Process noise of the filter.
    pub process_noise: ProcessNoise,
    /// Phase handling at the end of an action.
    pub phase_mode: PhaseMode,
}

impl IPModel {
    /// Ensemble size `E`.
    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }

    /// Layout of the weight part of the state.
    pub fn layout(&self) -> WeightLayout {
        self.basis.layout()
    }

    /// Length of a member state `2 + B`.
    pub fn state_dim(&self) -> usize {
        WEIGHTS + self.layout().total()
    }

    /// Index of a channel by name.
    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    /// Index of a channel by name, as an error when missing.
    pub fn require_channel(&self, name: &str) -> Result<usize> {
        self.channel_index(name)
            .ok_or_else(|| domain!("model has no channel named '{name}'"))
    }

    /// Channel roles in schema order.
    pub fn roles(&self) -> Vec<Role> {
        self.channels.iter().map(|c| c.role).collect()
    }

    /// First channel with the control role.
    pub fn control_channel(&self) -> usize {
        self.channels
            .iter()
            .position(|c| c.role == Role::Control)
            .expect("validated schema has a control channel")
    }

    /// Indices of the observed channels.
    pub fn observed_channels(&self) -> Vec<usize> {
        (0..self.channels.len())
            .filter(|&d| self.channels[d].role == Role::Observed)
            .collect()
    }

    /// Diagonal `R` restricted to `channels`.
    pub fn noise_for(&self, channels: &[usize]) -> Result<Vec<f64>> {
        channels
            .iter()
            .map(|&d| {
                self.observation_noise
                    .get(d)
                    .copied()
                    .flatten()
                    .ok_or_else(|| domain!("channel {d} has no observation noise; it is not observed"))
            })
            .collect()
    }

    /// Lower and upper weight bounds of one channel's block.
    pub fn block_bounds(&self, channel: usize) -> Result<(&[f64], &[f64])> {
        let r = self.layout().block(channel)?;
        Ok((&self.weight_lower[r.clone()], &self.weight_upper[r]))
    }

    /// The prior ensemble as a filter state.
    pub fn initial_ensemble(&self) -> Ensemble {
        Ensemble::from_members(&self.members).expect("trained members are consistent")
    }

    /// Sample mean and unbiased covariance of the prior over `[φ, φ̇, w]`.
    pub fn prior_statistics(&self) -> (DVector<f64>, DMatrix<f64>) {
        self.initial_ensemble().posterior()
    }

    /// Checks internal consistency after deserialization.
    pub fn validate(&self) -> Result<()> {
        validate_schema(&self.channels)?;
        if self.basis.channels() != self.channels.len() {
            return Err(format_err!("basis covers {} channels, schema has {}", self.basis.channels(), self.channels.len()));
        }
        let dim = self.state_dim();
        if self.members.len() < 2 {
            return Err(format_err!("ensemble needs at least 2 members"));
        }
        if self.members.iter().any(|m| m.len() != dim || m.iter().any(|v| !v.is_finite())) {
            return Err(format_err!("ensemble members must be finite vectors of length {dim}"));
        }
        let b = dim - WEIGHTS;
        if self.weight_lower.len() != b || self.weight_upper.len() != b {
            return Err(format_err!("weight bounds must have length {b}"));
        }
        if self.weight_lower.iter().zip(&self.weight_upper).any(|(l, u)| l > u) {
            return Err(format_err!("weight lower bound exceeds upper bound"));
        }
        if self.observation_noise.len() != self.channels.len() {
            return Err(format_err!("observation noise must list every channel"));
        }
        for (c, r) in self.channels.iter().zip(&self.observation_noise) {
            match (c.role, r) {
                (Role::Observed, Some(v)) if *v > 0.0 => {}
                (Role::Observed, _) => {
                    return Err(format_err!("observed channel '{}' needs positive noise", c.name))
                }
                (_, None) => {}
                (_, Some(_)) => {
                    return Err(format_err!("unobserved channel '{}' must not carry noise", c.name))
                }
            }
        }
        if !(self.sample_rate > 0.0) {
            return Err(format_err!("sample rate must be positive"));
        }
        Ok(())
    }
}

/// Encodes every demonstration as basis weights and builds the ensemble prior.
///
/// Deterministic given `demos` and `config`.
pub fn train(demos: &[Demonstration], config: &TrainConfig) -> Result<IPModel> {
    if demos.len() < 2 {
        return Err(config!(
            "training needs at least 2 demonstrations, got {}",
            demos.len()
        ));
    }
    if config.noise_floor < 0.0 {
        return Err(config!("noise floor must be non-negative"));
    }
    let schema = demos[0].channels();
    let rate = demos[0].sample_rate();
    for (n, d) in demos.iter().enumerate() {
        if d.channels() != schema {
            return Err(format_err!("demonstration {n} has a different channel schema"));
        }
        if d.sample_rate() != rate {
            return Err(format_err!("demonstration {n} has a different sample rate"));
        }
    }
    let channels = schema.len();
    let basis = match config.width {
        Some(w) => BasisModel::uniform_with_width(config.family, channels, config.basis_count, w)?,
        None => BasisModel::uniform(config.family, channels, config.basis_count)?,
    };
    let layout = basis.layout();

    let mut members = Vec::with_capacity(demos.len());
    let mut sq_residual = vec![0.0; channels];
    let mut dof = vec![0.0; channels];
    let mut lo = vec![f64::INFINITY; channels];
    let mut hi = vec![f64::NEG_INFINITY; channels];
    for demo in demos {
        let mut state = vec![0.0; WEIGHTS + layout.total()];
        state[PHASE] = 0.0;
        state[VELOCITY] = 1.0 / (demo.len() - 1) as f64;
        for d in 0..channels {
            let y = demo.series(d)?;
            let w = basis.fit_weights(demo.phases(), y, d, config.ridge)?;
            let r = layout.block(d)?;
            state[WEIGHTS + r.start..WEIGHTS + r.end].copy_from_slice(&w);
            if schema[d].role == Role::Observed {
                let fit = basis.reconstruct_block(&w, demo.phases(), d)?;
                sq_residual[d] += y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                dof[d] += (y.len() - w.len()) as f64;
                for v in y {
                    lo[d] = lo[d].min(*v);
                    hi[d] = hi[d].max(*v);
                }
            }
        }
        members.push(state);
    }

    let observation_noise = (0..channels)
        .map(|d| {
            (schema[d].role == Role::Observed).then(|| {
                let range = hi[d] - lo[d];
                let floor = (config.noise_floor * range * range).max(f64::MIN_POSITIVE);
                let var = if dof[d] > 0.0 { sq_residual[d] / dof[d] } else { 0.0 };
                var.max(floor)
            })
        })
        .collect();

    let mean_phase_velocity =
        members.iter().map(|m| m[VELOCITY]).sum::<f64>() / members.len() as f64;

    if let Some(e) = config.ensemble_size {
        if e < 2 {
            return Err(config!("ensemble size must be at least 2, got {e}"));
        }
        if e < members.len() {
            let mut rng = crate::seeded_rng(config.seed);
            let mut keep = index::sample(&mut rng, members.len(), e).into_vec();
            keep.sort_unstable();
            members = keep.into_iter().map(|i| members[i].clone()).collect();
        }
    }

    let b = layout.total();
    let mut weight_lower = vec![f64::INFINITY; b];
    let mut weight_upper = vec![f64::NEG_INFINITY; b];
    for m in &members {
        for (i, w) in m[WEIGHTS..].iter().enumerate() {
            weight_lower[i] = weight_lower[i].min(*w);
            weight_upper[i] = weight_upper[i].max(*w);
        }
    }

    Ok(IPModel {
        channels: schema.to_vec(),
        basis,
        members,
        weight_lower,
        weight_upper,
        mean_phase_velocity,
        sample_rate: rate,
        observation_noise,
        process_noise: config.process_noise,
        phase_mode: config.phase_mode,
    })
}
