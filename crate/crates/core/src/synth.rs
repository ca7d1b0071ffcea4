//! Seeded synthetic world with known ground truth.
//!
//! One action instance (a stride or a jump) spans phase `[0, 1]`. Observed
//! channels are harmonic kinematics with per-instance amplitude jitter and
//! Gaussian measurement noise. The control channel is a nominal profile plus
//! a low-frequency random excitation. The latent force channel follows the
//! affine coupling law
//!
//! ```text
//! F(φ) = F₀(φ) − c·u(φ) + γ·q̈(φ)
//! ```
//!
//! so any control trajectory can be scored exactly after the fact.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::config;
use crate::filter::PhaseMode;
use crate::model::{ChannelSpec, Demonstration, Role};
use crate::{seeded_rng, Result};

/// `amplitude · sin(2π·order·φ + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    /// Multiple of the base frequency.
    pub order: u32,
    /// Peak amplitude.
    pub amplitude: f64,
    /// Phase offset in radians.
    pub phase: f64,
}

impl Harmonic {
    const fn new(order: u32, amplitude: f64, phase: f64) -> Self {
        Self { order, amplitude, phase }
    }
}

/// Constant offset plus a finite sum of harmonics of phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSeries {
    /// Constant term.
    pub offset: f64,
    /// Harmonic terms.
    pub terms: Vec<Harmonic>,
}

impl HarmonicSeries {
    /// Value at `phase`, with the harmonic part scaled by `scale`.
    pub fn value(&self, phase: f64, scale: f64) -> f64 {
        self.offset
            + scale
                * self
                    .terms
                    .iter()
                    .map(|h| h.amplitude * libm::sin(2.0 * PI * h.order as f64 * phase + h.phase))
                    .sum::<f64>()
    }

    /// Second derivative with respect to phase.
    pub fn second_derivative(&self, phase: f64, scale: f64) -> f64 {
        -scale
            * self
                .terms
                .iter()
                .map(|h| {
                    let w = 2.0 * PI * h.order as f64;
                    w * w * h.amplitude * libm::sin(w * phase + h.phase)
                })
                .sum::<f64>()
    }
}

/// One observed kinematic signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChannel {
    /// Channel name.
    pub name: String,
    /// Nominal profile.
    pub series: HarmonicSeries,
}

/// Control profile used while recording demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlLaw {
    /// Channel name.
    pub name: String,
    /// Nominal quasi-active profile `u₀(φ)`.
    pub nominal: HarmonicSeries,
    /// Per-sample standard deviation of the random excitation.
    pub excitation_amplitude: f64,
    /// Highest harmonic present in the excitation; a random constant offset
    /// is always included.
    pub excitation_harmonics: u32,
}

/// Gaussian load peak, e.g. a landing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    /// Phase of the peak.
    pub phase: f64,
    /// Standard deviation in phase.
    pub width: f64,
    /// Peak height before style scaling.
    pub amplitude: f64,
}

/// The coupling law for the latent force channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceLaw {
    /// Channel name.
    pub name: String,
    /// Control-free baseline `F₀(φ)` without the impact.
    pub baseline: HarmonicSeries,
    /// Optional impact added to the baseline.
    pub impact: Option<Impact>,
    /// Gain `c > 0` by which control reduces force.
    pub coupling_gain: f64,
    /// Gain `γ` on the acceleration of one kinematic channel.
    pub accel_gain: f64,
    /// Index of the kinematic channel whose acceleration enters the force.
    pub accel_channel: usize,
}

/// A demonstration style (e.g. soft or hard landing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Style {
    /// Style name.
    pub name: String,
    /// Multiplier on the impact amplitude.
    pub impact_scale: f64,
    /// Multiplier on the harmonic part of every kinematic channel.
    pub kinematic_scale: f64,
}

/// Full description of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Preset or user label.
    pub name: String,
    /// Nominal duration of one action instance in seconds.
    pub stride_period: f64,
    /// Relative standard deviation of the duration.
    pub period_jitter: f64,
    /// Sample rate in Hz.
    pub sample_rate: f64,
    /// Phase handling for models trained on this world.
    pub phase_mode: PhaseMode,
    /// Observed channels.
    pub kinematics: Vec<KinematicChannel>,
    /// Relative standard deviation of per-instance kinematic amplitudes.
    pub amplitude_jitter: f64,
    /// Measurement-noise standard deviation on observed channels.
    pub noise_std: f64,
    /// Control channel.
    pub control: ControlLaw,
    /// Latent force channel.
    pub force: ForceLaw,
    /// Styles; instance `i` of a session uses style `i mod len`.
    pub styles: Vec<Style>,
    /// Observed channel used as the symmetry reference, if any.
    pub reference_channel: Option<String>,
}

fn h(order: u32, amplitude: f64, phase: f64) -> Harmonic {
    Harmonic::new(order, amplitude, phase)
}

fn series(offset: f64, terms: &[Harmonic]) -> HarmonicSeries {
    HarmonicSeries {
        offset,
        terms: terms.to_vec(),
    }
}

fn kin(name: &str, s: HarmonicSeries) -> KinematicChannel {
    KinematicChannel {
        name: name.into(),
        series: s,
    }
}

impl WorldConfig {
    /// Cyclic walking: six kinematic channels, 1.2 s strides at 100 Hz.
    pub fn gait() -> Self {
        Self {
            name: "gait".into(),
            stride_period: 1.2,
            period_jitter: 0.03,
            sample_rate: 100.0,
            phase_mode: PhaseMode::Wrap,
            kinematics: vec![
                kin("hip", series(0.1, &[h(1, 0.45, 0.0), h(2, 0.08, 1.0), h(3, 0.03, 2.0)])),
                kin("knee", series(0.5, &[h(1, 0.35, 1.2), h(2, 0.25, -0.5), h(3, 0.05, 0.3)])),
                kin("ankle_intact", series(0.0, &[h(1, 0.2, 2.4), h(2, 0.1, 0.7), h(3, 0.04, -1.0)])),
                kin("thigh_gyro", series(0.0, &[h(1, 1.5, 1.57), h(2, 0.4, 2.6), h(3, 0.15, 0.4)])),
                kin("shank_gyro", series(0.0, &[h(1, 2.0, 2.8), h(2, 0.7, -2.0), h(3, 0.2, 1.1)])),
                kin("foot_acc", series(1.0, &[h(1, 0.6, -0.3), h(2, 0.5, 1.9), h(3, 0.3, -2.2)])),
            ],
            amplitude_jitter: 0.08,
            noise_std: 0.01,
            control: ControlLaw {
                name: "prosthesis_ankle".into(),
                nominal: series(0.0, &[h(1, 0.15, 2.2), h(2, 0.06, 0.9)]),
                excitation_amplitude: 0.1,
                excitation_harmonics: 5,
            },
            force: ForceLaw {
                name: "knee_force".into(),
                baseline: series(1.0, &[h(1, 0.3, 0.5), h(2, 0.35, -1.2), h(3, 0.08, 0.0)]),
                impact: None,
                coupling_gain: 1.0,
                accel_gain: 0.005,
                accel_channel: 0,
            },
            styles: vec![Style {
                name: "walk".into(),
                impact_scale: 1.0,
                kinematic_scale: 1.0,
            }],
            reference_channel: Some("ankle_intact".into()),
        }
    }

    /// Gait world with eight kinematic channels (ten channels in total).
    pub fn benchmark() -> Self {
        let mut w = Self::gait();
        w.name = "benchmark".into();
        w.kinematics.push(kin(
            "pelvis_tilt",
            series(0.0, &[h(1, 0.1, 0.2), h(2, 0.05, 1.4), h(3, 0.02, -0.6)]),
        ));
        w.kinematics.push(kin(
            "trunk_acc",
            series(0.2, &[h(1, 0.3, -1.1), h(2, 0.2, 0.5), h(3, 0.1, 2.9)]),
        ));
        w
    }

    /// Discrete jump with soft and hard landing styles, clamped phase.
    pub fn jumping() -> Self {
        Self {
            name: "jumping".into(),
            stride_period: 1.5,
            period_jitter: 0.03,
            sample_rate: 100.0,
            phase_mode: PhaseMode::Clamp,
            kinematics: vec![
                kin("knee", series(0.6, &[h(1, 0.5, -1.57), h(2, 0.3, 0.4), h(3, 0.1, 1.3)])),
                kin("hip", series(0.4, &[h(1, 0.4, -1.2), h(2, 0.2, 0.9), h(3, 0.05, -0.2)])),
                kin("ankle_intact", series(0.0, &[h(1, 0.3, 1.0), h(2, 0.15, -0.7), h(3, 0.05, 2.0)])),
                kin("trunk_acc", series(0.0, &[h(1, 0.8, 0.3), h(2, 0.6, 2.1), h(3, 0.4, -1.4)])),
            ],
            amplitude_jitter: 0.05,
            noise_std: 0.01,
            control: ControlLaw {
                name: "prosthesis_ankle".into(),
                nominal: series(0.0, &[h(1, 0.2, 1.0), h(2, 0.1, -0.3)]),
                excitation_amplitude: 0.1,
                excitation_harmonics: 5,
            },
            force: ForceLaw {
                name: "knee_force".into(),
                baseline: series(1.0, &[h(1, 0.2, 0.0), h(2, 0.1, 1.0)]),
                impact: Some(Impact {
                    phase: 0.55,
                    width: 0.06,
                    amplitude: 1.5,
                }),
                coupling_gain: 1.0,
                accel_gain: 0.004,
                accel_channel: 0,
            },
            styles: vec![
                Style {
                    name: "soft".into(),
                    impact_scale: 1.0,
                    kinematic_scale: 1.15,
                },
                Style {
                    name: "hard".into(),
                    impact_scale: 1.8,
                    kinematic_scale: 0.85,
                },
            ],
            reference_channel: Some("ankle_intact".into()),
        }
    }

    /// A named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "gait" => Some(Self::gait()),
            "jumping" => Some(Self::jumping()),
            "benchmark" => Some(Self::benchmark()),
            _ => None,
        }
    }

    /// Checks value ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.stride_period > 0.0) || !(self.sample_rate > 0.0) {
            return Err(config!("stride period and sample rate must be positive"));
        }
        if !(self.stride_period * self.sample_rate >= 2.0) {
            return Err(config!("an action must span at least 2 samples"));
        }
        if !(self.force.coupling_gain > 0.0) {
            return Err(config!("coupling gain must be positive"));
        }
        if !(self.noise_std >= 0.0) || !(self.amplitude_jitter >= 0.0) || !(self.period_jitter >= 0.0) {
            return Err(config!("noise and jitter must be non-negative"));
        }
        if !(self.control.excitation_amplitude >= 0.0) {
            return Err(config!("excitation amplitude must be non-negative"));
        }
        if self.kinematics.is_empty() {
            return Err(config!("world needs at least one kinematic channel"));
        }
        if self.force.accel_channel >= self.kinematics.len() {
            return Err(config!("acceleration channel {} does not exist", self.force.accel_channel));
        }
        if self.styles.is_empty() {
            return Err(config!("world needs at least one style"));
        }
        if let Some(i) = &self.force.impact {
            if !(i.width > 0.0) || !(0.0..=1.0).contains(&i.phase) {
                return Err(config!("impact needs a positive width and a phase in [0, 1]"));
            }
        }
        if let Some(r) = &self.reference_channel {
            if !self.kinematics.iter().any(|k| &k.name == r) {
                return Err(config!("reference channel '{r}' is not a kinematic channel"));
            }
        }
        Ok(())
    }

    /// Channel schema: kinematics (observed), control, force (latent).
    pub fn channels(&self) -> Vec<ChannelSpec> {
        let mut c: Vec<ChannelSpec> = self
            .kinematics
            .iter()
            .map(|k| ChannelSpec::new(k.name.clone(), Role::Observed))
            .collect();
        c.push(ChannelSpec::new(self.control.name.clone(), Role::Control));
        c.push(ChannelSpec::new(self.force.name.clone(), Role::Latent));
        c
    }

    /// Index of the control channel in [`channels`](Self::channels).
    pub fn control_index(&self) -> usize {
        self.kinematics.len()
    }

    /// Index of the force channel in [`channels`](Self::channels).
    pub fn force_index(&self) -> usize {
        self.kinematics.len() + 1
    }

    /// Nominal control `u₀(φ)`.
    pub fn nominal_control(&self, phase: f64) -> f64 {
        self.control.nominal.value(phase, 1.0)
    }

    /// Noiseless kinematic channel `k` of an instance.
    pub fn kinematic(&self, truth: &StrideTruth, k: usize, phase: f64) -> f64 {
        self.kinematics[k].series.value(phase, truth.kinematic_scales[k])
    }

    /// Control recorded during the demonstration: `u₀ + excitation`.
    pub fn demo_control(&self, truth: &StrideTruth, phase: f64) -> f64 {
        self.nominal_control(phase) + self.excitation(truth, phase)
    }

    /// Excitation component of the recorded control.
    pub fn excitation(&self, truth: &StrideTruth, phase: f64) -> f64 {
        let norm = self.control.excitation_amplitude / libm::sqrt(truth.excitation.len().max(1) as f64);
        truth
            .excitation
            .iter()
            .enumerate()
            .map(|(i, [a, b])| {
                let w = 2.0 * PI * i as f64 * phase;
                a * libm::cos(w) + b * libm::sin(w)
            })
            .sum::<f64>()
            * norm
    }

    /// `F₀(φ) + γ·q̈(φ)`: the force with zero control.
    pub fn uncontrolled_force(&self, truth: &StrideTruth, phase: f64) -> f64 {
        let f = &self.force;
        let style = &self.styles[truth.style];
        let mut v = f.baseline.value(phase, 1.0);
        if let Some(i) = &f.impact {
            let z = (phase - i.phase) / i.width;
            v += style.impact_scale * i.amplitude * libm::exp(-0.5 * z * z);
        }
        let k = f.accel_channel;
        let accel = self.kinematics[k]
            .series
            .second_derivative(phase, truth.kinematic_scales[k])
            / (truth.period * truth.period);
        v + f.accel_gain * accel
    }

    /// Force under control value `u` at `phase`.
    pub fn force(&self, truth: &StrideTruth, phase: f64, u: f64) -> f64 {
        self.uncontrolled_force(truth, phase) - self.force.coupling_gain * u
    }
}

/// Hidden parameters of one generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrideTruth {
    /// Position in its session.
    pub index: usize,
    /// Seed the instance was drawn from.
    pub seed: u64,
    /// Style index.
    pub style: usize,
    /// Duration in seconds.
    pub period: f64,
    /// Number of samples.
    pub samples: usize,
    /// Harmonic amplitude multiplier per kinematic channel.
    pub kinematic_scales: Vec<f64>,
    /// `[cos, sin]` excitation coefficients per harmonic, starting with the
    /// constant offset (whose sine coefficient is unused).
    pub excitation: Vec<[f64; 2]>,
    /// Sample index of the impact peak, when the world has one.
    pub event_sample: Option<usize>,
}

impl StrideTruth {
    /// Phase of sample `t`.
    pub fn phase(&self, t: usize) -> f64 {
        t as f64 / (self.samples - 1) as f64
    }
}

/// A generated demonstration with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct StrideRecord {
    /// The recorded channels.
    pub demo: Demonstration,
    /// The hidden parameters.
    pub truth: StrideTruth,
}

/// Seed of instance `index` in a session seeded with `seed`; instance 0 reuses `seed`.
pub fn stride_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn generate_stride(config: &WorldConfig, index: usize, style: usize, seed: u64) -> Result<StrideRecord> {
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let period = config.stride_period * (1.0 + config.period_jitter * normal()).max(0.5);
    let samples = (libm::round(period * config.sample_rate) as usize + 1).max(2);
    let kinematic_scales: Vec<f64> = (0..config.kinematics.len())
        .map(|_| config.styles[style].kinematic_scale * (1.0 + config.amplitude_jitter * normal()))
        .collect();
    let excitation: Vec<[f64; 2]> = (0..=config.control.excitation_harmonics)
        .map(|_| [normal(), normal()])
        .collect();
    let event_sample = config
        .force
        .impact
        .map(|i| libm::round(i.phase * (samples - 1) as f64) as usize);
    let truth = StrideTruth {
        index,
        seed,
        style,
        period,
        samples,
        kinematic_scales,
        excitation,
        event_sample,
    };

    let k = config.kinematics.len();
    let mut columns = vec![vec![0.0; samples]; k + 2];
    for t in 0..samples {
        let phase = truth.phase(t);
        for (c, col) in columns.iter_mut().enumerate().take(k) {
            col[t] = config.kinematic(&truth, c, phase);
        }
        let u = config.demo_control(&truth, phase);
        columns[k][t] = u;
        columns[k + 1][t] = config.force(&truth, phase, u);
    }
    if config.noise_std > 0.0 {
        for col in columns.iter_mut().take(k) {
            for v in col.iter_mut() {
                *v += config.noise_std * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let demo = Demonstration::new(config.channels(), columns, config.sample_rate)?;
    Ok(StrideRecord { demo, truth })
}

/// One instance in the first style, drawn from `demo_seed`.
pub fn generate_demonstration(config: &WorldConfig, demo_seed: u64) -> Result<StrideRecord> {
    generate_stride(config, 0, 0, demo_seed)
}

/// `n` independent instances; instance `i` uses style `i mod styles` and
/// seed [`stride_seed`]`(seed, i)`.
pub fn generate_session(config: &WorldConfig, n: usize, seed: u64) -> Result<Vec<StrideRecord>> {
    if n == 0 {
        return Err(config!("a session needs at least one stride"));
    }
    (0..n)
        .map(|i| generate_stride(config, i, i % config.styles.len(), stride_seed(seed, i)))
        .collect()
}

/// Concatenates instances into one continuous recording and returns the
/// row index where each instance starts.
pub fn concatenate(records: &[StrideRecord]) -> Result<(Demonstration, Vec<usize>)> {
    let first = records
        .first()
        .ok_or_else(|| config!("nothing to concatenate"))?;
    let d = first.demo.channels().len();
    let mut columns = vec![Vec::new(); d];
    let mut markers = Vec::with_capacity(records.len());
    for r in records {
        markers.push(columns[0].len());
        for (c, col) in columns.iter_mut().enumerate() {
            col.extend_from_slice(r.demo.series(c)?);
        }
    }
    let demo = Demonstration::new(first.demo.channels().to_vec(), columns, first.demo.sample_rate())?;
    Ok((demo, markers))
}

/// Ground-truth force for control values sampled on the instance's own
/// phase grid.
pub fn ground_truth_force(config: &WorldConfig, truth: &StrideTruth, control: &[f64]) -> Result<Vec<f64>> {
    if control.len() != truth.samples {
        return Err(config!(
            "control has {} samples, instance has {}",
            control.len(),
            truth.samples
        ));
    }
    Ok(control
        .iter()
        .enumerate()
        .map(|(t, u)| config.force(truth, truth.phase(t), *u))
        .collect())
}
