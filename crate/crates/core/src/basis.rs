//! Basis-function families, weight fitting and squared-basis integrals.
//!
//! Every channel `d` of a demonstration is approximated as a weighted sum of
//! `B^d` basis functions of phase. The per-channel weight blocks are
//! concatenated into one latent weight vector whose layout is described by
//! [`WeightLayout`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, numerical};
use crate::Result;

/// Default number of basis functions per channel.
pub const DEFAULT_BASIS_COUNT: usize = 15;
/// Default ridge added to the least-squares weight fit.
pub const DEFAULT_RIDGE: f64 = 1e-6;
/// Default number of grid points used to key the [`PsiCache`].
pub const DEFAULT_PSI_GRID: usize = 1001;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// The shape of each basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    /// `exp(-((φ-μ)/(2σ))²) / (σ√(2π))`.
    Gaussian,
    /// Periodic bump on the unit circle with the same peak height and
    /// curvature at its center as the Gaussian of equal width.
    VonMises,
    /// Monomials `φ^k`; centers encode the degree as `k = round(μ·(B-1))`.
    Polynomial,
}

/// Gaussian basis function with the `(2σ)` denominator inside the square.
#[inline]
pub fn gaussian(phase: f64, center: f64, width: f64) -> f64 {
    let z = (phase - center) / (2.0 * width);
    libm::exp(-z * z) / (width * SQRT_2PI)
}

#[inline]
fn von_mises(phase: f64, center: f64, width: f64) -> f64 {
    let kappa = 1.0 / (8.0 * PI * PI * width * width);
    libm::exp(kappa * (libm::cos(2.0 * PI * (phase - center)) - 1.0)) / (width * SQRT_2PI)
}

#[inline]
fn degree(center: f64, count: usize) -> i32 {
    libm::round(center * (count - 1) as f64) as i32
}

/// Maps each channel to its block of the concatenated weight vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightLayout {
    blocks: Vec<Range<usize>>,
}

impl WeightLayout {
    /// Builds a layout from per-channel block lengths.
    pub fn from_counts(counts: &[usize]) -> Self {
        let mut offset = 0;
        let blocks = counts
            .iter()
            .map(|&n| {
                let r = offset..offset + n;
                offset += n;
                r
            })
            .collect();
        Self { blocks }
    }

    /// Index range of the channel's block.
    pub fn block(&self, channel: usize) -> Result<Range<usize>> {
        self.blocks
            .get(channel)
            .cloned()
            .ok_or_else(|| domain!("unknown channel index {channel}"))
    }

    /// Total length `B = Σ_d B^d`.
    pub fn total(&self) -> usize {
        self.blocks.last().map_or(0, |r| r.end)
    }

    /// Number of channels.
    pub fn channels(&self) -> usize {
        self.blocks.len()
    }
}

/// A concatenated weight vector together with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    layout: WeightLayout,
    values: Vec<f64>,
}

impl WeightVector {
    /// Wraps `values`; the length must match the layout.
    pub fn new(layout: WeightLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(domain!(
                "weight vector has {} entries, layout expects {}",
                values.len(),
                layout.total()
            ));
        }
        Ok(Self { layout, values })
    }

    /// All-zero weights for a layout.
    pub fn zeros(layout: WeightLayout) -> Self {
        let values = vec![0.0; layout.total()];
        Self { layout, values }
    }

    /// Weights of one channel.
    pub fn block(&self, channel: usize) -> Result<&[f64]> {
        Ok(&self.values[self.layout.block(channel)?])
    }

    /// Mutable weights of one channel.
    pub fn block_mut(&mut self, channel: usize) -> Result<&mut [f64]> {
        let r = self.layout.block(channel)?;
        Ok(&mut self.values[r])
    }

    /// The full concatenated vector.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// The block layout.
    pub fn layout(&self) -> &WeightLayout {
        &self.layout
    }

    /// Consumes the wrapper, returning the raw vector.
    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

/// Basis family, centers and width for every channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisModel {
    family: BasisFamily,
    width: f64,
    centers: Vec<Vec<f64>>,
}

impl BasisModel {
    /// Builds a model from explicit per-channel centers.
    pub fn new(family: BasisFamily, width: f64, centers: Vec<Vec<f64>>) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(config!("basis width must be positive, got {width}"));
        }
        for (d, c) in centers.iter().enumerate() {
            if c.len() < 2 {
                return Err(config!("channel {d} needs at least 2 basis functions"));
            }
            if let Some(bad) = c.iter().find(|&&m| !(0.0..=1.0).contains(&m)) {
                return Err(config!("basis center {bad} of channel {d} outside [0, 1]"));
            }
        }
        Ok(Self { family, width, centers })
    }

    /// `count` centers spaced uniformly on `[0, 1]` for each of `channels`
    /// channels, with width `1/count`.
    pub fn uniform(family: BasisFamily, channels: usize, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(config!("basis count must be at least 2, got {count}"));
        }
        Self::uniform_with_width(family, channels, count, 1.0 / count as f64)
    }

    /// Uniform centers with an explicit width.
    pub fn uniform_with_width(
        family: BasisFamily,
        channels: usize,
        count: usize,
        width: f64,
    ) -> Result<Self> {
        if count < 2 {
            return Err(config!("basis count must be at least 2, got {count}"));
        }
        let step = 1.0 / (count - 1) as f64;
        let centers: Vec<f64> = (0..count).map(|b| b as f64 * step).collect();
        Self::new(family, width, vec![centers; channels])
    }

    /// Basis family.
    pub fn family(&self) -> BasisFamily {
        self.family
    }

    /// Shared width σ.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Number of channels.
    pub fn channels(&self) -> usize {
        self.centers.len()
    }

    /// Centers of one channel.
    pub fn centers(&self, channel: usize) -> Result<&[f64]> {
        self.centers
            .get(channel)
            .map(Vec::as_slice)
            .ok_or_else(|| domain!("unknown channel index {channel}"))
    }

    /// `B^d` for one channel.
    pub fn basis_count(&self, channel: usize) -> Result<usize> {
        Ok(self.centers(channel)?.len())
    }

    /// Layout of the concatenated weight vector.
    pub fn layout(&self) -> WeightLayout {
        let counts: Vec<usize> = self.centers.iter().map(Vec::len).collect();
        WeightLayout::from_counts(&counts)
    }

    #[inline]
    fn value(&self, phase: f64, center: f64, count: usize) -> f64 {
        match self.family {
            BasisFamily::Gaussian => gaussian(phase, center, self.width),
            BasisFamily::VonMises => von_mises(phase, center, self.width),
            BasisFamily::Polynomial => libm::pow(phase, degree(center, count) as f64),
        }
    }

    /// Feature vector `Φ(φ)` of one channel.
    pub fn evaluate(&self, phase: f64, channel: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.basis_count(channel)?];
        self.evaluate_into(phase, channel, &mut out)?;
        Ok(out)
    }

    /// Writes `Φ(φ)` into `out`, which must have length `B^d`.
    pub fn evaluate_into(&self, phase: f64, channel: usize, out: &mut [f64]) -> Result<()> {
        check_phase(phase)?;
        let centers = self.centers(channel)?;
        if out.len() != centers.len() {
            return Err(domain!(
                "output buffer has length {}, channel {channel} has {} basis functions",
                out.len(),
                centers.len()
            ));
        }
        let n = centers.len();
        for (o, &mu) in out.iter_mut().zip(centers) {
            *o = self.value(phase, mu, n);
        }
        Ok(())
    }

    /// Inner product `Φ(φ)ᵀ w` without allocating.
    pub fn dot(&self, phase: f64, channel: usize, weights: &[f64]) -> Result<f64> {
        check_phase(phase)?;
        let centers = self.centers(channel)?;
        if weights.len() != centers.len() {
            return Err(domain!(
                "weight block has length {}, channel {channel} has {} basis functions",
                weights.len(),
                centers.len()
            ));
        }
        let n = centers.len();
        Ok(centers
            .iter()
            .zip(weights)
            .map(|(&mu, &w)| self.value(phase, mu, n) * w)
            .sum())
    }

    /// `T × B^d` design matrix, one feature row per phase.
    pub fn design_matrix(&self, phases: &[f64], channel: usize) -> Result<DMatrix<f64>> {
        let n = self.basis_count(channel)?;
        let mut m = DMatrix::zeros(phases.len(), n);
        let mut row = vec![0.0; n];
        for (t, &p) in phases.iter().enumerate() {
            self.evaluate_into(p, channel, &mut row)?;
            for (b, v) in row.iter().enumerate() {
                m[(t, b)] = *v;
            }
        }
        Ok(m)
    }

    /// Ridge-regularized least-squares weights for one channel.
    ///
    /// Minimizes `Σ_t (y_t − Φ(φ_t)ᵀw)² + ridge·‖w‖²` through a QR
    /// factorization of the ridge-augmented design.
    pub fn fit_weights(
        &self,
        phases: &[f64],
        samples: &[f64],
        channel: usize,
        ridge: f64,
    ) -> Result<Vec<f64>> {
        let n = self.basis_count(channel)?;
        if phases.len() != samples.len() {
            return Err(domain!(
                "{} phases but {} samples",
                phases.len(),
                samples.len()
            ));
        }
        if phases.len() < n {
            return Err(domain!(
                "need at least {n} samples to fit {n} basis weights, got {}",
                phases.len()
            ));
        }
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(domain!("ridge must be a finite non-negative number, got {ridge}"));
        }
        if phases.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain!("phases must be strictly increasing"));
        }
        let t = phases.len();
        let design = self.design_matrix(phases, channel)?;
        let mut aug = DMatrix::zeros(t + n, n);
        aug.view_mut((0, 0), (t, n)).copy_from(&design);
        let mut rhs = DVector::zeros(t + n);
        rhs.rows_mut(0, t).copy_from_slice(samples);
        let s = libm::sqrt(ridge);
        for b in 0..n {
            aug[(t + b, b)] = s;
        }
        let qr = aug.qr();
        let r = qr.r();
        let max_diag = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let min_diag = (0..n).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if !(min_diag > 1e-12 * max_diag) {
            return Err(numerical!(
                "design matrix for channel {channel} is rank deficient; set ridge > 0"
            ));
        }
        let qty = qr.q().transpose() * rhs;
        let w = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| numerical!("triangular solve failed for channel {channel}"))?;
        Ok(w.iter().copied().collect())
    }

    /// Reconstructs a channel from its weight block at the given phases.
    pub fn reconstruct_block(
        &self,
        block: &[f64],
        phases: &[f64],
        channel: usize,
    ) -> Result<Vec<f64>> {
        phases.iter().map(|&p| self.dot(p, channel, block)).collect()
    }

    /// Reconstructs a channel from a full weight vector.
    pub fn reconstruct(
        &self,
        weights: &WeightVector,
        phases: &[f64],
        channel: usize,
    ) -> Result<Vec<f64>> {
        self.reconstruct_block(weights.block(channel)?, phases, channel)
    }

    /// `∫_lo^hi Φ_b(φ)² dφ` for every basis function of a channel, uncached.
    pub fn psi(&self, lo: f64, hi: f64, channel: usize) -> Result<Vec<f64>> {
        check_interval(lo, hi)?;
        let centers = self.centers(channel)?;
        let n = centers.len();
        centers
            .iter()
            .map(|&mu| match self.family {
                BasisFamily::Gaussian => squared_basis_integral(mu, self.width, lo, hi),
                BasisFamily::Polynomial => {
                    let e = 2 * degree(mu, n) + 1;
                    Ok((libm::pow(hi, e as f64) - libm::pow(lo, e as f64)) / e as f64)
                }
                BasisFamily::VonMises => Ok(composite_gauss_legendre(
                    |p| {
                        let v = von_mises(p, mu, self.width);
                        v * v
                    },
                    lo,
                    hi,
                    64,
                )),
            })
            .collect()
    }
}

/// Vectorized [`squared_basis_integral`] over a channel's centers.
pub fn precompute_psi(model: &BasisModel, lo: f64, hi: f64, channel: usize) -> Result<Vec<f64>> {
    model.psi(lo, hi, channel)
}

fn check_phase(phase: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phase) {
        return Err(domain!("phase {phase} outside [0, 1]"));
    }
    Ok(())
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
        return Err(domain!("interval [{lo}, {hi}] outside [0, 1]"));
    }
    if lo > hi {
        return Err(domain!("interval lower limit {lo} exceeds upper limit {hi}"));
    }
    Ok(())
}

const GL10_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL10_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_legendre10(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL10_NODES.iter().zip(&GL10_WEIGHTS) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

fn composite_gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            gauss_legendre10(&f, lo, lo + h)
        })
        .sum()
}

/// `∫_a^b e^{-t²} dt` without cancellation.
fn gauss_integral(a: f64, b: f64) -> f64 {
    const HALF_SQRT_PI: f64 = 0.886_226_925_452_758;
    if b - a < 0.25 {
        // erf differences lose digits on short intervals
        return gauss_legendre10(|t| libm::exp(-t * t), a, b);
    }
    if a >= 0.0 {
        HALF_SQRT_PI * (libm::erfc(a) - libm::erfc(b))
    } else if b <= 0.0 {
        HALF_SQRT_PI * (libm::erfc(-b) - libm::erfc(-a))
    } else {
        HALF_SQRT_PI * (libm::erf(b) - libm::erf(a))
    }
}

/// `Ψ = ∫_lo^hi Φ(φ)² dφ` for a Gaussian basis function.
///
/// With `Φ(φ) = e^{-((φ-μ)/(2σ))²}/(σ√(2π))` the squared integrand is a
/// Gaussian of standard deviation σ, so
/// `Ψ = (erf((hi-μ)/(√2σ)) − erf((lo-μ)/(√2σ))) / (2√(2π) σ)`.
pub fn squared_basis_integral(center: f64, width: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(width > 0.0) {
        return Err(domain!("width must be positive, got {width}"));
    }
    check_interval(lo, hi)?;
    if lo == hi {
        return Ok(0.0);
    }
    let scale = core::f64::consts::SQRT_2 * width;
    let a = (lo - center) / scale;
    let b = (hi - center) / scale;
    // ∫Φ² dφ = (1/(2πσ²))·√2σ·∫e^{-t²}dt
    Ok(gauss_integral(a, b) / (core::f64::consts::SQRT_2 * PI * width))
}

/// Memoizes Ψ vectors for intervals whose endpoints sit on a uniform phase
/// grid. Off-grid queries are evaluated exactly and not stored.
///
/// Lookups take `&mut self`, so a shared cache must be filled before it is
/// shared or wrapped in a lock.
#[derive(Debug, Clone)]
pub struct PsiCache {
    model: BasisModel,
    resolution: usize,
    entries: BTreeMap<(usize, usize, usize), Vec<f64>>,
    hits: u64,
    misses: u64,
}

impl PsiCache {
    /// Cache over a grid of `resolution` points on `[0, 1]`.
    pub fn new(model: BasisModel, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(config!("psi grid needs at least 2 points, got {resolution}"));
        }
        Ok(Self {
            model,
            resolution,
            entries: BTreeMap::new(),
            hits: 0,
            misses: 0,
        })
    }

    fn grid_index(&self, phase: f64) -> Option<usize> {
        let scale = (self.resolution - 1) as f64;
        let i = libm::round(phase * scale);
        ((i / scale - phase).abs() <= 1e-12).then_some(i as usize)
    }

    /// Ψ over `[lo, hi]` for every basis function of `channel`.
    pub fn get(&mut self, lo: f64, hi: f64, channel: usize) -> Result<Vec<f64>> {
        check_interval(lo, hi)?;
        match (self.grid_index(lo), self.grid_index(hi)) {
            (Some(i), Some(j)) => {
                let key = (channel, i, j);
                if let Some(v) = self.entries.get(&key) {
                    self.hits += 1;
                    return Ok(v.clone());
                }
                self.misses += 1;
                let v = self.model.psi(lo, hi, channel)?;
                self.entries.insert(key, v.clone());
                Ok(v)
            }
            _ => {
                self.misses += 1;
                self.model.psi(lo, hi, channel)
            }
        }
    }

    /// Fills every `[g_i, g_j]` grid interval for a channel with `j − i ≤ max_span` steps.
    pub fn warm(&mut self, channel: usize, max_span: usize) -> Result<()> {
        let scale = (self.resolution - 1) as f64;
        for i in 0..self.resolution {
            for j in i..self.resolution.min(i + max_span + 1) {
                self.get(i as f64 / scale, j as f64 / scale, channel)?;
            }
        }
        Ok(())
    }

    /// `(hits, misses)` since construction.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits, self.misses)
    }

    /// The model the cache evaluates.
    pub fn model(&self) -> &BasisModel {
        &self.model
    }
}
