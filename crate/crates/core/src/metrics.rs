//! Trial metrics: impulse, peak, value at an event, and local dynamic
//! stability via the largest short-term Lyapunov exponent.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::stats::mean_std;
use crate::Result;

/// Trapezoidal integral of a uniformly sampled signal.
pub fn impulse(signal: &[f64], dt: f64) -> Result<f64> {
    if signal.len() < 2 {
        return Err(domain!("impulse needs at least 2 samples, got {}", signal.len()));
    }
    if !(dt > 0.0) {
        return Err(domain!("dt must be positive, got {dt}"));
    }
    let inner: f64 = signal[1..signal.len() - 1].iter().sum();
    Ok(dt * (0.5 * (signal[0] + signal[signal.len() - 1]) + inner))
}

/// Largest sample.
pub fn peak(signal: &[f64]) -> Result<f64> {
    signal
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| domain!("peak of an empty signal"))
}

/// Sample at `index`.
pub fn value_at_event(signal: &[f64], index: usize) -> Result<f64> {
    signal
        .get(index)
        .copied()
        .ok_or_else(|| domain!("event index {index} outside signal of length {}", signal.len()))
}

/// Root-mean-square difference.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(domain!("rmse needs equal non-empty lengths, got {} and {}", a.len(), b.len()));
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(libm::sqrt(s / a.len() as f64))
}

/// Mean spacing, in samples, between upward crossings of the series mean.
/// `None` when fewer than two crossings exist.
pub fn mean_period(series: &[f64]) -> Option<f64> {
    if series.len() < 3 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let mut first = None;
    let mut last = 0;
    let mut count = 0usize;
    for t in 1..series.len() {
        if series[t - 1] < mean && series[t] >= mean {
            if first.is_none() {
                first = Some(t);
            }
            last = t;
            count += 1;
        }
    }
    match first {
        Some(f) if count >= 2 => Some((last - f) as f64 / (count - 1) as f64),
        _ => None,
    }
}

/// Parameters of the Rosenstein estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    /// Embedding dimension.
    pub embed_dim: usize,
    /// Embedding delay in samples.
    pub delay: usize,
    /// Divergence is fit over steps `0..=fit_window`.
    pub fit_window: usize,
    /// Minimum temporal separation of neighbours in samples; defaults to
    /// one mean period of the series.
    pub min_separation: Option<usize>,
    /// Sample spacing; the exponent is reported per unit of `dt`.
    pub dt: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self {
            embed_dim: 5,
            delay: 10,
            fit_window: 60,
            min_separation: None,
            dt: 1.0,
        }
    }
}

/// Largest short-term Lyapunov exponent (Rosenstein et al.).
///
/// Delay-embeds the series, pairs every point with its nearest neighbour
/// outside the temporal exclusion window, averages the log distance of the
/// pairs `k` steps later and returns the least-squares slope over the fit
/// window.
pub fn lyapunov_exponent(series: &[f64], params: &LyapunovParams) -> Result<f64> {
    let m = params.embed_dim;
    let tau = params.delay;
    let k_max = params.fit_window;
    if m == 0 || (m > 1 && tau == 0) {
        return Err(domain!("embedding needs embed_dim ≥ 1 and delay ≥ 1"));
    }
    if k_max < 1 {
        return Err(domain!("fit window must span at least 2 steps"));
    }
    if !(params.dt > 0.0) {
        return Err(domain!("dt must be positive"));
    }
    if series.len() <= m * tau + k_max {
        return Err(domain!(
            "series of length {} too short for embed_dim {m}, delay {tau}, fit window {k_max}",
            series.len()
        ));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(domain!("series contains non-finite values"));
    }
    let points = series.len() - (m - 1) * tau;
    let separation = params
        .min_separation
        .unwrap_or_else(|| mean_period(series).map_or(0, |p| libm::ceil(p) as usize));
    let dist2 = |i: usize, j: usize| -> f64 {
        (0..m)
            .map(|e| {
                let d = series[i + e * tau] - series[j + e * tau];
                d * d
            })
            .sum()
    };

    // only points with a full divergence horizon take part
    let usable = points - k_max;
    let mut sums = alloc::vec![0.0; k_max + 1];
    let mut counts = alloc::vec![0usize; k_max + 1];
    for i in 0..usable {
        let mut best = f64::INFINITY;
        let mut nn = None;
        for j in 0..usable {
            if i.abs_diff(j) <= separation {
                continue;
            }
            let d = dist2(i, j);
            if d > 0.0 && d < best {
                best = d;
                nn = Some(j);
            }
        }
        let Some(j) = nn else { continue };
        for k in 0..=k_max {
            let d = dist2(i + k, j + k);
            if d > 0.0 {
                sums[k] += 0.5 * libm::log(d);
                counts[k] += 1;
            }
        }
    }

    let curve: Vec<(f64, f64)> = (0..=k_max)
        .filter(|&k| counts[k] > 0)
        .map(|k| (k as f64 * params.dt, sums[k] / counts[k] as f64))
        .collect();
    if curve.len() < 2 {
        return Err(domain!("no neighbour pairs outside the exclusion window"));
    }
    let n = curve.len() as f64;
    let mx = curve.iter().map(|p| p.0).sum::<f64>() / n;
    let my = curve.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = curve.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = curve.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Metrics of one channel in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    /// Channel name.
    pub channel: String,
    /// Trapezoidal integral over the trial (unit·s).
    pub impulse: f64,
    /// Largest sample.
    pub peak: f64,
    /// Sample at the trial's event, when it has one.
    pub value_at_event: Option<f64>,
}

impl ChannelMetrics {
    /// Computes all channel metrics for a signal sampled every `dt` seconds.
    pub fn compute(channel: &str, signal: &[f64], dt: f64, event: Option<usize>) -> Result<Self> {
        Ok(Self {
            channel: channel.into(),
            impulse: impulse(signal, dt)?,
            peak: peak(signal)?,
            value_at_event: event.map(|e| value_at_event(signal, e)).transpose()?,
        })
    }
}

/// Metrics of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// Trial identifier.
    pub trial: usize,
    /// Per-channel metrics.
    pub channels: Vec<ChannelMetrics>,
    /// Largest short-term Lyapunov exponent, when computed.
    pub stability_exponent: Option<f64>,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean.
    pub mean: f64,
    /// Sample standard deviation (0 for one value).
    pub std: f64,
    /// Number of values.
    pub count: usize,
}

/// Mean ± std of `values`.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(domain!("cannot summarize zero values"));
    }
    let (mean, std) = mean_std(values);
    Ok(Summary {
        mean,
        std,
        count: values.len(),
    })
}
