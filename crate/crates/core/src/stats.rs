//! Sample statistics over ensembles stored column-wise.

use nalgebra::{DMatrix, DVector};

/// Column mean of a `dim × count` sample matrix.
pub fn sample_mean(samples: &DMatrix<f64>) -> DVector<f64> {
    let n = samples.ncols() as f64;
    let mut mean = DVector::zeros(samples.nrows());
    for col in samples.column_iter() {
        mean += col;
    }
    mean / n
}

/// Unbiased (divisor `count - 1`) sample mean and covariance of the columns.
///
/// Returns a zero covariance when fewer than two samples are given.
pub fn sample_mean_cov(samples: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mean = sample_mean(samples);
    let n = samples.ncols();
    let dim = samples.nrows();
    if n < 2 {
        return (mean, DMatrix::zeros(dim, dim));
    }
    let mut centered = samples.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose();
    cov /= (n - 1) as f64;
    // exact symmetry; the product above is symmetric only up to rounding
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// Mean and unbiased standard deviation of a slice. A single value has zero spread.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}
