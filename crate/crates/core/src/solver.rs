//! Box-constrained projected Newton method.
//!
//! Each iteration splits the variables into an ε-active set (at a bound with
//! the gradient pushing outward) and a free set, takes a Newton step on the
//! free set with a diagonal shift when the reduced Hessian is not positive
//! definite, and runs an Armijo search along the projection arc.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Objective with analytic first and second derivatives.
pub trait SmoothObjective {
    /// Objective value.
    fn value(&self, x: &DVector<f64>) -> f64;
    /// Gradient.
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Hessian (symmetric).
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Iteration limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Maximum number of Newton iterations.
    pub max_iterations: usize,
    /// Stop once the infinity norm of the projected gradient step falls below this.
    pub gradient_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-8,
        }
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Final iterate, inside the box.
    pub x: DVector<f64>,
    /// Objective at `x`.
    pub value: f64,
    /// Iterations performed.
    pub iterations: usize,
    /// True when the projected-gradient tolerance was met.
    pub converged: bool,
}

fn project(x: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn projected_gradient_norm(
    x: &DVector<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> f64 {
    (0..x.len())
        .map(|i| (x[i] - (x[i] - g[i]).clamp(lower[i], upper[i])).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `objective` over `lower ≤ x ≤ upper` starting from `x0`.
///
/// The objective value never increases between iterates, so the returned
/// value is at most the value at the projection of `x0`.
pub fn projected_newton<F: SmoothObjective>(
    objective: &F,
    x0: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    options: SolverOptions,
) -> SolveReport {
    let n = x0.len();
    let mut x = x0.clone();
    project(&mut x, lower, upper);
    let mut f = objective.value(&x);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        let g = objective.gradient(&x);
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg <= options.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let eps = pg.min(1e-6);
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let at_lower = x[i] - lower[i] <= eps && g[i] > 0.0;
                let at_upper = upper[i] - x[i] <= eps && g[i] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();

        let mut d = -&g;
        if !free.is_empty() {
            let h = objective.hessian(&x);
            let k = free.len();
            let mut reduced = DMatrix::zeros(k, k);
            let mut g_free = DVector::zeros(k);
            for (a, &i) in free.iter().enumerate() {
                g_free[a] = g[i];
                for (b, &j) in free.iter().enumerate() {
                    reduced[(a, b)] = h[(i, j)];
                }
            }
            if let Some(step) = shifted_newton_step(&reduced, &g_free) {
                for (a, &i) in free.iter().enumerate() {
                    d[i] = step[a];
                }
            }
        }
        if g.dot(&d) >= 0.0 {
            d = -&g;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = &x + &d * alpha;
            project(&mut trial, lower, upper);
            let f_trial = objective.value(&trial);
            let decrease = g.dot(&(&trial - &x));
            if f_trial <= f + 1e-4 * decrease && f_trial <= f {
                accepted = Some((trial, f_trial));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, f_trial)) => {
                let moved = (&trial - &x).amax();
                x = trial;
                f = f_trial;
                if moved == 0.0 {
                    break;
                }
            }
            None => break,
        }
    }

    SolveReport {
        x,
        value: f,
        iterations,
        converged,
    }
}

/// Solves `(H + τI) d = −g` with the smallest shift τ from a geometric
/// ladder that makes the matrix positive definite.
fn shifted_newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1e-12);
    let mut tau = 0.0;
    for _ in 0..24 {
        let mut shifted = h.clone();
        for i in 0..h.nrows() {
            shifted[(i, i)] += tau;
        }
        if let Some(chol) = shifted.cholesky() {
            let step = chol.solve(&(-g));
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        tau = if tau == 0.0 { 1e-8 * scale } else { tau * 10.0 };
    }
    None
}
