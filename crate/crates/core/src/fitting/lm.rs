//! Small dense Levenberg–Marquardt solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{invert_spd, solve_spd, sqrt};

/// Least-squares problem with an analytic Jacobian.
pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Fill `r` with residuals and, when given, `jac` (row-major,
    /// `n_residuals × n_params`).
    fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_iterations: usize,
    /// Stop when `‖Δp‖ < rel_tolerance·‖p‖`.
    pub rel_tolerance: f64,
    /// Damping at which the current point is taken as the minimum.
    pub max_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            max_iterations: 200,
            rel_tolerance: 1e-8,
            max_damping: 1e16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Σ r².
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(JᵀJ)⁻¹` at the solution, row-major, if it is invertible.
    pub inv_normal: Option<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

fn normal_equations(jac: &[f64], r: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = r.len();
    let mut a = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    for k in 0..m {
        let row = &jac[k * n..(k + 1) * n];
        for i in 0..n {
            g[i] += row[i] * r[k];
            for j in 0..=i {
                a[i * n + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[j * n + i] = a[i * n + j];
        }
    }
    (a, g)
}

pub fn minimize<P: Problem>(problem: &P, start: &[f64], settings: &LmSettings) -> LmOutcome {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut p = start.to_vec();
    let mut r = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    let mut trial_r = vec![0.0; m];
    problem.eval(&p, &mut r, Some(&mut jac));
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = settings.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iterations && cost.is_finite() {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let (a, g) = normal_equations(&jac, &r, n);
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
        let floor = 1e-12 * max_diag + f64::MIN_POSITIVE;
        let mut accepted = false;
        while lambda <= settings.max_damping {
            let mut damped = a.clone();
            for i in 0..n {
                damped[i * n + i] += lambda * a[i * n + i].max(floor);
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            if let Some(step) = solve_spd(&damped, &neg_g) {
                let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
                problem.eval(&trial, &mut trial_r, None);
                let trial_cost: f64 = trial_r.iter().map(|v| v * v).sum();
                if trial_cost.is_finite() && trial_cost <= cost {
                    let small = norm(&step) < settings.rel_tolerance * (norm(&p) + settings.rel_tolerance);
                    p = trial;
                    cost = trial_cost;
                    lambda = (lambda / settings.damping_down).max(1e-15);
                    problem.eval(&p, &mut r, Some(&mut jac));
                    accepted = true;
                    if small {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= settings.damping_up;
        }
        if !accepted {
            // No descent direction left at any damping: already at the minimum.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    let (a, _) = normal_equations(&jac, &r, n);
    LmOutcome { params: p, cost, iterations, converged, inv_normal: invert_spd(&a, n) }
}
