//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LbfgsConfig {
    /// Number of correction pairs kept.
    pub history: usize,
    pub max_iters: usize,
    /// Stop when the gradient infinity norm drops below this.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 10,
            max_iters: 100,
            grad_tol: 1e-10,
            c1: 1e-4,
            max_backtracks: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    MaxIterations,
    GradientTolerance,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` starting from `x`, which is overwritten with the best point found.
///
/// `f(x, grad)` returns the cost and writes the gradient. A non-finite cost at the
/// starting point is an error; non-finite costs during the line search shrink the step.
pub fn minimize<F>(mut f: F, x: &mut [f64], cfg: &LbfgsConfig) -> Result<LbfgsReport>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut cost = f(x, &mut g);
    let mut evaluations = 1;
    if !cost.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite cost {cost} at the starting point"
        )));
    }
    let initial_cost = cost;

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.history);
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha_buf = vec![0.0; cfg.history];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= cfg.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }

        // two-loop recursion
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[k] = a;
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / dot(&g, &g).sqrt().max(1e-300),
        };
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            let a = alpha_buf[k];
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (a - b) * si);
        }

        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction; fall back to steepest descent
            pairs.clear();
            let scale = 1.0 / dot(&g, &g).sqrt().max(1e-300);
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi * scale);
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..cfg.max_backtracks {
            x_new
                .iter_mut()
                .zip(x.iter().zip(&dir))
                .for_each(|(xn, (xi, di))| *xn = xi + step * di);
            let c = f(&x_new, &mut g_new);
            evaluations += 1;
            if c.is_finite()
                && g_new.iter().all(|v| v.is_finite())
                && c <= cost + cfg.c1 * step * slope
            {
                accepted = true;
                let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if pairs.len() == cfg.history {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, y, 1.0 / sy));
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                cost = c;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            termination = Termination::LineSearchFailed;
            break;
        }
    }

    Ok(LbfgsReport {
        iterations,
        evaluations,
        initial_cost,
        final_cost: cost,
        termination,
    })
}
