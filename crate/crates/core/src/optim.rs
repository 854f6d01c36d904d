//! Box-projected L-BFGS and gradient descent with backtracking.
//!
//! Both minimise. A step is accepted only if it satisfies the Armijo
//! condition, so the objective never increases across accepted steps.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    LbfgsLike,
    GradientDescent,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Stop once the projected gradient's infinity norm falls below this.
    pub grad_tolerance: f64,
    pub memory: usize,
    pub method: Optimizer,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tolerance: 1e-6,
            memory: 10,
            method: Optimizer::LbfgsLike,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Per-coordinate box; `None` is unbounded.
pub type Bounds = [Option<(f64, f64)>];

fn project(x: &mut [f64], bounds: &Bounds) {
    for (v, b) in x.iter_mut().zip(bounds) {
        if let Some((lo, hi)) = b {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Infinity norm of the gradient with components that push against an
/// active bound zeroed.
fn projected_grad_norm(x: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), b)| match b {
            Some((lo, _)) if xi <= *lo && gi > 0.0 => 0.0,
            Some((_, hi)) if xi >= *hi && gi < 0.0 => 0.0,
            _ => gi.abs(),
        })
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f`, which writes the gradient into its second argument.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &OptimOptions) -> OptimResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const ARMIJO: f64 = 1e-4;
    const MAX_BACKTRACK: usize = 60;

    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut trace = vec![fx];

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    let mut iterations = 0;
    let mut gnorm = projected_grad_norm(&x, &g, bounds);
    let mut converged = gnorm < opts.grad_tolerance;

    while !converged && iterations < opts.max_iters {
        iterations += 1;

        // search direction
        match opts.method {
            Optimizer::GradientDescent => dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi),
            Optimizer::LbfgsLike => two_loop(&g, &s_hist, &y_hist, &mut dir),
        }
        freeze_active(&x, &mut dir, bounds);
        if !(dot(&dir, &g) < 0.0) {
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            freeze_active(&x, &mut dir, bounds);
            s_hist.clear();
            y_hist.clear();
            if !(dot(&dir, &g) < 0.0) {
                break;
            }
        }

        let mut step = if opts.method == Optimizer::GradientDescent || !s_hist.is_empty() {
            1.0
        } else {
            // first quasi-Newton step: at most unit length per coordinate
            1.0 / dir.iter().map(|d| d.abs()).fold(0.0, f64::max).max(1.0)
        };

        let mut accepted = false;
        let mut f_new = fx;
        for _ in 0..MAX_BACKTRACK {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            project(&mut x_new, bounds);
            let decrease: f64 = (0..n).map(|i| (x_new[i] - x[i]) * g[i]).sum();
            if decrease < 0.0 {
                f_new = f(&x_new, &mut g_new);
                if f_new.is_finite() && f_new <= fx + ARMIJO * decrease {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if opts.method == Optimizer::LbfgsLike && sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        trace.push(fx);
        gnorm = projected_grad_norm(&x, &g, bounds);
        converged = gnorm < opts.grad_tolerance;
    }

    OptimResult {
        x,
        value: fx,
        grad_inf_norm: gnorm,
        iterations,
        converged,
        trace,
    }
}

/// Zeroes direction components that would leave the box at an active bound.
fn freeze_active(x: &[f64], dir: &mut [f64], bounds: &Bounds) {
    for ((d, &xi), b) in dir.iter_mut().zip(x).zip(bounds) {
        if let Some((lo, hi)) = b {
            if (xi <= *lo && *d < 0.0) || (xi >= *hi && *d > 0.0) {
                *d = 0.0;
            }
        }
    }
}

/// L-BFGS two-loop recursion: `dir = -H * g`.
fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>], dir: &mut [f64]) {
    let m = s_hist.len();
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; m];
    for i in (0..m).rev() {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alphas[i] = rho * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alphas[i] * yj;
        }
    }
    if m > 0 {
        let gamma = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for i in 0..m {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        let beta = rho * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alphas[i] - beta) * sj;
        }
    }
    for (d, v) in dir.iter_mut().zip(q) {
        *d = -v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let opts = OptimOptions {
            max_iters: 1000,
            grad_tolerance: 1e-8,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[-1.2, 1.0], &[None, None], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gradient_descent_on_quadratic() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = x[0] - 3.0;
            g[1] = 4.0 * (x[1] + 1.0);
            0.5 * (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2)
        };
        let opts = OptimOptions {
            max_iters: 5000,
            grad_tolerance: 1e-9,
            method: Optimizer::GradientDescent,
            ..Default::default()
        };
        let r = minimize(f, &[0.0, 0.0], &[None, None], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-8 && (r.x[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn bounds_are_respected() {
        // unconstrained minimum at -5, box floor at -2
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = x[0] + 5.0;
            0.5 * (x[0] + 5.0).powi(2)
        };
        let r = minimize(f, &[0.0], &[Some((-2.0, 2.0))], &OptimOptions::default());
        assert_eq!(r.x[0], -2.0);
        assert!(r.converged);
    }
}
