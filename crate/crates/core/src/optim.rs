//! Box-constrained limited-memory quasi-Newton minimizer.
//!
//! A projected L-BFGS scheme in the spirit of L-BFGS-B: variables sitting on a
//! bound with the gradient pushing outward are frozen for the iteration, the
//! two-loop recursion builds a quasi-Newton direction on the free variables,
//! and a projected backtracking line search enforces the Armijo condition
//! along the bent path `P(x + alpha d)`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    /// Number of stored correction pairs.
    pub memory: usize,
    /// Budget of objective evaluations.
    pub max_evals: usize,
    /// Stop when `|f_k - f_{k+1}| <= rel_tol * max(|f_k|, 1)`.
    pub rel_tol: f64,
    /// Stop when the projected gradient max-norm falls below this.
    pub pg_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_evals: 2_000,
            rel_tol: 1e-9,
            pg_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| *lo <= *v && *v <= *hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RelativeChange,
    ProjectedGradient,
    EvalBudget,
    LineSearchFailed,
    NonFiniteStart,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::RelativeChange | Termination::ProjectedGradient)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
    pub iterations: usize,
    pub termination: Termination,
}

/// Minimizes `f` over the box. `f(x, grad)` returns the objective and fills
/// `grad`; a non-finite return marks an infeasible point.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &OptimOptions) -> OptimOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut n_evals = 1;
    let mut iterations = 0;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return OptimOutcome {
            x,
            f: fx,
            n_evals,
            iterations,
            termination: Termination::NonFiniteStart,
        };
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    let termination = loop {
        let free = free_mask(&x, &g, bounds);
        let pg_norm = projected_gradient_norm(&x, &g, bounds);
        if pg_norm < opts.pg_tol {
            break Termination::ProjectedGradient;
        }
        if n_evals >= opts.max_evals {
            break Termination::EvalBudget;
        }

        let mut d = direction(&g, &free, &pairs);
        let slope = dot(&d, &g);
        if slope >= 0.0 || !slope.is_finite() {
            pairs.clear();
            d = steepest(&g, &free);
        }

        // First step of a fresh memory: keep the initial move modest.
        let mut alpha = if pairs.is_empty() {
            (1.0 / d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * d[i];
            }
            bounds.project(&mut x_new);
            let f_new = f(&x_new, &mut g_new);
            n_evals += 1;
            let decrease: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
            if f_new.is_finite() && g_new.iter().all(|v| v.is_finite()) && f_new <= fx + 1e-4 * decrease {
                accepted = Some(f_new);
                break;
            }
            if n_evals >= opts.max_evals {
                break;
            }
            alpha *= 0.5;
        }
        let Some(f_new) = accepted else {
            if !pairs.is_empty() {
                // Retry from steepest descent with a clean memory.
                pairs.clear();
                if n_evals < opts.max_evals {
                    continue;
                }
            }
            break if n_evals >= opts.max_evals {
                Termination::EvalBudget
            } else {
                Termination::LineSearchFailed
            };
        };
        iterations += 1;

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        let change = (fx - f_new).abs();
        let scale = fx.abs().max(1.0);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if change <= opts.rel_tol * scale {
            break Termination::RelativeChange;
        }
    };

    OptimOutcome {
        x,
        f: fx,
        n_evals,
        iterations,
        termination,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn free_mask(x: &[f64], g: &[f64], bounds: &Bounds) -> Vec<bool> {
    (0..x.len())
        .map(|i| {
            let at_lower = x[i] <= bounds.lower[i] && g[i] > 0.0;
            let at_upper = x[i] >= bounds.upper[i] && g[i] < 0.0;
            !(at_lower || at_upper)
        })
        .collect()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    (0..x.len())
        .map(|i| {
            let moved = (x[i] - g[i]).clamp(bounds.lower[i], bounds.upper[i]);
            (moved - x[i]).abs()
        })
        .fold(0.0, f64::max)
}

fn steepest(g: &[f64], free: &[bool]) -> Vec<f64> {
    g.iter().zip(free).map(|(v, &f)| if f { -v } else { 0.0 }).collect()
}

/// Two-loop recursion restricted to the free variables.
fn direction(g: &[f64], free: &[bool], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(x, &f)| if f { *x } else { 0.0 }).collect() };
    let mut q = mask(g);
    if pairs.is_empty() {
        return q.into_iter().map(|v| -v).collect();
    }
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let s = mask(s);
        let a = rho * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(y.iter().zip(free)) {
            if *yi.1 {
                *qi -= a * yi.0;
            }
        }
        alphas.push(a);
    }
    let (s, y, _) = pairs.back().expect("non-empty");
    let (ms, my) = (mask(s), mask(y));
    let yy = dot(&my, &my);
    let gamma = if yy > 0.0 { (dot(&ms, &my) / yy).max(1e-12) } else { 1.0 };
    let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let my = mask(y);
        let b = rho * dot(&my, &r);
        for (ri, si) in r.iter_mut().zip(s.iter().zip(free)) {
            if *si.1 {
                *ri += (a - b) * si.0;
            }
        }
    }
    r.into_iter().map(|v| -v).collect()
}
