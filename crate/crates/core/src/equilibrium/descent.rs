//! Projected first-order descent on the box `{λ ≥ λ⁰}`.

use log::debug;

use crate::error::{Error, Result};

/// How the trial step of each iteration is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Backtracking from a fixed initial step, monotone acceptance.
    Armijo {
        initial: f64,
        c1: f64,
        backtrack: f64,
    },
    /// Barzilai–Borwein trial step with nonmonotone backtracking against the largest of
    /// the last `memory` objective values.
    BarzilaiBorwein {
        c1: f64,
        backtrack: f64,
        memory: usize,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Armijo {
            initial: 1.0,
            c1: 1e-4,
            backtrack: 0.5,
        }
    }
}

impl StepRule {
    pub fn barzilai_borwein() -> Self {
        StepRule::BarzilaiBorwein {
            c1: 1e-4,
            backtrack: 0.5,
            memory: 10,
        }
    }
}

/// Objective value and gradient at a point; `value = +∞` marks a point outside the domain.
pub(crate) struct Point {
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome {
    pub lambda: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Objective value after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

const MAX_BACKTRACKS: usize = 80;

/// Sup-norm of the projected gradient: components pinned at the lower bound that point
/// outward are ignored.
pub(crate) fn projected_norm(lambda: &[f64], lower: &[f64], g: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(lower)
        .zip(g)
        .map(|((&l, &lo), &gi)| if l <= lo && gi > 0.0 { 0.0 } else { gi.abs() })
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn descend<F>(
    eval: F,
    lower: &[f64],
    start: Vec<f64>,
    rule: StepRule,
    tol: f64,
    max_iter: usize,
) -> Result<DescentOutcome>
where
    F: Fn(&[f64]) -> Result<Point>,
{
    let mut lambda: Vec<f64> = start.iter().zip(lower).map(|(&l, &lo)| l.max(lo)).collect();
    let mut cur = eval(&lambda)?;
    if !cur.value.is_finite() {
        return Err(Error::InvalidInput(
            "starting point lies outside the objective's domain".into(),
        ));
    }
    let mut history = vec![cur.value];
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut trial = vec![0.0; lambda.len()];
    let mut step = vec![0.0; lambda.len()];

    for iteration in 0..=max_iter {
        let grad_norm = projected_norm(&lambda, lower, &cur.gradient);
        if grad_norm < tol {
            return Ok(DescentOutcome {
                lambda,
                value: cur.value,
                grad_norm,
                iterations: iteration,
                history,
            });
        }
        if iteration == max_iter {
            return Err(Error::Convergence {
                iterations: iteration,
                residual: grad_norm,
            });
        }

        let (mut t, c1, backtrack, reference) = match rule {
            StepRule::Armijo {
                initial,
                c1,
                backtrack,
            } => (initial, c1, backtrack, cur.value),
            StepRule::BarzilaiBorwein {
                c1,
                backtrack,
                memory,
            } => {
                let t = match &prev {
                    Some((s, y)) => {
                        let sy = dot(s, y);
                        if sy > 0.0 {
                            (dot(s, s) / sy).clamp(1e-12, 1e12)
                        } else {
                            1.0
                        }
                    }
                    None => 1.0 / grad_norm.max(1.0),
                };
                let tail = &history[history.len().saturating_sub(memory.max(1))..];
                (
                    t,
                    c1,
                    backtrack,
                    tail.iter().copied().fold(f64::MIN, f64::max),
                )
            }
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for (i, out) in trial.iter_mut().enumerate() {
                *out = (lambda[i] - t * cur.gradient[i]).max(lower[i]);
                step[i] = *out - lambda[i];
            }
            let slope = dot(&cur.gradient, &step);
            if slope >= 0.0 {
                // projection left nothing but ascent (or no) directions
                t *= backtrack;
                continue;
            }
            let next = eval(&trial)?;
            if next.value.is_finite() {
                let resolvable = (c1 * slope).abs() > 4.0 * f64::EPSILON * reference.abs().max(1.0);
                let armijo = resolvable && next.value <= reference + c1 * slope;
                // convex along the segment: nonpositive slope at the far end
                let convex_descent = dot(&next.gradient, &step) <= 0.0;
                if armijo || convex_descent {
                    accepted = Some(next);
                    break;
                }
            }
            t *= backtrack;
        }
        let Some(next) = accepted else {
            return Err(Error::LineSearch {
                iteration,
                detail: format!("no acceptable step (projected gradient norm {grad_norm:e})"),
            });
        };
        let y: Vec<f64> = next
            .gradient
            .iter()
            .zip(&cur.gradient)
            .map(|(a, b)| a - b)
            .collect();
        prev = Some((step.clone(), y));
        lambda.copy_from_slice(&trial);
        cur = next;
        history.push(cur.value);
        if iteration % 100 == 0 {
            debug!(
                "descent iter {iteration}: objective {:.12e}, |g| {grad_norm:.3e}, step {t:.3e}",
                cur.value
            );
        }
    }
    unreachable!("loop returns on its last iteration")
}
