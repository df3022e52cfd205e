//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    /// Relative loss change threshold...
    pub ftol: f64,
    /// ...that must hold for this many consecutive iterations.
    pub ftol_window: usize,
    /// Infinity-norm gradient threshold.
    pub gtol: f64,
    pub max_iter: usize,
    /// Function evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            ftol: 1e-12,
            ftol_window: 5,
            gtol: 1e-10,
            max_iter: 20_000,
            max_line_search: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Ftol,
    Gtol,
    MaxIter,
    LineSearchStalled,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::Ftol => "ftol",
            StopReason::Gtol => "gtol",
            StopReason::MaxIter => "max_iter",
            StopReason::LineSearchStalled => "line_search_stalled",
        };
        f.write_str(s)
    }
}

/// One accepted iterate, with the quantities needed to check the strong
/// Wolfe conditions after the fact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord<T> {
    pub iteration: usize,
    pub loss: T,
    pub prev_loss: T,
    pub step: T,
    /// `∇f(xₖ)·d` at the start of the line search.
    pub slope0: T,
    /// `∇f(xₖ + α·d)·d` at the accepted step.
    pub slope: T,
    pub grad_inf_norm: T,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome<T> {
    pub params: Vec<T>,
    pub loss: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn inf_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

struct Trial<T> {
    alpha: T,
    loss: T,
    slope: T,
    x: Vec<T>,
    grad: Vec<T>,
}

/// Objective evaluation: writes the gradient into the second argument and
/// returns the loss.
pub trait Objective<T> {
    fn eval(&mut self, x: &[T], grad: &mut [T]) -> Result<T>;
}

impl<T, F> Objective<T> for F
where
    F: FnMut(&[T], &mut [T]) -> Result<T>,
{
    fn eval(&mut self, x: &[T], grad: &mut [T]) -> Result<T> {
        self(x, grad)
    }
}

struct LineSearch<'a, T, O> {
    obj: &'a mut O,
    x0: &'a [T],
    dir: &'a [T],
    f0: T,
    slope0: T,
    c1: T,
    c2: T,
    budget: usize,
    evals: usize,
}

impl<'a, T: Scalar, O: Objective<T>> LineSearch<'a, T, O> {
    fn try_step(&mut self, alpha: T) -> Result<Trial<T>> {
        self.evals += 1;
        let x: Vec<T> = self
            .x0
            .iter()
            .zip(self.dir)
            .map(|(&a, &d)| a + alpha * d)
            .collect();
        let mut grad = vec![T::zero(); x.len()];
        let loss = self.obj.eval(&x, &mut grad)?;
        let slope = dot(&grad, self.dir);
        Ok(Trial {
            alpha,
            loss,
            slope,
            x,
            grad,
        })
    }

    fn armijo(&self, t: &Trial<T>) -> bool {
        t.loss <= self.f0 + self.c1 * t.alpha * self.slope0
    }

    fn curvature(&self, t: &Trial<T>) -> bool {
        t.slope.abs() <= -self.c2 * self.slope0
    }

    fn search(&mut self, alpha_init: T) -> Result<Option<Trial<T>>> {
        let mut prev: Option<Trial<T>> = None;
        let mut alpha = alpha_init;
        while self.evals < self.budget {
            let trial = self.try_step(alpha)?;
            if !trial.loss.is_finite() {
                // overshoot into a non-finite region: back off
                alpha *= T::of(0.1);
                continue;
            }
            let prev_loss = prev.as_ref().map_or(self.f0, |p| p.loss);
            if !self.armijo(&trial) || (prev.is_some() && trial.loss >= prev_loss) {
                let lo = prev.unwrap_or_else(|| self.origin());
                return self.zoom(lo, trial);
            }
            if self.curvature(&trial) {
                return Ok(Some(trial));
            }
            if trial.slope >= T::zero() {
                let hi = prev.unwrap_or_else(|| self.origin());
                return self.zoom(trial, hi);
            }
            alpha = trial.alpha * T::of(2.0);
            prev = Some(trial);
        }
        Ok(None)
    }

    fn origin(&self) -> Trial<T> {
        Trial {
            alpha: T::zero(),
            loss: self.f0,
            slope: self.slope0,
            x: self.x0.to_vec(),
            grad: Vec::new(),
        }
    }

    /// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`,
    /// safeguarded to the inner 80% of the bracket.
    fn interpolate(lo: &Trial<T>, hi: &Trial<T>) -> T {
        let (a, b) = (lo.alpha, hi.alpha);
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        let margin = T::of(0.1) * (right - left);
        let d1 = lo.slope + hi.slope - T::of(3.0) * (lo.loss - hi.loss) / (a - b);
        let d2sq = d1 * d1 - lo.slope * hi.slope;
        let cand = if d2sq >= T::zero() {
            let d2 = d2sq.sqrt() * (b - a).signum();
            b - (b - a) * ((hi.slope + d2 - d1) / (hi.slope - lo.slope + T::of(2.0) * d2))
        } else {
            T::nan()
        };
        if cand.is_finite() && cand >= left + margin && cand <= right - margin {
            cand
        } else {
            (left + right) * T::of(0.5)
        }
    }

    fn zoom(&mut self, mut lo: Trial<T>, mut hi: Trial<T>) -> Result<Option<Trial<T>>> {
        while self.evals < self.budget {
            let alpha = Self::interpolate(&lo, &hi);
            if (hi.alpha - lo.alpha).abs() <= T::epsilon() * lo.alpha.abs().max(T::one()) {
                return Ok(None);
            }
            let trial = self.try_step(alpha)?;
            if !trial.loss.is_finite() || !self.armijo(&trial) || trial.loss >= lo.loss {
                hi = trial;
            } else {
                if self.curvature(&trial) {
                    return Ok(Some(trial));
                }
                if trial.slope * (hi.alpha - lo.alpha) >= T::zero() {
                    hi = lo;
                }
                lo = trial;
            }
        }
        Ok(None)
    }
}

/// Minimize `obj` from `x0`. `observer` sees every accepted iterate.
pub fn minimize<T, O, W>(
    obj: &mut O,
    x0: Vec<T>,
    cfg: &LbfgsConfig,
    mut observer: W,
) -> Result<LbfgsOutcome<T>>
where
    T: Scalar,
    O: Objective<T>,
    W: FnMut(&IterRecord<T>, &[T]),
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![T::zero(); n];
    let mut loss = obj.eval(&x, &mut grad)?;
    let mut evaluations = 1;
    let mut pairs: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(cfg.memory);
    let mut small_changes = 0;
    let mut iterations = 0;
    let gtol = T::of(cfg.gtol);
    let ftol = T::of(cfg.ftol);

    let finish = |params, loss, iterations, evaluations, reason| {
        Ok(LbfgsOutcome {
            params,
            loss,
            iterations,
            evaluations,
            reason,
        })
    };

    if inf_norm(&grad) <= gtol {
        return finish(x, loss, 0, evaluations, StopReason::Gtol);
    }

    loop {
        if iterations >= cfg.max_iter {
            return finish(x, loss, iterations, evaluations, StopReason::MaxIter);
        }

        // two-loop recursion
        let mut dir: Vec<T> = grad.iter().map(|&g| -g).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = *rho * dot(s, &dir);
            for (d, &yi) in dir.iter_mut().zip(y) {
                *d -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let scale = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= scale);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &dir);
            for (d, &si) in dir.iter_mut().zip(s) {
                *d += (*a - b) * si;
            }
        }
        let mut slope0 = dot(&grad, &dir);
        if !(slope0 < T::zero()) {
            pairs.clear();
            dir = grad.iter().map(|&g| -g).collect();
            slope0 = dot(&grad, &dir);
        }

        let alpha_init = if pairs.is_empty() {
            T::one().min(T::one() / inf_norm(&dir))
        } else {
            T::one()
        };
        let mut ls = LineSearch {
            obj: &mut *obj,
            x0: &x,
            dir: &dir,
            f0: loss,
            slope0,
            c1: T::of(cfg.c1),
            c2: T::of(cfg.c2),
            budget: cfg.max_line_search,
            evals: 0,
        };
        let accepted = ls.search(alpha_init)?;
        evaluations += ls.evals;
        let Some(trial) = accepted else {
            return finish(
                x,
                loss,
                iterations,
                evaluations,
                StopReason::LineSearchStalled,
            );
        };

        iterations += 1;
        let s: Vec<T> = trial.x.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = trial.grad.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::zero() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, T::one() / sy));
        }

        let prev_loss = loss;
        x = trial.x;
        grad = trial.grad;
        loss = trial.loss;
        let gnorm = inf_norm(&grad);
        observer(
            &IterRecord {
                iteration: iterations,
                loss,
                prev_loss,
                step: trial.alpha,
                slope0,
                slope: trial.slope,
                grad_inf_norm: gnorm,
            },
            &x,
        );

        if gnorm <= gtol {
            return finish(x, loss, iterations, evaluations, StopReason::Gtol);
        }
        let scale = prev_loss.abs().max(loss.abs()).max(T::min_positive_value());
        if (prev_loss - loss) / scale <= ftol {
            small_changes += 1;
            if small_changes >= cfg.ftol_window {
                return finish(x, loss, iterations, evaluations, StopReason::Ftol);
            }
        } else {
            small_changes = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_wolfe(rec: &IterRecord<f64>, cfg: &LbfgsConfig) {
        assert!(rec.loss <= rec.prev_loss + cfg.c1 * rec.step * rec.slope0);
        assert!(rec.slope.abs() <= cfg.c2 * rec.slope0.abs() * (1.0 + 1e-12));
        assert!(rec.loss <= rec.prev_loss);
    }

    #[test]
    fn convex_quadratic_in_13_dims() {
        // f = ½ Σ cᵢ (xᵢ − i)², minimizer xᵢ = i
        let cfg = LbfgsConfig::default();
        let c: Vec<f64> = (0..13).map(|i| 1.0 + i as f64).collect();
        let mut f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            let mut v = 0.0;
            for i in 0..13 {
                let d = x[i] - i as f64;
                v += 0.5 * c[i] * d * d;
                g[i] = c[i] * d;
            }
            Ok(v)
        };
        let out = minimize(&mut f, vec![0.0; 13], &cfg, |r, _| check_wolfe(r, &cfg)).unwrap();
        assert!(out.iterations <= 50, "{} iterations", out.iterations);
        let mut g = vec![0.0; 13];
        f(&out.params, &mut g).unwrap();
        assert!(
            g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-10,
            "{:?}",
            out.reason
        );
        for (i, xi) in out.params.iter().enumerate() {
            assert!((xi - i as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let cfg = LbfgsConfig::default();
        let mut f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            g[0] = 2.0 * x[0];
            Ok(x[0] * x[0])
        };
        let out = minimize(&mut f, vec![0.0], &cfg, |_, _| {}).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.reason, StopReason::Gtol);
    }

    #[test]
    fn rosenbrock() {
        let cfg = LbfgsConfig::default();
        let mut f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Ok((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        };
        let mut last = f64::INFINITY;
        let out = minimize(&mut f, vec![-1.2, 1.0], &cfg, |r, _| {
            check_wolfe(r, &cfg);
            assert!(r.loss <= last);
            last = r.loss;
        })
        .unwrap();
        assert!(out.loss < 1e-10, "{} after {:?}", out.loss, out.reason);
        assert!((out.params[0] - 1.0).abs() < 1e-4 && (out.params[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn max_iter_is_reported() {
        let cfg = LbfgsConfig {
            max_iter: 3,
            ..Default::default()
        };
        let mut f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Ok((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        };
        let out = minimize(&mut f, vec![-1.2, 1.0], &cfg, |_, _| {}).unwrap();
        assert_eq!(out.iterations, 3);
        assert_eq!(out.reason, StopReason::MaxIter);
    }

    #[test]
    fn flat_direction_stalls_the_line_search() {
        // loss quantized so no step can satisfy sufficient decrease
        let cfg = LbfgsConfig::default();
        let mut f = |_x: &[f64], g: &mut [f64]| -> Result<f64> {
            g[0] = 1.0;
            Ok(1.0)
        };
        let out = minimize(&mut f, vec![0.0], &cfg, |_, _| {}).unwrap();
        assert_eq!(out.reason, StopReason::LineSearchStalled);
        assert_eq!(out.params, vec![0.0]);
    }
}
