//! Backward-Euler baseline with a per-step self-consistent update of the
//! solid fraction.
//!
//! Each step iterates: energy update for `T`, regime from `T`, then in the
//! mushy zone `C = −T` and a scalar linear solve of the discrete solute
//! balance for the new `φ`. The plain fixed-point map has slope close to
//! `−(1/S)·dφ/dC`, far outside the unit disc for small `S`, so the step on
//! `φ` is divided by `1 − slope`. With `relaxation = 1` this is Newton's
//! method on the scalar fixed-point equation.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{error_norms, uniform_grid, ModelParams, Regime, StateJet, StateTriple};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdmConfig {
    pub n_steps: usize,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub relaxation: f64,
}

impl FdmConfig {
    pub fn new(n_steps: usize) -> Self {
        Self {
            n_steps,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("FDM needs at least one step".into()));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::Config(format!(
                "inner tolerance must be positive, got {}",
                self.inner_tol
            )));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::Config(format!(
                "relaxation must lie in (0, 1], got {}",
                self.relaxation
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::Config("max_inner_iters must be positive".into()));
        }
        Ok(())
    }
}

impl Default for FdmConfig {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            inner_tol: 1e-12,
            max_inner_iters: 200,
            relaxation: 1.0,
        }
    }
}

/// States on the grid `t_n = n/N_f`, `n = 0..=N_f`.
#[derive(Clone, Debug, PartialEq)]
pub struct FdmSolution<T> {
    pub times: Vec<T>,
    pub states: Vec<StateTriple<T>>,
    /// Inner iterations used by each step.
    pub inner_iters: Vec<usize>,
}

impl<T: Scalar> FdmSolution<T> {
    /// States with backward-difference rates (forward difference at `t = 0`).
    pub fn jets(&self) -> Vec<StateJet<T>> {
        let n = self.states.len();
        (0..n)
            .map(|i| {
                let (a, b) = if i == 0 {
                    (0, 1.min(n - 1))
                } else {
                    (i - 1, i)
                };
                let dt = self.times[b] - self.times[a];
                let rate = |f: fn(&StateTriple<T>) -> T| {
                    if b == a {
                        T::zero()
                    } else {
                        (f(&self.states[b]) - f(&self.states[a])) / dt
                    }
                };
                StateJet {
                    value: self.states[i],
                    rate: StateTriple::new(rate(|s| s.temp), rate(|s| s.conc), rate(|s| s.phi)),
                }
            })
            .collect()
    }

    pub fn mean_inner_iters(&self) -> f64 {
        let n = self.inner_iters.len().max(1);
        self.inner_iters.iter().sum::<usize>() as f64 / n as f64
    }
}

/// One backward-Euler step from `prev`. Returns the new state and the
/// number of inner iterations.
fn step<T: Scalar>(
    prev: &StateTriple<T>,
    dt: T,
    p: &ModelParams<T>,
    cfg: &FdmConfig,
    index: usize,
) -> Result<(StateTriple<T>, usize)> {
    let one = T::one();
    let a = one - p.k0;
    let inv_s = one / p.stefan;
    let tol = T::of(cfg.inner_tol);
    let omega = T::of(cfg.relaxation);

    let mut cur = *prev;
    let mut change = T::infinity();
    for iter in 1..=cfg.max_inner_iters {
        let mut temp = prev.temp + dt * p.qdot + (cur.phi - prev.phi) * inv_s;
        // rounding residue of a step cut back to T = 0
        let scale = prev.temp.abs() + (dt * p.qdot).abs() + ((cur.phi - prev.phi) * inv_s).abs();
        if temp > T::zero() && temp <= T::of(8.0) * T::epsilon() * scale {
            temp = T::zero();
        }
        let next = match Regime::of(temp.to_f64_lossy()) {
            Regime::Liquid => StateTriple::new(temp, prev.conc, T::zero()),
            Regime::Solid => StateTriple::new(temp, prev.conc, one),
            Regime::Mushy => {
                let conc = -temp;
                let dc = conc - prev.conc;
                let b = p.k0 + a * conc;
                let den = b + a * dc;
                let target = (dc + b * prev.phi) / den;
                // slope of the map φ → target through T and C
                let dtarget_dc =
                    ((one + a * prev.phi) * den - (dc + b * prev.phi) * (a + a)) / (den * den);
                let slope = -inv_s * dtarget_dc;
                let mut phi = cur.phi + omega * (target - cur.phi) / (one - slope);
                // a step that would heat the state above the liquidus is
                // cut back to T = 0, where the mushy branch still applies
                let phi_max = prev.phi - p.stefan * (prev.temp + dt * p.qdot);
                if phi > phi_max {
                    phi = phi_max;
                }
                StateTriple::new(temp, conc, phi)
            }
        };
        change = (next.temp - cur.temp)
            .abs()
            .max((next.conc - cur.conc).abs())
            .max((next.phi - cur.phi).abs());
        if !change.is_finite() {
            break;
        }
        cur = next;
        if change < tol {
            // make the accepted state consistent with its own φ
            cur.temp = prev.temp + dt * p.qdot + (cur.phi - prev.phi) * inv_s;
            if Regime::of(cur.temp.to_f64_lossy()) == Regime::Mushy {
                cur.conc = -cur.temp;
            }
            return Ok((cur, iter));
        }
    }
    Err(Error::NotConverged {
        step: index,
        residual: change.to_f64_lossy(),
    })
}

pub fn solve<T: Scalar>(p: &ModelParams<T>, cfg: &FdmConfig) -> Result<FdmSolution<T>> {
    cfg.validate()?;
    p.validate()?;
    let times: Vec<T> = uniform_grid(cfg.n_steps + 1);
    let dt = T::one() / T::of(cfg.n_steps as f64);
    let mut states = Vec::with_capacity(cfg.n_steps + 1);
    let mut inner_iters = Vec::with_capacity(cfg.n_steps);
    states.push(StateTriple::new(T::zero(), T::zero(), T::zero()));
    for n in 0..cfg.n_steps {
        let (next, iters) = step(&states[n], dt, p, cfg, n + 1)?;
        states.push(next);
        inner_iters.push(iters);
    }
    Ok(FdmSolution {
        times,
        states,
        inner_iters,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_f: usize,
    /// L² error per variable (T, Cl, φ).
    pub l2: [f64; 3],
    pub max_l2: f64,
    pub wall_seconds: f64,
    pub inner_iters_mean: f64,
}

/// Solve at each `N_f` and measure the error against the exact solution.
pub fn convergence_study(
    p: &ModelParams<f64>,
    n_steps_list: &[usize],
    template: &FdmConfig,
) -> Result<Vec<ConvergenceRow>> {
    if n_steps_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Usage("N_f list must be sorted".into()));
    }
    p.require_mushy_valid()?;
    n_steps_list
        .par_iter()
        .map(|&n_f| {
            let cfg = FdmConfig {
                n_steps: n_f,
                ..*template
            };
            let started = Instant::now();
            let sol = solve(p, &cfg)?;
            let wall_seconds = started.elapsed().as_secs_f64();
            let report = error_norms(&sol.times, &sol.jets(), p)?;
            Ok(ConvergenceRow {
                n_f,
                l2: report.l2,
                max_l2: report.max_l2,
                wall_seconds,
                inner_iters_mean: sol.mean_inner_iters(),
            })
        })
        .collect()
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "N_f",
        "max_l2_T",
        "max_l2_Cl",
        "max_l2_phi",
        "wall_seconds",
        "inner_iters_mean",
    ])?;
    for r in rows {
        w.write_record([
            r.n_f.to_string(),
            format!("{:e}", r.l2[0]),
            format!("{:e}", r.l2[1]),
            format!("{:e}", r.l2[2]),
            format!("{:e}", r.wall_seconds),
            format!("{}", r.inner_iters_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}
