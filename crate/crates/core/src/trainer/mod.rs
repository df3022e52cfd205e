//! Two-phase theory training: Adam on the (partially) regularized loss up
//! to the switchover epoch, then L-BFGS on the standard loss.

mod record;

use std::cell::Cell;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{loss_gradient_into, trajectory, Workspace};
use crate::error::{Error, Result};
use crate::loss::{gamma_at, initial_lr, LossBreakdown, LossConfig, RegNorm, TrainingSet};
use crate::network::{Network, NetworkShape};
use crate::optim::{minimize, Adam, AdamConfig, LbfgsConfig};
use crate::physics::{error_norms, uniform_grid, ModelParams};
use crate::stats::{oscillation_metric, weight_stats};

pub use record::{read_curve, CurveRow, Phase, RunRecord, Snapshot};

/// Grid used for the final error report.
pub const REPORT_GRID: usize = 1001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub switch_epoch: usize,
    /// Regularization weight before the switchover; 0 disables it.
    pub gamma1: f64,
    /// Adam learning rate; `None` uses [`initial_lr`].
    pub lr: Option<f64>,
    /// Seed for the weight initialization.
    pub seed: u64,
    /// Phase-1 epochs at which parameters are kept. The switchover and the
    /// final state are always kept.
    pub snapshot_epochs: Vec<usize>,
    /// Additionally keep a snapshot every this many phase-1 epochs.
    pub histogram_every: Option<usize>,
    pub oscillation_window: usize,
    pub reg_norm: RegNorm,
    pub lbfgs: LbfgsConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            switch_epoch: 15_000,
            gamma1: 1e-4,
            lr: None,
            seed: 0,
            snapshot_epochs: Vec::new(),
            histogram_every: None,
            oscillation_window: 2000,
            reg_norm: RegNorm::SquaredFrobenius,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite()) {
            return Err(Error::Config(format!(
                "gamma1 must be finite and >= 0, got {}",
                self.gamma1
            )));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!(
                    "learning rate must be positive, got {lr}"
                )));
            }
        }
        if self.snapshot_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "snapshot epochs must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = self.snapshot_epochs.last() {
            if last > self.switch_epoch {
                return Err(Error::Config(format!(
                    "snapshot epoch {last} lies after the switchover epoch {}",
                    self.switch_epoch
                )));
            }
        }
        if self.histogram_every == Some(0) {
            return Err(Error::Config("histogram interval must be positive".into()));
        }
        Ok(())
    }

    pub fn loss_config(&self, n_train: usize) -> LossConfig {
        LossConfig {
            gamma1: self.gamma1,
            switch_epoch: self.switch_epoch,
            n_train,
            reg_norm: self.reg_norm,
        }
    }

    fn keeps_snapshot(&self, epoch: usize) -> bool {
        self.snapshot_epochs.binary_search(&epoch).is_ok()
            || self
                .histogram_every
                .is_some_and(|k| epoch.is_multiple_of(k))
    }
}

/// Train a freshly initialized network of the given shape.
pub fn train(
    shape: NetworkShape,
    p: &ModelParams<f64>,
    ts: &TrainingSet<f64>,
    sched: &TrainSchedule,
) -> Result<(Network<f64>, RunRecord)> {
    train_from(Network::init(shape, sched.seed), p, ts, sched, |_| {})
}

/// Train starting from `net`. `on_row` sees every logged curve row as it
/// is produced.
///
/// A non-finite loss does not return an error: training stops and the
/// partial record comes back with `failed` set.
pub fn train_from<F: FnMut(&CurveRow)>(
    mut net: Network<f64>,
    p: &ModelParams<f64>,
    ts: &TrainingSet<f64>,
    sched: &TrainSchedule,
    mut on_row: F,
) -> Result<(Network<f64>, RunRecord)> {
    sched.validate()?;
    p.validate()?;
    let shape = net.shape();
    let lr = sched.lr.unwrap_or_else(|| initial_lr(shape));
    let loss_cfg = sched.loss_config(ts.len());
    let mut rec = RunRecord::new(shape, *p, ts.len(), sched.clone(), lr);
    let mut ws = Workspace::new(shape);
    let mut grad = vec![0.0; shape.n_params()];
    let mut push = |rec: &mut RunRecord, row: CurveRow| {
        on_row(&row);
        rec.curve.push(row);
    };

    // phase 1
    let started = Instant::now();
    let mut adam = Adam::new(AdamConfig::with_lr(lr), shape.n_params());
    for epoch in 0..sched.switch_epoch {
        let gamma = gamma_at(epoch, &loss_cfg);
        if sched.keeps_snapshot(epoch) {
            rec.snapshots.push(Snapshot::of(epoch, &net));
        }
        let terms = match loss_gradient_into(
            net.params(),
            ts,
            p,
            gamma,
            sched.reg_norm,
            &mut ws,
            &mut grad,
        ) {
            Ok(t) => t,
            Err(Error::NonFinite(msg)) => {
                rec.phase1_seconds = started.elapsed().as_secs_f64();
                rec.fail(format!("epoch {epoch}: {msg}"));
                return Ok((net, rec));
            }
            Err(e) => return Err(e),
        };
        push(&mut rec, CurveRow::new(epoch, &terms, Phase::Adam));
        if let Err(e) = adam.step(net.params_mut(), &grad) {
            rec.phase1_seconds = started.elapsed().as_secs_f64();
            rec.fail(format!("epoch {epoch}: {e}"));
            return Ok((net, rec));
        }
    }
    rec.phase1_seconds = started.elapsed().as_secs_f64();

    // phase 2
    let started = Instant::now();
    let start_terms =
        match loss_gradient_into(net.params(), ts, p, 0.0, sched.reg_norm, &mut ws, &mut grad) {
            Ok(t) => t,
            Err(e @ Error::NonFinite(_)) => {
                rec.fail(format!("switchover: {e}"));
                return Ok((net, rec));
            }
            Err(e) => return Err(e),
        };
    let switch = sched.switch_epoch;
    rec.switch_loss = start_terms.standard();
    rec.switch_weights = Some(weight_stats(&net));
    rec.snapshots.push(Snapshot::of(switch, &net));
    push(&mut rec, CurveRow::new(switch, &start_terms, Phase::Lbfgs));
    if switch > 0 {
        let phase1: Vec<f64> = rec.curve[..switch].iter().map(|r| r.loss_s).collect();
        rec.oscillation = Some(oscillation_metric(&phase1, sched.oscillation_window));
    }

    // The accepted iterate is always the most recent evaluation, so its
    // breakdown is cached here for the observer.
    let last = Cell::new(start_terms);
    let mut objective = |x: &[f64], g: &mut [f64]| -> Result<f64> {
        match loss_gradient_into(x, ts, p, 0.0, sched.reg_norm, &mut ws, g) {
            Ok(t) => {
                last.set(t);
                Ok(t.standard())
            }
            Err(Error::NonFinite(_)) => {
                last.set(LossBreakdown {
                    energy: f64::INFINITY,
                    ..Default::default()
                });
                Ok(f64::INFINITY)
            }
            Err(e) => Err(e),
        }
    };
    let outcome = minimize(&mut objective, net.flatten(), &sched.lbfgs, |it, _| {
        let terms = last.get();
        debug_assert_eq!(terms.standard(), it.loss);
        push(
            &mut rec,
            CurveRow::new(switch + it.iteration, &terms, Phase::Lbfgs),
        );
    })?;
    rec.phase2_seconds = started.elapsed().as_secs_f64();
    rec.phase2_iterations = outcome.iterations;
    rec.phase2_evaluations = outcome.evaluations;
    rec.phase2_reason = Some(outcome.reason);
    rec.final_loss = outcome.loss;
    net = Network::unflatten(shape, outcome.params)?;
    rec.snapshots
        .push(Snapshot::of(switch + outcome.iterations, &net));
    rec.final_weights = Some(weight_stats(&net));

    if p.is_mushy_valid() {
        let grid = uniform_grid(REPORT_GRID);
        let pred = trajectory(&net, &grid);
        rec.error = Some(error_norms(&grid, &pred, p)?);
    }
    if !rec.final_loss.is_finite() {
        rec.fail("final loss is not finite".into());
    }
    Ok((net, rec))
}
