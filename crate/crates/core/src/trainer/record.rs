use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::loss::LossBreakdown;
use crate::network::{write_snapshot, SnapshotMeta};
use crate::network::{Network, NetworkShape};
use crate::optim::StopReason;
use crate::physics::{ErrorReport, ModelParams};
use crate::stats::WeightStats;

use super::TrainSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::Adam => 1,
            Phase::Lbfgs => 2,
        }
    }
}

/// One row of `curve.csv`. `loss_s` is always the standard loss; `loss_r`
/// adds the penalty actually optimized at that epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub loss_s: f64,
    pub loss_r: f64,
    pub loss_t: f64,
    pub loss_cl: f64,
    pub loss_liq: f64,
    pub loss_ic: f64,
    pub phase: Phase,
}

impl CurveRow {
    pub fn new(epoch: usize, terms: &LossBreakdown<f64>, phase: Phase) -> Self {
        Self {
            epoch,
            loss_s: terms.standard(),
            loss_r: terms.regularized(),
            loss_t: terms.energy,
            loss_cl: terms.solute,
            loss_liq: terms.liquidus,
            loss_ic: terms.ic,
            phase,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub params: Vec<f64>,
}

impl Snapshot {
    pub fn of(epoch: usize, net: &Network<f64>) -> Self {
        Self {
            epoch,
            params: net.flatten(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub shape: NetworkShape,
    pub params: ModelParams<f64>,
    pub n_train: usize,
    pub schedule: TrainSchedule,
    pub learning_rate: f64,
    /// Standard loss at the start of phase 2.
    pub switch_loss: f64,
    pub final_loss: f64,
    pub phase1_seconds: f64,
    pub phase2_seconds: f64,
    pub phase2_iterations: usize,
    pub phase2_evaluations: usize,
    pub phase2_reason: Option<StopReason>,
    /// Errors against the exact solution on a uniform grid.
    pub error: Option<ErrorReport<f64>>,
    pub switch_weights: Option<WeightStats>,
    pub final_weights: Option<WeightStats>,
    /// Oscillation of the phase-1 standard loss; `None` without phase 1.
    pub oscillation: Option<f64>,
    pub decisions: Vec<String>,
    pub failed: bool,
    pub failure: Option<String>,
    #[serde(skip)]
    pub curve: Vec<CurveRow>,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
}

impl RunRecord {
    pub(super) fn new(
        shape: NetworkShape,
        params: ModelParams<f64>,
        n_train: usize,
        schedule: TrainSchedule,
        learning_rate: f64,
    ) -> Self {
        let decisions = vec![
            format!(
                "phase 2 uses L-BFGS (memory {}, strong Wolfe c1={}, c2={})",
                schedule.lbfgs.memory, schedule.lbfgs.c1, schedule.lbfgs.c2
            ),
            "loss column is the standard loss in both phases; L_R holds the optimized objective"
                .into(),
            "penalty covers hidden-layer weight matrices only".into(),
            "Adam eps = 1e-7, one full-batch step per epoch".into(),
        ];
        Self {
            shape,
            params,
            n_train,
            schedule,
            learning_rate,
            switch_loss: f64::NAN,
            final_loss: f64::NAN,
            phase1_seconds: 0.0,
            phase2_seconds: 0.0,
            phase2_iterations: 0,
            phase2_evaluations: 0,
            phase2_reason: None,
            error: None,
            switch_weights: None,
            final_weights: None,
            oscillation: None,
            decisions,
            failed: false,
            failure: None,
            curve: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub(super) fn fail(&mut self, why: String) {
        self.failed = true;
        self.failure = Some(why);
        if let Some(last) = self.curve.last() {
            self.final_loss = last.loss_s;
        }
    }

    pub fn wall_seconds(&self) -> f64 {
        self.phase1_seconds + self.phase2_seconds
    }

    pub fn max_l2(&self) -> Option<f64> {
        self.error.map(|e| e.max_l2)
    }

    /// Write `run.json`, `curve.csv` and one binary snapshot per kept epoch
    /// into `dir` (created if missing).
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(self)?)?;
        self.write_curve(&dir.join("curve.csv"))?;
        if !self.snapshots.is_empty() {
            let snap_dir = dir.join("snapshots");
            fs::create_dir_all(&snap_dir)?;
            for s in &self.snapshots {
                let net = Network::unflatten(self.shape, s.params.clone())?;
                let meta = SnapshotMeta::new(self.shape, self.schedule.seed, s.epoch);
                write_snapshot(
                    &snap_dir.join(format!("epoch_{:06}.bin", s.epoch)),
                    &net,
                    &meta,
                )?;
            }
        }
        Ok(())
    }

    pub fn write_curve(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "epoch", "L_S", "L_R", "L_T", "L_Cl", "L_liq", "L_ic", "phase",
        ])?;
        for r in &self.curve {
            w.write_record([
                r.epoch.to_string(),
                fmt(r.loss_s),
                fmt(r.loss_r),
                fmt(r.loss_t),
                fmt(r.loss_cl),
                fmt(r.loss_liq),
                fmt(r.loss_ic),
                r.phase.number().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that round-trips.
pub(crate) fn fmt(x: f64) -> String {
    format!("{x:e}")
}

/// Read back a `curve.csv`.
pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| crate::Error::Format(format!("bad number {:?} in curve", &rec[i])))
        };
        out.push(CurveRow {
            epoch: num(0)? as usize,
            loss_s: num(1)?,
            loss_r: num(2)?,
            loss_t: num(3)?,
            loss_cl: num(4)?,
            loss_liq: num(5)?,
            loss_ic: num(6)?,
            phase: if num(7)? == 1.0 {
                Phase::Adam
            } else {
                Phase::Lbfgs
            },
        });
    }
    Ok(out)
}
