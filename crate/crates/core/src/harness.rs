//! Depth/width sweeps, family tagging relative to a base shape, and the
//! network-versus-FDM comparison.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::mpsc::Sender;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdm::{convergence_study, ConvergenceRow, FdmConfig};
use crate::loss::{make_training_set, Sampling};
use crate::network::NetworkShape;
use crate::optim::StopReason;
use crate::physics::ModelParams;
use crate::stats::{median_of, spearman};
use crate::trainer::{train, RunRecord, TrainSchedule};

/// Position of a shape relative to the base shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Base,
    DeeperOnly,
    WiderOnly,
    DeeperWiderDGtW,
    DeeperWiderDLtW,
    DeeperWiderDEqW,
    /// Shallower or narrower than the base in at least one dimension.
    Smaller,
}

impl Family {
    pub fn of(shape: NetworkShape, base: NetworkShape) -> Self {
        use std::cmp::Ordering::*;
        match (shape.depth.cmp(&base.depth), shape.width.cmp(&base.width)) {
            (Equal, Equal) => Family::Base,
            (Greater, Equal) => Family::DeeperOnly,
            (Equal, Greater) => Family::WiderOnly,
            (Greater, Greater) => match shape.depth.cmp(&shape.width) {
                Greater => Family::DeeperWiderDGtW,
                Less => Family::DeeperWiderDLtW,
                Equal => Family::DeeperWiderDEqW,
            },
            _ => Family::Smaller,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Family::Base => "base",
            Family::DeeperOnly => "deeper_only",
            Family::WiderOnly => "wider_only",
            Family::DeeperWiderDGtW => "deeper_wider_d_gt_w",
            Family::DeeperWiderDLtW => "deeper_wider_d_lt_w",
            Family::DeeperWiderDEqW => "deeper_wider_d_eq_w",
            Family::Smaller => "smaller",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub shapes: Vec<NetworkShape>,
    pub seeds: Vec<u64>,
    pub n_train: Vec<usize>,
    pub params: ModelParams<f64>,
    /// Template; its seed is replaced per run.
    pub schedule: TrainSchedule,
    pub base: NetworkShape,
    pub sampling: Sampling,
}

impl SweepSpec {
    /// `D ∈ {1,2,3,5,8}`, `W ∈ {2,4,6,12}`, two seeds, 200 points.
    pub fn default_grid() -> Self {
        let mut shapes = Vec::new();
        for d in [1, 2, 3, 5, 8] {
            for w in [2, 4, 6, 12] {
                shapes.push(NetworkShape { depth: d, width: w });
            }
        }
        // fill in the deeper-only column of the base
        shapes.push(NetworkShape { depth: 4, width: 2 });
        shapes.push(NetworkShape { depth: 6, width: 2 });
        Self {
            shapes,
            seeds: vec![0, 1],
            n_train: vec![200],
            params: ModelParams::default(),
            schedule: TrainSchedule::default(),
            base: NetworkShape { depth: 1, width: 2 },
            sampling: Sampling::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shapes.is_empty() {
            return Err(Error::Usage("sweep grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Usage("sweep needs at least one seed".into()));
        }
        if self.n_train.is_empty() || self.n_train.contains(&0) {
            return Err(Error::Usage(
                "training-point counts must be positive".into(),
            ));
        }
        if let Some(s) = self.shapes.iter().find(|s| s.depth == 0 || s.width == 0) {
            return Err(Error::Usage(format!("invalid shape {s}")));
        }
        if !self.shapes.contains(&self.base) {
            return Err(Error::Usage(format!(
                "base shape {} is not in the grid",
                self.base
            )));
        }
        self.schedule.validate()?;
        self.params.validate()
    }

    fn jobs(&self) -> Vec<(NetworkShape, usize, u64)> {
        let mut out = Vec::new();
        for &shape in &self.shapes {
            for &n in &self.n_train {
                for &seed in &self.seeds {
                    out.push((shape, n, seed));
                }
            }
        }
        out
    }
}

/// One training run of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub shape: NetworkShape,
    pub seed: u64,
    pub n_train: usize,
    pub family: Family,
    pub n_params: usize,
    pub switch_loss: f64,
    pub final_loss: f64,
    pub max_l2: Option<f64>,
    pub max_h1: Option<f64>,
    /// L² error of T, Cₗ and φ separately.
    pub l2: Option<[f64; 3]>,
    pub wall_seconds: f64,
    pub phase2_reason: Option<StopReason>,
    pub oscillation: Option<f64>,
    pub failed: bool,
    pub failure: Option<String>,
}

impl SweepRun {
    pub fn from_record(rec: &RunRecord, base: NetworkShape) -> Self {
        Self {
            shape: rec.shape,
            seed: rec.schedule.seed,
            n_train: rec.n_train,
            family: Family::of(rec.shape, base),
            n_params: rec.shape.n_params(),
            switch_loss: rec.switch_loss,
            final_loss: rec.final_loss,
            max_l2: rec.error.map(|e| e.max_l2),
            max_h1: rec.error.map(|e| e.max_h1),
            l2: rec.error.map(|e| e.l2),
            wall_seconds: rec.wall_seconds(),
            phase2_reason: rec.phase2_reason,
            oscillation: rec.oscillation,
            failed: rec.failed,
            failure: rec.failure.clone(),
        }
    }

    fn errored(
        shape: NetworkShape,
        seed: u64,
        n_train: usize,
        base: NetworkShape,
        e: &Error,
    ) -> Self {
        Self {
            shape,
            seed,
            n_train,
            family: Family::of(shape, base),
            n_params: shape.n_params(),
            switch_loss: f64::NAN,
            final_loss: f64::NAN,
            max_l2: None,
            max_h1: None,
            l2: None,
            wall_seconds: 0.0,
            phase2_reason: None,
            oscillation: None,
            failed: true,
            failure: Some(e.to_string()),
        }
    }

    pub fn succeeded(&self) -> bool {
        !self.failed && self.final_loss.is_finite()
    }
}

/// Medians over the seeds of one (shape, N₁) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub shape: NetworkShape,
    pub n_train: usize,
    pub family: Family,
    pub n_params: usize,
    pub runs: usize,
    pub failures: usize,
    pub median_final_loss: Option<f64>,
    pub median_max_l2: Option<f64>,
    pub median_wall_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub base: NetworkShape,
    /// Lowest median final loss among deeper-only cells (the base itself
    /// when there are none).
    pub optimal: Option<NetworkShape>,
    /// Smallest cell whose median final loss is within 10× of the best.
    pub suggested_base: Option<NetworkShape>,
    /// Spearman correlation of final loss and max L² error per family.
    pub spearman: BTreeMap<String, Option<f64>>,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<SweepRun>,
    pub all_failed: bool,
}

impl SweepSummary {
    pub fn from_runs(runs: Vec<SweepRun>, base: NetworkShape) -> Self {
        let mut keys: Vec<(NetworkShape, usize)> = Vec::new();
        for r in &runs {
            if !keys.contains(&(r.shape, r.n_train)) {
                keys.push((r.shape, r.n_train));
            }
        }
        let cells: Vec<CellSummary> = keys
            .iter()
            .map(|&(shape, n_train)| {
                let members: Vec<&SweepRun> = runs
                    .iter()
                    .filter(|r| r.shape == shape && r.n_train == n_train)
                    .collect();
                let ok: Vec<&&SweepRun> = members.iter().filter(|r| r.succeeded()).collect();
                let losses: Vec<f64> = ok.iter().map(|r| r.final_loss).collect();
                let errors: Vec<f64> = ok.iter().filter_map(|r| r.max_l2).collect();
                let walls: Vec<f64> = ok.iter().map(|r| r.wall_seconds).collect();
                CellSummary {
                    shape,
                    n_train,
                    family: Family::of(shape, base),
                    n_params: shape.n_params(),
                    runs: members.len(),
                    failures: members.len() - ok.len(),
                    median_final_loss: median_of(&losses),
                    median_max_l2: median_of(&errors),
                    median_wall_seconds: median_of(&walls),
                }
            })
            .collect();

        let primary_n = runs.first().map(|r| r.n_train);
        let primary: Vec<&CellSummary> = cells
            .iter()
            .filter(|c| Some(c.n_train) == primary_n && c.median_final_loss.is_some())
            .collect();
        let by_loss = |a: &&&CellSummary, b: &&&CellSummary| {
            a.median_final_loss
                .unwrap()
                .total_cmp(&b.median_final_loss.unwrap())
        };
        let deeper: Vec<&CellSummary> = primary
            .iter()
            .copied()
            .filter(|c| c.family == Family::DeeperOnly)
            .collect();
        let optimal = if deeper.is_empty() {
            primary
                .iter()
                .find(|c| c.family == Family::Base)
                .map(|c| c.shape)
        } else {
            deeper.iter().min_by(|a, b| by_loss(a, b)).map(|c| c.shape)
        };
        let best = primary
            .iter()
            .min_by(by_loss)
            .and_then(|c| c.median_final_loss);
        let suggested_base = best.and_then(|best| {
            primary
                .iter()
                .filter(|c| c.median_final_loss.unwrap() <= 10.0 * best)
                .min_by_key(|c| (c.n_params, c.shape.depth, c.shape.width))
                .map(|c| c.shape)
        });

        let mut families: Vec<Family> = runs.iter().map(|r| r.family).collect();
        families.sort();
        families.dedup();
        let spearman = families
            .into_iter()
            .map(|f| {
                let (loss, err): (Vec<f64>, Vec<f64>) = runs
                    .iter()
                    .filter(|r| r.family == f && r.succeeded())
                    .filter_map(|r| r.max_l2.map(|e| (r.final_loss, e)))
                    .unzip();
                (f.tag().to_string(), spearman(&loss, &err))
            })
            .collect();

        let all_failed = runs.iter().all(|r| !r.succeeded());
        Self {
            base,
            optimal,
            suggested_base,
            spearman,
            cells,
            runs,
            all_failed,
        }
    }

    pub fn cell(&self, shape: NetworkShape, n_train: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.shape == shape && c.n_train == n_train)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "depth",
            "width",
            "seed",
            "n_train",
            "family",
            "n_params",
            "switch_loss",
            "final_loss",
            "max_l2",
            "max_h1",
            "l2_T",
            "l2_Cl",
            "l2_phi",
            "wall_seconds",
            "phase2_reason",
            "oscillation",
            "failed",
        ])?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.runs {
            w.write_record([
                r.shape.depth.to_string(),
                r.shape.width.to_string(),
                r.seed.to_string(),
                r.n_train.to_string(),
                r.family.tag().to_string(),
                r.n_params.to_string(),
                format!("{:e}", r.switch_loss),
                format!("{:e}", r.final_loss),
                opt(r.max_l2),
                opt(r.max_h1),
                opt(r.l2.map(|e| e[0])),
                opt(r.l2.map(|e| e[1])),
                opt(r.l2.map(|e| e[2])),
                format!("{:e}", r.wall_seconds),
                r.phase2_reason.map(|s| s.to_string()).unwrap_or_default(),
                opt(r.oscillation),
                r.failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Train every (shape, N₁, seed) combination on a pool of `jobs` workers
/// (0 = one per CPU). Results come back in grid order regardless of
/// scheduling. Each finished run is also sent to `progress`.
pub fn run_sweep(
    spec: &SweepSpec,
    jobs: usize,
    progress: Option<Sender<SweepRun>>,
) -> Result<SweepSummary> {
    spec.validate()?;
    let mut sets = BTreeMap::new();
    for &n in &spec.n_train {
        sets.insert(n, make_training_set::<f64>(n, spec.sampling)?);
    }
    let work = spec.jobs();
    let runs: Vec<SweepRun> = pool(jobs)?.install(|| {
        work.par_iter()
            .map_with(progress, |tx, &(shape, n, seed)| {
                let sched = TrainSchedule {
                    seed,
                    ..spec.schedule.clone()
                };
                let run = match train(shape, &spec.params, &sets[&n], &sched) {
                    Ok((_, rec)) => SweepRun::from_record(&rec, spec.base),
                    Err(e) => SweepRun::errored(shape, seed, n, spec.base, &e),
                };
                if let Some(tx) = tx {
                    let _ = tx.send(run.clone());
                }
                run
            })
            .collect()
    });
    Ok(SweepSummary::from_runs(runs, spec.base))
}

/// One row of `compare.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub shape: Option<NetworkShape>,
    pub n_f: usize,
    pub max_l2: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub shapes: Vec<NetworkShape>,
    pub n_f: Vec<usize>,
    pub seeds: Vec<u64>,
    pub params: ModelParams<f64>,
    pub schedule: TrainSchedule,
    pub fdm: FdmConfig,
    pub base: NetworkShape,
    pub optimal: Option<NetworkShape>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub rows: Vec<CompareRow>,
    pub fdm: Vec<ConvergenceRow>,
    pub runs: Vec<SweepRun>,
    /// Base over optimal median error, per N_f.
    pub base_over_optimal: BTreeMap<usize, Option<f64>>,
    /// Error ratio between the smallest and largest N_f, per method/shape.
    pub reduction: BTreeMap<String, Option<f64>>,
}

/// Train the requested shapes at every N_f and run the FDM study on the
/// same N_f values. Network rows hold medians over the seeds.
pub fn run_compare(spec: &CompareSpec, jobs: usize) -> Result<CompareSummary> {
    let mut n_f = spec.n_f.clone();
    n_f.sort_unstable();
    n_f.dedup();
    let sweep = SweepSpec {
        shapes: spec.shapes.clone(),
        seeds: spec.seeds.clone(),
        n_train: n_f.clone(),
        params: spec.params,
        schedule: spec.schedule.clone(),
        base: spec.base,
        sampling: Sampling::Uniform,
    };
    let summary = run_sweep(&sweep, jobs, None)?;
    let fdm = pool(jobs)?.install(|| convergence_study(&spec.params, &n_f, &spec.fdm))?;

    let mut rows = Vec::new();
    for &shape in &spec.shapes {
        for &n in &n_f {
            if let Some(c) = summary.cell(shape, n) {
                rows.push(CompareRow {
                    method: "ttn".into(),
                    shape: Some(shape),
                    n_f: n,
                    max_l2: c.median_max_l2.unwrap_or(f64::NAN),
                    wall_seconds: c.median_wall_seconds.unwrap_or(f64::NAN),
                });
            }
        }
    }
    for r in &fdm {
        rows.push(CompareRow {
            method: "fdm".into(),
            shape: None,
            n_f: r.n_f,
            max_l2: r.max_l2,
            wall_seconds: r.wall_seconds,
        });
    }

    let median_err =
        |shape: NetworkShape, n: usize| summary.cell(shape, n).and_then(|c| c.median_max_l2);
    let base_over_optimal = n_f
        .iter()
        .map(|&n| {
            let ratio = spec
                .optimal
                .and_then(|opt| Some(median_err(spec.base, n)? / median_err(opt, n)?));
            (n, ratio)
        })
        .collect();
    let (first, last) = (n_f[0], n_f[n_f.len() - 1]);
    let mut reduction = BTreeMap::new();
    for &shape in &spec.shapes {
        let r = median_err(shape, first)
            .zip(median_err(shape, last))
            .map(|(a, b)| a / b);
        reduction.insert(format!("ttn {shape}"), r);
    }
    let fdm_err = |n: usize| fdm.iter().find(|r| r.n_f == n).map(|r| r.max_l2);
    reduction.insert(
        "fdm".into(),
        fdm_err(first).zip(fdm_err(last)).map(|(a, b)| a / b),
    );

    Ok(CompareSummary {
        rows,
        fdm,
        runs: summary.runs,
        base_over_optimal,
        reduction,
    })
}

pub fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "shape", "N_f", "max_l2", "wall_seconds"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.shape.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            r.n_f.to_string(),
            format!("{:e}", r.max_l2),
            format!("{:e}", r.wall_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}
