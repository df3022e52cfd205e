//! Acceptance criteria 1–11. Each test writes one `PASS`/`FAIL` line to
//! stderr (bypassing the harness capture) before asserting.
//!
//! Training runs are shared between criteria. Model parameters default to
//! `ModelParams::default()` and can be overridden with
//! `TTN_ACCEPT_PARAMS=S,k0,qdot`.

mod common;

use std::io::Write;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ttn::autodiff::loss_gradient;
use ttn::fdm::{convergence_study, FdmConfig};
use ttn::harness::{
    run_compare, run_sweep, CompareSpec, CompareSummary, Family, SweepSpec, SweepSummary,
};
use ttn::loss::{initial_lr, make_training_set, Sampling};
use ttn::physics::{exact_state, residuals, uniform_grid};
use ttn::stats::{log_log_slope, median_of, spearman};
use ttn::trainer::train;
use ttn::{ModelParams, Network, NetworkShape, RegNorm, RunRecord, TrainSchedule};

const BASE: NetworkShape = NetworkShape { depth: 1, width: 2 };
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const COMPARE_SEEDS: [u64; 3] = [0, 1, 2];

fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "criterion {n:>2}: {}  {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
}

fn sci(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3e}"))
        .unwrap_or_else(|| "n/a".into())
}

fn params() -> ModelParams<f64> {
    static P: OnceLock<ModelParams<f64>> = OnceLock::new();
    *P.get_or_init(|| match std::env::var("TTN_ACCEPT_PARAMS") {
        Ok(s) => {
            let v: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse().expect("TTN_ACCEPT_PARAMS"))
                .collect();
            assert_eq!(v.len(), 3, "TTN_ACCEPT_PARAMS expects S,k0,qdot");
            let p = ModelParams::new(v[0], v[1], v[2]).unwrap();
            p.require_mushy_valid().unwrap();
            p
        }
        Err(_) => ModelParams::default(),
    })
}

fn base_runs(gamma1: f64) -> Vec<RunRecord> {
    let ts = make_training_set(200, Sampling::Uniform).unwrap();
    SEEDS
        .iter()
        .map(|&seed| {
            let sched = TrainSchedule {
                seed,
                gamma1,
                ..Default::default()
            };
            train(BASE, &params(), &ts, &sched).unwrap().1
        })
        .collect()
}

fn prt_runs() -> &'static [RunRecord] {
    static R: OnceLock<Vec<RunRecord>> = OnceLock::new();
    R.get_or_init(|| base_runs(1e-4))
}

fn plain_runs() -> &'static [RunRecord] {
    static R: OnceLock<Vec<RunRecord>> = OnceLock::new();
    R.get_or_init(|| base_runs(0.0))
}

fn sweep() -> &'static SweepSummary {
    static S: OnceLock<SweepSummary> = OnceLock::new();
    S.get_or_init(|| {
        let spec = SweepSpec {
            params: params(),
            ..SweepSpec::default_grid()
        };
        run_sweep(&spec, 0, None).unwrap()
    })
}

fn compare() -> &'static CompareSummary {
    static C: OnceLock<CompareSummary> = OnceLock::new();
    C.get_or_init(|| {
        let optimal = sweep().optimal.unwrap_or(BASE);
        let mut shapes = vec![BASE];
        if optimal != BASE {
            shapes.push(optimal);
        }
        let spec = CompareSpec {
            shapes,
            n_f: vec![200, 400, 2000],
            seeds: COMPARE_SEEDS.to_vec(),
            params: params(),
            schedule: TrainSchedule::default(),
            fdm: FdmConfig::default(),
            base: BASE,
            optimal: Some(optimal),
        };
        run_compare(&spec, 0).unwrap()
    })
}

fn random_mushy_params(rng: &mut ChaCha8Rng) -> ModelParams<f64> {
    loop {
        let p = ModelParams::new(
            rng.gen_range(0.02..2.0),
            rng.gen_range(0.02..0.95),
            rng.gen_range(-3.0..-0.05),
        )
        .unwrap();
        if p.is_mushy_valid() {
            return p;
        }
    }
}

#[test]
fn criterion_01_autodiff_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..24 {
        let shape = NetworkShape::new(rng.gen_range(1..=4), rng.gen_range(2..=8)).unwrap();
        let net = Network::<f64>::init(shape, rng.gen());
        let p = random_mushy_params(&mut rng);
        let ts = make_training_set(rng.gen_range(5..40), Sampling::Latin { seed: case }).unwrap();
        let gamma = [0.0, 1e-4, 0.1][case as usize % 3];
        let f = |n: &Network<f64>| {
            loss_gradient(n, &ts, &p, gamma, RegNorm::SquaredFrobenius)
                .unwrap()
                .terms
                .regularized()
        };
        let exact = loss_gradient(&net, &ts, &p, gamma, RegNorm::SquaredFrobenius)
            .unwrap()
            .grad;
        let mut probe = net.clone();
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (i, &g) in exact.iter().enumerate() {
            let w = net.params()[i];
            probe.params_mut()[i] = w + h;
            let up = f(&probe);
            probe.params_mut()[i] = w - h;
            let down = f(&probe);
            probe.params_mut()[i] = w;
            let fd = (up - down) / (2.0 * h);
            diff = diff.max((fd - g).abs());
            scale = scale.max(fd.abs());
        }
        worst = worst.max(diff / scale.max(1e-12));
    }
    let pass = worst < 1e-5;
    report(
        1,
        pass,
        format!("24 random networks, max relative gradient error {worst:.2e} (< 1e-5)"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_exact_solution_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = uniform_grid::<f64>(1001);
    let (mut worst_res, mut worst_rk4): (f64, f64) = (0.0, 0.0);
    for _ in 0..10 {
        let p = random_mushy_params(&mut rng);
        for &t in &grid {
            let r = residuals(&exact_state(t, &p).unwrap(), &p);
            worst_res = worst_res
                .max(r.energy.abs())
                .max(r.solute.abs())
                .max(r.liquidus.abs());
        }
        for (t, [temp, phi]) in common::rk4(&p, 100_000, 100) {
            let e = exact_state(t, &p).unwrap().value;
            worst_rk4 = worst_rk4
                .max((e.temp - temp).abs())
                .max((e.conc + temp).abs())
                .max((e.phi - phi).abs());
        }
    }
    let pass = worst_res < 1e-8 && worst_rk4 < 1e-8;
    report(
        2,
        pass,
        format!("10 parameter sets: max residual {worst_res:.2e}, max deviation from RK4 {worst_rk4:.2e} (both < 1e-8)"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_learning_rate_rule() {
    let lr = |d, w| initial_lr(NetworkShape::new(d, w).unwrap());
    let (a, b, c) = (lr(1, 2), lr(5, 2), lr(8, 12));
    let target = 0.01 / (8.0f64 * 12.0 / 10.0).powi(2);
    let pass = a == 0.01
        && b == 0.01
        && ((c - target) / target).abs() < 1e-12
        && (c - 1.0851e-4).abs() < 5e-9;
    report(
        3,
        pass,
        format!("lambda0(1,2)={a}, lambda0(5,2)={b}, lambda0(8,12)={c:.6e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_fdm_first_order() {
    let list = [125, 250, 500, 1000, 2000];
    let rows = convergence_study(&params(), &list, &FdmConfig::default()).unwrap();
    let x: Vec<f64> = rows.iter().map(|r| r.n_f as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.max_l2).collect();
    let slope = log_log_slope(&x, &y).unwrap();
    let pass = (-1.15..=-0.85).contains(&slope);
    report(
        4,
        pass,
        format!(
            "log-log slope {slope:.4} in [-1.15, -0.85]; max L2 {:.3e} at N_f=125, {:.3e} at N_f=2000",
            y[0],
            y[y.len() - 1]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_base_network_trains() {
    let runs = prt_runs();
    let good = runs
        .iter()
        .filter(|r| !r.failed && r.final_loss <= 1e-5)
        .count();
    let losses: Vec<f64> = runs.iter().map(|r| r.final_loss).collect();
    let pass = good >= 3;
    report(
        5,
        pass,
        format!(
            "base {BASE} with PRT: final L^S <= 1e-5 in {good}/5 seeds (median {}, losses {})",
            sci(median_of(&losses)),
            losses
                .iter()
                .map(|l| format!("{l:.2e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_partial_regularization_helps() {
    let (with, without) = (prt_runs(), plain_runs());
    let loss =
        |rs: &[RunRecord]| median_of(&rs.iter().map(|r| r.final_loss).collect::<Vec<_>>()).unwrap();
    let osc = |rs: &[RunRecord]| {
        median_of(&rs.iter().filter_map(|r| r.oscillation).collect::<Vec<_>>()).unwrap()
    };
    let err =
        |rs: &[RunRecord]| median_of(&rs.iter().filter_map(|r| r.max_l2()).collect::<Vec<_>>());
    let (lw, lo) = (loss(with), loss(without));
    let (ow, oo) = (osc(with), osc(without));
    let (ew, eo) = (err(with), err(without));
    let pass = lw <= lo && ow < oo;
    report(
        6,
        pass,
        format!(
            "median final L^S {lw:.3e} (PRT) vs {lo:.3e} (none), ratio {:.2}; median oscillation {ow:.4} vs {oo:.4}; median max L2 {} vs {}",
            lo / lw,
            sci(ew),
            sci(eo)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_error_band() {
    let s = sweep();
    let ok: Vec<_> = s.runs.iter().filter(|r| r.succeeded()).collect();
    let errs: Vec<f64> = ok.iter().filter_map(|r| r.max_l2).collect();
    let outside: Vec<String> = ok
        .iter()
        .filter(|r| !r.max_l2.is_some_and(|e| (1e-6..=1e-3).contains(&e)))
        .map(|r| format!("{}/s{}={}", r.shape, r.seed, sci(r.max_l2)))
        .collect();
    // informational: the temperature and concentration errors alone
    let tc_inside = ok
        .iter()
        .filter(|r| {
            r.l2.is_some_and(|e| e[..2].iter().all(|x| (1e-6..=1e-3).contains(x)))
        })
        .count();
    let lo = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errs.iter().copied().fold(0.0, f64::max);
    let pass = !ok.is_empty() && outside.is_empty();
    report(
        7,
        pass,
        format!(
            "{} of {} sweep runs succeeded; max L2 range [{lo:.2e}, {hi:.2e}]; {} outside [1e-6, 1e-3] (T and Cl errors alone inside in {tc_inside}){}",
            ok.len(),
            s.runs.len(),
            outside.len(),
            if outside.is_empty() { String::new() } else { format!(": {}", outside.join(", ")) }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_deeper_only_loss_tracks_error() {
    let s = sweep();
    let pts: Vec<(f64, f64)> = s
        .runs
        .iter()
        .filter(|r| r.family == Family::DeeperOnly && r.succeeded())
        .filter_map(|r| Some((r.final_loss, r.max_l2?)))
        .collect();
    let shapes: std::collections::BTreeSet<_> = s
        .runs
        .iter()
        .filter(|r| r.family == Family::DeeperOnly && r.succeeded())
        .map(|r| r.shape)
        .collect();
    let (loss, err): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let rho = spearman(&loss, &err);
    let pass = shapes.len() >= 5 && rho.is_some_and(|r| r >= 0.6);
    report(
        8,
        pass,
        format!(
            "{} deeper-only shapes, {} runs: Spearman rho(final loss, max L2) = {} (>= 0.6)",
            shapes.len(),
            pts.len(),
            rho.map(|r| format!("{r:.3}"))
                .unwrap_or_else(|| "n/a".into())
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_optimal_beats_base() {
    let c = compare();
    let optimal = sweep().optimal;
    let ratio = |n: usize| c.base_over_optimal.get(&n).copied().flatten();
    let (r200, r400) = (ratio(200), ratio(400));
    let pass =
        optimal.is_some() && r200.is_some_and(|r| r >= 1.0) && r400.is_some_and(|r| r >= 1.0);
    report(
        9,
        pass,
        format!(
            "optimal {} vs base {BASE}: base/optimal median max L2 = {} at N_f=200, {} at N_f=400 (>= 1; reference about 10)",
            optimal.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
            r200.map(|r| format!("{r:.2}")).unwrap_or_else(|| "n/a".into()),
            r400.map(|r| format!("{r:.2}")).unwrap_or_else(|| "n/a".into()),
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_network_error_saturates() {
    let c = compare();
    let ttn = c.reduction.get(&format!("ttn {BASE}")).copied().flatten();
    let fdm = c.reduction.get("fdm").copied().flatten();
    let pass = ttn.is_some_and(|r| r < 10.0 && r > 0.1) && fdm.is_some_and(|r| r >= 8.0);
    report(
        10,
        pass,
        format!(
            "N_f 200 -> 2000: base network error changes by a factor {} (< 10), FDM error decreases by {} (>= 8)",
            ttn.map(|r| format!("{r:.2}")).unwrap_or_else(|| "n/a".into()),
            fdm.map(|r| format!("{r:.2}")).unwrap_or_else(|| "n/a".into()),
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_loss_bookkeeping() {
    let mut rows = 0usize;
    let mut worst_sum: f64 = 0.0;
    let mut regressions = Vec::new();
    for r in prt_runs().iter().chain(plain_runs()) {
        for row in &r.curve {
            let sum = row.loss_t + row.loss_cl + row.loss_liq + row.loss_ic;
            worst_sum = worst_sum.max((sum - row.loss_s).abs() / row.loss_s.max(f64::MIN_POSITIVE));
            rows += 1;
        }
        if !r.failed && r.final_loss > r.switch_loss {
            regressions.push(format!("{} seed {}", r.shape, r.schedule.seed));
        }
    }
    let summaries = sweep().runs.iter().chain(&compare().runs);
    let mut n_runs = 2 * SEEDS.len();
    for r in summaries {
        n_runs += 1;
        if r.succeeded() && r.final_loss > r.switch_loss {
            regressions.push(format!("{} seed {} N={}", r.shape, r.seed, r.n_train));
        }
    }
    let pass = worst_sum <= 1e-12 && regressions.is_empty();
    report(
        11,
        pass,
        format!(
            "{rows} logged epochs: max |sum of terms - L^S|/L^S = {worst_sum:.1e} (<= 1e-12); final > switchover loss in {} of {n_runs} runs{}",
            regressions.len(),
            if regressions.is_empty() { String::new() } else { format!(": {}", regressions.join(", ")) }
        ),
    );
    assert!(pass);
}
