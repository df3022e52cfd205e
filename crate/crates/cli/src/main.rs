//! `ttn`: training runs, sweeps, the FDM baseline and exports.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use config::{parse_list, parse_params, parse_shape, parse_shapes, FileConfig};
use ttn::fdm::{convergence_study, write_convergence_csv, FdmConfig};
use ttn::harness::{run_compare, run_sweep, write_compare_csv, CompareSpec, SweepSpec};
use ttn::loss::{make_training_set, Sampling};
use ttn::network::read_snapshot;
use ttn::optim::LbfgsConfig;
use ttn::physics::{exact_state, uniform_grid};
use ttn::stats::{log_log_slope, weight_stats};
use ttn::trainer::{train, TrainSchedule};
use ttn::{ModelParams, NetworkShape};

#[derive(Parser, Debug)]
#[command(
    name = "ttn",
    version,
    about = "Theory-trained networks for a solidification ODE system"
)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (0 = one per CPU).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Model parameters as `S,k0,qdot`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    params: Option<String>,
    /// JSON file with defaults for any flag; flags given on the command
    /// line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train one network.
    Train(TrainArgs),
    /// Train a grid of shapes and tag families relative to the base.
    Sweep(SweepArgs),
    /// Compare trained networks against the FDM baseline over N_f.
    Compare(CompareArgs),
    /// FDM convergence study.
    Fdm(FdmArgs),
    /// Export the exact solution.
    Exact(ExactArgs),
    /// Weight statistics of saved snapshots.
    Stats(StatsArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ScheduleArgs {
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    gamma1: Option<f64>,
    #[arg(long)]
    switch_epoch: Option<usize>,
    /// Adam learning rate (default from the depth/width rule).
    #[arg(long)]
    lr: Option<f64>,
    /// Iteration cap for the second phase.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Use the unsquared Frobenius norm in the penalty.
    #[arg(long)]
    frobenius: bool,
    /// `uniform` or `latin`.
    #[arg(long)]
    sampling: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[command(flatten)]
    sched: ScheduleArgs,
    /// Comma-separated phase-1 epochs to snapshot (switchover and final
    /// are always written).
    #[arg(long)]
    snapshots: Option<String>,
    /// Also snapshot every this many phase-1 epochs.
    #[arg(long)]
    histogram_every: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Explicit shapes `DxW,DxW,...`; overrides --depths/--widths.
    #[arg(long)]
    shapes: Option<String>,
    #[arg(long)]
    depths: Option<String>,
    #[arg(long)]
    widths: Option<String>,
    /// Seeds per cell, starting at --seed.
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated training-point counts.
    #[arg(long)]
    n_train_list: Option<String>,
    #[arg(long)]
    base: Option<String>,
    #[command(flatten)]
    sched: ScheduleArgs,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Comma-separated N_f values.
    #[arg(long)]
    n_f: Option<String>,
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    optimal: Option<String>,
    /// Read the optimal shape from a sweep's summary.json (default 5x2).
    #[arg(long)]
    from_sweep: Option<PathBuf>,
    /// Extra shapes (default: the same-size wider control 2x6).
    #[arg(long)]
    shapes: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    sched: ScheduleArgs,
}

#[derive(Args, Debug)]
struct FdmArgs {
    #[arg(long)]
    n_f: Option<String>,
    #[arg(long)]
    inner_tol: Option<f64>,
    #[arg(long)]
    max_inner_iters: Option<usize>,
    #[arg(long)]
    relaxation: Option<f64>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    /// Number of grid points on [0, 1].
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// A run directory (reads its snapshots/) or a single snapshot file.
    #[arg(long)]
    run: PathBuf,
}

/// Invalid input: exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    jobs: usize,
    params: ModelParams<f64>,
    file: FileConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(
                    e.downcast_ref::<ttn::Error>(),
                    Some(ttn::Error::Usage(_) | ttn::Error::Config(_) | ttn::Error::Domain(_))
                );
            ExitCode::from(if is_usage { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    let params = match cli.params.as_deref().or(file.params.as_deref()) {
        Some(s) => parse_params(s).map_err(UsageError)?,
        None => ModelParams::default(),
    };
    if let Err(e) = params.validate() {
        return usage(e.to_string());
    }
    let ctx = Ctx {
        out: cli
            .out
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        jobs: cli.jobs.or(file.jobs).unwrap_or(0),
        params,
        file,
    };
    match cli.cmd {
        Cmd::Train(a) => cmd_train(&ctx, a),
        Cmd::Sweep(a) => cmd_sweep(&ctx, a),
        Cmd::Compare(a) => cmd_compare(&ctx, a),
        Cmd::Fdm(a) => cmd_fdm(&ctx, a),
        Cmd::Exact(a) => cmd_exact(&ctx, a),
        Cmd::Stats(a) => cmd_stats(&ctx, a),
    }
}

fn schedule(ctx: &Ctx, a: &ScheduleArgs) -> anyhow::Result<TrainSchedule> {
    let f = &ctx.file;
    let mut s = TrainSchedule {
        seed: ctx.seed,
        ..Default::default()
    };
    if let Some(g) = a.gamma1.or(f.gamma1) {
        s.gamma1 = g;
    }
    if let Some(n) = a.switch_epoch.or(f.switch_epoch) {
        s.switch_epoch = n;
    }
    s.lr = a.lr.or(f.lr);
    if let Some(m) = a.max_iter.or(f.max_iter) {
        s.lbfgs = LbfgsConfig {
            max_iter: m,
            ..s.lbfgs
        };
    }
    if a.frobenius || f.frobenius.unwrap_or(false) {
        s.reg_norm = ttn::RegNorm::Frobenius;
    }
    if let Err(e) = s.validate() {
        return usage(e.to_string());
    }
    Ok(s)
}

fn sampling(ctx: &Ctx, a: &ScheduleArgs) -> anyhow::Result<Sampling> {
    match a.sampling.as_deref().or(ctx.file.sampling.as_deref()) {
        None | Some("uniform") => Ok(Sampling::Uniform),
        Some("latin") => Ok(Sampling::Latin { seed: ctx.seed }),
        Some(other) => usage(format!(
            "unknown sampling {other:?}; expected uniform or latin"
        )),
    }
}

fn n_train(ctx: &Ctx, a: &ScheduleArgs) -> usize {
    a.n_train.or(ctx.file.n_train).unwrap_or(200)
}

fn shape_of(depth: usize, width: usize) -> anyhow::Result<NetworkShape> {
    NetworkShape::new(depth, width).map_err(|e| UsageError(e.to_string()).into())
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> anyhow::Result<ExitCode> {
    let f = &ctx.file;
    let shape = shape_of(
        a.depth.or(f.depth).unwrap_or(1),
        a.width.or(f.width).unwrap_or(2),
    )?;
    let mut sched = schedule(ctx, &a.sched)?;
    if let Some(s) = a.snapshots.as_deref().or(f.snapshots.as_deref()) {
        sched.snapshot_epochs = parse_list(s).map_err(UsageError)?;
    }
    sched.histogram_every = a.histogram_every.or(f.histogram_every);
    if let Err(e) = sched.validate() {
        return usage(e.to_string());
    }
    let n = n_train(ctx, &a.sched);
    let ts =
        make_training_set(n, sampling(ctx, &a.sched)?).map_err(|e| UsageError(e.to_string()))?;

    let (_, rec) = train(shape, &ctx.params, &ts, &sched)?;
    rec.persist(&ctx.out)
        .with_context(|| format!("writing run to {}", ctx.out.display()))?;
    let err = rec
        .max_l2()
        .map(|e| format!("{e:.3e}"))
        .unwrap_or_else(|| "n/a".into());
    println!(
        "{shape} seed {} final_loss {:.3e} max_l2 {err} time {:.3}s{}",
        sched.seed,
        rec.final_loss,
        rec.wall_seconds(),
        if rec.failed { " FAILED" } else { "" }
    );
    if rec.failed {
        eprintln!(
            "training failed: {}",
            rec.failure.as_deref().unwrap_or("unknown")
        );
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(ctx: &Ctx, a: SweepArgs) -> anyhow::Result<ExitCode> {
    let f = &ctx.file;
    let mut spec = SweepSpec::default_grid();
    if let Some(s) = a.shapes.as_deref().or(f.shapes.as_deref()) {
        spec.shapes = parse_shapes(s).map_err(UsageError)?;
    } else if a.depths.is_some() || a.widths.is_some() || f.depths.is_some() || f.widths.is_some() {
        let depths: Vec<usize> = match a.depths.as_deref().or(f.depths.as_deref()) {
            Some(s) => parse_list(s).map_err(UsageError)?,
            None => vec![1, 2, 3, 5, 8],
        };
        let widths: Vec<usize> = match a.widths.as_deref().or(f.widths.as_deref()) {
            Some(s) => parse_list(s).map_err(UsageError)?,
            None => vec![2, 4, 6, 12],
        };
        spec.shapes = depths
            .iter()
            .flat_map(|&d| {
                widths
                    .iter()
                    .map(move |&w| NetworkShape { depth: d, width: w })
            })
            .collect();
    }
    let reps = a.replicates.or(f.replicates).unwrap_or(2);
    if reps == 0 {
        return usage("--replicates must be at least 1");
    }
    spec.seeds = (ctx.seed..ctx.seed + reps as u64).collect();
    if let Some(s) = a.n_train_list.as_deref().or(f.n_train_list.as_deref()) {
        spec.n_train = parse_list(s).map_err(UsageError)?;
    } else {
        spec.n_train = vec![n_train(ctx, &a.sched)];
    }
    if let Some(b) = a.base.as_deref().or(f.base.as_deref()) {
        spec.base = parse_shape(b).map_err(UsageError)?;
    }
    spec.params = ctx.params;
    spec.schedule = schedule(ctx, &a.sched)?;
    spec.sampling = sampling(ctx, &a.sched)?;
    if let Err(e) = spec.validate() {
        return usage(e.to_string());
    }

    std::fs::create_dir_all(&ctx.out)?;
    let total = spec.shapes.len() * spec.seeds.len() * spec.n_train.len();
    let (tx, rx) = mpsc::channel();
    let printer = std::thread::spawn(move || {
        for (i, run) in rx.iter().enumerate() {
            let run: ttn::harness::SweepRun = run;
            eprintln!(
                "[{}/{total}] {} seed {} N={} loss {:.3e} max_l2 {}",
                i + 1,
                run.shape,
                run.seed,
                run.n_train,
                run.final_loss,
                run.max_l2
                    .map(|e| format!("{e:.3e}"))
                    .unwrap_or_else(|| "n/a".into())
            );
        }
    });
    let summary = run_sweep(&spec, ctx.jobs, Some(tx))?;
    let _ = printer.join();

    summary.write_csv(&ctx.out.join("sweep.csv"))?;
    summary.write_json(&ctx.out.join("summary.json"))?;
    let show = |s: Option<NetworkShape>| s.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
    println!(
        "base {} optimal {} suggested base {}",
        summary.base,
        show(summary.optimal),
        show(summary.suggested_base)
    );
    for (family, rho) in &summary.spearman {
        if let Some(r) = rho {
            println!("spearman {family} {r:.3}");
        }
    }
    if summary.all_failed {
        eprintln!("every run failed");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(ctx: &Ctx, a: CompareArgs) -> anyhow::Result<ExitCode> {
    let f = &ctx.file;
    let n_f: Vec<usize> = match a.n_f.as_deref().or(f.n_f.as_deref()) {
        Some(s) => parse_list(s).map_err(UsageError)?,
        None => vec![200, 400],
    };
    if n_f.is_empty() || n_f.contains(&0) {
        return usage("N_f values must be positive");
    }
    let base = match a.base.as_deref().or(f.base.as_deref()) {
        Some(b) => parse_shape(b).map_err(UsageError)?,
        None => NetworkShape { depth: 1, width: 2 },
    };
    let optimal = if let Some(o) = a.optimal.as_deref().or(f.optimal.as_deref()) {
        parse_shape(o).map_err(UsageError)?
    } else if let Some(p) = &a.from_sweep {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        match serde_json::from_value::<NetworkShape>(v["optimal"].clone()) {
            Ok(s) => s,
            Err(_) => return usage(format!("{} has no optimal shape", p.display())),
        }
    } else {
        NetworkShape { depth: 5, width: 2 }
    };
    let mut shapes = vec![base];
    if optimal != base {
        shapes.push(optimal);
    }
    let extra = match a.shapes.as_deref().or(f.shapes.as_deref()) {
        Some(s) => parse_shapes(s).map_err(UsageError)?,
        None => vec![NetworkShape { depth: 2, width: 6 }],
    };
    for s in extra {
        if !shapes.contains(&s) {
            shapes.push(s);
        }
    }
    let reps = a.replicates.or(f.replicates).unwrap_or(2);
    if reps == 0 {
        return usage("--replicates must be at least 1");
    }
    let spec = CompareSpec {
        shapes,
        n_f,
        seeds: (ctx.seed..ctx.seed + reps as u64).collect(),
        params: ctx.params,
        schedule: schedule(ctx, &a.sched)?,
        fdm: FdmConfig::default(),
        base,
        optimal: Some(optimal),
    };
    if let Err(e) = ctx.params.require_mushy_valid() {
        return usage(e.to_string());
    }
    std::fs::create_dir_all(&ctx.out)?;
    let summary = run_compare(&spec, ctx.jobs)?;
    write_compare_csv(&ctx.out.join("compare.csv"), &summary.rows)?;
    std::fs::write(
        ctx.out.join("compare.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    for (n, r) in &summary.base_over_optimal {
        if let Some(r) = r {
            println!("N_f {n}: base/optimal error ratio {r:.2}");
        }
    }
    for (k, r) in &summary.reduction {
        if let Some(r) = r {
            println!("{k}: error ratio first/last N_f {r:.2}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_fdm(ctx: &Ctx, a: FdmArgs) -> anyhow::Result<ExitCode> {
    let f = &ctx.file;
    let n_f: Vec<usize> = match a.n_f.as_deref().or(f.n_f.as_deref()) {
        Some(s) => parse_list(s).map_err(UsageError)?,
        None => vec![125, 250, 500, 1000, 2000],
    };
    let mut cfg = FdmConfig::default();
    if let Some(t) = a.inner_tol.or(f.inner_tol) {
        cfg.inner_tol = t;
    }
    if let Some(m) = a.max_inner_iters.or(f.max_inner_iters) {
        cfg.max_inner_iters = m;
    }
    if let Some(r) = a.relaxation.or(f.relaxation) {
        cfg.relaxation = r;
    }
    if let Some(&n) = n_f.first() {
        cfg.n_steps = n;
    }
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    std::fs::create_dir_all(&ctx.out)?;
    let rows = convergence_study(&ctx.params, &n_f, &cfg)?;
    write_convergence_csv(&ctx.out.join("fdm.csv"), &rows)?;
    for r in &rows {
        println!(
            "N_f {:>6}  max_l2 {:.3e}  {:.4}s  {:.2} sweeps/step",
            r.n_f, r.max_l2, r.wall_seconds, r.inner_iters_mean
        );
    }
    let x: Vec<f64> = rows.iter().map(|r| r.n_f as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.max_l2).collect();
    if let Some(slope) = log_log_slope(&x, &y) {
        println!("log-log slope {slope:.3}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_exact(ctx: &Ctx, a: ExactArgs) -> anyhow::Result<ExitCode> {
    let points = a.points.or(ctx.file.points).unwrap_or(1001);
    if points < 2 {
        return usage("--points must be at least 2");
    }
    if !ctx.params.is_mushy_valid() {
        return usage(format!(
            "parameters S={}, k0={}, qdot={} leave the mushy zone on [0, 1]; the exact solution only covers -1 < T <= 0 with cooling",
            ctx.params.stefan, ctx.params.k0, ctx.params.qdot
        ));
    }
    std::fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("exact.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["t", "T_ex", "Cl_ex", "phi_ex", "dT_ex", "dCl_ex", "dphi_ex"])?;
    for t in uniform_grid::<f64>(points) {
        let j = exact_state(t, &ctx.params)?;
        w.write_record(
            [
                t,
                j.value.temp,
                j.value.conc,
                j.value.phi,
                j.rate.temp,
                j.rate.conc,
                j.rate.phi,
            ]
            .map(|v| format!("{v:e}")),
        )?;
    }
    w.flush()?;
    println!("wrote {points} rows to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn snapshot_files(run: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if run.is_file() {
        return Ok(vec![run.to_path_buf()]);
    }
    let dir = run.join("snapshots");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no snapshots in {}", dir.display());
    }
    Ok(files)
}

fn cmd_stats(ctx: &Ctx, a: StatsArgs) -> anyhow::Result<ExitCode> {
    let files = snapshot_files(&a.run)?;
    std::fs::create_dir_all(&ctx.out)?;
    let mut summary = csv::Writer::from_path(ctx.out.join("weight_stats.csv"))?;
    summary.write_record(["epoch", "mean", "abs_mean", "std", "n_weights"])?;
    let mut hist = csv::Writer::from_path(ctx.out.join("weight_hist.csv"))?;
    hist.write_record(["epoch", "layer", "bin", "center", "percent"])?;
    let started = Instant::now();
    for (i, path) in files.iter().enumerate() {
        let (net, meta) =
            read_snapshot(path).with_context(|| format!("reading {}", path.display()))?;
        let epoch = meta.map(|m| m.epoch).unwrap_or(i);
        let s = weight_stats(&net);
        summary.write_record([
            epoch.to_string(),
            format!("{:e}", s.mean),
            format!("{:e}", s.abs_mean),
            format!("{:e}", s.std),
            net.shape().n_weights().to_string(),
        ])?;
        let layers = std::iter::once(("all".to_string(), &s.histogram)).chain(
            s.per_layer
                .iter()
                .enumerate()
                .map(|(l, h)| (l.to_string(), h)),
        );
        for (layer, h) in layers {
            for (k, (c, p)) in h.centers().iter().zip(&h.percent).enumerate() {
                hist.write_record([
                    epoch.to_string(),
                    layer.clone(),
                    k.to_string(),
                    format!("{c:e}"),
                    format!("{p:e}"),
                ])?;
            }
        }
    }
    summary.flush()?;
    hist.flush()?;
    println!(
        "{} snapshots summarized in {:.2}s",
        files.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}
