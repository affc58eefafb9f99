use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ccg_bench::output::Fits;
use ccg_bench::{
    aggregate, fit_metric, fit_parabola_and_mult_time, read_records, run_sweep, tolerance_sweep, write_outputs,
    ExperimentConfig, Metric, Summary,
};
use ccg_core::complexity::{asymptotic_optimal_p, exact_to_f64, gain_holds, optimal_p, worst_case_mults, Exact};
use ccg_core::mtx::{read_block, read_matrix, read_vector, write_block, write_matrix, write_vector};
use ccg_core::parallel::parallel_ccg;
use ccg_core::problem::{float_instance, rational_instance, Mode, ProblemInstance, ProblemSpec};
use ccg_core::solvers::{
    ccg_solve, cg_solve, max_objective_increase, mccg_solve, optimality_defect, orthogonality_report,
    steepest_descent_solve, subspace_dimension,
};
use ccg_core::{Algo, Rational, Scalar, SolveOptions, SolveTrace};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ccg", version, about = "Cooperative conjugate gradient solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded problem as Matrix Market files plus meta.json.
    Gen {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a generated or stored problem and print a JSON summary.
    Solve(SolveArgs),
    /// Evaluate the multiplication-count model.
    Model {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: Option<usize>,
    },
    /// Benchmark sweeps and fits.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Args, Clone)]
struct ProblemArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(long, default_value_t = 1e4)]
    cond: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Float)]
    mode: ModeArg,
}

impl ProblemArgs {
    fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            n: self.n,
            p: self.p,
            cond: self.cond,
            seed: self.seed,
            mode: self.mode.into(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Float,
    Rational,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Float => Mode::Float,
            ModeArg::Rational => Mode::Rational,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Cg,
    Ccg,
    Mccg,
    Sd,
    CcgPar,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Algo {
        match a {
            AlgoArg::Cg => Algo::Cg,
            AlgoArg::Ccg => Algo::Ccg,
            AlgoArg::Mccg => Algo::Mccg,
            AlgoArg::Sd => Algo::SteepestDescent,
            AlgoArg::CcgPar => Algo::CcgParallel,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum, default_value_t = AlgoArg::Ccg)]
    algo: AlgoArg,
    /// Worker threads for ccg-par; defaults to the agent count.
    #[arg(long)]
    workers: Option<usize>,
    /// Residual 2-norm tolerance; defaults to 1e-8 (float) or 0 (rational).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Keep all iterates and check orthogonality, optimality and monotonicity.
    #[arg(long)]
    verify: bool,
    /// Write one JSON record per iteration to this file.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Directory written by `gen`; otherwise a problem is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run a sweep over dimensions, tolerances, trials and algorithms.
    Sweep(SweepArgs),
    /// Run a sweep at one dimension over a decreasing tolerance list.
    Tolerances(SweepArgs),
    /// Fit a power law to records.csv.
    Fit {
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = AlgoArg::Ccg)]
        algo: AlgoArg,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Time,
    Iters,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Time => Metric::Time,
            MetricArg::Iters => Metric::Iters,
        }
    }
}

fn print_json(v: &Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_instance<T: Scalar>(dir: &Path, inst: &ProblemInstance<T>) -> Result<()> {
    write_matrix(create(&dir.join("A.mtx"))?, &inst.a)?;
    write_vector(create(&dir.join("b.mtx"))?, &inst.b)?;
    write_block(create(&dir.join("X0.mtx"))?, &inst.x0)?;
    if let Some(x) = &inst.x_star {
        write_vector(create(&dir.join("xstar.mtx"))?, x)?;
    }
    Ok(())
}

fn gen(problem: &ProblemArgs, out: &Path) -> Result<()> {
    let spec = problem.spec();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let realized = match spec.mode {
        Mode::Float => {
            let inst = float_instance(&spec)?;
            write_instance(out, &inst)?;
            inst.cond
        }
        Mode::Rational => {
            write_instance(out, &rational_instance(&spec)?)?;
            None
        }
    };
    let meta = json!({
        "spec": spec,
        "realized_cond": realized,
        "files": ["A.mtx", "b.mtx", "X0.mtx", "xstar.mtx"],
    });
    let mut f = create(&out.join("meta.json"))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    writeln!(f)?;
    print_json(&meta)
}

fn load_instance<T: Scalar>(dir: &Path) -> Result<ProblemInstance<T>> {
    let xstar = dir.join("xstar.mtx");
    Ok(ProblemInstance {
        a: read_matrix(open(&dir.join("A.mtx"))?)?,
        b: read_vector(open(&dir.join("b.mtx"))?)?,
        x0: read_block(open(&dir.join("X0.mtx"))?)?,
        x_star: if xstar.exists() { Some(read_vector(open(&xstar)?)?) } else { None },
        cond: None,
    })
}

fn stored_mode(dir: &Path) -> Result<Option<Mode>> {
    let path = dir.join("meta.json");
    if !path.exists() {
        return Ok(None);
    }
    let meta: Value = serde_json::from_reader(open(&path)?)?;
    match meta.pointer("/spec/mode").and_then(Value::as_str) {
        Some(m) => Ok(Some(m.parse()?)),
        None => Ok(None),
    }
}

fn run_algo<T: Scalar>(
    algo: Algo,
    inst: &ProblemInstance<T>,
    opts: &SolveOptions<T>,
    workers: usize,
) -> Result<SolveTrace<T>> {
    let (a, b, x0) = (&inst.a, &inst.b, &inst.x0);
    Ok(match algo {
        Algo::Cg => cg_solve(a, b, x0.col(0), opts)?,
        Algo::SteepestDescent => steepest_descent_solve(a, b, x0.col(0), opts)?,
        Algo::Ccg => ccg_solve(a, b, x0, opts)?,
        Algo::Mccg => mccg_solve(a, b, x0, opts)?,
        Algo::CcgParallel => parallel_ccg(a, b, x0, opts, workers)?,
    })
}

fn solve_instance<T: Scalar>(args: &SolveArgs, inst: ProblemInstance<T>) -> Result<Value> {
    let algo: Algo = args.algo.into();
    let p = inst.x0.cols();
    let workers = args.workers.unwrap_or(p);
    if args.workers.is_some() && algo != Algo::CcgParallel {
        bail!("--workers only applies to --algo ccg-par");
    }
    let mut opts = SolveOptions::<T>::default();
    if let Some(tol) = args.tol {
        opts.tol = tol;
    }
    opts.max_iters = args.max_iters;
    opts.verify = args.verify;
    opts.x_star = inst.x_star.clone();

    let trace = run_algo(algo, &inst, &opts, workers)?;

    if let Some(path) = &args.trace_out {
        let mut f = create(path)?;
        for rec in &trace.records {
            serde_json::to_writer(&mut f, rec)?;
            writeln!(f)?;
        }
        f.flush()?;
    }

    let mut summary = json!({
        "algo": algo.name(),
        "mode": T::FIELD,
        "n": inst.a.n(),
        "p": if algo.is_cooperative() { p } else { 1 },
        "status": trace.status,
        "iterations": trace.iterations(),
        "final_minres": trace.final_minres(),
        "active_agents": trace.active_agents,
        "true_residual_norms": trace.true_residual_norms,
        "elapsed_s": trace.elapsed.as_secs_f64(),
    });
    if algo == Algo::CcgParallel {
        summary["workers"] = json!(workers);
    }
    if let Some(history) = &trace.history {
        let ortho = orthogonality_report(&inst.a, history, None)?;
        let (defect, defect_exact) = optimality_defect(&inst.a, &inst.b, history)?;
        let rank_tol = if T::EXACT { 0.0 } else { 1e-10 };
        let dim = match history.d.len() {
            0 => 0,
            len => subspace_dimension(history, len - 1, rank_tol)?,
        };
        summary["verify"] = json!({
            "residual_orthogonality": ortho.residual_ratio,
            "direction_conjugacy": ortho.direction_ratio,
            "exactly_orthogonal": ortho.exact,
            "optimality_defect": defect,
            "exactly_optimal": defect_exact,
            "max_objective_increase": max_objective_increase(&inst.a, &inst.b, history),
            "subspace_dimension": dim,
        });
    }
    Ok(summary)
}

fn solve(args: &SolveArgs) -> Result<()> {
    let summary = match &args.input {
        Some(dir) => match stored_mode(dir)?.unwrap_or(args.problem.mode.into()) {
            Mode::Float => solve_instance(args, load_instance::<f64>(dir)?)?,
            Mode::Rational => solve_instance(args, load_instance::<Rational>(dir)?)?,
        },
        None => {
            let spec = args.problem.spec();
            match spec.mode {
                Mode::Float => solve_instance(args, float_instance(&spec)?)?,
                Mode::Rational => solve_instance(args, rational_instance(&spec)?)?,
            }
        }
    };
    print_json(&summary)
}

fn exact_json(v: &Exact) -> Value {
    json!({ "exact": format!("{}/{}", v.numer(), v.denom()), "value": exact_to_f64(v) })
}

fn model(n: usize, p: Option<usize>) -> Result<()> {
    let (p_star, n_star) = optimal_p(n)?;
    let gain = gain_holds(n)?;
    let at_p = match p {
        Some(p) => {
            let est = worst_case_mults(n, p)?;
            json!({
                "p": p,
                "total": exact_json(&est.total_mults),
                "per_iteration": est.per_iteration,
                "integer_total": est.integer_total.to_string(),
            })
        }
        None => Value::Null,
    };
    print_json(&json!({
        "n": n,
        "N": at_p,
        "p_star": p_star,
        "N_star": exact_json(&n_star),
        "gain": {
            "holds": gain.holds,
            "witness": exact_json(&gain.witness),
            "exhaustive": gain.exhaustive,
        },
        "asymptotic_p_star": asymptotic_optimal_p(n),
    }))
}

fn load_config(args: &SweepArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn fits_for(records: &[ccg_bench::ExperimentRecord], algos: &[Algo]) -> std::collections::BTreeMap<String, Fits> {
    algos
        .iter()
        .map(|&algo| {
            let fits = Fits {
                time: fit_metric(records, algo, Metric::Time).ok(),
                iters: fit_metric(records, algo, Metric::Iters).ok(),
                parabola: fit_parabola_and_mult_time(records, algo).ok(),
            };
            (algo.name().to_string(), fits)
        })
        .collect()
}

fn report(dir: &Path, summary: &Summary) {
    for w in &summary.aggregate.warnings {
        eprintln!("warning: {w}");
    }
    for c in &summary.aggregate.cells {
        eprintln!(
            "n={:<6} tol={:<8e} cg {:>8.2} it {:>10.4} s | {} {:>8.2} it {:>10.4} s | ratio {:.3} speedup {:.3}{}",
            c.n,
            c.tol,
            c.cg_iters_mean,
            c.cg_time_mean_s,
            c.cooperative,
            c.coop_iters_mean,
            c.coop_time_mean_s,
            c.iteration_ratio,
            c.speedup,
            if c.all_converged { "" } else { " (not all converged)" }
        );
    }
    eprintln!("outputs written to {}", dir.display());
}

fn bench_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let records = run_sweep(&cfg)?;
    let mut summary = Summary::new(Some(cfg.clone()), aggregate(&records));
    summary.fits = fits_for(&records, &cfg.algos);
    write_outputs(&cfg.out_dir, &records, &summary)?;
    report(&cfg.out_dir, &summary);
    Ok(())
}

fn bench_tolerances(args: &SweepArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let (table, records) = tolerance_sweep(&cfg)?;
    let mut summary = Summary::new(Some(cfg.clone()), aggregate(&records));
    summary.tolerances = Some(table.clone());
    write_outputs(&cfg.out_dir, &records, &summary)?;
    report(&cfg.out_dir, &summary);
    print_json(&json!({
        "n": table.n,
        "cg_nondecreasing": table.cg_nondecreasing,
        "coop_nondecreasing": table.coop_nondecreasing,
        "rows": table.rows.iter().map(|c| json!({
            "tol": c.tol,
            "cg_iters_mean": c.cg_iters_mean,
            "coop_iters_mean": c.coop_iters_mean,
            "iteration_ratio": c.iteration_ratio,
            "speedup": c.speedup,
        })).collect::<Vec<_>>(),
    }))
}

fn bench_fit(metric: MetricArg, input: &Path, algo: AlgoArg) -> Result<()> {
    let records = read_records(open(input)?)?;
    let fit = fit_metric(&records, algo.into(), metric.into())?;
    print_json(&serde_json::to_value(fit)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen { problem, out } => gen(&problem, &out),
        Command::Solve(args) => solve(&args),
        Command::Model { n, p } => model(n, p),
        Command::Bench { command } => match command {
            BenchCommand::Sweep(args) => bench_sweep(&args),
            BenchCommand::Tolerances(args) => bench_tolerances(&args),
            BenchCommand::Fit { metric, input, algo } => bench_fit(metric, &input, algo),
        },
    }
}
