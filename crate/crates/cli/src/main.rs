//! `varsched`: generate job traces, run and compare scheduling policies,
//! solve offline and fluid problems, and evaluate the closed-form analysis.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 a solver stopped
//! before reaching its tolerance (outputs are still written).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use varsched::analytics::{self, MarkMoments, DEFAULT_MC_SAMPLES};
use varsched::engine::{default_burn_in, simulate_detailed, summarize, SimOptions};
use varsched::experiment::{run_batch, write_results, write_summary, ExperimentConfig, PolicyEntry, PolicySpec, Source};
use varsched::fluid::{check_pareto_conditions, run_maxstab, solve_fluid_qp, FluidInstance};
use varsched::model::{load_trace, parse_model, sample_arrivals_with_stats, write_trace, ArrivalModel, JobSet};
use varsched::qp::{check_valley_filling, simulate_mpc, solve_offline, Method, QpOptions};
use varsched::Error;

#[derive(Parser)]
#[command(name = "varsched", version, about = "Variance-aware deadline scheduling toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a job trace from an arrival model file.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one policy and write its capacity trace.
    Simulate {
        #[command(flatten)]
        src: SourceArgs,
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        /// Defaults to ten mean sojourn times, or 0 when that would cover the whole run
        #[arg(long)]
        burn_in: Option<f64>,
        #[command(flatten)]
        costs: CostArgs,
        #[arg(long)]
        mu: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Capacity trace CSV (t,P,X,U_cum,W_cum).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several policies over a batch of instances and tabulate costs and ratios.
    Compare(CompareArgs),
    /// Solve the offline problem (or run MPC) on a trace.
    Offline {
        #[command(flatten)]
        src: SourceArgs,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Run receding-horizon MPC instead and write its capacity trace.
        #[arg(long)]
        mpc: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Max-stability profiles for a fluid instance CSV (arrival,demand,sojourn,mass).
    Maxstab {
        #[arg(long)]
        fluid: PathBuf,
        /// Solve the weighted QP with these weights instead of the interval construction.
        #[arg(long, num_args = 2, value_names = ["ALPHA", "BETA"])]
        qp: Option<Vec<f64>>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form stationary quantities for an arrival model.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        costs: CostArgs,
        /// Bound centralized policies at this Var(X) (default: Exact Scheduling's).
        #[arg(long)]
        var_x: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Job trace CSV.
    #[arg(long, conflicts_with = "model")]
    trace: Option<PathBuf>,
    /// Arrival model file; a trace is sampled with --seed.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CostArgs {
    /// Unit cost of unmet demand applied to every job.
    #[arg(long = "C")]
    c: Option<f64>,
    /// Unit cost of deadline extension applied to every job.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
    /// pg (projected gradient) or wf (block water filling).
    #[arg(long, default_value = "pg")]
    method: String,
}

#[derive(Args)]
struct CompareArgs {
    /// TOML experiment file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "model")]
    trace: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Comma-separated policies, e.g. `offline,exact,equal:c=0.5,espc:mu=1.3`.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    burn_in: Option<f64>,
    /// Base seed; instance i uses a seed derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of instances sampled from the model.
    #[arg(long)]
    seeds: Option<usize>,
    /// Sweep of unmet-demand costs.
    #[arg(long = "C", value_delimiter = ',')]
    c: Vec<f64>,
    /// Sweep of extension costs.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    ratio_against: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output directory for results.csv and summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Core(Error),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Generate { model, seed, out } => cmd_generate(&model, seed, &out),
        Cmd::Simulate {
            src,
            policy,
            dt,
            burn_in,
            costs,
            mu,
            solver,
            out,
        } => cmd_simulate(&src, &policy, dt, burn_in, &costs, mu, &solver, out.as_deref()),
        Cmd::Compare(args) => cmd_compare(&args),
        Cmd::Offline { src, dt, solver, mpc, out } => cmd_offline(&src, dt, &solver, mpc, out.as_deref()),
        Cmd::Maxstab { fluid, qp, solver, out } => cmd_maxstab(&fluid, qp.as_deref(), &solver, out.as_deref()),
        Cmd::Analyze {
            model,
            costs,
            var_x,
            samples,
            seed,
        } => cmd_analyze(&model, &costs, var_x, samples, seed),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

/// Writes through a temp file in the target directory, then renames it into place.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> varsched::Result<()>) -> varsched::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn read_model(path: &Path) -> varsched::Result<ArrivalModel> {
    parse_model(&fs::read_to_string(path)?).map_err(|e| match e {
        Error::InvalidModel(m) => Error::InvalidModel(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load_jobs(src: &SourceArgs) -> varsched::Result<(JobSet, Option<ArrivalModel>)> {
    match (&src.trace, &src.model) {
        (Some(t), None) => Ok((load_trace(t)?, None)),
        (None, Some(m)) => {
            let model = read_model(m)?;
            let (jobs, _) = sample_arrivals_with_stats(&model, src.seed)?;
            Ok((jobs, Some(model)))
        }
        _ => Err(Error::InvalidArgument("give exactly one of --trace or --model".into())),
    }
}

fn qp_options(s: &SolverArgs) -> varsched::Result<QpOptions> {
    let method = match s.method.as_str() {
        "pg" => Method::ProjectedGradient,
        "wf" => Method::BlockWaterFilling,
        m => return Err(Error::InvalidArgument(format!("unknown method {m:?}; use pg or wf"))),
    };
    if s.tol.is_nan() || s.tol <= 0.0 || s.max_iters == 0 {
        return Err(Error::InvalidArgument("--tol must be > 0 and --max-iters ≥ 1".into()));
    }
    Ok(QpOptions::new(s.tol, s.max_iters).with_method(method))
}

/// `espc` without a μ picks up `--mu` when one is given.
fn policy_text(s: &str, mu: Option<f64>) -> String {
    match mu {
        Some(mu) if s == "espc" || s == "es_pc" => format!("espc:mu={mu}"),
        _ => s.to_string(),
    }
}

fn cmd_generate(model: &Path, seed: u64, out: &Path) -> CliResult {
    let m = read_model(model)?;
    let (jobs, stats) = sample_arrivals_with_stats(&m, seed)?;
    write_atomic(out, |w| write_trace(&jobs, w))?;
    eprintln!(
        "{} jobs written; {} mark draws redrawn, {} arrivals dropped past the horizon",
        jobs.len(),
        stats.redrawn,
        stats.dropped
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    src: &SourceArgs,
    policy: &str,
    dt: f64,
    burn_in: Option<f64>,
    costs: &CostArgs,
    mu: Option<f64>,
    solver: &SolverArgs,
    out: Option<&Path>,
) -> CliResult {
    let (jobs, model) = load_jobs(src)?;
    let jobs = jobs.with_costs(costs.c, costs.eps);
    let entry: PolicyEntry = policy_text(policy, mu).parse()?;
    let mut warning = None;
    let trace = match entry.spec {
        PolicySpec::Rule(p) => {
            let p = match p {
                varsched::PolicyConfig::EsPc { mu, p_bar: None } => varsched::PolicyConfig::EsPc {
                    mu,
                    p_bar: model.map(|m| m.arrival_rate() * m.marks().demand.mean()),
                },
                other => other,
            };
            simulate_detailed(&jobs, &p, &SimOptions::new(dt))?.trace
        }
        PolicySpec::Offline => {
            let (rates, rep) = solve_offline(&jobs, dt, &qp_options(solver)?)?;
            warning = rep.warning();
            rates.to_trace()
        }
        PolicySpec::Mpc => {
            let (tr, rep) = simulate_mpc(&jobs, dt, &qp_options(solver)?)?;
            if rep.unconverged > 0 {
                warning = Some(format!("{} of {} MPC solves stopped short of tolerance", rep.unconverged, rep.solves));
            }
            tr
        }
        PolicySpec::Tuned(..) => {
            return Err(Error::InvalidArgument(format!("policy {policy:?} needs its parameter (e.g. equal:c=0.5)")).into())
        }
    };
    if let Some(path) = out {
        write_atomic(path, |w| trace.write_csv(w))?;
    }
    let burn_in = burn_in.unwrap_or_else(|| {
        let b = default_burn_in(&jobs);
        if b < trace.duration() {
            b
        } else {
            0.0
        }
    });
    let m = summarize(&trace, burn_in)?;
    print!("policy={}\nburn_in={burn_in}\n{}", entry.label, m.to_key_values());
    match warning {
        Some(w) => Err(Failure::NotConverged(w)),
        None => Ok(()),
    }
}

fn cmd_compare(a: &CompareArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => {
            let base = path.parent().unwrap_or(Path::new("."));
            ExperimentConfig::from_toml(&fs::read_to_string(path)?, base)?
        }
        None => {
            let src = SourceArgs {
                trace: a.trace.clone(),
                model: a.model.clone(),
                seed: 0,
            };
            let source = match (&src.trace, &src.model) {
                (Some(t), None) => Source::Trace(load_trace(t)?),
                (None, Some(m)) => Source::Model(read_model(m)?),
                _ => return Err(Error::InvalidArgument("give --config, --trace or --model".into()).into()),
            };
            ExperimentConfig::new(source, Vec::new(), 1.0)
        }
    };
    if a.config.is_some() && (a.trace.is_some() || a.model.is_some()) {
        cfg.source = match (&a.trace, &a.model) {
            (Some(t), _) => Source::Trace(load_trace(t)?),
            (_, Some(m)) => Source::Model(read_model(m)?),
            _ => unreachable!(),
        };
    }
    if !a.policies.is_empty() {
        cfg.policies = a
            .policies
            .iter()
            .map(|p| policy_text(p, a.mu).parse())
            .collect::<varsched::Result<_>>()?;
    }
    if let Some(v) = a.dt {
        cfg.dt = v;
    }
    if let Some(v) = a.burn_in {
        cfg.burn_in = v;
    }
    if let Some(v) = a.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = a.seeds {
        cfg.seeds = v;
    }
    if !a.c.is_empty() {
        cfg.cost_demand = a.c.clone();
    }
    if !a.eps.is_empty() {
        cfg.cost_deadline = a.eps.clone();
    }
    if let Some(v) = &a.ratio_against {
        cfg.ratio_against = policy_text(v, a.mu);
    }
    if let Some(v) = a.tol {
        cfg.qp.tol = v;
    }
    if let Some(v) = a.max_iters {
        cfg.qp.max_iters = v;
    }
    if let Some(v) = &a.out {
        cfg.out = Some(v.clone());
    }
    let out_dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::InvalidArgument("--out (or out in the config) is required".into()))?;

    let outcome = run_batch(&cfg)?;
    fs::create_dir_all(&out_dir)?;
    write_atomic(&out_dir.join("results.csv"), |w| write_results(&outcome.rows, w))?;
    write_atomic(&out_dir.join("summary.csv"), |w| write_summary(&outcome.summary, w))?;

    let mut stdout = io::stdout().lock();
    for s in &outcome.summary {
        let tuned = s.tuned.map(|v| format!("  (tuned {v})")).unwrap_or_default();
        writeln!(
            stdout,
            "{:<28} ratio {:.4} [{:.4}, {:.4}]  cost {:.5}{tuned}",
            s.policy, s.mean_ratio, s.ratio_lo, s.ratio_hi, s.mean_cost
        )?;
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if outcome.unconverged > 0 {
        return Err(Failure::NotConverged(format!("{} QP solve(s) did not converge", outcome.unconverged)));
    }
    Ok(())
}

fn cmd_offline(src: &SourceArgs, dt: f64, solver: &SolverArgs, mpc: bool, out: Option<&Path>) -> CliResult {
    let (jobs, _) = load_jobs(src)?;
    let opts = qp_options(solver)?;
    if mpc {
        let (trace, rep) = simulate_mpc(&jobs, dt, &opts)?;
        if let Some(path) = out {
            write_atomic(path, |w| trace.write_csv(w))?;
        }
        let objective: f64 = trace.p.iter().map(|p| p * p * dt).sum();
        println!("objective={objective}\nsolves={}\nworst_kkt={}\nunconverged={}", rep.solves, rep.worst_kkt, rep.unconverged);
        if rep.unconverged > 0 {
            return Err(Failure::NotConverged(format!("{} of {} MPC solves stopped short of tolerance", rep.unconverged, rep.solves)));
        }
        return Ok(());
    }
    let (rates, rep) = solve_offline(&jobs, dt, &opts)?;
    if let Some(path) = out {
        write_atomic(path, |w| rates.write_csv(w))?;
    }
    let valley = check_valley_filling(&rates, 1e3 * opts.tol.max(1e-9));
    println!(
        "objective={}\niterations={}\nkkt={}\nconverged={}\nvalley_filling={}",
        rates.objective(),
        rep.iterations,
        rep.kkt,
        rep.converged,
        valley.passed()
    );
    match rep.warning() {
        Some(w) => Err(Failure::NotConverged(w)),
        None => Ok(()),
    }
}

fn cmd_maxstab(fluid: &Path, qp: Option<&[f64]>, solver: &SolverArgs, out: Option<&Path>) -> CliResult {
    let inst = FluidInstance::read_csv(File::open(fluid)?, fluid)?;
    let (alpha, beta) = match qp {
        Some(w) => (w[0], w[1]),
        None => (1.0, 0.0),
    };
    let mut warning = None;
    let prof = match qp {
        Some(_) => {
            let (p, rep) = solve_fluid_qp(&inst, alpha, beta, &qp_options(solver)?)?;
            warning = rep.warning();
            p
        }
        None => run_maxstab(&inst)?,
    };
    if let Some(path) = out {
        write_atomic(path, |w| prof.write_csv(w))?;
    }
    let peak = prof.expected_capacity().into_iter().fold(0.0, f64::max);
    let pareto = check_pareto_conditions(&inst, &prof, alpha, beta, 1e-6);
    println!(
        "objective={}\ntime_average={}\npeak={peak}\npareto={}",
        prof.objective(alpha, beta),
        prof.time_average(alpha, beta),
        pareto.passed()
    );
    match warning {
        Some(w) => Err(Failure::NotConverged(w)),
        None => Ok(()),
    }
}

fn cmd_analyze(model: &Path, costs: &CostArgs, var_x: Option<f64>, samples: usize, seed: u64) -> CliResult {
    let m = read_model(model)?;
    let mm = MarkMoments::from_model(&m, samples, seed)?;
    let c = costs.c.unwrap_or(f64::INFINITY);
    let eps = costs.eps.unwrap_or(f64::INFINITY);
    if let Some(w) = analytics::threshold_warning(c, eps) {
        eprintln!("warning: {w}");
    }
    let d = var_x.unwrap_or_else(|| analytics::var_x_exact(&mm));
    let exact = analytics::ratio_bound_exact(&mm);
    let ges = analytics::ratio_bound_ges(&mm, c, eps);
    let terms = analytics::cost_ges_terms(&mm, c, eps);
    if ges.factor.is_nan() || ges.factor <= 0.0 {
        // the unmet-demand branch of α can go negative when Cτ/4 > √ε
        eprintln!("warning: ratio_bound_ges={} is not a usable bound for these costs", ges.factor);
    }
    let mut out = io::stdout().lock();
    writeln!(out, "lambda={}", mm.lambda)?;
    writeln!(out, "samples={}", mm.pairs().len())?;
    writeln!(out, "mean_P={}", analytics::stationary_mean(&mm, mm.e_sigma))?;
    writeln!(out, "var_exact={}", analytics::var_exact(&mm))?;
    writeln!(out, "var_x_exact={}", analytics::var_x_exact(&mm))?;
    writeln!(out, "lower_bound_centralized={}", analytics::lower_bound_centralized(&mm, d)?)?;
    writeln!(out, "ratio_bound_exact={}", exact.general)?;
    writeln!(out, "ratio_bound_exact_same_var_x={}", exact.same_var_x)?;
    writeln!(out, "cost_soft_demand={}", analytics::cost_soft_demand(&mm, c))?;
    writeln!(out, "cost_soft_deadline={}", analytics::cost_soft_deadline(&mm, eps))?;
    writeln!(out, "cost_ges={}", terms.variance + terms.unmet + terms.extension)?;
    writeln!(out, "cost_ges_variance={}", terms.variance)?;
    writeln!(out, "cost_ges_unmet={}", terms.unmet)?;
    writeln!(out, "cost_ges_extension={}", terms.extension)?;
    writeln!(out, "ratio_bound_ges={}", ges.factor)?;
    Ok(())
}
