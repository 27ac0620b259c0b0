//! Batch runs: many instances, many policies, one long-format results table.
//!
//! Each instance is simulated under every policy; a policy's cost on an
//! instance is the empirical variance of P over the window plus the
//! time-averaged penalties, and its ratio is that cost over the baseline's
//! cost on the same instance. Parameters left unset for Equal Service, EDF,
//! LLF, Fair Sharing and ES-PC are chosen by grid search over the batch.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use toml::Table;

use crate::engine::{simulate_detailed, summarize, Metrics, SimOptions};
use crate::error::{Error, Result};
use crate::model::{sample_arrivals, ArrivalModel, JobSet};
use crate::policies::{Mode, PolicyConfig};
use crate::qp::{simulate_mpc, solve_offline, Method, QpOptions};
use crate::rng::{derive_seed, Stream};

/// What the runner should evaluate under a given label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicySpec {
    Rule(PolicyConfig),
    /// A rule whose parameter is picked from the tuning grid.
    Tuned(Tunable, Mode),
    Offline,
    Mpc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tunable {
    EqualService,
    Edf,
    Llf,
    FairSharing,
    EsPc,
}

impl Tunable {
    fn with(self, v: f64, mode: Mode) -> PolicyConfig {
        match self {
            Tunable::EqualService => PolicyConfig::EqualService { mode, c: v },
            Tunable::Edf => PolicyConfig::Edf { p: v, mode },
            Tunable::Llf => PolicyConfig::Llf { p: v, mode },
            Tunable::FairSharing => PolicyConfig::FairSharing { p: v, mode },
            Tunable::EsPc => PolicyConfig::EsPc { mu: v, p_bar: None },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEntry {
    pub label: String,
    pub spec: PolicySpec,
}

/// Parses `name[:key=value,...]`, e.g. `exact`, `equal:c=0.4`, `edf:p=3,mode=soft_demand`,
/// `espc:mu=1.4,pbar=3`, `offline`, `mpc`.
impl FromStr for PolicyEntry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = Vec::new();
        for part in args.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("policy {s:?}: expected key=value, got {part:?}")))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let num = |k: &str| -> Result<Option<f64>> {
            get(k)
                .map(|v| {
                    if v == "inf" {
                        Ok(f64::INFINITY)
                    } else {
                        v.parse::<f64>()
                            .map_err(|_| Error::InvalidArgument(format!("policy {s:?}: {k} is not a number")))
                    }
                })
                .transpose()
        };
        let known: &[&str] = match name {
            "equal" | "equal_service" => &["c", "mode"],
            "edf" | "llf" | "fair" | "fs" => &["p", "mode"],
            "espc" | "es_pc" => &["mu", "pbar"],
            "ges_unknown" => &["c", "mode"],
            _ => &[],
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("policy {s:?}: unknown parameter {k:?}")));
        }
        let mode = get("mode").map(Mode::from_str).transpose()?;
        let tuned_or = |t: Tunable, key: &str, default_mode: Mode, make: &dyn Fn(f64, Mode) -> PolicyConfig| -> Result<PolicySpec> {
            let m = mode.unwrap_or(default_mode);
            Ok(match num(key)? {
                Some(v) => PolicySpec::Rule(make(v, m)),
                None => PolicySpec::Tuned(t, m),
            })
        };
        let spec = match name {
            "exact" => PolicySpec::Rule(PolicyConfig::Exact),
            "immediate" => PolicySpec::Rule(PolicyConfig::Immediate),
            "delayed" => PolicySpec::Rule(PolicyConfig::Delayed),
            "ges" => PolicySpec::Rule(PolicyConfig::Ges),
            "offline" => PolicySpec::Offline,
            "mpc" => PolicySpec::Mpc,
            "equal" | "equal_service" => tuned_or(Tunable::EqualService, "c", Mode::Strict, &|c, mode| {
                PolicyConfig::EqualService { mode, c }
            })?,
            "edf" => tuned_or(Tunable::Edf, "p", Mode::SoftDemand, &|p, mode| PolicyConfig::Edf { p, mode })?,
            "llf" => tuned_or(Tunable::Llf, "p", Mode::SoftDemand, &|p, mode| PolicyConfig::Llf { p, mode })?,
            "fair" | "fs" => tuned_or(Tunable::FairSharing, "p", Mode::SoftDemand, &|p, mode| {
                PolicyConfig::FairSharing { p, mode }
            })?,
            "espc" | "es_pc" => match num("mu")? {
                Some(mu) => PolicySpec::Rule(PolicyConfig::EsPc { mu, p_bar: num("pbar")? }),
                None => PolicySpec::Tuned(Tunable::EsPc, Mode::Strict),
            },
            "ges_unknown" => PolicySpec::Rule(PolicyConfig::GesUnknown {
                c: num("c")?.ok_or_else(|| Error::InvalidArgument("ges_unknown needs c=".into()))?,
                mode: mode.unwrap_or(Mode::SoftDemand),
            }),
            _ => return Err(Error::InvalidArgument(format!("unknown policy {name:?}"))),
        };
        if let PolicySpec::Rule(p) = spec {
            p.validate()?;
        }
        Ok(Self {
            label: s.to_string(),
            spec,
        })
    }
}

impl fmt::Display for PolicyEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Candidate values for grid-searched parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TuningGrid {
    /// Equal Service rate c.
    pub equal_c: Vec<f64>,
    /// Capacity for EDF, LLF and Fair Sharing.
    pub capacity: Vec<f64>,
    /// ES-PC boost μ.
    pub mu: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6).collect()
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            equal_c: linspace(0.05, 1.0, 0.05),
            capacity: linspace(0.5, 10.0, 0.5),
            mu: linspace(1.0, 2.0, 0.1),
        }
    }
}

impl TuningGrid {
    fn values(&self, t: Tunable) -> &[f64] {
        match t {
            Tunable::EqualService => &self.equal_c,
            Tunable::Edf | Tunable::Llf | Tunable::FairSharing => &self.capacity,
            Tunable::EsPc => &self.mu,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Source {
    Model(ArrivalModel),
    Trace(JobSet),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub source: Source,
    pub policies: Vec<PolicyEntry>,
    pub dt: f64,
    /// Start of the measurement window; 0 uses the whole instance.
    pub burn_in: f64,
    pub seeds: usize,
    pub base_seed: u64,
    /// Unit costs applied to every job; each (C, ε) pair is a separate sweep point.
    pub cost_demand: Vec<f64>,
    pub cost_deadline: Vec<f64>,
    pub ratio_against: String,
    pub qp: QpOptions,
    pub grid: TuningGrid,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(source: Source, policies: Vec<PolicyEntry>, dt: f64) -> Self {
        Self {
            source,
            policies,
            dt,
            burn_in: 0.0,
            seeds: 1,
            base_seed: 0,
            cost_demand: Vec::new(),
            cost_deadline: Vec::new(),
            ratio_against: "offline".into(),
            qp: QpOptions::default().with_method(Method::BlockWaterFilling),
            grid: TuningGrid::default(),
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::InvalidArgument("at least one policy is required".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidArgument("seed count must be ≥ 1".into()));
        }
        if !(self.burn_in >= 0.0) {
            return Err(Error::InvalidArgument("burn-in must be ≥ 0".into()));
        }
        if let Source::Model(m) = &self.source {
            m.validate()?;
        }
        Ok(())
    }

    /// Reads the `[experiment]` and optional `[tuning]` tables of a TOML file.
    /// Relative `model`/`trace` paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let doc: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidModel(format!("config: {}", e.message())))?;
        let exp = doc
            .get("experiment")
            .and_then(|v| v.as_table())
            .ok_or_else(|| Error::InvalidModel("config: missing [experiment] table".into()))?;
        let bad = |k: &str| Error::InvalidModel(format!("config: bad value for {k}"));
        let num = |k: &str| -> Result<Option<f64>> {
            exp.get(k)
                .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)).ok_or_else(|| bad(k)))
                .transpose()
        };
        let list = |t: &Table, k: &str| -> Result<Option<Vec<f64>>> {
            t.get(k)
                .map(|v| {
                    v.as_array()
                        .ok_or_else(|| bad(k))?
                        .iter()
                        .map(|x| match x {
                            toml::Value::String(s) if s == "inf" => Ok(f64::INFINITY),
                            _ => x.as_float().or_else(|| x.as_integer().map(|i| i as f64)).ok_or_else(|| bad(k)),
                        })
                        .collect()
                })
                .transpose()
        };
        let path = |k: &str| exp.get(k).and_then(|v| v.as_str()).map(|s| base.join(s));
        let source = match (path("model"), path("trace")) {
            (Some(m), None) => Source::Model(crate::model::parse_model(&std::fs::read_to_string(&m)?)?),
            (None, Some(t)) => Source::Trace(crate::model::load_trace(&t)?),
            _ => return Err(Error::InvalidModel("config: give exactly one of model or trace".into())),
        };
        let policies = exp
            .get("policies")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("policies"))?
            .iter()
            .map(|v| v.as_str().ok_or_else(|| bad("policies"))?.parse())
            .collect::<Result<Vec<PolicyEntry>>>()?;
        let mut cfg = Self::new(source, policies, num("dt")?.unwrap_or(1.0));
        cfg.burn_in = num("burn_in")?.unwrap_or(0.0);
        if let Some(v) = exp.get("seeds") {
            cfg.seeds = v.as_integer().filter(|&i| i >= 0).ok_or_else(|| bad("seeds"))? as usize;
        }
        if let Some(v) = exp.get("seed") {
            cfg.base_seed = v.as_integer().filter(|&i| i >= 0).ok_or_else(|| bad("seed"))? as u64;
        }
        cfg.cost_demand = list(exp, "C")?.unwrap_or_default();
        cfg.cost_deadline = list(exp, "eps")?.unwrap_or_default();
        if let Some(r) = exp.get("ratio_against") {
            cfg.ratio_against = r.as_str().ok_or_else(|| bad("ratio_against"))?.to_string();
        }
        if let Some(t) = num("tol")? {
            cfg.qp.tol = t;
        }
        if let Some(i) = exp.get("max_iters") {
            cfg.qp.max_iters = i.as_integer().filter(|&i| i > 0).ok_or_else(|| bad("max_iters"))? as usize;
        }
        cfg.out = path("out");
        if let Some(t) = doc.get("tuning").and_then(|v| v.as_table()) {
            if let Some(v) = list(t, "equal_c")? {
                cfg.grid.equal_c = v;
            }
            if let Some(v) = list(t, "capacity")? {
                cfg.grid.capacity = v;
            }
            if let Some(v) = list(t, "mu")? {
                cfg.grid.mu = v;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq)]
#[allow(non_snake_case)]
pub struct ResultRow {
    pub instance: usize,
    pub seed: u64,
    pub policy: String,
    pub var_P: f64,
    pub mean_P: f64,
    pub var_X: f64,
    /// Unmet-demand penalty per unit time.
    pub U: f64,
    /// Extension penalty per unit time.
    pub W: f64,
    pub cost: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub instances: usize,
    pub mean_cost: f64,
    pub mean_ratio: f64,
    /// 95% bootstrap interval of the mean ratio.
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Value picked by grid search, if any.
    pub tuned: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct BatchOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// QP solves (offline or MPC) that stopped short of tolerance.
    pub unconverged: usize,
    pub warnings: Vec<String>,
}

impl BatchOutcome {
    /// Ratios of one policy in instance order.
    pub fn ratios(&self, policy: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.policy == policy).map(|r| r.ratio).collect()
    }

    pub fn summary_for(&self, policy: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.policy == policy)
    }
}

struct Instance {
    index: usize,
    seed: u64,
    jobs: JobSet,
    /// Λ·E[σ] when the generating model is known.
    mean_capacity: Option<f64>,
}

#[derive(Clone, Copy)]
struct Eval {
    metrics: Metrics,
    unconverged: usize,
}

fn evaluate(spec: &PolicySpec, inst: &Instance, cfg: &ExperimentConfig) -> Result<Eval> {
    let trace = match spec {
        PolicySpec::Offline => {
            let (m, rep) = solve_offline(&inst.jobs, cfg.dt, &cfg.qp)?;
            return Ok(Eval {
                metrics: summarize(&m.to_trace(), cfg.burn_in)?,
                unconverged: usize::from(!rep.converged),
            });
        }
        PolicySpec::Mpc => {
            let (tr, rep) = simulate_mpc(&inst.jobs, cfg.dt, &cfg.qp)?;
            return Ok(Eval {
                metrics: summarize(&tr, cfg.burn_in)?,
                unconverged: rep.unconverged,
            });
        }
        PolicySpec::Rule(p) => {
            let p = match *p {
                PolicyConfig::EsPc { mu, p_bar: None } => PolicyConfig::EsPc {
                    mu,
                    p_bar: inst.mean_capacity,
                },
                other => other,
            };
            simulate_detailed(&inst.jobs, &p, &SimOptions::new(cfg.dt))?.trace
        }
        PolicySpec::Tuned(..) => unreachable!("tuned policies are resolved before evaluation"),
    };
    Ok(Eval {
        metrics: summarize(&trace, cfg.burn_in)?,
        unconverged: 0,
    })
}

fn instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    let base: Vec<Instance> = match &cfg.source {
        Source::Trace(jobs) => vec![Instance {
            index: 0,
            seed: cfg.base_seed,
            jobs: jobs.clone(),
            mean_capacity: None,
        }],
        Source::Model(m) => {
            let mean = m.arrival_rate() * m.marks().demand.mean();
            (0..cfg.seeds)
                .map(|i| {
                    let seed = derive_seed(cfg.base_seed, i as u64);
                    Ok(Instance {
                        index: i,
                        seed,
                        jobs: sample_arrivals(m, seed)?,
                        mean_capacity: Some(mean),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(base)
}

fn cost_points(cfg: &ExperimentConfig) -> Vec<Option<(f64, f64)>> {
    if cfg.cost_demand.is_empty() && cfg.cost_deadline.is_empty() {
        return vec![None];
    }
    let cs = if cfg.cost_demand.is_empty() { vec![f64::INFINITY] } else { cfg.cost_demand.clone() };
    let es = if cfg.cost_deadline.is_empty() { vec![f64::INFINITY] } else { cfg.cost_deadline.clone() };
    cs.iter().flat_map(|&c| es.iter().map(move |&e| Some((c, e)))).collect()
}

fn fmt_cost(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Runs every policy on every instance (and every cost point).
pub fn run_batch(cfg: &ExperimentConfig) -> Result<BatchOutcome> {
    cfg.validate()?;
    let base = instances(cfg)?;
    let mut out = BatchOutcome::default();

    let mut entries = cfg.policies.clone();
    if !entries.iter().any(|e| e.label == cfg.ratio_against) {
        let baseline: PolicyEntry = cfg.ratio_against.parse()?;
        entries.push(baseline);
    }

    for point in cost_points(cfg) {
        let insts: Vec<Instance> = base
            .iter()
            .map(|i| Instance {
                index: i.index,
                seed: i.seed,
                jobs: point.map_or_else(|| i.jobs.clone(), |(c, e)| i.jobs.clone().with_costs(Some(c), Some(e))),
                mean_capacity: i.mean_capacity,
            })
            .collect();
        let suffix = point.map_or(String::new(), |(c, e)| format!("@C={},eps={}", fmt_cost(c), fmt_cost(e)));

        let mut per_policy: Vec<(String, Vec<Eval>, Option<f64>)> = Vec::new();
        for e in &entries {
            let (spec, tuned) = match e.spec {
                PolicySpec::Tuned(t, mode) => {
                    let (v, note) = tune(t, mode, &insts, cfg)?;
                    out.warnings.extend(note);
                    (PolicySpec::Rule(t.with(v, mode)), Some(v))
                }
                s => (s, None),
            };
            let evals = insts
                .par_iter()
                .map(|inst| evaluate(&spec, inst, cfg))
                .collect::<Result<Vec<_>>>()?;
            per_policy.push((format!("{}{suffix}", e.label), evals, tuned));
        }

        let base_label = format!("{}{suffix}", cfg.ratio_against);
        let baseline: Vec<f64> = per_policy
            .iter()
            .find(|(l, ..)| *l == base_label)
            .map(|(_, ev, _)| ev.iter().map(|e| e.metrics.cost()).collect())
            .expect("baseline is always evaluated");

        for (label, evals, tuned) in per_policy {
            let mut ratios = Vec::with_capacity(evals.len());
            for (inst, (ev, b)) in insts.iter().zip(evals.iter().zip(&baseline)) {
                let m = ev.metrics;
                let cost = m.cost();
                let ratio = if *b > 0.0 { cost / b } else { f64::NAN };
                ratios.push(ratio);
                out.unconverged += ev.unconverged;
                out.rows.push(ResultRow {
                    instance: inst.index,
                    seed: inst.seed,
                    policy: label.clone(),
                    var_P: m.var_P,
                    mean_P: m.mean_P,
                    var_X: m.var_X,
                    U: m.mean_U_rate,
                    W: m.mean_W_rate,
                    cost,
                    ratio,
                });
            }
            let finite: Vec<f64> = ratios.iter().copied().filter(|r| r.is_finite()).collect();
            if finite.len() < ratios.len() {
                out.warnings.push(format!(
                    "{label}: {} instance(s) with zero baseline cost have no ratio",
                    ratios.len() - finite.len()
                ));
            }
            let (lo, hi) = bootstrap_mean_ci(&finite, 2000, derive_seed(cfg.base_seed, 0xB007));
            out.summary.push(SummaryRow {
                policy: label,
                instances: evals.len(),
                mean_cost: evals.iter().map(|e| e.metrics.cost()).sum::<f64>() / evals.len() as f64,
                mean_ratio: mean(&finite),
                ratio_lo: lo,
                ratio_hi: hi,
                tuned,
            });
        }
    }
    if out.unconverged > 0 {
        out.warnings
            .push(format!("{} QP solve(s) stopped before reaching tolerance {:e}", out.unconverged, cfg.qp.tol));
    }
    Ok(out)
}

/// Grid value with the lowest mean cost across the batch. Candidates that
/// break a strict deadline on any instance are skipped.
fn tune(t: Tunable, mode: Mode, insts: &[Instance], cfg: &ExperimentConfig) -> Result<(f64, Option<String>)> {
    let mut best: Option<(f64, f64)> = None;
    let mut skipped = 0;
    for &v in cfg.grid.values(t) {
        let spec = PolicySpec::Rule(t.with(v, mode));
        let costs: Result<Vec<f64>> = insts.par_iter().map(|i| evaluate(&spec, i, cfg).map(|e| e.metrics.cost())).collect();
        match costs {
            Ok(c) => {
                let m = mean(&c);
                if best.is_none_or(|(_, b)| m < b) {
                    best = Some((v, m));
                }
            }
            Err(Error::StrictViolation { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let (v, _) = best.ok_or_else(|| Error::InvalidArgument(format!("{t:?}: no grid value meets every strict deadline")))?;
    let note = (skipped > 0).then(|| format!("{t:?}: {skipped} grid value(s) skipped for missing strict deadlines"));
    Ok((v, note))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn resample_index(rng: &mut Stream, n: usize) -> usize {
    ((rng.uniform() * n as f64) as usize).min(n - 1)
}

/// Percentile 95% interval for the mean.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = Stream::new(seed, crate::rng::streams::MONTE_CARLO);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[resample_index(&mut rng, n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (q(0.025), q(0.975))
}

/// Share of paired bootstrap resamples in which mean(a) ≤ mean(b).
pub fn bootstrap_le(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let n = a.len();
    if n == 0 || resamples == 0 {
        return f64::NAN;
    }
    let mut rng = Stream::new(seed, crate::rng::streams::MONTE_CARLO);
    let mut hits = 0;
    for _ in 0..resamples {
        let mut d = 0.0;
        for _ in 0..n {
            let i = resample_index(&mut rng, n);
            d += a[i] - b[i];
        }
        if d <= 0.0 {
            hits += 1;
        }
    }
    hits as f64 / resamples as f64
}

pub const RESULTS_HEADER: [&str; 10] = ["instance", "seed", "policy", "var_P", "mean_P", "var_X", "U", "W", "cost", "ratio"];

pub fn write_results(rows: &[ResultRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.instance.to_string(),
            r.seed.to_string(),
            r.policy.clone(),
            r.var_P.to_string(),
            r.mean_P.to_string(),
            r.var_X.to_string(),
            r.U.to_string(),
            r.W.to_string(),
            r.cost.to_string(),
            r.ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(rows: &[SummaryRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["policy", "instances", "mean_cost", "mean_ratio", "ratio_lo", "ratio_hi", "tuned"])?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.instances.to_string(),
            r.mean_cost.to_string(),
            r.mean_ratio.to_string(),
            r.ratio_lo.to_string(),
            r.ratio_hi.to_string(),
            r.tuned.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
