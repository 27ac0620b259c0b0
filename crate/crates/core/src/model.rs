//! Jobs, arrival processes, and trace files.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{streams, Stream};

/// Sentinel for an infinite unit cost, which makes the matching constraint strict.
pub const STRICT: f64 = f64::INFINITY;

/// One arriving job.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JobRequest {
    pub arrival: f64,
    pub demand: f64,
    pub sojourn: f64,
    /// Penalty per unit of unmet demand.
    pub cost_demand: f64,
    /// Penalty per time unit the deadline is extended.
    pub cost_deadline: f64,
    pub known: bool,
}

impl JobRequest {
    /// A job with strict demand and deadline constraints.
    pub fn new(arrival: f64, demand: f64, sojourn: f64) -> Self {
        Self {
            arrival,
            demand,
            sojourn,
            cost_demand: STRICT,
            cost_deadline: STRICT,
            known: true,
        }
    }

    pub fn with_costs(mut self, cost_demand: f64, cost_deadline: f64) -> Self {
        self.cost_demand = cost_demand;
        self.cost_deadline = cost_deadline;
        self
    }

    pub fn with_known(mut self, known: bool) -> Self {
        self.known = known;
        self
    }

    pub fn deadline(&self) -> f64 {
        self.arrival + self.sojourn
    }

    pub fn laxity(&self) -> f64 {
        self.sojourn - self.demand
    }
}

/// Live state of a job inside a simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JobState {
    pub request: JobRequest,
    /// y: demand still to be served.
    pub remaining_demand: f64,
    /// x: time to deadline; negative once the deadline has passed.
    pub remaining_time: f64,
    pub served: f64,
    /// Set at completion.
    pub actual_sojourn: Option<f64>,
}

impl JobState {
    pub fn at(request: JobRequest, t: f64) -> Self {
        Self {
            request,
            remaining_demand: request.demand,
            remaining_time: request.deadline() - t,
            served: 0.0,
            actual_sojourn: None,
        }
    }

    /// Bare (y, x) state, handy for exercising allocators.
    pub fn from_yx(y: f64, x: f64) -> Self {
        let mut s = Self::at(JobRequest::new(0.0, y, x.max(y)), 0.0);
        s.remaining_time = x;
        s
    }

    pub fn laxity(&self) -> f64 {
        self.remaining_time - self.remaining_demand
    }
}

/// A scalar distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    Const(f64),
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl Scalar {
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            Scalar::Const(v) => v,
            Scalar::Uniform { lo, hi } => rng.uniform_in(lo, hi),
            Scalar::Exponential { mean } => rng.exponential(mean),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Scalar::Const(v) => v,
            Scalar::Uniform { lo, hi } => 0.5 * (lo + hi),
            Scalar::Exponential { mean } => mean,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Scalar::Const(_))
    }

    fn check(&self, what: &str) -> Result<()> {
        let ok = match *self {
            Scalar::Const(v) => v >= 0.0 && !v.is_nan(),
            Scalar::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi,
            Scalar::Exponential { mean } => mean.is_finite() && mean >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("{what}: bad distribution {self:?}")))
        }
    }

    /// Parse `"3"`, `"inf"`, `"uniform 10 20"` or `"exp 15"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidModel(format!("cannot parse distribution {s:?}"));
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |p: &str| -> Result<f64> { p.parse::<f64>().map_err(|_| bad()) };
        match parts.as_slice() {
            [v] => Ok(Scalar::Const(num(v)?)),
            ["const", v] => Ok(Scalar::Const(num(v)?)),
            ["uniform", lo, hi] => Ok(Scalar::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
            }),
            ["exp", m] | ["exponential", m] => Ok(Scalar::Exponential { mean: num(m)? }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Const(v) => write!(f, "{v}"),
            Scalar::Uniform { lo, hi } => write!(f, "uniform {lo} {hi}"),
            Scalar::Exponential { mean } => write!(f, "exp {mean}"),
        }
    }
}

/// How the sojourn time is drawn given the demand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sojourn {
    /// Drawn independently of σ; draws with σ > τ are rejected and redrawn.
    Independent(Scalar),
    /// τ = σ + ℓ.
    Laxity(Scalar),
    /// τ = γσ with γ ≥ 1.
    Stretch(Scalar),
}

/// Distribution of the marks (σ, τ, C, ε, known).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkSampler {
    pub demand: Scalar,
    pub sojourn: Sojourn,
    pub cost_demand: f64,
    pub cost_deadline: f64,
    pub p_unknown: f64,
}

const MAX_REDRAWS: usize = 10_000;

impl MarkSampler {
    pub fn fixed(demand: f64, sojourn: f64) -> Self {
        Self {
            demand: Scalar::Const(demand),
            sojourn: Sojourn::Independent(Scalar::Const(sojourn)),
            cost_demand: STRICT,
            cost_deadline: STRICT,
            p_unknown: 0.0,
        }
    }

    pub fn new(demand: Scalar, sojourn: Sojourn) -> Self {
        Self {
            demand,
            sojourn,
            cost_demand: STRICT,
            cost_deadline: STRICT,
            p_unknown: 0.0,
        }
    }

    pub fn with_costs(mut self, cost_demand: f64, cost_deadline: f64) -> Self {
        self.cost_demand = cost_demand;
        self.cost_deadline = cost_deadline;
        self
    }

    pub fn with_p_unknown(mut self, p: f64) -> Self {
        self.p_unknown = p;
        self
    }

    pub fn is_degenerate(&self) -> bool {
        let s = match self.sojourn {
            Sojourn::Independent(x) | Sojourn::Laxity(x) | Sojourn::Stretch(x) => x,
        };
        self.demand.is_const() && s.is_const()
    }

    /// Draw (σ, τ); returns the number of rejected draws alongside.
    pub fn sample_pair(&self, rng: &mut Stream) -> Result<((f64, f64), usize)> {
        for redraws in 0..MAX_REDRAWS {
            let sigma = self.demand.sample(rng);
            let tau = match self.sojourn {
                Sojourn::Independent(s) => s.sample(rng),
                Sojourn::Laxity(l) => sigma + l.sample(rng),
                Sojourn::Stretch(g) => g.sample(rng) * sigma,
            };
            if sigma <= tau {
                return Ok(((sigma, tau), redraws));
            }
        }
        Err(Error::InvalidModel(format!(
            "mark sampler produced σ > τ in {MAX_REDRAWS} consecutive draws"
        )))
    }

    fn sample_job(&self, arrival: f64, rng: &mut Stream) -> Result<(JobRequest, usize)> {
        let ((sigma, tau), redraws) = self.sample_pair(rng)?;
        // Always draw the knowledge flag so the stream layout does not depend on p_unknown.
        let known = rng.uniform() >= self.p_unknown;
        let job = JobRequest::new(arrival, sigma, tau)
            .with_costs(self.cost_demand, self.cost_deadline)
            .with_known(known);
        Ok((job, redraws))
    }

    fn check(&self) -> Result<()> {
        self.demand.check("demand")?;
        match self.sojourn {
            Sojourn::Independent(s) => s.check("sojourn")?,
            Sojourn::Laxity(s) => s.check("laxity")?,
            Sojourn::Stretch(s) => {
                s.check("stretch")?;
                let lo = match s {
                    Scalar::Const(v) => v,
                    Scalar::Uniform { lo, .. } => lo,
                    Scalar::Exponential { .. } => 0.0,
                };
                if lo < 1.0 {
                    return Err(Error::InvalidModel("stretch factor must be ≥ 1".into()));
                }
            }
        }
        if self.cost_demand.is_nan() || self.cost_demand < 0.0 || self.cost_deadline.is_nan() || self.cost_deadline < 0.0 {
            return Err(Error::InvalidModel("unit costs must be ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.p_unknown) {
            return Err(Error::InvalidModel("p_unknown must lie in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrivalKind {
    StationaryPoisson {
        rate: f64,
        marks: MarkSampler,
    },
    /// Intensity `rates[i]` on `[breakpoints[i], breakpoints[i+1])`, with
    /// `marks[i]` for that piece (a single entry is shared by all pieces).
    NonStationaryPoisson {
        breakpoints: Vec<f64>,
        rates: Vec<f64>,
        marks: Vec<MarkSampler>,
    },
    /// One arrival with probability `p` per grid point; τ = σ + ℓ.
    BernoulliGridI {
        p: f64,
        demand_lo: f64,
        demand_hi: f64,
        laxity_mean: f64,
    },
    /// One arrival with probability `p` per grid point; τ = γσ.
    BernoulliGridII {
        p: f64,
        demand_lo: f64,
        demand_hi: f64,
        stretch_max: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalModel {
    pub kind: ArrivalKind,
    pub horizon: f64,
    /// Grid spacing for the Bernoulli kinds.
    pub step: f64,
}

impl ArrivalModel {
    pub fn stationary(rate: f64, marks: MarkSampler, horizon: f64) -> Self {
        Self {
            kind: ArrivalKind::StationaryPoisson { rate, marks },
            horizon,
            step: 1.0,
        }
    }

    pub fn grid_i(p: f64, demand: (f64, f64), laxity_mean: f64, step: f64, horizon: f64) -> Self {
        Self {
            kind: ArrivalKind::BernoulliGridI {
                p,
                demand_lo: demand.0,
                demand_hi: demand.1,
                laxity_mean,
            },
            horizon,
            step,
        }
    }

    pub fn grid_ii(p: f64, demand: (f64, f64), stretch_max: f64, step: f64, horizon: f64) -> Self {
        Self {
            kind: ArrivalKind::BernoulliGridII {
                p,
                demand_lo: demand.0,
                demand_hi: demand.1,
                stretch_max,
            },
            horizon,
            step,
        }
    }

    /// Mark distribution; for the non-stationary kind, the first piece's.
    pub fn marks(&self) -> MarkSampler {
        match &self.kind {
            ArrivalKind::StationaryPoisson { marks, .. } => *marks,
            ArrivalKind::NonStationaryPoisson { marks, .. } => marks[0],
            ArrivalKind::BernoulliGridI {
                demand_lo,
                demand_hi,
                laxity_mean,
                ..
            } => MarkSampler::new(
                uniform_or_const(*demand_lo, *demand_hi),
                Sojourn::Laxity(exp_or_zero(*laxity_mean)),
            ),
            ArrivalKind::BernoulliGridII {
                demand_lo,
                demand_hi,
                stretch_max,
                ..
            } => MarkSampler::new(
                uniform_or_const(*demand_lo, *demand_hi),
                Sojourn::Stretch(uniform_or_const(1.0, *stretch_max)),
            ),
        }
    }

    /// Long-run arrival rate Λ (time average for the non-stationary kind).
    pub fn arrival_rate(&self) -> f64 {
        match &self.kind {
            ArrivalKind::StationaryPoisson { rate, .. } => *rate,
            ArrivalKind::NonStationaryPoisson { breakpoints, rates, .. } => {
                let span = breakpoints[breakpoints.len() - 1] - breakpoints[0];
                let mass: f64 = rates
                    .iter()
                    .zip(breakpoints.windows(2))
                    .map(|(r, w)| r * (w[1] - w[0]))
                    .sum();
                mass / span
            }
            ArrivalKind::BernoulliGridI { p, .. } | ArrivalKind::BernoulliGridII { p, .. } => p / self.step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return Err(Error::InvalidModel(format!("horizon must be finite and > 0, got {}", self.horizon)));
        }
        match &self.kind {
            ArrivalKind::StationaryPoisson { rate, marks } => {
                if !rate.is_finite() || *rate < 0.0 {
                    return Err(Error::InvalidModel(format!("rate must be finite and ≥ 0, got {rate}")));
                }
                marks.check()
            }
            ArrivalKind::NonStationaryPoisson {
                breakpoints,
                rates,
                marks,
            } => {
                if breakpoints.len() < 2 || rates.len() + 1 != breakpoints.len() {
                    return Err(Error::InvalidModel("need n+1 breakpoints for n rates".into()));
                }
                if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite()) {
                    return Err(Error::InvalidModel("breakpoints must be finite and increasing".into()));
                }
                if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
                    return Err(Error::InvalidModel("rates must be finite and ≥ 0".into()));
                }
                if marks.len() != 1 && marks.len() != rates.len() {
                    return Err(Error::InvalidModel("give one mark sampler or one per piece".into()));
                }
                marks.iter().try_for_each(|m| m.check())
            }
            ArrivalKind::BernoulliGridI { p, .. } | ArrivalKind::BernoulliGridII { p, .. } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidModel(format!("p must lie in [0,1], got {p}")));
                }
                if !self.step.is_finite() || self.step <= 0.0 {
                    return Err(Error::InvalidModel("step must be finite and > 0".into()));
                }
                self.marks().check()
            }
        }
    }
}

fn uniform_or_const(lo: f64, hi: f64) -> Scalar {
    if lo == hi {
        Scalar::Const(lo)
    } else {
        Scalar::Uniform { lo, hi }
    }
}

fn exp_or_zero(mean: f64) -> Scalar {
    if mean == 0.0 {
        Scalar::Const(0.0)
    } else {
        Scalar::Exponential { mean }
    }
}

/// Jobs sorted by arrival, with the horizon they must finish within.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JobSet {
    pub jobs: Vec<JobRequest>,
    pub horizon: f64,
}

impl JobSet {
    /// Sorts by arrival (stable, so ties keep input order).
    pub fn new(mut jobs: Vec<JobRequest>, horizon: f64) -> Self {
        jobs.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
        Self { jobs, horizon }
    }

    /// Horizon set to the latest deadline.
    pub fn from_jobs(jobs: Vec<JobRequest>) -> Self {
        let horizon = jobs.iter().map(|j| j.deadline()).fold(0.0, f64::max);
        Self::new(jobs, horizon)
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn total_demand(&self) -> f64 {
        self.jobs.iter().map(|j| j.demand).sum()
    }

    /// Replace every job's unit costs.
    pub fn with_costs(mut self, cost_demand: Option<f64>, cost_deadline: Option<f64>) -> Self {
        for j in &mut self.jobs {
            if let Some(c) = cost_demand {
                j.cost_demand = c;
            }
            if let Some(e) = cost_deadline {
                j.cost_deadline = e;
            }
        }
        self
    }
}

/// Bookkeeping from [`sample_arrivals_with_stats`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerationStats {
    /// Mark draws rejected because σ > τ.
    pub redrawn: usize,
    /// Arrivals dropped because the deadline fell past the horizon.
    pub dropped: usize,
}

pub fn sample_arrivals(model: &ArrivalModel, seed: u64) -> Result<JobSet> {
    sample_arrivals_with_stats(model, seed).map(|(j, _)| j)
}

/// Arrival times and marks use separate substreams of `seed`.
pub fn sample_arrivals_with_stats(model: &ArrivalModel, seed: u64) -> Result<(JobSet, GenerationStats)> {
    model.validate()?;
    let horizon = model.horizon;
    let mut times = Stream::new(seed, streams::ARRIVALS);
    let mut marks_rng = Stream::new(seed, streams::MARKS);
    let mut stats = GenerationStats::default();
    let mut jobs = Vec::new();

    let mut push = |a: f64, marks: &MarkSampler, rng: &mut Stream, stats: &mut GenerationStats| -> Result<()> {
        let (job, redraws) = marks.sample_job(a, rng)?;
        stats.redrawn += redraws;
        if job.deadline() <= horizon {
            jobs.push(job);
        } else {
            stats.dropped += 1;
        }
        Ok(())
    };

    match &model.kind {
        ArrivalKind::StationaryPoisson { rate, marks } => {
            if *rate > 0.0 {
                let mut t = times.exponential(1.0 / rate);
                while t < horizon {
                    push(t, marks, &mut marks_rng, &mut stats)?;
                    t += times.exponential(1.0 / rate);
                }
            }
        }
        ArrivalKind::NonStationaryPoisson {
            breakpoints,
            rates,
            marks,
        } => {
            for (i, (&rate, w)) in rates.iter().zip(breakpoints.windows(2)).enumerate() {
                let end = w[1].min(horizon);
                if rate <= 0.0 || w[0] >= end {
                    continue;
                }
                let m = if marks.len() == 1 { &marks[0] } else { &marks[i] };
                // Memorylessness lets each piece restart at its left edge.
                let mut t = w[0] + times.exponential(1.0 / rate);
                while t < end {
                    push(t, m, &mut marks_rng, &mut stats)?;
                    t += times.exponential(1.0 / rate);
                }
            }
        }
        ArrivalKind::BernoulliGridI { p, .. } | ArrivalKind::BernoulliGridII { p, .. } => {
            let marks = model.marks();
            let mut i = 0u64;
            loop {
                let t = i as f64 * model.step;
                if t >= horizon {
                    break;
                }
                if times.bernoulli(*p) {
                    push(t, &marks, &mut marks_rng, &mut stats)?;
                }
                i += 1;
            }
        }
    }
    Ok((JobSet::new(jobs, horizon), stats))
}

/// A single failed feasibility rule.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    InfeasibleDemand { job: usize, demand: f64, sojourn: f64 },
    NegativeDemand { job: usize },
    NegativeArrival { job: usize },
    PastHorizon { job: usize, deadline: f64 },
    NonFinite { job: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InfeasibleDemand { job, demand, sojourn } => {
                write!(f, "job {job}: demand {demand} exceeds sojourn {sojourn}")
            }
            Violation::NegativeDemand { job } => write!(f, "job {job}: negative demand"),
            Violation::NegativeArrival { job } => write!(f, "job {job}: negative arrival"),
            Violation::PastHorizon { job, deadline } => write!(f, "job {job}: deadline {deadline} past horizon"),
            Violation::NonFinite { job } => write!(f, "job {job}: non-finite field"),
        }
    }
}

pub fn validate_jobset(jobs: &JobSet) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, j) in jobs.jobs.iter().enumerate() {
        if !(j.arrival.is_finite() && j.demand.is_finite() && j.sojourn.is_finite()) {
            out.push(Violation::NonFinite { job: k });
            continue;
        }
        if j.demand < 0.0 {
            out.push(Violation::NegativeDemand { job: k });
        }
        if j.demand > j.sojourn {
            out.push(Violation::InfeasibleDemand {
                job: k,
                demand: j.demand,
                sojourn: j.sojourn,
            });
        }
        if j.arrival < 0.0 {
            out.push(Violation::NegativeArrival { job: k });
        }
        if j.deadline() > jobs.horizon {
            out.push(Violation::PastHorizon {
                job: k,
                deadline: j.deadline(),
            });
        }
    }
    out
}

pub const TRACE_HEADER: [&str; 6] = ["arrival", "demand", "sojourn", "cost_demand", "cost_deadline", "known"];

pub fn load_trace(path: impl AsRef<Path>) -> Result<JobSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_trace(file, path)
}

/// Parse trace CSV from any reader; `path` only labels errors.
pub fn read_trace(reader: impl Read, path: &Path) -> Result<JobSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let perr = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut jobs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize, name: &str, default: Option<f64>| -> Result<f64> {
            let s = field(i);
            if s.is_empty() {
                return default.ok_or_else(|| perr(line, format!("missing {name}")));
            }
            match s {
                "inf" | "Inf" | "INF" | "infinity" => Ok(f64::INFINITY),
                _ => s.parse::<f64>().map_err(|_| perr(line, format!("bad {name}: {s:?}"))),
            }
        };
        if rec.len() < 3 {
            return Err(perr(line, format!("expected at least 3 fields, got {}", rec.len())));
        }
        let known = match field(5).to_ascii_lowercase().as_str() {
            "" | "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            other => return Err(perr(line, format!("bad known flag: {other:?}"))),
        };
        jobs.push(
            JobRequest::new(num(0, "arrival", None)?, num(1, "demand", None)?, num(2, "sojourn", None)?)
                .with_costs(num(3, "cost_demand", Some(STRICT))?, num(4, "cost_deadline", Some(STRICT))?)
                .with_known(known),
        );
    }
    let set = JobSet::from_jobs(jobs);
    let violations = validate_jobset(&set);
    if violations.is_empty() {
        Ok(set)
    } else {
        Err(Error::Validation(violations))
    }
}

fn cost_cell(c: f64) -> String {
    if c.is_infinite() {
        String::new()
    } else {
        format!("{c}")
    }
}

pub fn write_trace(jobs: &JobSet, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for j in &jobs.jobs {
        w.write_record([
            format!("{}", j.arrival),
            format!("{}", j.demand),
            format!("{}", j.sojourn),
            cost_cell(j.cost_demand),
            cost_cell(j.cost_deadline),
            if j.known { "true".into() } else { "false".into() },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a model file (TOML key/value sections; schema in docs/model-file.md).
pub fn parse_model(text: &str) -> Result<ArrivalModel> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::InvalidModel(e.to_string()))?;
    let bad = |m: String| Error::InvalidModel(m);
    let get_f = |t: &toml::Table, k: &str| -> Result<Option<f64>> {
        match t.get(k) {
            None => Ok(None),
            Some(toml::Value::Float(v)) => Ok(Some(*v)),
            Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(toml::Value::String(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
            Some(v) => Err(bad(format!("{k}: expected a number, got {v}"))),
        }
    };
    let req_f = |t: &toml::Table, k: &str| -> Result<f64> { get_f(t, k)?.ok_or_else(|| bad(format!("missing key {k}"))) };
    let get_scalar = |t: &toml::Table, k: &str| -> Result<Option<Scalar>> {
        match t.get(k) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Scalar::parse(s).map(Some),
            Some(_) => get_f(t, k).map(|v| v.map(Scalar::Const)),
        }
    };
    let get_list = |t: &toml::Table, k: &str| -> Result<Vec<f64>> {
        let arr = t
            .get(k)
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad(format!("missing list {k}")))?;
        arr.iter()
            .map(|v| match v {
                toml::Value::Float(f) => Ok(*f),
                toml::Value::Integer(i) => Ok(*i as f64),
                _ => Err(bad(format!("{k}: expected numbers"))),
            })
            .collect()
    };
    let parse_marks = |t: &toml::Table| -> Result<MarkSampler> {
        let demand = get_scalar(t, "demand")?.ok_or_else(|| bad("marks: missing demand".into()))?;
        let sojourn = match (get_scalar(t, "sojourn")?, get_scalar(t, "laxity")?, get_scalar(t, "stretch")?) {
            (Some(s), None, None) => Sojourn::Independent(s),
            (None, Some(l), None) => Sojourn::Laxity(l),
            (None, None, Some(g)) => Sojourn::Stretch(g),
            _ => return Err(bad("marks: give exactly one of sojourn, laxity, stretch".into())),
        };
        Ok(MarkSampler {
            demand,
            sojourn,
            cost_demand: get_f(t, "cost_demand")?.unwrap_or(STRICT),
            cost_deadline: get_f(t, "cost_deadline")?.unwrap_or(STRICT),
            p_unknown: get_f(t, "p_unknown")?.unwrap_or(0.0),
        })
    };
    let marks_table = |t: &toml::Table| -> Result<MarkSampler> {
        let m = t
            .get("marks")
            .and_then(|v| v.as_table())
            .ok_or_else(|| bad("missing [marks] section".into()))?;
        parse_marks(m)
    };

    let kind = table
        .get("kind")
        .and_then(|v| v.as_str())
        .ok_or_else(|| bad("missing key kind".into()))?;
    let horizon = req_f(&table, "horizon")?;
    let step = get_f(&table, "step")?.unwrap_or(1.0);
    let kind = match kind {
        "stationary_poisson" => ArrivalKind::StationaryPoisson {
            rate: req_f(&table, "rate")?,
            marks: marks_table(&table)?,
        },
        "nonstationary_poisson" => {
            let marks = match table.get("piece_marks").and_then(|v| v.as_array()) {
                Some(list) => list
                    .iter()
                    .map(|v| v.as_table().ok_or_else(|| bad("piece_marks entries must be tables".into())).and_then(parse_marks))
                    .collect::<Result<Vec<_>>>()?,
                None => vec![marks_table(&table)?],
            };
            ArrivalKind::NonStationaryPoisson {
                breakpoints: get_list(&table, "breakpoints")?,
                rates: get_list(&table, "rates")?,
                marks,
            }
        }
        "bernoulli_grid_i" => ArrivalKind::BernoulliGridI {
            p: req_f(&table, "p")?,
            demand_lo: req_f(&table, "demand_lo")?,
            demand_hi: req_f(&table, "demand_hi")?,
            laxity_mean: req_f(&table, "laxity_mean")?,
        },
        "bernoulli_grid_ii" => ArrivalKind::BernoulliGridII {
            p: req_f(&table, "p")?,
            demand_lo: req_f(&table, "demand_lo")?,
            demand_hi: req_f(&table, "demand_hi")?,
            stretch_max: req_f(&table, "stretch_max")?,
        },
        other => return Err(bad(format!("unknown kind {other:?}"))),
    };
    let model = ArrivalModel { kind, horizon, step };
    model.validate()?;
    Ok(model)
}
