//! Rate controllers.
//!
//! Distributed rules are pure functions of a job's own (y, x) and unit
//! costs. ES-PC additionally reads the previous step's total capacity. The
//! priority and fair-share allocators see the whole per-step snapshot.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::model::JobState;

/// Largest admissible service rate.
pub const MAX_RATE: f64 = 1.0;

#[inline]
fn clamp(r: f64) -> f64 {
    if r.is_nan() {
        0.0
    } else {
        r.clamp(0.0, MAX_RATE)
    }
}

/// Which constraint a soft policy relaxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Strict,
    SoftDemand,
    SoftDeadline,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "strict" => Ok(Mode::Strict),
            "soft_demand" | "soft-demand" => Ok(Mode::SoftDemand),
            "soft_deadline" | "soft-deadline" => Ok(Mode::SoftDeadline),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strict => "strict",
            Mode::SoftDemand => "soft_demand",
            Mode::SoftDeadline => "soft_deadline",
        })
    }
}

/// Sort key for the priority allocator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Priority {
    Deadline,
    Laxity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolicyConfig {
    Immediate,
    Delayed,
    Exact,
    /// Uses each job's own unit costs (C_k, ε_k).
    Ges,
    EqualService { mode: Mode, c: f64 },
    /// `p_bar = None` lets the engine use the running mean of P.
    EsPc { mu: f64, p_bar: Option<f64> },
    Edf { p: f64, mode: Mode },
    Llf { p: f64, mode: Mode },
    FairSharing { p: f64, mode: Mode },
    /// Unknown jobs fall back to rate `c`; `mode` decides whether they stop at the deadline.
    GesUnknown { c: f64, mode: Mode },
}

impl PolicyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::Immediate => "immediate",
            PolicyConfig::Delayed => "delayed",
            PolicyConfig::Exact => "exact",
            PolicyConfig::Ges => "ges",
            PolicyConfig::EqualService { .. } => "equal",
            PolicyConfig::EsPc { .. } => "espc",
            PolicyConfig::Edf { .. } => "edf",
            PolicyConfig::Llf { .. } => "llf",
            PolicyConfig::FairSharing { .. } => "fair",
            PolicyConfig::GesUnknown { .. } => "ges_unknown",
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("{}: {m}", self.name())));
        match *self {
            PolicyConfig::EqualService { c, .. } | PolicyConfig::GesUnknown { c, .. } if !(c >= 0.0) => bad("c must be ≥ 0"),
            PolicyConfig::Edf { p, .. } | PolicyConfig::Llf { p, .. } | PolicyConfig::FairSharing { p, .. } if !(p >= 0.0) => {
                bad("p must be ≥ 0")
            }
            PolicyConfig::EsPc { mu, .. } if !(mu >= 1.0) => bad("μ must be ≥ 1"),
            PolicyConfig::GesUnknown { mode: Mode::Strict, .. } => bad("fallback mode must be soft"),
            _ => Ok(()),
        }
    }

    /// True when rates depend on the whole snapshot rather than one job.
    pub fn is_centralized(&self) -> bool {
        matches!(self, PolicyConfig::Edf { .. } | PolicyConfig::Llf { .. } | PolicyConfig::FairSharing { .. })
    }

    /// What happens to `job` if it still has demand at its deadline.
    pub fn at_deadline(&self, job: &JobState) -> DeadlineAction {
        let soft = |mode: Mode| match mode {
            Mode::Strict => DeadlineAction::Strict,
            Mode::SoftDemand => DeadlineAction::Drop,
            Mode::SoftDeadline => DeadlineAction::Extend,
        };
        match *self {
            PolicyConfig::Immediate | PolicyConfig::Delayed | PolicyConfig::Exact | PolicyConfig::EsPc { .. } => {
                DeadlineAction::Strict
            }
            PolicyConfig::Ges => ges_deadline_action(job.request.cost_demand, job.request.cost_deadline),
            PolicyConfig::GesUnknown { mode, .. } => {
                if job.request.known {
                    ges_deadline_action(job.request.cost_demand, job.request.cost_deadline)
                } else {
                    soft(mode)
                }
            }
            PolicyConfig::EqualService { mode, .. }
            | PolicyConfig::Edf { mode, .. }
            | PolicyConfig::Llf { mode, .. }
            | PolicyConfig::FairSharing { mode, .. } => soft(mode),
        }
    }

    /// Rate for one job under a distributed rule; `p_prev`/`p_bar` only matter for ES-PC.
    pub fn rate(&self, job: &JobState, p_prev: f64, p_bar: f64) -> f64 {
        let (y, x) = (job.remaining_demand, job.remaining_time);
        match *self {
            PolicyConfig::Immediate => rate_immediate(y),
            PolicyConfig::Delayed => rate_delayed(y, x),
            PolicyConfig::Exact => rate_exact(y, x),
            PolicyConfig::Ges => rate_ges(y, x, job.request.cost_demand, job.request.cost_deadline),
            PolicyConfig::EqualService { mode, c } => rate_equal_service(y, x, mode, c),
            PolicyConfig::EsPc { mu, .. } => rate_es_pc(y, x, p_prev, p_bar, mu),
            PolicyConfig::GesUnknown { c, .. } => rate_ges_unknown(job, job.request.cost_demand, job.request.cost_deadline, c),
            PolicyConfig::Edf { .. } | PolicyConfig::Llf { .. } | PolicyConfig::FairSharing { .. } => {
                panic!("{} allocates over the snapshot; use allocate()", self.name())
            }
        }
    }

    /// Rates for a whole snapshot, written into `out` (same order as `jobs`).
    pub fn allocate(&self, jobs: &[JobState], p_prev: f64, p_bar: f64, out: &mut Vec<f64>) {
        out.clear();
        match *self {
            PolicyConfig::Edf { p, mode } => out.extend(assign_priority(jobs, p, Priority::Deadline, mode)),
            PolicyConfig::Llf { p, mode } => out.extend(assign_priority(jobs, p, Priority::Laxity, mode)),
            PolicyConfig::FairSharing { p, mode } => out.extend(assign_fair(jobs, p, mode)),
            _ => out.extend(jobs.iter().map(|j| self.rate(j, p_prev, p_bar))),
        }
    }
}

/// Handling of a job that reaches its deadline unfinished.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeadlineAction {
    /// Any leftover beyond numerical slack is an error.
    Strict,
    /// Leftover demand is abandoned and charged C per unit.
    Drop,
    /// Service continues; lateness is charged ε per time unit.
    Extend,
}

/// GES drops demand when C/2 ≤ √ε and extends deadlines otherwise.
pub fn ges_deadline_action(c: f64, eps: f64) -> DeadlineAction {
    if c / 2.0 <= eps.sqrt() {
        DeadlineAction::Drop
    } else {
        DeadlineAction::Extend
    }
}

pub fn rate_exact(y: f64, x: f64) -> f64 {
    if x > 0.0 {
        clamp(y / x)
    } else {
        0.0
    }
}

/// Which branch of the GES rule applies at (y, x).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GesBranch {
    /// y/x: finish exactly at the deadline.
    Exact,
    /// C/2: meet the deadline, leave demand unmet.
    DemandCap,
    /// √ε: run at a fixed rate, past the deadline if needed.
    DeadlineCap,
    /// Past the deadline in the unmet-demand regime (C/2 ≤ √ε): the job is gone.
    Dropped,
}

pub fn ges_branch(y: f64, x: f64, c: f64, eps: f64) -> GesBranch {
    let half_c = c / 2.0;
    let root_eps = eps.sqrt();
    if x > 0.0 {
        let r = y / x;
        if r <= half_c.min(root_eps) {
            return GesBranch::Exact;
        }
        if r > half_c && half_c <= root_eps {
            return GesBranch::DemandCap;
        }
    } else if half_c <= root_eps {
        return GesBranch::Dropped;
    }
    GesBranch::DeadlineCap
}

/// Unclamped GES rate.
pub fn ges_raw_rate(y: f64, x: f64, c: f64, eps: f64) -> f64 {
    match ges_branch(y, x, c, eps) {
        GesBranch::Exact => y / x,
        GesBranch::DemandCap => c / 2.0,
        GesBranch::DeadlineCap => {
            if y > 0.0 {
                eps.sqrt()
            } else {
                0.0
            }
        }
        GesBranch::Dropped => 0.0,
    }
}

pub fn rate_ges(y: f64, x: f64, c: f64, eps: f64) -> f64 {
    clamp(ges_raw_rate(y, x, c, eps))
}

pub fn rate_immediate(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn rate_delayed(y: f64, x: f64) -> f64 {
    if y > 0.0 && x <= y {
        1.0
    } else {
        0.0
    }
}

pub fn rate_equal_service(y: f64, x: f64, mode: Mode, c: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let r = match mode {
        Mode::Strict => {
            if x - y > 0.0 {
                c
            } else {
                1.0
            }
        }
        Mode::SoftDemand => {
            if x > 0.0 {
                c
            } else {
                0.0
            }
        }
        Mode::SoftDeadline => c,
    };
    clamp(r)
}

pub fn rate_es_pc(y: f64, x: f64, p_prev: f64, p_bar: f64, mu: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if p_prev < p_bar {
        clamp(mu * y / x)
    } else {
        clamp(y / x)
    }
}

fn eligible(j: &JobState, mode: Mode) -> bool {
    let y = j.remaining_demand;
    match mode {
        Mode::Strict | Mode::SoftDemand => y > 0.0 && j.remaining_time > 0.0,
        Mode::SoftDeadline => y > 0.0,
    }
}

/// EDF (by x) or LLF (by x − y) with capacity `p`. Ties go to the earlier
/// arrival, then the lower input index.
pub fn assign_priority(jobs: &[JobState], p: f64, order: Priority, mode: Mode) -> Vec<f64> {
    let key = |j: &JobState| match order {
        Priority::Deadline => j.remaining_time,
        Priority::Laxity => j.laxity(),
    };
    let mut idx: Vec<usize> = (0..jobs.len()).filter(|&i| eligible(&jobs[i], mode)).collect();
    idx.sort_by(|&a, &b| {
        key(&jobs[a])
            .total_cmp(&key(&jobs[b]))
            .then(jobs[a].request.arrival.total_cmp(&jobs[b].request.arrival))
            .then(a.cmp(&b))
    });
    let mut out = vec![0.0; jobs.len()];
    let mut left = p.max(0.0);
    for i in idx {
        if left <= 0.0 {
            break;
        }
        let r = left.min(MAX_RATE);
        out[i] = r;
        left -= r;
    }
    out
}

/// Equal split of `p` among eligible jobs, capped at 1 each.
pub fn assign_fair(jobs: &[JobState], p: f64, mode: Mode) -> Vec<f64> {
    let n = jobs.iter().filter(|j| eligible(j, mode)).count();
    let share = if n > 0 { clamp(p / n as f64) } else { 0.0 };
    jobs.iter().map(|j| if eligible(j, mode) { share } else { 0.0 }).collect()
}

/// GES for jobs whose demand is known, a flat fallback rate otherwise.
pub fn rate_ges_unknown(job: &JobState, c: f64, eps: f64, fallback_c: f64) -> f64 {
    let y = job.remaining_demand;
    if job.request.known {
        rate_ges(y, job.remaining_time, c, eps)
    } else if y > 0.0 {
        clamp(fallback_c)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JobRequest;
    use proptest::prelude::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn exact_examples() {
        assert_eq!(rate_exact(4.0, 2.0), 1.0);
        assert_eq!(rate_exact(1.0, 4.0), 0.25);
        assert_eq!(rate_exact(3.0, 0.0), 0.0);
    }

    #[test]
    fn ges_examples() {
        assert_eq!(rate_ges(3.0, 1.0, 2.0, 4.0), 1.0);
        assert_eq!(ges_branch(3.0, 1.0, 2.0, 4.0), GesBranch::DemandCap);
        assert_eq!(rate_ges(1.0, 2.0, 2.0, 4.0), 0.5);
        assert_eq!(ges_branch(1.0, 2.0, 2.0, 4.0), GesBranch::Exact);
        assert_eq!(rate_ges(1.0, 0.0, 10.0, 0.25), 0.5);
        assert_eq!(ges_branch(1.0, 0.0, 10.0, 0.25), GesBranch::DeadlineCap);
    }

    #[test]
    fn immediate_delayed_examples() {
        assert_eq!(rate_immediate(0.5), 1.0);
        assert_eq!(rate_immediate(0.0), 0.0);
        assert_eq!(rate_delayed(1.0, 3.0), 0.0);
        assert_eq!(rate_delayed(1.0, 1.0), 1.0);
    }

    #[test]
    fn equal_service_examples() {
        assert_eq!(rate_equal_service(1.0, 3.0, Mode::Strict, 0.4), 0.4);
        assert_eq!(rate_equal_service(1.0, 1.0, Mode::Strict, 0.4), 1.0);
        assert_eq!(rate_equal_service(1.0, 0.0, Mode::SoftDemand, 0.4), 0.0);
        assert_eq!(rate_equal_service(1.0, -1.0, Mode::SoftDeadline, 0.4), 0.4);
    }

    #[test]
    fn es_pc_examples() {
        assert_eq!(rate_es_pc(2.0, 4.0, 0.3, 0.5, 1.5), 0.75);
        assert_eq!(rate_es_pc(2.0, 4.0, 0.6, 0.5, 1.5), 0.5);
        assert_eq!(rate_es_pc(2.0, 0.0, 0.0, 9.0, 1.5), 0.0);
    }

    #[test]
    fn priority_examples() {
        let two = [JobState::from_yx(1.0, 1.0), JobState::from_yx(1.0, 2.0)];
        assert_eq!(assign_priority(&two, 1.0, Priority::Deadline, Mode::SoftDemand), vec![1.0, 0.0]);
        assert_eq!(assign_priority(&two, 1.5, Priority::Deadline, Mode::SoftDemand), vec![1.0, 0.5]);
        // laxities 2 and 1, so the second job goes first
        let llf = [JobState::from_yx(1.0, 3.0), JobState::from_yx(2.0, 3.0)];
        let laxities: Vec<f64> = llf.iter().map(|j| j.laxity()).collect();
        assert_eq!(laxities, vec![2.0, 1.0]);
        assert_eq!(assign_priority(&llf, 1.0, Priority::Laxity, Mode::SoftDemand), vec![0.0, 1.0]);
    }

    #[test]
    fn priority_ties_by_arrival_then_index() {
        let mut a = JobState::from_yx(1.0, 2.0);
        let mut b = JobState::from_yx(1.0, 2.0);
        a.request.arrival = 1.0;
        b.request.arrival = 0.0;
        assert_eq!(assign_priority(&[a, b], 1.0, Priority::Deadline, Mode::SoftDemand), vec![0.0, 1.0]);
        assert_eq!(assign_priority(&[b, b], 1.0, Priority::Deadline, Mode::SoftDemand), vec![1.0, 0.0]);
    }

    #[test]
    fn fair_examples() {
        let two = [JobState::from_yx(1.0, 1.0), JobState::from_yx(1.0, 2.0)];
        assert_eq!(assign_fair(&two, 1.0, Mode::SoftDemand), vec![0.5, 0.5]);
        assert_eq!(assign_fair(&two[..1], 3.0, Mode::SoftDemand), vec![1.0]);
        assert!(assign_fair(&[], 3.0, Mode::SoftDemand).is_empty());
        // a late job is only eligible in soft-deadline mode
        let late = [JobState::from_yx(1.0, -1.0), JobState::from_yx(1.0, 2.0)];
        assert_eq!(assign_fair(&late, 1.0, Mode::SoftDemand), vec![0.0, 1.0]);
        assert_eq!(assign_fair(&late, 1.0, Mode::SoftDeadline), vec![0.5, 0.5]);
    }

    #[test]
    fn ges_unknown_examples() {
        let known = JobState::at(JobRequest::new(0.0, 1.0, 2.0), 0.0);
        assert_eq!(rate_ges_unknown(&known, 2.0, 4.0, 0.3), rate_ges(1.0, 2.0, 2.0, 4.0));
        let unknown = JobState::at(JobRequest::new(0.0, 1.0, 2.0).with_known(false), 0.0);
        assert_eq!(rate_ges_unknown(&unknown, 2.0, 4.0, 0.3), 0.3);
        let mut done = unknown;
        done.remaining_demand = 0.0;
        assert_eq!(rate_ges_unknown(&done, 2.0, 4.0, 0.3), 0.0);
    }

    #[test]
    fn ges_regimes_match_deadline_action() {
        // extension only when √ε < C/2, unmet demand only when C/2 ≤ √ε
        assert_eq!(ges_deadline_action(10.0, 0.25), DeadlineAction::Extend);
        assert_eq!(ges_deadline_action(2.0, 4.0), DeadlineAction::Drop);
        assert_eq!(ges_deadline_action(INF, 4.0), DeadlineAction::Extend);
        assert_eq!(ges_deadline_action(2.0, INF), DeadlineAction::Drop);
        assert_eq!(ges_branch(1.0, 0.0, 2.0, 4.0), GesBranch::Dropped);
        assert_eq!(rate_ges(1.0, 0.0, 2.0, 4.0), 0.0);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, -10.0..10.0f64, Just(0.0)]
    }

    fn cost() -> impl Strategy<Value = f64> {
        prop_oneof![0.0..100.0f64, Just(INF), Just(0.0)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4000))]

        #[test]
        fn all_rates_in_unit_interval(y in 0.0..1e6f64, x in finite(), c in cost(), e in cost(),
                                      p_prev in finite(), mu in 1.0..5.0f64, cc in 0.0..10.0f64) {
            let rs = [
                rate_exact(y, x), rate_ges(y, x, c, e), rate_immediate(y), rate_delayed(y, x),
                rate_equal_service(y, x, Mode::Strict, cc), rate_equal_service(y, x, Mode::SoftDemand, cc),
                rate_equal_service(y, x, Mode::SoftDeadline, cc), rate_es_pc(y, x, p_prev, 1.0, mu),
            ];
            for r in rs {
                prop_assert!((0.0..=1.0).contains(&r), "{r}");
            }
        }

        #[test]
        fn ges_with_infinite_costs_is_exact(y in 0.0..100.0f64, x in finite()) {
            prop_assert_eq!(rate_ges(y, x, INF, INF), rate_exact(y, x));
        }

        #[test]
        fn ges_extends_only_when_deadline_is_cheap(y in 0.001..100.0f64, x in -10.0..0.0f64, c in cost(), e in cost()) {
            // past the deadline the raw rule gives √ε; the job survives only if √ε < C/2
            let extends = ges_deadline_action(c, e) == DeadlineAction::Extend;
            prop_assert_eq!(extends, e.sqrt() < c / 2.0);
            let _ = (y, x);
        }

        #[test]
        fn allocators_respect_capacity(ys in proptest::collection::vec((0.0..5.0f64, -3.0..10.0f64), 0..12), p in 0.0..6.0f64) {
            let jobs: Vec<JobState> = ys.iter().map(|&(y, x)| JobState::from_yx(y, x)).collect();
            for mode in [Mode::SoftDemand, Mode::SoftDeadline] {
                for r in [assign_priority(&jobs, p, Priority::Deadline, mode), assign_priority(&jobs, p, Priority::Laxity, mode), assign_fair(&jobs, p, mode)] {
                    prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
                    prop_assert!(r.iter().sum::<f64>() <= p + 1e-12);
                }
            }
        }
    }

    #[test]
    fn fuzz_million_inputs() {
        let mut s = crate::rng::Stream::new(99, 0);
        for _ in 0..1_000_000 {
            let y = s.uniform_in(0.0, 50.0);
            let x = s.uniform_in(-20.0, 50.0);
            let c = if s.bernoulli(0.1) { INF } else { s.uniform_in(0.0, 20.0) };
            let e = if s.bernoulli(0.1) { INF } else { s.uniform_in(0.0, 20.0) };
            for r in [rate_exact(y, x), rate_ges(y, x, c, e), rate_es_pc(y, x, s.uniform(), 0.5, 1.0 + s.uniform())] {
                assert!((0.0..=1.0).contains(&r));
            }
        }
    }
}
