//! Fixed-step simulation of a job set under a rate policy.
//!
//! Step `i` covers `[i·dt, (i+1)·dt)`. A job becomes active at the first
//! step boundary at or after its arrival. Its rate is evaluated at the step
//! start and applied for `min(dt, x)` while before the deadline (the whole
//! step afterwards), never serving more than the remaining demand. The
//! recorded P for a step is the service delivered divided by dt, so that
//! `Σ P·dt` equals total service exactly.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{JobSet, JobState};
use crate::policies::{DeadlineAction, PolicyConfig, MAX_RATE};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CapacityTrace {
    pub dt: f64,
    /// Capacity P over each step.
    pub p: Vec<f64>,
    /// Remaining demand X at each step start.
    pub x: Vec<f64>,
    pub u_cum: Vec<f64>,
    pub w_cum: Vec<f64>,
    pub total_served: f64,
    pub total_unmet: f64,
    pub total_extension: f64,
    /// Jobs still unfinished when the horizon ran out.
    pub overflow: usize,
    /// Largest per-job rate applied at any step.
    pub max_rate: f64,
}

impl CapacityTrace {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["t", "P", "X", "U_cum", "W_cum"])?;
        for i in 0..self.len() {
            w.write_record([
                format!("{}", self.time(i)),
                format!("{}", self.p[i]),
                format!("{}", self.x[i]),
                format!("{}", self.u_cum[i]),
                format!("{}", self.w_cum[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What happened to one job.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JobOutcome {
    /// σ̂
    pub served: f64,
    /// τ̂, when the job completed.
    pub actual_sojourn: Option<f64>,
    pub unmet: f64,
    pub extension: f64,
}

#[derive(Clone, Debug)]
pub struct SimRun {
    pub trace: CapacityTrace,
    pub outcomes: Vec<JobOutcome>,
}

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub dt: f64,
    /// Run length; defaults to the job set's horizon.
    pub horizon: Option<f64>,
    /// Leftover demand tolerated at a strict deadline; defaults to dt (one step at full rate).
    pub strict_slack: Option<f64>,
}

impl SimOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            horizon: None,
            strict_slack: None,
        }
    }
}

pub fn simulate(jobs: &JobSet, policy: &PolicyConfig, dt: f64) -> Result<CapacityTrace> {
    simulate_detailed(jobs, policy, &SimOptions::new(dt)).map(|r| r.trace)
}

/// ES-PC with boost `mu` and reference level `p_bar` (None: running mean of P).
pub fn simulate_es_pc(jobs: &JobSet, dt: f64, mu: f64, p_bar: Option<f64>) -> Result<CapacityTrace> {
    simulate(jobs, &PolicyConfig::EsPc { mu, p_bar }, dt)
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> usize {
    let n = (horizon / dt - 1e-9).ceil();
    if n > 0.0 {
        n as usize
    } else {
        0
    }
}

/// Tolerance used when snapping an arrival to a step boundary.
#[inline]
pub(crate) fn snap_tol(dt: f64) -> f64 {
    1e-9 * dt
}

#[inline]
fn done_tol(sigma: f64) -> f64 {
    1e-12 * sigma.max(1.0)
}

struct Live {
    idx: usize,
    state: JobState,
    past_deadline: bool,
}

pub fn simulate_detailed(jobs: &JobSet, policy: &PolicyConfig, opts: &SimOptions) -> Result<SimRun> {
    policy.validate()?;
    let dt = opts.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let horizon = opts.horizon.unwrap_or(jobs.horizon);
    let n = step_count(horizon, dt);
    let slack = opts.strict_slack.unwrap_or(dt * MAX_RATE) + 1e-9;

    let mut trace = CapacityTrace {
        dt,
        p: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        u_cum: Vec::with_capacity(n),
        w_cum: Vec::with_capacity(n),
        ..Default::default()
    };
    let mut outcomes = vec![JobOutcome::default(); jobs.len()];
    let mut live: Vec<Live> = Vec::new();
    let mut snapshot: Vec<JobState> = Vec::new();
    let mut rates: Vec<f64> = Vec::new();
    let mut next = 0usize;
    let (mut u_cum, mut w_cum) = (0.0, 0.0);
    let mut p_sum = 0.0;
    let fixed_p_bar = match policy {
        PolicyConfig::EsPc { p_bar, .. } => *p_bar,
        _ => None,
    };
    let mut p_prev = fixed_p_bar.unwrap_or(0.0);

    for i in 0..n {
        let t = i as f64 * dt;
        while next < jobs.len() && jobs.jobs[next].arrival <= t + snap_tol(dt) {
            let req = jobs.jobs[next];
            if req.demand > done_tol(req.demand) {
                live.push(Live {
                    idx: next,
                    state: JobState::at(req, t),
                    past_deadline: false,
                });
            } else {
                outcomes[next].actual_sojourn = Some(0.0);
            }
            next += 1;
        }

        let x_now: f64 = live.iter().map(|l| l.state.remaining_demand).sum();
        let p_bar = fixed_p_bar.unwrap_or(if i > 0 { p_sum / i as f64 } else { 0.0 });

        snapshot.clear();
        snapshot.extend(live.iter().map(|l| l.state));
        policy.allocate(&snapshot, p_prev, p_bar, &mut rates);

        let mut served_step = 0.0;
        for (l, &rate) in live.iter_mut().zip(&rates) {
            let s = &mut l.state;
            let active = if s.remaining_time > 0.0 { s.remaining_time.min(dt) } else { dt };
            let service = (rate * active).min(s.remaining_demand);
            if service > 0.0 {
                trace.max_rate = trace.max_rate.max(rate);
                s.remaining_demand -= service;
                s.served += service;
                served_step += service;
                if s.remaining_demand <= done_tol(s.request.demand) {
                    // finished part-way through the step
                    let finish = t + service / rate;
                    // Before the deadline the step is cut at x, so any overshoot is rounding.
                    let sojourn = if l.past_deadline {
                        finish - s.request.arrival
                    } else {
                        (finish - s.request.arrival).min(s.request.sojourn)
                    };
                    s.actual_sojourn = Some(sojourn);
                    s.remaining_demand = 0.0;
                    let late = (sojourn - s.request.sojourn).max(0.0);
                    if l.past_deadline {
                        outcomes[l.idx].extension = late;
                        trace.total_extension += late;
                        if late > 0.0 {
                            w_cum += s.request.cost_deadline * late;
                        }
                    }
                }
            }
            s.remaining_time -= dt;
        }

        // deadline handling for jobs whose deadline fell inside this step
        let mut err = None;
        for l in live.iter_mut() {
            let s = &mut l.state;
            if s.actual_sojourn.is_some() || l.past_deadline || s.remaining_time > 1e-12 {
                continue;
            }
            let y = s.remaining_demand;
            let action = match policy.at_deadline(s) {
                DeadlineAction::Drop if s.request.cost_demand.is_infinite() => DeadlineAction::Strict,
                DeadlineAction::Extend if s.request.cost_deadline.is_infinite() => DeadlineAction::Strict,
                a => a,
            };
            match action {
                DeadlineAction::Strict => {
                    if y > slack {
                        err.get_or_insert(Error::StrictViolation { job: l.idx, remaining: y });
                    }
                    outcomes[l.idx].unmet = y;
                    trace.total_unmet += y;
                    s.actual_sojourn = Some(s.request.sojourn);
                }
                DeadlineAction::Drop => {
                    u_cum += s.request.cost_demand * y;
                    outcomes[l.idx].unmet = y;
                    trace.total_unmet += y;
                    s.actual_sojourn = Some(s.request.sojourn);
                }
                DeadlineAction::Extend => l.past_deadline = true,
            }
        }
        if let Some(e) = err {
            return Err(e);
        }

        live.retain(|l| {
            if l.state.actual_sojourn.is_some() {
                outcomes[l.idx].served = l.state.served;
                outcomes[l.idx].actual_sojourn = l.state.actual_sojourn;
                false
            } else {
                true
            }
        });

        let p = served_step / dt;
        trace.total_served += served_step;
        trace.p.push(p);
        trace.x.push(x_now);
        trace.u_cum.push(u_cum);
        trace.w_cum.push(w_cum);
        p_sum += p;
        p_prev = p;
    }

    trace.overflow = live.len() + (jobs.len() - next);
    for l in &live {
        outcomes[l.idx].served = l.state.served;
    }
    Ok(SimRun { trace, outcomes })
}

/// Moments of a trace over `[burn_in, end)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[allow(non_snake_case)]
pub struct Metrics {
    pub mean_P: f64,
    pub var_P: f64,
    /// Batch-means standard error of `var_P`.
    pub var_P_se: f64,
    pub mean_X: f64,
    pub var_X: f64,
    pub var_X_se: f64,
    /// Unmet-demand penalty per unit time.
    pub mean_U_rate: f64,
    /// Extension penalty per unit time.
    pub mean_W_rate: f64,
    pub total_unmet: f64,
    pub total_extension: f64,
    pub overflow: usize,
    pub window: f64,
}

impl Metrics {
    /// α·mean² + β·var + w·(penalty rates).
    pub fn objective(&self, alpha: f64, beta: f64, cost_weight: f64) -> f64 {
        let mut v = alpha * self.mean_P * self.mean_P + beta * self.var_P;
        if cost_weight != 0.0 {
            v += cost_weight * (self.mean_U_rate + self.mean_W_rate);
        }
        v
    }

    /// Variance plus time-averaged penalties.
    pub fn cost(&self) -> f64 {
        self.objective(0.0, 1.0, 1.0)
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "mean_P={}\nvar_P={}\nvar_P_se={}\nmean_X={}\nvar_X={}\nvar_X_se={}\nmean_U_rate={}\nmean_W_rate={}\ntotal_unmet={}\ntotal_extension={}\noverflow={}\nwindow={}\ncost={}\n",
            self.mean_P,
            self.var_P,
            self.var_P_se,
            self.mean_X,
            self.var_X,
            self.var_X_se,
            self.mean_U_rate,
            self.mean_W_rate,
            self.total_unmet,
            self.total_extension,
            self.overflow,
            self.window,
            self.cost()
        )
    }
}

const BATCHES: usize = 32;

/// Mean, variance, and batch-means standard error of the variance.
pub fn moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let b = BATCHES.min(n);
    let size = n / b;
    let se = if b >= 2 && size >= 1 {
        let ests: Vec<f64> = (0..b)
            .map(|k| {
                let chunk = &xs[k * size..(k + 1) * size];
                chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / size as f64
            })
            .collect();
        let m = ests.iter().sum::<f64>() / b as f64;
        let s2 = ests.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (b - 1) as f64;
        (s2 / b as f64).sqrt()
    } else {
        0.0
    };
    (mean, var.max(0.0), se)
}

pub fn summarize(trace: &CapacityTrace, burn_in: f64) -> Result<Metrics> {
    let start = (0..trace.len())
        .find(|&i| trace.time(i) >= burn_in - snap_tol(trace.dt))
        .ok_or(Error::EmptyWindow)?;
    let window = (trace.len() - start) as f64 * trace.dt;
    let (mean_p, var_p, var_p_se) = moments(&trace.p[start..]);
    let (mean_x, var_x, var_x_se) = moments(&trace.x[start..]);
    let before = |v: &[f64]| if start > 0 { v[start - 1] } else { 0.0 };
    let last = |v: &[f64]| v[v.len() - 1];
    Ok(Metrics {
        mean_P: mean_p,
        var_P: var_p,
        var_P_se: var_p_se,
        mean_X: mean_x,
        var_X: var_x,
        var_X_se: var_x_se,
        mean_U_rate: (last(&trace.u_cum) - before(&trace.u_cum)) / window,
        mean_W_rate: (last(&trace.w_cum) - before(&trace.w_cum)) / window,
        total_unmet: trace.total_unmet,
        total_extension: trace.total_extension,
        overflow: trace.overflow,
        window,
    })
}

/// Default burn-in: ten mean sojourn times.
pub fn default_burn_in(jobs: &JobSet) -> f64 {
    if jobs.is_empty() {
        return 0.0;
    }
    10.0 * jobs.jobs.iter().map(|j| j.sojourn).sum::<f64>() / jobs.len() as f64
}

pub fn empirical_ratio(candidate: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::InvalidArgument(format!("baseline cost must be > 0, got {baseline}")));
    }
    Ok(candidate / baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrivalModel, JobRequest, MarkSampler};
    use approx::assert_abs_diff_eq;

    fn one(a: f64, s: f64, t: f64) -> JobSet {
        JobSet::new(vec![JobRequest::new(a, s, t)], a + t + 1.0)
    }

    #[test]
    fn single_exact_job_is_flat() {
        let tr = simulate(&one(0.0, 1.0, 2.0), &PolicyConfig::Exact, 0.01).unwrap();
        for i in 0..tr.len() {
            let want = if tr.time(i) < 2.0 - 1e-9 { 0.5 } else { 0.0 };
            assert_abs_diff_eq!(tr.p[i], want, epsilon = 1e-9);
        }
        assert_eq!(*tr.u_cum.last().unwrap(), 0.0);
        assert_eq!(*tr.w_cum.last().unwrap(), 0.0);
    }

    #[test]
    fn empty_set_gives_zero_trace() {
        let tr = simulate(&JobSet::new(vec![], 5.0), &PolicyConfig::Exact, 1.0).unwrap();
        assert_eq!(tr.len(), 5);
        assert!(tr.p.iter().chain(&tr.x).chain(&tr.u_cum).chain(&tr.w_cum).all(|v| *v == 0.0));
    }

    #[test]
    fn ges_soft_demand_single_job() {
        // closed form: σ̂ = min(Cτ/2, σ) = 2, U = C·(σ − σ̂) = 2
        let js = JobSet::new(vec![JobRequest::new(0.0, 3.0, 2.0).with_costs(2.0, f64::INFINITY)], 3.0);
        let run = simulate_detailed(&js, &PolicyConfig::Ges, &SimOptions::new(1e-3)).unwrap();
        assert_abs_diff_eq!(run.outcomes[0].served, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(*run.trace.u_cum.last().unwrap(), 2.0, epsilon = 1e-9);
        assert_eq!(*run.trace.w_cum.last().unwrap(), 0.0);
    }

    #[test]
    fn ges_soft_deadline_single_job() {
        // √ε = 0.5 < σ/τ = 1: run at 0.5 for τ̂ = 4, W = ε(τ̂ − τ) = 0.25·2
        let js = JobSet::new(vec![JobRequest::new(0.0, 2.0, 2.0).with_costs(10.0, 0.25)], 6.0);
        let run = simulate_detailed(&js, &PolicyConfig::Ges, &SimOptions::new(1e-2)).unwrap();
        assert_abs_diff_eq!(run.outcomes[0].served, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(run.outcomes[0].actual_sojourn.unwrap(), 4.0, epsilon = 1e-6);
        assert_abs_diff_eq!(*run.trace.w_cum.last().unwrap(), 0.5, epsilon = 1e-6);
        assert_eq!(*run.trace.u_cum.last().unwrap(), 0.0);
    }

    #[test]
    fn strict_violation_is_reported() {
        let js = JobSet::new(vec![JobRequest::new(0.0, 2.0, 2.0), JobRequest::new(0.0, 1.0, 1.0)], 3.0);
        let err = simulate(&js, &PolicyConfig::Edf { p: 1.0, mode: crate::policies::Mode::Strict }, 0.1).unwrap_err();
        assert!(matches!(err, Error::StrictViolation { .. }), "{err}");
    }

    #[test]
    fn es_pc_mu_one_matches_exact() {
        let m = ArrivalModel::stationary(1.5, MarkSampler::fixed(1.0, 3.0), 200.0);
        let js = crate::model::sample_arrivals(&m, 3).unwrap();
        let a = simulate(&js, &PolicyConfig::Exact, 0.1).unwrap();
        let b = simulate_es_pc(&js, 0.1, 1.0, Some(2.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn es_pc_two_step_boost() {
        // step 0 uses P̄ itself (no boost); step 1 sees P_prev = 0.75 < P̄ = 2
        let js = JobSet::new(vec![JobRequest::new(0.0, 1.0, 4.0), JobRequest::new(0.0, 1.0, 2.0)], 6.0);
        let dt = 0.5;
        let ex = simulate(&js, &PolicyConfig::Exact, dt).unwrap();
        let pc = simulate_es_pc(&js, dt, 1.5, Some(2.0)).unwrap();
        assert_abs_diff_eq!(pc.p[0], ex.p[0], epsilon = 1e-12);
        assert_abs_diff_eq!(ex.p[0], 0.25 + 0.5, epsilon = 1e-12);
        // after one step both jobs still run at their exact rates; ES-PC multiplies them by 1.5
        assert_abs_diff_eq!(pc.p[1], 1.5 * ex.p[1], epsilon = 1e-12);
    }

    #[test]
    fn summarize_examples() {
        let flat = CapacityTrace {
            dt: 1.0,
            p: vec![2.0; 10],
            x: vec![0.0; 10],
            u_cum: vec![0.0; 10],
            w_cum: vec![0.0; 10],
            ..Default::default()
        };
        let m = summarize(&flat, 0.0).unwrap();
        assert_eq!((m.mean_P, m.var_P), (2.0, 0.0));
        let mut alt = flat.clone();
        alt.p = (0..10).map(|i| (i % 2) as f64).collect();
        let m = summarize(&alt, 0.0).unwrap();
        assert_abs_diff_eq!(m.mean_P, 0.5);
        assert_abs_diff_eq!(m.var_P, 0.25);
        assert_eq!(m.objective(0.0, 1.0, 0.0), m.var_P);
        assert!(matches!(summarize(&alt, 100.0), Err(Error::EmptyWindow)));
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(empirical_ratio(4.0, 2.0).unwrap(), 2.0);
        assert_eq!(empirical_ratio(3.3, 3.3).unwrap(), 1.0);
        assert!(empirical_ratio(1.0, 0.0).is_err());
    }

    #[test]
    fn conservation_and_strict_service() {
        let m = ArrivalModel::grid_ii(0.3, (1.0, 3.0), 2.0, 0.5, 300.0);
        let js = crate::model::sample_arrivals(&m, 21).unwrap();
        for pol in [PolicyConfig::Exact, PolicyConfig::Immediate, PolicyConfig::Delayed, PolicyConfig::EqualService { mode: crate::policies::Mode::Strict, c: 0.3 }] {
            let dt = 0.1;
            let run = simulate_detailed(&js, &pol, &SimOptions::new(dt)).unwrap();
            let area: f64 = run.trace.p.iter().sum::<f64>() * dt;
            let served: f64 = run.outcomes.iter().map(|o| o.served).sum();
            assert!((area - served).abs() <= 1e-9 * served.max(1.0), "{} {area} {served}", pol.name());
            for (o, j) in run.outcomes.iter().zip(&js.jobs) {
                assert!(j.demand - o.served <= dt + 1e-9);
                // σ̂ reached by the deadline
                assert!(o.actual_sojourn.unwrap() <= j.sojourn + 1e-9);
            }
            assert!(run.trace.max_rate <= 1.0);
        }
    }
}
