//! Offline optimum by quadratic programming, the MPC wrapper, and
//! optimality checks.
//!
//! The solver core, [`LoadQp`], handles the shared structure of the offline
//! and fluid problems: blocks of variables `x_b` in [0,1] living on a set of
//! cells, one linear equality per block, and a cost built from the cell
//! loads `L_j = Σ_b m_bj·x_bj`:
//!
//! `f(x) = Σ_j ℓ_j·(α·L_j² + β·Σ_b m_bj·x_bj²)`.

use std::io::Write;

use crate::engine::{snap_tol, step_count, CapacityTrace};
use crate::error::{Error, Result};
use crate::model::JobSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    /// Fixed-step projected gradient with exact per-block projection.
    #[default]
    ProjectedGradient,
    /// Exact minimization over one block at a time (valley filling), cycling over blocks.
    BlockWaterFilling,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub method: Method,
    /// Keep the objective value of every iterate.
    pub record_history: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200_000,
            method: Method::ProjectedGradient,
            record_history: false,
        }
    }
}

impl QpOptions {
    pub fn new(tol: f64, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            ..Default::default()
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub objective: f64,
    pub kkt: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl SolveReport {
    /// A human-readable warning when the tolerance was not reached.
    pub fn warning(&self) -> Option<String> {
        (!self.converged).then(|| {
            format!(
                "solver stopped after {} iterations without reaching tolerance (KKT residual {:.3e})",
                self.iterations, self.kkt
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Block {
    pub first: usize,
    /// m_bj: contribution of x_bj to the load of cell first+j.
    pub load: Vec<f64>,
    /// c_bj: coefficient in the block's equality Σ c_bj x_bj = target.
    pub coef: Vec<f64>,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LoadQp {
    pub cell_len: Vec<f64>,
    pub blocks: Vec<Block>,
    pub alpha: f64,
    pub beta: f64,
}

/// Solve Σ c_j·clamp(a_j ν + b_j, 0, 1) = s for ν (a_j > 0) and return the clamped values.
pub(crate) fn solve_clamped_linear(a: &[f64], b: &[f64], c: &[f64], s: f64) -> Vec<f64> {
    let n = a.len();
    let mut events: Vec<(f64, usize, bool)> = Vec::with_capacity(2 * n);
    for j in 0..n {
        events.push((-b[j] / a[j], j, true));
        events.push(((1.0 - b[j]) / a[j], j, false));
    }
    events.sort_by(|p, q| p.0.total_cmp(&q.0).then(q.2.cmp(&p.2)));
    let (mut slope, mut icpt) = (0.0, 0.0);
    let mut nu = events.last().map(|e| e.0).unwrap_or(0.0);
    for &(v, j, enter) in &events {
        let g = slope * v + icpt;
        if g >= s {
            nu = if slope > 0.0 { ((s - icpt) / slope).min(v) } else { v };
            break;
        }
        if enter {
            slope += c[j] * a[j];
            icpt += c[j] * b[j];
        } else {
            slope -= c[j] * a[j];
            icpt += c[j] - c[j] * b[j];
        }
    }
    (0..n).map(|j| (a[j] * nu + b[j]).clamp(0.0, 1.0)).collect()
}

impl LoadQp {
    pub fn n_cells(&self) -> usize {
        self.cell_len.len()
    }

    pub fn check_feasible(&self) -> Result<()> {
        for (k, b) in self.blocks.iter().enumerate() {
            let cap: f64 = b.coef.iter().sum();
            if b.target > cap * (1.0 + 1e-12) + 1e-12 || b.target < 0.0 {
                return Err(Error::Infeasible {
                    job: k,
                    demand: b.target,
                    window: cap,
                });
            }
        }
        Ok(())
    }

    /// Flat start: each block at a constant fraction of its capacity.
    pub fn flat(&self) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let cap: f64 = b.coef.iter().sum();
                let v = if cap > 0.0 { (b.target / cap).min(1.0) } else { 0.0 };
                vec![v; b.coef.len()]
            })
            .collect()
    }

    pub fn loads(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let mut l = vec![0.0; self.n_cells()];
        for (b, xb) in self.blocks.iter().zip(x) {
            for (j, (&m, &v)) in b.load.iter().zip(xb).enumerate() {
                l[b.first + j] += m * v;
            }
        }
        l
    }

    pub fn objective(&self, x: &[Vec<f64>], loads: &[f64]) -> f64 {
        let mut f = 0.0;
        if self.alpha != 0.0 {
            f += self.alpha * loads.iter().zip(&self.cell_len).map(|(l, len)| l * l * len).sum::<f64>();
        }
        if self.beta != 0.0 {
            for (b, xb) in self.blocks.iter().zip(x) {
                for (j, (&m, &v)) in b.load.iter().zip(xb).enumerate() {
                    f += self.beta * self.cell_len[b.first + j] * m * v * v;
                }
            }
        }
        f
    }

    #[inline]
    fn grad(&self, b: &Block, j: usize, v: f64, loads: &[f64]) -> f64 {
        let cell = b.first + j;
        2.0 * self.cell_len[cell] * b.load[j] * (self.alpha * loads[cell] + self.beta * v)
    }

    /// Largest violation of first-order optimality, in gradient-per-coefficient units,
    /// together with any equality-constraint error.
    pub fn kkt(&self, x: &[Vec<f64>], loads: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (b, xb) in self.blocks.iter().zip(x) {
            let mut hi_lower = f64::NEG_INFINITY; // max q over {interior, at upper bound}
            let mut lo_upper = f64::INFINITY; // min q over {interior, at lower bound}
            let mut served = 0.0;
            for (j, &v) in xb.iter().enumerate() {
                served += b.coef[j] * v;
                let q = self.grad(b, j, v, loads) / b.coef[j];
                if v > 0.0 {
                    hi_lower = hi_lower.max(q);
                }
                if v < 1.0 {
                    lo_upper = lo_upper.min(q);
                }
            }
            if hi_lower > lo_upper {
                worst = worst.max(0.5 * (hi_lower - lo_upper));
            }
            worst = worst.max((served - b.target).abs());
        }
        worst
    }

    fn lipschitz(&self) -> f64 {
        let mut sum_sq = vec![0.0; self.n_cells()];
        let mut max_m = vec![0.0f64; self.n_cells()];
        for b in &self.blocks {
            for (j, &m) in b.load.iter().enumerate() {
                sum_sq[b.first + j] += m * m;
                max_m[b.first + j] = max_m[b.first + j].max(m);
            }
        }
        (0..self.n_cells())
            .map(|j| 2.0 * self.cell_len[j] * (self.alpha * sum_sq[j] + self.beta * max_m[j]))
            .fold(0.0, f64::max)
    }

    fn project(b: &Block, z: &[f64]) -> Vec<f64> {
        solve_clamped_linear(&b.coef, z, &b.coef, b.target)
    }

    fn pg_step(&self, x: &mut [Vec<f64>], loads: &[f64], step: f64) {
        for (b, xb) in self.blocks.iter().zip(x.iter_mut()) {
            let z: Vec<f64> = xb.iter().enumerate().map(|(j, &v)| v - step * self.grad(b, j, v, loads)).collect();
            *xb = Self::project(b, &z);
        }
    }

    fn block_sweep(&self, x: &mut [Vec<f64>], loads: &mut [f64]) {
        let (al, be) = (self.alpha, self.beta);
        for (b, xb) in self.blocks.iter().zip(x.iter_mut()) {
            let n = xb.len();
            if n == 0 || b.load.iter().all(|&m| m * al + be == 0.0 || m == 0.0) {
                continue;
            }
            let mut a = Vec::with_capacity(n);
            let mut bb = Vec::with_capacity(n);
            for j in 0..n {
                let m = b.load[j];
                let cell = b.first + j;
                let q = loads[cell] - m * xb[j];
                let denom = al * m + be;
                a.push(b.coef[j] / (self.cell_len[cell] * m * denom));
                bb.push(-al * q / denom);
            }
            let new = solve_clamped_linear(&a, &bb, &b.coef, b.target);
            for j in 0..n {
                loads[b.first + j] += b.load[j] * (new[j] - xb[j]);
            }
            *xb = new;
        }
    }

    pub fn solve(&self, opts: &QpOptions) -> Result<(Vec<Vec<f64>>, SolveReport)> {
        self.check_feasible()?;
        let mut x = self.flat();
        let mut loads = self.loads(&x);
        let mut f = self.objective(&x, &loads);
        let mut report = SolveReport {
            objective: f,
            kkt: self.kkt(&x, &loads),
            ..Default::default()
        };
        if opts.record_history {
            report.history.push(f);
        }
        let lip = self.lipschitz();
        let step = if lip > 0.0 { 1.0 / lip } else { 0.0 };
        let mut stalled = 0;
        while report.kkt > opts.tol && report.iterations < opts.max_iters && step > 0.0 {
            match opts.method {
                Method::ProjectedGradient => {
                    self.pg_step(&mut x, &loads, step);
                    loads = self.loads(&x);
                }
                Method::BlockWaterFilling => {
                    self.block_sweep(&mut x, &mut loads);
                    // refresh to shed accumulated rounding
                    if report.iterations % 64 == 63 {
                        loads = self.loads(&x);
                    }
                }
            }
            report.iterations += 1;
            let f_new = self.objective(&x, &loads);
            stalled = if f - f_new <= 1e-15 * f.abs().max(1e-300) { stalled + 1 } else { 0 };
            f = f_new;
            report.kkt = self.kkt(&x, &loads);
            if opts.record_history {
                report.history.push(f);
            }
            if stalled >= 50 {
                break;
            }
        }
        report.objective = f;
        report.converged = report.kkt <= opts.tol;
        Ok((x, report))
    }
}

/// Rates per job over the steps its window overlaps.
#[derive(Clone, Debug, PartialEq)]
pub struct RateMatrix {
    pub dt: f64,
    pub n_steps: usize,
    /// First step index of each job's window.
    pub first: Vec<usize>,
    /// Fraction of each window step that lies inside the job's window.
    pub weights: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
    pub demands: Vec<f64>,
}

/// Step indices and overlap fractions of `[start, end)` on the dt grid.
pub(crate) fn window(start: f64, end: f64, dt: f64) -> (usize, Vec<f64>) {
    let first = ((start / dt) + 1e-9).floor().max(0.0) as usize;
    let mut w = Vec::new();
    let mut i = first;
    loop {
        let t0 = i as f64 * dt;
        if t0 >= end - snap_tol(dt) {
            break;
        }
        let lo = t0.max(start);
        let hi = (t0 + dt).min(end);
        w.push(((hi - lo) / dt).clamp(0.0, 1.0));
        i += 1;
    }
    (first, w)
}

impl RateMatrix {
    fn skeleton(jobs: &JobSet, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let mut first = Vec::with_capacity(jobs.len());
        let mut weights = Vec::with_capacity(jobs.len());
        let mut n_steps = step_count(jobs.horizon, dt);
        for (k, j) in jobs.jobs.iter().enumerate() {
            if !(j.demand <= j.sojourn) || j.demand < 0.0 {
                return Err(Error::Infeasible {
                    job: k,
                    demand: j.demand,
                    window: j.sojourn,
                });
            }
            let (f, w) = window(j.arrival, j.deadline(), dt);
            n_steps = n_steps.max(f + w.len());
            first.push(f);
            weights.push(w);
        }
        let rates = weights.iter().map(|w| vec![0.0; w.len()]).collect();
        Ok(Self {
            dt,
            n_steps,
            first,
            weights,
            rates,
            demands: jobs.jobs.iter().map(|j| j.demand).collect(),
        })
    }

    /// Exact Scheduling: every job flat at σ/τ.
    pub fn exact(jobs: &JobSet, dt: f64) -> Result<Self> {
        let mut m = Self::skeleton(jobs, dt)?;
        for (k, j) in jobs.jobs.iter().enumerate() {
            let r = if j.sojourn > 0.0 { j.demand / j.sojourn } else { 0.0 };
            m.rates[k].iter_mut().for_each(|v| *v = r);
        }
        Ok(m)
    }

    pub(crate) fn as_qp(&self) -> LoadQp {
        LoadQp {
            cell_len: vec![self.dt; self.n_steps],
            blocks: self
                .weights
                .iter()
                .enumerate()
                .map(|(k, w)| Block {
                    first: self.first[k],
                    load: w.clone(),
                    coef: w.iter().map(|v| v * self.dt).collect(),
                    target: self.demands[k],
                })
                .collect(),
            alpha: 1.0,
            beta: 0.0,
        }
    }

    /// Average capacity over each step.
    pub fn capacity(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n_steps];
        for k in 0..self.rates.len() {
            for (j, (&r, &w)) in self.rates[k].iter().zip(&self.weights[k]).enumerate() {
                p[self.first[k] + j] += r * w;
            }
        }
        p
    }

    /// Σ P² dt.
    pub fn objective(&self) -> f64 {
        self.capacity().iter().map(|p| p * p * self.dt).sum()
    }

    pub fn served(&self, k: usize) -> f64 {
        self.rates[k].iter().zip(&self.weights[k]).map(|(r, w)| r * w * self.dt).sum()
    }

    /// Capacity trace with X(t) recorded at step starts.
    pub fn to_trace(&self) -> CapacityTrace {
        let p = self.capacity();
        let mut delta = vec![0.0; self.n_steps + 1];
        for k in 0..self.rates.len() {
            // demand appears at the window's first step and drains as served
            delta[self.first[k]] += self.demands[k];
            for (j, (&r, &w)) in self.rates[k].iter().zip(&self.weights[k]).enumerate() {
                delta[self.first[k] + j + 1] -= r * w * self.dt;
            }
        }
        let mut x = Vec::with_capacity(self.n_steps);
        let mut acc = 0.0;
        for d in delta.iter().take(self.n_steps) {
            acc += d;
            x.push(acc.max(0.0));
        }
        let total: f64 = p.iter().sum::<f64>() * self.dt;
        CapacityTrace {
            dt: self.dt,
            x,
            u_cum: vec![0.0; self.n_steps],
            w_cum: vec![0.0; self.n_steps],
            total_served: total,
            max_rate: self.rates.iter().flatten().copied().fold(0.0, f64::max),
            p,
            ..Default::default()
        }
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["job_index", "step_index", "rate"])?;
        for (k, rs) in self.rates.iter().enumerate() {
            for (j, r) in rs.iter().enumerate() {
                w.write_record([k.to_string(), (self.first[k] + j).to_string(), format!("{r}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimize Σ P² over feasible strict schedules.
pub fn solve_offline(jobs: &JobSet, dt: f64, opts: &QpOptions) -> Result<(RateMatrix, SolveReport)> {
    let mut m = RateMatrix::skeleton(jobs, dt)?;
    let (x, report) = m.as_qp().solve(opts)?;
    m.rates = x;
    Ok((m, report))
}

pub fn kkt_residual(rates: &RateMatrix) -> f64 {
    let qp = rates.as_qp();
    let loads = qp.loads(&rates.rates);
    qp.kkt(&rates.rates, &loads)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ValleyViolation {
    /// P is not level over the steps where the job is served strictly inside (0, 1).
    Uneven { job: usize, spread: f64 },
    /// An unused step in the window sits below the job's service level.
    Valley { job: usize, step: usize, p: f64, level: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValleyReport {
    pub violations: Vec<ValleyViolation>,
}

impl ValleyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_valley_filling(rates: &RateMatrix, tol: f64) -> ValleyReport {
    let p = rates.capacity();
    let eps = 1e-12;
    let mut out = ValleyReport::default();
    for (k, rs) in rates.rates.iter().enumerate() {
        let at = |j: usize| p[rates.first[k] + j];
        let interior: Vec<f64> = (0..rs.len()).filter(|&j| rs[j] > eps && rs[j] < 1.0 - eps).map(at).collect();
        if let (Some(lo), Some(hi)) = (
            interior.iter().copied().reduce(f64::min),
            interior.iter().copied().reduce(f64::max),
        ) {
            if hi - lo > tol {
                out.violations.push(ValleyViolation::Uneven { job: k, spread: hi - lo });
            }
        }
        let level = (0..rs.len()).filter(|&j| rs[j] > eps).map(at).fold(f64::NEG_INFINITY, f64::max);
        for j in (0..rs.len()).filter(|&j| rs[j] <= eps) {
            if at(j) < level - tol {
                out.violations.push(ValleyViolation::Valley {
                    job: k,
                    step: rates.first[k] + j,
                    p: at(j),
                    level,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MpcReport {
    pub solves: usize,
    pub worst_kkt: f64,
    pub unconverged: usize,
}

/// Receding-horizon control: whenever the set of present jobs changes, re-solve
/// the offline problem for their remaining demand up to the latest present
/// deadline, then apply the plan one step at a time.
///
/// Between arrivals the previous plan is kept: its tail is optimal for the
/// remaining problem, so re-solving would reproduce it.
pub fn simulate_mpc(jobs: &JobSet, dt: f64, opts: &QpOptions) -> Result<(CapacityTrace, MpcReport)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let n = step_count(jobs.horizon, dt);
    let slack = dt + 1e-9;
    let mut report = MpcReport::default();
    let mut trace = CapacityTrace {
        dt,
        ..Default::default()
    };

    struct Live {
        idx: usize,
        y: f64,
        deadline: f64,
        plan_first: usize,
        plan: Vec<f64>,
        weights: Vec<f64>,
    }
    let mut live: Vec<Live> = Vec::new();
    let mut next = 0;
    for i in 0..n {
        let t = i as f64 * dt;
        let mut changed = false;
        while next < jobs.len() && jobs.jobs[next].arrival <= t + snap_tol(dt) {
            let j = jobs.jobs[next];
            if j.demand > 0.0 {
                live.push(Live {
                    idx: next,
                    y: j.demand,
                    deadline: j.deadline(),
                    plan_first: i,
                    plan: Vec::new(),
                    weights: Vec::new(),
                });
                changed = true;
            }
            next += 1;
        }
        let x_now: f64 = live.iter().map(|l| l.y).sum();

        if changed && !live.is_empty() {
            let blocks: Vec<Block> = live
                .iter()
                .map(|l| {
                    let (f, w) = window(t, l.deadline, dt);
                    debug_assert_eq!(f, i);
                    let coef: Vec<f64> = w.iter().map(|v| v * dt).collect();
                    let cap: f64 = coef.iter().sum();
                    Block {
                        first: f - i,
                        target: l.y.min(cap),
                        load: w,
                        coef,
                    }
                })
                .collect();
            let len = blocks.iter().map(|b| b.first + b.load.len()).max().unwrap_or(0);
            let qp = LoadQp {
                cell_len: vec![dt; len],
                blocks,
                alpha: 1.0,
                beta: 0.0,
            };
            let (x, rep) = qp.solve(opts)?;
            report.solves += 1;
            report.worst_kkt = report.worst_kkt.max(rep.kkt);
            if !rep.converged {
                report.unconverged += 1;
            }
            for ((l, xb), b) in live.iter_mut().zip(x).zip(&qp.blocks) {
                l.plan_first = i;
                l.plan = xb;
                l.weights = b.load.clone();
            }
        }

        let mut served_step = 0.0;
        for l in live.iter_mut() {
            let off = i - l.plan_first;
            if off < l.plan.len() {
                let s = (l.plan[off] * l.weights[off] * dt).min(l.y);
                l.y -= s;
                served_step += s;
                trace.max_rate = trace.max_rate.max(l.plan[off]);
            }
        }
        let t_end = t + dt;
        let mut err = None;
        live.retain(|l| {
            if l.y <= 1e-12 * jobs.jobs[l.idx].demand.max(1.0) {
                return false;
            }
            if l.deadline <= t_end + snap_tol(dt) {
                if l.y > slack {
                    err.get_or_insert(Error::StrictViolation { job: l.idx, remaining: l.y });
                }
                trace.total_unmet += l.y;
                return false;
            }
            true
        });
        if let Some(e) = err {
            return Err(e);
        }
        trace.total_served += served_step;
        trace.p.push(served_step / dt);
        trace.x.push(x_now);
    }
    trace.u_cum = vec![0.0; n];
    trace.w_cum = vec![0.0; n];
    trace.overflow = live.len();
    Ok((trace, report))
}
