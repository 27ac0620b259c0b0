//! Fluid instances: job classes with expected arrival mass.
//!
//! A class `(a, σ, τ, λ)` stands for λ expected jobs arriving at `a`. A
//! profile gives each class a piecewise-constant rate on the grid cells;
//! the expected capacity of a cell is `Σ λ·v`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::qp::{Block, LoadQp, QpOptions, SolveReport};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidClass {
    pub arrival: f64,
    pub demand: f64,
    pub sojourn: f64,
    pub mass: f64,
}

impl FluidClass {
    pub fn new(arrival: f64, demand: f64, sojourn: f64, mass: f64) -> Self {
        Self {
            arrival,
            demand,
            sojourn,
            mass,
        }
    }

    pub fn deadline(&self) -> f64 {
        self.arrival + self.sojourn
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluidInstance {
    pub classes: Vec<FluidClass>,
    /// Sorted, distinct breakpoints.
    pub grid: Vec<f64>,
}

const TOUCH: f64 = 1e-12;

impl FluidInstance {
    /// Grid = all arrivals and deadlines plus `refinements`.
    pub fn new(classes: Vec<FluidClass>, refinements: &[f64]) -> Result<Self> {
        for (k, c) in classes.iter().enumerate() {
            if !(c.demand >= 0.0 && c.demand <= c.sojourn && c.mass >= 0.0 && c.arrival.is_finite() && c.sojourn.is_finite() && c.mass.is_finite()) {
                return Err(Error::Infeasible {
                    job: k,
                    demand: c.demand,
                    window: c.sojourn,
                });
            }
        }
        let mut grid: Vec<f64> = classes
            .iter()
            .flat_map(|c| [c.arrival, c.deadline()])
            .chain(refinements.iter().copied())
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() <= TOUCH * b.abs().max(1.0));
        Ok(Self { classes, grid })
    }

    pub fn n_cells(&self) -> usize {
        self.grid.len().saturating_sub(1)
    }

    pub fn cell_len(&self, j: usize) -> f64 {
        self.grid[j + 1] - self.grid[j]
    }

    pub fn span(&self) -> f64 {
        match (self.grid.first(), self.grid.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Cell index range `[lo, hi)` covered by class `k`'s window.
    pub fn window_cells(&self, k: usize) -> (usize, usize) {
        let c = &self.classes[k];
        (self.index_of(c.arrival), self.index_of(c.deadline()))
    }

    fn index_of(&self, t: f64) -> usize {
        self.grid
            .iter()
            .position(|g| (g - t).abs() <= TOUCH * t.abs().max(1.0))
            .expect("class endpoints are grid points")
    }

    fn contained(&self, k: usize, t1: f64, t2: f64) -> bool {
        let c = &self.classes[k];
        c.arrival >= t1 - TOUCH && c.deadline() <= t2 + TOUCH
    }

    pub fn read_csv(reader: impl Read, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut classes = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let mut v = [0.0; 4];
            for (i, slot) in v.iter_mut().enumerate() {
                let s = rec.get(i).unwrap_or("");
                *slot = s.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("bad number {s:?} in column {}", i + 1),
                })?;
            }
            classes.push(FluidClass::new(v[0], v[1], v[2], v[3]));
        }
        Self::new(classes, &[])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassRateProfiles {
    pub grid: Vec<f64>,
    pub masses: Vec<f64>,
    /// rates[k][j]: class k on cell j (zero outside its window).
    pub rates: Vec<Vec<f64>>,
}

impl ClassRateProfiles {
    fn zeros(inst: &FluidInstance) -> Self {
        Self {
            grid: inst.grid.clone(),
            masses: inst.classes.iter().map(|c| c.mass).collect(),
            rates: vec![vec![0.0; inst.n_cells()]; inst.classes.len()],
        }
    }

    /// Every class flat at σ/τ.
    pub fn exact(inst: &FluidInstance) -> Self {
        let mut p = Self::zeros(inst);
        for k in 0..inst.classes.len() {
            let c = inst.classes[k];
            let (lo, hi) = inst.window_cells(k);
            let r = if c.sojourn > 0.0 { c.demand / c.sojourn } else { 0.0 };
            p.rates[k][lo..hi].iter_mut().for_each(|v| *v = r);
        }
        p
    }

    fn len(&self, j: usize) -> f64 {
        self.grid[j + 1] - self.grid[j]
    }

    /// E[P] per cell.
    pub fn expected_capacity(&self) -> Vec<f64> {
        let n = self.grid.len().saturating_sub(1);
        let mut e = vec![0.0; n];
        for (m, r) in self.masses.iter().zip(&self.rates) {
            for j in 0..n {
                e[j] += m * r[j];
            }
        }
        e
    }

    /// ∫ α·E[P]² + β·Σ λ·v² over the grid.
    pub fn objective(&self, alpha: f64, beta: f64) -> f64 {
        let e = self.expected_capacity();
        let mut f = 0.0;
        for (j, ej) in e.iter().enumerate() {
            let var: f64 = self.masses.iter().zip(&self.rates).map(|(m, r)| m * r[j] * r[j]).sum();
            f += (alpha * ej * ej + beta * var) * self.len(j);
        }
        f
    }

    /// Objective divided by the grid span.
    pub fn time_average(&self, alpha: f64, beta: f64) -> f64 {
        let span = self.grid[self.grid.len() - 1] - self.grid[0];
        self.objective(alpha, beta) / span
    }

    pub fn served(&self, k: usize) -> f64 {
        self.rates[k].iter().enumerate().map(|(j, r)| r * self.len(j)).sum()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["class_index", "cell_start", "cell_end", "rate"])?;
        for (k, r) in self.rates.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                if *v != 0.0 {
                    w.write_record([k.to_string(), format!("{}", self.grid[j]), format!("{}", self.grid[j + 1]), format!("{v}")])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Mass-weighted demand fully inside `[t1, t2]` per unit length.
pub fn intensity(inst: &FluidInstance, t1: f64, t2: f64) -> Result<f64> {
    if !(t2 > t1) {
        return Err(Error::InvalidArgument(format!("need t2 > t1, got [{t1}, {t2}]")));
    }
    let w: f64 = (0..inst.classes.len())
        .filter(|&k| inst.contained(k, t1, t2))
        .map(|k| inst.classes[k].mass * inst.classes[k].demand)
        .sum();
    Ok(w / (t2 - t1))
}

/// Interval with the largest intensity over grid-point pairs; ties go to
/// the earliest start, then the shortest length.
pub fn max_intensity_interval(inst: &FluidInstance) -> Result<(f64, f64, f64)> {
    if !inst.classes.iter().any(|c| c.mass > 0.0) {
        return Err(Error::InvalidArgument("instance has no class with positive mass".into()));
    }
    let live = vec![true; inst.classes.len()];
    let claimed = vec![false; inst.n_cells()];
    let (i1, i2, level) = densest(inst, &live, &claimed)?.expect("a class with mass exists");
    Ok((inst.grid[i1], inst.grid[i2], level))
}

fn better(level: f64, best: f64) -> bool {
    level > best + 1e-12 * best.abs().max(1.0)
}

/// Densest interval over unclaimed time among live classes, as grid indices.
fn densest(inst: &FluidInstance, live: &[bool], claimed: &[bool]) -> Result<Option<(usize, usize, f64)>> {
    let g = &inst.grid;
    let mut best: Option<(usize, usize, f64)> = None;
    for i1 in 0..g.len() {
        let mut free = 0.0;
        for i2 in i1 + 1..g.len() {
            if !claimed[i2 - 1] {
                free += g[i2] - g[i2 - 1];
            }
            let mut w = 0.0;
            let mut any = false;
            for k in 0..inst.classes.len() {
                if live[k] && inst.classes[k].mass > 0.0 && inst.contained(k, g[i1], g[i2]) {
                    w += inst.classes[k].mass * inst.classes[k].demand;
                    any = true;
                }
            }
            if !any {
                continue;
            }
            if free <= 0.0 {
                if w > 0.0 {
                    let k = (0..inst.classes.len())
                        .find(|&k| live[k] && inst.classes[k].mass > 0.0 && inst.contained(k, g[i1], g[i2]))
                        .unwrap();
                    return Err(Error::Stranded {
                        class: k,
                        t1: g[i1],
                        t2: g[i2],
                        reason: "its whole window is already claimed".into(),
                    });
                }
                continue;
            }
            let level = w / free;
            if best.is_none_or(|b| better(level, b.2)) {
                best = Some((i1, i2, level));
            }
        }
    }
    Ok(best)
}

/// Critical-interval scheduling of the expected capacity.
///
/// Each round takes the densest interval of still-unclaimed time, serves
/// the classes it contains so that E[P] sits at that density on its free
/// cells (earliest deadline first, sweeping cells left to right, each class
/// limited to rate 1), then claims those cells so no other class may use
/// them.
pub fn run_maxstab(inst: &FluidInstance) -> Result<ClassRateProfiles> {
    let nk = inst.classes.len();
    let mut prof = ClassRateProfiles::zeros(inst);
    let mut live: Vec<bool> = inst.classes.iter().map(|c| c.mass > 0.0).collect();
    let mut claimed = vec![false; inst.n_cells()];

    // massless classes do not load the system; give them their exact profile
    let exact = ClassRateProfiles::exact(inst);
    for k in 0..nk {
        if !live[k] {
            prof.rates[k] = exact.rates[k].clone();
        }
    }

    while live.iter().any(|&l| l) {
        let Some((i1, i2, level)) = densest(inst, &live, &claimed)? else {
            break;
        };
        let (t1, t2) = (inst.grid[i1], inst.grid[i2]);
        let members: Vec<usize> = (0..nk).filter(|&k| live[k] && inst.contained(k, t1, t2)).collect();
        let mut work: Vec<f64> = members.iter().map(|&k| inst.classes[k].mass * inst.classes[k].demand).collect();
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&p, &q| {
            let (a, b) = (&inst.classes[members[p]], &inst.classes[members[q]]);
            a.deadline().total_cmp(&b.deadline()).then(a.arrival.total_cmp(&b.arrival)).then(p.cmp(&q))
        });
        for j in i1..i2 {
            if claimed[j] {
                continue;
            }
            let len = inst.cell_len(j);
            let mut need = level * len;
            for &p in &order {
                if need <= 0.0 {
                    break;
                }
                let k = members[p];
                let (lo, hi) = inst.window_cells(k);
                if j < lo || j >= hi || work[p] <= 0.0 {
                    continue;
                }
                let m = inst.classes[k].mass;
                let give = work[p].min(need).min(m * len);
                prof.rates[k][j] = give / (m * len);
                work[p] -= give;
                need -= give;
            }
            claimed[j] = true;
        }
        for (p, &k) in members.iter().enumerate() {
            let total = inst.classes[k].mass * inst.classes[k].demand;
            if work[p] > 1e-9 * total.max(1.0) {
                return Err(Error::Stranded {
                    class: k,
                    t1,
                    t2,
                    reason: format!("{} expected work left after filling the interval (rate cap binds)", work[p]),
                });
            }
            live[k] = false;
        }
    }
    Ok(prof)
}

fn fluid_qp(inst: &FluidInstance, alpha: f64, beta: f64) -> LoadQp {
    let cell_len: Vec<f64> = (0..inst.n_cells()).map(|j| inst.cell_len(j)).collect();
    let blocks = (0..inst.classes.len())
        .map(|k| {
            let c = inst.classes[k];
            let (lo, hi) = inst.window_cells(k);
            Block {
                first: lo,
                load: vec![c.mass; hi - lo],
                coef: cell_len[lo..hi].to_vec(),
                target: c.demand,
            }
        })
        .collect();
    LoadQp {
        cell_len,
        blocks,
        alpha,
        beta,
    }
}

/// Minimize ∫ α·E[P]² + β·Σ λ·v² over feasible class profiles.
pub fn solve_fluid_qp(inst: &FluidInstance, alpha: f64, beta: f64, opts: &QpOptions) -> Result<(ClassRateProfiles, SolveReport)> {
    if !(alpha >= 0.0 && beta >= 0.0) || alpha + beta == 0.0 {
        return Err(Error::InvalidArgument("α, β must be ≥ 0 and not both zero".into()));
    }
    let qp = fluid_qp(inst, alpha, beta);
    let (x, report) = qp.solve(opts)?;
    let mut prof = ClassRateProfiles::zeros(inst);
    for (k, xb) in x.into_iter().enumerate() {
        let lo = qp.blocks[k].first;
        prof.rates[k][lo..lo + xb.len()].copy_from_slice(&xb);
    }
    Ok((prof, report))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParetoViolation {
    /// α·E[P] + β·v is not constant over the cells where the class is served.
    Uneven { class: usize, spread: f64 },
    /// An unserved cell has α·E[P] below the served level.
    Valley { class: usize, cell: usize, value: f64, level: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParetoReport {
    pub violations: Vec<ParetoViolation>,
}

impl ParetoReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_pareto_conditions(inst: &FluidInstance, prof: &ClassRateProfiles, alpha: f64, beta: f64, tol: f64) -> ParetoReport {
    let e = prof.expected_capacity();
    let mut out = ParetoReport::default();
    for k in 0..inst.classes.len() {
        if inst.classes[k].mass <= 0.0 {
            continue;
        }
        let (lo, hi) = inst.window_cells(k);
        let r = &prof.rates[k];
        let served: Vec<f64> = (lo..hi).filter(|&j| r[j] > 0.0).map(|j| alpha * e[j] + beta * r[j]).collect();
        let (Some(min), Some(max)) = (served.iter().copied().reduce(f64::min), served.iter().copied().reduce(f64::max)) else {
            continue;
        };
        if max - min > tol {
            out.violations.push(ParetoViolation::Uneven { class: k, spread: max - min });
        }
        for j in (lo..hi).filter(|&j| r[j] <= 0.0) {
            if alpha * e[j] < max - tol {
                out.violations.push(ParetoViolation::Valley {
                    class: k,
                    cell: j,
                    value: alpha * e[j],
                    level: max,
                });
            }
        }
    }
    out
}
