//! Stationary cost formulas, moment identities and performance bounds.
//!
//! Every expectation over the mark distribution goes through
//! [`MarkMoments::expect`], which is exact for a degenerate distribution and a
//! Monte Carlo average (with standard error) otherwise.

use crate::error::{Error, Result};
use crate::model::{ArrivalModel, MarkSampler};
use crate::policies::Mode;
use crate::rng::{streams, Stream};

pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimation {
    ClosedForm,
    MonteCarlo { samples: usize, seed: u64 },
    Empirical { samples: usize },
}

/// A mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkMoments {
    /// Λ
    pub lambda: f64,
    pub e_sigma: f64,
    pub e_sigma2: f64,
    pub e_sigma2_over_tau: f64,
    pub e_sigma2_tau: f64,
    pub e_sigma_tau: f64,
    pub e_tau: f64,
    pub method: Estimation,
    pairs: Vec<(f64, f64)>,
}

impl MarkMoments {
    fn from_pairs_with(lambda: f64, pairs: Vec<(f64, f64)>, method: Estimation) -> Self {
        let mut m = Self {
            lambda,
            e_sigma: 0.0,
            e_sigma2: 0.0,
            e_sigma2_over_tau: 0.0,
            e_sigma2_tau: 0.0,
            e_sigma_tau: 0.0,
            e_tau: 0.0,
            method,
            pairs,
        };
        m.e_sigma = m.expect(|s, _| s).mean;
        m.e_sigma2 = m.expect(|s, _| s * s).mean;
        m.e_sigma2_over_tau = m.expect(|s, t| if t > 0.0 { s * s / t } else { 0.0 }).mean;
        m.e_sigma2_tau = m.expect(|s, t| s * s * t).mean;
        m.e_sigma_tau = m.expect(|s, t| s * t).mean;
        m.e_tau = m.expect(|_, t| t).mean;
        m
    }

    /// Every job has the same (σ, τ).
    pub fn degenerate(lambda: f64, sigma: f64, tau: f64) -> Self {
        Self::from_pairs_with(lambda, vec![(sigma, tau)], Estimation::ClosedForm)
    }

    /// Moments of an observed list of (σ, τ) pairs.
    pub fn empirical(lambda: f64, pairs: Vec<(f64, f64)>) -> Self {
        let n = pairs.len();
        Self::from_pairs_with(lambda, pairs, Estimation::Empirical { samples: n })
    }

    /// Closed form when the sampler is degenerate, otherwise `samples` Monte Carlo draws.
    pub fn from_sampler(lambda: f64, marks: &MarkSampler, samples: usize, seed: u64) -> Result<Self> {
        if marks.is_degenerate() {
            let mut rng = Stream::new(seed, streams::MONTE_CARLO);
            let (pair, _) = marks.sample_pair(&mut rng)?;
            return Ok(Self::from_pairs_with(lambda, vec![pair], Estimation::ClosedForm));
        }
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
        }
        let mut rng = Stream::new(seed, streams::MONTE_CARLO);
        let pairs = (0..samples)
            .map(|_| marks.sample_pair(&mut rng).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_pairs_with(lambda, pairs, Estimation::MonteCarlo { samples, seed }))
    }

    pub fn from_model(model: &ArrivalModel, samples: usize, seed: u64) -> Result<Self> {
        Self::from_sampler(model.arrival_rate(), &model.marks(), samples, seed)
    }

    /// E[f(σ, τ)] with its standard error (zero for closed forms).
    pub fn expect(&self, f: impl Fn(f64, f64) -> f64) -> Estimate {
        let n = self.pairs.len();
        if n == 0 {
            return Estimate { mean: 0.0, se: 0.0 };
        }
        let vals: Vec<f64> = self.pairs.iter().map(|&(s, t)| f(s, t)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, se }
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

/// Λ·E[σ̂].
pub fn stationary_mean(m: &MarkMoments, e_sigma_hat: f64) -> f64 {
    m.lambda * e_sigma_hat
}

/// Λ·E[σ²/τ].
pub fn var_exact(m: &MarkMoments) -> f64 {
    m.lambda * m.e_sigma2_over_tau
}

/// Λ·E[σ²τ]/3, the stationary variance of X under Exact Scheduling.
pub fn var_x_exact(m: &MarkMoments) -> f64 {
    m.lambda * m.e_sigma2_tau / 3.0
}

pub fn cost_soft_demand(m: &MarkMoments, c: f64) -> f64 {
    let half = c / 2.0;
    m.lambda
        * m.expect(|s, t| {
            if s / t <= half {
                s * s / t
            } else {
                c * (s - c * t / 4.0)
            }
        })
        .mean
}

pub fn cost_soft_deadline(m: &MarkMoments, eps: f64) -> f64 {
    let r = eps.sqrt();
    m.lambda
        * m.expect(|s, t| {
            if s / t <= r {
                s * s / t
            } else {
                2.0 * r * s - eps * t
            }
        })
        .mean
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Demand met by the deadline.
    Both,
    /// Deadline met, part of the demand dropped.
    UnmetDemand,
    /// Demand met late.
    Extended,
}

/// Per-job outcome of GES started at (σ, τ), before any rate clamping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GesOutcome {
    pub regime: Regime,
    /// σ̂
    pub served: f64,
    /// τ̂
    pub sojourn: f64,
}

impl GesOutcome {
    /// σ̂²/τ̂, the job's contribution to Var(P) per unit arrival rate.
    pub fn variance_term(&self) -> f64 {
        if self.sojourn > 0.0 {
            self.served * self.served / self.sojourn
        } else {
            0.0
        }
    }

    pub fn penalty(&self, sigma: f64, tau: f64, c: f64, eps: f64) -> f64 {
        let mut p = 0.0;
        if self.served < sigma {
            p += c * (sigma - self.served);
        }
        if self.sojourn > tau {
            p += eps * (self.sojourn - tau);
        }
        p
    }
}

pub fn ges_outcome(sigma: f64, tau: f64, c: f64, eps: f64) -> GesOutcome {
    let (half, root) = (c / 2.0, eps.sqrt());
    let r = sigma / tau;
    if r <= half.min(root) {
        GesOutcome {
            regime: Regime::Both,
            served: sigma,
            sojourn: tau,
        }
    } else if half <= root {
        GesOutcome {
            regime: Regime::UnmetDemand,
            served: half * tau,
            sojourn: tau,
        }
    } else {
        GesOutcome {
            regime: Regime::Extended,
            served: sigma,
            sojourn: sigma / root,
        }
    }
}

/// Per-job GES cost σ̂²/τ̂ + C(σ−σ̂) + ε(τ̂−τ).
pub fn ges_pointwise_cost(sigma: f64, tau: f64, c: f64, eps: f64) -> f64 {
    let o = ges_outcome(sigma, tau, c, eps);
    o.variance_term() + o.penalty(sigma, tau, c, eps)
}

/// Λ times the expected per-job GES cost.
pub fn cost_ges(m: &MarkMoments, c: f64, eps: f64) -> f64 {
    m.lambda * m.expect(|s, t| ges_pointwise_cost(s, t, c, eps)).mean
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostTerms {
    pub variance: f64,
    pub unmet: f64,
    pub extension: f64,
}

/// The three parts of [`cost_ges`].
pub fn cost_ges_terms(m: &MarkMoments, c: f64, eps: f64) -> CostTerms {
    let l = m.lambda;
    CostTerms {
        variance: l * m.expect(|s, t| ges_outcome(s, t, c, eps).variance_term()).mean,
        unmet: l
            * m.expect(|s, t| {
                let o = ges_outcome(s, t, c, eps);
                if o.served < s {
                    c * (s - o.served)
                } else {
                    0.0
                }
            })
            .mean,
        extension: l
            * m.expect(|s, t| {
                let o = ges_outcome(s, t, c, eps);
                if o.sojourn > t {
                    eps * (o.sojourn - t)
                } else {
                    0.0
                }
            })
            .mean,
    }
}

/// Closed-form values assume rates below 1; flag thresholds above it.
pub fn threshold_warning(c: f64, eps: f64) -> Option<String> {
    let mut w = Vec::new();
    if c.is_finite() && c / 2.0 > 1.0 {
        w.push(format!("C/2 = {} exceeds the maximum rate 1", c / 2.0));
    }
    if eps.is_finite() && eps.sqrt() > 1.0 {
        w.push(format!("√ε = {} exceeds the maximum rate 1", eps.sqrt()));
    }
    (!w.is_empty()).then(|| format!("{}; simulated rates are clamped, formulas are not", w.join(", ")))
}

/// Λ²·E[σ²]²/(4D): no centralized policy with Var(X) = D does better.
pub fn lower_bound_centralized(m: &MarkMoments, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("D must be > 0, got {d}")));
    }
    Ok(m.lambda * m.lambda * m.e_sigma2 * m.e_sigma2 / (4.0 * d))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactRatioBounds {
    /// 4·E[σ²/τ]·(E[τσ²] + Λ·E[τσ]²)/E[σ²]²
    pub general: f64,
    /// (4/3)·E[σ²/τ]·E[σ²τ]/E[σ²]², against centralized policies with the same Var(X).
    pub same_var_x: f64,
}

pub fn ratio_bound_exact(m: &MarkMoments) -> ExactRatioBounds {
    let e2 = m.e_sigma2 * m.e_sigma2;
    ExactRatioBounds {
        general: 4.0 * m.e_sigma2_over_tau * (m.e_sigma2_tau + m.lambda * m.e_sigma_tau * m.e_sigma_tau) / e2,
        same_var_x: 4.0 / 3.0 * m.e_sigma2_over_tau * m.e_sigma2_tau / e2,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GesRatioBound {
    /// Var(P)/Λ under GES, with the unmet-demand branch written C(√ε − Cτ/4).
    pub alpha: f64,
    /// Var(X)/Λ under GES.
    pub beta: f64,
    /// 4αβ/E[σ²]².
    pub factor: f64,
}

pub fn ratio_bound_ges(m: &MarkMoments, c: f64, eps: f64) -> GesRatioBound {
    let root = eps.sqrt();
    let alpha = m
        .expect(|s, t| match ges_outcome(s, t, c, eps).regime {
            Regime::Both => s * s / t,
            Regime::UnmetDemand => c * (root - c * t / 4.0),
            Regime::Extended => 2.0 * root * s - eps * t,
        })
        .mean;
    let beta = m
        .expect(|s, t| match ges_outcome(s, t, c, eps).regime {
            Regime::Both => s * s * t / 3.0,
            Regime::UnmetDemand => c * c * t * t * t / 12.0 - 0.5 * c * s * t * t + s * s * t,
            Regime::Extended => s * s * s / (3.0 * root),
        })
        .mean;
    GesRatioBound {
        alpha,
        beta,
        factor: 4.0 * alpha * beta / (m.e_sigma2 * m.e_sigma2),
    }
}

/// Extra Var(P) over Exact Scheduling when a fraction `p_unknown` of jobs is
/// served at the fallback rate `c`.
pub fn unknown_degradation(m: &MarkMoments, p_unknown: f64, mode: Mode, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_unknown) || !(c >= 0.0) {
        return Err(Error::InvalidArgument("need p_unknown in [0,1] and c ≥ 0".into()));
    }
    let e = match mode {
        Mode::SoftDemand => m.expect(|s, t| c * c * t.min(s / c) - s * s / t),
        Mode::SoftDeadline => m.expect(|s, t| c * s - s * s / t),
        Mode::Strict => return Err(Error::InvalidArgument("the fallback rule needs a soft mode".into())),
    };
    Ok(p_unknown * e.mean)
}

/// A per-job rate trajectory v(σ, τ, x), x being the time left to the deadline.
pub trait RateShape {
    fn rate(&self, sigma: f64, tau: f64, x: f64) -> f64;
    /// Sorted points covering the support, including both ends; v must be smooth between them.
    fn breakpoints(&self, sigma: f64, tau: f64) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Exact,
    /// Full rate from arrival.
    Immediate,
    /// Full rate for the last σ time units.
    Delayed,
    Ges { c: f64, eps: f64 },
}

impl RateShape for Shape {
    fn rate(&self, sigma: f64, tau: f64, x: f64) -> f64 {
        match *self {
            Shape::Exact => {
                if x > 0.0 && x <= tau {
                    sigma / tau
                } else {
                    0.0
                }
            }
            Shape::Immediate => {
                if x > tau - sigma && x <= tau {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Delayed => {
                if x > 0.0 && x <= sigma {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Ges { c, eps } => {
                let o = ges_outcome(sigma, tau, c, eps);
                let rate = if o.sojourn > 0.0 { o.served / o.sojourn } else { 0.0 };
                if x <= tau && x > tau - o.sojourn {
                    rate
                } else {
                    0.0
                }
            }
        }
    }

    fn breakpoints(&self, sigma: f64, tau: f64) -> Vec<f64> {
        match *self {
            Shape::Exact => vec![0.0, tau],
            Shape::Immediate => vec![tau - sigma, tau],
            Shape::Delayed => vec![0.0, sigma],
            Shape::Ges { c, eps } => {
                let o = ges_outcome(sigma, tau, c, eps);
                vec![tau - o.sojourn, tau]
            }
        }
    }
}

/// A closure-backed shape integrated over `[lo(σ,τ), τ]` split into equal pieces.
pub struct FnShape<F: Fn(f64, f64, f64) -> f64, L: Fn(f64, f64) -> f64> {
    pub v: F,
    pub lower: L,
    pub pieces: usize,
}

impl<F: Fn(f64, f64, f64) -> f64, L: Fn(f64, f64) -> f64> RateShape for FnShape<F, L> {
    fn rate(&self, sigma: f64, tau: f64, x: f64) -> f64 {
        (self.v)(sigma, tau, x)
    }

    fn breakpoints(&self, sigma: f64, tau: f64) -> Vec<f64> {
        let lo = (self.lower)(sigma, tau);
        let n = self.pieces.max(1);
        (0..=n).map(|i| lo + (tau - lo) * i as f64 / n as f64).collect()
    }
}

const GL_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [0.236_926_885_056_189_1, 0.478_628_670_499_366_5, 0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];

/// Five-point Gauss–Legendre on each piece between breakpoints.
fn integrate(f: impl Fn(f64) -> f64, pts: &[f64]) -> f64 {
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        total += half * GL_NODES.iter().zip(&GL_WEIGHTS).map(|(n, wt)| wt * f(mid + half * n)).sum::<f64>();
    }
    total
}

/// Stationary (mean, variance) of P: (Λ·E∫v dx, Λ·E∫v² dx).
pub fn campbell_moments(shape: &dyn RateShape, m: &MarkMoments) -> Result<(f64, f64)> {
    let mean = m.expect(|s, t| integrate(|x| shape.rate(s, t, x), &shape.breakpoints(s, t))).mean;
    let second = m
        .expect(|s, t| {
            integrate(
                |x| {
                    let v = shape.rate(s, t, x);
                    v * v
                },
                &shape.breakpoints(s, t),
            )
        })
        .mean;
    if !(mean.is_finite() && second.is_finite()) {
        return Err(Error::InvalidArgument("rate shape integral is not finite".into()));
    }
    Ok((m.lambda * mean, m.lambda * second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Scalar, Sojourn};
    use approx::assert_abs_diff_eq;

    const INF: f64 = f64::INFINITY;

    fn uniform_marks() -> MarkSampler {
        MarkSampler::new(Scalar::Uniform { lo: 1.0, hi: 2.0 }, Sojourn::Independent(Scalar::Const(4.0)))
    }

    #[test]
    fn mean_examples() {
        assert_eq!(stationary_mean(&MarkMoments::degenerate(2.0, 3.0, 6.0), 3.0), 6.0);
        assert_eq!(stationary_mean(&MarkMoments::degenerate(0.0, 3.0, 6.0), 3.0), 0.0);
    }

    #[test]
    fn var_exact_examples() {
        assert_abs_diff_eq!(var_exact(&MarkMoments::degenerate(2.0, 3.0, 6.0)), 3.0);
        // zero laxity: same as Immediate, Λ·E[σ]
        let m = MarkMoments::degenerate(1.5, 2.0, 2.0);
        assert_abs_diff_eq!(var_exact(&m), 1.5 * 2.0);
        assert_abs_diff_eq!(m.lambda * m.expect(|s, t| s * (t - s) / t).mean, 0.0);
        // σ ~ U[1,2], τ = 4: E[σ²]/4 = 7/12
        let mc = MarkMoments::from_sampler(1.0, &uniform_marks(), 400_000, 5).unwrap();
        let est = mc.expect(|s, t| s * s / t);
        assert!((var_exact(&mc) - 7.0 / 12.0).abs() < 4.0 * est.se, "{} ± {}", var_exact(&mc), est.se);
    }

    #[test]
    fn soft_demand_examples() {
        let m = MarkMoments::degenerate(1.0, 3.0, 2.0);
        assert_abs_diff_eq!(cost_soft_demand(&m, 2.0), 4.0);
        assert_abs_diff_eq!(cost_soft_demand(&m, INF), var_exact(&m));
        assert_abs_diff_eq!(cost_soft_demand(&m, 0.0), 0.0);
    }

    #[test]
    fn soft_deadline_examples() {
        let m = MarkMoments::degenerate(1.0, 3.0, 2.0);
        assert_abs_diff_eq!(cost_soft_deadline(&m, 1.0), 4.0);
        assert_abs_diff_eq!(cost_soft_deadline(&m, INF), var_exact(&m));
        // σ/τ = √ε: both branches give σ²/τ
        let b = MarkMoments::degenerate(1.0, 1.0, 2.0);
        let left = 1.0 / 2.0;
        let right = 2.0 * 0.5 * 1.0 - 0.25 * 2.0;
        assert_abs_diff_eq!(left, right);
        assert_abs_diff_eq!(cost_soft_deadline(&b, 0.25), left);
    }

    #[test]
    fn ges_examples() {
        let m = MarkMoments::degenerate(1.0, 3.0, 2.0);
        assert_abs_diff_eq!(cost_ges(&m, 2.0, 4.0), 4.0);
        for e in [0.1, 1.0, 3.0] {
            assert_abs_diff_eq!(cost_ges(&m, INF, e), cost_soft_deadline(&m, e), epsilon = 1e-12);
        }
        for c in [0.5, 2.0, 5.0] {
            assert_abs_diff_eq!(cost_ges(&m, c, INF), cost_soft_demand(&m, c), epsilon = 1e-12);
        }
    }

    #[test]
    fn limits_on_a_grid() {
        for l in [0.5, 1.0, 3.0] {
            for s in [0.5, 1.0, 2.0] {
                for t in [2.0, 3.0, 7.0] {
                    let m = MarkMoments::degenerate(l, s, t);
                    assert_eq!(cost_ges(&m, INF, INF), var_exact(&m));
                }
            }
        }
    }

    #[test]
    fn lower_bound_examples() {
        let m = MarkMoments::degenerate(1.0, 1.0, 1.0);
        assert_abs_diff_eq!(lower_bound_centralized(&m, 0.25).unwrap(), 1.0);
        assert!(lower_bound_centralized(&m, 1e300).unwrap() < 1e-299);
        assert!(lower_bound_centralized(&m, 0.0).is_err());
    }

    #[test]
    fn exact_ratio_examples() {
        assert_abs_diff_eq!(ratio_bound_exact(&MarkMoments::degenerate(1.0, 1.0, 1.0)).same_var_x, 4.0 / 3.0);
        for (l, t) in [(0.5, 2.0), (2.0, 3.0)] {
            let b = ratio_bound_exact(&MarkMoments::degenerate(l, t, t));
            assert_abs_diff_eq!(b.general, 4.0 * (1.0 + l * t), epsilon = 1e-12);
        }
    }

    #[test]
    fn ges_ratio_examples() {
        for (l, s, t) in [(1.0, 1.0, 2.0), (2.0, 3.0, 5.0)] {
            let m = MarkMoments::degenerate(l, s, t);
            assert_abs_diff_eq!(ratio_bound_ges(&m, INF, INF).factor, ratio_bound_exact(&m).same_var_x, epsilon = 1e-12);
        }
        let m = MarkMoments::degenerate(1.0, 3.0, 2.0);
        let b = ratio_bound_ges(&m, 2.0, 4.0);
        assert_abs_diff_eq!(b.alpha, 2.0);
        // 2²·2³/12 − 2·3·2²/2 + 3²·2 = 8/3 − 12 + 18
        assert_abs_diff_eq!(b.beta, 26.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.factor, 4.0 * 2.0 * (26.0 / 3.0) / 81.0, epsilon = 1e-12);
    }

    #[test]
    fn unknown_examples() {
        let m = MarkMoments::degenerate(1.0, 1.0, 2.0);
        assert_eq!(unknown_degradation(&m, 0.0, Mode::SoftDemand, 0.7).unwrap(), 0.0);
        assert_abs_diff_eq!(unknown_degradation(&m, 0.5, Mode::SoftDemand, 1.0).unwrap(), 0.25);
        assert_abs_diff_eq!(unknown_degradation(&m, 1.0, Mode::SoftDeadline, 0.5).unwrap(), 0.0);
        assert!(unknown_degradation(&m, 0.5, Mode::Strict, 1.0).is_err());
    }

    #[test]
    fn campbell_examples() {
        let m = MarkMoments::from_sampler(1.3, &uniform_marks(), 20_000, 2).unwrap();
        let (mean, var) = campbell_moments(&Shape::Exact, &m).unwrap();
        assert_abs_diff_eq!(mean, m.lambda * m.e_sigma, epsilon = 1e-12);
        assert_abs_diff_eq!(var, var_exact(&m), epsilon = 1e-12);
        for shape in [Shape::Immediate, Shape::Delayed] {
            let (mean, var) = campbell_moments(&shape, &m).unwrap();
            assert_abs_diff_eq!(mean, m.lambda * m.e_sigma, epsilon = 1e-12);
            assert_abs_diff_eq!(var, m.lambda * m.e_sigma, epsilon = 1e-12);
        }
        for (c, e) in [(1.0, INF), (INF, 0.09), (0.8, 0.04), (3.0, 0.3)] {
            let (_, var) = campbell_moments(&Shape::Ges { c, eps: e }, &m).unwrap();
            assert_abs_diff_eq!(var, cost_ges_terms(&m, c, e).variance, epsilon = 1e-12);
        }
    }

    #[test]
    fn closure_shape_matches_builtin() {
        let m = MarkMoments::degenerate(1.0, 1.0, 4.0);
        let f = FnShape {
            v: |s: f64, _t: f64, x: f64| if x > 0.0 && x <= s { 1.0 } else { 0.0 },
            lower: |_s, _t| 0.0,
            pieces: 4,
        };
        let (mean, var) = campbell_moments(&f, &m).unwrap();
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn threshold_warnings() {
        assert!(threshold_warning(1.0, 0.5).is_none());
        assert!(threshold_warning(3.0, 0.5).is_some());
        assert!(threshold_warning(INF, 4.0).is_some());
    }
}
