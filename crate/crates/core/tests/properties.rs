//! Property checks that cut across modules: engine invariants on random job
//! sets, GES pointwise optimality against a brute-force grid, offline QP
//! optimality conditions and the fluid construction's Pareto conditions.

use proptest::prelude::*;
use varsched::analytics::{ges_outcome, ges_pointwise_cost, ratio_bound_exact, MarkMoments};
use varsched::engine::summarize;
use varsched::fluid::{check_pareto_conditions, run_maxstab, FluidClass, FluidInstance};
use varsched::model::sample_arrivals;
use varsched::qp::{check_valley_filling, kkt_residual, solve_offline};
use varsched::{simulate, simulate_detailed, ArrivalModel, Error, JobRequest, JobSet, Method, Mode, PolicyConfig, QpOptions, RateMatrix, SimOptions};

fn job() -> impl Strategy<Value = JobRequest> {
    (0.0..10.0f64, 0.1..5.0f64, 0.0..1.0f64, 0.1..3.0f64, 0.05..2.0f64)
        .prop_map(|(a, tau, frac, c, e)| JobRequest::new(a, frac * tau, tau).with_costs(c, e))
}

fn jobset(max: usize) -> impl Strategy<Value = JobSet> {
    proptest::collection::vec(job(), 0..max).prop_map(|jobs| JobSet::new(jobs, 30.0))
}

fn policy() -> impl Strategy<Value = PolicyConfig> {
    let mode = prop_oneof![Just(Mode::SoftDemand), Just(Mode::SoftDeadline)];
    prop_oneof![
        Just(PolicyConfig::Exact),
        Just(PolicyConfig::Immediate),
        Just(PolicyConfig::Delayed),
        Just(PolicyConfig::Ges),
        (0.0..1.0f64, mode.clone()).prop_map(|(c, mode)| PolicyConfig::EqualService { mode, c }),
        (0.5..4.0f64, mode.clone()).prop_map(|(p, mode)| PolicyConfig::Edf { p, mode }),
        (0.5..4.0f64, mode.clone()).prop_map(|(p, mode)| PolicyConfig::Llf { p, mode }),
        (0.5..4.0f64, mode).prop_map(|(p, mode)| PolicyConfig::FairSharing { p, mode }),
        (1.0..2.0f64).prop_map(|mu| PolicyConfig::EsPc { mu, p_bar: None }),
    ]
}

fn is_strict(p: &PolicyConfig) -> bool {
    matches!(p, PolicyConfig::Exact | PolicyConfig::Immediate | PolicyConfig::Delayed | PolicyConfig::EsPc { .. })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn engine_conserves_work_and_bounds_rates(jobs in jobset(10), pol in policy(), dt in prop_oneof![Just(0.05), Just(0.1), Just(0.25)]) {
        let run = simulate_detailed(&jobs, &pol, &SimOptions::new(dt)).unwrap();
        let tr = &run.trace;
        prop_assert!(tr.max_rate <= 1.0 + 1e-12);
        prop_assert!(tr.p.iter().all(|&p| (0.0..=jobs.len() as f64 + 1e-9).contains(&p)));
        let served: f64 = run.outcomes.iter().map(|o| o.served).sum();
        let from_p: f64 = tr.p.iter().sum::<f64>() * dt;
        prop_assert!((served - from_p).abs() <= 1e-9 * (1.0 + served));
        prop_assert!((tr.total_served - served).abs() <= 1e-9 * (1.0 + served));
        for (o, j) in run.outcomes.iter().zip(&jobs.jobs) {
            prop_assert!(o.served <= j.demand + 1e-9);
            prop_assert!(o.unmet >= 0.0 && o.extension >= 0.0);
            prop_assert!(o.unmet == 0.0 || o.extension == 0.0, "a job paid both penalties");
            if is_strict(&pol) {
                prop_assert!(j.demand - o.served <= dt + 1e-9);
                prop_assert_eq!(o.extension, 0.0);
            }
        }
        // U and W cumulative penalties only grow
        prop_assert!(tr.u_cum.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(tr.w_cum.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn ges_pair_minimizes_pointwise_cost(sigma in 0.1..4.0f64, frac in 0.05..1.0f64, c in 0.0..2.0f64, eps in 0.01..1.0f64) {
        let tau = sigma / frac;
        let o = ges_outcome(sigma, tau, c, eps);
        let cost = |s: f64, t: f64| s * s / t + c * (sigma - s) + eps * (t - tau);
        let ges = ges_pointwise_cost(sigma, tau, c, eps);
        prop_assert!((cost(o.served, o.sojourn) - ges).abs() <= 1e-9 * (1.0 + ges.abs()));
        prop_assert!(o.served <= sigma + 1e-12 && o.sojourn >= tau - 1e-12);

        let n = 300;
        let t_hi = 3.0 * sigma / eps.sqrt() + tau;
        let (hs, ht) = (sigma / n as f64, (t_hi - tau) / n as f64);
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                best = best.min(cost(i as f64 * hs, tau + j as f64 * ht));
            }
        }
        // GES is never beaten by the grid, and the grid gets within a
        // Lipschitz half-cell of it (σ̂/τ̂ ≤ 1 on this domain).
        let slack = (2.0 + c) * hs + (1.0 + eps) * ht;
        prop_assert!(ges <= best + 1e-9, "ges {} grid {}", ges, best);
        prop_assert!(best - ges <= slack, "ges {} grid {} slack {}", ges, best, slack);
    }

    #[test]
    fn offline_qp_meets_optimality_conditions(jobs in jobset(6)) {
        let opts = QpOptions::new(1e-10, 200_000).with_method(Method::BlockWaterFilling);
        let (rates, report) = solve_offline(&jobs, 0.5, &opts).unwrap();
        prop_assert!(report.converged);
        prop_assert!(kkt_residual(&rates) <= 1e-6);
        let exact = RateMatrix::exact(&jobs, 0.5).unwrap();
        prop_assert!(rates.objective() <= exact.objective() + 1e-9);
        for (k, j) in jobs.jobs.iter().enumerate() {
            prop_assert!((rates.served(k) - j.demand).abs() <= 1e-6 * (1.0 + j.demand));
        }
        let box_free = rates.rates.iter().flatten().all(|&r| r < 1.0 - 1e-9);
        if box_free {
            prop_assert!(check_valley_filling(&rates, 1e-5).passed());
        }
    }

    #[test]
    fn maxstab_meets_pareto_conditions(classes in proptest::collection::vec((0.0..10.0f64, 1.0..5.0f64, 0.05..0.4f64, 0.5..2.0f64), 1..6)) {
        let inst = FluidInstance::new(
            classes.iter().map(|&(a, tau, f, m)| FluidClass::new(a, f * tau, tau, m)).collect(),
            &[],
        ).unwrap();
        match run_maxstab(&inst) {
            // cap-bound draws are outside the construction's domain
            Err(Error::Stranded { .. }) => {}
            Err(e) => prop_assert!(false, "{}", e),
            Ok(prof) => {
                prop_assert!(check_pareto_conditions(&inst, &prof, 1.0, 0.0, 1e-6).passed());
                for (k, c) in inst.classes.iter().enumerate() {
                    prop_assert!((prof.served(k) - c.demand).abs() <= 1e-9 * (1.0 + c.demand));
                    prop_assert!(prof.rates[k].iter().all(|&r| (-1e-12..=1.0 + 1e-12).contains(&r)));
                }
            }
        }
    }
}

#[test]
fn exact_stays_within_ratio_bound_of_offline() {
    let model = ArrivalModel::grid_ii(0.2, (10.0, 20.0), 2.0, 1.0, 400.0);
    let m = MarkMoments::from_model(&model, 200_000, 3).unwrap();
    let bound = ratio_bound_exact(&m).general;
    let opts = QpOptions::new(1e-9, 200_000).with_method(Method::BlockWaterFilling);
    let (mut exact, mut offline) = (0.0, 0.0);
    for seed in 0..20 {
        let jobs = sample_arrivals(&model, seed).unwrap();
        let burn = 40.0;
        exact += summarize(&simulate(&jobs, &PolicyConfig::Exact, 1.0).unwrap(), burn).unwrap().var_P;
        let (rates, _) = solve_offline(&jobs, 1.0, &opts).unwrap();
        offline += summarize(&rates.to_trace(), burn).unwrap().var_P;
    }
    assert!(offline <= exact, "offline {offline} exact {exact}");
    assert!(exact <= bound * offline, "exact {exact} bound {bound} offline {offline}");
}
