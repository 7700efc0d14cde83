use cascade_core::beliefs::{
    absorption_side, likelihoods_at, posterior_down, posterior_up, signal_llr, update_llr, Belief,
    Review,
};
use cascade_core::engine::run_validated;
use cascade_core::equilibrium::{solve_on_table, PriceGrid, SalesTable, SolveSettings};
use cascade_core::welfare::{per_arrival_welfare, pigouvian_subsidy, value_function_solve};
use cascade_core::*;
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (
        0.51f64..0.99,
        0.0f64..0.4,
        0.1f64..0.9,
        0.0f64..1.0,
        0.0f64..1.0,
        0.05f64..0.95,
    )
        .prop_map(|(q, kappa, phi, pa, pb, eta0)| ModelParams {
            q,
            kappa,
            first_visit_prob: phi,
            p_a: pa,
            p_b: pb,
            eta0,
            ..ModelParams::default()
        })
}

fn expected_next_eta(eta: f64, p: &ModelParams) -> f64 {
    let b = Belief::from_eta(eta);
    let lik = likelihoods_at(b, p, p.kappa);
    let mut e = 0.0;
    for firm in [Firm::A, Firm::B] {
        let prob = lik.mixture(firm, eta);
        if prob == 0.0 {
            continue;
        }
        let l = lik.of(firm);
        e += prob * Belief::from_llr(update_llr(b.llr, l[0], l[1], firm).unwrap()).eta();
    }
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn public_belief_is_a_martingale(p in params_strategy(), eta in 0.001f64..0.999) {
        prop_assert!((expected_next_eta(eta, &p) - eta).abs() <= 1e-12);
    }

    #[test]
    fn reviews_preserve_the_martingale(eta in 0.001f64..0.999, r in 0.51f64..0.99) {
        // P(review favours A) = η·r + (1−η)(1−r) under either product
        let b = Belief::from_eta(eta);
        let p_fav_a = eta * r + (1.0 - eta) * (1.0 - r);
        let shift = r.ln() - (1.0 - r).ln();
        let up = Belief::from_llr(b.llr + shift).eta();
        let down = Belief::from_llr(b.llr - shift).eta();
        prop_assert!((p_fav_a * up + (1.0 - p_fav_a) * down - eta).abs() <= 1e-12);
        let rev = Review { product: Firm::B, positive: false };
        prop_assert_eq!(rev.favours(), Firm::A);
    }

    #[test]
    fn signals_move_beliefs_in_their_direction(eta in 0.0f64..=1.0, q in 0.51f64..0.99) {
        let up = posterior_up(eta, q).unwrap();
        let down = posterior_down(eta, q).unwrap();
        prop_assert!(down <= eta + 1e-15 && eta <= up + 1e-15);
        prop_assert!((0.0..=1.0).contains(&up) && (0.0..=1.0).contains(&down));
    }

    #[test]
    fn likelihoods_are_probabilities(p in params_strategy(), llr in -8.0f64..8.0) {
        let lik = likelihoods_at(Belief::from_llr(llr), &p, p.kappa);
        for s in 0..2 {
            prop_assert!((lik.buy_a[s] + lik.buy_b[s] - 1.0).abs() < 1e-12);
            prop_assert!(lik.search[s] >= 0.0 && lik.search[s] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn label_mirror_matches(p in params_strategy(), llr in -6.0f64..6.0) {
        let m = p.mirrored();
        let a = likelihoods_at(Belief::from_llr(llr), &p, p.kappa);
        let b = likelihoods_at(Belief::from_llr(-llr), &m, m.kappa);
        // choices mirror exactly; visit weights 1 − (1 − φ) differ from φ by an ulp
        prop_assert_eq!(a.buy_a_given_visit[0][0], 1.0 - b.buy_a_given_visit[1][1]);
        prop_assert!((a.buy_a[0] - b.buy_b[1]).abs() <= 1e-15);
        prop_assert!((a.buy_a[1] - b.buy_b[0]).abs() <= 1e-15);
        prop_assert!((a.search[0] - b.search[1]).abs() <= 1e-15);
        let sa = absorption_side(Belief::from_llr(llr), &p, p.kappa, AbsorptionRule::LikelihoodFlat);
        let sb = absorption_side(Belief::from_llr(-llr), &m, m.kappa, AbsorptionRule::LikelihoodFlat);
        prop_assert_eq!(sa.is_some(), sb.is_some());
    }

    #[test]
    fn flat_likelihoods_freeze_the_belief(p in params_strategy(), llr in -6.0f64..6.0) {
        let b = Belief::from_llr(llr);
        let lik = likelihoods_at(b, &p, p.kappa);
        if lik.is_flat() && lik.visit_weight.iter().all(|&w| w > 0.0) {
            for firm in [Firm::A, Firm::B] {
                let l = lik.of(firm);
                if l[0] > 0.0 {
                    let next = update_llr(llr, l[0], l[1], firm).unwrap();
                    prop_assert!((next - llr).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn visit_symmetric_bounds_mirror_at_equal_prices(q in 0.51f64..0.99, kappa in 0.0f64..0.4, p in 0.0f64..1.0) {
        let params = ModelParams::baseline(q, kappa).with_prices(p, p);
        if let Ok(b) = cascade_bounds(&params, BoundaryVariant::VisitSymmetric) {
            prop_assert!((b.eta_under - (1.0 - b.eta_bar)).abs() <= 1e-12);
            prop_assert_eq!(b.llr_under, -b.llr_bar);
        }
    }

    #[test]
    fn bounds_nest_around_the_cutoff(q in 0.51f64..0.99, kappa in 0.0f64..0.45) {
        let params = ModelParams::baseline(q, kappa);
        let b = cascade_bounds(&params, BoundaryVariant::SingleThreshold).unwrap();
        let s = eta_star(0.0, kappa, 1.0);
        prop_assert!(b.eta_under <= s + 1e-15 && s <= b.eta_bar + 1e-15);
        // the bar is exactly where a bad signal lands on the cutoff
        prop_assert!((posterior_down(b.eta_bar, q).unwrap() - s).abs() < 1e-12);
        prop_assert!((posterior_up(b.eta_under, q).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn signal_llr_is_odd_in_q(q in 0.51f64..0.99) {
        prop_assert_eq!(signal_llr(q), -signal_llr(1.0 - q));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn welfare_rises_with_precision_and_falls_with_cost(
        q in 0.52f64..0.97, kappa in 0.0f64..0.35, eta in 0.01f64..0.99,
    ) {
        let p = ModelParams::baseline(q, kappa);
        let w = per_arrival_welfare(eta, &p);
        let wq = per_arrival_welfare(eta, &ModelParams::baseline(q + 0.01, kappa));
        let wk = per_arrival_welfare(eta, &ModelParams::baseline(q, kappa + 0.01));
        prop_assert!(wq - w >= -1e-12);
        prop_assert!(wk - w <= 1e-12);
    }

    #[test]
    fn label_swap_coupling_mirrors_whole_runs(p in params_strategy(), seed in any::<u64>(), idx in 0u64..1000) {
        let mut a = RunConfig::new(p.clone(), seed);
        a.max_arrivals = 5_000;
        let mut b = RunConfig::new(p.mirrored(), seed);
        b.max_arrivals = 5_000;
        b.label_swap = true;
        let x = run_validated(&a, idx);
        let y = run_validated(&b, idx);
        let swapped = match x.absorbed_side {
            AbsorbedSide::Up => AbsorbedSide::Down,
            AbsorbedSide::Down => AbsorbedSide::Up,
            AbsorbedSide::Censored => AbsorbedSide::Censored,
        };
        prop_assert_eq!(y.absorbed_side, swapped);
        prop_assert_eq!(y.true_state, x.true_state.swapped());
        prop_assert_eq!(y.wrong, x.wrong);
        prop_assert_eq!((y.sales_a, y.sales_b), (x.sales_b, x.sales_a));
        prop_assert_eq!(y.searches, x.searches);
        prop_assert_eq!(y.calendar_time, x.calendar_time);
        prop_assert!((y.final_belief.llr + x.final_belief.llr).abs() <= 1e-9);
    }

    #[test]
    fn lambda_only_rescales_time(p in params_strategy(), seed in any::<u64>(), idx in 0u64..1000, lam in 0.25f64..8.0) {
        let a = RunConfig::new(p.clone(), seed);
        let b = RunConfig::new(ModelParams { lambda_rate: lam, ..p }, seed);
        let x = run_validated(&a, idx);
        let y = run_validated(&b, idx);
        prop_assert_eq!(x.absorbed_side, y.absorbed_side);
        prop_assert_eq!(x.arrivals_to_absorption, y.arrivals_to_absorption);
        prop_assert_eq!(x.welfare, y.welfare);
        prop_assert!((y.calendar_time * lam - x.calendar_time).abs() <= 1e-12 * x.calendar_time.max(1.0));
    }

    #[test]
    fn relaxed_updates_keep_a_probability_vector(
        means in proptest::collection::vec(0.0f64..5.0, 21), tau in 0.005f64..0.2, rho in 0.05f64..1.0,
    ) {
        // synthetic sales table on an 11-point grid
        let grid = PriceGrid::new(1.0, 0.1).unwrap();
        let n = grid.len();
        let mut table = SalesTable {
            n,
            runs: 100,
            mean: [means.clone(), means.iter().rev().cloned().collect()],
            var: [vec![1.0; 2 * n - 1], vec![1.0; 2 * n - 1]],
            censored: 0,
        };
        table.mean[1] = means.iter().rev().cloned().collect();
        let settings = SolveSettings { tau, rho, max_iters: 50, ..SolveSettings::default() };
        let r = solve_on_table(&ModelParams::default(), &grid, &settings, &table).unwrap();
        prop_assert!(r.strategy.validate().is_ok());
        prop_assert!(r.strategy.mass.iter().all(|&m| (0.0..=1.0).contains(&m)));
        prop_assert!(r.mean_price >= 0.0 && r.mean_price <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn subsidy_stays_within_zero_and_kappa(q in 0.55f64..0.9, kappa in 0.0f64..0.3) {
        let p = ModelParams::baseline(q, kappa);
        let v = value_function_solve(&p, 401, 1e-10, 100_000).unwrap();
        let s = pigouvian_subsidy(&v, &p);
        for (i, &x) in s.s_values.iter().enumerate() {
            prop_assert!((0.0..=kappa).contains(&x));
            if v.absorbing[i] {
                prop_assert_eq!(x, 0.0);
            }
        }
        // one more Bellman sweep moves nothing by more than the tolerance
        let next = v.bellman_step();
        for (a, b) in next.iter().zip(&v.values) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
