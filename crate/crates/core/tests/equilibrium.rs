mod common;

use approx::assert_abs_diff_eq;
use dynmatch::analytic::k_decentralized;
use dynmatch::equilibrium::*;
use dynmatch::{Action, Error, MatchRule, Quality, State};
use proptest::prelude::*;

use common::{arb_market, thomas_waiting_costs, market, reference};
use Quality::{H, L};

/// Market with a deep equilibrium queue and long L-type holdouts.
fn holdout_market() -> dynmatch::MarketParams {
    market(0.3, 0.7, 0.9, 1.0, (1000.0, 600.0, 400.0, 0.0))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

#[test]
fn reference_waiting_cost() {
    let m = reference();
    let w = waiting_cost_profile(&m).unwrap();
    assert_eq!(w.k_de, 7);
    assert_abs_diff_eq!(w.ew_first[0], 320.0, epsilon = 1e-9);
    assert_abs_diff_eq!(ew_first_closed_form(&m).unwrap(), 320.0, epsilon = 1e-9);
    assert_eq!(w.a[0], w.ew_first[0]);
}

#[test]
fn zero_threshold_waiting_cost() {
    let m = reference().with_alpha(0.0).unwrap();
    let w = waiting_cost_profile(&m).unwrap();
    assert_eq!(w.k_de, 0);
    assert_abs_diff_eq!(w.ew_first[0], 10.0 / 0.25, epsilon = 1e-12);
}

#[test]
fn degenerate_arrivals_are_rejected() {
    let m = market(0.0, 0.5, 0.5, 1.0, (800.0, 50.0, 50.0, 0.0));
    assert!(matches!(waiting_cost_profile(&m), Err(Error::DegenerateArrivals { .. })));
}

#[test]
fn holdout_thresholds() {
    let m = holdout_market();
    let prof = equilibrium_profile(&m).unwrap();
    assert_eq!(prof.k_de, 252);
    let oracle = thomas_waiting_costs(&m, prof.k_de);
    for (z, (&a, &b)) in prof.waiting.ew_first.iter().zip(&oracle).enumerate() {
        assert!(close(a, b), "z={z}: {a} vs {b}");
    }
    // EW^144(0) = EW^123(21) = 360 exactly; the weak inequality keeps those positions waiting.
    assert_eq!(prof.k_l[21], 123);
    let benefit = 0.9 * 400.0;
    let ew = |k: u32, z: usize| (f64::from(k) - 1.0) * oracle[0] + oracle[z];
    assert_eq!(k_l(&m, 0).unwrap(), 144);
    for z in 0..=prof.k_de as usize {
        let kl = prof.k_l[z];
        if kl > 0 {
            assert!(ew(kl, z) <= benefit * (1.0 + 1e-12), "z={z}");
        }
        if kl < prof.k_de - z as u32 {
            assert!(ew(kl + 1, z) > benefit * (1.0 - 1e-12), "z={z}");
        }
    }
    assert!(k_l(&m, 253).is_err());
}

#[test]
fn no_benefit_means_no_holdout() {
    let m = market(0.3, 0.7, 0.9, 1.0, (1000.0, 600.0, 0.0, 0.0));
    let prof = equilibrium_profile(&m).unwrap();
    assert!(prof.k_l.iter().all(|&v| v == 0));
}

#[test]
fn boundary_difference() {
    for m in [reference(), holdout_market(), market(0.7, 0.4, 0.8, 2.0, (900.0, 100.0, 100.0, 0.0))] {
        let w = waiting_cost_profile(&m).unwrap();
        let k = w.k_de as usize;
        if k > 0 {
            assert!(close(w.a[k], m.h() / (m.q() * (1.0 - m.p()))));
            if w.ew_first[k] < 1e6 {
                assert!((w.ew_first[k] - w.ew_first[k - 1] - w.a[k]).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn prescribed_matches() {
    let m = reference();
    let prof = equilibrium_profile(&m).unwrap();
    let k = prof.k_de;
    assert_eq!(prof.outcome(&State::new(3, 2, Some(H)), None), Some((H, 1)));
    assert_eq!(prof.decide(&State::new(3, 2, Some(H))), Action::Match(H, H));
    assert_eq!(prof.outcome(&State::new(k + 1, 5, Some(L)), None), Some((H, k + 1)));
    assert_eq!(prof.decide(&State::new(k, 0, Some(L))), Action::NoMatch);
    assert_eq!(prof.decide(&State::new(k, 1, Some(L))), Action::Match(L, L));
    assert_eq!(prof.decide(&State::new(0, 2, Some(H))), Action::Match(L, H));
    assert_eq!(prof.decide(&State::new(0, 0, Some(H))), Action::NoMatch);
}

#[test]
fn holdout_positions_skip_to_next_low_agent() {
    let m = holdout_market();
    let prof = equilibrium_profile(&m).unwrap();
    let z = 10;
    let kl = prof.k_l[z as usize];
    assert!(kl > 0);
    let s = State::new(z, kl + 2, Some(L));
    assert_eq!(prof.outcome(&s, None), Some((L, kl + 1)));
    assert_eq!(prof.decide(&State::new(z, kl, Some(L))), Action::NoMatch);
}

#[test]
fn reference_profile_is_an_equilibrium() {
    let m = reference();
    let prof = equilibrium_profile(&m).unwrap();
    let report = best_response_check(&m, &prof, prof.k_de + 3).unwrap();
    assert!(report.is_empty(), "{:?}", report.violations.first());
    assert_eq!(report.states_checked, 2 * 66);
}

#[test]
fn holdout_profile_is_an_equilibrium() {
    let m = holdout_market();
    let prof = equilibrium_profile(&m).unwrap();
    let report = best_response_check(&m, &prof, prof.k_de + 3).unwrap();
    assert!(report.is_empty(), "{:?}", report.violations.first());
}

#[test]
fn short_state_bound_is_rejected() {
    let m = reference();
    let prof = equilibrium_profile(&m).unwrap();
    assert!(matches!(best_response_check(&m, &prof, 6), Err(Error::RangeError { .. })));
}

#[test]
fn refusing_high_demand_is_caught() {
    let m = reference();
    let prof = equilibrium_profile(&m).unwrap().with_override(RuleOverride {
        demand: H,
        supply: H,
        position: 1,
        request: Request::Wait,
    });
    let report = best_response_check(&m, &prof, 10).unwrap();
    let v = report
        .violations
        .iter()
        .find(|v| v.agent == Agent::Supply { quality: H, position: 1 })
        .expect("position 1 regrets waiting");
    assert_eq!(v.deviation, Request::Match(H));
    assert_abs_diff_eq!(v.deviation_payoff, 0.2 * 800.0, epsilon = 1e-12);
}

#[test]
fn holding_out_past_the_bound_is_caught() {
    let m = reference();
    let mut prof = equilibrium_profile(&m).unwrap();
    let k = prof.k_de;
    for n in 1..=k + 1 {
        prof = prof.with_override(RuleOverride {
            demand: L,
            supply: H,
            position: n,
            request: Request::Match(H),
        });
    }
    let report = best_response_check(&m, &prof, 10).unwrap();
    let v = report
        .violations
        .iter()
        .find(|v| v.agent == Agent::Supply { quality: H, position: k + 1 })
        .expect("position k_de+1 prefers the low match");
    // h (k_de + 1)/q = 160 exceeds alpha (r_HH - r_HL) = 150.
    assert_abs_diff_eq!(v.prescribed_payoff, 0.2 * 800.0 - 10.0 * 8.0 / 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(v.deviation_payoff, 0.2 * 50.0, epsilon = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn linear_solve_matches_closed_form(m in arb_market()) {
        let w = waiting_cost_profile(&m).unwrap();
        let cf = ew_first_closed_form(&m).unwrap();
        prop_assert!(close(w.ew_first[0], cf), "{} vs {}", w.ew_first[0], cf);
    }

    #[test]
    fn linear_solve_matches_recursion(m in arb_market()) {
        let w = waiting_cost_profile(&m).unwrap();
        let oracle = thomas_waiting_costs(&m, w.k_de);
        for (a, b) in w.ew_first.iter().zip(&oracle) {
            prop_assert!(close(*a, *b));
        }
    }

    #[test]
    fn waiting_costs_increase(m in arb_market()) {
        let w = waiting_cost_profile(&m).unwrap();
        prop_assert!(w.ew_first.windows(2).all(|x| x[1] > x[0]));
        for z in 0..=w.k_de {
            for k in 1..=(w.k_de - z + 1) {
                prop_assert!(w.ew(k + 1, z) > w.ew(k, z));
                if z > 0 {
                    prop_assert!(w.ew(k, z) >= w.ew(k, z - 1));
                }
            }
        }
    }

    #[test]
    fn holdout_properties(m in arb_market()) {
        let prof = equilibrium_profile(&m).unwrap();
        let k = prof.k_de;
        prop_assert_eq!(k, k_decentralized(&m));
        prop_assert!(prof.k_l.windows(2).all(|w| w[1] <= w[0]));
        for (z, &v) in prof.k_l.iter().enumerate() {
            prop_assert!(v <= k - z as u32);
        }
        if m.p() >= m.q() {
            prop_assert!(prof.k_l.iter().all(|&v| v == 0));
            let r = m.payoffs();
            prop_assert!(prof.waiting.ew_first[0] > m.alpha() * (r.r_lh - r.r_ll));
        }
    }

    #[test]
    fn profile_is_an_equilibrium(m in arb_market()) {
        let prof = equilibrium_profile(&m).unwrap();
        prop_assume!(prof.k_de <= 60);
        let report = best_response_check(&m, &prof, prof.k_de + 3).unwrap();
        prop_assert!(report.is_empty(), "{:?}", report.violations.first());
    }

    #[test]
    fn induced_matching_pattern(m in arb_market(), x_h in 0u32..20, x_l in 0u32..20, high in any::<bool>()) {
        let prof = equilibrium_profile(&m).unwrap();
        let s = State::new(x_h, x_l, Some(if high { H } else { L }));
        let a = prof.decide(&s);
        match a {
            Action::Match(L, H) => prop_assert_eq!(x_h, 0),
            Action::Match(H, L) => prop_assert!(x_h > prof.k_de),
            Action::Match(H, H) => prop_assert!(x_h > 0),
            Action::Match(L, L) => prop_assert!(x_l > prof.k_l.get(x_h as usize).copied().unwrap_or(0)),
            Action::NoMatch => {}
        }
        prop_assert!(s.is_legal(a));
    }
}
