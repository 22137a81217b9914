mod common;

use approx::assert_abs_diff_eq;
use dynmatch::analytic::{
    coordination_interval, k_centralized, k_decentralized, welfare_centralized_ob, welfare_decentralized_ob,
    welfare_of_threshold, System,
};
use dynmatch::compare::*;
use dynmatch::{Error, Mode};
use proptest::prelude::*;

use common::{arb_symmetric_market, market, reference};

#[test]
fn reference_regime_thresholds() {
    let t = regime_thresholds(&reference()).unwrap();
    assert_abs_diff_eq!(t.alpha1, 0.5 * 700.0 / 1500.0, epsilon = 1e-15);
    assert_abs_diff_eq!(t.alpha2, 0.5 * 700.0 / 750.0, epsilon = 1e-15);
    assert_eq!(t.classify(0.2), Regime::PatienceHelps);
    assert_eq!(t.classify(0.4), Regime::DependsOnCost);
    assert_eq!(t.classify(0.8), Regime::PatienceHurts);
    assert_eq!(t.classify(t.alpha1), Regime::PatienceHelps);
    assert_eq!(t.classify(t.alpha2), Regime::PatienceHurts);
}

#[test]
fn regime_thresholds_need_symmetry_and_separation() {
    let asym = market(0.4, 0.6, 0.2, 10.0, (800.0, 50.0, 50.0, 0.0));
    assert!(matches!(regime_thresholds(&asym), Err(Error::AsymmetricArrivals { .. })));
    let flat = market(0.5, 0.5, 0.2, 10.0, (800.0, 800.0, 0.0, 0.0));
    assert_eq!(regime_thresholds(&flat), Err(Error::NoSeparation));
}

#[test]
fn reference_centralized_comparison() {
    let row = compare_systems(&reference(), Mode::Centralized).unwrap();
    assert_abs_diff_eq!(row.w_fb, 341.0, epsilon = 1e-9);
    assert_abs_diff_eq!(row.w_ob, 326.25, epsilon = 1e-9);
    assert_abs_diff_eq!(row.w_nb, 225.0, epsilon = 1e-9);
    assert_eq!((row.k_fb, row.k_ob), (2, 3));
    assert_eq!(row.ordering, Ordering::FbGeObGeNb);
    assert!(!row.all_equal);
    assert!(row.diminishing_returns());
    assert_abs_diff_eq!(row.w_fb - row.w_ob, 14.75, epsilon = 1e-9);
    assert_abs_diff_eq!(row.w_ob - row.w_nb, 101.25, epsilon = 1e-9);
}

#[test]
fn asymmetric_comparison_is_rejected() {
    let m = market(0.4, 0.6, 0.2, 10.0, (800.0, 50.0, 50.0, 0.0));
    assert!(matches!(compare_systems(&m, Mode::Centralized), Err(Error::AsymmetricArrivals { .. })));
}

#[test]
fn classification_conventions() {
    assert_eq!(classify(3.0, 2.0, 1.0), (Ordering::FbGeObGeNb, false));
    assert_eq!(classify(1.0, 2.0, 3.0), (Ordering::FbLeObLeNb, false));
    assert_eq!(classify(2.0, 3.0, 1.0), (Ordering::Mixed, false));
    assert_eq!(classify(5.0, 5.0, 5.0 + 1e-13), (Ordering::FbGeObGeNb, true));
    assert_eq!(Ordering::FbLeObLeNb.to_string(), "fb<=ob<=nb");
}

#[test]
fn prohibitive_cost_makes_systems_equal() {
    let m = reference().with_h(5000.0).unwrap();
    let row = compare_systems(&m, Mode::Decentralized).unwrap();
    assert!(row.all_equal);
    assert_eq!(row.ordering, Ordering::FbGeObGeNb);
}

#[test]
fn centralized_welfare_falls_with_cost() {
    let grid = linspace(1.0, 100.0, 200).unwrap();
    let rows = sweep(&reference(), SweepVariable::H, &grid, Mode::Centralized).unwrap();
    assert_eq!(rows.len(), 200);
    for w in rows.windows(2) {
        assert!(w[1].w_ob <= w[0].w_ob + 1e-12);
        assert!(w[1].k_ob <= w[0].k_ob);
    }
    assert!(rows.iter().all(|r| r.ordering == Ordering::FbGeObGeNb && r.diminishing_returns()));
}

#[test]
fn decentralized_welfare_jumps_where_threshold_drops() {
    let base = reference();
    let grid = linspace(1.0, 100.0, 400).unwrap();
    let rows = sweep_systems(&base, SweepVariable::H, &grid, Mode::Decentralized, &[System::DecentralizedOb]).unwrap();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        assert_eq!(a.threshold, k_decentralized(&base.with_h(a.value).unwrap()));
        assert!(b.threshold <= a.threshold);
        if b.threshold == a.threshold && a.threshold > 0 {
            assert!(b.welfare < a.welfare, "h {} -> {}", a.value, b.value);
        } else if b.threshold == 0 {
            // Nobody waits: welfare no longer depends on h.
            assert_abs_diff_eq!(b.welfare, 225.0, epsilon = 1e-9);
        }
    }
    // k_de = floor(75 / h) drops from j to j - 1 just above h = 75 / j. The
    // jump is W(j - 1) - W(j) at the cutoff cost: upward while the new
    // threshold is still at least k_ce, downward once it falls below.
    for j in 1..=75u32 {
        let cut = 75.0 / f64::from(j);
        let at = base.with_h(cut).unwrap();
        assert_eq!(k_decentralized(&base.with_h(cut * (1.0 - 1e-6)).unwrap()), j);
        assert_eq!(k_decentralized(&base.with_h(cut * (1.0 + 1e-6)).unwrap()), j - 1);
        let jump = welfare_of_threshold(&at, j - 1).unwrap() - welfare_of_threshold(&at, j).unwrap();
        // W(k) = 400 - 175/(k+1) - h k here.
        let exact = (75.0 * f64::from(j + 1) - 175.0) / f64::from(j * (j + 1));
        assert_abs_diff_eq!(jump, exact, epsilon = 1e-9);
        let k_ce = k_centralized(&at).unwrap();
        assert_eq!(jump > 0.0, j - 1 >= k_ce, "j = {j}, k_ce = {k_ce}");
    }
    let last = base.with_h(75.0).unwrap();
    assert_abs_diff_eq!(
        welfare_of_threshold(&last, 0).unwrap() - welfare_of_threshold(&last, 1).unwrap(),
        -12.5,
        epsilon = 1e-9
    );
}

#[test]
fn gap_closes_inside_coordination_interval() {
    let base = reference().with_h(50.0).unwrap();
    let iv = coordination_interval(&base).unwrap();
    let grid = linspace(0.01, 0.99, 99).unwrap();
    let mut inside = 0;
    for &a in &grid {
        let m = base.with_alpha(a).unwrap();
        let gap = welfare_centralized_ob(&m).unwrap().welfare - welfare_decentralized_ob(&m).unwrap().welfare;
        if iv.contains(a) {
            assert_abs_diff_eq!(gap, 0.0, epsilon = 1e-9);
            inside += 1;
        } else {
            assert!(gap > 1e-9, "alpha {a}");
        }
    }
    assert!(inside > 0);
}

#[test]
fn sweep_rows_are_grid_major() {
    let systems = System::for_mode(Mode::Centralized);
    let rows = sweep_systems(&reference(), SweepVariable::Alpha, &[0.1, 0.5], Mode::Centralized, &systems).unwrap();
    let got: Vec<(f64, System)> = rows.iter().map(|r| (r.value, r.system)).collect();
    let want: Vec<(f64, System)> = [0.1, 0.5].iter().flat_map(|&v| systems.iter().map(move |&s| (v, s))).collect();
    assert_eq!(got, want);
}

#[test]
fn bad_grids_are_rejected() {
    let m = reference();
    assert!(matches!(sweep(&m, SweepVariable::H, &[], Mode::Centralized), Err(Error::RangeError { .. })));
    assert!(matches!(sweep(&m, SweepVariable::H, &[2.0, 2.0], Mode::Centralized), Err(Error::RangeError { .. })));
    assert!(matches!(sweep(&m, SweepVariable::H, &[1.0, -1.0], Mode::Centralized), Err(Error::RangeError { .. })));
    assert!(sweep(&m, SweepVariable::H, &[3.0, -1.0], Mode::Centralized).is_err());
    assert!(linspace(1.0, 1.0, 5).is_err());
    assert!(linspace(0.0, 1.0, 1).is_err());
    assert_eq!(linspace(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn centralized_order_and_diminishing_returns(m in arb_symmetric_market()) {
        let row = compare_systems(&m, Mode::Centralized).unwrap();
        prop_assert_eq!(row.ordering, Ordering::FbGeObGeNb);
        prop_assert!(row.diminishing_returns());
    }

    #[test]
    fn decentralized_regimes(m in arb_symmetric_market(), t in 0.0f64..1.0) {
        let th = regime_thresholds(&m).unwrap();
        let alpha = if t < 0.5 { 2.0 * t * th.alpha1 } else { th.alpha2 + (2.0 * t - 1.0) * (1.0 - th.alpha2) };
        prop_assume!((0.0..=1.0).contains(&alpha));
        let row = compare_systems(&m.with_alpha(alpha).unwrap(), Mode::Decentralized).unwrap();
        match th.classify(alpha) {
            Regime::PatienceHelps => prop_assert_eq!(row.ordering, Ordering::FbGeObGeNb),
            Regime::PatienceHurts => prop_assert!(row.ordering == Ordering::FbLeObLeNb || row.all_equal),
            Regime::DependsOnCost => unreachable!(),
        }
    }

    #[test]
    fn middle_regime_is_never_mixed(m in arb_symmetric_market(), t in 0.01f64..0.99) {
        let th = regime_thresholds(&m).unwrap();
        let alpha = th.alpha1 + t * (th.alpha2 - th.alpha1);
        prop_assume!(alpha <= 1.0);
        let row = compare_systems(&m.with_alpha(alpha).unwrap(), Mode::Decentralized).unwrap();
        prop_assert_ne!(row.ordering, Ordering::Mixed);
    }
}
