mod common;

use mfg_nash::measure::{
    dw_to_dirac0, empirical, fit_rate, fit_rate_guarded, iid_rate_experiment, wasserstein2, wasserstein2_squared,
    EmpiricalMeasure, QuantileTable,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn atoms(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max)
}

fn m(xs: &[f64]) -> EmpiricalMeasure {
    empirical(xs).unwrap()
}

#[test]
fn equal_sizes_match_permutation_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let n = rng.random_range(1..=7);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let exact = common::brute_force_w2_squared(&a, &b);
        assert!((wasserstein2_squared(&m(&a), &m(&b)) - exact).abs() <= 1e-12);
    }
}

#[test]
fn unequal_sizes_match_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let (n, k) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let exact = common::assignment_w2_squared(&a, &b);
        assert!((wasserstein2_squared(&m(&a), &m(&b)) - exact).abs() <= 1e-12, "{a:?} {b:?}");
    }
}

#[test]
fn ties_and_duplicates() {
    let a = m(&[1.0, 1.0, 1.0]);
    let b = m(&[1.0]);
    assert_eq!(wasserstein2_squared(&a, &b), 0.0);
    let a = m(&[0.0, 0.0, 2.0, 2.0]);
    let b = m(&[0.0, 2.0]);
    assert_eq!(wasserstein2_squared(&a, &b), 0.0);
    assert_eq!(dw_to_dirac0(&m(&[3.0, -4.0])), (12.5f64).sqrt());
}

#[test]
fn rejects_non_finite_atoms() {
    assert!(empirical(&[1.0, f64::NAN]).is_err());
    assert!(empirical(&[]).is_err());
}

#[test]
fn exact_power_law_is_recovered() {
    let n = [10.0, 20.0, 40.0, 80.0];
    let y: Vec<f64> = n.iter().map(|v: &f64| 3.0 * v.powf(-0.7)).collect();
    let f = fit_rate(&n, &y).unwrap();
    assert!((f.slope + 0.7).abs() < 1e-12);
    assert!((f.predict(160.0) - 3.0 * 160f64.powf(-0.7)).abs() < 1e-12);
    assert!(fit_rate(&n[..2], &y[..2]).is_err());
}

#[test]
fn guard_drops_a_pre_asymptotic_first_rung() {
    let n = [10.0, 20.0, 40.0, 80.0, 160.0];
    let mut y: Vec<f64> = n.iter().map(|v: &f64| v.powf(-1.0)).collect();
    y[0] = 1.0;
    let f = fit_rate_guarded(&n, &y).unwrap();
    assert_eq!(f.excluded, Some(10.0));
    assert!((f.slope + 1.0).abs() < 1e-10);
}

#[test]
fn degenerate_law_reports_zero_variance() {
    let r = iid_rate_experiment(|_| 0.5, 8.0, &[10, 20, 40, 80], 50, 1).unwrap();
    assert!(r.fit.is_none());
    assert!(r.diagnostic.unwrap().contains("zero variance"));
}

proptest! {
    #[test]
    fn metric_axioms(a in atoms(12), b in atoms(12), c in atoms(12)) {
        let (a, b, c) = (m(&a), m(&b), m(&c));
        prop_assert_eq!(wasserstein2(&a, &a), 0.0);
        prop_assert!((wasserstein2(&a, &b) - wasserstein2(&b, &a)).abs() <= 1e-12);
        prop_assert!(wasserstein2(&a, &c) <= wasserstein2(&a, &b) + wasserstein2(&b, &c) + 1e-9);
    }

    #[test]
    fn translation_moves_by_the_shift(a in atoms(20), s in -5.0f64..5.0) {
        let shifted: Vec<f64> = a.iter().map(|x| x + s).collect();
        let d = wasserstein2(&m(&a), &m(&shifted));
        prop_assert!((d - s.abs()).abs() <= 1e-9);
    }

    #[test]
    fn order_of_atoms_is_irrelevant(mut a in atoms(20), b in atoms(20)) {
        let before = wasserstein2_squared(&m(&a), &m(&b));
        a.reverse();
        prop_assert_eq!(before, wasserstein2_squared(&m(&a), &m(&b)));
    }

    #[test]
    fn quantile_table_agrees_with_direct_merge(r in atoms(40), a in atoms(15)) {
        let (r, a) = (m(&r), m(&a));
        let t = QuantileTable::new(&r);
        prop_assert!((t.distance_squared(&a) - wasserstein2_squared(&r, &a)).abs() <= 1e-9);
    }

    #[test]
    fn distance_to_dirac_is_root_second_moment(a in atoms(20)) {
        let a = m(&a);
        let d0 = wasserstein2(&a, &EmpiricalMeasure::dirac(0.0));
        prop_assert!((dw_to_dirac0(&a) - d0).abs() <= 1e-9);
    }
}
