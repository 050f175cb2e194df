mod common;

use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use reserve_core::pricing::read_csv;
use reserve_core::utility::{PlainExponential, PlainPower};
use reserve_core::{
    convergence_sweep, indifference_price, superreplication_price, Claim, PricingConfig, SweepMode,
    UtilityFamily,
};

const FINE: f64 = 1e-7;

fn fine() -> PricingConfig {
    PricingConfig::with_tolerances(FINE, 1e-10)
}

fn schedule() -> Vec<f64> {
    UtilityFamily::geometric_schedule(2.0, 11)
}

#[test]
fn trinomial_sweep_matches_frozen_oracle() {
    let t = trinomial();
    let call = Claim::call(&t, 0, 1.0).unwrap();
    let cases = [
        (
            UtilityFamily::exponential(schedule()).unwrap(),
            TRINOMIAL_EXP_PRICES,
        ),
        (
            UtilityFamily::power(schedule()).unwrap(),
            TRINOMIAL_POWER_PRICES,
        ),
    ];
    for (fam, oracle) in cases {
        let curve = convergence_sweep(&t, &fam, 0.0, &call, SweepMode::Raw, &fine()).unwrap();
        assert!((curve.superrep - THIRD).abs() < 1e-12);
        for (p, o) in curve.points.iter().zip(oracle) {
            assert!(
                (p.price - o).abs() <= 1e-5,
                "{} alpha {}: {} vs {o}",
                fam.kind().name(),
                p.alpha,
                p.price
            );
        }
        assert!(curve.verdict.strictly_decreasing);
        assert!(curve.verdict.final_gap < 1e-3);
        assert!((curve.verdict.log_slope.unwrap() + 1.0).abs() < 0.05);
    }
}

#[test]
fn complete_market_price_is_the_replication_cost_for_every_alpha() {
    let t = binomial();
    let call = Claim::call(&t, 0, 1.0).unwrap();
    let (x, _) = replicate_2x2(1.0, 2.0, 0.5, 1.0, 0.0);
    for fam in [
        UtilityFamily::exponential(schedule()).unwrap(),
        UtilityFamily::power(schedule()).unwrap(),
    ] {
        for z in [-0.3, 0.0, 0.5] {
            let curve = convergence_sweep(&t, &fam, z, &call, SweepMode::Raw, &fine()).unwrap();
            for p in &curve.points {
                assert!(
                    (p.price - x).abs() <= 2.0 * FINE,
                    "z {z} alpha {}: {}",
                    p.alpha,
                    p.price
                );
            }
        }
    }
}

#[test]
fn normalized_and_raw_sweeps_agree() {
    let t = trinomial();
    let call = Claim::call(&t, 0, 1.0).unwrap();
    for fam in [
        UtilityFamily::exponential(schedule()).unwrap(),
        UtilityFamily::power(schedule()).unwrap(),
    ] {
        for z in [-0.5, 0.5] {
            let raw = convergence_sweep(&t, &fam, z, &call, SweepMode::Raw, &fine()).unwrap();
            let norm =
                convergence_sweep(&t, &fam, z, &call, SweepMode::Normalized, &fine()).unwrap();
            for (a, b) in raw.points.iter().zip(&norm.points) {
                assert!((a.price - b.price).abs() <= 2.0 * FINE);
            }
        }
    }
}

#[test]
fn custom_families_price_like_built_ins() {
    let t = trinomial();
    let call = Claim::call(&t, 0, 1.0).unwrap();
    let moderate = vec![0.5, 1.0, 2.0, 4.0, 8.0];
    let pairs = [
        (
            UtilityFamily::custom(Arc::new(PlainExponential), moderate.clone()).unwrap(),
            UtilityFamily::exponential(moderate.clone()).unwrap(),
        ),
        (
            UtilityFamily::custom(Arc::new(PlainPower), moderate.clone()).unwrap(),
            UtilityFamily::power(moderate).unwrap(),
        ),
    ];
    for (custom, built) in pairs {
        let a = convergence_sweep(&t, &custom, 0.2, &call, SweepMode::Normalized, &fine()).unwrap();
        let b = convergence_sweep(&t, &built, 0.2, &call, SweepMode::Normalized, &fine()).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(
                (p.price - q.price).abs() <= 1e-5,
                "alpha {}: {} vs {}",
                p.alpha,
                p.price,
                q.price
            );
        }
    }
}

#[test]
fn exponential_prices_ignore_initial_capital_and_grow_with_alpha() {
    for seed in 0..8 {
        let (t, g) = random_case(seed, 1);
        let fam = UtilityFamily::exponential(vec![0.5, 1.0, 2.0, 4.0]).unwrap();
        let at = |z: f64| convergence_sweep(&t, &fam, z, &g, SweepMode::Raw, &fine()).unwrap();
        let (a, b) = (at(-0.4), at(0.7));
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p.price - q.price).abs() <= 4.0 * FINE, "seed {seed}");
        }
        assert!(a
            .points
            .windows(2)
            .all(|w| w[1].price >= w[0].price - 2.0 * FINE));
    }
}

#[test]
fn sweep_csv_round_trips() {
    let t = trinomial();
    let call = Claim::call(&t, 0, 1.0).unwrap();
    let fam = UtilityFamily::power(schedule()).unwrap();
    let curve = convergence_sweep(
        &t,
        &fam,
        0.0,
        &call,
        SweepMode::Raw,
        &PricingConfig::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).unwrap();
    let rows = read_csv(buf.as_slice()).unwrap();
    assert_eq!(rows, curve.rows());
    let mut again = Vec::new();
    convergence_sweep(
        &t,
        &fam,
        0.0,
        &call,
        SweepMode::Raw,
        &PricingConfig::default(),
    )
    .unwrap()
    .write_csv(&mut again)
    .unwrap();
    assert_eq!(buf, again);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn price_properties_on_random_trees(seed in any::<u64>(), cash in -1.0f64..1.0, z in -0.5f64..0.5, which in 0usize..2) {
        let (t, g) = random_case(seed, 1);
        let fam = if which == 0 {
            UtilityFamily::exponential(vec![0.5, 3.0]).unwrap()
        } else {
            UtilityFamily::power(vec![0.5, 3.0]).unwrap()
        };
        let pi = superreplication_price(&t, &g).unwrap().price;
        let bumped = Claim::new(&t, "h", g.payoffs().iter().map(|v| v + 0.3 * v.abs()).collect()).unwrap();
        for n in 0..fam.len() {
            let p = indifference_price(&t, &fam, n, z, &g, FINE).unwrap();
            prop_assert!(p.price <= pi + 2.0 * FINE);
            prop_assert!(p.price >= g.min() - 2.0 * FINE);
            let zero = indifference_price(&t, &fam, n, z, &Claim::zero(&t), FINE).unwrap();
            prop_assert!(zero.price.abs() <= 2.0 * FINE);
            let shifted = indifference_price(&t, &fam, n, z, &g.shifted(cash), FINE).unwrap();
            prop_assert!((shifted.price - p.price - cash).abs() <= 4.0 * FINE);
            let larger = indifference_price(&t, &fam, n, z, &bumped, FINE).unwrap();
            prop_assert!(larger.price >= p.price - 2.0 * FINE);
        }
    }
}
