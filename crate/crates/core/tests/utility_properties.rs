mod common;

use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use reserve_core::measures::{
    check_compactness, density, mixture, most_interior_measure, polytope_vertices,
    superreplication_price,
};
use reserve_core::utility::{
    check_elasticity, check_limit_assumptions, check_risk_aversion_divergence, log_grid,
    PlainExponential, PlainPower,
};
use reserve_core::{Claim, MartingaleMeasure, ScenarioTree, UtilityFamily};

fn families() -> Vec<UtilityFamily> {
    let schedule = vec![0.5, 1.0, 4.0, 16.0];
    vec![
        UtilityFamily::exponential(schedule.clone()).unwrap(),
        UtilityFamily::power(schedule.clone()).unwrap(),
        UtilityFamily::exponential(schedule.clone())
            .unwrap()
            .normalized(0.3)
            .unwrap(),
        UtilityFamily::power(schedule)
            .unwrap()
            .normalized(-0.2)
            .unwrap(),
    ]
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[test]
fn fenchel_young_on_a_grid() {
    let xs = linspace(-1.0, 3.0, 20);
    let ys: Vec<f64> = linspace(-5.0, 5.0, 20).into_iter().map(f64::exp2).collect();
    for fam in families() {
        for n in 0..fam.len() {
            let u = fam.member(n).unwrap();
            for &y in &ys {
                let v = u.conjugate(y).unwrap();
                for &x in &xs {
                    let gap = v - (u.value(x) - x * y);
                    assert!(
                        gap >= -1e-10 * (1.0 + v.abs()),
                        "{} n={n} x={x} y={y}",
                        fam.kind().name()
                    );
                }
                let i = u.inverse_marginal(y).unwrap();
                assert!((v - (u.value(i) - i * y)).abs() <= 1e-9 * (1.0 + v.abs()));
            }
        }
    }
}

#[test]
fn raw_built_ins_match_textbook_formulas() {
    for alpha in [0.5, 2.0, 7.0] {
        let e = UtilityFamily::exponential(vec![alpha]).unwrap();
        let p = UtilityFamily::power(vec![alpha]).unwrap();
        let (ue, up) = (e.member(0).unwrap(), p.member(0).unwrap());
        for x in linspace(-0.9, 2.0, 30) {
            assert!((ue.value(x) - exp_u(alpha, x)).abs() <= 1e-13);
            assert!((up.value(x) - pow_u(alpha, x)).abs() <= 1e-13);
        }
        for y in [0.1f64, 0.5, 1.0, 3.0] {
            let v = (1.0 - y + y * y.ln()) / alpha;
            assert!((ue.conjugate(y).unwrap() - v).abs() <= 1e-13);
        }
    }
}

#[test]
fn closed_form_conjugates_match_numeric() {
    for fam in families() {
        for n in 0..fam.len() {
            let u = fam.member(n).unwrap();
            for y in log_grid(-6, 6) {
                let a = u.conjugate(y).unwrap();
                let b = u.conjugate_numeric(y).unwrap();
                assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let h = 1e-5;
    for fam in families() {
        for n in 0..fam.len() {
            let u = fam.member(n).unwrap();
            for x in linspace(-0.8, 1.7, 26) {
                let d1 = (u.value(x + h) - u.value(x - h)) / (2.0 * h);
                assert!((d1 - u.marginal(x)).abs() <= 1e-6 * (1.0 + u.marginal(x)));
                let d2 = (u.marginal(x + h) - u.marginal(x - h)) / (2.0 * h);
                assert!((d2 - u.curvature(x)).abs() <= 1e-5 * (1.0 + u.curvature(x).abs()));
            }
        }
    }
}

#[test]
fn inverse_marginal_is_a_right_inverse_and_conjugate_is_convex() {
    for fam in families() {
        for n in 0..fam.len() {
            let u = fam.member(n).unwrap();
            let ys = log_grid(-8, 8);
            for &y in &ys {
                let x = u.inverse_marginal(y).unwrap();
                assert!((u.marginal(x) - y).abs() <= 1e-10 * y.max(1.0));
            }
            for w in ys.windows(3) {
                let mid = 0.5 * (w[0] + w[2]);
                let v = |t: f64| u.conjugate(t).unwrap();
                assert!(v(mid) <= 0.5 * (v(w[0]) + v(w[2])) + 1e-12);
            }
        }
    }
}

#[test]
fn custom_families_agree_with_built_ins() {
    let schedule = vec![0.5, 2.0, 8.0];
    let pairs = [
        (
            UtilityFamily::custom(Arc::new(PlainExponential), schedule.clone()).unwrap(),
            UtilityFamily::exponential(schedule.clone()).unwrap(),
        ),
        (
            UtilityFamily::custom(Arc::new(PlainPower), schedule.clone()).unwrap(),
            UtilityFamily::power(schedule).unwrap(),
        ),
    ];
    for (custom, built) in pairs {
        for z in [0.0, 0.4] {
            let (c, b) = (custom.normalized(z).unwrap(), built.normalized(z).unwrap());
            for n in 0..c.len() {
                let (uc, ub) = (c.member(n).unwrap(), b.member(n).unwrap());
                for x in linspace(-0.5, 1.5, 11) {
                    assert!((uc.value(x) - ub.value(x)).abs() <= 1e-9 * (1.0 + ub.value(x).abs()));
                    assert!(
                        (uc.marginal(x) - ub.marginal(x)).abs() <= 1e-9 * (1.0 + ub.marginal(x))
                    );
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_preserves_rankings(
        a in proptest::collection::vec(-1.0f64..2.0, 4),
        b in proptest::collection::vec(-1.0f64..2.0, 4),
        z in -0.5f64..0.5,
        which in 0usize..2,
    ) {
        let fam = if which == 0 {
            UtilityFamily::exponential(vec![0.7, 3.0]).unwrap()
        } else {
            UtilityFamily::power(vec![0.7, 3.0]).unwrap()
        };
        let norm = fam.normalized(z).unwrap();
        for n in 0..fam.len() {
            let (u, v) = (fam.member(n).unwrap(), norm.member(n).unwrap());
            prop_assert!(v.value(z).abs() <= 1e-12);
            prop_assert!((v.marginal(z) - 1.0).abs() <= 1e-12);
            let eu = |w: &[f64], f: &dyn Fn(f64) -> f64| w.iter().map(|x| f(*x)).sum::<f64>() / 4.0;
            let raw = eu(&a, &|x| u.value(x)) - eu(&b, &|x| u.value(x));
            let scaled = eu(&a, &|x| v.value(x)) - eu(&b, &|x| v.value(x));
            if raw.abs() > 1e-9 {
                prop_assert_eq!(raw > 0.0, scaled > 0.0);
            }
        }
    }
}

#[test]
fn built_in_families_pass_the_diagnostics() {
    for fam in [
        UtilityFamily::exponential(UtilityFamily::geometric_schedule(2.0, 11)).unwrap(),
        UtilityFamily::power(UtilityFamily::geometric_schedule(2.0, 11)).unwrap(),
    ] {
        let xs = linspace(-1.0, 1.0, 41);
        let r = check_risk_aversion_divergence(&fam, &xs, 100.0).unwrap();
        assert!(r.holds, "{r:?}");
        let e = check_elasticity(&fam, (0.5, 2.0), &log_grid(-10, 10), &[0.5, 1.0, 2.0]).unwrap();
        assert!(e.holds, "{e:?}");
        let l = check_limit_assumptions(
            &fam.normalized(0.0).unwrap(),
            0.0,
            &[0.25, 0.5, 1.0, 2.0, 4.0],
        )
        .unwrap();
        assert!(l.holds, "{l:?}");
        assert!((l.alpha - 1.0).abs() < 1e-12 && l.beta.abs() < 1e-12);
    }
}

#[test]
fn compactness_values_follow_the_entropy_formula() {
    let t = trinomial();
    let q0 = most_interior_measure(&t).unwrap().unwrap();
    let schedule = UtilityFamily::geometric_schedule(2.0, 8);
    let fam = UtilityFamily::exponential(schedule.clone()).unwrap();
    let report = check_compactness(&t, &q0, &fam).unwrap();
    let dens = density(&t, &q0);
    for (n, alpha) in schedule.iter().enumerate() {
        let expected: f64 = dens
            .iter()
            .zip(t.terminal_probabilities())
            .map(|(d, p)| p * ((1.0 - d + d * d.ln()) / alpha).abs())
            .sum();
        assert!((report.values[n] - expected).abs() <= 1e-12);
    }
    assert!(report.bounded);
    assert!(report.values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn physical_measure_has_zero_compactness_for_normalized_exponential() {
    let t = ScenarioTree::one_step(1.0, &[(THIRD, 1.5), (2.0 * THIRD, 0.75)]).unwrap();
    let q = MartingaleMeasure::physical(&t).unwrap();
    let fam = UtilityFamily::exponential(vec![1.0, 10.0])
        .unwrap()
        .normalized(0.0)
        .unwrap();
    let report = check_compactness(&t, &q, &fam).unwrap();
    assert!(report.values.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn equivalent_mixtures_approach_the_superreplication_price() {
    for seed in 0..30 {
        let (t, g) = random_case(seed, 1);
        if t.num_terminals() > 16 {
            continue;
        }
        let q0 = most_interior_measure(&t).unwrap().unwrap();
        let pi = superreplication_price(&t, &g).unwrap().price;
        let vertices = polytope_vertices(&t).unwrap();
        let mut last = f64::NEG_INFINITY;
        for a in [0.9, 0.5, 0.1, 1e-3, 1e-6] {
            let best = vertices
                .iter()
                .map(|q| {
                    let m = mixture(&q0, q, a).unwrap();
                    assert!(m.is_equivalent());
                    m.expectation(&g)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best <= pi + 1e-9);
            assert!(best >= last - 1e-12);
            last = best;
        }
        assert!(
            pi - last <= 1e-5 * (1.0 + pi.abs()),
            "seed {seed}: {last} vs {pi}"
        );
    }
}

#[test]
fn trinomial_vertex_enumeration_matches_hand_computation() {
    let t = trinomial();
    let mut found: Vec<Vec<f64>> = polytope_vertices(&t)
        .unwrap()
        .iter()
        .map(|q| q.weights().to_vec())
        .collect();
    found.sort_by(|a, b| b[0].partial_cmp(&a[0]).unwrap());
    assert_eq!(found.len(), 2);
    for (f, e) in found.iter().zip(trinomial_vertices()) {
        for (a, b) in f.iter().zip(e) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let call = Claim::call(&t, 0, 1.0).unwrap();
    assert!(
        (MartingaleMeasure::new(&t, trinomial_vertices()[0].to_vec())
            .unwrap()
            .expectation(&call)
            - THIRD)
            .abs()
            < 1e-15
    );
}
