//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the optimizer, the LP solver or the pricing code of the
//! library; the oracles work from the raw tree data and plain utility formulas.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reserve_core::synthetic::{random_claim, random_tree, TreeSpec};
use reserve_core::{Claim, ScenarioTree};

pub const THIRD: f64 = 1.0 / 3.0;

pub fn binomial() -> ScenarioTree {
    ScenarioTree::one_step(1.0, &[(0.6, 2.0), (0.4, 0.5)]).unwrap()
}

pub fn trinomial() -> ScenarioTree {
    ScenarioTree::one_step(1.0, &[(THIRD, 2.0), (THIRD, 1.0), (1.0 - 2.0 * THIRD, 0.5)]).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_case(seed: u64, assets: usize) -> (ScenarioTree, Claim) {
    let mut r = rng(seed);
    let spec = TreeSpec {
        assets,
        ..TreeSpec::default()
    };
    let t = random_tree(&mut r, &spec);
    let c = random_claim(&mut r, &t, "g");
    (t, c)
}

/// Initial capital and holding replicating `(g_up, g_down)` on a one-step binomial.
pub fn replicate_2x2(s0: f64, up: f64, down: f64, g_up: f64, g_down: f64) -> (f64, f64) {
    let phi = (g_up - g_down) / (up - down);
    (g_up - phi * (up - s0), phi)
}

/// Vertices of the martingale polytope of the one-step trinomial `1 -> {2, 1, 0.5}`.
///
/// Zero mean increment means `q_up = q_down / 2`, and with `sum q = 1` the
/// polytope is the segment between `q_mid = 0` and `q_mid = 1`.
pub fn trinomial_vertices() -> [[f64; 3]; 2] {
    [[THIRD, 0.0, 2.0 * THIRD], [0.0, 1.0, 0.0]]
}

pub fn exp_u(alpha: f64, x: f64) -> f64 {
    (1.0 - (-alpha * x).exp()) / alpha
}

pub fn pow_u(alpha: f64, x: f64) -> f64 {
    if x > 0.0 {
        (1.0 - (1.0 + x).powf(-alpha)) / alpha
    } else {
        let b = alpha + 2.0;
        (1.0 - (1.0 - x).powf(b)) / b
    }
}

/// `max_phi sum_w p_w U(base_w + phi * ds_w)` over a scalar holding, by a
/// dense grid on `[-lim, lim]` refined around the best point.
pub fn grid_max_1d(
    probs: &[f64],
    ds: &[f64],
    base: &[f64],
    u: &dyn Fn(f64) -> f64,
    lim: f64,
) -> (f64, f64) {
    let eval = |phi: f64| -> f64 {
        probs
            .iter()
            .zip(ds)
            .zip(base)
            .map(|((p, d), b)| p * u(b + phi * d))
            .sum()
    };
    let (mut lo, mut hi) = (-lim, lim);
    let mut best = (0.0, f64::NEG_INFINITY);
    for _ in 0..12 {
        let n = 2000;
        let step = (hi - lo) / n as f64;
        for i in 0..=n {
            let phi = lo + step * i as f64;
            let v = eval(phi);
            if v > best.1 {
                best = (phi, v);
            }
        }
        lo = best.0 - 4.0 * step;
        hi = best.0 + 4.0 * step;
    }
    best
}

/// Same as [`grid_max_1d`] for two holdings.
pub fn grid_max_2d(
    probs: &[f64],
    ds: &[[f64; 2]],
    base: &[f64],
    u: &dyn Fn(f64) -> f64,
    lim: f64,
) -> ((f64, f64), f64) {
    let eval = |a: f64, b: f64| -> f64 {
        probs
            .iter()
            .zip(ds)
            .zip(base)
            .map(|((p, d), w)| p * u(w + a * d[0] + b * d[1]))
            .sum()
    };
    let (mut a0, mut a1, mut b0, mut b1) = (-lim, lim, -lim, lim);
    let mut best = ((0.0, 0.0), f64::NEG_INFINITY);
    for _ in 0..14 {
        let n = 200;
        let (sa, sb) = ((a1 - a0) / n as f64, (b1 - b0) / n as f64);
        for i in 0..=n {
            for j in 0..=n {
                let (a, b) = (a0 + sa * i as f64, b0 + sb * j as f64);
                let v = eval(a, b);
                if v > best.1 {
                    best = ((a, b), v);
                }
            }
        }
        a0 = best.0 .0 - 4.0 * sa;
        a1 = best.0 .0 + 4.0 * sa;
        b0 = best.0 .1 - 4.0 * sb;
        b1 = best.0 .1 + 4.0 * sb;
    }
    best
}

/// Indifference prices of the strike-1 call on the uniform trinomial at
/// `z = 0` for `alpha = 2^0 .. 2^10`, from a dense holding grid with zooming
/// and bisection to 1e-9, computed outside this crate and frozen.
pub const TRINOMIAL_EXP_PRICES: [f64; 11] = [
    0.23009271221235394,
    0.2411466962657869,
    0.25980058731511235,
    0.2847589501179755,
    0.3069489593617618,
    0.32006180146709085,
    0.32669737422838807,
    0.3300153543241322,
    0.3316743434406817,
    0.332503838930279,
    0.3329185857437551,
];

pub const TRINOMIAL_POWER_PRICES: [f64; 11] = [
    0.23972590873017907,
    0.2491357014514506,
    0.26509086741134524,
    0.2868407969363034,
    0.3073016772978008,
    0.3201179071329534,
    0.32671117736026645,
    0.3300188113935292,
    0.3316752086393535,
    0.3325040549971163,
    0.33291863976046443,
];
