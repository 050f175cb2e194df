//! Runtime diagnostics for the hypotheses placed on a utility family.
//!
//! Every check evaluates the family on finite grids, so a positive verdict is
//! grid evidence rather than a proof.

use serde::Serialize;

use super::UtilityFamily;
use crate::error::{Error, Result};

const SLACK_TOL: f64 = 1e-9;
const CONSTANT_CAP: f64 = 1e6;

/// `{2^k : k in lo..=hi}`.
pub fn log_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub threshold: f64,
    /// `min_x r_last(x)` over the grid.
    pub min_last: f64,
    /// Grid point attaining `min_last`.
    pub worst_x: f64,
    /// `r_n(x)` strictly increasing along the schedule at every grid point.
    pub increasing: bool,
    pub holds: bool,
}

/// Checks that `r_n(x)` increases along the schedule and ends above `threshold`.
pub fn check_risk_aversion_divergence(
    family: &UtilityFamily,
    xs: &[f64],
    threshold: f64,
) -> Result<DivergenceReport> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty wealth grid".into()));
    }
    let members = (0..family.len())
        .map(|n| family.member(n))
        .collect::<Result<Vec<_>>>()?;
    let mut increasing = true;
    let mut min_last = f64::INFINITY;
    let mut worst_x = xs[0];
    for &x in xs {
        let r = members
            .iter()
            .map(|u| u.risk_aversion(x))
            .collect::<Result<Vec<_>>>()?;
        increasing &= r.windows(2).all(|w| w[1] > w[0]);
        let last = *r.last().unwrap();
        if last < min_last {
            min_last = last;
            worst_x = x;
        }
    }
    Ok(DivergenceReport {
        threshold,
        min_last,
        worst_x,
        increasing,
        holds: increasing && min_last > threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ElasticityConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ElasticityViolation {
    pub n: usize,
    pub lambda: f64,
    pub y: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ElasticityReport {
    pub interval: (f64, f64),
    pub constants: ElasticityConstants,
    pub holds: bool,
    /// Smallest slack over the grid under `constants`.
    pub worst: ElasticityViolation,
    pub grid_points: usize,
}

/// `C1 V_n(y) + C2 y + C3 - V_n(lambda y)`.
pub fn elasticity_slack(
    family: &UtilityFamily,
    constants: ElasticityConstants,
    n: usize,
    lambda: f64,
    y: f64,
) -> Result<f64> {
    let u = family.member(n)?;
    Ok(
        constants.c1 * u.conjugate(y)? + constants.c2 * y + constants.c3
            - u.conjugate(lambda * y)?,
    )
}

/// Searches constants for `V_n(lambda y) <= C1 V_n(y) + C2 y + C3`.
///
/// `C1` runs over powers of two. For each `C1` the excess
/// `d = V_n(lambda y) - C1 V_n(y)` is computed on the grid, `C2` runs over
/// `{0} ∪ {2^k}` and `C3` is the smallest value covering the remainder. The
/// first `C1` admitting a triple with every component at most `1e6` wins, with
/// `C2 + C3` minimized among its triples. `lambdas` are clipped to `interval`.
pub fn check_elasticity(
    family: &UtilityFamily,
    interval: (f64, f64),
    ys: &[f64],
    lambdas: &[f64],
) -> Result<ElasticityReport> {
    let (l0, l1) = interval;
    if !(l0 > 0.0 && l0 <= l1 && l1.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "elasticity interval [{l0}, {l1}] needs 0 < l0 <= l1 < inf"
        )));
    }
    let lambdas: Vec<f64> = lambdas
        .iter()
        .filter(|l| **l >= l0 && **l <= l1)
        .copied()
        .collect();
    let lambdas = if lambdas.is_empty() {
        vec![l0, l1]
    } else {
        lambdas
    };

    // (n, lambda, y, V(lambda y), V(y))
    let mut points = Vec::new();
    for n in 0..family.len() {
        let u = family.member(n)?;
        for &lambda in &lambdas {
            for &y in ys {
                points.push((n, lambda, y, u.conjugate(lambda * y)?, u.conjugate(y)?));
            }
        }
    }

    let c2_grid: Vec<f64> = std::iter::once(0.0).chain(log_grid(-20, 20)).collect();
    let mut chosen: Option<ElasticityConstants> = None;
    let mut fallback = ElasticityConstants {
        c1: CONSTANT_CAP,
        c2: CONSTANT_CAP,
        c3: CONSTANT_CAP,
    };
    'outer: for k in 0..=20 {
        let c1 = 2f64.powi(k);
        let mut best: Option<ElasticityConstants> = None;
        for &c2 in &c2_grid {
            let c3 = points
                .iter()
                .map(|&(_, _, y, vl, v)| vl - c1 * v - c2 * y)
                .fold(0.0_f64, f64::max);
            if c3 <= CONSTANT_CAP && best.is_none_or(|b| c2 + c3 < b.c2 + b.c3) {
                best = Some(ElasticityConstants { c1, c2, c3 });
            }
        }
        if let Some(b) = best {
            chosen = Some(b);
            break 'outer;
        }
        if k == 20 {
            let c3 = points
                .iter()
                .map(|&(_, _, y, vl, v)| vl - c1 * v - CONSTANT_CAP * y)
                .fold(0.0_f64, f64::max)
                .min(CONSTANT_CAP);
            fallback = ElasticityConstants {
                c1,
                c2: CONSTANT_CAP,
                c3,
            };
        }
    }
    let constants = chosen.unwrap_or(fallback);

    let mut worst = ElasticityViolation {
        n: 0,
        lambda: lambdas[0],
        y: ys.first().copied().unwrap_or(f64::NAN),
        slack: f64::INFINITY,
    };
    for &(n, lambda, y, vl, v) in &points {
        let slack = constants.c1 * v + constants.c2 * y + constants.c3 - vl;
        if slack < worst.slack {
            worst = ElasticityViolation {
                n,
                lambda,
                y,
                slack,
            };
        }
    }
    Ok(ElasticityReport {
        interval,
        constants,
        holds: worst.slack >= -SLACK_TOL,
        worst,
        grid_points: points.len(),
    })
}

/// `x U_n'(x) / U_n(x)` at `x = X` and `x = -X`.
///
/// Finite-range proxies for the limits at `±inf`; no verdict is drawn.
pub fn check_asymptotic_elasticity(
    family: &UtilityFamily,
    n: usize,
    x_max: f64,
) -> Result<(f64, f64)> {
    let u = family.member(n)?;
    let ratio = |x: f64| -> Result<f64> {
        if let (Some((h, _, _)), Some(sup)) = (u.log_gap(x), u.sup()) {
            // U = sup - e^h, so ln|U| is available without forming U.
            let ln_sup = sup.ln();
            let (sign, ln_abs) = if h < ln_sup {
                (1.0, ln_sup + (-(h - ln_sup).exp()).ln_1p())
            } else {
                (-1.0, h + (-(ln_sup - h).exp()).ln_1p())
            };
            if ln_abs.is_finite() {
                return Ok(sign * x * (u.log_marginal(x) - ln_abs).exp());
            }
        }
        let value = u.value(x);
        if value == 0.0 || !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "U vanishes or overflows at {x}"
            )));
        }
        Ok(x * u.marginal(x) / value)
    };
    if !(u.value(x_max) > 0.0) || !(u.value(-x_max) < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need U({x_max}) > 0 > U(-{x_max})"
        )));
    }
    Ok((ratio(x_max)?, ratio(-x_max)?))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitDeviation {
    pub n: usize,
    pub y: f64,
    /// `|V_n(y) - (beta - x0 y)|`.
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitReport {
    pub x0: f64,
    /// Last value of `U_n'(x0)` along the schedule.
    pub alpha: f64,
    /// Last value of `U_n(x0)` along the schedule.
    pub beta: f64,
    /// Successive differences of `U_n'(x0)` and `U_n(x0)` do not grow.
    pub stabilized: bool,
    pub deviations: Vec<LimitDeviation>,
    /// For every `y`, deviations are nonincreasing over the second half of the schedule.
    pub eventually_decreasing: bool,
    /// `U_n'(x0 - 0.5)` increases and `U_n'(x0 + 0.5)` decreases along the schedule.
    pub marginal_collapse: bool,
    pub holds: bool,
}

impl LimitReport {
    /// Largest deviation at the last schedule index.
    pub fn last_max_deviation(&self) -> f64 {
        let last = self.deviations.iter().map(|d| d.n).max().unwrap_or(0);
        self.deviations
            .iter()
            .filter(|d| d.n == last)
            .map(|d| d.deviation)
            .fold(0.0, f64::max)
    }
}

fn differences_shrink(seq: &[f64]) -> bool {
    let diffs: Vec<f64> = seq.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    diffs
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12 * w[0].max(1.0))
}

/// Estimates `alpha = lim U_n'(x0)`, `beta = lim U_n(x0)` and the deviations of
/// the conjugates from their limit `beta - x0 y`.
pub fn check_limit_assumptions(family: &UtilityFamily, x0: f64, ys: &[f64]) -> Result<LimitReport> {
    let members = (0..family.len())
        .map(|n| family.member(n))
        .collect::<Result<Vec<_>>>()?;
    let alphas: Vec<f64> = members.iter().map(|u| u.marginal(x0)).collect();
    let betas: Vec<f64> = members.iter().map(|u| u.value(x0)).collect();
    let alpha = *alphas.last().unwrap();
    let beta = *betas.last().unwrap();
    let stabilized = differences_shrink(&alphas) && differences_shrink(&betas);

    let mut deviations = Vec::with_capacity(members.len() * ys.len());
    for (n, u) in members.iter().enumerate() {
        for &y in ys {
            deviations.push(LimitDeviation {
                n,
                y,
                deviation: (u.conjugate(y)? - (beta - x0 * y)).abs(),
            });
        }
    }
    let half = members.len() / 2;
    let eventually_decreasing = ys.iter().enumerate().all(|(j, _)| {
        let seq: Vec<f64> = (half..members.len())
            .map(|n| deviations[n * ys.len() + j].deviation)
            .collect();
        seq.windows(2).all(|w| w[1] <= w[0] + 1e-12)
    });

    let below: Vec<f64> = members.iter().map(|u| u.log_marginal(x0 - 0.5)).collect();
    let above: Vec<f64> = members.iter().map(|u| u.log_marginal(x0 + 0.5)).collect();
    let marginal_collapse =
        below.windows(2).all(|w| w[1] > w[0]) && above.windows(2).all(|w| w[1] < w[0]);

    Ok(LimitReport {
        x0,
        alpha,
        beta,
        stabilized,
        deviations,
        eventually_decreasing,
        marginal_collapse,
        holds: stabilized && eventually_decreasing,
    })
}
