//! Utility indifference prices and the risk-aversion sweep.
//!
//! The seller's indifference price is the least extra capital `p` with
//! `u_n(z + p, G) >= u_n(z, 0)`. The map `p -> u_n(z + p, G)` is continuous and
//! strictly increasing, and `[min G, max G]` always brackets the root, so the
//! price is found by bisection.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Claim, ScenarioTree};
use crate::measures::superreplication_price;
use crate::optimize::{maximize, OptResult, OptimizerConfig};
use crate::utility::UtilityFamily;

/// Largest tolerated disagreement between the superreplication LPs.
pub const SUPERREP_GAP_TOL: f64 = 1e-8;

pub const CSV_HEADER: [&str; 7] = [
    "n",
    "alpha",
    "price",
    "superrep",
    "gap",
    "u_no_claim",
    "iterations",
];

#[derive(Clone, Copy, Debug)]
pub struct PricingConfig {
    /// Bisection stops once the bracket is at most this wide.
    pub price_tol: f64,
    /// Settings of every inner utility maximization.
    pub optimizer: OptimizerConfig,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            price_tol: 1e-4,
            optimizer: OptimizerConfig::with_tol(1e-8),
        }
    }
}

impl PricingConfig {
    pub fn with_tolerances(price_tol: f64, u_tol: f64) -> Self {
        Self {
            price_tol,
            optimizer: OptimizerConfig::with_tol(u_tol),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PricePoint {
    pub n: usize,
    pub alpha: f64,
    pub price: f64,
    pub u_no_claim: f64,
    /// `u_n(z + price, G)`.
    pub u_with_claim: f64,
    /// `superrep - price`.
    pub gap: f64,
    pub bisection_steps: usize,
    /// Newton iterations summed over every utility maximization.
    pub optimizer_iterations: usize,
}

impl PricePoint {
    /// `u_with_claim - u_no_claim`.
    pub fn utility_mismatch(&self) -> f64 {
        self.u_with_claim - self.u_no_claim
    }
}

/// `p_n(z, G)`; computes the superreplication price for the gap column.
pub fn indifference_price(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    n: usize,
    z: f64,
    claim: &Claim,
    price_tol: f64,
) -> Result<PricePoint> {
    let pi = checked_superrep(tree, claim)?;
    let config = PricingConfig {
        price_tol,
        ..PricingConfig::default()
    };
    price_point(tree, family, n, z, claim, pi, &config)
}

fn checked_superrep(tree: &ScenarioTree, claim: &Claim) -> Result<f64> {
    let s = superreplication_price(tree, claim)?;
    if s.duality_gap.abs() > SUPERREP_GAP_TOL {
        return Err(Error::DualityGap { gap: s.duality_gap });
    }
    Ok(s.price)
}

/// `p_n(z, G)` given a precomputed superreplication price `superrep`.
///
/// The tree is assumed free of arbitrage, as certified by computing `superrep`.
pub fn price_point(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    n: usize,
    z: f64,
    claim: &Claim,
    superrep: f64,
    config: &PricingConfig,
) -> Result<PricePoint> {
    if !(config.price_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "price tolerance {} must be positive",
            config.price_tol
        )));
    }
    let zero = Claim::zero(tree);
    let mut optimizer_iterations = 0;
    let mut solve = |x: f64, g: &Claim| -> Result<OptResult> {
        let r = maximize(tree, family, n, x, g, &config.optimizer)?;
        optimizer_iterations += r.iterations;
        Ok(r)
    };
    let base = solve(z, &zero)?;
    let target = base.score();
    let slack = config.optimizer.tol * target.abs().max(1.0);

    let (mut lo, mut hi) = (claim.min(), claim.max());
    let mut bisection_steps = 0;
    let with_claim = if hi - lo <= config.price_tol {
        solve(z + 0.5 * (lo + hi), claim)?
    } else {
        let at_lo = solve(z + lo, claim)?;
        if at_lo.score() > target + slack {
            return Err(Error::BracketViolation {
                price: lo,
                detail: "the claim-free problem does not dominate at min G".into(),
            });
        }
        let at_hi = solve(z + hi, claim)?;
        if at_hi.score() < target - slack {
            return Err(Error::BracketViolation {
                price: hi,
                detail: "the shifted problem does not dominate at max G".into(),
            });
        }
        while hi - lo > config.price_tol {
            let mid = 0.5 * (lo + hi);
            if solve(z + mid, claim)?.score() >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            bisection_steps += 1;
        }
        solve(z + 0.5 * (lo + hi), claim)?
    };
    let price = 0.5 * (lo + hi);
    Ok(PricePoint {
        n,
        alpha: family.alpha(n),
        price,
        u_no_claim: base.value,
        u_with_claim: with_claim.value,
        gap: superrep - price,
        bisection_steps,
        optimizer_iterations,
    })
}

/// How the family enters the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    /// The family as given, with endowment `z`.
    #[serde(rename = "main")]
    Raw,
    /// The family normalized at `z`, so that `U_n(z) = 0` and `U_n'(z) = 1`.
    #[serde(rename = "main2")]
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub final_gap: f64,
    /// Each gap is at most the previous one plus the price tolerance.
    pub nonincreasing: bool,
    pub strictly_decreasing: bool,
    /// Least-squares slope of `ln gap` against `ln alpha` over the last six
    /// points; absent when fewer than two points or a gap is not positive.
    pub log_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriceCurve {
    pub z: f64,
    pub claim: String,
    pub mode: SweepMode,
    pub superrep: f64,
    pub points: Vec<PricePoint>,
    pub verdict: Verdict,
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn verdict(points: &[PricePoint], price_tol: f64) -> Verdict {
    let gaps: Vec<f64> = points.iter().map(|p| p.gap).collect();
    let tail = &points[points.len().saturating_sub(6)..];
    let log_slope = (tail.len() >= 2 && tail.iter().all(|p| p.gap > 0.0)).then(|| {
        let xs: Vec<f64> = tail.iter().map(|p| p.alpha.ln()).collect();
        let ys: Vec<f64> = tail.iter().map(|p| p.gap.ln()).collect();
        ls_slope(&xs, &ys)
    });
    Verdict {
        final_gap: *gaps.last().unwrap(),
        nonincreasing: gaps.windows(2).all(|w| w[1] <= w[0] + price_tol),
        strictly_decreasing: gaps.windows(2).all(|w| w[1] < w[0]),
        log_slope,
    }
}

/// `p_n(z, G)` along the whole schedule of `family`.
///
/// The superreplication price is computed once by both LPs; a disagreement
/// above [`SUPERREP_GAP_TOL`] aborts the sweep. Points are evaluated in
/// parallel and assembled in schedule order.
pub fn convergence_sweep(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    z: f64,
    claim: &Claim,
    mode: SweepMode,
    config: &PricingConfig,
) -> Result<PriceCurve> {
    if family.is_empty() || !family.is_increasing() {
        return Err(Error::InvalidArgument(
            "sweep needs a nonempty, strictly increasing schedule".into(),
        ));
    }
    let superrep = checked_superrep(tree, claim)?;
    let family = match mode {
        SweepMode::Raw => family.clone(),
        SweepMode::Normalized => family.normalized(z)?,
    };
    let points = (0..family.len())
        .into_par_iter()
        .map(|n| price_point(tree, &family, n, z, claim, superrep, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(PriceCurve {
        z,
        claim: claim.name().to_string(),
        mode,
        superrep,
        verdict: verdict(&points, config.price_tol),
        points,
    })
}

/// One CSV row of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub n: usize,
    pub alpha: f64,
    pub price: f64,
    pub superrep: f64,
    pub gap: f64,
    pub u_no_claim: f64,
    pub iterations: usize,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl PriceCurve {
    pub fn rows(&self) -> Vec<CsvRow> {
        self.points
            .iter()
            .map(|p| CsvRow {
                n: p.n,
                alpha: p.alpha,
                price: p.price,
                superrep: self.superrep,
                gap: p.gap,
                u_no_claim: p.u_no_claim,
                iterations: p.bisection_steps,
            })
            .collect()
    }

    /// Writes the curve as CSV with 17 significant digits per real.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in self.rows() {
            w.write_record([
                r.n.to_string(),
                fmt17(r.alpha),
                fmt17(r.price),
                fmt17(r.superrep),
                fmt17(r.gap),
                fmt17(r.u_no_claim),
                r.iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the CSV to `path` through a temporary file in the same directory
    /// and a rename, so no partial file is left behind on failure.
    pub fn write_csv_atomic(&self, path: &Path) -> Result<()> {
        let dir = path
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let name = path.file_name().ok_or_else(|| {
            Error::InvalidArgument(format!("{} is not a file path", path.display()))
        })?;
        let tmp = dir.join(format!(
            ".{}.tmp-{}",
            name.to_string_lossy(),
            std::process::id()
        ));
        let result = fs::File::create(&tmp)
            .map_err(Error::from)
            .and_then(|f| {
                self.write_csv(&f)?;
                f.sync_all()?;
                Ok(())
            })
            .and_then(|_| fs::rename(&tmp, path).map_err(Error::from));
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result
    }
}

/// Parses CSV written by [`PriceCurve::write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Schema(format!("unexpected CSV header {header:?}")));
    }
    let real = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Schema(format!("not a number: {s}")))
    };
    let int = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Schema(format!("not an integer: {s}")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Schema(format!("row with {} fields", rec.len())));
        }
        rows.push(CsvRow {
            n: int(&rec[0])?,
            alpha: real(&rec[1])?,
            price: real(&rec[2])?,
            superrep: real(&rec[3])?,
            gap: real(&rec[4])?,
            u_no_claim: real(&rec[5])?,
            iterations: int(&rec[6])?,
        });
    }
    Ok(rows)
}
