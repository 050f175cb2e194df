//! Martingale measures on a scenario tree and superreplication.
//!
//! A measure is a weight per terminal node. The martingale condition at
//! interior node `m` says the expected increment of every asset over the step
//! out of `m` vanishes; written on terminal weights this is `gains^T q = 0`
//! (see [`ScenarioTree::gains`]), one equation per interior node and asset.
//!
//! Superreplication is solved twice: as the primal LP over initial capital and
//! holdings, and as the dual LP over the closed polytope of martingale
//! measures. The two are independent solves, and their difference is reported
//! as the duality gap.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::market::{Claim, ScenarioTree, Strategy};
use crate::utility::UtilityFamily;

const WEIGHT_SUM_TOL: f64 = 1e-10;
const MARTINGALE_TOL: f64 = 1e-9;
/// LP outputs below this are treated as exact zeros.
const LP_ZERO: f64 = 1e-12;
/// Minimal weight of the most interior measure for the market to count as arbitrage-free.
const INTERIOR_SLACK: f64 = 1e-9;
const MAX_VERTEX_TERMINALS: usize = 16;

/// A probability on the terminal nodes under which prices are martingales.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleMeasure {
    weights: Vec<f64>,
    equivalent: bool,
}

impl MartingaleMeasure {
    /// Validates nonnegativity, normalization and the martingale condition.
    pub fn new(tree: &ScenarioTree, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != tree.num_terminals() {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {} terminal nodes",
                weights.len(),
                tree.num_terminals()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "weight {w} is not a probability"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {sum}")));
        }
        let residual = martingale_residual(tree, &weights);
        if residual > MARTINGALE_TOL {
            return Err(Error::InvalidMeasure(format!(
                "martingale condition violated by {residual:e}"
            )));
        }
        let equivalent = weights.iter().all(|&w| w > 0.0);
        Ok(Self {
            weights,
            equivalent,
        })
    }

    /// The physical measure, if it is itself a martingale measure.
    pub fn physical(tree: &ScenarioTree) -> Result<Self> {
        Self::new(tree, tree.terminal_probabilities())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// All terminal weights strictly positive (the measure is equivalent to P).
    pub fn is_equivalent(&self) -> bool {
        self.equivalent
    }

    pub fn expectation(&self, claim: &Claim) -> f64 {
        self.weights
            .iter()
            .zip(claim.payoffs())
            .map(|(q, g)| q * g)
            .sum()
    }
}

/// Largest absolute entry of `gains^T q`.
pub fn martingale_residual(tree: &ScenarioTree, weights: &[f64]) -> f64 {
    let cols = tree.num_holdings();
    let mut acc = vec![0.0; cols];
    for (row, &q) in tree.gains().iter().zip(weights) {
        for (a, g) in acc.iter_mut().zip(row) {
            *a += q * g;
        }
    }
    acc.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn clean_weights(mut w: Vec<f64>) -> Vec<f64> {
    for v in w.iter_mut() {
        if *v < LP_ZERO {
            *v = 0.0;
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Adds `sum q = 1` and `gains^T q = 0` over the first `num_terminals` columns.
/// With `extra = Some(t)`, column `t` is a common floor added to every weight,
/// so that `q_w = x_t + x_w`.
fn add_polytope_rows(lp: &mut LinearProgram, tree: &ScenarioTree, extra: Option<usize>) {
    let nvars = lp.num_vars();
    let omega = tree.num_terminals();
    let mut sum = vec![0.0; nvars];
    sum[..omega].iter_mut().for_each(|v| *v = 1.0);
    if let Some(t) = extra {
        sum[t] = omega as f64;
    }
    lp.add_row(sum, Relation::Eq, 1.0);
    for j in 0..tree.num_holdings() {
        let mut row = vec![0.0; nvars];
        let mut total = 0.0;
        for (w, gains) in tree.gains().iter().enumerate() {
            row[w] = gains[j];
            total += gains[j];
        }
        if row.iter().all(|v| *v == 0.0) {
            continue;
        }
        if let Some(t) = extra {
            row[t] = total;
        }
        lp.add_row(row, Relation::Eq, 0.0);
    }
}

/// The martingale measure maximizing its smallest terminal weight, if that
/// weight is positive. This is the LP deciding strict feasibility of the polytope.
pub fn most_interior_measure(tree: &ScenarioTree) -> Result<Option<MartingaleMeasure>> {
    let omega = tree.num_terminals();
    // Variables: s_w >= 0 and the common floor t >= 0, with q_w = t + s_w.
    let mut lp = LinearProgram::new(omega + 1);
    lp.objective[omega] = 1.0;
    add_polytope_rows(&mut lp, tree, Some(omega));
    match lp.solve() {
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Optimal { x, .. } => {
            let t = x[omega];
            if t <= INTERIOR_SLACK {
                return Ok(None);
            }
            let weights: Vec<f64> = x[..omega].iter().map(|s| s + t).collect();
            let s: f64 = weights.iter().sum();
            let weights = weights.into_iter().map(|w| w / s).collect();
            MartingaleMeasure::new(tree, weights).map(Some)
        }
        LpOutcome::Unbounded => Err(Error::Lp("interior measure LP unbounded".into())),
        LpOutcome::IterationLimit => Err(Error::Lp("pivot limit reached".into())),
    }
}

/// True iff some strictly positive martingale measure exists.
pub fn no_arbitrage(tree: &ScenarioTree) -> bool {
    matches!(most_interior_measure(tree), Ok(Some(_)))
}

/// Outcome of the superreplication primal/dual pair.
#[derive(Clone, Debug)]
pub struct SuperrepResult {
    /// Dual optimum: `max E_Q[G]` over the closed martingale polytope.
    pub price: f64,
    pub optimal_measure: MartingaleMeasure,
    /// Primal optimum: cheapest initial capital and the dominating strategy.
    pub initial_capital: f64,
    pub strategy: Strategy,
    /// `initial_capital - price`.
    pub duality_gap: f64,
}

impl SuperrepResult {
    /// The maximizing measure lies on the boundary of the polytope, so it is a
    /// limit of equivalent martingale measures rather than one of them.
    pub fn is_closure_element(&self) -> bool {
        !self.optimal_measure.is_equivalent()
    }
}

fn superrep_dual(tree: &ScenarioTree, claim: &Claim) -> Result<(f64, MartingaleMeasure)> {
    let omega = tree.num_terminals();
    let mut lp = LinearProgram::new(omega);
    lp.objective.copy_from_slice(claim.payoffs());
    add_polytope_rows(&mut lp, tree, None);
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => {
            let q = MartingaleMeasure::new(tree, clean_weights(x))?;
            Ok((q.expectation(claim), q))
        }
        LpOutcome::Infeasible => Err(Error::Arbitrage),
        LpOutcome::Unbounded => Err(Error::Lp("dual LP unbounded on a bounded polytope".into())),
        LpOutcome::IterationLimit => Err(Error::Lp("pivot limit reached".into())),
    }
}

fn superrep_primal(tree: &ScenarioTree, claim: &Claim) -> Result<(f64, Strategy)> {
    // Free variables split as positive and negative parts:
    // [x+, x-, phi+_0.., phi-_0..]; minimize x subject to terminal dominance.
    let j = tree.num_holdings();
    let mut lp = LinearProgram::new(2 + 2 * j);
    lp.objective[0] = -1.0;
    lp.objective[1] = 1.0;
    for (gains, &g) in tree.gains().iter().zip(claim.payoffs()) {
        let mut row = vec![0.0; 2 + 2 * j];
        row[0] = 1.0;
        row[1] = -1.0;
        for (k, &a) in gains.iter().enumerate() {
            row[2 + k] = a;
            row[2 + j + k] = -a;
        }
        lp.add_row(row, Relation::Ge, g);
    }
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => {
            let capital = x[0] - x[1];
            let flat = (0..j).map(|k| x[2 + k] - x[2 + j + k]).collect();
            Ok((capital, Strategy::from_flat(tree, flat)?))
        }
        LpOutcome::Unbounded => Err(Error::Arbitrage),
        LpOutcome::Infeasible => Err(Error::Lp("primal LP infeasible".into())),
        LpOutcome::IterationLimit => Err(Error::Lp("pivot limit reached".into())),
    }
}

/// Superreplication price by both LPs.
pub fn superreplication_price(tree: &ScenarioTree, claim: &Claim) -> Result<SuperrepResult> {
    if claim.payoffs().len() != tree.num_terminals() {
        return Err(Error::InvalidClaim("claim does not match the tree".into()));
    }
    if !no_arbitrage(tree) {
        return Err(Error::Arbitrage);
    }
    let (price, optimal_measure) = superrep_dual(tree, claim)?;
    let (initial_capital, strategy) = superrep_primal(tree, claim)?;
    Ok(SuperrepResult {
        price,
        optimal_measure,
        initial_capital,
        strategy,
        duality_gap: initial_capital - price,
    })
}

/// `dQ/dP` per terminal node.
pub fn density(tree: &ScenarioTree, q: &MartingaleMeasure) -> Vec<f64> {
    q.weights()
        .iter()
        .zip(tree.terminal_probabilities())
        .map(|(w, p)| w / p)
        .collect()
}

/// Smallest and largest value of `dQ/dP`.
pub fn density_bounds(tree: &ScenarioTree, q: &MartingaleMeasure) -> (f64, f64) {
    density(tree, q)
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        })
}

/// `H(Q|P) = sum q ln(q / p)` with `0 ln 0 = 0`.
pub fn relative_entropy(tree: &ScenarioTree, q: &MartingaleMeasure) -> f64 {
    q.weights()
        .iter()
        .zip(tree.terminal_probabilities())
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, p)| w * (w / p).ln())
        .sum()
}

/// `alpha q0 + (1 - alpha) q` for `alpha` in the open unit interval.
pub fn mixture(
    q0: &MartingaleMeasure,
    q: &MartingaleMeasure,
    alpha: f64,
) -> Result<MartingaleMeasure> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mixture weight {alpha} outside (0, 1)"
        )));
    }
    if q0.weights.len() != q.weights.len() {
        return Err(Error::InvalidMeasure(
            "measures live on different trees".into(),
        ));
    }
    let weights: Vec<f64> = q0
        .weights
        .iter()
        .zip(&q.weights)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    let equivalent = weights.iter().all(|&w| w > 0.0);
    Ok(MartingaleMeasure {
        weights,
        equivalent,
    })
}

/// Vertices of the closed martingale polytope, by enumerating supports whose
/// constraint columns are linearly independent. Independent of the simplex
/// code; exponential in the number of terminals, so limited to small trees.
pub fn polytope_vertices(tree: &ScenarioTree) -> Result<Vec<MartingaleMeasure>> {
    let omega = tree.num_terminals();
    if omega > MAX_VERTEX_TERMINALS {
        return Err(Error::InvalidArgument(format!(
            "vertex enumeration limited to {MAX_VERTEX_TERMINALS} terminals, tree has {omega}"
        )));
    }
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0; omega]];
    let mut rhs = vec![1.0];
    for j in 0..tree.num_holdings() {
        let row: Vec<f64> = tree.gains().iter().map(|g| g[j]).collect();
        if row.iter().any(|v| *v != 0.0) {
            rows.push(row);
            rhs.push(0.0);
        }
    }
    let full = DMatrix::from_fn(rows.len(), omega, |i, j| rows[i][j]);
    let rank = full.clone().svd(false, false).rank(1e-10);
    let b = DVector::from_vec(rhs);

    let mut out: Vec<MartingaleMeasure> = Vec::new();
    for mask in 1u32..(1 << omega) {
        let support: Vec<usize> = (0..omega).filter(|i| mask & (1 << i) != 0).collect();
        if support.len() > rank {
            continue;
        }
        let sub = full.select_columns(support.iter());
        let svd = sub.clone().svd(true, true);
        if svd.rank(1e-10) < support.len() {
            continue;
        }
        let Ok(sol) = svd.solve(&b, 1e-12) else {
            continue;
        };
        if (&sub * &sol - &b).amax() > 1e-10 || sol.iter().any(|v| *v <= 1e-12) {
            continue;
        }
        let mut weights = vec![0.0; omega];
        for (k, &i) in support.iter().enumerate() {
            weights[i] = sol[k];
        }
        if let Ok(q) = MartingaleMeasure::new(tree, weights) {
            out.push(q);
        }
    }
    Ok(out)
}

/// Boundedness of `E_P |V_n(dQ0/dP)|` along a family's schedule.
#[derive(Clone, Debug)]
pub struct CompactnessReport {
    /// `E_P |V_n(dQ0/dP)|` per schedule index.
    pub values: Vec<f64>,
    pub sup: f64,
    /// No value exceeds the running maximum of its predecessors by more than 1e-6.
    pub bounded: bool,
}

pub fn check_compactness(
    tree: &ScenarioTree,
    q0: &MartingaleMeasure,
    family: &UtilityFamily,
) -> Result<CompactnessReport> {
    if !q0.is_equivalent() {
        return Err(Error::NotEquivalent(
            "compactness needs a strictly positive density".into(),
        ));
    }
    let dens = density(tree, q0);
    let probs = tree.terminal_probabilities();
    let mut values = Vec::with_capacity(family.len());
    for n in 0..family.len() {
        let u = family.member(n)?;
        let mut e = 0.0;
        for (d, p) in dens.iter().zip(&probs) {
            e += p * u.conjugate(*d)?.abs();
        }
        values.push(e);
    }
    let mut running = f64::NEG_INFINITY;
    let mut bounded = values.iter().all(|v| v.is_finite());
    for &v in &values {
        if running.is_finite() && v > running + 1e-6 {
            bounded = false;
        }
        running = running.max(v);
    }
    Ok(CompactnessReport {
        sup: running,
        values,
        bounded,
    })
}
