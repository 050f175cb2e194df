//! Expected-utility maximization over trading strategies.
//!
//! `u_n(x, G) = sup_phi E_P U_n(x + gains . phi - G)` is computed by damped
//! Newton on the stacked holdings vector, starting from `phi = 0`.
//!
//! For families bounded above (both built-ins) the working objective is
//! `L(phi) = ln E_P exp(h(W))`, where `h = ln(sup U - U)` and `W` is terminal
//! wealth net of the claim. It is convex, equivalent to maximizing `E U(W)`,
//! and evaluated by log-sum-exp, so it stays accurate at risk aversions where
//! `U` itself saturates or overflows. Other families use `-E U(W)` directly.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{Claim, ScenarioTree, Strategy};
use crate::measures::{no_arbitrage, MartingaleMeasure};
use crate::utility::{Utility, UtilityFamily};

/// Holdings beyond this norm signal an arbitrage direction.
const ARBITRAGE_NORM: f64 = 1e8;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
const RIDGE_TRIES: usize = 24;
const STEP_CAP: f64 = 10.0;
const PRECISION_FLOOR: f64 = 1e3 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Form {
    /// Log-gap form when the family is bounded above, direct otherwise.
    Auto,
    /// Always maximize `E U(W)` directly.
    Direct,
}

#[derive(Clone, Copy, Debug)]
pub struct OptimizerConfig {
    /// Stop once the working gradient norm is at most `tol * max(1, |objective|)`.
    pub tol: f64,
    pub max_iter: usize,
    pub form: Form,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            form: Form::Auto,
        }
    }
}

impl OptimizerConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptResult {
    /// `u_n(x, G)` in utils.
    pub value: f64,
    pub strategy: Strategy,
    /// Norm of the working-objective gradient at termination.
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Conjugate bound at the measure implied by the first-order condition, minus `value`.
    pub dual_gap: Option<f64>,
    /// `ln(sup U - value)`, when the log-gap form was used.
    pub log_gap: Option<f64>,
}

impl OptResult {
    /// A quantity increasing in `value` that stays resolvable when `value`
    /// is within rounding of `sup U`.
    pub fn score(&self) -> f64 {
        match self.log_gap {
            Some(l) => -l,
            None => self.value,
        }
    }
}

/// The expected utility of terminal wealth as a function of the stacked holdings.
pub struct Objective<'a> {
    utility: Utility<'a>,
    gains: &'a [Vec<f64>],
    /// `x - G` per terminal node.
    base: Vec<f64>,
    ln_probs: Vec<f64>,
    probs: Vec<f64>,
    log_form: bool,
    dim: usize,
}

impl<'a> Objective<'a> {
    pub fn new(
        tree: &'a ScenarioTree,
        family: &'a UtilityFamily,
        n: usize,
        x: f64,
        claim: &Claim,
        form: Form,
    ) -> Result<Self> {
        if claim.payoffs().len() != tree.num_terminals() {
            return Err(Error::InvalidClaim("claim does not match the tree".into()));
        }
        let utility = family.member(n)?;
        let probs = tree.terminal_probabilities();
        Ok(Self {
            log_form: form == Form::Auto && utility.sup().is_some(),
            utility,
            gains: tree.gains(),
            base: claim.payoffs().iter().map(|g| x - g).collect(),
            ln_probs: probs.iter().map(|p| p.ln()).collect(),
            probs,
            dim: tree.num_holdings(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn uses_log_form(&self) -> bool {
        self.log_form
    }

    /// Terminal wealth net of the claim.
    pub fn wealth(&self, phi: &[f64]) -> Vec<f64> {
        self.base
            .iter()
            .zip(self.gains)
            .map(|(b, g)| b + g.iter().zip(phi).map(|(a, p)| a * p).sum::<f64>())
            .collect()
    }

    /// `E_P U(W)`.
    pub fn value(&self, phi: &[f64]) -> f64 {
        self.wealth(phi)
            .iter()
            .zip(&self.probs)
            .map(|(w, p)| p * self.utility.value(*w))
            .sum()
    }

    /// Gradient of `E_P U(W)` in the holdings.
    pub fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for ((w, p), g) in self.wealth(phi).iter().zip(&self.probs).zip(self.gains) {
            let m = p * self.utility.marginal(*w);
            for (o, a) in out.iter_mut().zip(g) {
                *o += m * a;
            }
        }
        out
    }

    /// Hessian of `E_P U(W)` in the holdings.
    pub fn hessian(&self, phi: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for ((w, p), g) in self.wealth(phi).iter().zip(&self.probs).zip(self.gains) {
            let c = p * self.utility.curvature(*w);
            let g = DVector::from_column_slice(g);
            h += c * &g * g.transpose();
        }
        h
    }

    /// `L(phi) = ln E_P exp(h(W))`, if the family is bounded above.
    pub fn log_gap(&self, phi: &[f64]) -> Option<f64> {
        let terms: Vec<f64> = self
            .wealth(phi)
            .iter()
            .zip(&self.ln_probs)
            .map(|(w, lp)| self.utility.log_gap(*w).map(|(h, _, _)| lp + h))
            .collect::<Option<_>>()?;
        Some(log_sum_exp(&terms))
    }

    /// Working objective to minimize, with gradient and Hessian.
    fn working(&self, phi: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        if !self.log_form {
            let f = -self.value(phi);
            let g = DVector::from_vec(self.gradient(phi)) * -1.0;
            let h = self.hessian(phi) * -1.0;
            return (f, g, h);
        }
        let wealth = self.wealth(phi);
        let parts: Vec<(f64, f64, f64)> = wealth
            .iter()
            .map(|w| {
                self.utility
                    .log_gap(*w)
                    .expect("log form needs a bounded family")
            })
            .collect();
        let terms: Vec<f64> = parts
            .iter()
            .zip(&self.ln_probs)
            .map(|(p, lp)| lp + p.0)
            .collect();
        let l = log_sum_exp(&terms);
        let mut grad = DVector::zeros(self.dim);
        let mut hess = DMatrix::zeros(self.dim, self.dim);
        for ((t, (_, h1, h2)), g) in terms.iter().zip(&parts).zip(self.gains) {
            let weight = (t - l).exp();
            if weight == 0.0 {
                continue;
            }
            let g = DVector::from_column_slice(g);
            grad += (weight * h1) * &g;
            hess += (weight * (h2 + h1 * h1)) * &g * g.transpose();
        }
        hess -= &grad * grad.transpose();
        (l, grad, hess)
    }

    fn working_value(&self, phi: &[f64]) -> f64 {
        if self.log_form {
            self.log_gap(phi).unwrap()
        } else {
            -self.value(phi)
        }
    }

    /// Utility value corresponding to a working-objective value.
    fn to_utility(&self, working: f64) -> f64 {
        if self.log_form {
            self.utility.sup().unwrap() - working.exp()
        } else {
            -working
        }
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Newton direction solving `H d = -g`, regularized when `H` is not positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if let Some(c) = Cholesky::new(h.clone()) {
        let d = c.solve(&(-g));
        if d.iter().all(|v| v.is_finite()) {
            return d;
        }
    }
    let scale = h.diagonal().iter().fold(1e-300_f64, |a, v| a.max(v.abs()));
    let mut ridge = 1e-12 * scale;
    for _ in 0..RIDGE_TRIES {
        let shifted = h + DMatrix::identity(h.nrows(), h.ncols()) * ridge;
        if let Some(c) = Cholesky::new(shifted) {
            let d = c.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        ridge *= 10.0;
    }
    -g
}

/// `u_n(x, G)` with the default optimizer settings and gradient tolerance `tol`.
pub fn max_expected_utility(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    n: usize,
    x: f64,
    claim: &Claim,
    tol: f64,
) -> Result<OptResult> {
    max_expected_utility_with(tree, family, n, x, claim, &OptimizerConfig::with_tol(tol))
}

/// `u_n(x, G)`; fails with [`Error::Arbitrage`] when the tree admits arbitrage.
pub fn max_expected_utility_with(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    n: usize,
    x: f64,
    claim: &Claim,
    config: &OptimizerConfig,
) -> Result<OptResult> {
    if !no_arbitrage(tree) {
        return Err(Error::Arbitrage);
    }
    maximize(tree, family, n, x, claim, config)
}

/// Newton iterations without the arbitrage screen, for callers that ran it once.
pub(crate) fn maximize(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    n: usize,
    x: f64,
    claim: &Claim,
    config: &OptimizerConfig,
) -> Result<OptResult> {
    if !(config.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {} must be positive",
            config.tol
        )));
    }
    let obj = Objective::new(tree, family, n, x, claim, config.form)?;
    let mut phi = vec![0.0; obj.dim()];
    let (mut f, mut g, mut h) = obj.working(&phi);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut iterations = 0;
    loop {
        let gnorm = g.norm();
        if gnorm <= config.tol * f.abs().max(1.0) || obj.dim() == 0 {
            break;
        }
        if iterations >= config.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
        let mut d = newton_direction(&h, &g);
        // Far from the optimum the curvature can be negligible and the Newton
        // step enormous; steps are capped relative to the current holdings.
        let cap = STEP_CAP * phi.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let dn = d.norm();
        if dn > cap {
            d *= cap / dn;
        }
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            d = -&g * (cap / gnorm).min(1.0);
            slope = g.dot(&d);
        }
        // Once the predicted decrease is below the rounding of the objective the
        // line search cannot discriminate; full Newton steps are taken while
        // they still shrink the gradient.
        if -slope <= PRECISION_FLOOR * f.abs().max(1.0) {
            let trial: Vec<f64> = phi.iter().zip(d.iter()).map(|(p, s)| p + s).collect();
            let (ft, gt, ht) = obj.working(&trial);
            if !(ft.is_finite() && gt.norm() < gnorm) {
                break;
            }
            phi = trial;
            (f, g, h) = (ft, gt, ht);
            iterations += 1;
            continue;
        }
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = phi.iter().zip(d.iter()).map(|(p, s)| p + t * s).collect();
            let ft = obj.working_value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO * t * slope {
                break Some(trial);
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some(next) = accepted else {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
            });
        };
        phi = next;
        iterations += 1;
        if phi.iter().map(|v| v * v).sum::<f64>().sqrt() > ARBITRAGE_NORM {
            return Err(Error::Arbitrage);
        }
        if !obj.log_form {
            if let Some(w) = obj
                .wealth(&phi)
                .into_iter()
                .find(|w| obj.utility.clamps(*w))
            {
                return Err(Error::ExponentClamp { wealth: w });
            }
        }
        (f, g, h) = obj.working(&phi);
    }

    let value = obj.to_utility(f);
    let dual_gap = implied_dual_gap(&obj, &phi, x, claim, value);
    Ok(OptResult {
        value,
        strategy: Strategy::from_flat(tree, phi)?,
        gradient_norm: g.norm(),
        iterations,
        dual_gap,
        log_gap: obj.log_form.then_some(f),
    })
}

/// Dual bound at `y = E_P U'(W)` and `dQ/dP = U'(W) / y`, minus `value`.
///
/// At an exact optimizer this pair attains the dual minimum, so the returned
/// gap measures how far the first-order condition is from holding.
fn implied_dual_gap(
    obj: &Objective<'_>,
    phi: &[f64],
    x: f64,
    claim: &Claim,
    value: f64,
) -> Option<f64> {
    let wealth = obj.wealth(phi);
    let marg: Vec<f64> = wealth.iter().map(|w| obj.utility.marginal(*w)).collect();
    let y: f64 = marg.iter().zip(&obj.probs).map(|(m, p)| m * p).sum();
    if !(y > 0.0) || !y.is_finite() {
        return None;
    }
    let mut conj = 0.0;
    let mut eq_claim = 0.0;
    for ((m, p), g) in marg.iter().zip(&obj.probs).zip(claim.payoffs()) {
        conj += p * obj.utility.conjugate(*m).ok()?;
        eq_claim += p * m / y * g;
    }
    let gap = conj + y * (x - eq_claim) - value;
    gap.is_finite().then_some(gap)
}

/// `E_P[V_n(y dQ/dP)] + y (x - E_Q[G])`, an upper bound on `u_n(x, G)`.
///
/// Where `dQ/dP` vanishes the conjugate is taken at `0+`, i.e. `sup U_n`.
pub fn dual_upper_bound(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    n: usize,
    x: f64,
    claim: &Claim,
    q: &MartingaleMeasure,
    y: f64,
) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dual variable {y} must be positive"
        )));
    }
    if q.weights().len() != tree.num_terminals() || claim.payoffs().len() != tree.num_terminals() {
        return Err(Error::InvalidArgument(
            "measure or claim does not match the tree".into(),
        ));
    }
    let u = family.member(n)?;
    let mut e = 0.0;
    for (w, p) in q.weights().iter().zip(tree.terminal_probabilities()) {
        let v = if *w == 0.0 {
            u.conjugate_at_zero()
        } else {
            u.conjugate(y * w / p)?
        };
        e += p * v;
    }
    Ok(e + y * (x - q.expectation(claim)))
}

/// Minimizes [`dual_upper_bound`] over `y`: the log-grid `{2^k : k = -20..20}`
/// followed by golden-section refinement in `ln y` around the best grid point.
pub fn minimize_dual_bound(
    tree: &ScenarioTree,
    family: &UtilityFamily,
    n: usize,
    x: f64,
    claim: &Claim,
    q: &MartingaleMeasure,
) -> Result<(f64, f64)> {
    let bound = |ln_y: f64| dual_upper_bound(tree, family, n, x, claim, q, ln_y.exp());
    let ln2 = std::f64::consts::LN_2;
    let mut best = (0.0, bound(0.0)?);
    for k in -20..=20 {
        let ln_y = k as f64 * ln2;
        let b = bound(ln_y)?;
        if b < best.1 {
            best = (ln_y, b);
        }
    }
    let (mut a, mut b) = (best.0 - ln2, best.0 + ln2);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (bound(c)?, bound(d)?);
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = bound(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = bound(d)?;
        }
    }
    for (ln_y, v) in [(c, fc), (d, fd)] {
        if v < best.1 {
            best = (ln_y, v);
        }
    }
    Ok((best.0.exp(), best.1))
}
