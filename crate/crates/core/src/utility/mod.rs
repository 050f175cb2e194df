//! Parametric utility families `n -> U_n` on the whole real line.
//!
//! A [`UtilityFamily`] pairs a functional shape with a schedule of risk
//! aversion parameters `alpha_0 < alpha_1 < ...`; [`UtilityFamily::member`]
//! gives the evaluators of a single `U_n`. Two shapes are built in:
//!
//! * exponential, `U(x) = (1 - exp(-alpha x)) / alpha`, with absolute risk aversion `alpha`;
//! * power, `U(x) = (1 - (1 + x)^-alpha) / alpha` for `x > 0` and
//!   `(1 - (1 - x)^(alpha + 2)) / (alpha + 2)` for `x <= 0`, which is `C^2` at 0.
//!
//! Both satisfy `U(0) = 0` and `U'(0) = 1`. Custom shapes are supplied as
//! callables through [`ParametricUtility`].
//!
//! [`normalize`] rescales a family to `(U_n(x) - U_n(z)) / U_n'(z)`. For the
//! built-in shapes this is evaluated in log space, so a normalized member is
//! accurate even when `U_n'(z)` itself underflows.

mod checks;
mod shapes;

pub use checks::{
    check_asymptotic_elasticity, check_elasticity, check_limit_assumptions,
    check_risk_aversion_divergence, elasticity_slack, log_grid, DivergenceReport,
    ElasticityConstants, ElasticityReport, ElasticityViolation, LimitDeviation, LimitReport,
};

use std::fmt;
use std::sync::Arc;

use shapes::Shape;

use crate::error::{Error, Result};

const INVERSE_MAX_ITER: usize = 200;
const BRACKET_DOUBLINGS: usize = 64;

/// A user-supplied utility shape, parametrized by the risk-aversion scale `alpha`.
///
/// Implementations must be pure; they are evaluated concurrently.
pub trait ParametricUtility: Send + Sync + fmt::Debug {
    fn value(&self, alpha: f64, x: f64) -> f64;
    fn marginal(&self, alpha: f64, x: f64) -> f64;
    fn curvature(&self, alpha: f64, x: f64) -> f64;
}

/// The exponential shape evaluated through the plain formulas, with no
/// closed-form conjugate. Useful to exercise the generic code paths.
#[derive(Debug, Clone, Copy)]
pub struct PlainExponential;

impl ParametricUtility for PlainExponential {
    fn value(&self, a: f64, x: f64) -> f64 {
        (1.0 - (-a * x).exp()) / a
    }
    fn marginal(&self, a: f64, x: f64) -> f64 {
        (-a * x).exp()
    }
    fn curvature(&self, a: f64, x: f64) -> f64 {
        -a * (-a * x).exp()
    }
}

/// The power shape through the plain formulas.
#[derive(Debug, Clone, Copy)]
pub struct PlainPower;

impl ParametricUtility for PlainPower {
    fn value(&self, a: f64, x: f64) -> f64 {
        if x > 0.0 {
            (1.0 - (1.0 + x).powf(-a)) / a
        } else {
            (1.0 - (1.0 - x).powf(a + 2.0)) / (a + 2.0)
        }
    }
    fn marginal(&self, a: f64, x: f64) -> f64 {
        if x > 0.0 {
            (1.0 + x).powf(-(a + 1.0))
        } else {
            (1.0 - x).powf(a + 1.0)
        }
    }
    fn curvature(&self, a: f64, x: f64) -> f64 {
        if x > 0.0 {
            -(a + 1.0) * (1.0 + x).powf(-(a + 2.0))
        } else {
            -(a + 1.0) * (1.0 - x).powf(a)
        }
    }
}

#[derive(Clone, Debug)]
pub enum FamilyKind {
    Exponential,
    Power,
    Custom(Arc<dyn ParametricUtility>),
}

impl FamilyKind {
    fn shape(&self) -> Option<Shape> {
        match self {
            FamilyKind::Exponential => Some(Shape::Exponential),
            FamilyKind::Power => Some(Shape::Power),
            FamilyKind::Custom(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Exponential => "exponential",
            FamilyKind::Power => "power",
            FamilyKind::Custom(_) => "custom",
        }
    }
}

#[derive(Clone, Debug)]
pub struct UtilityFamily {
    kind: FamilyKind,
    schedule: Vec<f64>,
    anchor: Option<f64>,
}

impl UtilityFamily {
    pub fn new(kind: FamilyKind, schedule: Vec<f64>) -> Result<Self> {
        if schedule.is_empty() {
            return Err(Error::InvalidArgument(
                "empty risk-aversion schedule".into(),
            ));
        }
        if let Some(a) = schedule.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "risk-aversion parameter {a} is not positive"
            )));
        }
        Ok(Self {
            kind,
            schedule,
            anchor: None,
        })
    }

    pub fn exponential(schedule: Vec<f64>) -> Result<Self> {
        Self::new(FamilyKind::Exponential, schedule)
    }

    pub fn power(schedule: Vec<f64>) -> Result<Self> {
        Self::new(FamilyKind::Power, schedule)
    }

    pub fn custom(utility: Arc<dyn ParametricUtility>, schedule: Vec<f64>) -> Result<Self> {
        Self::new(FamilyKind::Custom(utility), schedule)
    }

    /// Geometric schedule `base^0, ..., base^(len-1)`.
    pub fn geometric_schedule(base: f64, len: usize) -> Vec<f64> {
        (0..len).map(|k| base.powi(k as i32)).collect()
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn schedule(&self) -> &[f64] {
        &self.schedule
    }

    pub fn len(&self) -> usize {
        self.schedule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedule.is_empty()
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.schedule[n]
    }

    /// Wealth level `z` at which the family was normalized, if any.
    pub fn anchor(&self) -> Option<f64> {
        self.anchor
    }

    pub fn is_increasing(&self) -> bool {
        self.schedule.windows(2).all(|w| w[1] > w[0])
    }

    /// `U_n` with its derivatives, conjugate and inverse marginal.
    pub fn member(&self, n: usize) -> Result<Utility<'_>> {
        let alpha = *self.schedule.get(n).ok_or_else(|| {
            Error::InvalidArgument(format!("index {n} outside a schedule of {}", self.len()))
        })?;
        let anchor = match self.anchor {
            None => None,
            Some(z) => Some(Anchor::new(&self.kind, alpha, z)?),
        };
        Ok(Utility {
            kind: &self.kind,
            alpha,
            anchor,
        })
    }

    /// The family `(U_n(x) - U_n(z)) / U_n'(z)`.
    pub fn normalized(&self, z: f64) -> Result<Self> {
        if !z.is_finite() {
            return Err(Error::InvalidArgument(format!("normalization point {z}")));
        }
        // Normalizing twice only depends on the last anchor.
        let out = Self {
            kind: self.kind.clone(),
            schedule: self.schedule.clone(),
            anchor: Some(z),
        };
        for n in 0..out.len() {
            out.member(n)?;
        }
        Ok(out)
    }
}

/// `Ũ_n(x) = (U_n(x) - U_n(z)) / U_n'(z)` for every scheduled `n`.
pub fn normalize(family: &UtilityFamily, z: f64) -> Result<UtilityFamily> {
    family.normalized(z)
}

#[derive(Clone, Copy, Debug)]
struct Anchor {
    /// `ln U'(z)`.
    log_scale: f64,
    /// Built-ins: `sup Ũ`. Custom: `U(z)`.
    level: f64,
    /// Custom only: `U'(z)`.
    scale: f64,
}

impl Anchor {
    fn new(kind: &FamilyKind, alpha: f64, z: f64) -> Result<Self> {
        match kind.shape() {
            Some(s) => {
                let log_scale = s.log_marginal(alpha, z);
                let level = (s.log_gap(alpha, z).0 - log_scale).exp();
                Ok(Self {
                    log_scale,
                    level,
                    scale: f64::NAN,
                })
            }
            None => {
                let FamilyKind::Custom(f) = kind else {
                    unreachable!()
                };
                let scale = f.marginal(alpha, z);
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::NonPositiveMarginal { x: z, value: scale });
                }
                Ok(Self {
                    log_scale: scale.ln(),
                    level: f.value(alpha, z),
                    scale,
                })
            }
        }
    }
}

/// A single member `U_n` of a family.
#[derive(Clone, Copy, Debug)]
pub struct Utility<'a> {
    kind: &'a FamilyKind,
    alpha: f64,
    anchor: Option<Anchor>,
}

impl Utility<'_> {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn value(&self, x: f64) -> f64 {
        let a = self.alpha;
        match (self.kind, self.anchor) {
            (FamilyKind::Custom(f), None) => f.value(a, x),
            (FamilyKind::Custom(f), Some(an)) => (f.value(a, x) - an.level) / an.scale,
            (k, None) => k.shape().unwrap().value(a, x),
            (k, Some(an)) => {
                let s = k.shape().unwrap();
                an.level - (s.log_gap(a, x).0 - an.log_scale).exp()
            }
        }
    }

    pub fn marginal(&self, x: f64) -> f64 {
        let a = self.alpha;
        match (self.kind, self.anchor) {
            (FamilyKind::Custom(f), None) => f.marginal(a, x),
            (FamilyKind::Custom(f), Some(an)) => f.marginal(a, x) / an.scale,
            (k, None) => k.shape().unwrap().marginal(a, x),
            (k, Some(an)) => (k.shape().unwrap().log_marginal(a, x) - an.log_scale).exp(),
        }
    }

    pub fn curvature(&self, x: f64) -> f64 {
        let a = self.alpha;
        match (self.kind, self.anchor) {
            (FamilyKind::Custom(f), None) => f.curvature(a, x),
            (FamilyKind::Custom(f), Some(an)) => f.curvature(a, x) / an.scale,
            (k, None) => k.shape().unwrap().curvature(a, x),
            (k, Some(an)) => -(k.shape().unwrap().log_neg_curvature(a, x) - an.log_scale).exp(),
        }
    }

    /// `ln U'(x)`, finite even where `U'(x)` over- or underflows for built-in shapes.
    pub fn log_marginal(&self, x: f64) -> f64 {
        match self.kind.shape() {
            Some(s) => s.log_marginal(self.alpha, x) - self.anchor.map_or(0.0, |a| a.log_scale),
            None => self.marginal(x).ln(),
        }
    }

    /// Whether evaluating at `x` hits the exponent clamp of the exponential shape.
    pub fn clamps(&self, x: f64) -> bool {
        self.anchor.is_none() && self.kind.shape().is_some_and(|s| s.clamps(self.alpha, x))
    }

    /// Absolute risk aversion `-U''(x) / U'(x)`.
    pub fn risk_aversion(&self, x: f64) -> Result<f64> {
        if let Some(s) = self.kind.shape() {
            return Ok(s.risk_aversion(self.alpha, x));
        }
        let m = self.marginal(x);
        if !(m > 0.0) {
            return Err(Error::NonPositiveMarginal { x, value: m });
        }
        Ok(-self.curvature(x) / m)
    }

    /// `sup_x U(x)`, when the shape is known to be bounded above.
    pub fn sup(&self) -> Option<f64> {
        let s = self.kind.shape()?;
        Some(match self.anchor {
            None => s.sup(self.alpha),
            Some(an) => an.level,
        })
    }

    /// `h(x) = ln(sup U - U(x))` with `h'` and `h''`, for shapes bounded above.
    ///
    /// Maximizing `E U(W)` is the same as minimizing `ln E exp(h(W))`, a convex
    /// function of the wealth that does not overflow at large risk aversion.
    pub fn log_gap(&self, x: f64) -> Option<(f64, f64, f64)> {
        let s = self.kind.shape()?;
        let (h, h1, h2) = s.log_gap(self.alpha, x);
        Some((h - self.anchor.map_or(0.0, |a| a.log_scale), h1, h2))
    }

    /// `I(y)`, the inverse of `U'`.
    pub fn inverse_marginal(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "marginal level {y} must be positive"
            )));
        }
        match self.kind.shape() {
            Some(s) => {
                let ln_y = y.ln() + self.anchor.map_or(0.0, |a| a.log_scale);
                Ok(s.inverse_marginal_ln(self.alpha, ln_y))
            }
            None => self.inverse_marginal_numeric(y),
        }
    }

    /// `I(y)` by geometric bracketing from 0 and bisection on the decreasing `U'`.
    pub fn inverse_marginal_numeric(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "marginal level {y} must be positive"
            )));
        }
        let mut lo = -1.0;
        let mut hi = 1.0;
        let mut k = 0;
        while !(self.marginal(lo) >= y) {
            lo *= 2.0;
            k += 1;
            if k > BRACKET_DOUBLINGS {
                return Err(Error::OutsideMarginalRange {
                    y,
                    lo: self.marginal(hi),
                    hi: self.marginal(lo),
                });
            }
        }
        k = 0;
        while !(self.marginal(hi) <= y) {
            hi *= 2.0;
            k += 1;
            if k > BRACKET_DOUBLINGS {
                return Err(Error::OutsideMarginalRange {
                    y,
                    lo: self.marginal(hi),
                    hi: self.marginal(lo),
                });
            }
        }
        for _ in 0..INVERSE_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.marginal(mid) > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = if (self.marginal(lo) - y).abs() < (self.marginal(hi) - y).abs() {
            lo
        } else {
            hi
        };
        let residual = (self.marginal(x) - y).abs();
        if residual > 1e-10 * y.max(1.0) {
            return Err(Error::OutsideMarginalRange {
                y,
                lo: self.marginal(hi),
                hi: self.marginal(lo),
            });
        }
        Ok(x)
    }

    /// Fenchel conjugate `V(y) = sup_x U(x) - x y`.
    ///
    /// Closed form for the built-in shapes, `U(I(y)) - y I(y)` otherwise.
    pub fn conjugate(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "conjugate needs y > 0, got {y}"
            )));
        }
        match (self.kind.shape(), self.anchor) {
            (Some(s), None) => Ok(s.conjugate(self.alpha, y)),
            (Some(_), Some(_)) => {
                let x = self.inverse_marginal(y)?;
                Ok(self.value(x) - x * y)
            }
            (None, _) => self.conjugate_numeric(y),
        }
    }

    /// `V(y)` through the numerically inverted marginal, for any shape.
    pub fn conjugate_numeric(&self, y: f64) -> Result<f64> {
        let x = self.inverse_marginal_numeric(y)?;
        Ok(self.value(x) - x * y)
    }

    /// `V(0+) = sup U`; infinite when the shape is not known to be bounded.
    pub fn conjugate_at_zero(&self) -> f64 {
        self.sup().unwrap_or(f64::INFINITY)
    }
}
