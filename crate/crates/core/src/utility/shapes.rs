//! Closed forms for the built-in families.
//!
//! Both families are bounded above by `1/alpha`. Besides the utility and its
//! derivatives each shape exposes the log of the distance to that bound,
//! `h(x) = ln(1/alpha - U(x))`, which stays finite where `U` itself overflows.

/// Exponents of `exp` in the exponential family are clamped to this magnitude.
pub(crate) const EXP_CLAMP: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Shape {
    /// `U(x) = (1 - exp(-a x)) / a`.
    Exponential,
    /// `U(x) = (1 - (1 + x)^-a) / a` for `x > 0`, `(1 - (1 - x)^(a + 2)) / (a + 2)` for `x <= 0`.
    Power,
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Shape {
    pub(crate) fn clamps(self, a: f64, x: f64) -> bool {
        matches!(self, Shape::Exponential) && (a * x).abs() > EXP_CLAMP
    }

    pub(crate) fn value(self, a: f64, x: f64) -> f64 {
        match self {
            Shape::Exponential => -(-a * x).clamp(-EXP_CLAMP, EXP_CLAMP).exp_m1() / a,
            Shape::Power => {
                if x > 0.0 {
                    -(-a * x.ln_1p()).exp_m1() / a
                } else {
                    let b = a + 2.0;
                    -(b * (-x).ln_1p()).exp_m1() / b
                }
            }
        }
    }

    pub(crate) fn marginal(self, a: f64, x: f64) -> f64 {
        match self {
            Shape::Exponential => (-a * x).clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
            Shape::Power => self.log_marginal(a, x).exp(),
        }
    }

    pub(crate) fn curvature(self, a: f64, x: f64) -> f64 {
        match self {
            Shape::Exponential => -a * (-a * x).clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
            Shape::Power => -self.log_neg_curvature(a, x).exp(),
        }
    }

    pub(crate) fn log_marginal(self, a: f64, x: f64) -> f64 {
        match self {
            Shape::Exponential => -a * x,
            Shape::Power => {
                if x > 0.0 {
                    -(a + 1.0) * x.ln_1p()
                } else {
                    (a + 1.0) * (-x).ln_1p()
                }
            }
        }
    }

    /// `ln(-U''(x))`.
    pub(crate) fn log_neg_curvature(self, a: f64, x: f64) -> f64 {
        match self {
            Shape::Exponential => a.ln() - a * x,
            Shape::Power => {
                if x > 0.0 {
                    (a + 1.0).ln() - (a + 2.0) * x.ln_1p()
                } else {
                    (a + 1.0).ln() + a * (-x).ln_1p()
                }
            }
        }
    }

    pub(crate) fn risk_aversion(self, a: f64, x: f64) -> f64 {
        match self {
            Shape::Exponential => a,
            Shape::Power => (a + 1.0) / (1.0 + x.abs()),
        }
    }

    pub(crate) fn sup(self, a: f64) -> f64 {
        1.0 / a
    }

    /// `h(x) = ln(sup U - U(x))` with its first two derivatives.
    pub(crate) fn log_gap(self, a: f64, x: f64) -> (f64, f64, f64) {
        match self {
            Shape::Exponential => (-a * x - a.ln(), -a, 0.0),
            Shape::Power => {
                if x > 0.0 {
                    let l = x.ln_1p();
                    let u = 1.0 + x;
                    (-a * l - a.ln(), -a / u, a / (u * u))
                } else {
                    // sup U - U(x) = k + exp(g(x)), k = 1/a - 1/b, g = b ln(1 - x) - ln b
                    let b = a + 2.0;
                    let ln_k = (2.0 / (a * b)).ln();
                    let v = 1.0 - x;
                    let g = b * (-x).ln_1p() - b.ln();
                    let g1 = -b / v;
                    let g2 = -b / (v * v);
                    let s = sigmoid(g - ln_k);
                    let h = ln_k + softplus(g - ln_k);
                    (h, s * g1, s * g2 + s * (1.0 - s) * g1 * g1)
                }
            }
        }
    }

    /// Fenchel conjugate `sup_x U(x) - x y`, `y > 0`.
    pub(crate) fn conjugate(self, a: f64, y: f64) -> f64 {
        match self {
            Shape::Exponential => (y * y.ln() + 1.0 - y) / a,
            Shape::Power => {
                if y > 1.0 {
                    let b = a + 2.0;
                    1.0 / b - y + (1.0 - 1.0 / b) * y.powf(b / (a + 1.0))
                } else {
                    1.0 / a + y - (1.0 + 1.0 / a) * y.powf(a / (a + 1.0))
                }
            }
        }
    }

    /// Inverse of the marginal utility, taking `ln y`.
    pub(crate) fn inverse_marginal_ln(self, a: f64, ln_y: f64) -> f64 {
        match self {
            Shape::Exponential => -ln_y / a,
            Shape::Power => {
                if ln_y <= 0.0 {
                    (-ln_y / (a + 1.0)).exp_m1()
                } else {
                    -(ln_y / (a + 1.0)).exp_m1()
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_gap_matches_direct_difference() {
        for shape in [Shape::Exponential, Shape::Power] {
            for a in [0.5, 1.0, 3.0, 10.0] {
                for x in [-1.5, -0.3, 0.0, 0.2, 2.0] {
                    let direct = shape.sup(a) - shape.value(a, x);
                    let (h, h1, h2) = shape.log_gap(a, x);
                    assert!(
                        (h.exp() - direct).abs() < 1e-14 * direct.max(1.0),
                        "{shape:?} {a} {x}"
                    );
                    let e = 1e-5;
                    let fd1 = (shape.log_gap(a, x + e).0 - shape.log_gap(a, x - e).0) / (2.0 * e);
                    let fd2 = (shape.log_gap(a, x + e).1 - shape.log_gap(a, x - e).1) / (2.0 * e);
                    assert!((h1 - fd1).abs() < 1e-6 * h1.abs().max(1.0));
                    // The third derivative of the power shape jumps at 0.
                    let tol2 = if x == 0.0 { 1e-4 } else { 1e-5 };
                    assert!((h2 - fd2).abs() < tol2 * h2.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn power_is_smooth_at_zero() {
        let a = 3.0;
        let s = Shape::Power;
        let e = 1e-12;
        assert!((s.marginal(a, e) - s.marginal(a, -e)).abs() < 1e-10);
        assert!((s.curvature(a, e) - s.curvature(a, -e)).abs() < 1e-10);
        assert_eq!(s.value(a, 0.0), 0.0);
        assert_eq!(s.marginal(a, 0.0), 1.0);
    }

    #[test]
    fn clamping_only_far_out() {
        let s = Shape::Exponential;
        assert!(!s.clamps(1.0, 10.0));
        assert!(s.clamps(1024.0, -1.0));
        assert!(s.value(1024.0, -1.0).is_finite());
    }
}
