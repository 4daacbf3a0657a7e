//! Concave job rewards: values, gradients and concave conjugates.
//!
//! The conjugate follows the concave convention
//! `f*(alpha) = inf_{x >= 0} alpha * x - f(x)`, which is always `<= 0` for a
//! reward with `f(0) = 0`.

use std::fmt::Debug;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("{what} must be non-negative and finite, got {value}")]
    NegativeArgument { what: &'static str, value: f64 },
    #[error("{what} must be strictly positive, got {value}")]
    NonPositiveArgument { what: &'static str, value: f64 },
    #[error("invalid utility parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

fn check_nonneg(what: &'static str, value: f64) -> Result<f64, NumericsError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(NumericsError::NegativeArgument { what, value })
    }
}

/// A concave, non-decreasing, differentiable reward on `x >= 0` with `f(0) = 0`.
pub trait Utility: Debug + Send + Sync {
    fn eval(&self, x: f64) -> Result<f64, NumericsError>;

    fn grad(&self, x: f64) -> Result<f64, NumericsError>;

    /// Concave conjugate `inf_{x >= 0} alpha * x - f(x)`.
    fn conjugate(&self, alpha: f64) -> Result<f64, NumericsError>;

    /// `eval(x + d) - eval(x)`, for `x >= 0` and `x + d >= 0`. Implementations
    /// should avoid the cancellation of the naive difference for small `d`.
    fn increment(&self, x: f64, d: f64) -> Result<f64, NumericsError> {
        Ok(self.eval(x + d)? - self.eval(x)?)
    }

    /// Second derivative. The default is a central difference of [`Utility::grad`].
    fn curvature(&self, x: f64) -> Result<f64, NumericsError> {
        check_nonneg("x", x)?;
        let h = 1e-6 * (1.0 + x);
        let lo = (x - h).max(0.0);
        Ok((self.grad(x + h)? - self.grad(lo)?) / (x + h - lo))
    }
}

impl<U: Utility + ?Sized> Utility for &U {
    fn eval(&self, x: f64) -> Result<f64, NumericsError> {
        (**self).eval(x)
    }
    fn grad(&self, x: f64) -> Result<f64, NumericsError> {
        (**self).grad(x)
    }
    fn conjugate(&self, alpha: f64) -> Result<f64, NumericsError> {
        (**self).conjugate(alpha)
    }
    fn increment(&self, x: f64, d: f64) -> Result<f64, NumericsError> {
        (**self).increment(x, d)
    }
    fn curvature(&self, x: f64) -> Result<f64, NumericsError> {
        (**self).curvature(x)
    }
}

/// Shift inside the power family; keeps the gradient finite at zero.
pub const POWER_SHIFT: f64 = 0.1;

/// The power reward `v * ((0.1 + x)^(1-psi) - 0.1^(1-psi)) / (1 - psi)`.
///
/// The subtracted constant normalizes `f(0) = 0` without moving the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerUtility {
    v: f64,
    psi: f64,
    offset: f64,
}

impl PowerUtility {
    pub fn new(v: f64, psi: f64) -> Result<Self, NumericsError> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(NumericsError::InvalidParameter { name: "v", value: v });
        }
        if !(psi > 0.0 && psi < 1.0) {
            return Err(NumericsError::InvalidParameter { name: "psi", value: psi });
        }
        let offset = v * POWER_SHIFT.powf(1.0 - psi) / (1.0 - psi);
        Ok(Self { v, psi, offset })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// The constant removed from the raw power law so that `f(0) = 0`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Solves `grad(x) = alpha`; clamps to 0 when `alpha >= grad(0)`.
    pub fn inverse_grad(&self, alpha: f64) -> Result<f64, NumericsError> {
        if !(alpha > 0.0) {
            return Err(NumericsError::NonPositiveArgument { what: "alpha", value: alpha });
        }
        if alpha >= self.grad_unchecked(0.0) {
            return Ok(0.0);
        }
        Ok(((self.v / alpha).powf(1.0 / self.psi) - POWER_SHIFT).max(0.0))
    }

    fn grad_unchecked(&self, x: f64) -> f64 {
        self.v * (POWER_SHIFT + x).powf(-self.psi)
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        // 0.1^(1-psi) * ((1 + 10x)^(1-psi) - 1), written to avoid cancellation near 0.
        let e = 1.0 - self.psi;
        self.offset * (e * (x / POWER_SHIFT).ln_1p()).exp_m1()
    }
}

impl Utility for PowerUtility {
    fn eval(&self, x: f64) -> Result<f64, NumericsError> {
        check_nonneg("x", x)?;
        Ok(self.eval_unchecked(x))
    }

    fn grad(&self, x: f64) -> Result<f64, NumericsError> {
        check_nonneg("x", x)?;
        Ok(self.grad_unchecked(x))
    }

    fn conjugate(&self, alpha: f64) -> Result<f64, NumericsError> {
        check_nonneg("alpha", alpha)?;
        if alpha == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        if alpha >= self.grad_unchecked(0.0) {
            return Ok(0.0);
        }
        let x = self.inverse_grad(alpha)?;
        Ok((alpha * x - self.eval_unchecked(x)).min(0.0))
    }

    fn increment(&self, x: f64, d: f64) -> Result<f64, NumericsError> {
        check_nonneg("x", x)?;
        check_nonneg("x + d", x + d)?;
        let e = 1.0 - self.psi;
        let base = POWER_SHIFT + x;
        Ok(self.v * base.powf(e) / e * (e * (d / base).ln_1p()).exp_m1())
    }

    fn curvature(&self, x: f64) -> Result<f64, NumericsError> {
        check_nonneg("x", x)?;
        Ok(-self.psi * self.v * (POWER_SHIFT + x).powf(-self.psi - 1.0))
    }
}

/// Drift-plus-penalty reward `g(x) = weight * f(x) + queue * x`.
///
/// Used by the long-term fair scheduler, where `queue` is the virtual queue of
/// the job's user at the start of the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftPenaltyUtility<U> {
    base: U,
    weight: f64,
    queue: f64,
}

impl<U: Utility> DriftPenaltyUtility<U> {
    pub fn new(base: U, weight: f64, queue: f64) -> Result<Self, NumericsError> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(NumericsError::InvalidParameter { name: "V", value: weight });
        }
        check_nonneg("queue", queue)?;
        Ok(Self { base, weight, queue })
    }

    pub fn base(&self) -> &U {
        &self.base
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn queue(&self) -> f64 {
        self.queue
    }
}

impl<U: Utility> Utility for DriftPenaltyUtility<U> {
    fn eval(&self, x: f64) -> Result<f64, NumericsError> {
        Ok(self.weight * self.base.eval(x)? + self.queue * x)
    }

    fn grad(&self, x: f64) -> Result<f64, NumericsError> {
        Ok(self.weight * self.base.grad(x)? + self.queue)
    }

    /// `g*(alpha) = V f*((alpha - Q) / V)`; the infimum is unbounded below for `alpha < Q`.
    fn conjugate(&self, alpha: f64) -> Result<f64, NumericsError> {
        check_nonneg("alpha", alpha)?;
        if alpha < self.queue {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.weight * self.base.conjugate((alpha - self.queue) / self.weight)?)
    }

    fn increment(&self, x: f64, d: f64) -> Result<f64, NumericsError> {
        Ok(self.weight * self.base.increment(x, d)? + self.queue * d)
    }

    fn curvature(&self, x: f64) -> Result<f64, NumericsError> {
        Ok(self.weight * self.base.curvature(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> PowerUtility {
        PowerUtility::new(1.0, 0.5).unwrap()
    }

    /// Composite Simpson integration of the gradient, independent of `eval`.
    fn integrate_grad(f: &PowerUtility, x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let g = |t: f64| f.v() * (POWER_SHIFT + t).powf(-f.psi());
        let mut acc = g(0.0) + g(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Grid infimum of `alpha x - f(x)` over `[0, hi]`.
    fn grid_conjugate(f: &PowerUtility, alpha: f64, hi: f64, step: f64) -> f64 {
        let n = (hi / step).round() as usize;
        (0..=n)
            .map(|i| {
                let x = i as f64 * step;
                alpha * x - f.eval(x).unwrap()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn eval_examples() {
        let f = unit();
        assert_eq!(f.eval(0.0).unwrap(), 0.0);
        let expected = 2.0 * (1.0 - 0.1f64.sqrt());
        assert!((f.eval(0.9).unwrap() - expected).abs() < 1e-12);
        assert!((integrate_grad(&f, 0.9) - expected).abs() < 1e-9);
        assert!((expected - 1.36754).abs() < 1e-5);
        let g = PowerUtility::new(2.0, 0.5).unwrap();
        assert!((g.eval(0.9).unwrap() - 2.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn grad_examples() {
        let f = unit();
        assert!((f.grad(0.9).unwrap() - 1.0).abs() < 1e-15);
        assert!((f.grad(0.0).unwrap() - 0.1f64.powf(-0.5)).abs() < 1e-12);
        assert!((f.grad(0.0).unwrap() - 3.16228).abs() < 1e-5);
        assert!(f.grad(0.3).unwrap() > f.grad(0.4).unwrap());
    }

    #[test]
    fn domain_errors() {
        let f = unit();
        assert!(f.eval(-1e-3).is_err());
        assert!(f.grad(-1.0).is_err());
        assert!(f.conjugate(-0.5).is_err());
        assert!(f.inverse_grad(0.0).is_err());
        assert!(f.inverse_grad(-1.0).is_err());
        assert!(PowerUtility::new(0.0, 0.5).is_err());
        assert!(PowerUtility::new(1.0, 1.0).is_err());
    }

    #[test]
    fn conjugate_examples() {
        let f = unit();
        assert_eq!(f.conjugate(4.0).unwrap(), 0.0);
        let grid = grid_conjugate(&f, 1.0, 10.0, 1e-4);
        let closed = f.conjugate(1.0).unwrap();
        assert!((closed - grid).abs() < 1e-6, "{closed} vs {grid}");
        assert!((closed - (0.9 - 2.0 * (1.0 - 0.1f64.sqrt()))).abs() < 1e-12);
        assert!((closed + 0.46754).abs() < 1e-5);
    }

    #[test]
    fn inverse_grad_examples() {
        let f = unit();
        assert!((f.inverse_grad(1.0).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(f.inverse_grad(f.grad(0.0).unwrap()).unwrap(), 0.0);
        assert_eq!(f.inverse_grad(100.0).unwrap(), 0.0);
        for a in [0.05, 0.3, 1.0, 2.0, 3.0] {
            let x = f.inverse_grad(a).unwrap();
            assert!((f.grad(x).unwrap() - a).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn drift_penalty_shift_rule() {
        let f = PowerUtility::new(0.7, 0.3).unwrap();
        let g = DriftPenaltyUtility::new(f, 0.1, 2.0).unwrap();
        assert_eq!(g.eval(0.0).unwrap(), 0.0);
        assert!((g.grad(1.0).unwrap() - (0.1 * f.grad(1.0).unwrap() + 2.0)).abs() < 1e-14);
        assert_eq!(g.conjugate(1.0).unwrap(), f64::NEG_INFINITY);
        // Complementary pair for the shifted reward.
        let x = 0.8;
        let a = g.grad(x).unwrap();
        assert!((g.eval(x).unwrap() + g.conjugate(a).unwrap() - a * x).abs() < 1e-10);
    }

    fn power() -> impl Strategy<Value = PowerUtility> {
        (0.01f64..1.0, 0.01f64..0.99).prop_map(|(v, psi)| PowerUtility::new(v, psi).unwrap())
    }

    proptest! {
        #[test]
        fn normalized_at_zero(f in power()) {
            prop_assert_eq!(f.eval(0.0).unwrap(), 0.0);
        }

        #[test]
        fn grad_matches_central_difference(f in power()) {
            let h = 1e-5;
            for x in [0.01, 0.1, 1.0, 10.0] {
                let fd = (f.eval(x + h).unwrap() - f.eval(x - h).unwrap()) / (2.0 * h);
                prop_assert!((f.grad(x).unwrap() - fd).abs() <= 1e-6);
            }
        }

        #[test]
        fn conjugate_is_grid_lower_bound(f in power(), frac in 0.01f64..1.5) {
            let alpha = frac * f.grad(0.0).unwrap();
            let c = f.conjugate(alpha).unwrap();
            prop_assert!(c <= 0.0);
            for i in 0..1000 {
                let x = 20.0 * i as f64 / 999.0;
                prop_assert!(c <= alpha * x - f.eval(x).unwrap() + 1e-12);
            }
            if frac < 1.0 {
                let xs = f.inverse_grad(alpha).unwrap();
                prop_assert!((c - (alpha * xs - f.eval(xs).unwrap())).abs() <= 1e-6);
            }
        }

        #[test]
        fn conjugate_bounded_by_minus_reward(f in power(), u in 0.0f64..50.0) {
            let a = f.grad(u).unwrap();
            prop_assert!(f.conjugate(a).unwrap() >= -f.eval(u).unwrap() - 1e-12);
        }

        #[test]
        fn complementary_pair_identity(f in power(), x in 0.0f64..30.0) {
            let a = f.grad(x).unwrap();
            let lhs = f.eval(x).unwrap() + f.conjugate(a).unwrap();
            prop_assert!((lhs - a * x).abs() <= 1e-6);
        }

        #[test]
        fn increment_matches_difference(f in power(), x in 0.0f64..20.0, d in -1.0f64..5.0) {
            let d = d.max(-x);
            let naive = f.eval(x + d).unwrap() - f.eval(x).unwrap();
            prop_assert!((f.increment(x, d).unwrap() - naive).abs() <= 1e-12 * (1.0 + naive.abs()));
        }

        #[test]
        fn closed_form_curvature(f in power(), x in 0.0f64..20.0) {
            let h = 1e-5 * (1.0 + x);
            let lo = (x - h).max(0.0);
            let fd = (f.grad(x + h).unwrap() - f.grad(lo).unwrap()) / (x + h - lo);
            let c = f.curvature(x).unwrap();
            prop_assert!(c < 0.0);
            prop_assert!((c - fd).abs() <= 1e-4 * c.abs().max(1.0));
        }
    }
}
