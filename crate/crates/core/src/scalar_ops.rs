//! Signed powers, `(p, δ)`-saturation, the saturated-spring integral and
//! the weighted dilation.
//!
//! The checked functions validate their exponent and level arguments. The
//! `*_unchecked` forms skip validation and are what the controllers call in
//! the integration loop once a configuration has been validated.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `sign(x)` with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `|x|^p · sign(x)` without argument checks.
#[inline]
pub fn signed_pow_unchecked(x: f64, p: f64) -> f64 {
    x.abs().powf(p) * sign(x)
}

/// Signed power `⌈x⌋^p = |x|^p sign(x)`.
pub fn signed_pow(x: f64, p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!("signed power exponent must be positive, got {p}")));
    }
    if !x.is_finite() {
        return Err(Error::invalid(format!("signed power argument must be finite, got {x}")));
    }
    Ok(signed_pow_unchecked(x, p))
}

/// Magnitude clip of `x` at `delta`.
#[inline]
pub fn sat_clip(x: f64, delta: f64) -> f64 {
    if x.abs() >= delta {
        delta * sign(x)
    } else {
        x
    }
}

/// `sat_δ(⌈x⌋^p)` without argument checks.
#[inline]
pub fn sat_pow_unchecked(x: f64, p: f64, delta: f64) -> f64 {
    if x.abs() >= delta {
        delta.powf(p) * sign(x)
    } else {
        signed_pow_unchecked(x, p)
    }
}

fn check_level(p: f64, delta: f64) -> Result<()> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!("exponent must be positive, got {p}")));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("saturation level must be positive, got {delta}")));
    }
    Ok(())
}

/// `(p, δ)`-saturated signed power: `⌈x⌋^p` inside `|x| < δ`, `δ^p sign(x)`
/// outside. The output magnitude never exceeds `δ^p`.
pub fn sat_pow(x: f64, p: f64, delta: f64) -> Result<f64> {
    check_level(p, delta)?;
    if x.is_nan() {
        return Err(Error::invalid("saturation argument is NaN"));
    }
    Ok(sat_pow_unchecked(x, p, delta))
}

/// `s(x, δ, p) = ∫₀ˣ sat_δ(⌈σ⌋^p) dσ` without argument checks.
#[inline]
pub fn s_integral_unchecked(x: f64, delta: f64, p: f64) -> f64 {
    let a = x.abs();
    if a >= delta {
        delta.powf(p) * a - p * delta.powf(p + 1.0) / (p + 1.0)
    } else {
        a.powf(p + 1.0) / (p + 1.0)
    }
}

/// Integral of the saturated signed power. Nonnegative, zero only at the
/// origin, and C¹ with derivative [`sat_pow`].
pub fn s_integral(x: f64, delta: f64, p: f64) -> Result<f64> {
    check_level(p, delta)?;
    if x.is_nan() {
        return Err(Error::invalid("integral argument is NaN"));
    }
    Ok(s_integral_unchecked(x, delta, p))
}

/// Element-wise signed power.
pub fn signed_pow_vec(x: &DVector<f64>, p: f64) -> DVector<f64> {
    x.map(|v| signed_pow_unchecked(v, p))
}

/// Element-wise saturated signed power.
pub fn sat_pow_vec(x: &DVector<f64>, p: f64, delta: f64) -> DVector<f64> {
    x.map(|v| sat_pow_unchecked(v, p, delta))
}

/// Weighted dilation: component `j` becomes `ε^{r_j} x_j`.
pub fn dilate(x: &[f64], weights: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if x.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            what: "dilation weights",
            expected: x.len(),
            found: weights.len(),
        });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("dilation parameter must be positive, got {epsilon}")));
    }
    Ok(x.iter()
        .zip(weights)
        .map(|(xj, rj)| epsilon.powf(*rj) * xj)
        .collect())
}

/// Whether a weight pair yields finite-time or merely asymptotic convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `2 r2 > r1 > r2`: negative homogeneity degree.
    FiniteTime,
    /// `r1 = r2`: linear laws, degree zero.
    Asymptotic,
}

/// Homogeneity weights of the position-like (`r1`) and velocity-like (`r2`)
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    r1: f64,
    r2: f64,
}

impl Weights {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > 0.0) || !r1.is_finite() || !r2.is_finite() {
            return Err(Error::invalid(format!(
                "homogeneity weights must be positive (r1 = {r1}, r2 = {r2})"
            )));
        }
        if r1 >= 2.0 * r2 {
            return Err(Error::invalid(format!(
                "weight condition 2*r2 > r1 violated (r1 = {r1}, r2 = {r2}): \
                 the exponents reach zero and the controllers become discontinuous"
            )));
        }
        if r1 < r2 {
            return Err(Error::invalid(format!(
                "weight condition r1 >= r2 violated (r1 = {r1}, r2 = {r2}): \
                 finite-time mode needs r1 > r2, asymptotic mode r1 = r2"
            )));
        }
        Ok(Weights { r1, r2 })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn regime(&self) -> Regime {
        if self.r1 == self.r2 {
            Regime::Asymptotic
        } else {
            Regime::FiniteTime
        }
    }

    /// Homogeneity degree `r2 - r1` of the closed loop.
    pub fn degree(&self) -> f64 {
        self.r2 - self.r1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn signed_pow_examples() {
        assert_eq!(signed_pow(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(signed_pow(-4.0, 0.5).unwrap(), -2.0);
        assert_relative_eq!(signed_pow(2.0, 1.0 / 3.0).unwrap(), 1.259_921_049_894_873, epsilon = 1e-15);
    }

    #[test]
    fn signed_pow_rejects_bad_arguments() {
        assert!(signed_pow(1.0, 0.0).is_err());
        assert!(signed_pow(1.0, -1.0).is_err());
        assert!(signed_pow(f64::NAN, 0.5).is_err());
        assert!(signed_pow(f64::INFINITY, 0.5).is_err());
    }

    #[test]
    fn sat_pow_examples() {
        assert_eq!(sat_pow(0.5, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(sat_pow(2.0, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(sat_pow(-3.0, 0.5, 2.0).unwrap(), -std::f64::consts::SQRT_2, epsilon = 1e-15);
        // boundary takes the saturated branch; both agree there
        assert_eq!(sat_pow(1.0, 0.5, 1.0).unwrap(), 1.0);
        assert!(sat_pow(1.0, 0.0, 1.0).is_err());
        assert!(sat_pow(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn s_integral_examples() {
        assert_eq!(s_integral(0.5, 1.0, 1.0).unwrap(), 0.125);
        assert_eq!(s_integral(2.0, 1.0, 1.0).unwrap(), 1.5);
        assert_eq!(s_integral(0.0, 0.3, 0.7).unwrap(), 0.0);
        assert!(s_integral(1.0, -1.0, 1.0).is_err());
        // continuous across the boundary
        let d = 0.4;
        let p = 1.0 / 3.0;
        let inner = s_integral(d * (1.0 - 1e-12), d, p).unwrap();
        let outer = s_integral(d, d, p).unwrap();
        assert_relative_eq!(inner, outer, max_relative = 1e-11);
    }

    #[test]
    fn dilate_examples() {
        assert_eq!(dilate(&[1.0, 1.0], &[1.5, 1.0], 1.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(dilate(&[2.0, 3.0], &[1.0, 1.0], 0.5).unwrap(), vec![1.0, 1.5]);
        assert_eq!(dilate(&[1.0, 1.0], &[2.0, 1.0], 0.5).unwrap(), vec![0.25, 0.5]);
        assert!(matches!(
            dilate(&[1.0], &[1.0, 2.0], 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(dilate(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn weights_regimes() {
        assert_eq!(Weights::new(1.5, 1.0).unwrap().regime(), Regime::FiniteTime);
        assert_eq!(Weights::new(1.0, 1.0).unwrap().regime(), Regime::Asymptotic);
        assert!(Weights::new(2.0, 1.0).is_err());
        assert!(Weights::new(0.9, 1.0).is_err());
        assert!(Weights::new(-1.0, 1.0).is_err());
        assert_eq!(Weights::new(1.5, 1.0).unwrap().degree(), -0.5);
    }

    #[test]
    fn sign_of_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-0.0), 0.0);
        assert_eq!(signed_pow_unchecked(-0.0, 0.3), 0.0);
    }
}
