//! Floating-point abstraction shared by the model code.
//!
//! Everything that touches likelihoods is written against [`Scalar`] so the
//! same engine runs in `f64` (the default everywhere) or `f32`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// A real number type the HMM engine can run on: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal. Every value used this way is representable
    /// (possibly rounded) in both supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// `ln(2π)/2`.
#[inline]
pub fn half_ln_2pi<F: Scalar>() -> F {
    F::lit(0.918_938_533_204_672_7)
}

/// Log density of the standard normal.
#[inline]
pub fn ln_std_normal_pdf<F: Scalar>(z: F) -> F {
    -(z * z) * F::lit(0.5) - half_ln_2pi::<F>()
}

/// Log of the standard normal CDF, `ln Φ(z)`.
///
/// Uses `Φ(z) = erfc(-z/√2)/2` while that value is a normal float. Past the
/// underflow point (z < -37 in f64, z < -13 in f32) it switches to the Mills
/// ratio asymptotic series, whose truncation error there is far below the
/// type's epsilon.
pub fn ln_std_normal_cdf<F: Scalar>(z: F) -> F {
    let p = (-z / F::SQRT_2()).erfc() * F::lit(0.5);
    if p >= F::min_positive_value() {
        return p.ln();
    }
    let z2 = z * z;
    let inv = F::one() / z2;
    // 1 - 1/z² + 3/z⁴ - 15/z⁶ + 105/z⁸ - 945/z¹⁰
    let series = F::one()
        + inv * (-F::one() + inv * (F::lit(3.0) + inv * (F::lit(-15.0) + inv * (F::lit(105.0) + inv * F::lit(-945.0)))));
    -z2 * F::lit(0.5) - (-z).ln() - half_ln_2pi::<F>() + series.ln()
}

/// Inverse Mills ratio `φ(z)/Φ(z)`.
#[inline]
pub fn inverse_mills<F: Scalar>(z: F) -> F {
    (ln_std_normal_pdf(z) - ln_std_normal_cdf(z)).exp()
}

/// `ln(e^a + e^b)` without overflow; either argument may be `-inf`.
#[inline]
pub fn ln_add_exp<F: Scalar>(a: F, b: F) -> F {
    let hi = a.max(b);
    if hi == F::neg_infinity() {
        return hi;
    }
    let lo = a.min(b);
    hi + (lo - hi).exp().ln_1p()
}

/// `ln x` with `ln 0 = -inf` (the `Float` impls already do this; named for
/// readability at call sites dealing with transition probabilities).
#[inline]
pub fn ln_prob<F: Scalar>(p: F) -> F {
    if p <= F::zero() {
        F::neg_infinity()
    } else {
        p.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_matches_erfc_in_the_bulk() {
        // Φ(0) = 1/2, Φ(1.959963984540054) = 0.975
        assert_eq!(ln_std_normal_cdf(0.0_f64), 0.5_f64.ln());
        assert!((ln_std_normal_cdf(1.959_963_984_540_054_f64) - 0.975_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn cdf_tail_is_continuous_across_the_switch() {
        // f64 switches near z = -37.5; 40-digit oracle values either side
        let cases = [
            (-37.4, -703.921_322_883_264_4),
            (-37.6, -711.426_648_670_776_2),
            (-100.0, -5_005.524_208_694_205),
        ];
        for (z, want) in cases {
            let got: f64 = ln_std_normal_cdf(z);
            assert!(((got - want) / want).abs() < 1e-13, "z={z}: {got} vs {want}");
        }
        assert!(ln_std_normal_cdf(-1e4_f64).is_finite());
        assert!(ln_std_normal_cdf(-40.0_f32).is_finite());
    }

    #[test]
    fn f32_tail_agrees_with_f64() {
        for z in [-5.0, -12.0, -13.5, -20.0] {
            let a = ln_std_normal_cdf(z as f32) as f64;
            let b = ln_std_normal_cdf(z);
            assert!(((a - b) / b).abs() < 1e-5, "z={z} {a} {b}");
        }
    }

    #[test]
    fn ln_add_exp_handles_infinities() {
        assert_eq!(ln_add_exp(f64::NEG_INFINITY, 0.0), 0.0);
        assert_eq!(ln_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert!((ln_add_exp(0.0_f64, 0.0) - 2.0_f64.ln()).abs() < 1e-15);
    }
}
