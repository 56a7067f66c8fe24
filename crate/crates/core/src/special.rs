//! Scalar special functions used throughout the model.
//!
//! Everything here works in log space where it matters: the survival
//! likelihood multiplies many small tail probabilities, so the normal CDF and
//! the logistic link are exposed as log-probabilities with stable tails.

use statrs::function::erf::erfc;

/// `ln(2π) / 2`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Log of the standard normal density.
#[inline]
pub fn norm_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF, `Φ(z) = erfc(-z/√2)/2`.
///
/// The complementary-error-function form keeps full relative precision in
/// the lower tail.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    norm_cdf(-z)
}

/// `ln Φ(z)`, accurate for arbitrarily negative `z`.
pub fn norm_log_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > 5.0 {
        // Φ(z) is within 3e-7 of one; use log1p of the tiny upper tail.
        return (-norm_cdf(-z)).ln_1p();
    }
    if z > -35.0 {
        return norm_cdf(z).ln();
    }
    // Asymptotic (Laplace) continued expansion of the Mills ratio:
    // Φ(z) ≈ φ(z)/|z| · (1 - 1/z² + 3/z⁴ - 15/z⁶ + 105/z⁸).
    let z2 = z * z;
    let inv = 1.0 / z2;
    let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
    norm_log_pdf(z) - (-z).ln() + series.ln()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln σ(x)` where `σ` is the logistic function.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Logistic function `1 / (1 + e^{-x})`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hyperbolic tangent activation, `(e^{2a} - 1)/(e^{2a} + 1)`.
#[inline]
pub fn activation(a: f64) -> f64 {
    a.tanh()
}

/// Derivative of the activation, `4e^{2a}/(e^{2a}+1)² = 1 - tanh²(a)`.
#[inline]
pub fn activation_deriv(a: f64) -> f64 {
    let t = a.tanh();
    1.0 - t * t
}

/// `ln Σ exp(v)`; returns `-∞` for an empty slice or all `-∞` entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if hi == f64::INFINITY {
        return f64::INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Neumaier-compensated sum, independent of accumulation noise for the
/// long likelihood sums used in tests and reductions.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
