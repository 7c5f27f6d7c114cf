//! Small log-space helpers shared by the mass functions and the fitter.

use statrs::function::gamma::ln_gamma;

/// Below this many terms the rising factorial is summed directly, which
/// stays accurate when the shape is huge (d close to 1).
const RISING_SUM_LIMIT: u64 = 48;

/// `ln(exp(a) - 1)` for `a > 0`.
pub(crate) fn ln_expm1(a: f64) -> f64 {
    if a > 30.0 {
        a + (-(-a).exp()).ln_1p()
    } else {
        a.exp_m1().ln()
    }
}

/// Shapes at or above this use the Stirling-difference form of the rising factorial.
const STIRLING_MIN_SHAPE: f64 = 15.0;

/// `ln Γ(r + x) - ln Γ(r)`, the log rising factorial.
pub(crate) fn ln_rising(r: f64, x: u64) -> f64 {
    if x == 0 {
        return 0.0;
    }
    if r >= STIRLING_MIN_SHAPE {
        stirling_rising(r, x as f64)
    } else if x <= RISING_SUM_LIMIT {
        let mut acc = 0.0;
        for j in 0..x {
            acc += (r + j as f64).ln();
        }
        acc
    } else {
        ln_gamma(r + x as f64) - ln_gamma(r)
    }
}

/// `sum w_i ln_rising(r, x_i)` for ascending `x_i`, reusing each partial sum for the next value.
pub(crate) fn weighted_ln_rising_sorted(r: f64, values: &[f64], weights: &[f64]) -> f64 {
    if r >= STIRLING_MIN_SHAPE {
        return values.iter().zip(weights).map(|(&x, &w)| w * stirling_rising(r, x)).sum();
    }
    let mut total = 0.0;
    let mut prev = 0u64;
    let mut partial = 0.0;
    for (&x, &w) in values.iter().zip(weights) {
        let x = x as u64;
        debug_assert!(x >= prev);
        if x - prev > RISING_SUM_LIMIT {
            partial = ln_rising(r, x);
        } else {
            // Products of up to 16 factors stay far from overflow for r < 15 and x < 2^40.
            let mut j = prev;
            while j < x {
                let end = (j + 16).min(x);
                let mut prod = 1.0;
                for k in j..end {
                    prod *= r + k as f64;
                }
                partial += prod.ln();
                j = end;
            }
        }
        prev = x;
        total += w * partial;
    }
    total
}

/// Difference of Stirling series, arranged so nothing of size `r ln r` cancels.
fn stirling_rising(r: f64, x: f64) -> f64 {
    let z = r + x;
    x * z.ln() + (r - 0.5) * (x / r).ln_1p() - x + binet(z) - binet(r)
}

/// Tail of the Stirling series for `ln Γ(z)`, accurate for `z >= 15`.
fn binet(z: f64) -> f64 {
    let z2 = z * z;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * z2)) / z2) / z2) / z
}

/// `ln(x!)`.
pub(crate) fn ln_factorial(x: u64) -> f64 {
    if x < 2 {
        0.0
    } else {
        ln_gamma(x as f64 + 1.0)
    }
}

/// Stable `ln(exp(a) + exp(b))`; either side may be `-inf`.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let lo = a.min(b);
    hi + (lo - hi).exp().ln_1p()
}
