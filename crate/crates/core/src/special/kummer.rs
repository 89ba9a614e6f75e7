//! Kummer's confluent hypergeometric function ₁F₁(a; b; z) for real `z` and
//! `b > a > 0`.
//!
//! Negative arguments are the only ones the likelihood needs. With `x = -z`:
//!
//! * `x <= 1`: the defining series, whose alternating terms stay below `e`.
//! * `1 < x < 300`: Kummer's transformation `e^{-x} ₁F₁(b-a; b; x)`, a series
//!   of positive terms with no cancellation.
//! * `x >= 300`: the large-argument expansion
//!   `Γ(b)/Γ(b-a) x^{-a} Σ (a)_n (a-b+1)_n / n! x^{-n}`, truncated at its
//!   smallest term. The exponentially small companion term is below
//!   `e^{-300}` relative and is dropped.
//!
//! Everything is evaluated in log space so month-scale gaps (x ~ 1e7 and
//! beyond) never underflow.

use crate::error::{Error, Result};
use crate::special::gamma::log_gamma_unchecked;

pub(crate) const DIRECT_SERIES_MAX: f64 = 1.0;
pub(crate) const ASYMPTOTIC_MIN: f64 = 300.0;

const SERIES_EPS: f64 = 1e-17;
const ASYMPTOTIC_EPS: f64 = 1e-16;
/// Largest argument for the log-scaled Kummer series fallback.
const FALLBACK_MAX: f64 = 1e7;
const MAX_SERIES_TERMS: usize = 100_000;

fn check(a: f64, b: f64, z: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && z.is_finite()) || a <= 0.0 || b <= a {
        return Err(Error::domain(
            "kummer_1f1",
            format!("need b > a > 0 and finite z, got a = {a}, b = {b}, z = {z}"),
        ));
    }
    Ok(())
}

/// ₁F₁(a; b; z). Overflows to `+inf` for large positive `z`.
pub fn kummer_1f1(a: f64, b: f64, z: f64) -> Result<f64> {
    ln_kummer_1f1(a, b, z).map(f64::exp)
}

/// ln ₁F₁(a; b; z). The function is strictly positive for `b > a > 0`.
pub fn ln_kummer_1f1(a: f64, b: f64, z: f64) -> Result<f64> {
    check(a, b, z)?;
    if z > 0.0 {
        // ₁F₁(a; b; z) = e^z ₁F₁(b-a; b; -z), and b > b-a > 0.
        return Ok(z + ln_negative(b - a, b, z)?);
    }
    ln_negative(a, b, -z)
}

/// ln ₁F₁(a; b; -x) for x >= 0.
fn ln_negative(a: f64, b: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    if x <= DIRECT_SERIES_MAX {
        return Ok(direct_series(a, b, -x).ln());
    }
    if x < ASYMPTOTIC_MIN {
        return Ok(-x + ln_positive_series(b - a, b, x));
    }
    match ln_asymptotic(a, b, x) {
        Some(v) => Ok(v),
        None if x <= FALLBACK_MAX => Ok(-x + ln_positive_series(b - a, b, x)),
        None => Err(Error::LossOfPrecision {
            function: "kummer_1f1",
            detail: format!("a = {a}, b = {b}, z = {}", -x),
        }),
    }
}

/// Σ (a)_k / (b)_k z^k / k!, summed until terms fall below 1e-17 relative.
pub(crate) fn direct_series(a: f64, b: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..MAX_SERIES_TERMS {
        let kf = k as f64;
        term *= (a + kf) / (b + kf) * z / (kf + 1.0);
        sum += term;
        if term.abs() <= SERIES_EPS * sum.abs() && kf > z.abs() {
            break;
        }
    }
    sum
}

/// ln Σ (a)_k / (b)_k x^k / k! for x > 0, all terms positive. Rescales on
/// the fly so any argument is representable.
pub(crate) fn ln_positive_series(a: f64, b: f64, x: f64) -> f64 {
    const RESCALE_AT: f64 = 1e280;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut ln_scale = 0.0;
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        term *= (a + kf) / (b + kf) * x / (kf + 1.0);
        sum += term;
        if sum > RESCALE_AT {
            ln_scale += sum.ln();
            term /= sum;
            sum = 1.0;
        }
        k += 1;
        // Terms peak near k ~ x; stop once past the peak and negligible.
        if kf > x && term <= SERIES_EPS * sum {
            break;
        }
        if k > MAX_SERIES_TERMS + 4 * x as usize {
            break;
        }
    }
    ln_scale + sum.ln()
}

/// Large-argument expansion of ln ₁F₁(a; b; -x). Returns `None` when the
/// optimally truncated series does not reach the target accuracy.
pub(crate) fn ln_asymptotic(a: f64, b: f64, x: f64) -> Option<f64> {
    let c = a - b + 1.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut converged = false;
    for n in 0..500 {
        let nf = n as f64;
        let next = term * (a + nf) * (c + nf) / ((nf + 1.0) * x);
        if next == 0.0 {
            converged = true;
            break;
        }
        if next.abs() >= term.abs() {
            // Smallest term reached; the remainder is of its order.
            converged = term.abs() <= 1e-12 * sum.abs();
            break;
        }
        term = next;
        sum += term;
        if term.abs() <= ASYMPTOTIC_EPS * sum.abs() {
            converged = true;
            break;
        }
    }
    if !converged || sum <= 0.0 {
        return None;
    }
    Some(log_gamma_unchecked(b) - log_gamma_unchecked(b - a) - a * x.ln() + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn trivial_values() {
        assert_eq!(kummer_1f1(1.61, 2.61, 0.0).unwrap(), 1.0);
        let want = 1.0 - (-1.0f64).exp();
        assert!(rel(kummer_1f1(1.0, 2.0, -1.0).unwrap(), want) < 1e-15);
    }

    #[test]
    fn closed_form_family() {
        // ₁F₁(1; 2; z) = (e^z - 1) / z on every regime.
        for z in [-0.3, -1.0, -1.5, -30.0, -299.0, -301.0, -1e4, 2.0, 50.0] {
            let want: f64 = (z as f64).exp_m1() / z;
            let got = kummer_1f1(1.0, 2.0, z).unwrap();
            assert!(rel(got, want) < 1e-13, "z = {z}: {got} vs {want}");
        }
    }

    #[test]
    fn leading_asymptote_at_large_argument() {
        let got = kummer_1f1(1.61, 2.61, -1e4).unwrap();
        let lead = (log_gamma_unchecked(2.61) - log_gamma_unchecked(1.0) - 1.61 * 1e4f64.ln()).exp();
        assert!(rel(got, lead) < 0.01);
    }

    #[test]
    fn regimes_agree_at_switch_points() {
        for (a, b) in [(1.61, 2.61), (0.3, 4.0), (2.7, 3.1), (1.05, 9.0)] {
            let x = DIRECT_SERIES_MAX;
            let direct = direct_series(a, b, -x).ln();
            let kummer = -x + ln_positive_series(b - a, b, x);
            assert!((direct - kummer).abs() < 1e-13);

            let x = ASYMPTOTIC_MIN;
            let series = -x + ln_positive_series(b - a, b, x);
            let asym = ln_asymptotic(a, b, x).unwrap();
            assert!((series - asym).abs() < 1e-10, "{a} {b}: {series} vs {asym}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(kummer_1f1(2.0, 2.0, -1.0).is_err());
        assert!(kummer_1f1(0.0, 2.0, -1.0).is_err());
        assert!(kummer_1f1(1.0, 2.0, f64::NAN).is_err());
    }
}
