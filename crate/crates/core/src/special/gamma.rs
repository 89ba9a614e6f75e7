//! Log-gamma, digamma and log-beta on the positive real axis.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// (-1)^k (zeta(k) - 1) / k for k = 2..=40.
const ZETA_MINUS_ONE_OVER_K: [f64; 39] = [
    3.22467033424113203e-01,
    -6.73523010531981020e-02,
    2.05808084277845464e-02,
    -7.38555102867398568e-03,
    2.89051033074152336e-03,
    -1.19275391170326102e-03,
    5.09669524743042450e-04,
    -2.23154758453579386e-04,
    9.94575127818085310e-05,
    -4.49262367381331420e-05,
    2.05072127756706911e-05,
    -9.43948827526839672e-06,
    4.37486678990748817e-06,
    -2.03921575380136619e-06,
    9.55141213040741935e-07,
    -4.49246919876456619e-07,
    2.12071848055546646e-07,
    -1.00432248239680991e-07,
    4.76981016936398040e-08,
    -2.27110946089431635e-08,
    1.08386592148969546e-08,
    -5.18347504197004664e-09,
    2.48367454380247848e-09,
    -1.19214014058609115e-09,
    5.73136724167886225e-10,
    -2.75952288512423336e-10,
    1.33047643742444888e-10,
    -6.42296456383809960e-11,
    3.10442477473222756e-11,
    -1.50213840807541417e-11,
    7.27597448023907917e-12,
    -3.52774247657591507e-12,
    1.71199179055961798e-12,
    -8.31538584142028498e-13,
    4.04220052528944019e-13,
    -1.96647563109661653e-13,
    9.57363038783855557e-14,
    -4.66407602642837444e-14,
    2.27373696006597242e-14,
];

/// B_{2k} / (2k (2k-1)) for the Stirling series.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// B_{2k} / (2k) for the digamma asymptotic series.
const DIGAMMA_ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

const STIRLING_MIN: f64 = 15.0;

/// ln Γ(1 + eps) for |eps| <= 0.5, from the Taylor expansion about 1 with
/// the slowly converging ζ(k)/k part summed in closed form as -ln(1+eps)+eps.
fn ln_gamma_1p(eps: f64) -> f64 {
    let mut acc = 0.0;
    let mut power = eps * eps;
    for c in ZETA_MINUS_ONE_OVER_K {
        acc += c * power;
        power *= eps;
    }
    -EULER_GAMMA * eps + (eps - eps.ln_1p()) + acc
}

fn ln_gamma_stirling(z: f64) -> f64 {
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut power = inv;
    for c in STIRLING {
        series += c * power;
        power *= inv2;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_2PI + series
}

/// Natural logarithm of the gamma function for `z > 0`.
pub fn log_gamma(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::domain("log_gamma", format!("z = {z}")));
    }
    Ok(log_gamma_unchecked(z))
}

pub(crate) fn log_gamma_unchecked(z: f64) -> f64 {
    if (0.5..=1.5).contains(&z) {
        return ln_gamma_1p(z - 1.0);
    }
    if z > 1.5 && z < 2.5 {
        let eps = z - 2.0;
        return eps.ln_1p() + ln_gamma_1p(eps);
    }
    if z >= STIRLING_MIN {
        return ln_gamma_stirling(z);
    }
    // Shift upward with Γ(z) = Γ(z + n) / (z (z+1) ... (z+n-1)).
    let mut shifted = z;
    let mut product = 1.0;
    while shifted < STIRLING_MIN {
        product *= shifted;
        shifted += 1.0;
    }
    ln_gamma_stirling(shifted) - product.ln()
}

/// Digamma ψ(z) = d ln Γ(z) / dz for `z > 0`.
pub fn digamma(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::domain("digamma", format!("z = {z}")));
    }
    Ok(digamma_unchecked(z))
}

pub(crate) fn digamma_unchecked(mut z: f64) -> f64 {
    let mut shift = 0.0;
    while z < 10.0 {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut series = 0.0;
    let mut power = inv2;
    for c in DIGAMMA_ASYMPTOTIC {
        series += c * power;
        power *= inv2;
    }
    shift + z.ln() - 0.5 / z - series
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) - ln Γ(a + b).
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a <= 0.0 || b <= 0.0 {
        return Err(Error::domain("log_beta", format!("a = {a}, b = {b}")));
    }
    Ok(log_beta_unchecked(a, b))
}

pub(crate) fn log_beta_unchecked(a: f64, b: f64) -> f64 {
    log_gamma_unchecked(a) + log_gamma_unchecked(b) - log_gamma_unchecked(a + b)
}
