//! Reference computations for the acceptance suite. Nothing here calls the
//! library's numerical code: quadrature, log-gamma and ₁F₁ are implemented
//! from scratch with different algorithms.

use std::f64::consts::{FRAC_PI_2, PI};

/// Tanh-sinh rule on `[lo, hi]`. The integrand receives `(x, x - lo, hi - x)`
/// with both distances computed without cancellation, so endpoint
/// singularities can be evaluated accurately. With `lo = 0` the abscissa
/// itself is exact down to subnormal distances.
pub fn tanh_sinh(lo: f64, hi: f64, step: f64, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = lo + half;
    let t_max = 4.5;
    let n = (t_max / step).ceil() as i64;
    let mut sum = 0.0;
    for k in -n..=n {
        let t = k as f64 * step;
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = half * FRAC_PI_2 * t.cosh() / (cu * cu);
        if w == 0.0 {
            continue;
        }
        // Distance from the nearer endpoint: half (1 - tanh|u|).
        let near = half * 2.0 / (1.0 + (2.0 * u.abs()).exp());
        if near == 0.0 {
            continue;
        }
        let far = 2.0 * half - near;
        let (x, d_lo, d_hi) = if u < 0.0 {
            (lo + near, near, far)
        } else if u > 0.0 {
            (hi - near, far, near)
        } else {
            (mid, half, half)
        };
        let v = f(x, d_lo, d_hi);
        sum += w * v;
    }
    sum * step
}

/// Sum of tanh-sinh integrals over consecutive `edges`.
pub fn panels(edges: &[f64], step: f64, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
    edges
        .windows(2)
        .map(|w| tanh_sinh(w[0], w[1], step, &f))
        .sum()
}

/// ln Γ(x) for x > 0 by upward recurrence and the Stirling series.
pub fn ln_gamma(mut x: f64) -> f64 {
    assert!(x > 0.0);
    let mut shift = 0.0;
    while x < 15.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let x2 = x * x;
    let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2)
        - 1.0 / (1680.0 * x * x2 * x2 * x2)
        + 1.0 / (1188.0 * x * x2 * x2 * x2 * x2);
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// ln ₁F₁(a; b; z) for b > a > 0 and z <= 0 from
/// `B(a, b-a)⁻¹ ∫₀¹ e^{zt} t^{a-1} (1-t)^{b-a-1} dt` on panels that double in
/// width away from the origin, starting at the decay scale `1/|z|`.
pub fn ln_kummer(a: f64, b: f64, z: f64) -> f64 {
    assert!(b > a && a > 0.0 && z <= 0.0);
    let scale = 1.0 / (1.0 - z);
    let mut edges = vec![0.0];
    let mut e = scale;
    while e < 0.5 {
        edges.push(e);
        e *= 2.0;
    }
    edges.push(0.5);
    let lb = ln_beta(a, b - a);
    let term = |t: f64, ln_one_minus: f64| (z * t + (a - 1.0) * t.ln() + (b - a - 1.0) * ln_one_minus - lb).exp();
    let inner = panels(&edges, 1.0 / 64.0, |t, _, _| term(t, (-t).ln_1p()));
    // Only on the last panel is the distance to the upper edge equal to 1 - t.
    let outer = tanh_sinh(0.5, 1.0, 1.0 / 64.0, |t, _, d_hi| term(t, d_hi.ln()));
    (inner + outer).ln()
}

/// Generalized two-Beta interval density: touch priority `x ~ Beta(a, 1)`,
/// competing priority `y ~ Beta(a', 1)`, with `π(x) = P(y < x)` obtained by
/// an inner quadrature. `r` and `big_r` are the kernel and its integral at τ.
pub fn two_beta_density(a: f64, a_other: f64, rho: f64, r: f64, big_r: f64) -> f64 {
    let pi_of = |x: f64| tanh_sinh(0.0, x, 1.0 / 16.0, |y, _, _| a_other * y.powf(a_other - 1.0));
    let s = rho * big_r;
    // Decay scale of e^{-s π(x)}: π(x*) = 1/s. Below x_lo the integrand is a
    // pure power whose mass relative to the total is below 1e-12.
    let x_star = if s > 1.0 { s.powf(-1.0 / a_other) } else { 1.0 };
    let x_lo = x_star * 10f64.powf(-12.0 / (a + a_other));
    let mut edges = vec![1.0];
    let mut e = 1.0;
    while e > x_lo {
        e /= 10.0;
        edges.push(e);
    }
    edges.push(0.0);
    edges.reverse();
    panels(&edges, 1.0 / 32.0, |x, _, _| {
        let pi = pi_of(x);
        a * x.powf(a - 1.0) * rho * r * pi * (-s * pi).exp()
    })
}
