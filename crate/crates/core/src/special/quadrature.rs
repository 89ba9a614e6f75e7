//! Gauss–Legendre quadrature and Beta-weighted expectations.
//!
//! Beta densities with small shape parameters blow up at the endpoints, and
//! for shapes slightly above one they are bounded but not smooth. Both cases
//! are handled with a power substitution `x = L u^k` on the endpoint panel,
//! with `k` the smallest integer making `k * shape` reach the configured
//! smoothness threshold. The Jacobian then absorbs the singular factor and the
//! rest of the integrand stays a smooth function of `u`, so a fixed-order rule
//! converges fast.
//!
//! Integrands carrying an exponential factor `e^{-s x}` with a large decay `s`
//! concentrate near `x = 0`. [`TiltedBetaRule`] truncates the domain to
//! `[0, T/s]` in that regime, with `T` chosen from the relative tolerance.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::special::gamma::log_beta_unchecked;

/// Numerical-integration policy for Beta-weighted expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Total Gauss–Legendre nodes per expectation (split across the two
    /// halves of the unit interval when the whole domain is integrated).
    pub node_count: usize,
    /// A shape parameter below this value triggers the endpoint power
    /// substitution; after substitution the endpoint behaves like `u^(t-1)`
    /// with `t >= threshold`.
    pub substitution_exponent_threshold: f64,
    pub relative_tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            node_count: 200,
            substitution_exponent_threshold: 3.0,
            relative_tolerance: 1e-10,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count < 16 {
            return Err(Error::InvalidConfig(format!(
                "node_count must be >= 16, got {}",
                self.node_count
            )));
        }
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "relative_tolerance must lie in (0, 1), got {}",
                self.relative_tolerance
            )));
        }
        if !(self.substitution_exponent_threshold > 0.0)
            || !self.substitution_exponent_threshold.is_finite()
        {
            return Err(Error::InvalidConfig(format!(
                "substitution_exponent_threshold must be positive, got {}",
                self.substitution_exponent_threshold
            )));
        }
        Ok(())
    }

    /// Exponential cutoff `T` for a tilted Beta(shape, ·) expectation: the
    /// neglected tail is of order `T^(shape-1) e^{-T}`.
    fn tilt_cutoff(&self, shape: f64) -> f64 {
        -self.relative_tolerance.ln() + 10.0 + 3.0 * shape
    }

    fn substitution_power(&self, shape: f64) -> f64 {
        if shape < self.substitution_exponent_threshold {
            (self.substitution_exponent_threshold / shape).ceil().min(4096.0)
        } else {
            1.0
        }
    }
}

/// Gauss–Legendre rule mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Legendre recurrence for P_n(t) and its derivative.
                let (mut p0, mut p1) = (1.0, t);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { t } else { p1 };
                let pn_1 = if n == 1 { 1.0 } else { p0 };
                dp = nf * (t * pn - pn_1) / (t * t - 1.0);
                let dt = pn / dp;
                t -= dt;
                if dt.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - t * t) * dp * dp);
            // t is the positive root; mirror it.
            nodes[i] = 0.5 * (1.0 - t);
            nodes[n - 1 - i] = 0.5 * (1.0 + t);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    /// Shared rule of order `n`, built once per process.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(rule) = cache.read().expect("quadrature cache poisoned").get(&n) {
            return Arc::clone(rule);
        }
        let rule = Arc::new(GaussLegendre::new(n));
        cache
            .write()
            .expect("quadrature cache poisoned")
            .entry(n)
            .or_insert(rule)
            .clone()
    }

    pub fn integrate(&self, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let width = hi - lo;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * f(lo + width * u))
            .sum::<f64>()
            * width
    }
}

/// A quadrature node of a Beta-weighted rule.
#[derive(Debug, Clone, Copy)]
pub struct BetaNode {
    pub x: f64,
    pub one_minus_x: f64,
    pub ln_x: f64,
    pub ln_one_minus_x: f64,
    /// `e^{-s x}` for the decay `s` the node was generated for.
    pub tilt: f64,
}

#[derive(Debug, Clone, Copy)]
struct WeightedNode {
    node: BetaNode,
    weight: f64,
}

#[derive(Debug, Clone, Copy)]
struct ScaledNode {
    t: f64,
    ln_t: f64,
    exp_neg_t: f64,
    /// Gauss weight times `T^a k u^(ka-1)`.
    base_weight: f64,
}

/// Reusable rule for `∫ f(x) Beta(x; a, b) dx` where `f` may carry an
/// exponential tilt `e^{-s x}` of arbitrary decay `s >= 0`.
#[derive(Debug, Clone)]
pub struct TiltedBetaRule {
    a: f64,
    b: f64,
    ln_beta: f64,
    full: Vec<WeightedNode>,
    scaled: Vec<ScaledNode>,
    cutoff: f64,
}

impl TiltedBetaRule {
    pub fn new(a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        if !(a.is_finite() && b.is_finite()) || a <= 0.0 || b <= 0.0 {
            return Err(Error::domain("beta_expectation", format!("a = {a}, b = {b}")));
        }
        let ln_beta = log_beta_unchecked(a, b);
        let half = GaussLegendre::cached(cfg.node_count / 2);
        let whole = GaussLegendre::cached(cfg.node_count);
        let ln_half = 0.5f64.ln();

        let mut full = Vec::with_capacity(2 * half.nodes.len());
        // [0, 1/2]: x = u^k / 2.
        let k = cfg.substitution_power(a);
        for (&u, &w) in half.nodes.iter().zip(&half.weights) {
            let ln_u = u.ln();
            let ln_x = ln_half + k * ln_u;
            let x = ln_x.exp();
            let ln_one_minus_x = (-x).ln_1p();
            let ln_w = a * ln_half + k.ln() + (k * a - 1.0) * ln_u + (b - 1.0) * ln_one_minus_x
                - ln_beta;
            full.push(WeightedNode {
                node: BetaNode {
                    x,
                    one_minus_x: 1.0 - x,
                    ln_x,
                    ln_one_minus_x,
                    tilt: 1.0,
                },
                weight: w * ln_w.exp(),
            });
        }
        // [1/2, 1]: 1 - x = v^m / 2.
        let m = cfg.substitution_power(b);
        for (&v, &w) in half.nodes.iter().zip(&half.weights) {
            let ln_v = v.ln();
            let ln_y = ln_half + m * ln_v;
            let y = ln_y.exp();
            let ln_x = (-y).ln_1p();
            let ln_w =
                b * ln_half + m.ln() + (m * b - 1.0) * ln_v + (a - 1.0) * ln_x - ln_beta;
            full.push(WeightedNode {
                node: BetaNode {
                    x: 1.0 - y,
                    one_minus_x: y,
                    ln_x,
                    ln_one_minus_x: ln_y,
                    tilt: 1.0,
                },
                weight: w * ln_w.exp(),
            });
        }

        let cutoff = cfg.tilt_cutoff(a);
        let ln_cutoff = cutoff.ln();
        let scaled = whole
            .nodes
            .iter()
            .zip(&whole.weights)
            .map(|(&u, &w)| {
                let ln_u = u.ln();
                let ln_t = ln_cutoff + k * ln_u;
                let t = ln_t.exp();
                ScaledNode {
                    t,
                    ln_t,
                    exp_neg_t: (-t).exp(),
                    base_weight: w * (a * ln_cutoff + k.ln() + (k * a - 1.0) * ln_u).exp(),
                }
            })
            .collect();

        Ok(Self {
            a,
            b,
            ln_beta,
            full,
            scaled,
            cutoff,
        })
    }

    pub fn shape(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Decay above which only `[0, T/s]` is integrated.
    pub fn truncation_decay(&self) -> f64 {
        2.0 * self.cutoff
    }

    /// `Σ w_j f(node_j)` approximating `∫ f(x) Beta(x; a, b) dx`.
    ///
    /// Each node carries `tilt = e^{-decay x}`. When `decay` exceeds
    /// [`truncation_decay`](Self::truncation_decay) the nodes cover only
    /// `[0, T/decay]`, which is exact to the configured tolerance provided
    /// `f(x)` is bounded by a multiple of the tilt.
    #[inline]
    pub fn expectation<F: FnMut(&BetaNode) -> f64>(&self, decay: f64, mut f: F) -> f64 {
        self.expectations(decay, |node| [f(node)])[0]
    }

    /// Several expectations sharing one pass over the nodes.
    pub fn expectations<const K: usize, F>(&self, decay: f64, mut f: F) -> [f64; K]
    where
        F: FnMut(&BetaNode) -> [f64; K],
    {
        let mut acc = [0.0; K];
        if decay <= self.truncation_decay() {
            for wn in &self.full {
                let mut node = wn.node;
                node.tilt = if decay == 0.0 { 1.0 } else { (-decay * node.x).exp() };
                for (a, v) in acc.iter_mut().zip(f(&node)) {
                    *a += wn.weight * v;
                }
            }
        } else {
            let ln_s = decay.ln();
            let scale = (-self.a * ln_s - self.ln_beta).exp();
            let b_minus_one = self.b - 1.0;
            for sn in &self.scaled {
                let x = sn.t / decay;
                let ln_one_minus_x = (-x).ln_1p();
                let node = BetaNode {
                    x,
                    one_minus_x: 1.0 - x,
                    ln_x: sn.ln_t - ln_s,
                    ln_one_minus_x,
                    tilt: sn.exp_neg_t,
                };
                let w = if b_minus_one == 0.0 {
                    sn.base_weight
                } else {
                    sn.base_weight * (b_minus_one * ln_one_minus_x).exp()
                };
                for (a, v) in acc.iter_mut().zip(f(&node)) {
                    *a += w * v;
                }
            }
            for a in &mut acc {
                *a *= scale;
            }
        }
        acc
    }
}

/// `∫₀¹ f(x) Beta(x; a, b) dx` by fixed-order Gauss–Legendre after endpoint
/// substitution.
pub fn beta_expectation(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    beta_expectation_tilted(f, a, b, 0.0, cfg)
}

/// `∫₀¹ f(x) e^{-decay x} Beta(x; a, b) dx`, with the quadrature adapted to
/// the decay scale. `f` should be bounded (or grow at most polynomially).
pub fn beta_expectation_tilted(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    decay: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if !(decay >= 0.0) || !decay.is_finite() {
        return Err(Error::domain("beta_expectation", format!("decay = {decay}")));
    }
    let rule = TiltedBetaRule::new(a, b, cfg)?;
    let mut bad = None;
    let value = rule.expectation(decay, |node| {
        let v = f(node.x);
        if !v.is_finite() && bad.is_none() {
            bad = Some(node.x);
        }
        v * node.tilt
    });
    match bad {
        Some(x) => Err(Error::NonFiniteIntegrand { x }),
        None => Ok(value),
    }
}
