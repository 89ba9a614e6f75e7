//! Model parameters and the analytic interval-density quantities.
//!
//! Time is in seconds and the touching rate `rho = e^c` in Hz throughout.
//! The competing-task priority distribution is uniform, so the probability of
//! winning the competition with priority `x` is `x` itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_kummer_1f1, log_beta_unchecked, log_gamma_unchecked};

/// Values of `r(τ)` in `[-NUMERICAL_DUST, 0)` are reported as zero.
pub const NUMERICAL_DUST: f64 = 1e-12;

/// The five nested parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::M1, Variant::M2, Variant::M3, Variant::M4, Variant::M5];

    /// Number of refractory basis functions.
    pub fn kernel_size(self) -> usize {
        match self {
            Variant::M1 | Variant::M2 => 0,
            Variant::M3 | Variant::M4 => 8,
            Variant::M5 => 12,
        }
    }

    /// Whether the second Beta shape is a free parameter (fixed at 1 otherwise).
    pub fn b_free(self) -> bool {
        matches!(self, Variant::M2 | Variant::M4 | Variant::M5)
    }

    /// Free parameter count |θ|.
    pub fn n_params(self) -> usize {
        2 + usize::from(self.b_free()) + self.kernel_size()
    }

    /// Weight of the ridge penalty on the kernel coefficients.
    pub fn reg_weight(self) -> f64 {
        if self.kernel_size() == 0 {
            0.0
        } else {
            0.01
        }
    }

    /// Log-spaced kernel time constants for this variant.
    pub fn kernel(self, gamma: Vec<f64>) -> Result<RefractoryKernel> {
        match self.kernel_size() {
            0 if gamma.is_empty() => Ok(RefractoryKernel::none()),
            0 => Err(Error::InvalidParams(format!(
                "{self:?} has no refractory kernel but {} coefficients were given",
                gamma.len()
            ))),
            n if gamma.len() != n => Err(Error::InvalidParams(format!(
                "{self:?} needs {n} kernel coefficients, got {}",
                gamma.len()
            ))),
            8 => RefractoryKernel::log_spaced(gamma, 0.050, 1.0),
            _ => RefractoryKernel::log_spaced(gamma, 0.050, 1.5),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M1" => Ok(Variant::M1),
            "M2" => Ok(Variant::M2),
            "M3" => Ok(Variant::M3),
            "M4" => Ok(Variant::M4),
            "M5" => Ok(Variant::M5),
            other => Err(Error::InvalidParams(format!("unknown variant {other:?}"))),
        }
    }
}

/// `r(τ) = 1 + Σ_k γ_k e^{-α_k τ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefractoryKernel {
    /// Dimensionless coefficients γ_k.
    pub gamma: Vec<f64>,
    /// Inverse time constants α_k in 1/s, strictly decreasing.
    pub alpha: Vec<f64>,
}

impl RefractoryKernel {
    /// The flat kernel `r ≡ 1`.
    pub fn none() -> Self {
        Self {
            gamma: Vec::new(),
            alpha: Vec::new(),
        }
    }

    pub fn new(gamma: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if gamma.len() != alpha.len() {
            return Err(Error::InvalidParams(format!(
                "{} coefficients for {} time constants",
                gamma.len(),
                alpha.len()
            )));
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidParams("non-finite kernel coefficient".into()));
        }
        if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParams("time constants must be positive".into()));
        }
        if alpha.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParams(
                "inverse time constants must be strictly decreasing".into(),
            ));
        }
        Ok(Self { gamma, alpha })
    }

    /// `n = gamma.len()` basis functions with time constants spaced
    /// geometrically from `first_tc` to `last_tc` seconds.
    pub fn log_spaced(gamma: Vec<f64>, first_tc: f64, last_tc: f64) -> Result<Self> {
        let n = gamma.len();
        let alpha = match n {
            0 => Vec::new(),
            1 => vec![1.0 / first_tc],
            _ => {
                let ratio = (last_tc / first_tc).powf(1.0 / (n - 1) as f64);
                (0..n).map(|k| 1.0 / (first_tc * ratio.powi(k as i32))).collect()
            }
        };
        Self::new(gamma, alpha)
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Spacing ratio β with α_k = α_1 β^{-(k-1)}; 1 for fewer than 2 bases.
    pub fn spacing_ratio(&self) -> f64 {
        match self.alpha.len() {
            0 | 1 => 1.0,
            n => (self.alpha[0] / self.alpha[n - 1]).powf(1.0 / (n - 1) as f64),
        }
    }

    pub fn with_gamma(&self, gamma: Vec<f64>) -> Result<Self> {
        Self::new(gamma, self.alpha.clone())
    }

    /// `1 + Σ γ_k e^{-α_k τ}` without clamping.
    #[inline]
    pub(crate) fn raw_eval(&self, tau: f64) -> f64 {
        1.0 + self
            .gamma
            .iter()
            .zip(&self.alpha)
            .map(|(g, a)| g * (-a * tau).exp())
            .sum::<f64>()
    }

    /// `r(τ)`. Values within [`NUMERICAL_DUST`] below zero are returned as 0;
    /// larger violations are returned unchanged.
    pub fn eval(&self, tau: f64) -> f64 {
        let r = self.raw_eval(tau);
        if (-NUMERICAL_DUST..0.0).contains(&r) {
            0.0
        } else {
            r
        }
    }

    /// `R(τ) = ∫₀^τ r(t) dt = τ + Σ (γ_k/α_k)(1 - e^{-α_k τ})`.
    pub fn integral(&self, tau: f64) -> f64 {
        tau + self
            .gamma
            .iter()
            .zip(&self.alpha)
            .map(|(g, a)| -g / a * (-a * tau).exp_m1())
            .sum::<f64>()
    }

    /// Upper bound on `r` over `τ >= 0`.
    pub fn sup(&self) -> f64 {
        1.0 + self.gamma.iter().filter(|g| **g > 0.0).sum::<f64>()
    }
}

/// Full model state θ = (a, b, c = ln ρ, γ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Shape of the touch-priority Beta distribution; sets the tail exponent.
    pub a: f64,
    pub b: f64,
    /// Log touching rate, `rho = e^c` in Hz.
    pub c: f64,
    pub kernel: RefractoryKernel,
    /// Table variant these parameters belong to; `None` for ad-hoc kernels.
    pub variant: Option<Variant>,
}

impl ModelParams {
    /// Parameters outside the variant table (any kernel).
    pub fn new(a: f64, b: f64, rho: f64, kernel: RefractoryKernel) -> Result<Self> {
        let p = Self {
            a,
            b,
            c: rho.ln(),
            kernel,
            variant: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters of a table variant; `gamma` must match its kernel size and
    /// `b` must be 1 where the variant fixes it.
    pub fn for_variant(variant: Variant, a: f64, b: f64, rho: f64, gamma: Vec<f64>) -> Result<Self> {
        let p = Self {
            a,
            b,
            c: rho.ln(),
            kernel: variant.kernel(gamma)?,
            variant: Some(variant),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn rho(&self) -> f64 {
        self.c.exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParams(format!("a must be positive, got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidParams(format!("b must be positive, got {}", self.b)));
        }
        if !self.c.is_finite() {
            return Err(Error::InvalidParams(format!("rho must be positive, got {}", self.rho())));
        }
        if let Some(v) = self.variant {
            if !v.b_free() && self.b != 1.0 {
                return Err(Error::InvalidParams(format!("{v} fixes b = 1, got {}", self.b)));
            }
            if self.kernel.len() != v.kernel_size() {
                return Err(Error::InvalidParams(format!(
                    "{v} needs {} kernel coefficients, got {}",
                    v.kernel_size(),
                    self.kernel.len()
                )));
            }
        }
        Ok(())
    }
}

/// The monotone priority relabelling φ(x) = x^k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityTransform {
    exponent: f64,
}

impl PriorityTransform {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "transform exponent must be positive, got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn apply(&self, x: f64) -> f64 {
        x.powf(self.exponent)
    }
}

/// Maps the shape pair of `(Beta(x; a, 1), Beta(y; a_other, 1))` through φ,
/// giving `(k a, k a_other)`. The interval density is unchanged.
pub fn apply_priority_transform(t: PriorityTransform, a: f64, a_other: f64) -> (f64, f64) {
    (t.exponent * a, t.exponent * a_other)
}

pub fn refractory_eval(kernel: &RefractoryKernel, tau: f64) -> f64 {
    kernel.eval(tau)
}

pub fn refractory_integral(kernel: &RefractoryKernel, tau: f64) -> f64 {
    kernel.integral(tau)
}

/// `p(τ | x) = ρ x r(τ) e^{-ρ x R(τ)}`.
pub fn iti_density_conditional(params: &ModelParams, x: f64, tau: f64) -> f64 {
    let rho_x = params.rho() * x;
    rho_x * params.kernel.eval(tau) * (-rho_x * params.kernel.integral(tau)).exp()
}

/// ln of the marginal density `ρ r(τ) a/(a+b) ₁F₁(a+1; a+b+1; -ρ R(τ))`.
pub fn ln_iti_density(params: &ModelParams, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::domain("iti_density", format!("tau = {tau}")));
    }
    let r = params.kernel.eval(tau);
    if r < 0.0 {
        return Err(Error::Infeasible { tau, value: r });
    }
    let (a, b) = (params.a, params.b);
    let ln_prefactor = params.c + r.ln() + (a / (a + b)).ln();
    if tau == 0.0 {
        return Ok(ln_prefactor);
    }
    let s = params.rho() * params.kernel.integral(tau);
    Ok(ln_prefactor + ln_kummer_1f1(a + 1.0, a + b + 1.0, -s)?)
}

/// Marginal interval density p(τ) in 1/s. At τ = 0 this is the right limit
/// `ρ r(0) a/(a+b)`.
pub fn iti_density(params: &ModelParams, tau: f64) -> Result<f64> {
    ln_iti_density(params, tau).map(f64::exp)
}

/// Survival function `P(T > τ) = ₁F₁(a; a+b; -ρ R(τ))`.
pub fn iti_survival(params: &ModelParams, tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Ok(1.0);
    }
    let s = params.rho() * params.kernel.integral(tau);
    Ok(ln_kummer_1f1(params.a, params.a + params.b, -s)?.exp())
}

pub fn iti_cdf(params: &ModelParams, tau: f64) -> Result<f64> {
    iti_survival(params, tau).map(|s| 1.0 - s)
}

/// Power-law asymptote `Γ(a+1) / (B(a,b) ρ^a) τ^{-(a+1)}`.
pub fn iti_tail_asymptote(params: &ModelParams, tau: f64) -> f64 {
    let (a, b) = (params.a, params.b);
    (log_gamma_unchecked(a + 1.0) - log_beta_unchecked(a, b) - a * params.c - (a + 1.0) * tau.ln())
        .exp()
}
