//! Multi-scale priority model for bursty event trains.
//!
//! Events follow a renewal process with intensity `ρ r(τ) H(x - y)`: a
//! refractory kernel `r(τ) = 1 + Σ γ_k e^{-α_k τ}` times a competition
//! between the priority `x ~ Beta(a, b)` of the pending event and a uniform
//! competing priority `y`. Marginalizing the priorities gives the interval
//! density
//!
//! ```text
//! p(τ) = ρ r(τ) a/(a+b) ₁F₁(a+1; a+b+1; -ρ R(τ)),   R(τ) = ∫₀^τ r,
//! ```
//!
//! whose tail decays as `τ^{-(a+1)}`.
//!
//! * [`special`]: log-gamma, digamma, ₁F₁, Beta-weighted quadrature.
//! * [`model`]: parameters, kernel, density, survival, tail asymptote.
//! * [`simulate`]: discrete-time and time-rescaling samplers.
//! * [`likelihood`]: penalized log-likelihood and its analytic gradient.
//! * [`fit`]: constrained maximum likelihood.
//! * [`selection`]: BIC and pairwise preferences.
//! * [`io`]: timestamp files, histograms, JSON documents.

pub mod error;
pub mod exec;
pub mod fit;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod selection;
pub mod simulate;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
pub use fit::{fit, FitConfig, FitResult};
pub use likelihood::{ItiSet, Likelihood};
pub use model::{ModelParams, RefractoryKernel, Variant};
