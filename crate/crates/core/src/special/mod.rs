//! Scalar special functions and Beta-weighted quadrature.

pub(crate) mod gamma;
mod kummer;
mod quadrature;

pub use gamma::{digamma, log_beta, log_gamma};
pub use kummer::{kummer_1f1, ln_kummer_1f1};
pub use quadrature::{
    beta_expectation, beta_expectation_tilted, BetaNode, GaussLegendre, QuadratureConfig,
    TiltedBetaRule,
};

pub(crate) use gamma::{digamma_unchecked, log_beta_unchecked, log_gamma_unchecked};

