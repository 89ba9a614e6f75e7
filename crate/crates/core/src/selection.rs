//! BIC and the pairwise preference matrix over fitted variants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::model::Variant;

/// Smallest BIC gap that counts as evidence for a model.
pub const BIC_THRESHOLD: f64 = 10.0;

/// `ln(N) |θ| - 2 𝓛*`.
pub fn bic(objective_at_optimum: f64, n_params: usize, n_data: usize) -> f64 {
    (n_data as f64).ln() * n_params as f64 - 2.0 * objective_at_optimum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    IFavored,
    JFavored,
    NoPreference,
}

impl Preference {
    /// Decision for `Δ = BIC(i) - BIC(j)`. A gap of exactly the threshold is
    /// not evidence either way.
    pub fn from_delta(delta: f64) -> Self {
        if delta < -BIC_THRESHOLD {
            Preference::IFavored
        } else if delta > BIC_THRESHOLD {
            Preference::JFavored
        } else {
            Preference::NoPreference
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Preference::IFavored => Preference::JFavored,
            Preference::JFavored => Preference::IFavored,
            Preference::NoPreference => Preference::NoPreference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPreference {
    pub i: Variant,
    pub j: Variant,
    /// `BIC(i) - BIC(j)`.
    pub delta_bic: f64,
    pub preference: Preference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub n_intervals: usize,
    pub data_fingerprint: String,
    pub bic: BTreeMap<Variant, f64>,
    /// Every ordered pair `(i, j)` with `i != j`, sorted by `(i, j)`.
    pub pairs: Vec<PairPreference>,
}

impl ComparisonMatrix {
    pub fn preference(&self, i: Variant, j: Variant) -> Option<Preference> {
        self.pairs
            .iter()
            .find(|p| p.i == i && p.j == j)
            .map(|p| p.preference)
    }

    /// Variants favored over every other compared variant.
    pub fn dominant(&self) -> Option<Variant> {
        self.bic.keys().copied().find(|&i| {
            self.pairs
                .iter()
                .filter(|p| p.i == i)
                .all(|p| p.preference == Preference::IFavored)
        })
    }
}

/// Pairwise BIC preferences. All results must come from the same data.
pub fn compare(results: &[FitResult]) -> Result<ComparisonMatrix> {
    let first = results
        .first()
        .ok_or_else(|| Error::Provenance("no fit results to compare".into()))?;
    let mut bic = BTreeMap::new();
    for r in results {
        if r.n_intervals != first.n_intervals || r.data_fingerprint != first.data_fingerprint {
            return Err(Error::Provenance(format!(
                "{} was fitted on different data than {}",
                r.variant, first.variant
            )));
        }
        if bic.insert(r.variant, r.bic).is_some() {
            return Err(Error::Provenance(format!("{} appears more than once", r.variant)));
        }
    }
    let mut pairs = Vec::new();
    for (&i, &bi) in &bic {
        for (&j, &bj) in &bic {
            if i != j {
                let delta_bic = bi - bj;
                pairs.push(PairPreference {
                    i,
                    j,
                    delta_bic,
                    preference: Preference::from_delta(delta_bic),
                });
            }
        }
    }
    Ok(ComparisonMatrix {
        n_intervals: first.n_intervals,
        data_fingerprint: first.data_fingerprint.clone(),
        bic,
        pairs,
    })
}
