//! τ-grid specifications for the eval commands.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// `log:MIN:MAX:COUNT` or a whitespace-separated table whose first column is
/// τ in seconds (`#` comments allowed).
pub fn parse_tau_grid(spec: &str) -> Result<Vec<f64>> {
    if let Some(rest) = spec.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [min, max, count] = parts[..] else {
            bail!("expected log:MIN:MAX:COUNT, got `{spec}`");
        };
        let min: f64 = min.parse().with_context(|| format!("bad MIN `{min}`"))?;
        let max: f64 = max.parse().with_context(|| format!("bad MAX `{max}`"))?;
        let count: usize = count.parse().with_context(|| format!("bad COUNT `{count}`"))?;
        return log_grid(min, max, count);
    }
    let text = std::fs::read_to_string(Path::new(spec)).with_context(|| format!("reading grid {spec}"))?;
    let mut taus = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let Some(first) = line.split_whitespace().next() else {
            continue;
        };
        let tau: f64 = first
            .parse()
            .with_context(|| format!("{spec}:{}: not a number `{first}`", n + 1))?;
        if !(tau > 0.0 && tau.is_finite()) {
            bail!("{spec}:{}: τ must be positive, got {tau}", n + 1);
        }
        taus.push(tau);
    }
    if taus.is_empty() {
        bail!("grid file {spec} has no points");
    }
    Ok(taus)
}

pub fn log_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && max.is_finite()) || count == 0 {
        bail!("invalid log grid [{min}, {max}] with {count} points");
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let step = (max / min).ln() / (count - 1) as f64;
    Ok((0..count).map(|i| min * (step * i as f64).exp()).collect())
}
