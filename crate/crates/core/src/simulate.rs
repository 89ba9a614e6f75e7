//! Generative samplers.
//!
//! [`simulate_discrete`] runs the binned latent system: touch priority `x`,
//! competing priority `y`, and a Bernoulli touch per bin with probability
//! `ρ r(τ) Δt H(x - y)`. [`simulate_continuous`] samples the renewal
//! intervals directly by time rescaling: draw `x ~ Beta(a, b)` and
//! `ε ~ Exp(1)`, then solve `ρ x R(τ) = ε`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, Distribution, Exp1};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ModelParams, RefractoryKernel};

/// Largest allowed `Δt ρ sup r` for the discrete sampler.
pub const MAX_BIN_PROBABILITY: f64 = 0.1;

/// Intervals per independently seeded block of the continuous sampler.
pub const CONTINUOUS_BLOCK: usize = 4096;

const STREAM_PRIORITY: u64 = 1;
const STREAM_OTHER: u64 = 2;
const STREAM_TIMING: u64 = 3;

/// Independent generator for `(seed, purpose, block)`.
pub fn substream(seed: u64, purpose: u64, block: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) ^ block);
    rng
}

/// Sorted, duplicate-free event times in integer milliseconds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventTrain {
    timestamps: Vec<i64>,
    /// Epoch of timestamp zero, in milliseconds. Carried through untouched.
    pub origin: i64,
}

impl EventTrain {
    /// Sorts and merges exact duplicates; returns the train and the number of
    /// merged duplicates.
    pub fn from_unsorted(mut timestamps: Vec<i64>) -> (Self, usize) {
        timestamps.sort_unstable();
        let before = timestamps.len();
        timestamps.dedup();
        let duplicates = before - timestamps.len();
        (
            Self {
                timestamps,
                origin: 0,
            },
            duplicates,
        )
    }

    /// Builds a train from consecutive intervals in seconds, starting at 0 ms.
    /// Event times are the rounded cumulative sums, bumped by 1 ms where
    /// rounding would make two events coincide.
    pub fn from_intervals(intervals: &[f64]) -> Result<Self> {
        let mut timestamps = Vec::with_capacity(intervals.len() + 1);
        timestamps.push(0i64);
        let mut elapsed_ms = 0.0f64;
        let mut last = 0i64;
        for &tau in intervals {
            if !(tau > 0.0) {
                return Err(Error::InvalidParams(format!("non-positive interval {tau}")));
            }
            elapsed_ms += tau * 1e3;
            if elapsed_ms >= i64::MAX as f64 / 2.0 {
                return Err(Error::InvalidParams(
                    "event times overflow the millisecond timestamp range".into(),
                ));
            }
            let t = (elapsed_ms.round() as i64).max(last + 1);
            timestamps.push(t);
            last = t;
        }
        Ok(Self {
            timestamps,
            origin: 0,
        })
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Time from first to last event in seconds.
    pub fn span_seconds(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(first), Some(last)) => (last - first) as f64 / 1000.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Events(usize),
    /// Simulated duration in seconds.
    Duration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Bin width in seconds (discrete sampler only).
    pub dt: f64,
    pub horizon: Horizon,
}

impl SimConfig {
    pub fn new(seed: u64, horizon: Horizon) -> Self {
        Self {
            seed,
            dt: 1e-3,
            horizon,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Checks the bin width against the Bernoulli validity bound for `params`.
    pub fn validate_for(&self, params: &ModelParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        match self.horizon {
            Horizon::Duration(t) if !(t >= 0.0 && t.is_finite()) => {
                return Err(Error::InvalidConfig(format!("invalid duration {t}")));
            }
            _ => {}
        }
        let p = self.dt * params.rho() * params.kernel.sup();
        if p > MAX_BIN_PROBABILITY {
            return Err(Error::InvalidConfig(format!(
                "dt * rho * max r = {p:.4} exceeds {MAX_BIN_PROBABILITY}; use a smaller dt"
            )));
        }
        Ok(())
    }
}

/// Output of the discrete sampler: event bins of width `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrain {
    pub dt: f64,
    /// Bin index (time / dt) of each event, strictly increasing.
    pub bins: Vec<u64>,
}

impl DiscreteTrain {
    /// Inter-event intervals in seconds.
    pub fn intervals(&self) -> Vec<f64> {
        self.bins
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 * self.dt)
            .collect()
    }

    pub fn to_event_train(&self) -> EventTrain {
        let ms: Vec<i64> = self
            .bins
            .iter()
            .map(|&b| (b as f64 * self.dt * 1e3).round() as i64)
            .collect();
        EventTrain::from_unsorted(ms).0
    }
}

struct DiscreteState {
    x: f64,
    /// Competing priority carried over from the last touch bin.
    y_held: f64,
    /// Absolute bin of the last touch.
    last_touch: u64,
}

fn bin_probability(params: &ModelParams, rho: f64, dt: f64, tau: f64) -> f64 {
    (rho * params.kernel.eval(tau).max(0.0) * dt).min(1.0)
}

fn beta_dist(params: &ModelParams) -> Result<Beta<f64>> {
    Beta::new(params.a, params.b)
        .map_err(|e| Error::InvalidParams(format!("Beta({}, {}): {e}", params.a, params.b)))
}

/// Discrete-time latent system with exact skip-ahead over the bins where no
/// touch occurs.
///
/// After a non-touch bin the competing priority is a fresh uniform draw, so
/// the per-bin touch probability given `x` is `x min(1, ρ r(τ) Δt)`
/// independently across bins. Runs of empty bins are skipped by thinning a
/// geometric candidate sequence with the bound `x min(1, ρ sup r Δt)`. The
/// first bin after a touch reuses the held competing priority exactly as the
/// binned recursion prescribes. The output has the same law as
/// [`simulate_discrete_stepwise`].
pub fn simulate_discrete(params: &ModelParams, cfg: &SimConfig) -> Result<DiscreteTrain> {
    run_discrete(params, cfg, |state, rho, rngs| {
        let dt = cfg.dt;
        let first_p = bin_probability(params, rho, dt, dt);
        // Bin 1: the competing priority is still the one held at the touch.
        if state.x > state.y_held && rngs.timing.random::<f64>() < first_p {
            return Ok(1);
        }
        let bound = (rho * params.kernel.sup() * dt).min(1.0) * state.x;
        if !(bound > 0.0) {
            return Err(Error::InvalidParams("touch priority underflowed to zero".into()));
        }
        let ln_miss = (-bound).ln_1p();
        let mut j: u64 = 1;
        loop {
            let u: f64 = 1.0 - rngs.timing.random::<f64>();
            let skip = (u.ln() / ln_miss).floor();
            if !(skip < 1e18) {
                return Err(Error::InvalidParams("inter-event gap exceeds the bin counter".into()));
            }
            j += skip as u64 + 1;
            let p = state.x * bin_probability(params, rho, dt, j as f64 * dt);
            if rngs.timing.random::<f64>() * bound < p {
                // The competing priority that lost is uniform below x.
                state.y_held = state.x * rngs.other.random::<f64>();
                return Ok(j);
            }
        }
    })
}

/// Literal bin-by-bin recursion. Cost is linear in the number of bins; use
/// for short horizons and as a reference for [`simulate_discrete`].
pub fn simulate_discrete_stepwise(params: &ModelParams, cfg: &SimConfig) -> Result<DiscreteTrain> {
    run_discrete(params, cfg, |state, rho, rngs| {
        let mut y = state.y_held;
        let mut j: u64 = 0;
        loop {
            j += 1;
            let lambda_dt = bin_probability(params, rho, cfg.dt, j as f64 * cfg.dt);
            let touch = state.x > y && rngs.timing.random::<f64>() < lambda_dt;
            if touch {
                state.y_held = y;
                return Ok(j);
            }
            y = rngs.other.random::<f64>();
        }
    })
}

struct Rngs {
    priority: ChaCha12Rng,
    other: ChaCha12Rng,
    timing: ChaCha12Rng,
}

/// Drives a discrete sampler whose `next_gap` returns the number of bins from
/// the last touch to the next one.
fn run_discrete<F>(params: &ModelParams, cfg: &SimConfig, mut next_gap: F) -> Result<DiscreteTrain>
where
    F: FnMut(&mut DiscreteState, f64, &mut Rngs) -> Result<u64>,
{
    params.validate()?;
    cfg.validate_for(params)?;
    let rho = params.rho();
    let beta = beta_dist(params)?;
    let mut rngs = Rngs {
        priority: substream(cfg.seed, STREAM_PRIORITY, 0),
        other: substream(cfg.seed, STREAM_OTHER, 0),
        timing: substream(cfg.seed, STREAM_TIMING, 0),
    };

    // Start a burn-in of 10/ρ seconds before bin 0 as if a touch had just
    // happened; events before bin 0 are discarded.
    let burn_in = ((10.0 / rho) / cfg.dt).ceil() as u64;
    let mut state = DiscreteState {
        x: beta.sample(&mut rngs.priority),
        y_held: rngs.other.random::<f64>(),
        last_touch: 0,
    };
    let (max_events, end_bin) = match cfg.horizon {
        Horizon::Events(n) => (n, u64::MAX),
        Horizon::Duration(t) => (usize::MAX, burn_in.saturating_add((t / cfg.dt).ceil() as u64)),
    };
    let mut bins = Vec::new();
    while bins.len() < max_events {
        let gap = next_gap(&mut state, rho, &mut rngs)?;
        let bin = state
            .last_touch
            .checked_add(gap)
            .ok_or_else(|| Error::InvalidParams("event time overflows the bin counter".into()))?;
        if bin >= end_bin {
            break;
        }
        if bin >= burn_in {
            bins.push(bin - burn_in);
        }
        state.last_touch = bin;
        state.x = beta.sample(&mut rngs.priority);
    }
    Ok(DiscreteTrain { dt: cfg.dt, bins })
}

/// `n_events` renewal intervals (seconds) by time rescaling.
pub fn simulate_continuous(params: &ModelParams, n_events: usize, seed: u64) -> Result<Vec<f64>> {
    simulate_continuous_with(params, n_events, seed, Execution::default())
}

/// As [`simulate_continuous`] with an explicit execution policy. Each block
/// of [`CONTINUOUS_BLOCK`] intervals has its own random streams, so the
/// output is identical under every policy.
pub fn simulate_continuous_with(
    params: &ModelParams,
    n_events: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    params.validate()?;
    if n_events == 0 {
        return Err(Error::InvalidConfig("n_events must be at least 1".into()));
    }
    let beta = beta_dist(params)?;
    let rho = params.rho();
    let n_blocks = n_events.div_ceil(CONTINUOUS_BLOCK);
    let blocks: Vec<usize> = (0..n_blocks).collect();
    let chunks = exec.map(&blocks, |&block| -> Result<Vec<f64>> {
        let len = CONTINUOUS_BLOCK.min(n_events - block * CONTINUOUS_BLOCK);
        let mut priority = substream(seed, STREAM_PRIORITY, block as u64);
        let mut timing = substream(seed, STREAM_TIMING, block as u64);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let x: f64 = beta.sample(&mut priority).max(f64::MIN_POSITIVE);
            let eps: f64 = Exp1.sample(&mut timing);
            let target = eps / (rho * x);
            let tau = invert_refractory_integral(&params.kernel, target)?;
            out.push(tau);
        }
        Ok(out)
    });
    let mut intervals = Vec::with_capacity(n_events);
    for chunk in chunks {
        intervals.extend(chunk?);
    }
    Ok(intervals)
}

/// Intervals of a train started at 0 whose events fall in `[0, duration]`
/// seconds. The result is a prefix of [`simulate_continuous`] with the same
/// seed.
pub fn simulate_continuous_for(params: &ModelParams, duration: f64, seed: u64) -> Result<Vec<f64>> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidConfig(format!("duration must be positive, got {duration}")));
    }
    // Blocks are seeded independently, so a longer run extends a shorter one.
    let mut n = CONTINUOUS_BLOCK;
    loop {
        let intervals = simulate_continuous(params, n, seed)?;
        let mut elapsed = 0.0;
        for (i, tau) in intervals.iter().enumerate() {
            elapsed += tau;
            if elapsed > duration {
                return Ok(intervals[..i].to_vec());
            }
        }
        n = n.checked_mul(2).ok_or_else(|| Error::InvalidConfig("duration too long".into()))?;
    }
}

/// Solution of `R(τ) = target` and whether it sits on a plateau of `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub tau: f64,
    /// `R` is flat at `target` over an interval (`r = 0` there); `tau` is the
    /// left end of the bracket.
    pub plateau: bool,
}

/// Inverts `R(τ) = ∫₀^τ r` with a bracketed, safeguarded Newton iteration.
pub fn invert_refractory_integral(kernel: &RefractoryKernel, target: f64) -> Result<f64> {
    let inv = invert_refractory_integral_flagged(kernel, target)?;
    if inv.plateau {
        log::warn!("R(tau) is flat at {target}; returning the left end {}", inv.tau);
    }
    Ok(inv.tau)
}

pub fn invert_refractory_integral_flagged(kernel: &RefractoryKernel, target: f64) -> Result<Inversion> {
    if !(target > 0.0) || target.is_nan() {
        return Err(Error::RootFinding(format!("target must be positive, got {target}")));
    }
    if target.is_infinite() {
        return Err(Error::RootFinding("target is infinite".into()));
    }
    if kernel.is_empty() {
        return Ok(Inversion {
            tau: target,
            plateau: false,
        });
    }
    // τ - Σ γ⁻/α <= R(τ) <= τ + Σ γ⁺/α.
    let (mut neg_mass, mut pos_mass) = (0.0, 0.0);
    for (g, a) in kernel.gamma.iter().zip(&kernel.alpha) {
        if *g < 0.0 {
            neg_mass -= g / a;
        } else {
            pos_mass += g / a;
        }
    }
    let mut lo = (target - pos_mass).max(0.0);
    let mut hi = target + neg_mass;
    if kernel.integral(hi) < target {
        // Infeasible kernels only; widen until bracketed.
        let mut widen = 0;
        while kernel.integral(hi) < target {
            hi = 2.0 * hi + 1.0;
            widen += 1;
            if widen > 200 {
                return Err(Error::RootFinding(format!("cannot bracket R(tau) = {target}")));
            }
        }
    }
    let accept = 1e-10 * target.max(1.0);
    let tight = 4.0 * f64::EPSILON * target;
    let mut tau = target.clamp(lo, hi);
    for _ in 0..300 {
        let f = kernel.integral(tau) - target;
        if f.abs() <= tight || f == 0.0 {
            return Ok(Inversion { tau, plateau: false });
        }
        if f < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let slope = kernel.eval(tau);
        let newton = if slope > 0.0 { tau - f / slope } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == tau || hi - lo <= f64::EPSILON * hi {
            break;
        }
        tau = next;
    }
    let f = kernel.integral(tau) - target;
    if f.abs() <= accept {
        return Ok(Inversion { tau, plateau: false });
    }
    let f_lo = kernel.integral(lo) - target;
    if f_lo.abs() <= accept {
        return Ok(Inversion {
            tau: lo,
            plateau: true,
        });
    }
    Err(Error::RootFinding(format!(
        "R(tau) = {target} not resolved: residual {f:e} at tau = {tau}"
    )))
}
