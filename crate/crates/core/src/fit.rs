//! Penalized maximum likelihood by projected gradient ascent.
//!
//! The refractory kernel must stay nonnegative: `1 + Σ γ_k e^{-α_k τ_m} >= 0`
//! on a log-spaced grid `τ_1..τ_M`. A step that leaves the feasible set is
//! projected onto the hyperplane of the most violated grid constraint,
//! repeatedly, before it is evaluated.

use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::likelihood::{effective_reg_weight, ItiSet, Likelihood, ObjectiveValue, ParamLayout};
use crate::model::{ModelParams, RefractoryKernel, Variant};
use crate::selection::bic;
use crate::special::QuadratureConfig;

/// Times (seconds) at which kernel nonnegativity is enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGrid {
    times: Vec<f64>,
}

impl ConstraintGrid {
    pub fn log_spaced(min: f64, max: f64, points: usize) -> Result<Self> {
        if points < 10 {
            return Err(Error::InvalidConfig(format!("grid needs at least 10 points, got {points}")));
        }
        if !(min > 0.0 && max > min && max.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid grid range [{min}, {max}]")));
        }
        let step = (max / min).ln() / (points - 1) as f64;
        let times = (0..points).map(|i| min * (step * i as f64).exp()).collect();
        Ok(Self { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 10 {
            return Err(Error::InvalidConfig(format!("grid needs at least 10 points, got {}", times.len())));
        }
        if times[0] <= 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("grid times must be positive and increasing".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

impl Default for ConstraintGrid {
    fn default() -> Self {
        Self::log_spaced(1e-3, 5.0, 100).expect("default grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Grid index with the most negative `r`, when any is negative.
    pub most_violated: Option<usize>,
    /// Smallest `r` over the grid.
    pub min_value: f64,
}

/// Checks `r(τ_m) >= 0` on every grid point.
pub fn feasible(kernel: &RefractoryKernel, grid: &ConstraintGrid) -> Feasibility {
    let mut min_value = f64::INFINITY;
    let mut arg = 0;
    for (m, &t) in grid.times.iter().enumerate() {
        let r = kernel.raw_eval(t);
        if r < min_value {
            min_value = r;
            arg = m;
        }
    }
    let feasible = min_value >= 0.0;
    Feasibility {
        feasible,
        most_violated: (!feasible).then_some(arg),
        min_value,
    }
}

/// Euclidean projection of the kernel block onto `1 + w·γ = 0` with
/// `w_k = e^{-α_k τ_m}`. Other coordinates are untouched.
pub fn project(kernel: &RefractoryKernel, gamma: &mut [f64], tau: f64) {
    let w: Vec<f64> = kernel.alpha.iter().map(|a| (-a * tau).exp()).collect();
    let dot: f64 = w.iter().zip(gamma.iter()).map(|(w, g)| w * g).sum();
    let norm2: f64 = w.iter().map(|w| w * w).sum();
    if norm2 == 0.0 {
        return;
    }
    let scale = (1.0 + dot) / norm2;
    for (g, w) in gamma.iter_mut().zip(&w) {
        *g -= scale * w;
    }
}

/// Ascent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscentMethod {
    /// `∇𝓛 / N`.
    Gradient,
    /// `(F/N + 2λ/N I_γ)⁻¹ ∇𝓛 / N` with `F` the empirical Fisher
    /// information of the per-interval scores. Falls back to the gradient
    /// direction when no step along it improves the objective.
    FisherScoring,
}

impl FromStr for AscentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(AscentMethod::Gradient),
            "fisher" | "fisher_scoring" => Ok(AscentMethod::FisherScoring),
            _ => Err(Error::InvalidConfig(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub method: AscentMethod,
    /// Initial step size η.
    pub step_size: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_iters: usize,
    /// Tolerance on the max-norm of the projected gradient divided by N.
    pub grad_tol: f64,
    /// Relative objective change over [`stall_window`](Self::stall_window)
    /// iterations below which the fit stops.
    pub stall_tol: f64,
    pub stall_window: usize,
    pub grid: ConstraintGrid,
    /// Overrides the variant's regularization weight.
    pub reg_weight: Option<f64>,
    /// Jitters the initial point when set.
    pub seed: Option<u64>,
    pub quadrature: QuadratureConfig,
    pub execution: Execution,
}

impl Default for FitConfig {
    /// Fisher scoring with unit initial and maximal step.
    fn default() -> Self {
        Self {
            method: AscentMethod::FisherScoring,
            step_size: 1.0,
            min_step: 1e-8,
            max_step: 1.0,
            max_iters: 5000,
            grad_tol: 1e-6,
            stall_tol: 1e-9,
            stall_window: 50,
            grid: ConstraintGrid::default(),
            reg_weight: None,
            seed: None,
            quadrature: QuadratureConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    /// Plain gradient ascent: η starts at 1e-3 and stays in [1e-8, 1e-1].
    pub fn gradient_ascent() -> Self {
        Self {
            method: AscentMethod::Gradient,
            step_size: 1e-3,
            max_step: 1e-1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("step_size", self.step_size)?;
        positive("min_step", self.min_step)?;
        positive("max_step", self.max_step)?;
        positive("grad_tol", self.grad_tol)?;
        positive("stall_tol", self.stall_tol)?;
        if self.min_step > self.max_step {
            return Err(Error::InvalidConfig("min_step exceeds max_step".into()));
        }
        if let Some(w) = self.reg_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!("reg_weight must be nonnegative, got {w}")));
            }
        }
        if self.stall_window == 0 {
            return Err(Error::InvalidConfig("stall_window must be at least 1".into()));
        }
        self.quadrature.validate()
    }

    /// Reads `key = value` lines; `#` starts a comment. Unknown keys are an
    /// error. Keys: method (`fisher` or `gradient`, which selects the
    /// defaults of the other keys), step_size, min_step, max_step,
    /// max_iters, grad_tol, grid_min_ms, grid_max_ms, grid_points, seed,
    /// reg_weight.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() == "method" {
                    cfg = match value.trim().parse::<AscentMethod>() {
                        Ok(AscentMethod::Gradient) => Self::gradient_ascent(),
                        Ok(AscentMethod::FisherScoring) => Self::default(),
                        Err(e) => {
                            return Err(Error::Parse {
                                line: n + 1,
                                message: e.to_string(),
                            })
                        }
                    };
                }
            }
        }
        let (mut grid_min_ms, mut grid_max_ms, mut grid_points) = (1.0, 5000.0, 100usize);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
                value.parse().map_err(|_| format!("cannot parse `{value}`"))
            }
            let res: std::result::Result<(), String> = (|| {
                match key {
                    "method" => {}
                    "step_size" => cfg.step_size = num(value)?,
                    "min_step" => cfg.min_step = num(value)?,
                    "max_step" => cfg.max_step = num(value)?,
                    "max_iters" => cfg.max_iters = num(value)?,
                    "grad_tol" => cfg.grad_tol = num(value)?,
                    "grid_min_ms" => grid_min_ms = num(value)?,
                    "grid_max_ms" => grid_max_ms = num(value)?,
                    "grid_points" => grid_points = num(value)?,
                    "seed" => cfg.seed = Some(num(value)?),
                    "reg_weight" => cfg.reg_weight = Some(num(value)?),
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            })();
            res.map_err(parse_err)?;
        }
        cfg.grid = ConstraintGrid::log_spaced(grid_min_ms * 1e-3, grid_max_ms * 1e-3, grid_points)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveStall,
    /// No step down to the minimum step size improved the objective.
    NoImprovingStep,
    MaxIterations,
}

impl StopReason {
    pub fn converged(self) -> bool {
        self != StopReason::MaxIterations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: Variant,
    pub method: AscentMethod,
    pub params: ModelParams,
    pub objective: ObjectiveValue,
    pub reg_weight: f64,
    pub bic: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub n_projections: usize,
    /// Max-norm of the projected gradient / N at the returned point.
    pub grad_norm: f64,
    /// Objective after initialization and after each accepted step.
    pub objective_trace: Vec<ObjectiveValue>,
    pub n_intervals: usize,
    pub data_fingerprint: String,
}

/// Initial point: a = 0.8, b = 1 (1.2 when free), ρ = N / Σ τ, γ = 0.
pub fn initial_params(variant: Variant, data: &ItiSet, seed: Option<u64>) -> Result<ModelParams> {
    let mut a = 0.8;
    let mut b = if variant.b_free() { 1.2 } else { 1.0 };
    let mut c = (data.len() as f64 / data.total()).ln();
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        a *= rng.random_range(-0.2f64..0.2).exp();
        if variant.b_free() {
            b *= rng.random_range(-0.2f64..0.2).exp();
        }
        c += rng.random_range(-0.2..0.2);
    }
    ModelParams::for_variant(variant, a, b, c.exp(), vec![0.0; variant.kernel_size()])
}

/// Grid constraints with `r(τ_m)` at most this are treated as active.
const ACTIVE_TOL: f64 = 1e-8;

/// Scoring direction: maximizes `gᵀd - ½ dᵀHd` with `H = F/N + 2λ/N I_γ`
/// (plus damping `μ I`, raised until `H` factorizes) and `g = ∇𝓛/N`,
/// subject to `w_mᵀ d = 0` for active grid constraints the free direction
/// would cross. Constraints are added one at a time, most violated first.
fn scoring_direction(
    fisher: &[f64],
    gradient: &[f64],
    params: &ModelParams,
    layout: &ParamLayout,
    grid: &ConstraintGrid,
    lambda: f64,
    n: f64,
) -> Option<Vec<f64>> {
    let dim = gradient.len();
    let mut base = DMatrix::from_row_slice(dim, dim, fisher) / n;
    for k in layout.gamma() {
        base[(k, k)] += 2.0 * lambda / n;
    }
    let scale = (0..dim).map(|k| base[(k, k)]).fold(0.0f64, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return None;
    }
    let rhs = DVector::from_iterator(dim, gradient.iter().map(|g| g / n));
    let mut damping = 1e-10 * scale;
    let chol = loop {
        let mut m = base.clone();
        for k in 0..dim {
            m[(k, k)] += damping;
        }
        if let Some(chol) = m.cholesky() {
            break chol;
        }
        damping *= 100.0;
        if damping > scale {
            return None;
        }
    };
    let free = chol.solve(&rhs);

    // Normals of the active constraints, in full coordinates.
    let normals: Vec<DVector<f64>> = grid
        .times()
        .iter()
        .filter(|&&t| params.kernel.raw_eval(t) <= ACTIVE_TOL)
        .map(|&t| {
            let mut w = DVector::zeros(dim);
            for (k, alpha) in layout.gamma().zip(&params.kernel.alpha) {
                w[k] = (-alpha * t).exp();
            }
            w
        })
        .collect();
    let mut working: Vec<usize> = Vec::new();
    let mut d = free.clone();
    while working.len() < layout.n_kernel {
        let worst = normals
            .iter()
            .enumerate()
            .filter(|(m, _)| !working.contains(m))
            .map(|(m, w)| (m, w.dot(&d) / w.norm()))
            .filter(|(_, rate)| *rate < -1e-12)
            .min_by(|x, y| x.1.total_cmp(&y.1));
        let Some((m, _)) = worst else {
            break;
        };
        working.push(m);
        let a = DMatrix::from_columns(&working.iter().map(|&m| normals[m].clone()).collect::<Vec<_>>());
        let h_inv_a = chol.solve(&a);
        let schur = a.transpose() * &h_inv_a;
        let eps = 1e-12 * schur.norm();
        let multipliers = schur.pseudo_inverse(eps).ok()? * (a.transpose() * &free);
        d = &free - h_inv_a * multipliers;
    }
    d.iter().all(|v| v.is_finite()).then(|| d.iter().copied().collect())
}

/// Gradient with outward components along active constraints removed.
fn projected_gradient(
    params: &ModelParams,
    layout: &ParamLayout,
    grid: &ConstraintGrid,
    grad: &[f64],
) -> Vec<f64> {
    let mut g = grad.to_vec();
    if layout.n_kernel == 0 {
        return g;
    }
    let kernel = &params.kernel;
    for &t in grid.times() {
        if kernel.raw_eval(t) > ACTIVE_TOL {
            continue;
        }
        let w: Vec<f64> = kernel.alpha.iter().map(|a| (-a * t).exp()).collect();
        let gg = &mut g[layout.gamma()];
        let dot: f64 = w.iter().zip(gg.iter()).map(|(w, g)| w * g).sum();
        if dot < 0.0 {
            let norm2: f64 = w.iter().map(|w| w * w).sum();
            for (g, w) in gg.iter_mut().zip(&w) {
                *g -= dot / norm2 * w;
            }
        }
    }
    g
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Restores feasibility by cyclic projection; returns the number of
/// projections or `None` if `n + 1` projections were not enough.
fn repair(params: &mut ModelParams, grid: &ConstraintGrid) -> Option<usize> {
    let n = params.kernel.len();
    for used in 0..=n + 1 {
        let check = feasible(&params.kernel, grid);
        let Some(m) = check.most_violated else {
            return Some(used);
        };
        if used == n + 1 {
            break;
        }
        let mut gamma = params.kernel.gamma.clone();
        project(&params.kernel, &mut gamma, grid.times()[m]);
        params.kernel.gamma = gamma;
    }
    None
}

/// Fits `variant` to `data`. Numerical trouble during the iteration ends the
/// fit with the best point found; only invalid inputs are errors.
pub fn fit(variant: Variant, data: &ItiSet, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let lik = Likelihood::new(data)
        .with_quadrature(cfg.quadrature)?
        .with_execution(cfg.execution);
    let start = initial_params(variant, data, cfg.seed)?;
    fit_from(&lik, data, start, cfg).or_else(|e| {
        if cfg.seed.is_none() {
            return Err(e);
        }
        log::warn!("{variant} fit from the jittered start failed ({e}); retrying from default start");
        fit_from(&lik, data, initial_params(variant, data, None)?, cfg)
    })
}

/// Fits starting from `start`; its variant decides the free coordinates.
pub fn fit_from(lik: &Likelihood, data: &ItiSet, start: ModelParams, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let variant = start
        .variant
        .ok_or_else(|| Error::InvalidParams("fit needs parameters of a table variant".into()))?;
    let reg_weight = cfg.reg_weight.unwrap_or(variant.reg_weight());
    let n = lik.len() as f64;
    let layout = ParamLayout::of(&start);

    let mut params = start;
    let mut n_projections = repair(&mut params, &cfg.grid)
        .ok_or_else(|| Error::InvalidParams("initial kernel cannot be made feasible".into()))?;
    let with_fisher = cfg.method == AscentMethod::FisherScoring;
    let mut eval = lik.evaluate(&params, reg_weight, with_fisher)?;
    let mut trace = vec![eval.value];
    let mut eta = cfg.step_size.clamp(cfg.min_step, cfg.max_step);
    // Step for the gradient fallback of Fisher scoring.
    let mut eta_fallback = FitConfig::gradient_ascent().step_size;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    let mut pgrad_norm = max_norm(&projected_gradient(&params, &layout, &cfg.grid, &eval.gradient)) / n;

    let try_step = |params: &ModelParams, dir: &[f64], eta: f64, current: f64| {
        let theta = layout.pack(params);
        let trial: Vec<f64> = theta.iter().zip(dir).map(|(t, d)| t + eta * d).collect();
        let mut candidate = layout.unpack(params, &trial);
        if !(candidate.a > 0.0 && candidate.b > 0.0 && candidate.c.is_finite()) {
            return None;
        }
        let projections = repair(&mut candidate, &cfg.grid)?;
        // A kernel within rounding of zero at an observed interval sits on
        // the log barrier, where no later step can be resolved.
        if lik.min_kernel_at_data(&candidate.kernel) <= ACTIVE_TOL {
            return None;
        }
        match lik.objective(&candidate, reg_weight) {
            Ok(v) if v.objective.is_finite() && v.objective > current => Some((candidate, projections)),
            _ => None,
        }
    };

    while iterations < cfg.max_iters {
        if pgrad_norm <= cfg.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let gradient_dir: Vec<f64> = eval.gradient.iter().map(|g| g / n).collect();
        let scoring_dir = match &eval.fisher {
            Some(f) => scoring_direction(
                f,
                &eval.gradient,
                &params,
                &layout,
                &cfg.grid,
                effective_reg_weight(&params, reg_weight),
                n,
            ),
            None => None,
        };
        let mut accepted = None;
        if let Some(dir) = &scoring_dir {
            while eta >= cfg.min_step {
                if let Some(step) = try_step(&params, dir, eta, eval.value.objective) {
                    accepted = Some(step);
                    eta = (eta * 1.1).min(cfg.max_step);
                    break;
                }
                eta *= 0.5;
            }
            eta = eta.max(cfg.min_step);
        }
        if accepted.is_none() {
            let (step, max_step) = if scoring_dir.is_some() {
                (&mut eta_fallback, FitConfig::gradient_ascent().max_step)
            } else {
                (&mut eta, cfg.max_step)
            };
            while *step >= cfg.min_step {
                if let Some(found) = try_step(&params, &gradient_dir, *step, eval.value.objective) {
                    accepted = Some(found);
                    *step = (*step * 1.1).min(max_step);
                    break;
                }
                *step *= 0.5;
            }
            *step = step.max(cfg.min_step);
        }
        let Some((candidate, projections)) = accepted else {
            stop = StopReason::NoImprovingStep;
            break;
        };
        match lik.evaluate(&candidate, reg_weight, with_fisher) {
            Ok(next) => {
                n_projections += projections;
                params = candidate;
                eval = next;
                trace.push(eval.value);
                iterations += 1;
            }
            Err(e) => {
                log::warn!("gradient evaluation failed at an accepted point: {e}");
                stop = StopReason::NoImprovingStep;
                break;
            }
        }
        pgrad_norm = max_norm(&projected_gradient(&params, &layout, &cfg.grid, &eval.gradient)) / n;
        if trace.len() > cfg.stall_window {
            let old = trace[trace.len() - 1 - cfg.stall_window].objective;
            let gain = eval.value.objective - old;
            if gain <= cfg.stall_tol * eval.value.objective.abs().max(1.0) {
                stop = StopReason::ObjectiveStall;
                break;
            }
        }
    }
    if stop != StopReason::GradientTolerance && pgrad_norm <= cfg.grad_tol {
        stop = StopReason::GradientTolerance;
    }
    let value = eval.value;

    Ok(FitResult {
        variant,
        method: cfg.method,
        bic: bic(value.objective, variant.n_params(), lik.len()),
        objective: value,
        reg_weight,
        converged: stop.converged(),
        stop_reason: stop,
        iterations,
        n_projections,
        grad_norm: pgrad_norm,
        objective_trace: trace,
        n_intervals: data.len(),
        data_fingerprint: data.fingerprint(),
        params,
    })
}
