//! Penalized log-likelihood of a set of inter-event intervals and its
//! analytic gradient.
//!
//! Per interval, `ln p(τ) = c + ln r(τ) + ln⟨x E(x)⟩` with
//! `E(x) = e^{-ρ x R(τ)}` and `⟨x E⟩ = a/(a+b) ₁F₁(a+1; a+b+1; -ρ R(τ))`.
//! Expectations `⟨·⟩_{a,b}` are over `Beta(a, b)`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::{Execution, KahanSum};
use crate::model::{ModelParams, RefractoryKernel, Variant};
use crate::special::{digamma_unchecked, ln_kummer_1f1, QuadratureConfig, TiltedBetaRule};

/// Inter-event intervals in seconds, all positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ItiSet {
    intervals: Vec<f64>,
}

impl ItiSet {
    pub fn new(intervals: Vec<f64>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::EmptyData);
        }
        if let Some(bad) = intervals.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParams(format!("interval {bad} is not positive and finite")));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.intervals.iter().copied().sum::<KahanSum>().value()
    }

    /// SHA-256 over the little-endian bit patterns, in order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.intervals {
            hasher.update(t.to_bits().to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// `objective = log_likelihood - penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub log_likelihood: f64,
    pub penalty: f64,
    pub objective: f64,
}

impl ObjectiveValue {
    pub fn new(log_likelihood: f64, penalty: f64) -> Self {
        Self {
            log_likelihood,
            penalty,
            objective: log_likelihood - penalty,
        }
    }
}

/// Position of each free coordinate in a flat parameter vector:
/// `(a, [b], c, γ₁..γₙ)`, with `b` present only when it is free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub b_free: bool,
    pub n_kernel: usize,
}

impl ParamLayout {
    pub fn of(params: &ModelParams) -> Self {
        Self {
            b_free: params.variant.is_none_or(Variant::b_free),
            n_kernel: params.kernel.len(),
        }
    }

    pub fn len(&self) -> usize {
        2 + usize::from(self.b_free) + self.n_kernel
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn a(&self) -> usize {
        0
    }

    pub fn b(&self) -> Option<usize> {
        self.b_free.then_some(1)
    }

    pub fn c(&self) -> usize {
        1 + usize::from(self.b_free)
    }

    pub fn gamma(&self) -> std::ops::Range<usize> {
        let start = self.c() + 1;
        start..start + self.n_kernel
    }

    pub fn pack(&self, params: &ModelParams) -> Vec<f64> {
        let mut theta = vec![params.a];
        if self.b_free {
            theta.push(params.b);
        }
        theta.push(params.c);
        theta.extend_from_slice(&params.kernel.gamma);
        theta
    }

    /// Writes `theta` into a copy of `template`; fixed coordinates are kept.
    pub fn unpack(&self, template: &ModelParams, theta: &[f64]) -> ModelParams {
        debug_assert_eq!(theta.len(), self.len());
        let mut p = template.clone();
        p.a = theta[self.a()];
        if let Some(i) = self.b() {
            p.b = theta[i];
        }
        p.c = theta[self.c()];
        p.kernel.gamma.copy_from_slice(&theta[self.gamma()]);
        p
    }
}

/// Regularization weight actually applied: zero for kernel-free variants.
pub fn effective_reg_weight(params: &ModelParams, reg_weight: f64) -> f64 {
    match params.variant {
        Some(v) if v.kernel_size() == 0 => 0.0,
        _ => reg_weight,
    }
}

fn penalty(params: &ModelParams, reg_weight: f64) -> f64 {
    effective_reg_weight(params, reg_weight) * params.kernel.gamma.iter().map(|g| g * g).sum::<f64>()
}

/// Likelihood evaluator for one data set. Identical intervals are evaluated
/// once and weighted by their multiplicity.
#[derive(Debug, Clone)]
pub struct Likelihood {
    n: usize,
    values: Vec<f64>,
    counts: Vec<f64>,
    quadrature: QuadratureConfig,
    exec: Execution,
}

/// Objective with first-order information at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: ObjectiveValue,
    /// Gradient of the objective over the free coordinates.
    pub gradient: Vec<f64>,
    /// Row-major `Σ m_i s_i s_iᵀ` of the unpenalized per-interval scores.
    pub fisher: Option<Vec<f64>>,
}

/// Per-interval score contribution, `∇ ln p(τ)` over the free coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub tau: f64,
    pub multiplicity: usize,
    pub gradient: Vec<f64>,
}

impl Likelihood {
    pub fn new(data: &ItiSet) -> Self {
        let mut sorted = data.intervals.clone();
        sorted.sort_by(f64::total_cmp);
        let mut values: Vec<f64> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for t in sorted {
            if values.last() == Some(&t) {
                *counts.last_mut().unwrap() += 1.0;
            } else {
                values.push(t);
                counts.push(1.0);
            }
        }
        Self {
            n: data.len(),
            values,
            counts,
            quadrature: QuadratureConfig::default(),
            exec: Execution::default(),
        }
    }

    pub fn with_quadrature(mut self, cfg: QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        self.quadrature = cfg;
        Ok(self)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Number of intervals N.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of distinct interval values.
    pub fn distinct(&self) -> usize {
        self.values.len()
    }

    /// Smallest kernel value at an observed interval.
    pub fn min_kernel_at_data(&self, kernel: &RefractoryKernel) -> f64 {
        if kernel.is_empty() {
            return 1.0;
        }
        self.values
            .iter()
            .map(|&t| kernel.raw_eval(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn log_likelihood(&self, params: &ModelParams) -> Result<f64> {
        params.validate()?;
        let eval = TermEvaluator::new(params, None)?;
        let idx: Vec<usize> = (0..self.values.len()).collect();
        let sum = self.exec.chunked_fold(
            &idx,
            Ok(KahanSum::default()),
            |chunk| {
                let mut acc = 0.0;
                for &i in chunk {
                    acc += self.counts[i] * eval.ln_density(self.values[i])?;
                }
                Ok(acc)
            },
            |total: Result<KahanSum>, part: Result<f64>| {
                let mut total = total?;
                total.add(part?);
                Ok(total)
            },
        )?;
        Ok(sum.value())
    }

    pub fn objective(&self, params: &ModelParams, reg_weight: f64) -> Result<ObjectiveValue> {
        Ok(ObjectiveValue::new(self.log_likelihood(params)?, penalty(params, reg_weight)))
    }

    /// Objective and its gradient over the free coordinates of
    /// [`ParamLayout::of`]`(params)`.
    pub fn objective_and_gradient(
        &self,
        params: &ModelParams,
        reg_weight: f64,
    ) -> Result<(ObjectiveValue, Vec<f64>)> {
        let eval = self.evaluate(params, reg_weight, false)?;
        Ok((eval.value, eval.gradient))
    }

    /// Objective, gradient, and the empirical Fisher information
    /// `Σ m_i s_i s_iᵀ` of the per-interval scores `s_i`.
    pub fn evaluate(&self, params: &ModelParams, reg_weight: f64, with_fisher: bool) -> Result<Evaluation> {
        params.validate()?;
        let layout = ParamLayout::of(params);
        let rule = TiltedBetaRule::new(params.a + 1.0, params.b, &self.quadrature)?;
        let eval = TermEvaluator::new(params, Some(&rule))?;
        let dim = layout.len();
        let fisher_len = if with_fisher { dim * dim } else { 0 };
        let idx: Vec<usize> = (0..self.values.len()).collect();
        let identity = Ok((
            KahanSum::default(),
            vec![KahanSum::default(); dim],
            vec![0.0; fisher_len],
        ));
        let (ll, grad, fisher) = self.exec.chunked_fold(
            &idx,
            identity,
            |chunk| {
                let mut ll = 0.0;
                let mut grad = vec![0.0; dim];
                let mut fisher = vec![0.0; fisher_len];
                let mut term = vec![0.0; dim];
                for &i in chunk {
                    let m = self.counts[i];
                    ll += m * eval.ln_density_and_gradient(self.values[i], &layout, &mut term)?;
                    for (g, t) in grad.iter_mut().zip(&term) {
                        *g += m * t;
                    }
                    if with_fisher {
                        for (r, tr) in term.iter().enumerate() {
                            for (f, tc) in fisher[r * dim..r * dim + dim].iter_mut().zip(&term) {
                                *f += m * tr * tc;
                            }
                        }
                    }
                }
                Ok((ll, grad, fisher))
            },
            |total: Result<(KahanSum, Vec<KahanSum>, Vec<f64>)>,
             part: Result<(f64, Vec<f64>, Vec<f64>)>| {
                let (mut ll, mut grad, mut fisher) = total?;
                let (part_ll, part_grad, part_fisher) = part?;
                ll.add(part_ll);
                for (g, p) in grad.iter_mut().zip(part_grad) {
                    g.add(p);
                }
                for (f, p) in fisher.iter_mut().zip(part_fisher) {
                    *f += p;
                }
                Ok((ll, grad, fisher))
            },
        )?;
        let lambda = effective_reg_weight(params, reg_weight);
        let mut gradient: Vec<f64> = grad.iter().map(KahanSum::value).collect();
        for (g, gamma) in gradient[layout.gamma()].iter_mut().zip(&params.kernel.gamma) {
            *g -= 2.0 * lambda * gamma;
        }
        Ok(Evaluation {
            value: ObjectiveValue::new(ll.value(), penalty(params, reg_weight)),
            gradient,
            fisher: with_fisher.then_some(fisher),
        })
    }

    pub fn gradient(&self, params: &ModelParams, reg_weight: f64) -> Result<Vec<f64>> {
        Ok(self.objective_and_gradient(params, reg_weight)?.1)
    }

    /// `∇ ln p(τ)` for every distinct interval value, without the penalty.
    pub fn scores(&self, params: &ModelParams) -> Result<Vec<Score>> {
        params.validate()?;
        let layout = ParamLayout::of(params);
        let rule = TiltedBetaRule::new(params.a + 1.0, params.b, &self.quadrature)?;
        let eval = TermEvaluator::new(params, Some(&rule))?;
        let idx: Vec<usize> = (0..self.values.len()).collect();
        self.exec
            .map(&idx, |&i| {
                let mut gradient = vec![0.0; layout.len()];
                eval.ln_density_and_gradient(self.values[i], &layout, &mut gradient)?;
                Ok(Score {
                    tau: self.values[i],
                    multiplicity: self.counts[i] as usize,
                    gradient,
                })
            })
            .into_iter()
            .collect()
    }
}

/// Quantities shared by every interval for fixed parameters.
struct TermEvaluator<'a> {
    params: &'a ModelParams,
    rho: f64,
    ln_mean: f64,
    rule: Option<&'a TiltedBetaRule>,
    /// ψ(a) - ψ(a+b).
    mean_ln_x: f64,
    /// ψ(b) - ψ(a+b).
    mean_ln_one_minus_x: f64,
    /// ψ(b) - ψ(a+b+1).
    shifted_ln_one_minus_x: f64,
}

impl<'a> TermEvaluator<'a> {
    fn new(params: &'a ModelParams, rule: Option<&'a TiltedBetaRule>) -> Result<Self> {
        let (a, b) = (params.a, params.b);
        let psi_ab = digamma_unchecked(a + b);
        let psi_b = digamma_unchecked(b);
        Ok(Self {
            params,
            rho: params.rho(),
            ln_mean: (a / (a + b)).ln(),
            rule,
            mean_ln_x: digamma_unchecked(a) - psi_ab,
            mean_ln_one_minus_x: psi_b - psi_ab,
            shifted_ln_one_minus_x: psi_b - digamma_unchecked(a + b + 1.0),
        })
    }

    fn kernel_value(&self, tau: f64) -> Result<f64> {
        let r = self.params.kernel.eval(tau);
        if r <= 0.0 {
            return Err(Error::Infeasible { tau, value: r });
        }
        Ok(r)
    }

    fn ln_density(&self, tau: f64) -> Result<f64> {
        let r = self.kernel_value(tau)?;
        let (a, b) = (self.params.a, self.params.b);
        let s = self.rho * self.params.kernel.integral(tau);
        Ok(self.params.c + r.ln() + self.ln_mean + ln_kummer_1f1(a + 1.0, a + b + 1.0, -s)?)
    }

    /// Writes `∇ ln p(τ)` into `out` and returns `ln p(τ)`.
    fn ln_density_and_gradient(&self, tau: f64, layout: &ParamLayout, out: &mut [f64]) -> Result<f64> {
        let kernel = &self.params.kernel;
        let r = self.kernel_value(tau)?;
        let (a, b) = (self.params.a, self.params.b);
        let big_r = kernel.integral(tau);
        let s = self.rho * big_r;
        let ln_m1 = ln_kummer_1f1(a + 1.0, a + b + 1.0, -s)?;
        let ln_m2 = ln_kummer_1f1(a + 2.0, a + b + 2.0, -s)?;
        // ⟨x² E⟩ / ⟨x E⟩.
        let ratio = (a + 1.0) / (a + b + 1.0) * (ln_m2 - ln_m1).exp();

        out[layout.c()] = 1.0 - s * ratio;
        for (k, slot) in layout.gamma().enumerate() {
            let alpha = kernel.alpha[k];
            let decay = (-alpha * tau).exp();
            let one_minus_decay = -(-alpha * tau).exp_m1();
            out[slot] = decay / r - self.rho * ratio * one_minus_decay / alpha;
        }

        // ⟨x E log x⟩_{a,b} / ⟨x E⟩_{a,b} = ⟨E log x⟩_{a+1,b} / ₁F₁(a+1; a+b+1; -s).
        // For b the log(1-x) moment is split as
        // ⟨(E(x) - E(1)) log(1-x)⟩_{a+1,b} + E(1) (ψ(b) - ψ(a+b+1)).
        let rule = self.rule.expect("gradient needs a quadrature rule");
        let m1 = ln_m1.exp();
        let want_b = layout.b_free;
        let [e_ln_x, split] = rule.expectations(s, |node| {
            let first = node.tilt * node.ln_x;
            let second = if want_b {
                // E(x) - E(1) = -E(x) expm1(-s (1 - x)).
                -node.tilt * (-s * node.one_minus_x).exp_m1() * node.ln_one_minus_x
            } else {
                0.0
            };
            [first, second]
        });
        let da = e_ln_x / m1 - self.mean_ln_x;
        if !da.is_finite() {
            return Err(Error::NonFiniteIntegrand { x: tau });
        }
        out[layout.a()] = da;
        if let Some(ib) = layout.b() {
            let e_ln_1mx = split + (-s).exp() * self.shifted_ln_one_minus_x;
            let db = e_ln_1mx / m1 - self.mean_ln_one_minus_x;
            if !db.is_finite() {
                return Err(Error::NonFiniteIntegrand { x: tau });
            }
            out[ib] = db;
        }
        Ok(self.params.c + r.ln() + self.ln_mean + ln_m1)
    }
}

pub fn log_likelihood(params: &ModelParams, data: &ItiSet) -> Result<f64> {
    Likelihood::new(data).log_likelihood(params)
}

pub fn objective(params: &ModelParams, data: &ItiSet, reg_weight: f64) -> Result<ObjectiveValue> {
    Likelihood::new(data).objective(params, reg_weight)
}

pub fn gradient(params: &ModelParams, data: &ItiSet, reg_weight: f64) -> Result<Vec<f64>> {
    Likelihood::new(data).gradient(params, reg_weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{iti_density, RefractoryKernel};
    use approx::assert_relative_eq;

    fn data(v: &[f64]) -> ItiSet {
        ItiSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_interval_example() {
        let p = ModelParams::new(1.0, 1.0, 1.0, RefractoryKernel::none()).unwrap();
        let ll = log_likelihood(&p, &data(&[1.0])).unwrap();
        assert_relative_eq!(ll, (1.0 - 2.0 * (-1.0f64).exp()).ln(), max_relative = 1e-13);
        assert_relative_eq!(ll, -1.3308932682040545, max_relative = 1e-13);
    }

    #[test]
    fn sum_of_log_densities() {
        let p = ModelParams::new(0.6, 1.4, 2.5, RefractoryKernel::none()).unwrap();
        let taus = [0.01, 0.2, 0.2, 3.0, 45.0, 1e4, 0.2];
        let want: f64 = taus.iter().map(|t| iti_density(&p, *t).unwrap().ln()).sum();
        assert_relative_eq!(log_likelihood(&p, &data(&taus)).unwrap(), want, max_relative = 1e-10);
    }

    #[test]
    fn penalty_examples() {
        let mut gamma = vec![0.0; 8];
        gamma[0] = 1.0;
        gamma[1] = -1.0;
        let p = ModelParams::for_variant(Variant::M3, 0.7, 1.0, 2.0, gamma).unwrap();
        let d = data(&[1.0, 2.0]);
        let v = objective(&p, &d, 0.01).unwrap();
        assert_relative_eq!(v.penalty, 0.02, max_relative = 1e-15);
        assert_eq!(v.objective, v.log_likelihood - v.penalty);
        let p = ModelParams::for_variant(Variant::M1, 0.7, 1.0, 2.0, vec![]).unwrap();
        let v = objective(&p, &d, 0.01).unwrap();
        assert_eq!(v.penalty, 0.0);
        assert_eq!(v.objective, log_likelihood(&p, &d).unwrap());
        assert_eq!(effective_reg_weight(&p, 0.5), 0.0);
    }

    #[test]
    fn infeasible_kernel_is_rejected() {
        let k = RefractoryKernel::new(vec![-2.0], vec![20.0]).unwrap();
        let p = ModelParams::new(0.7, 1.0, 2.0, k).unwrap();
        assert!(matches!(
            log_likelihood(&p, &data(&[0.001])),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn layout_round_trip() {
        for v in Variant::ALL {
            let p = ModelParams::for_variant(v, 0.7, 1.0, 2.0, vec![0.0; v.kernel_size()]).unwrap();
            let layout = ParamLayout::of(&p);
            assert_eq!(layout.len(), v.n_params());
            let theta: Vec<f64> = (0..layout.len()).map(|i| i as f64 * 0.1 + 0.3).collect();
            let q = layout.unpack(&p, &theta);
            assert_eq!(layout.pack(&q), theta);
            if !v.b_free() {
                assert_eq!(q.b, 1.0);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let taus: Vec<f64> = (0..60).map(|i| 0.004 * 1.25f64.powi(i)).collect();
        let d = data(&taus);
        let lik = Likelihood::new(&d);
        let gamma = vec![-0.6, 0.3, 0.1, -0.05, 0.0, 0.02, 0.0, 0.01];
        let p = ModelParams::for_variant(Variant::M4, 0.65, 1.3, 3.0, gamma).unwrap();
        let layout = ParamLayout::of(&p);
        let (_, grad) = lik.objective_and_gradient(&p, 0.01).unwrap();
        let theta = layout.pack(&p);
        for j in 0..theta.len() {
            let h = 1e-6 * theta[j].abs().max(1.0);
            let mut up = theta.clone();
            up[j] += h;
            let mut down = theta.clone();
            down[j] -= h;
            let f_up = lik.objective(&layout.unpack(&p, &up), 0.01).unwrap().objective;
            let f_down = lik.objective(&layout.unpack(&p, &down), 0.01).unwrap().objective;
            let fd = (f_up - f_down) / (2.0 * h);
            assert_relative_eq!(grad[j], fd, max_relative = 1e-5, epsilon = 1e-7);
        }
    }

    #[test]
    fn fisher_is_the_sum_of_score_outer_products() {
        let taus = [0.01, 0.01, 0.3, 2.0, 70.0];
        let d = data(&taus);
        let lik = Likelihood::new(&d).with_execution(Execution::Sequential);
        let p = ModelParams::new(0.9, 1.1, 2.0, RefractoryKernel::none()).unwrap();
        let eval = lik.evaluate(&p, 0.0, true).unwrap();
        let fisher = eval.fisher.unwrap();
        let scores = lik.scores(&p).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want: f64 = scores
                    .iter()
                    .map(|s| s.multiplicity as f64 * s.gradient[r] * s.gradient[c])
                    .sum();
                assert_relative_eq!(fisher[r * 3 + c], want, max_relative = 1e-12);
            }
        }
        let total: Vec<f64> = (0..3)
            .map(|j| scores.iter().map(|s| s.multiplicity as f64 * s.gradient[j]).sum())
            .collect();
        for j in 0..3 {
            assert_relative_eq!(eval.gradient[j], total[j], max_relative = 1e-12);
        }
    }

    #[test]
    fn policies_agree_bitwise() {
        let taus: Vec<f64> = (0..3000).map(|i| 0.001 * (1 + i % 997) as f64).collect();
        let d = data(&taus);
        let p = ModelParams::new(0.7, 1.2, 4.0, RefractoryKernel::none()).unwrap();
        let seq = Likelihood::new(&d).with_execution(Execution::Sequential);
        let par = Likelihood::new(&d).with_execution(Execution::Parallel);
        assert_eq!(
            seq.objective_and_gradient(&p, 0.0).unwrap(),
            par.objective_and_gradient(&p, 0.0).unwrap()
        );
        assert_eq!(seq.distinct(), 997);
    }

    #[test]
    fn itiset_validation_and_fingerprint() {
        assert!(ItiSet::new(vec![]).is_err());
        assert!(ItiSet::new(vec![1.0, 0.0]).is_err());
        assert!(ItiSet::new(vec![1.0, f64::NAN]).is_err());
        let a = data(&[1.0, 2.0]);
        let b = data(&[2.0, 1.0]);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
