//! Randomized invariants across the library.

use burstmodel::fit::{feasible, project, AscentMethod, ConstraintGrid, FitResult, StopReason};
use burstmodel::io::{
    deserialize_fit, format_timestamps, log_binned_histogram, read_timestamps, serialize_fit,
};
use burstmodel::likelihood::{ObjectiveValue, ParamLayout};
use burstmodel::model::{
    iti_cdf, iti_density, iti_density_conditional, iti_survival, iti_tail_asymptote, ln_iti_density,
};
use burstmodel::selection::{bic, compare, Preference};
use burstmodel::simulate::{simulate_continuous, EventTrain};
use burstmodel::special::{
    beta_expectation, beta_expectation_tilted, digamma, kummer_1f1, log_gamma, QuadratureConfig,
};
use burstmodel::{ItiSet, Likelihood, ModelParams, RefractoryKernel, Variant};
use proptest::prelude::*;
use proptest::sample::select;

fn variant() -> impl Strategy<Value = Variant> {
    select(Variant::ALL.to_vec())
}

/// Feasible parameters of a table variant: coefficients are halved until the
/// kernel is nonnegative on the default grid.
fn params() -> impl Strategy<Value = ModelParams> {
    (variant(), 0.3..3.0f64, 0.5..3.0f64, 0.5..50.0f64, prop::collection::vec(-0.5..0.5f64, 12))
        .prop_map(|(v, a, b, rho, raw)| {
            let b = if v.b_free() { b } else { 1.0 };
            let mut gamma = raw[..v.kernel_size()].to_vec();
            let grid = ConstraintGrid::default();
            while !feasible(&v.kernel(gamma.clone()).unwrap(), &grid).feasible {
                gamma.iter_mut().for_each(|g| *g *= 0.5);
            }
            ModelParams::for_variant(v, a, b, rho, gamma).unwrap()
        })
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn digamma_recurrence(z in log_uniform(1e-2, 1e3)) {
        let step = digamma(z + 1.0).unwrap() - digamma(z).unwrap();
        prop_assert!((step - 1.0 / z).abs() <= 1e-10);
    }

    #[test]
    fn log_gamma_recurrence(z in log_uniform(1e-3, 1e4)) {
        let step = log_gamma(z + 1.0).unwrap() - log_gamma(z).unwrap();
        let scale = log_gamma(z + 1.0).unwrap().abs().max(1.0);
        prop_assert!((step - z.ln()).abs() <= 1e-13 * scale);
    }

    #[test]
    fn beta_weights_integrate_to_one(a in 0.05..10.0f64, b in 0.05..10.0f64) {
        let total = beta_expectation(|_| 1.0, a, b, &QuadratureConfig::default()).unwrap();
        prop_assert!((total - 1.0).abs() <= 1e-9, "{total}");
    }

    #[test]
    fn kummer_matches_its_integral_representation(
        a in 0.05..5.0f64,
        gap in 0.05..5.0f64,
        x in log_uniform(1e-3, 1e6),
    ) {
        // ₁F₁(a; a+gap; -x) = E[e^{-xX}], X ~ Beta(a, gap).
        let b = a + gap;
        let series = kummer_1f1(a, b, -x).unwrap();
        let integral = beta_expectation_tilted(|_| 1.0, a, gap, x, &QuadratureConfig::default()).unwrap();
        prop_assert!(rel(series, integral) <= 1e-6, "{series} vs {integral}");
    }

    #[test]
    fn kummer_decreases_in_the_argument(a in 0.05..5.0f64, gap in 0.05..5.0f64, x in log_uniform(1e-3, 1e6)) {
        let f = kummer_1f1(a, a + gap, -x).unwrap();
        let g = kummer_1f1(a, a + gap, -1.5 * x).unwrap();
        prop_assert!(f > 0.0 && f < 1.0);
        prop_assert!(g < f);
    }

    #[test]
    fn density_is_positive_and_logs_agree(p in params(), tau in log_uniform(1e-3, 1e6)) {
        let d = iti_density(&p, tau).unwrap();
        prop_assert!(d.is_finite() && d >= 0.0);
        if d > 0.0 {
            prop_assert!((ln_iti_density(&p, tau).unwrap() - d.ln()).abs() <= 1e-12 * d.ln().abs().max(1.0));
        }
    }

    #[test]
    fn survival_is_monotone_and_complements_the_cdf(p in params(), tau in log_uniform(1e-4, 1e6)) {
        let s = iti_survival(&p, tau).unwrap();
        let later = iti_survival(&p, tau * 1.01).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!(later <= s);
        prop_assert!((s + iti_cdf(&p, tau).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn density_is_the_beta_average_of_the_conditional(p in params(), tau in log_uniform(1e-3, 1e5)) {
        // p(τ | x) = ρ x r e^{-x ρ R}: the exponential goes into the tilt.
        let decay = p.rho() * p.kernel.integral(tau);
        let untilted = |x: f64| {
            if decay < 500.0 {
                iti_density_conditional(&p, x, tau) * (x * decay).exp()
            } else {
                p.rho() * p.kernel.eval(tau) * x
            }
        };
        let averaged = beta_expectation_tilted(untilted, p.a, p.b, decay, &QuadratureConfig::default()).unwrap();
        let direct = iti_density(&p, tau).unwrap();
        if direct > 0.0 {
            prop_assert!(rel(direct, averaged) <= 1e-6, "{direct} vs {averaged}");
        }
    }

    #[test]
    fn tail_approaches_the_power_law(a in 0.3..3.0f64, b in 0.5..3.0f64, rho in 0.5..50.0f64) {
        let p = ModelParams::new(a, b, rho, RefractoryKernel::none()).unwrap();
        let onset = 1e3 * (a + 1.0) / rho;
        let mut last = f64::INFINITY;
        for k in [1.0, 10.0, 100.0, 1000.0] {
            let tau = onset * k;
            let err = (iti_density(&p, tau).unwrap() / iti_tail_asymptote(&p, tau) - 1.0).abs();
            prop_assert!(err < 0.01, "relative gap {err} at rho tau = {}", rho * tau);
            prop_assert!(err <= last);
            last = err;
        }
    }

    #[test]
    fn kernel_integral_grows_where_the_kernel_is_nonnegative(
        v in select(vec![Variant::M3, Variant::M5]),
        raw in prop::collection::vec(-1.5..1.5f64, 12),
    ) {
        let kernel = v.kernel(raw[..v.kernel_size()].to_vec()).unwrap();
        let taus: Vec<f64> = (0..=2000).map(|i| 1e-4 * 1e5f64.powf(i as f64 / 2000.0)).collect();
        prop_assume!(taus.iter().all(|&t| kernel.eval(t) >= 0.0));
        for w in taus.windows(2) {
            prop_assert!(kernel.integral(w[1]) >= kernel.integral(w[0]));
        }
    }

    #[test]
    fn projection_reaches_the_hyperplane_along_its_normal(raw in prop::collection::vec(-3.0..1.0f64, 8)) {
        let grid = ConstraintGrid::default();
        let kernel = Variant::M3.kernel(raw.clone()).unwrap();
        let check = feasible(&kernel, &grid);
        prop_assume!(!check.feasible);
        let tau = grid.times()[check.most_violated.unwrap()];
        let mut gamma = raw.clone();
        project(&kernel, &mut gamma, tau);
        let moved = kernel.with_gamma(gamma.clone()).unwrap();
        prop_assert!(moved.eval(tau).abs() <= 1e-12);
        // The displacement is a multiple of w = (e^{-α_k τ})_k.
        let w: Vec<f64> = kernel.alpha.iter().map(|a| (-a * tau).exp()).collect();
        let k = (gamma[0] - raw[0]) / w[0];
        for j in 0..8 {
            prop_assert!((gamma[j] - raw[j] - k * w[j]).abs() <= 1e-12 * (1.0 + raw[j].abs()));
        }
        let mut again = gamma.clone();
        project(&moved, &mut again, tau);
        prop_assert!(again.iter().zip(&gamma).all(|(x, y)| (x - y).abs() <= 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn log_likelihood_ignores_interval_order(p in params(), seed in 0u64..1000, shift in 1usize..300) {
        let mut taus = simulate_continuous(&p, 300, seed).unwrap();
        let forward = Likelihood::new(&ItiSet::new(taus.clone()).unwrap()).log_likelihood(&p).unwrap();
        taus.rotate_left(shift);
        taus.reverse();
        let shuffled = Likelihood::new(&ItiSet::new(taus).unwrap()).log_likelihood(&p).unwrap();
        prop_assert_eq!(forward, shuffled);
    }

    #[test]
    fn unpenalized_objective_is_the_log_likelihood(p in params(), seed in 0u64..1000) {
        let data = ItiSet::new(simulate_continuous(&p, 200, seed).unwrap()).unwrap();
        let lik = Likelihood::new(&data);
        let value = lik.objective(&p, 0.0).unwrap();
        prop_assert_eq!(value.objective, lik.log_likelihood(&p).unwrap());
        prop_assert_eq!(value.penalty, 0.0);
        let penalized = lik.objective(&p, 0.1).unwrap();
        prop_assert!(penalized.penalty >= 0.0);
        prop_assert_eq!(penalized.objective, penalized.log_likelihood - penalized.penalty);
    }

    #[test]
    fn gradient_has_one_entry_per_table_parameter(p in params(), seed in 0u64..1000) {
        let data = ItiSet::new(simulate_continuous(&p, 50, seed).unwrap()).unwrap();
        let v = p.variant.unwrap();
        let g = Likelihood::new(&data).gradient(&p, v.reg_weight()).unwrap();
        let expected = match v {
            Variant::M1 => 2,
            Variant::M2 => 3,
            Variant::M3 => 10,
            Variant::M4 => 11,
            Variant::M5 => 15,
        };
        prop_assert_eq!(g.len(), expected);
        prop_assert_eq!(ParamLayout::of(&p).len(), expected);
        prop_assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn simulated_intervals_are_positive_and_reproducible(p in params(), seed in 0u64..1000) {
        let first = simulate_continuous(&p, 500, seed).unwrap();
        prop_assert!(first.iter().all(|t| *t > 0.0 && t.is_finite()));
        prop_assert_eq!(first, simulate_continuous(&p, 500, seed).unwrap());
    }
}

fn fit_result(variant: Variant, objective: f64, n: usize) -> FitResult {
    FitResult {
        variant,
        method: AscentMethod::FisherScoring,
        params: ModelParams::for_variant(variant, 0.7, 1.0, 2.0, vec![0.0; variant.kernel_size()]).unwrap(),
        objective: ObjectiveValue::new(objective, 0.0),
        reg_weight: variant.reg_weight(),
        bic: bic(objective, variant.n_params(), n),
        converged: true,
        stop_reason: StopReason::GradientTolerance,
        iterations: 3,
        n_projections: 0,
        grad_norm: 1e-9,
        objective_trace: vec![ObjectiveValue::new(objective - 1.0, 0.0), ObjectiveValue::new(objective, 0.0)],
        n_intervals: n,
        data_fingerprint: "f".repeat(64),
    }
}

proptest! {
    #[test]
    fn bic_grows_with_the_parameter_count(obj in -1e7..1e3f64, k in 0usize..40, n in 2usize..10_000_000) {
        prop_assert!(bic(obj, k + 1, n) > bic(obj, k, n));
    }

    #[test]
    fn comparison_is_independent_of_input_order(
        objectives in prop::collection::vec(-1e5..-1e3f64, 5),
        order in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let results: Vec<FitResult> = Variant::ALL
            .iter()
            .zip(&objectives)
            .map(|(v, o)| fit_result(*v, *o, 10_000))
            .collect();
        let permuted: Vec<FitResult> = order.iter().map(|&i| results[i].clone()).collect();
        let m = compare(&results).unwrap();
        prop_assert_eq!(&m, &compare(&permuted).unwrap());
        for pair in &m.pairs {
            let back = m.pairs.iter().find(|q| q.i == pair.j && q.j == pair.i).unwrap();
            prop_assert_eq!(back.delta_bic, -pair.delta_bic);
            prop_assert_eq!(back.preference, pair.preference.reversed());
            prop_assert_eq!(pair.preference == Preference::IFavored, pair.delta_bic < -10.0);
        }
    }

    #[test]
    fn fit_documents_round_trip_exactly(
        v in variant(),
        obj in prop::num::f64::NORMAL,
        n in 1usize..1_000_000,
    ) {
        let original = fit_result(v, obj, n);
        if !original.bic.is_finite() {
            prop_assert!(serialize_fit(&original).is_err());
            return Ok(());
        }
        let text = serialize_fit(&original).unwrap();
        let back = deserialize_fit(&text).unwrap();
        prop_assert_eq!(&back, &original);
        prop_assert_eq!(serialize_fit(&back).unwrap(), text);
    }

    #[test]
    fn timestamps_survive_formatting(mut ms in prop::collection::vec(0i64..10_000_000_000, 2..200)) {
        let (train, _) = EventTrain::from_unsorted(std::mem::take(&mut ms));
        prop_assert!(train.timestamps().windows(2).all(|w| w[0] < w[1]));
        let text = format_timestamps(&train);
        let (back, dups) = read_timestamps(text.as_bytes()).unwrap();
        prop_assert_eq!(dups, 0);
        prop_assert_eq!(back.timestamps(), train.timestamps());
    }

    #[test]
    fn histogram_carries_unit_mass(taus in prop::collection::vec(log_uniform(1e-3, 1e7), 1..500), k in 1usize..20) {
        let data = ItiSet::new(taus).unwrap();
        let h = log_binned_histogram(&data, k, None).unwrap();
        let mass: f64 = h.densities.iter().zip(h.widths()).map(|(d, w)| d * w).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        prop_assert_eq!(h.counts.iter().sum::<u64>() as usize, data.len());
    }
}
