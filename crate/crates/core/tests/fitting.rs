//! End-to-end behaviour of the constrained fitter.

use burstmodel::exec::Execution;
use burstmodel::fit::{feasible, AscentMethod, StopReason};
use burstmodel::io::compute_itis;
use burstmodel::simulate::{simulate_continuous, EventTrain};
use burstmodel::{fit, FitConfig, ItiSet, Likelihood, ModelParams, RefractoryKernel, Variant};

fn m3_truth() -> ModelParams {
    ModelParams::for_variant(Variant::M3, 0.61, 1.0, 9.3, vec![-0.25, -0.25, -0.25, -0.25, 0.0, 0.0, 0.0, 0.0])
        .unwrap()
}

fn simulated(params: &ModelParams, n: usize, seed: u64) -> ItiSet {
    ItiSet::new(simulate_continuous(params, n, seed).unwrap()).unwrap()
}

#[test]
fn masks_hold_and_results_are_feasible_for_every_variant() {
    let data = simulated(&m3_truth(), 20_000, 1);
    let cfg = FitConfig::default();
    for v in Variant::ALL {
        let res = fit(v, &data, &cfg).unwrap();
        assert!(res.converged, "{v}: {:?}", res.stop_reason);
        assert_eq!(res.params.variant, Some(v));
        if !v.b_free() {
            assert_eq!(res.params.b, 1.0, "{v}");
        }
        if v.kernel_size() == 0 {
            assert!(res.params.kernel.is_empty());
        }
        assert_eq!(res.params.kernel.len(), v.kernel_size());
        assert!(feasible(&res.params.kernel, &cfg.grid).feasible, "{v}");
        assert!(
            res.objective_trace.windows(2).all(|w| w[1].objective > w[0].objective),
            "{v}: objective trace must increase"
        );
        assert_eq!(res.objective_trace.last(), Some(&res.objective));
        assert_eq!(res.n_intervals, data.len());
        assert_eq!(res.data_fingerprint, data.fingerprint());
    }
}

#[test]
fn flat_variants_are_scale_covariant() {
    let truth = ModelParams::new(0.7, 1.3, 4.0, RefractoryKernel::none()).unwrap();
    let data = simulated(&truth, 20_000, 2);
    let k = 10.0;
    let stretched = ItiSet::new(data.intervals().iter().map(|t| t * k).collect()).unwrap();
    let cfg = FitConfig::default();
    for v in [Variant::M1, Variant::M2] {
        let base = fit(v, &data, &cfg).unwrap();
        let scaled = fit(v, &stretched, &cfg).unwrap();
        assert!(base.converged && scaled.converged);
        assert!((scaled.params.a - base.params.a).abs() <= 1e-3, "{v}");
        assert!((scaled.params.c - (base.params.c - k.ln())).abs() <= 1e-3, "{v}");
    }
}

#[test]
fn recovers_flat_parameters() {
    let truth = ModelParams::new(0.61, 1.0, 9.3, RefractoryKernel::none()).unwrap();
    let data = simulated(&truth, 100_000, 3);
    let res = fit(Variant::M1, &data, &FitConfig::default()).unwrap();
    assert_eq!(res.stop_reason, StopReason::GradientTolerance);
    assert!((res.params.a - 0.61).abs() < 0.02, "a = {}", res.params.a);
    assert!((res.params.rho() / 9.3 - 1.0).abs() < 0.05, "rho = {}", res.params.rho());
}

#[test]
fn fit_does_not_stall_on_the_first_grid_point() {
    // Recorded timestamps put 28 intervals at exactly 1 ms, the first
    // constraint time, where the truth has r = 0.012.
    let truth = m3_truth();
    let raw = simulate_continuous(&truth, 500_000, 3).unwrap();
    let data = compute_itis(&EventTrain::from_intervals(&raw).unwrap()).unwrap();
    assert!(data.intervals().iter().filter(|&&t| t == 1e-3).count() > 10);
    let res = fit(Variant::M3, &data, &FitConfig::default()).unwrap();
    assert_eq!(res.stop_reason, StopReason::GradientTolerance);
    let lik = Likelihood::new(&data);
    assert!(res.objective.objective > lik.objective(&truth, Variant::M3.reg_weight()).unwrap().objective);
    for tau in [0.01, 0.03, 0.1, 0.3, 1.0] {
        let gap = (res.params.kernel.eval(tau) - truth.kernel.eval(tau)).abs();
        assert!(gap < 0.1, "r({tau}) off by {gap}");
    }
}

#[test]
fn execution_policy_does_not_change_the_fit() {
    let data = simulated(&m3_truth(), 10_000, 4);
    let sequential = FitConfig {
        execution: Execution::Sequential,
        ..FitConfig::default()
    };
    let parallel = FitConfig {
        execution: Execution::Parallel,
        ..FitConfig::default()
    };
    assert_eq!(fit(Variant::M4, &data, &sequential).unwrap(), fit(Variant::M4, &data, &parallel).unwrap());
}

#[test]
fn jittered_start_reaches_the_same_optimum() {
    let data = simulated(&m3_truth(), 20_000, 5);
    let plain = fit(Variant::M3, &data, &FitConfig::default()).unwrap();
    let seeded = fit(
        Variant::M3,
        &data,
        &FitConfig {
            seed: Some(17),
            ..FitConfig::default()
        },
    )
    .unwrap();
    assert!(seeded.converged);
    let gap = (plain.objective.objective - seeded.objective.objective).abs();
    assert!(gap <= 1e-6 * plain.objective.objective.abs(), "objective gap {gap}");
}

#[test]
fn plain_gradient_ascent_agrees_with_scoring() {
    let truth = ModelParams::new(0.8, 1.0, 5.0, RefractoryKernel::none()).unwrap();
    let data = simulated(&truth, 2_000, 6);
    let scoring = fit(Variant::M1, &data, &FitConfig::default()).unwrap();
    let gradient = fit(Variant::M1, &data, &FitConfig::gradient_ascent()).unwrap();
    assert_eq!(gradient.method, AscentMethod::Gradient);
    assert!(gradient.converged, "{:?}", gradient.stop_reason);
    assert!((gradient.params.a - scoring.params.a).abs() < 1e-3);
    assert!((gradient.params.c - scoring.params.c).abs() < 1e-3);
}
