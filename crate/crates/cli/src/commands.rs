//! Subcommand implementations.

use std::path::Path;

use anyhow::{anyhow, Context};
use burstmodel::fit::{fit as fit_variant, FitConfig, FitResult};
use burstmodel::io::{self, compute_itis, load_timestamps, log_binned_histogram, write_atomic};
use burstmodel::model::{iti_density, ModelParams};
use burstmodel::selection::{compare as compare_fits, ComparisonMatrix};
use burstmodel::simulate::{
    simulate_continuous, simulate_continuous_for, simulate_discrete, EventTrain, Horizon, SimConfig,
};
use burstmodel::ItiSet;
use rayon::prelude::*;

use crate::grid::parse_tau_grid;
use crate::{CompareArgs, EvalArgs, FitArgs, HistArgs, Mode, SimulateArgs};

pub enum Failure {
    /// Incoherent flags; reported with exit code 2.
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<burstmodel::Error> for Failure {
    fn from(e: burstmodel::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn simulate(args: SimulateArgs) -> Outcome {
    let gamma = if args.gamma.is_empty() {
        vec![0.0; args.variant.kernel_size()]
    } else {
        args.gamma
    };
    let params = ModelParams::for_variant(args.variant, args.a, args.b, args.rho, gamma).map_err(usage)?;
    if let Some(d) = args.duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(usage(format!("--duration must be positive, got {d}")));
        }
    }
    let intervals = match args.mode {
        Mode::Continuous => match (args.events, args.duration) {
            (Some(1), _) => Vec::new(),
            (Some(n), _) => simulate_continuous(&params, n as usize - 1, args.seed)?,
            (None, Some(d)) => simulate_continuous_for(&params, d, args.seed)?,
            (None, None) => unreachable!("clap requires a horizon"),
        },
        Mode::Discrete => {
            let horizon = match (args.events, args.duration) {
                (Some(n), _) => Horizon::Events(n as usize),
                (None, Some(d)) => Horizon::Duration(d),
                (None, None) => unreachable!("clap requires a horizon"),
            };
            let cfg = SimConfig::new(args.seed, horizon).with_dt(args.dt);
            cfg.validate_for(&params).map_err(usage)?;
            simulate_discrete(&params, &cfg)?.intervals()
        }
    };
    let train = EventTrain::from_intervals(&intervals)?;
    io::write_timestamps(&args.out, &train).with_context(|| format!("writing {}", args.out.display()))?;
    let span = train.span_seconds();
    let rate = if span > 0.0 { (train.len() - 1) as f64 / span } else { 0.0 };
    println!("events {}  span {span:.3} s  rate {rate:.4e} Hz", train.len());
    Ok(())
}

fn load_itis(path: &Path) -> anyhow::Result<ItiSet> {
    let (train, _) = load_timestamps(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(compute_itis(&train)?)
}

fn load_config(path: Option<&Path>) -> Outcome<FitConfig> {
    match path {
        Some(p) => FitConfig::from_file(p).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(FitConfig::default()),
    }
}

fn print_fit(r: &FitResult) {
    println!(
        "{}  a {:.6}  b {:.6}  rho {:.6} Hz  objective {:.6}  bic {:.4}  {:?} after {} iterations",
        r.variant,
        r.params.a,
        r.params.b,
        r.params.rho(),
        r.objective.objective,
        r.bic,
        r.stop_reason,
        r.iterations
    );
}

pub fn fit(args: FitArgs) -> Outcome {
    let cfg = load_config(args.config.as_deref())?;
    let data = load_itis(&args.input)?;
    let result = fit_variant(args.variant, &data, &cfg)?;
    write_atomic(&args.out, io::serialize_fit(&result)?.as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    print_fit(&result);
    Ok(())
}

fn print_matrix(m: &ComparisonMatrix) {
    for (v, bic) in &m.bic {
        println!("{v}  bic {bic:.4}");
    }
    for p in &m.pairs {
        if p.i < p.j {
            println!("{} vs {}  delta {:.4}  {:?}", p.i, p.j, p.delta_bic, p.preference);
        }
    }
}

pub fn compare(args: CompareArgs) -> Outcome {
    let results: Vec<FitResult> = if let Some(input) = &args.input {
        if args.variants.is_empty() {
            return Err(usage("--variants is empty"));
        }
        let cfg = load_config(args.config.as_deref())?;
        let data = load_itis(input)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs as usize)
            .build()
            .map_err(|e| anyhow!(e))?;
        let fitted: Vec<_> = pool.install(|| {
            args.variants
                .par_iter()
                .map(|&v| fit_variant(v, &data, &cfg))
                .collect()
        });
        let fitted = fitted.into_iter().collect::<Result<Vec<_>, _>>()?;
        if let Some(dir) = &args.fits_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for r in &fitted {
                let path = dir.join(format!("fit_{}.json", r.variant));
                write_atomic(&path, io::serialize_fit(r)?.as_bytes())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        fitted
    } else {
        args.fits
            .iter()
            .map(|p| -> anyhow::Result<FitResult> {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                io::deserialize_fit(&text).with_context(|| format!("parsing {}", p.display()))
            })
            .collect::<anyhow::Result<_>>()?
    };
    for r in &results {
        print_fit(r);
    }
    let matrix = compare_fits(&results)?;
    write_atomic(&args.out, io::serialize_comparison(&matrix)?.as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    print_matrix(&matrix);
    Ok(())
}

pub fn hist(args: HistArgs) -> Outcome {
    let data = load_itis(&args.input)?;
    let h = log_binned_histogram(&data, args.bins_per_decade as usize, None)?;
    let mut text = String::from("# tau_s\tdensity_per_s\n");
    text.push_str(&h.to_table());
    write_atomic(&args.out, text.as_bytes()).with_context(|| format!("writing {}", args.out.display()))?;
    println!("intervals {}  bins {}", h.n_total, h.counts.len());
    Ok(())
}

fn load_fit(path: &Path) -> anyhow::Result<FitResult> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    io::deserialize_fit(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_table(out: Option<&Path>, header: &str, rows: &[(f64, f64)]) -> anyhow::Result<()> {
    let mut text = format!("# {header}\n");
    for (t, v) in rows {
        text.push_str(&format!("{t:e}\t{v:e}\n"));
    }
    match out {
        Some(path) => write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn tau_grid(spec: Option<&str>, default: &str) -> Outcome<Vec<f64>> {
    let spec = spec.unwrap_or(default);
    if spec.starts_with("log:") {
        parse_tau_grid(spec).map_err(usage)
    } else {
        Ok(parse_tau_grid(spec)?)
    }
}

pub fn eval_density(args: EvalArgs) -> Outcome {
    let r = load_fit(&args.fit)?;
    let taus = tau_grid(args.tau_grid.as_deref(), "log:0.001:100000:200")?;
    let rows = taus
        .iter()
        .map(|&t| Ok((t, iti_density(&r.params, t)?)))
        .collect::<Result<Vec<_>, burstmodel::Error>>()?;
    write_table(args.out.as_deref(), "tau_s\tdensity_per_s", &rows)?;
    Ok(())
}

pub fn eval_kernel(args: EvalArgs) -> Outcome {
    let r = load_fit(&args.fit)?;
    let taus = tau_grid(args.tau_grid.as_deref(), "log:0.001:5:200")?;
    let rows: Vec<(f64, f64)> = taus.iter().map(|&t| (t, r.params.kernel.eval(t))).collect();
    write_table(args.out.as_deref(), "tau_s\tkernel", &rows)?;
    Ok(())
}
