use std::path::Path;

use anyhow::Context;
use ellipsoid_fit::batch::{MethodOutcome, TrialOutcome};
use ellipsoid_fit::{fit_ellipsoid, generate, AxisOrder, FitConfig, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Iterative,
    SinglePass,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Iterative => "iterative",
            Method::SinglePass => "single-pass",
        }
    }

    fn pick<'a>(&self, t: &'a TrialOutcome) -> &'a Result<MethodOutcome, String> {
        match self {
            Method::Iterative => &t.iterative,
            Method::SinglePass => &t.single_pass,
        }
    }
}

const TRIAL_HEADER: [&str; 21] = [
    "trial", "seed", "method", "converged", "outer_iterations", "inner_iterations", "final_k", "A", "B", "C", "alpha",
    "beta", "gamma", "rel_err_A", "rel_err_B", "rel_err_C", "abs_err_alpha", "abs_err_beta", "abs_err_gamma",
    "seconds", "error",
];

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trials(path: &Path, trials: &[TrialOutcome], methods: &[Method]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(TRIAL_HEADER)?;
    for t in trials {
        for m in methods {
            let mut row = vec![t.trial.to_string(), t.seed.to_string(), m.name().to_string()];
            match m.pick(t) {
                Ok(o) => {
                    row.extend([o.converged.to_string(), o.outer_iterations.to_string(), o.inner_iterations.to_string()]);
                    row.push(num(o.final_k));
                    row.extend(o.semi_axes.iter().chain(o.euler_deg.iter()).map(|v| num(*v)));
                    row.extend(o.errors.axes.iter().chain(o.errors.angles.iter()).map(|v| num(*v)));
                    row.push(num(o.seconds));
                    row.push(String::new());
                }
                Err(e) => {
                    row.push("false".into());
                    row.extend(std::iter::repeat_n(String::new(), 16));
                    row.push(e.clone());
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One aggregate line per method.
pub fn aggregate(trials: &[TrialOutcome], methods: &[Method]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "trials",
        "failures",
        "converged",
        "within_1e-3",
        "median_max_axis_err",
        "worst_max_axis_err",
        "median_max_angle_err",
        "worst_max_angle_err",
        "median_outer",
        "median_inner",
    ])?;
    for m in methods {
        let ok: Vec<&MethodOutcome> = trials.iter().filter_map(|t| m.pick(t).as_ref().ok()).collect();
        let axis: Vec<f64> = ok.iter().map(|o| o.errors.max_axis()).collect();
        let angle: Vec<f64> = ok.iter().map(|o| o.errors.max_angle()).collect();
        let worst = |v: &[f64]| v.iter().copied().fold(f64::NAN, f64::max);
        w.write_record([
            m.name().to_string(),
            trials.len().to_string(),
            (trials.len() - ok.len()).to_string(),
            ok.iter().filter(|o| o.converged).count().to_string(),
            axis.iter().filter(|e| **e <= 1e-3).count().to_string(),
            num(median(axis.clone())),
            num(worst(&axis)),
            num(median(angle.clone())),
            num(worst(&angle)),
            num(median(ok.iter().map(|o| o.outer_iterations as f64).collect())),
            num(median(ok.iter().map(|o| o.inner_iterations as f64).collect())),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Per-iteration convergence data of one iterative trial.
pub fn write_trace(path: &Path, spec: &SynthSpec, cfg: &FitConfig, seed: u64) -> anyhow::Result<()> {
    let spec = spec.with_seed(seed);
    let cfg = FitConfig { rng_seed: seed, axis_order: AxisOrder::matching(spec.semi_axes), ..*cfg };
    let points = generate(&spec)?;
    let report = fit_ellipsoid(&points, &cfg)?;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record([
        "outer_iter",
        "inner_k",
        "omega",
        "off_diag_norm",
        "abs_err_A",
        "abs_err_B",
        "abs_err_C",
        "abs_err_alpha",
        "abs_err_beta",
        "abs_err_gamma",
    ])?;
    for rec in &report.trace {
        let mut row = vec![rec.outer_iter.to_string(), num(rec.k_used), num(rec.omega), num(rec.off_diag_norm)];
        match &rec.geometry {
            Some(g) => {
                row.extend((0..3).map(|i| num((g.semi_axes[i] - spec.semi_axes[i]).abs())));
                row.extend(g.euler_deg.abs_diff(&spec.euler_deg).map(num));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
