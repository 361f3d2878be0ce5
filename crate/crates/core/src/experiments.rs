//! Sampling, error metrics and the benchmark experiments.
//!
//! Every driver is deterministic under its seed except for wall-clock fields.

use std::time::Instant;

use ndarray::{array, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ali::{self, AliMode, AliOptions};
use crate::dense::{dense_lstsq, face_splitting, LstsqBranch};
use crate::dynamics::{
    assemble_derivative_data, rollout, simulate, trajectory_error_series, DerivativeSource,
    SystemSpec, Trajectory,
};
use crate::error::{Error, Result};
use crate::features::{default_scale, Basis1D, FeatureMapSet, ScaleMode};
use crate::mtensor::MTensor;
use crate::regression::{FitOptions, RegressionModel, Regularizer, SpectralCut};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Latin hypercube design: on every axis each of the `m` equal strata holds
/// exactly one sample.
pub fn lhs_sample(m: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Array2<f64>> {
    if m == 0 {
        return Err(Error::arg("LHS needs at least one sample"));
    }
    if bounds.is_empty() {
        return Err(Error::arg("LHS needs at least one axis"));
    }
    for (a, &(lo, hi)) in bounds.iter().enumerate() {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::arg(format!(
                "axis {a} has degenerate bounds [{lo}, {hi}]"
            )));
        }
    }
    let mut r = rng(seed);
    let mut out = Array2::zeros((m, bounds.len()));
    let mut perm: Vec<usize> = (0..m).collect();
    for (a, &(lo, hi)) in bounds.iter().enumerate() {
        perm.shuffle(&mut r);
        let width = (hi - lo) / m as f64;
        for (k, &stratum) in perm.iter().enumerate() {
            let u: f64 = r.random();
            out[[k, a]] = lo + (stratum as f64 + u) * width;
        }
    }
    Ok(out)
}

/// `Σ 100 (x_{i+1} − x_i²)² + (x_i − 1)²`.
pub fn rosenbrock(x: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::arg("Rosenbrock needs at least two coordinates"));
    }
    Ok(x.windows(2)
        .into_iter()
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
        .sum())
}

/// `‖truth − approx‖₂ / ‖truth‖₂` over all entries.
pub fn relative_error<'a, I>(truth: I, approx: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a f64>,
{
    let mut num = 0.0;
    let mut den = 0.0;
    let mut a = approx.into_iter();
    for t in truth {
        let v = a.next().ok_or_else(|| Error::dim("length mismatch"))?;
        num += (t - v).powi(2);
        den += t * t;
    }
    if a.next().is_some() {
        return Err(Error::dim("length mismatch"));
    }
    if den == 0.0 {
        return Err(Error::arg("relative error against a zero reference"));
    }
    Ok((num / den).sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::arg("slope needs at least two matching points"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("all abscissae coincide"));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Timings {
    pub construct_seconds: f64,
    pub infer_seconds_per_sample: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Errors {
    pub train_rel_l2: f64,
    /// `None` when the evaluation diverged.
    pub test_rel_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelSummary {
    #[serde(rename = "type")]
    pub kind: String,
    pub m: usize,
    pub m_tilde: Option<usize>,
    pub n: usize,
    pub cdims: Vec<usize>,
}

impl ModelSummary {
    fn of(model: &RegressionModel<f64>, m: usize, n: usize) -> Self {
        let ali = matches!(model.regularizer(), Regularizer::Ali { .. });
        Self {
            kind: model.regularizer().to_string(),
            m,
            m_tilde: ali.then(|| model.retained()),
            n,
            cdims: model.maps().cdims(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub timings: Timings,
    pub errors: Errors,
    pub model: ModelSummary,
    /// Experiment-specific detail (per-model rollouts, error bands).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

fn training_error(
    model: &RegressionModel<f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Result<f64> {
    let pred = model.predict_batch(x)?;
    relative_error(y.iter(), pred.iter())
}

/// Mean per-sample wall time of single-sample prediction, after a warmup pass.
pub fn time_inference(
    model: &RegressionModel<f64>,
    xs: ArrayView2<'_, f64>,
    count: usize,
) -> Result<f64> {
    let count = count.min(xs.nrows()).max(1);
    for k in 0..count.min(10) {
        std::hint::black_box(model.predict(xs.row(k))?);
    }
    let t = Instant::now();
    for k in 0..count {
        std::hint::black_box(model.predict(xs.row(k % xs.nrows()))?);
    }
    Ok(t.elapsed().as_secs_f64() / count as f64)
}

// ---------------------------------------------------------------- toy problem

#[derive(Debug, Clone, Serialize)]
pub struct GoldenCheck {
    pub name: String,
    pub expected: Vec<f64>,
    pub got: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct ToyResult {
    pub unfolding: Array2<f64>,
    pub gram: Array2<f64>,
    pub z: Vec<f64>,
    /// `Ĉ[i, j]`, row-major.
    pub coefficients: Array2<f64>,
    /// Dense pseudoinverse solution on the unfolded matrix.
    pub dense_coefficients: Vec<f64>,
    pub checks: Vec<GoldenCheck>,
}

impl ToyResult {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub const TOY_Z: [f64; 3] = [-0.588, 1.647, 0.647];
pub const TOY_C00: f64 = 1.706;
pub const TOY_COEFFS: [f64; 9] = [
    1.706, 2.235, 1.059, 1.235, -0.588, 0.588, 0.059, 0.588, -0.588,
];
pub const TOY_UNFOLDING: [[f64; 9]; 3] = [
    [1., -1., 1., -1., 1., -1., 1., -1., 1.],
    [1., 1., 1., 0., 0., 0., 0., 0., 0.],
    [1., 0., 0., 1., 0., 0., 1., 0., 0.],
];

/// Three samples of a two-variable quadratic and their target values.
pub fn toy_samples() -> (Array2<f64>, Array2<f64>) {
    (
        array![[-1., -1.], [0., 1.], [1., 0.]],
        array![[-3.], [5.], [3.]],
    )
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn check(name: &str, expected: Vec<f64>, got: Vec<f64>, tolerance: f64) -> GoldenCheck {
    let pass = expected.len() == got.len()
        && expected
            .iter()
            .zip(&got)
            .all(|(e, g)| (e - g).abs() <= tolerance);
    GoldenCheck {
        name: name.into(),
        expected,
        got,
        tolerance,
        pass,
    }
}

/// The two-variable quadratic problem with three samples, solved end to end.
pub fn run_toy() -> Result<ToyResult> {
    let (x, y) = toy_samples();
    let maps = FeatureMapSet::uniform(2, Basis1D::Monomial(2), 1.0, ScaleMode::Input)?;
    let model = RegressionModel::fit(
        x.view(),
        y.view(),
        maps,
        Regularizer::LeastSquares,
        FitOptions::default(),
    )?;
    let phi = model.operator();
    let unfolding = phi.unfold_mode1()?;
    let gram = phi.mprod(phi)?;
    let z: Vec<f64> = model.dual().column(0).to_vec();
    let c = model.coefficients_dense(1000)?;
    let coefficients =
        Array2::from_shape_vec((3, 3), c.data().to_vec()).map_err(|e| Error::dim(e.to_string()))?;
    let dense = dense_lstsq(
        face_splitting(phi.cores(), 1000)?.view(),
        y.column(0),
        LstsqBranch::Rows,
    )?
    .to_vec();

    let printed: Vec<f64> = TOY_UNFOLDING.iter().flatten().copied().collect();
    let checks = vec![
        check(
            "unfolding",
            printed,
            unfolding.iter().copied().collect(),
            0.0,
        ),
        check("z", TOY_Z.to_vec(), z.clone(), 1e-3),
        check("C(0,0)", vec![TOY_C00], vec![coefficients[[0, 0]]], 1e-3),
        check(
            "coefficient multiset",
            sorted(TOY_COEFFS.to_vec()),
            sorted(coefficients.iter().copied().collect()),
            1e-3,
        ),
        check(
            "dense cross-check",
            coefficients.iter().copied().collect(),
            dense.clone(),
            1e-9,
        ),
    ];
    Ok(ToyResult {
        unfolding,
        gram,
        z,
        coefficients,
        dense_coefficients: dense,
        checks,
    })
}

// ----------------------------------------------------------------- Rosenbrock

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RosenbrockConfig {
    pub n: usize,
    /// Samples per dimension: `m = α n`.
    pub alpha: usize,
    pub degree: usize,
    pub regularizer: Regularizer,
    pub seed: u64,
    pub repeats: usize,
    /// Defaults to `1` below ten dimensions and `1e-7` above.
    pub scale: Option<f64>,
    pub scale_mode: ScaleMode,
    pub jitter: bool,
    pub lower: f64,
    pub upper: f64,
    /// Test points per training point.
    pub test_factor: usize,
    /// Samples timed for per-sample inference.
    pub timing_samples: usize,
}

impl Default for RosenbrockConfig {
    fn default() -> Self {
        Self {
            n: 20,
            alpha: 20,
            degree: 4,
            regularizer: Regularizer::LeastSquares,
            seed: 0,
            repeats: 3,
            scale: None,
            scale_mode: ScaleMode::Output,
            jitter: true,
            lower: -5.0,
            upper: 10.0,
            test_factor: 3,
            timing_samples: 200,
        }
    }
}

impl RosenbrockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::arg("n must be at least 2"));
        }
        if self.alpha < 1 {
            return Err(Error::arg("alpha must be at least 1"));
        }
        if self.repeats < 1 || self.test_factor < 1 {
            return Err(Error::arg("repeats and test_factor must be at least 1"));
        }
        if !(self.upper > self.lower) {
            return Err(Error::arg("upper bound must exceed lower bound"));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0) {
                return Err(Error::arg("scale must be positive"));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.alpha * self.n
    }

    pub fn maps(&self) -> Result<FeatureMapSet<f64>> {
        let scale = self.scale.unwrap_or_else(|| default_scale(self.n));
        FeatureMapSet::uniform(
            self.n,
            Basis1D::Monomial(self.degree),
            scale,
            self.scale_mode,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub seed: u64,
    pub train_rel_l2: f64,
    pub test_rel_l2: f64,
    pub construct_seconds: f64,
    pub infer_seconds_per_sample: f64,
    pub m_tilde: Option<usize>,
}

fn rosenbrock_targets(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let v: Result<Vec<f64>> = x.rows().into_iter().map(rosenbrock).collect();
    Ok(Array1::from(v?).insert_axis(Axis(1)))
}

/// Fits and evaluates one LHS realization; also returns the model.
pub fn rosenbrock_repeat(
    cfg: &RosenbrockConfig,
    seed: u64,
) -> Result<(RepeatResult, RegressionModel<f64>)> {
    let bounds = vec![(cfg.lower, cfg.upper); cfg.n];
    let m = cfg.m();
    let x = lhs_sample(m, &bounds, seed)?;
    let y = rosenbrock_targets(x.view())?;
    let xt = lhs_sample(cfg.test_factor * m, &bounds, seed ^ 0x7e57_7e57_7e57_7e57)?;
    let yt = rosenbrock_targets(xt.view())?;
    let opts = FitOptions {
        jitter: cfg.jitter,
        ..Default::default()
    };
    let t = Instant::now();
    let model = RegressionModel::fit(x.view(), y.view(), cfg.maps()?, cfg.regularizer, opts)?;
    let construct_seconds = t.elapsed().as_secs_f64();
    let train_rel_l2 = training_error(&model, x.view(), y.view())?;
    let test_rel_l2 = training_error(&model, xt.view(), yt.view())?;
    let infer = time_inference(&model, xt.view(), cfg.timing_samples)?;
    let m_tilde = matches!(cfg.regularizer, Regularizer::Ali { .. }).then(|| model.retained());
    Ok((
        RepeatResult {
            seed,
            train_rel_l2,
            test_rel_l2,
            construct_seconds,
            infer_seconds_per_sample: infer,
            m_tilde,
        },
        model,
    ))
}

pub fn run_rosenbrock(cfg: &RosenbrockConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.repeats);
    let mut summary = None;
    for r in 0..cfg.repeats {
        let (res, model) = rosenbrock_repeat(cfg, cfg.seed.wrapping_add(r as u64))?;
        if summary.is_none() {
            summary = Some(ModelSummary::of(&model, cfg.m(), cfg.n));
        }
        runs.push(res);
    }
    let k = runs.len() as f64;
    let mean = |f: fn(&RepeatResult) -> f64| runs.iter().map(f).sum::<f64>() / k;
    Ok(ExperimentReport {
        experiment: "rosenbrock".into(),
        config: serde_json::to_value(cfg)?,
        seed: cfg.seed,
        timings: Timings {
            construct_seconds: mean(|r| r.construct_seconds),
            infer_seconds_per_sample: mean(|r| r.infer_seconds_per_sample),
        },
        errors: Errors {
            train_rel_l2: mean(|r| r.train_rel_l2),
            test_rel_l2: Some(mean(|r| r.test_rel_l2)),
        },
        model: summary.unwrap_or_default(),
        details: serde_json::json!({ "repeats": runs }),
    })
}

/// Smallest-effort search for an `ε` whose ALI selection keeps exactly
/// `target` rows, bisecting in log space. Returns `(ε, retained)`; when no ε
/// hits the target exactly, the closest count found is returned.
pub fn epsilon_for_rows(phi: &MTensor<f64>, target: usize, mode: AliMode) -> Result<(f64, usize)> {
    if target == 0 || target > phi.rdim() {
        return Err(Error::arg(format!(
            "target of {target} rows outside 1..={}",
            phi.rdim()
        )));
    }
    let count = |eps: f64| -> Result<usize> {
        Ok(ali::decompose(
            phi,
            eps,
            AliOptions {
                mode,
                ..Default::default()
            },
        )?
        .retained())
    };
    let top = phi.row_norms_sq().iter().fold(0.0f64, |a, &v| a.max(v));
    let mut hi = top * 2.0;
    let mut lo = top * 1e-30;
    let mut best = (hi, count(hi)?);
    let consider = |best: &mut (f64, usize), eps: f64, n: usize| {
        let (d_new, d_old) = (n.abs_diff(target), best.1.abs_diff(target));
        if d_new < d_old || (d_new == d_old && n >= target && best.1 < target) {
            *best = (eps, n);
        }
    };
    let n_lo = count(lo)?;
    consider(&mut best, lo, n_lo);
    for _ in 0..200 {
        if best.1 == target {
            break;
        }
        let mid = (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp();
        let n = count(mid)?;
        consider(&mut best, mid, n);
        if n > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferencePoint {
    pub n: usize,
    pub m_tilde: usize,
    pub seconds_per_sample: f64,
}

/// Per-sample inference time of ALI models with `m̃ = target` for several
/// dimensions, on Rosenbrock data with `m = α n`.
pub fn ali_inference_scaling(
    ns: &[usize],
    alpha: usize,
    target: usize,
    seed: u64,
    samples: usize,
) -> Result<Vec<InferencePoint>> {
    let mut out = Vec::new();
    for &n in ns {
        let cfg = RosenbrockConfig {
            n,
            alpha,
            seed,
            ..Default::default()
        };
        let bounds = vec![(cfg.lower, cfg.upper); n];
        let x = lhs_sample(cfg.m(), &bounds, seed)?;
        let y = rosenbrock_targets(x.view())?;
        let maps = cfg.maps()?;
        let phi = maps.build_cores(x.view())?;
        let (eps, _) = epsilon_for_rows(&phi, target, AliMode::Greedy)?;
        let model = RegressionModel::fit(
            x.view(),
            y.view(),
            maps,
            Regularizer::Ali {
                epsilon: eps,
                mode: AliMode::Greedy,
            },
            FitOptions::default(),
        )?;
        let xq = lhs_sample(samples, &bounds, seed ^ 0x1f)?;
        // Median of a few timing passes damps scheduler noise.
        let mut t: Vec<f64> = (0..5)
            .map(|_| time_inference(&model, xq.view(), samples))
            .collect::<Result<_>>()?;
        t.sort_by(|a, b| a.total_cmp(b));
        out.push(InferencePoint {
            n,
            m_tilde: model.retained(),
            seconds_per_sample: t[t.len() / 2],
        });
    }
    Ok(out)
}

// --------------------------------------------------------------------- Lorenz

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LorenzConfig {
    pub train_steps: usize,
    pub dt: f64,
    pub rollout_steps: usize,
    pub x0: [f64; 3],
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub spectral_rank: usize,
    /// Rows the ALI model should keep; ε is searched to match.
    pub ali_rows: usize,
    /// Greedy selection along one trajectory keeps near-collinear neighbours
    /// and leaves the retained Gram matrix close to singular.
    pub ali_mode: AliMode,
    pub random_ics: usize,
    pub seed: u64,
    pub scale: f64,
    /// The Lorenz Gram matrix has rank 8, so plain Cholesky needs a shift.
    pub jitter: bool,
    pub source: DerivativeSource,
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self {
            train_steps: 500,
            dt: 0.001,
            rollout_steps: 25_000,
            x0: [0.0, 1.0, 1.05],
            sigma: 10.0,
            rho: 28.0,
            beta: 2.667,
            spectral_rank: 8,
            ali_rows: 8,
            ali_mode: AliMode::Optimal,
            random_ics: 50,
            seed: 0,
            scale: 1.0,
            jitter: true,
            source: DerivativeSource::Exact,
        }
    }
}

impl LorenzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_steps < 1 || self.rollout_steps < 1 {
            return Err(Error::arg("step counts must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::arg("dt must be positive"));
        }
        if self.spectral_rank < 1 || self.ali_rows < 1 {
            return Err(Error::arg("spectral_rank and ali_rows must be at least 1"));
        }
        if !(self.scale > 0.0) {
            return Err(Error::arg("scale must be positive"));
        }
        Ok(())
    }

    pub fn system(&self) -> SystemSpec {
        SystemSpec::Lorenz {
            sigma: self.sigma,
            rho: self.rho,
            beta: self.beta,
        }
    }

    pub fn maps(&self) -> Result<FeatureMapSet<f64>> {
        FeatureMapSet::uniform(3, Basis1D::Monomial(1), self.scale, ScaleMode::Output)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub steps_completed: usize,
    pub diverged_at: Option<usize>,
    pub max_abs: f64,
    pub max_rel_error: f64,
    pub final_rel_error: f64,
}

fn summarize(truth: &Trajectory, pred: &Trajectory, diverged_at: Option<usize>) -> RolloutSummary {
    let series = trajectory_error_series(truth, pred);
    RolloutSummary {
        steps_completed: pred.len().saturating_sub(1),
        diverged_at,
        max_abs: pred.max_abs(),
        max_rel_error: series.iter().fold(0.0, |a, &v| a.max(v)),
        final_rel_error: series.last().copied().unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzModelReport {
    pub name: String,
    pub summary: ModelSummary,
    pub train_rel_l2: f64,
    pub construct_seconds: f64,
    pub epsilon: Option<f64>,
    pub rank: Option<usize>,
    pub jitter: Option<f64>,
    pub trained_ic: RolloutSummary,
    /// Rollout error over the training window only.
    pub train_window_rel_error: f64,
    pub random_ic_diverged: usize,
    pub random_ic_mean_final_error: Option<f64>,
}

pub struct LorenzRun {
    pub report: ExperimentReport,
    pub models: Vec<LorenzModelReport>,
    /// `truth` first, then one rollout per model from the trained initial condition.
    pub trajectories: Vec<(String, Trajectory)>,
}

pub fn run_lorenz(cfg: &LorenzConfig) -> Result<LorenzRun> {
    cfg.validate()?;
    let spec = cfg.system();
    let x0 = Array1::from(cfg.x0.to_vec());
    let train = simulate(&spec, x0.view(), cfg.dt, cfg.train_steps)?;
    let (xs, ys) = assemble_derivative_data(&train, &spec, cfg.source)?;
    let maps = cfg.maps()?;
    let phi = maps.build_cores(xs.view())?;
    let (eps, _) = epsilon_for_rows(&phi, cfg.ali_rows.min(phi.rdim()), cfg.ali_mode)?;
    let opts = FitOptions {
        jitter: cfg.jitter,
        ..Default::default()
    };
    let regs = [
        ("least_squares", Regularizer::LeastSquares),
        (
            "spectral",
            Regularizer::Spectral {
                cut: SpectralCut::Rank(cfg.spectral_rank),
            },
        ),
        (
            "ali",
            Regularizer::Ali {
                epsilon: eps,
                mode: cfg.ali_mode,
            },
        ),
    ];
    let truth = simulate(&spec, x0.view(), cfg.dt, cfg.rollout_steps)?;
    let mut r = rng(cfg.seed);
    let ics: Vec<Array1<f64>> = (0..cfg.random_ics)
        .map(|_| {
            array![
                r.random_range(-15.0..15.0),
                r.random_range(-15.0..15.0),
                r.random_range(5.0..40.0)
            ]
        })
        .collect();
    let ic_truths: Vec<Trajectory> = ics
        .iter()
        .map(|ic| simulate(&spec, ic.view(), cfg.dt, cfg.rollout_steps))
        .collect::<Result<_>>()?;

    let mut models = Vec::new();
    let mut trajectories = vec![("truth".to_string(), truth.clone())];
    let mut first: Option<(Timings, Errors, ModelSummary)> = None;
    for (name, reg) in regs {
        let t = Instant::now();
        let model = RegressionModel::fit(xs.view(), ys.view(), maps.clone(), reg, opts)?;
        let construct_seconds = t.elapsed().as_secs_f64();
        let train_rel_l2 = training_error(&model, xs.view(), ys.view())?;
        let roll = rollout(&model, x0.view(), cfg.dt, cfg.rollout_steps)?;
        let trained_ic = summarize(&truth, &roll.trajectory, roll.diverged_at);
        let window = Trajectory {
            states: roll
                .trajectory
                .states
                .slice(ndarray::s![
                    ..roll.trajectory.len().min(cfg.train_steps + 1),
                    ..
                ])
                .to_owned(),
            ..roll.trajectory.clone()
        };
        let train_window_rel_error = trajectory_error_series(&train, &window)
            .into_iter()
            .fold(0.0, f64::max);
        let mut diverged = 0;
        let mut finals = Vec::new();
        for (ic, ic_truth) in ics.iter().zip(&ic_truths) {
            let ro = rollout(&model, ic.view(), cfg.dt, cfg.rollout_steps)?;
            match ro.diverged_at {
                Some(_) => diverged += 1,
                None => finals.push(summarize(ic_truth, &ro.trajectory, None).final_rel_error),
            }
        }
        let summary = ModelSummary::of(&model, xs.nrows(), 3);
        let infer = time_inference(&model, xs.view(), 200)?;
        if first.is_none() {
            first = Some((
                Timings {
                    construct_seconds,
                    infer_seconds_per_sample: infer,
                },
                Errors {
                    train_rel_l2,
                    test_rel_l2: (roll.diverged_at.is_none()).then_some(trained_ic.max_rel_error),
                },
                summary.clone(),
            ));
        }
        models.push(LorenzModelReport {
            name: name.into(),
            summary,
            train_rel_l2,
            construct_seconds,
            epsilon: matches!(reg, Regularizer::Ali { .. }).then_some(eps),
            rank: model.diagnostics().rank,
            jitter: model.diagnostics().jitter,
            trained_ic,
            train_window_rel_error,
            random_ic_diverged: diverged,
            random_ic_mean_final_error: (!finals.is_empty())
                .then(|| finals.iter().sum::<f64>() / finals.len() as f64),
        });
        trajectories.push((name.to_string(), roll.trajectory));
    }
    let (timings, errors, model) = first.expect("three models were fitted");
    Ok(LorenzRun {
        report: ExperimentReport {
            experiment: "lorenz".into(),
            config: serde_json::to_value(cfg)?,
            seed: cfg.seed,
            timings,
            errors,
            model,
            details: serde_json::json!({ "models": models }),
        },
        models,
        trajectories,
    })
}

// ------------------------------------------------------------------- Kuramoto

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KuramotoConfig {
    pub n: usize,
    pub train_steps: usize,
    pub rollout_steps: usize,
    pub dt: f64,
    pub coupling: f64,
    /// Natural frequencies are uniform in `[−omega_range, omega_range]`.
    pub omega_range: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Defaults to `1` below ten dimensions and `1e-7` above.
    pub scale: Option<f64>,
    pub scale_mode: ScaleMode,
    /// ALI tolerance relative to the mean squared feature-row norm.
    pub ali_epsilon_rel: f64,
    pub ali_mode: AliMode,
    pub jitter: bool,
    /// Also roll out the ALI model.
    pub rollout_ali: bool,
    /// Stride of the error bands stored in the report.
    pub series_stride: usize,
}

impl Default for KuramotoConfig {
    fn default() -> Self {
        Self {
            n: 10,
            train_steps: 1000,
            rollout_steps: 50_000,
            dt: 0.01,
            coupling: 2.0,
            omega_range: 5.0,
            repeats: 5,
            seed: 0,
            scale: None,
            scale_mode: ScaleMode::Output,
            ali_epsilon_rel: 1e-6,
            ali_mode: AliMode::Greedy,
            jitter: true,
            rollout_ali: true,
            series_stride: 100,
        }
    }
}

impl KuramotoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::arg("n must be at least 1"));
        }
        if self.train_steps < 1 || self.rollout_steps < 1 || self.repeats < 1 {
            return Err(Error::arg("steps and repeats must be at least 1"));
        }
        if !(self.dt > 0.0) || !(self.omega_range >= 0.0) {
            return Err(Error::arg(
                "dt must be positive and omega_range non-negative",
            ));
        }
        if !(self.ali_epsilon_rel > 0.0) {
            return Err(Error::arg("ali_epsilon_rel must be positive"));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0) {
                return Err(Error::arg("scale must be positive"));
            }
        }
        Ok(())
    }

    pub fn maps(&self) -> Result<FeatureMapSet<f64>> {
        let scale = self.scale.unwrap_or_else(|| default_scale(self.n));
        FeatureMapSet::trig(self.n, scale, self.scale_mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KuramotoRepeat {
    pub seed: u64,
    pub omega: Vec<f64>,
    pub theta0: Vec<f64>,
    pub ls_train_rel_l2: f64,
    pub ls_jitter: Option<f64>,
    pub ls_construct_seconds: f64,
    pub ls_rollout: RolloutSummary,
    pub ali_epsilon: f64,
    pub ali_m_tilde: usize,
    pub ali_train_rel_l2: f64,
    pub ali_construct_seconds: f64,
    pub ali_rollout: Option<RolloutSummary>,
    pub infer_seconds_per_sample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ErrorBand {
    pub step: Vec<usize>,
    pub min: Vec<f64>,
    pub mean: Vec<f64>,
    pub max: Vec<f64>,
}

impl ErrorBand {
    fn from_series(series: &[Vec<f64>], stride: usize) -> Self {
        let len = series.iter().map(Vec::len).min().unwrap_or(0);
        let mut band = ErrorBand::default();
        let stride = stride.max(1);
        for k in (0..len).filter(|k| k % stride == 0 || *k + 1 == len) {
            let vals: Vec<f64> = series.iter().map(|s| s[k]).collect();
            band.step.push(k);
            band.min
                .push(vals.iter().copied().fold(f64::INFINITY, f64::min));
            band.max.push(vals.iter().copied().fold(0.0, f64::max));
            band.mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
        }
        band
    }
}

pub struct KuramotoRun {
    pub report: ExperimentReport,
    pub repeats: Vec<KuramotoRepeat>,
    pub ls_band: ErrorBand,
    pub ali_band: Option<ErrorBand>,
    /// Repeat-0 trajectories: truth, least squares and (optionally) ALI.
    pub trajectories: Vec<(String, Trajectory)>,
}

pub fn run_kuramoto(cfg: &KuramotoConfig) -> Result<KuramotoRun> {
    cfg.validate()?;
    let maps = cfg.maps()?;
    let opts = FitOptions {
        jitter: cfg.jitter,
        ..Default::default()
    };
    let mut repeats = Vec::new();
    let mut ls_series = Vec::new();
    let mut ali_series = Vec::new();
    let mut trajectories = Vec::new();
    let mut summary = None;
    for rep in 0..cfg.repeats {
        let seed = cfg.seed.wrapping_add(rep as u64);
        let mut r = rng(seed);
        let omega: Vec<f64> = (0..cfg.n)
            .map(|_| r.random_range(-cfg.omega_range..=cfg.omega_range))
            .collect();
        let theta0: Array1<f64> = (0..cfg.n)
            .map(|_| r.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let spec = SystemSpec::Kuramoto {
            omega: omega.clone(),
            coupling: cfg.coupling,
        };
        let train = simulate(&spec, theta0.view(), cfg.dt, cfg.train_steps)?;
        let (xs, ys) = assemble_derivative_data(&train, &spec, DerivativeSource::Exact)?;

        let t = Instant::now();
        let ls = RegressionModel::fit(
            xs.view(),
            ys.view(),
            maps.clone(),
            Regularizer::LeastSquares,
            opts,
        )?;
        let ls_construct_seconds = t.elapsed().as_secs_f64();
        let ls_train = training_error(&ls, xs.view(), ys.view())?;

        let phi = ls.operator();
        let mean_norm = phi.row_norms_sq().mean().unwrap_or(1.0);
        let ali_epsilon = cfg.ali_epsilon_rel * mean_norm;
        let t = Instant::now();
        let ali_model = RegressionModel::fit(
            xs.view(),
            ys.view(),
            maps.clone(),
            Regularizer::Ali {
                epsilon: ali_epsilon,
                mode: cfg.ali_mode,
            },
            opts,
        )?;
        let ali_construct_seconds = t.elapsed().as_secs_f64();
        let ali_train = training_error(&ali_model, xs.view(), ys.view())?;

        let truth = simulate(&spec, theta0.view(), cfg.dt, cfg.rollout_steps)?;
        let ls_roll = rollout(&ls, theta0.view(), cfg.dt, cfg.rollout_steps)?;
        ls_series.push(trajectory_error_series(&truth, &ls_roll.trajectory));
        let ls_rollout = summarize(&truth, &ls_roll.trajectory, ls_roll.diverged_at);
        let ali_roll = if cfg.rollout_ali {
            Some(rollout(
                &ali_model,
                theta0.view(),
                cfg.dt,
                cfg.rollout_steps,
            )?)
        } else {
            None
        };
        let ali_rollout = ali_roll.as_ref().map(|ro| {
            ali_series.push(trajectory_error_series(&truth, &ro.trajectory));
            summarize(&truth, &ro.trajectory, ro.diverged_at)
        });
        let infer = time_inference(&ls, xs.view(), 50)?;
        if summary.is_none() {
            summary = Some(ModelSummary::of(&ls, xs.nrows(), cfg.n));
        }
        if rep == 0 {
            trajectories.push(("truth".to_string(), truth));
            trajectories.push(("least_squares".to_string(), ls_roll.trajectory));
            if let Some(ro) = ali_roll {
                trajectories.push(("ali".to_string(), ro.trajectory));
            }
        }
        repeats.push(KuramotoRepeat {
            seed,
            omega,
            theta0: theta0.to_vec(),
            ls_train_rel_l2: ls_train,
            ls_jitter: ls.diagnostics().jitter,
            ls_construct_seconds,
            ls_rollout,
            ali_epsilon,
            ali_m_tilde: ali_model.retained(),
            ali_train_rel_l2: ali_train,
            ali_construct_seconds,
            ali_rollout,
            infer_seconds_per_sample: infer,
        });
    }
    let k = repeats.len() as f64;
    let ls_band = ErrorBand::from_series(&ls_series, cfg.series_stride);
    let ali_band =
        (!ali_series.is_empty()).then(|| ErrorBand::from_series(&ali_series, cfg.series_stride));
    let all_finite = repeats.iter().all(|r| r.ls_rollout.diverged_at.is_none());
    let report = ExperimentReport {
        experiment: "kuramoto".into(),
        config: serde_json::to_value(cfg)?,
        seed: cfg.seed,
        timings: Timings {
            construct_seconds: repeats.iter().map(|r| r.ls_construct_seconds).sum::<f64>() / k,
            infer_seconds_per_sample: repeats
                .iter()
                .map(|r| r.infer_seconds_per_sample)
                .sum::<f64>()
                / k,
        },
        errors: Errors {
            train_rel_l2: repeats.iter().map(|r| r.ls_train_rel_l2).sum::<f64>() / k,
            test_rel_l2: all_finite.then(|| {
                repeats
                    .iter()
                    .map(|r| r.ls_rollout.max_rel_error)
                    .sum::<f64>()
                    / k
            }),
        },
        model: summary.unwrap_or_default(),
        details: serde_json::json!({
            "repeats": repeats,
            "least_squares_band": ls_band,
            "ali_band": ali_band,
        }),
    };
    Ok(KuramotoRun {
        report,
        repeats,
        ls_band,
        ali_band,
        trajectories,
    })
}
