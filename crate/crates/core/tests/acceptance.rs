//! End-to-end acceptance checks. Runs without the libtest harness so that each
//! criterion prints a single PASS/FAIL line in the normal `cargo test` output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::time::{Duration, Instant};

use mtensor::ali::{decompose, projection_mse, AliMode, AliOptions};
use mtensor::experiments::{
    ali_inference_scaling, loglog_slope, rng, run_kuramoto, run_lorenz, run_rosenbrock, run_toy,
    KuramotoConfig, LorenzConfig, RosenbrockConfig,
};
use mtensor::linalg::{cholesky, sym_eig, CholeskyOptions};
use mtensor::regression::{
    fit_ali, fit_least_squares, fit_spectral, fit_tikhonov, FitOptions, Regularizer, SpectralCut,
};
use mtensor::selftest::{self, random_matrix, random_mtensor};
use mtensor::{Error, MTensor};
use ndarray::{s, Array2};
use rand::Rng;

// Tolerances and limits.
const TOY_RUNTIME: Duration = Duration::from_secs(1);
const ORACLE_INSTANCES: usize = 200;
const ORACLE_RUNTIME: Duration = Duration::from_secs(30);
const IDENTITY_TOL: f64 = 1e-10;
const ALI_IDENTITY_TOL: f64 = 1e-9;
const IDENTITY_INSTANCES: usize = 50;
const ALI_INSTANCES: usize = 50;
const LORENZ_TRAIN_TOL: f64 = 1e-6;
const LORENZ_BOX: f64 = 100.0;
const LORENZ_RUNTIME: Duration = Duration::from_secs(60);
const KURAMOTO_TRAIN_TOL: f64 = 1e-4;
const KURAMOTO_ROLLOUT_TOL: f64 = 0.10;
const KURAMOTO_RUNTIME: Duration = Duration::from_secs(600);
const ROSENBROCK_TEST_TOL: f64 = 0.10;
const ROSENBROCK_RATIO: f64 = 50.0;
const ROSENBROCK_RUNTIME: Duration = Duration::from_secs(600);
const INFERENCE_SLOPE: f64 = 1.5;

type Check = fn() -> Result<Outcome, Error>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome, Error> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn max_rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

fn toy() -> Result<Outcome, Error> {
    let t = Instant::now();
    let r = run_toy()?;
    let elapsed = t.elapsed();
    let failed: Vec<&str> = r
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    outcome(
        failed.is_empty() && elapsed < TOY_RUNTIME,
        format!("failed checks {failed:?}, z = {:.4?}, {elapsed:.2?}", r.z),
    )
}

fn oracle() -> Result<Outcome, Error> {
    let t = Instant::now();
    let mut groups = selftest::oracle_groups(1000, ORACLE_INSTANCES);
    groups.push(selftest::lstsq_group(1000, ORACLE_INSTANCES));
    let elapsed = t.elapsed();
    let bad: Vec<String> = groups
        .iter()
        .filter(|g| !g.pass() || g.passed < ORACLE_INSTANCES)
        .map(|g| format!("{} ({} failures)", g.name, g.failures.len()))
        .collect();
    outcome(
        bad.is_empty() && elapsed < ORACLE_RUNTIME,
        format!(
            "{} groups x {ORACLE_INSTANCES} instances, failing {bad:?}, {elapsed:.2?}",
            groups.len()
        ),
    )
}

/// Random operator with an invertible Gram matrix and two target columns.
fn well_posed(seed: u64) -> Option<(MTensor<f64>, Array2<f64>)> {
    let mut r = rng(seed);
    let m = r.random_range(2..=6);
    let n = r.random_range(2..=3);
    let cdims: Vec<usize> = (0..n).map(|_| r.random_range(2..=3)).collect();
    let phi = random_mtensor(&mut r, m, &cdims);
    let (vals, _) = sym_eig(phi.mprod(&phi).ok()?.view()).ok()?;
    (vals[m - 1] > 1e-4 * vals[0]).then(|| (phi, random_matrix(&mut r, m, 2)))
}

fn identities() -> Result<Outcome, Error> {
    let opts = FitOptions::default();
    let (mut tik, mut full, mut space, mut ali) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut done = 0;
    let mut seed = 5000u64;
    while done < IDENTITY_INSTANCES {
        seed += 1;
        let Some((phi, y)) = well_posed(seed) else {
            continue;
        };
        done += 1;
        let m = phi.rdim();
        let ls = fit_least_squares(&phi, y.view(), opts)?.z;
        tik = tik.max(max_rel_diff(
            &fit_tikhonov(&phi, y.view(), 0.0, opts)?.z,
            &ls,
        ));
        full = full.max(max_rel_diff(
            &fit_spectral(&phi, y.view(), SpectralCut::Rank(m))?.z,
            &ls,
        ));

        let (_, vecs) = sym_eig(phi.mprod(&phi)?.view())?;
        for r in 1..=m {
            let z = fit_spectral(&phi, y.view(), SpectralCut::Rank(r))?.z;
            let ur = vecs.slice(s![.., ..r]);
            space = space.max(max_rel_diff(&ur.dot(&ur.t().dot(&z)), &z));
        }

        for mode in [AliMode::Greedy, AliMode::Optimal] {
            let sol = fit_ali(&phi, y.view(), 1e-13, mode, opts)?;
            let idx = sol.retained.expect("ALI reports its rows");
            if idx.len() != m {
                ali = f64::INFINITY;
                continue;
            }
            let mut z = Array2::zeros(sol.z.raw_dim());
            for (pos, &k) in idx.iter().enumerate() {
                z.row_mut(k).assign(&sol.z.row(pos));
            }
            ali = ali.max(max_rel_diff(&z, &ls));
        }
    }
    outcome(
        tik <= IDENTITY_TOL && full <= IDENTITY_TOL && space <= IDENTITY_TOL && ali <= ALI_IDENTITY_TOL,
        format!(
            "{IDENTITY_INSTANCES} instances: tikhonov(0) {tik:.1e}, spectral(m) {full:.1e}, \
             eigenspace {space:.1e} (tol {IDENTITY_TOL:.0e}); ali(eps->0) {ali:.1e} (tol {ALI_IDENTITY_TOL:.0e})"
        ),
    )
}

fn ali_bound() -> Result<Outcome, Error> {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..ALI_INSTANCES as u64 {
        let mut r = rng(7000 + i);
        let m = r.random_range(5..=40);
        let n = r.random_range(1..=4);
        let cdims: Vec<usize> = (0..n).map(|_| r.random_range(2..=3)).collect();
        let phi = random_mtensor(&mut r, m, &cdims);
        let top = phi.row_norms_sq().iter().fold(0.0f64, |a, &v| a.max(v));
        let eps = top * 10f64.powf(r.random_range(-6.0..-0.5));
        for mode in [AliMode::Greedy, AliMode::Optimal] {
            let d = decompose(
                &phi,
                eps,
                AliOptions {
                    mode,
                    ..Default::default()
                },
            )?;
            let mse = projection_mse(&d, &phi)?;
            worst = worst.max(mse / eps);
            let sub = phi.select_rows(&d.indices)?;
            let plain = cholesky(sub.mprod(&sub)?.view(), CholeskyOptions::default()).is_ok();
            if !(mse <= eps && plain && d.retained() <= m) {
                failures.push(format!(
                    "instance {i} {mode}: mse/eps {:.3}, cholesky {plain}",
                    mse / eps
                ));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{ALI_INSTANCES} instances x 2 modes, worst mse/eps {worst:.3}, failures {failures:?}"
        ),
    )
}

fn lorenz() -> Result<Outcome, Error> {
    let t = Instant::now();
    let run = run_lorenz(&LorenzConfig::default())?;
    let elapsed = t.elapsed();
    let ls = &run.models[0];
    let mut bad = Vec::new();
    for m in &run.models {
        let r = &m.trained_ic;
        if r.diverged_at.is_some() || r.steps_completed != 25_000 || !(r.max_abs <= LORENZ_BOX) {
            bad.push(format!(
                "{} (max |x| {:.1}, diverged {:?})",
                m.name, r.max_abs, r.diverged_at
            ));
        }
    }
    let maxes: Vec<String> = run
        .models
        .iter()
        .map(|m| format!("{} {:.1}", m.name, m.trained_ic.max_abs))
        .collect();
    outcome(
        ls.name == "least_squares" && ls.train_rel_l2 < LORENZ_TRAIN_TOL && bad.is_empty() && elapsed < LORENZ_RUNTIME,
        format!(
            "train error {:.2e} (tol {LORENZ_TRAIN_TOL:.0e}), max |x|: {}, out of box {bad:?}, {elapsed:.1?}",
            ls.train_rel_l2,
            maxes.join(", ")
        ),
    )
}

fn kuramoto() -> Result<Outcome, Error> {
    let small = run_kuramoto(&KuramotoConfig {
        n: 10,
        scale: Some(1.0),
        rollout_steps: 10,
        rollout_ali: false,
        ..Default::default()
    })?;
    let train = small
        .repeats
        .iter()
        .map(|r| r.ls_train_rel_l2)
        .fold(0.0, f64::max);
    let m_tilde = small
        .repeats
        .iter()
        .map(|r| r.ali_m_tilde)
        .max()
        .unwrap_or(usize::MAX);
    let m = small.report.model.m;

    let t = Instant::now();
    let big = run_kuramoto(&KuramotoConfig {
        n: 100,
        repeats: 1,
        rollout_ali: false,
        ..Default::default()
    })?;
    let elapsed = t.elapsed();
    let roll = &big.repeats[0].ls_rollout;
    let finished = roll.diverged_at.is_none() && roll.steps_completed == 50_000;
    outcome(
        train < KURAMOTO_TRAIN_TOL
            && m_tilde < m
            && finished
            && roll.max_rel_error < KURAMOTO_ROLLOUT_TOL
            && elapsed < KURAMOTO_RUNTIME,
        format!(
            "n=10: train error {train:.2e} (tol {KURAMOTO_TRAIN_TOL:.0e}), max m~ {m_tilde} of {m}; \
             n=100: rollout max error {:.4} (tol {KURAMOTO_ROLLOUT_TOL}), {elapsed:.1?}",
            roll.max_rel_error
        ),
    )
}

fn rosenbrock() -> Result<Outcome, Error> {
    let t = Instant::now();
    let base = RosenbrockConfig {
        alpha: 20,
        repeats: 3,
        timing_samples: 50,
        ..Default::default()
    };
    let half = run_rosenbrock(&RosenbrockConfig {
        n: 50,
        ..base.clone()
    })?;
    let full = run_rosenbrock(&RosenbrockConfig {
        n: 100,
        ..base.clone()
    })?;
    let ratio = full.timings.construct_seconds / half.timings.construct_seconds;
    let ls_err = full.errors.test_rel_l2.unwrap_or(f64::INFINITY);
    let mut detail = format!("least squares test error {ls_err:.4}");
    let mut best = ls_err;
    if !(ls_err <= ROSENBROCK_TEST_TOL) {
        let tk = run_rosenbrock(&RosenbrockConfig {
            n: 100,
            regularizer: Regularizer::Tikhonov { lambda: 1e-6 },
            ..base
        })?;
        let e = tk.errors.test_rel_l2.unwrap_or(f64::INFINITY);
        detail.push_str(&format!(", tikhonov(1e-6) {e:.4}"));
        best = best.min(e);
    }
    let elapsed = t.elapsed();
    outcome(
        best <= ROSENBROCK_TEST_TOL && ratio <= ROSENBROCK_RATIO && elapsed < ROSENBROCK_RUNTIME,
        format!(
            "{detail} (tol {ROSENBROCK_TEST_TOL}); construction {:.3}s / {:.3}s = {ratio:.1}x (max {ROSENBROCK_RATIO}); {elapsed:.1?}",
            full.timings.construct_seconds, half.timings.construct_seconds
        ),
    )
}

fn inference() -> Result<Outcome, Error> {
    let ns = [20, 50, 100];
    let pts = ali_inference_scaling(&ns, 20, 60, 11, 500)?;
    let xs: Vec<f64> = pts.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.seconds_per_sample).collect();
    let slope = loglog_slope(&xs, &ys)?;
    let same_rows = pts.iter().all(|p| p.m_tilde == pts[0].m_tilde);
    let detail: Vec<String> = pts
        .iter()
        .map(|p| {
            format!(
                "n={} m~={} {:.2}us",
                p.n,
                p.m_tilde,
                p.seconds_per_sample * 1e6
            )
        })
        .collect();
    outcome(
        slope <= INFERENCE_SLOPE && same_rows,
        format!(
            "{}; slope {slope:.2} (max {INFERENCE_SLOPE}, wall-clock, machine dependent)",
            detail.join(", ")
        ),
    )
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("worked toy problem", toy),
        ("dense oracle equivalence", oracle),
        ("regularizer identities", identities),
        ("ALI epsilon bound", ali_bound),
        ("Lorenz identification", lorenz),
        ("Kuramoto identification", kuramoto),
        ("Rosenbrock scaling", rosenbrock),
        ("ALI inference linearity", inference),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let (status, detail) = match check() {
            Ok(o) => (if o.pass { "PASS" } else { "FAIL" }, o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {} {status} {name}: {detail}", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
