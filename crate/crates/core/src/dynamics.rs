//! Right-hand sides of the benchmark dynamical systems, explicit Euler
//! integration and learned-model rollouts.
//!
//! Kuramoto phases are integrated as raw reals and never wrapped into `[0, 2π)`;
//! the trigonometric features do not care.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::RegressionModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    Lorenz { sigma: f64, rho: f64, beta: f64 },
    Kuramoto { omega: Vec<f64>, coupling: f64 },
}

impl SystemSpec {
    pub fn lorenz_default() -> Self {
        SystemSpec::Lorenz {
            sigma: 10.0,
            rho: 28.0,
            beta: 2.667,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Lorenz { .. } => 3,
            SystemSpec::Kuramoto { omega, .. } => omega.len(),
        }
    }

    pub fn rhs(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        match self {
            SystemSpec::Lorenz { sigma, rho, beta } => {
                if x.len() != 3 {
                    return Err(Error::dim(format!("Lorenz state has length {}", x.len())));
                }
                Ok(Array1::from(
                    lorenz_rhs([x[0], x[1], x[2]], *sigma, *rho, *beta).to_vec(),
                ))
            }
            SystemSpec::Kuramoto { omega, coupling } => kuramoto_rhs(x, omega, *coupling),
        }
    }
}

pub fn lorenz_rhs(x: [f64; 3], sigma: f64, rho: f64, beta: f64) -> [f64; 3] {
    [
        sigma * (x[1] - x[0]),
        rho * x[0] - x[1] - x[0] * x[2],
        x[0] * x[1] - beta * x[2],
    ]
}

/// `dθ_i/dt = ω_i + (K/n) Σ_j sin(θ_j − θ_i)`.
pub fn kuramoto_rhs(theta: ArrayView1<'_, f64>, omega: &[f64], k: f64) -> Result<Array1<f64>> {
    let n = theta.len();
    if omega.len() != n {
        return Err(Error::dim(format!(
            "{} phases but {} natural frequencies",
            n,
            omega.len()
        )));
    }
    let (sn, cs): (Vec<f64>, Vec<f64>) = theta.iter().map(|t| t.sin_cos()).unzip();
    let gain = k / n as f64;
    let out = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                // sin(θ_j − θ_i)
                acc += sn[j] * cs[i] - cs[j] * sn[i];
            }
            omega[i] + gain * acc
        })
        .collect();
    Ok(out)
}

/// States on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(steps + 1) × n`.
    pub states: Array2<f64>,
    pub dt: f64,
    pub t0: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn state(&self, k: usize) -> ArrayView1<'_, f64> {
        self.states.row(k)
    }

    /// Largest absolute coordinate over the whole trajectory.
    pub fn max_abs(&self) -> f64 {
        self.states.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// CSV with header `t,x1,…,xn`, every `stride`-th state plus the last one.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> Result<()> {
        let stride = stride.max(1);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim()).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        let last = self.len().saturating_sub(1);
        for k in (0..self.len()).filter(|&k| k % stride == 0 || k == last) {
            let mut line = format!("{}", self.time(k));
            for v in self.state(k) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Result of an integration that may stop early on a non-finite state.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// States up to (excluding) the first non-finite one.
    pub trajectory: Trajectory,
    pub diverged_at: Option<usize>,
}

/// Explicit Euler, recording every state. Stops at the first non-finite state.
pub fn integrate<F>(mut rhs: F, x0: ArrayView1<'_, f64>, dt: f64, steps: usize) -> Result<Rollout>
where
    F: FnMut(ArrayView1<'_, f64>) -> Result<Array1<f64>>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::arg("steps must be at least 1"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("initial state is not finite"));
    }
    let n = x0.len();
    let mut states = Array2::zeros((steps + 1, n));
    states.row_mut(0).assign(&x0);
    let mut x = x0.to_owned();
    let mut diverged_at = None;
    let mut filled = 1;
    for k in 1..=steps {
        let f = rhs(x.view())?;
        if f.len() != n {
            return Err(Error::dim(format!(
                "rhs has length {}, state {}",
                f.len(),
                n
            )));
        }
        x.scaled_add(dt, &f);
        if x.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(k);
            break;
        }
        states.row_mut(k).assign(&x);
        filled = k + 1;
    }
    states = states.slice_move(ndarray::s![..filled, ..]);
    Ok(Rollout {
        trajectory: Trajectory {
            states,
            dt,
            t0: 0.0,
        },
        diverged_at,
    })
}

/// Explicit Euler; a non-finite state is an error carrying the step index.
pub fn euler_integrate<F>(
    rhs: F,
    x0: ArrayView1<'_, f64>,
    dt: f64,
    steps: usize,
) -> Result<Trajectory>
where
    F: FnMut(ArrayView1<'_, f64>) -> Result<Array1<f64>>,
{
    let r = integrate(rhs, x0, dt, steps)?;
    match r.diverged_at {
        Some(step) => Err(Error::Divergence { step }),
        None => Ok(r.trajectory),
    }
}

/// Euler trajectory of a known system.
pub fn simulate(
    spec: &SystemSpec,
    x0: ArrayView1<'_, f64>,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    if x0.len() != spec.dim() {
        return Err(Error::dim(format!(
            "initial state has length {}, system dimension is {}",
            x0.len(),
            spec.dim()
        )));
    }
    euler_integrate(|x| spec.rhs(x), x0, dt, steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// The true right-hand side at every state.
    #[default]
    Exact,
    /// `(x_{k+1} − x_k) / dt`, dropping the last state.
    FiniteDifference,
}

/// `(states, targets)` for a regression of the time derivative.
pub fn assemble_derivative_data(
    traj: &Trajectory,
    spec: &SystemSpec,
    source: DerivativeSource,
) -> Result<(Array2<f64>, Array2<f64>)> {
    match source {
        DerivativeSource::Exact => {
            let states = traj.states.clone();
            let mut targets = Array2::zeros(states.raw_dim());
            for (k, mut t) in targets.axis_iter_mut(Axis(0)).enumerate() {
                t.assign(&spec.rhs(states.row(k))?);
            }
            Ok((states, targets))
        }
        DerivativeSource::FiniteDifference => {
            let m = traj.len();
            if m < 2 {
                return Err(Error::arg("finite differences need at least two states"));
            }
            let states = traj.states.slice(ndarray::s![..m - 1, ..]).to_owned();
            let next = traj.states.slice(ndarray::s![1.., ..]);
            let targets = (&next - &states) / traj.dt;
            Ok((states, targets))
        }
    }
}

/// Integrates the learned vector field. Divergence ends the rollout early and
/// is reported, not raised.
pub fn rollout(
    model: &RegressionModel<f64>,
    x0: ArrayView1<'_, f64>,
    dt: f64,
    steps: usize,
) -> Result<Rollout> {
    if model.output_dim() != x0.len() {
        return Err(Error::dim(format!(
            "model predicts {} outputs for a state of length {}",
            model.output_dim(),
            x0.len()
        )));
    }
    integrate(|x| model.predict(x), x0, dt, steps)
}

/// Per-step `‖x̂_k − x_k‖ / ‖x_k‖` over the common length of two trajectories.
pub fn trajectory_error_series(truth: &Trajectory, approx: &Trajectory) -> Vec<f64> {
    let len = truth.len().min(approx.len());
    (0..len)
        .map(|k| {
            let t = truth.state(k);
            let a = approx.state(k);
            let num = t
                .iter()
                .zip(a.iter())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            let den = t.dot(&t).sqrt();
            if den > 0.0 {
                num / den
            } else {
                num
            }
        })
        .collect()
}
