//! Dual least-squares regression on m-tensor design operators.
//!
//! With `P = Φ ⋉ Φᵀ` the model is `f̂(x) = (φ(x) ⋉ Φᵀ) Z`, where the dual weights
//! `Z` solve a Gram system. The primal coefficient tensor `Ĉ = Σ_k Z_k Φ_k`
//! is only formed on request, at small scale.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::ali::{self, AliMode, AliOptions};
use crate::error::{Error, Result};
use crate::features::FeatureMapSet;
use crate::linalg::{cholesky, sym_eig, CholeskyFactor, CholeskyOptions};
use crate::mtensor::{DenseTensor, MTensor, Rank1Row};
use crate::scalar::Scalar;

/// How many leading eigenpairs a spectral fit keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralCut {
    Rank(usize),
    /// Keep eigenpairs with `√λ ≥ τ`.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    #[default]
    LeastSquares,
    Tikhonov {
        lambda: f64,
    },
    Spectral {
        cut: SpectralCut,
    },
    Ali {
        epsilon: f64,
        mode: AliMode,
    },
}

impl Regularizer {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::LeastSquares => "least_squares",
            Regularizer::Tikhonov { .. } => "tikhonov",
            Regularizer::Spectral { .. } => "spectral",
            Regularizer::Ali { .. } => "ali",
        }
    }
}

/// Grammar: `ls`, `tikhonov:<λ>`, `spectral:<r>`, `spectral:tau=<τ>`,
/// `ali:<ε>` or `ali:<ε>:optimal`.
impl FromStr for Regularizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::arg(format!("invalid regularizer '{s}'"));
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let reg = match (head, args.as_slice()) {
            ("ls" | "least_squares", []) => Regularizer::LeastSquares,
            ("tikhonov", [l]) => {
                let lambda = num(l)?;
                if !(lambda >= 0.0) || !lambda.is_finite() {
                    return Err(bad());
                }
                Regularizer::Tikhonov { lambda }
            }
            ("spectral", [a]) => match a.strip_prefix("tau=") {
                Some(t) => {
                    let tau = num(t)?;
                    if !(tau >= 0.0) || !tau.is_finite() {
                        return Err(bad());
                    }
                    Regularizer::Spectral {
                        cut: SpectralCut::Threshold(tau),
                    }
                }
                None => {
                    let r: usize = a.parse().map_err(|_| bad())?;
                    if r == 0 {
                        return Err(bad());
                    }
                    Regularizer::Spectral {
                        cut: SpectralCut::Rank(r),
                    }
                }
            },
            ("ali", [e, rest @ ..]) if rest.len() <= 1 => {
                let epsilon = num(e)?;
                if !(epsilon > 0.0) || !epsilon.is_finite() {
                    return Err(bad());
                }
                let mode = match rest {
                    [] => AliMode::Greedy,
                    [m] => m.parse()?,
                    _ => unreachable!(),
                };
                Regularizer::Ali { epsilon, mode }
            }
            _ => return Err(bad()),
        };
        Ok(reg)
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularizer::LeastSquares => f.write_str("ls"),
            Regularizer::Tikhonov { lambda } => write!(f, "tikhonov:{lambda}"),
            Regularizer::Spectral {
                cut: SpectralCut::Rank(r),
            } => write!(f, "spectral:{r}"),
            Regularizer::Spectral {
                cut: SpectralCut::Threshold(t),
            } => write!(f, "spectral:tau={t}"),
            Regularizer::Ali { epsilon, mode } => match mode {
                AliMode::Greedy => write!(f, "ali:{epsilon}"),
                AliMode::Optimal => write!(f, "ali:{epsilon}:optimal"),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Allow a `1e-12·trace/m` diagonal shift when the Gram matrix is singular.
    pub jitter: bool,
    /// Score later optimal-ALI steps with the matrix shortcut.
    pub ali_shortcut: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub rows: usize,
    pub retained_rows: usize,
    /// Condition estimate; `None` when unbounded.
    pub condition: Option<f64>,
    /// `eigen` (λ_max/λ_min) or `cholesky_diag` (squared diagonal ratio).
    pub condition_kind: String,
    /// Diagonal shift applied to the Gram matrix, if any.
    pub jitter: Option<f64>,
    /// Number of eigenpairs kept by a spectral fit.
    pub rank: Option<usize>,
    /// ALI rows that exceeded ε but could not extend the factor.
    pub degenerate_rows: usize,
    /// `‖P Z − Y‖ / ‖Y‖` on the rows the model was solved on.
    pub fit_residual: Option<f64>,
}

/// Output of an operator-level fit.
#[derive(Debug, Clone)]
pub struct DualSolution<T> {
    pub z: Array2<T>,
    /// Rows of the operator kept by the fit (`None`: all rows).
    pub retained: Option<Vec<usize>>,
    pub diagnostics: Diagnostics,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn check_targets<T: Scalar>(phi: &MTensor<T>, y: ArrayView2<'_, T>) -> Result<()> {
    if y.nrows() != phi.rdim() {
        return Err(Error::dim(format!(
            "{} target rows for {} samples",
            y.nrows(),
            phi.rdim()
        )));
    }
    if y.ncols() == 0 {
        return Err(Error::arg("targets have no columns"));
    }
    Ok(())
}

fn rel_residual<T: Scalar>(p: &Array2<T>, z: &Array2<T>, y: ArrayView2<'_, T>) -> Option<f64> {
    let r = p.dot(z) - y;
    let ny = y.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    let nr = r.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    if ny > 0.0 {
        finite(nr / ny)
    } else {
        finite(nr)
    }
}

fn cholesky_solution<T: Scalar>(
    p: &Array2<T>,
    y: ArrayView2<'_, T>,
    opts: FitOptions,
) -> Result<(CholeskyFactor<T>, Array2<T>)> {
    let f = cholesky(
        p.view(),
        CholeskyOptions {
            jitter: opts.jitter,
        },
    )?;
    let z = f.solve_mat(y)?;
    Ok((f, z))
}

fn cholesky_diagnostics<T: Scalar>(
    f: &CholeskyFactor<T>,
    p: &Array2<T>,
    z: &Array2<T>,
    y: ArrayView2<'_, T>,
) -> Diagnostics {
    Diagnostics {
        rows: p.nrows(),
        retained_rows: p.nrows(),
        condition: finite(f.condition_proxy().as_f64()),
        condition_kind: "cholesky_diag".into(),
        jitter: f.jitter().map(|j| j.as_f64()),
        fit_residual: rel_residual(p, z, y),
        ..Default::default()
    }
}

/// `Z = P⁻¹ Y`.
pub fn fit_least_squares<T: Scalar>(
    phi: &MTensor<T>,
    y: ArrayView2<'_, T>,
    opts: FitOptions,
) -> Result<DualSolution<T>> {
    check_targets(phi, y)?;
    let p = phi.mprod(phi)?;
    let (f, z) = cholesky_solution(&p, y, opts)?;
    let diagnostics = cholesky_diagnostics(&f, &p, &z, y);
    Ok(DualSolution {
        z,
        retained: None,
        diagnostics,
    })
}

/// `Z = (P + λ² I)⁻¹ Y`.
pub fn fit_tikhonov<T: Scalar>(
    phi: &MTensor<T>,
    y: ArrayView2<'_, T>,
    lambda: T,
    opts: FitOptions,
) -> Result<DualSolution<T>> {
    check_targets(phi, y)?;
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::arg(format!("λ must be non-negative, got {lambda}")));
    }
    let mut p = phi.mprod(phi)?;
    let shift = lambda * lambda;
    p.diag_mut().mapv_inplace(|v| v + shift);
    let (f, z) = cholesky_solution(&p, y, opts)?;
    let mut diagnostics = cholesky_diagnostics(&f, &p, &z, y);
    diagnostics.fit_residual = {
        let p0 = phi.mprod(phi)?;
        rel_residual(&p0, &z, y)
    };
    Ok(DualSolution {
        z,
        retained: None,
        diagnostics,
    })
}

/// `Z = U_r U_rᵀ P⁻¹ Y`, evaluated as `U_r Λ_r⁻¹ U_rᵀ Y` so that directions
/// outside the kept eigenspace never need inverting.
pub fn fit_spectral<T: Scalar>(
    phi: &MTensor<T>,
    y: ArrayView2<'_, T>,
    cut: SpectralCut,
) -> Result<DualSolution<T>> {
    check_targets(phi, y)?;
    let m = phi.rdim();
    let p = phi.mprod(phi)?;
    let (vals, vecs) = sym_eig(p.view())?;
    let r = match cut {
        SpectralCut::Rank(r) => {
            if r == 0 || r > m {
                return Err(Error::arg(format!("rank {r} outside 1..={m}")));
            }
            r
        }
        SpectralCut::Threshold(tau) => {
            if !(tau >= 0.0) {
                return Err(Error::arg(format!(
                    "threshold must be non-negative, got {tau}"
                )));
            }
            let tau = T::of(tau);
            let r = vals
                .iter()
                .take_while(|&&l| l > T::zero() && l.sqrt() >= tau)
                .count();
            if r == 0 {
                return Err(Error::arg(format!(
                    "threshold {tau} exceeds every singular value"
                )));
            }
            r
        }
    };
    if !(vals[r - 1] > T::zero()) {
        return Err(Error::Rank(format!(
            "eigenvalue {} of the Gram matrix is {:e}",
            r - 1,
            vals[r - 1].as_f64()
        )));
    }
    let ur = vecs.slice(s![.., ..r]);
    let mut coef = ur.t().dot(&y);
    for (mut row, &l) in coef.rows_mut().into_iter().zip(vals.iter()) {
        row.mapv_inplace(|v| v / l);
    }
    let z = ur.dot(&coef);
    let lmin = vals[m - 1];
    let condition = if lmin > T::zero() {
        finite((vals[0] / lmin).as_f64())
    } else {
        None
    };
    let diagnostics = Diagnostics {
        rows: m,
        retained_rows: m,
        condition,
        condition_kind: "eigen".into(),
        rank: Some(r),
        fit_residual: rel_residual(&p, &z, y),
        ..Default::default()
    };
    Ok(DualSolution {
        z,
        retained: None,
        diagnostics,
    })
}

/// Selects an ALI row subset and solves `Z̃ = P̃⁻¹ Ỹ` on it.
pub fn fit_ali<T: Scalar>(
    phi: &MTensor<T>,
    y: ArrayView2<'_, T>,
    epsilon: T,
    mode: AliMode,
    opts: FitOptions,
) -> Result<DualSolution<T>> {
    check_targets(phi, y)?;
    let d = ali::decompose(
        phi,
        epsilon,
        AliOptions {
            mode,
            shortcut: opts.ali_shortcut,
            want_weights: false,
        },
    )?;
    let yt = y.select(Axis(0), &d.indices);
    let z = d.factor.solve_mat(yt.view())?;
    let sub = phi.select_rows(&d.indices)?;
    let pt = sub.mprod(&sub)?;
    let diagnostics = Diagnostics {
        rows: phi.rdim(),
        retained_rows: d.indices.len(),
        condition: finite(d.factor.condition_proxy().as_f64()),
        condition_kind: "cholesky_diag".into(),
        degenerate_rows: d.degenerate.len(),
        fit_residual: rel_residual(&pt, &z, yt.view()),
        ..Default::default()
    };
    Ok(DualSolution {
        z,
        retained: Some(d.indices),
        diagnostics,
    })
}

/// Dispatches on the regularizer.
pub fn fit_operator<T: Scalar>(
    phi: &MTensor<T>,
    y: ArrayView2<'_, T>,
    reg: &Regularizer,
    opts: FitOptions,
) -> Result<DualSolution<T>> {
    match *reg {
        Regularizer::LeastSquares => fit_least_squares(phi, y, opts),
        Regularizer::Tikhonov { lambda } => fit_tikhonov(phi, y, T::of(lambda), opts),
        Regularizer::Spectral { cut } => fit_spectral(phi, y, cut),
        Regularizer::Ali { epsilon, mode } => fit_ali(phi, y, T::of(epsilon), mode, opts),
    }
}

/// A fitted model: the retained operator, its dual weights and the maps that
/// turn raw samples into feature rows.
#[derive(Debug, Clone)]
pub struct RegressionModel<T> {
    operator: MTensor<T>,
    dual: Array2<T>,
    maps: FeatureMapSet<T>,
    samples: Array2<T>,
    regularizer: Regularizer,
    diagnostics: Diagnostics,
}

/// Rows per block in batched prediction.
const PREDICT_BLOCK: usize = 1024;

impl<T: Scalar> RegressionModel<T> {
    pub fn fit(
        samples: ArrayView2<'_, T>,
        targets: ArrayView2<'_, T>,
        maps: FeatureMapSet<T>,
        regularizer: Regularizer,
        opts: FitOptions,
    ) -> Result<Self> {
        let phi = maps.build_cores(samples)?;
        let sol = fit_operator(&phi, targets, &regularizer, opts)?;
        let (operator, samples) = match &sol.retained {
            Some(idx) => (phi.select_rows(idx)?, samples.select(Axis(0), idx)),
            None => (phi, samples.to_owned()),
        };
        Ok(Self {
            operator,
            dual: sol.z,
            maps,
            samples,
            regularizer,
            diagnostics: sol.diagnostics,
        })
    }

    /// Reassembles a model from stored parts, rebuilding the operator from the samples.
    pub fn from_parts(
        maps: FeatureMapSet<T>,
        samples: Array2<T>,
        dual: Array2<T>,
        regularizer: Regularizer,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        if samples.nrows() != dual.nrows() {
            return Err(Error::dim(format!(
                "{} samples but {} dual rows",
                samples.nrows(),
                dual.nrows()
            )));
        }
        let operator = maps.build_cores(samples.view())?;
        Ok(Self {
            operator,
            dual,
            maps,
            samples,
            regularizer,
            diagnostics,
        })
    }

    pub fn operator(&self) -> &MTensor<T> {
        &self.operator
    }

    pub fn dual(&self) -> &Array2<T> {
        &self.dual
    }

    pub fn maps(&self) -> &FeatureMapSet<T> {
        &self.maps
    }

    pub fn samples(&self) -> &Array2<T> {
        &self.samples
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn retained(&self) -> usize {
        self.operator.rdim()
    }

    pub fn output_dim(&self) -> usize {
        self.dual.ncols()
    }

    /// `kᵀ Z` with `k = φ(x) ⋉ Φᵀ`.
    pub fn predict(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let row = self.maps.feature_row(x)?;
        self.predict_row(&row)
    }

    pub fn predict_row(&self, row: &Rank1Row<T>) -> Result<Array1<T>> {
        let k = self.operator.mprod_row(row)?;
        Ok(self.dual.t().dot(&k))
    }

    /// Predictions for many samples, one row per sample.
    pub fn predict_batch(&self, xs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let q = xs.nrows();
        let mut out = Array2::zeros((q, self.output_dim()));
        let mut start = 0;
        while start < q {
            let end = (start + PREDICT_BLOCK).min(q);
            let block = self.maps.build_cores(xs.slice(s![start..end, ..]))?;
            let k = block.mprod(&self.operator)?;
            out.slice_mut(s![start..end, ..]).assign(&k.dot(&self.dual));
            start = end;
        }
        Ok(out)
    }

    /// `Ĉ = Σ_k Z_k Φ_k` as a dense tensor. Single-output models only.
    pub fn coefficients_dense(&self, cap: usize) -> Result<DenseTensor<T>> {
        if self.output_dim() != 1 {
            return Err(Error::arg(format!(
                "dense coefficients need a single output, model has {}",
                self.output_dim()
            )));
        }
        self.operator.weighted_contract_c(self.dual.column(0), cap)
    }
}

/// `k(x, x') = Π_j ⟨ψ_j(x_{a_j}), ψ_j(x'_{a_j})⟩`.
pub fn kernel_eval<T: Scalar>(
    x: ArrayView1<'_, T>,
    x2: ArrayView1<'_, T>,
    maps: &FeatureMapSet<T>,
) -> Result<T> {
    let a = maps.feature_row(x)?;
    let b = maps.feature_row(x2)?;
    Ok(a.factors
        .iter()
        .zip(&b.factors)
        .map(|(u, v)| u.dot(v))
        .fold(T::one(), |acc, d| acc * d))
}
