//! Almost-linearly-independent (ALI) row selection.
//!
//! A row is considered almost linearly dependent on a set of retained rows when
//! its squared distance to their span is at most `ε`. The greedy variant makes
//! one streaming pass; the optimal variant repeatedly picks the row whose
//! inclusion minimizes the total residual of all remaining rows.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CholeskyFactor;
use crate::mtensor::MTensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AliMode {
    #[default]
    Greedy,
    Optimal,
}

impl FromStr for AliMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(AliMode::Greedy),
            "optimal" => Ok(AliMode::Optimal),
            other => Err(Error::arg(format!(
                "unknown ALI mode '{other}' (expected greedy or optimal)"
            ))),
        }
    }
}

impl fmt::Display for AliMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AliMode::Greedy => "greedy",
            AliMode::Optimal => "optimal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AliOptions {
    pub mode: AliMode,
    /// Optimal mode only: score later steps with `n̄_i − s_iᵀ s_j`, `n̄` holding
    /// plain (unsquared) row norms, instead of the exact augmented distances.
    pub shortcut: bool,
    /// Greedy mode only: record the streaming weight matrix.
    pub want_weights: bool,
}

#[derive(Debug, Clone)]
pub struct AliDecomposition<T> {
    /// Retained row indices in selection order.
    pub indices: Vec<usize>,
    /// Cholesky factor of the retained Gram matrix, rows in `indices` order.
    pub factor: CholeskyFactor<T>,
    /// `m × m̃` weights, when requested.
    pub weights: Option<Array2<T>>,
    pub epsilon: T,
    /// Rows whose distance exceeded `ε` but could not extend the factor.
    pub degenerate: Vec<usize>,
}

impl<T: Scalar> AliDecomposition<T> {
    pub fn retained(&self) -> usize {
        self.indices.len()
    }
}

/// Gram entries `⟨row k, row j⟩` for every `j` in `idx`.
pub fn cross_gram<T: Scalar>(phi: &MTensor<T>, k: usize, idx: &[usize]) -> Array1<T> {
    let mut out = Array1::from_elem(idx.len(), T::one());
    for core in phi.cores() {
        let rk = core.row(k);
        for (o, &j) in out.iter_mut().zip(idx) {
            *o *= rk.dot(&core.row(j));
        }
    }
    out
}

/// Squared distance from a row to the span of the factored rows, and `s = L⁻¹b`.
/// With an empty factor the distance is `nrm2`.
pub fn ald_distance<T: Scalar>(
    factor: &CholeskyFactor<T>,
    b: ArrayView1<'_, T>,
    nrm2: T,
) -> Result<(T, Array1<T>)> {
    let s = factor.forward_solve(b)?;
    let d = (nrm2 - s.dot(&s)).max(T::zero());
    Ok((d, s))
}

fn check_epsilon<T: Scalar>(eps: T) -> Result<()> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::arg(format!("ε must be positive, got {eps}")));
    }
    Ok(())
}

/// Runs the selected ALI variant.
pub fn decompose<T: Scalar>(
    phi: &MTensor<T>,
    eps: T,
    opts: AliOptions,
) -> Result<AliDecomposition<T>> {
    match opts.mode {
        AliMode::Greedy => greedy_ali(phi, eps, opts.want_weights),
        AliMode::Optimal => optimal_ali(phi, eps, opts.shortcut),
    }
}

/// Single pass in row order. Row 0 is always kept; row `k` is kept when its
/// distance to the span of the rows kept so far exceeds `ε`.
pub fn greedy_ali<T: Scalar>(
    phi: &MTensor<T>,
    eps: T,
    want_weights: bool,
) -> Result<AliDecomposition<T>> {
    check_epsilon(eps)?;
    let m = phi.rdim();
    let norms = phi.row_norms_sq();
    let mut indices: Vec<usize> = Vec::new();
    let mut factor = CholeskyFactor::empty();
    let mut degenerate = Vec::new();
    // (row, weights against the rows kept at that time)
    let mut weight_rows: Vec<(usize, Array1<T>)> = Vec::new();

    for k in 0..m {
        let b = cross_gram(phi, k, &indices);
        let (delta, s) = ald_distance(&factor, b.view(), norms[k])?;
        if delta > eps || indices.is_empty() {
            match factor.push_row(s.view(), norms[k] - s.dot(&s)) {
                Ok(()) => {
                    indices.push(k);
                    if want_weights {
                        let mut w = Array1::zeros(indices.len());
                        w[indices.len() - 1] = T::one();
                        weight_rows.push((k, w));
                    }
                    continue;
                }
                Err(Error::DegenerateAppend(_)) => degenerate.push(k),
                Err(e) => return Err(e),
            }
        }
        if want_weights {
            weight_rows.push((k, factor.backward_solve(s.view())?));
        }
    }
    if indices.is_empty() {
        return Err(Error::Rank("every row of the operator is zero".into()));
    }

    let weights = want_weights.then(|| {
        let mut w = Array2::zeros((m, indices.len()));
        for (k, row) in &weight_rows {
            w.row_mut(*k)
                .slice_mut(ndarray::s![..row.len()])
                .assign(row);
        }
        w
    });
    Ok(AliDecomposition {
        indices,
        factor,
        weights,
        epsilon: eps,
        degenerate,
    })
}

/// Iterative selection minimizing the column sums of the distance matrix
/// `δ_ij = C_ii − C_ij² / C_jj`, where `C` is the Gram matrix of the rows
/// projected off the current span. Ties go to the lowest index. Stops once every
/// remaining distance in the chosen column is at most `ε`.
pub fn optimal_ali<T: Scalar>(
    phi: &MTensor<T>,
    eps: T,
    shortcut: bool,
) -> Result<AliDecomposition<T>> {
    check_epsilon(eps)?;
    let m = phi.rdim();
    let p = phi.mprod(phi)?;
    let mut c = p.clone();
    let norms: Array1<T> = p.diag().to_owned();
    let plain_norms: Array1<T> = norms.mapv(|v| v.sqrt());
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut skipped = vec![false; m];
    let mut indices = Vec::new();
    let mut factor = CholeskyFactor::empty();
    let mut degenerate = Vec::new();
    let tiny = T::epsilon() * T::of(64.0);

    loop {
        let mut best: Option<(usize, T)> = None;
        for &j in &remaining {
            let cjj = c[[j, j]];
            if skipped[j] || !(cjj > tiny * norms[j]) {
                continue;
            }
            let mut sum = T::zero();
            for &i in &remaining {
                sum += score(&c, &p, &plain_norms, i, j, shortcut && !indices.is_empty());
            }
            if best.is_none_or(|(_, b)| sum < b) {
                best = Some((j, sum));
            }
        }
        let Some((j, _)) = best else { break };

        let b: Array1<T> = indices.iter().map(|&r| p[[j, r]]).collect();
        let s = factor.forward_solve(b.view())?;
        if let Err(e) = factor.push_row(s.view(), norms[j] - s.dot(&s)) {
            match e {
                Error::DegenerateAppend(_) => {
                    skipped[j] = true;
                    degenerate.push(j);
                    continue;
                }
                e => return Err(e),
            }
        }
        let use_shortcut = shortcut && !indices.is_empty();
        let column_done = remaining
            .iter()
            .all(|&i| score(&c, &p, &plain_norms, i, j, use_shortcut) <= eps);
        indices.push(j);
        remaining.retain(|&r| r != j);

        // Project every row off the newly added direction.
        let cj = c.column(j).to_owned();
        let cjj = cj[j];
        for &a in &remaining {
            let fa = cj[a] / cjj;
            for &bb in &remaining {
                c[[a, bb]] -= fa * cj[bb];
            }
        }
        if column_done || remaining.is_empty() {
            break;
        }
    }
    if indices.is_empty() {
        return Err(Error::Rank("every row of the operator is zero".into()));
    }
    Ok(AliDecomposition {
        indices,
        factor,
        weights: None,
        epsilon: eps,
        degenerate,
    })
}

#[inline]
fn score<T: Scalar>(
    c: &Array2<T>,
    p: &Array2<T>,
    plain_norms: &Array1<T>,
    i: usize,
    j: usize,
    shortcut: bool,
) -> T {
    if shortcut {
        // SᵀS = P − C on the remaining block.
        plain_norms[i] - (p[[i, j]] - c[[i, j]])
    } else {
        let cij = c[[i, j]];
        (c[[i, i]] - cij * cij / c[[j, j]]).max(T::zero())
    }
}

/// `W = (Φ ⋉ Φ̃ᵀ) P̃⁻¹`, shape `m × m̃`.
pub fn ali_weights<T: Scalar>(d: &AliDecomposition<T>, phi: &MTensor<T>) -> Result<Array2<T>> {
    let m = phi.rdim();
    let mut w = Array2::zeros((m, d.indices.len()));
    for k in 0..m {
        let g = cross_gram(phi, k, &d.indices);
        w.row_mut(k).assign(&d.factor.solve(g.view())?);
    }
    Ok(w)
}

/// Squared distance of every row to the retained span.
pub fn projection_residuals<T: Scalar>(
    d: &AliDecomposition<T>,
    phi: &MTensor<T>,
) -> Result<Array1<T>> {
    let norms = phi.row_norms_sq();
    (0..phi.rdim())
        .map(|k| {
            let b = cross_gram(phi, k, &d.indices);
            Ok(ald_distance(&d.factor, b.view(), norms[k])?.0)
        })
        .collect()
}

/// Mean squared distance of the rows to the retained span.
pub fn projection_mse<T: Scalar>(d: &AliDecomposition<T>, phi: &MTensor<T>) -> Result<T> {
    let r = projection_residuals(d, phi)?;
    Ok(r.sum() / T::of(phi.rdim() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy() -> MTensor<f64> {
        MTensor::from_cores(vec![
            array![[1., -1., 1.], [1., 0., 0.], [1., 1., 1.]],
            array![[1., -1., 1.], [1., 1., 1.], [1., 0., 0.]],
        ])
        .unwrap()
    }

    #[test]
    fn distances() {
        let f = CholeskyFactor::empty()
            .appended(Array1::zeros(0).view(), 9.0)
            .unwrap();
        let (d, _) = ald_distance(&f, array![1.].view(), 3.0).unwrap();
        assert_abs_diff_eq!(d, 3.0 - 1.0 / 9.0, epsilon = 1e-12);
        let (d, _) = ald_distance(&f, array![9.].view(), 9.0).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
        let (d, _) = ald_distance(&CholeskyFactor::empty(), Array1::zeros(0).view(), 4.0).unwrap();
        assert_eq!(d, 4.0);
    }

    #[test]
    fn greedy_toy() {
        assert_eq!(
            greedy_ali(&toy(), 1e-12, false).unwrap().indices,
            vec![0, 1, 2]
        );
        let d = greedy_ali(&toy(), 10.0, true).unwrap();
        assert_eq!(d.indices, vec![0]);
        let w = d.weights.unwrap();
        assert_abs_diff_eq!(w[[0, 0]], 1.0);
        assert_abs_diff_eq!(w[[1, 0]], 1.0 / 9.0, epsilon = 1e-12);
        assert!(matches!(
            greedy_ali(&toy(), 0.0, false),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn optimal_toy() {
        let d = optimal_ali(&toy(), 100.0, false).unwrap();
        assert_eq!(d.indices, vec![0]);
        let all = optimal_ali(&toy(), 1e-12, false).unwrap();
        assert_eq!(all.indices.len(), 3);
        assert_eq!(all.indices[0], 0);
        let sc = optimal_ali(&toy(), 100.0, true).unwrap();
        assert_eq!(sc.indices, vec![0]);
    }

    #[test]
    fn toy_weights_and_mse() {
        let d = greedy_ali(&toy(), 10.0, false).unwrap();
        let w = ali_weights(&d, &toy()).unwrap();
        assert_abs_diff_eq!(w[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[[1, 0]], 1.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[[2, 0]], 1.0 / 9.0, epsilon = 1e-12);
        let mse = projection_mse(&d, &toy()).unwrap();
        assert_abs_diff_eq!(mse, 2.0 * (3.0 - 1.0 / 9.0) / 3.0, epsilon = 1e-12);

        let full = greedy_ali(&toy(), 1e-12, false).unwrap();
        let w = ali_weights(&full, &toy()).unwrap();
        for (a, b) in w.iter().zip(Array2::<f64>::eye(3).iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(projection_mse(&full, &toy()).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn duplicate_rows_are_dropped() {
        let core = array![[1., 2.], [1., 2.], [0., 1.]];
        let t = MTensor::from_cores(vec![core.clone(), core]).unwrap();
        assert_eq!(greedy_ali(&t, 1e-9, false).unwrap().indices, vec![0, 2]);
        assert_eq!(optimal_ali(&t, 1e-9, false).unwrap().retained(), 2);
    }
}
