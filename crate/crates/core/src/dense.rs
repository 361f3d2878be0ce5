//! Brute-force dense reference implementations.
//!
//! Everything here walks the full `Π p_j` index space with plain loops. None of it
//! calls into the factorized code paths, so the two can be compared as independent
//! computations.

#![allow(clippy::needless_range_loop)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::mtensor::{DenseTensor, MTensor};
use crate::scalar::Scalar;

/// Which pseudoinverse formula [`dense_lstsq`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LstsqBranch {
    /// `Aᵀ (A Aᵀ)⁻¹ y`, for linearly independent rows.
    Rows,
    /// `(Aᵀ A)⁻¹ Aᵀ y`, for linearly independent columns.
    Columns,
    /// Rows when `A` is wide or square, columns otherwise.
    Auto,
}

/// Odometer over a multi-index, last position fastest.
fn advance(idx: &mut [usize], dims: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < dims[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

fn total(dims: &[usize], cap: usize) -> Result<usize> {
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .unwrap_or(usize::MAX);
    if n > cap {
        return Err(Error::Capacity { requested: n, cap });
    }
    Ok(n)
}

/// Full dense tensor of shape `[m, p_1, …, p_n]`.
pub fn materialize<T: Scalar>(t: &MTensor<T>, cap: usize) -> Result<DenseTensor<T>> {
    let mut shape = vec![t.rdim()];
    shape.extend(t.cdims());
    let n = total(&shape, cap)?;
    let mut data = Vec::with_capacity(n);
    let cores = t.cores();
    let mut idx = vec![0usize; shape.len()];
    loop {
        let mut v = T::one();
        for (j, core) in cores.iter().enumerate() {
            v *= core[[idx[0], idx[j + 1]]];
        }
        data.push(v);
        if !advance(&mut idx, &shape) {
            break;
        }
    }
    DenseTensor::from_vec(shape, data)
}

/// Row-wise Kronecker product of the given matrices, first matrix slowest.
pub fn face_splitting<T: Scalar>(cores: &[Array2<T>], cap: usize) -> Result<Array2<T>> {
    let first = cores.first().ok_or_else(|| Error::arg("no matrices"))?;
    let m = first.nrows();
    if cores.iter().any(|c| c.nrows() != m) {
        return Err(Error::dim("matrices differ in row count"));
    }
    let dims: Vec<usize> = cores.iter().map(|c| c.ncols()).collect();
    let cols = total(&dims, usize::MAX)?;
    total(&[m, cols], cap)?;
    let mut out = Array2::zeros((m, cols));
    for k in 0..m {
        let mut idx = vec![0usize; dims.len()];
        let mut col = 0;
        loop {
            let mut v = T::one();
            for (j, c) in cores.iter().enumerate() {
                v *= c[[k, idx[j]]];
            }
            out[[k, col]] = v;
            col += 1;
            if !advance(&mut idx, &dims) {
                break;
            }
        }
    }
    Ok(out)
}

fn row_block<T: Scalar>(d: &DenseTensor<T>) -> (usize, usize) {
    let m = d.shape()[0];
    (m, d.data().len() / m.max(1))
}

/// Sum of each row block of a materialized m-tensor.
pub fn contract_r<T: Scalar>(d: &DenseTensor<T>) -> Vec<T> {
    let (m, w) = row_block(d);
    (0..m)
        .map(|k| {
            let mut s = T::zero();
            for i in 0..w {
                s += d.data()[k * w + i];
            }
            s
        })
        .collect()
}

/// Sum over the leading (row) axis.
pub fn contract_c<T: Scalar>(d: &DenseTensor<T>) -> Vec<T> {
    let (m, w) = row_block(d);
    let mut out = vec![T::zero(); w];
    for k in 0..m {
        for i in 0..w {
            out[i] += d.data()[k * w + i];
        }
    }
    out
}

pub fn hadamard<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::dim("shapes differ"));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    DenseTensor::from_vec(a.shape().to_vec(), data)
}

pub fn inner<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(Error::dim("shapes differ"));
    }
    let mut s = T::zero();
    for i in 0..a.data().len() {
        s += a.data()[i] * b.data()[i];
    }
    Ok(s)
}

pub fn norm<T: Scalar>(a: &DenseTensor<T>) -> T {
    let mut s = T::zero();
    for &v in a.data() {
        s += v * v;
    }
    s.sqrt()
}

/// Matrix of inner products between the row blocks of two materialized tensors.
pub fn mprod<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> Result<Array2<T>> {
    if a.shape()[1..] != b.shape()[1..] {
        return Err(Error::dim("c-dims differ"));
    }
    let (ma, w) = row_block(a);
    let (mb, _) = row_block(b);
    let mut out = Array2::zeros((ma, mb));
    for k in 0..ma {
        for l in 0..mb {
            let mut s = T::zero();
            for i in 0..w {
                s += a.data()[k * w + i] * b.data()[l * w + i];
            }
            out[[k, l]] = s;
        }
    }
    Ok(out)
}

/// Inner products of one flattened rank-1 row with every row block of `b`.
pub fn mprod_row<T: Scalar>(row: &[T], b: &DenseTensor<T>) -> Result<Vec<T>> {
    let (mb, w) = row_block(b);
    if row.len() != w {
        return Err(Error::dim("row length differs from block width"));
    }
    let mut out = vec![T::zero(); mb];
    for l in 0..mb {
        for i in 0..w {
            out[l] += row[i] * b.data()[l * w + i];
        }
    }
    Ok(out)
}

/// Gaussian elimination with partial pivoting on a square system with several
/// right-hand sides.
pub fn gauss_solve<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::dim("system is not square or rhs length differs"));
    }
    let mut a = a.to_owned();
    let mut b = b.to_owned();
    let scale = a.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * T::of(n as f64);
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[[r, col]].abs() > a[[piv, col]].abs() {
                piv = r;
            }
        }
        if a[[piv, col]].abs() <= tiny {
            return Err(Error::Rank(format!("pivot {col} vanishes")));
        }
        if piv != col {
            for c in 0..n {
                a.swap([piv, c], [col, c]);
            }
            for c in 0..b.ncols() {
                b.swap([piv, c], [col, c]);
            }
        }
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = a[[col, c]];
                a[[r, c]] -= f * v;
            }
            for c in 0..b.ncols() {
                let v = b[[col, c]];
                b[[r, c]] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        for c in 0..b.ncols() {
            let mut s = b[[col, c]];
            for k in col + 1..n {
                s -= a[[col, k]] * b[[k, c]];
            }
            b[[col, c]] = s / a[[col, col]];
        }
    }
    Ok(b)
}

/// Least-squares coefficients of `A c ≈ y` through the chosen pseudoinverse formula.
pub fn dense_lstsq<T: Scalar>(
    a: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    branch: LstsqBranch,
) -> Result<Array1<T>> {
    if a.nrows() != y.len() {
        return Err(Error::dim("rhs length differs from row count"));
    }
    let branch = match branch {
        LstsqBranch::Auto if a.nrows() <= a.ncols() => LstsqBranch::Rows,
        LstsqBranch::Auto => LstsqBranch::Columns,
        b => b,
    };
    let y2 = y.to_owned().insert_axis(ndarray::Axis(1));
    match branch {
        LstsqBranch::Rows => {
            let g = a.dot(&a.t());
            let z = gauss_solve(g.view(), y2.view())?;
            Ok(a.t().dot(&z).column(0).to_owned())
        }
        _ => {
            let g = a.t().dot(&a);
            let rhs = a.t().dot(&y2);
            Ok(gauss_solve(g.view(), rhs.view())?.column(0).to_owned())
        }
    }
}
