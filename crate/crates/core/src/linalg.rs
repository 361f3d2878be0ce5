//! Dense linear algebra for Gram matrices: Cholesky with row appends, triangular
//! solves and a symmetric eigensolver (Householder tridiagonalization followed by
//! implicit QL).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative jitter added to the diagonal when a factorization is retried.
pub const JITTER_DELTA: f64 = 1e-12;

/// Lower-triangular Cholesky factor, stored packed by rows so that appending a
/// row is a push.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor<T> {
    packed: Vec<T>,
    n: usize,
    jitter: Option<T>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CholeskyOptions {
    /// Retry once with `δ·trace/dim` added to the diagonal on failure.
    pub jitter: bool,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn check_symmetric<T: Scalar>(p: ArrayView2<'_, T>) -> Result<()> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::dim(format!("matrix is {}x{}", n, p.ncols())));
    }
    let scale = p.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let tol = T::of(1e-9) * scale.max(T::min_positive_value());
    for i in 0..n {
        for j in 0..i {
            if (p[[i, j]] - p[[j, i]]).abs() > tol {
                return Err(Error::arg(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

impl<T: Scalar> CholeskyFactor<T> {
    /// Factor of the 0×0 matrix; the starting point for appends.
    pub fn empty() -> Self {
        Self {
            packed: Vec::new(),
            n: 0,
            jitter: None,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Diagonal shift applied during factorization, if any.
    pub fn jitter(&self) -> Option<T> {
        self.jitter
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.packed[row_start(i)..row_start(i + 1)]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if j > i {
            T::zero()
        } else {
            self.packed[row_start(i) + j]
        }
    }

    pub fn diag(&self) -> Array1<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `(max L_ii / min L_ii)²`, a cheap conditioning proxy for `L Lᵀ`.
    pub fn condition_proxy(&self) -> T {
        let d = self.diag();
        if d.is_empty() {
            return T::one();
        }
        let hi = d.iter().fold(T::zero(), |a, &v| a.max(v));
        let lo = d.iter().fold(T::infinity(), |a, &v| a.min(v));
        let r = hi / lo;
        r * r
    }

    pub fn to_matrix(&self) -> Array2<T> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.get(i, j))
    }

    /// Factor of `P`. Fails with the index of the first non-positive pivot.
    pub fn factor(p: ArrayView2<'_, T>, opts: CholeskyOptions) -> Result<Self> {
        check_symmetric(p)?;
        match Self::factor_shifted(p, T::zero()) {
            Ok(f) => Ok(f),
            Err(e) if opts.jitter && p.nrows() > 0 => {
                let n = p.nrows();
                let trace: T = (0..n).map(|i| p[[i, i]]).sum();
                let shift = T::of(JITTER_DELTA) * trace / T::of(n as f64);
                if !(shift > T::zero()) {
                    return Err(e);
                }
                let mut f = Self::factor_shifted(p, shift)?;
                f.jitter = Some(shift);
                Ok(f)
            }
            Err(e) => Err(e),
        }
    }

    fn factor_shifted(p: ArrayView2<'_, T>, shift: T) -> Result<Self> {
        let n = p.nrows();
        let mut packed = vec![T::zero(); row_start(n)];
        for i in 0..n {
            let ri = row_start(i);
            for j in 0..=i {
                let rj = row_start(j);
                let s = dot(&packed[ri..ri + j], &packed[rj..rj + j]);
                if i == j {
                    let d = p[[i, i]] + shift - s;
                    if !(d > T::zero()) || !d.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            pivot: i,
                            value: d.as_f64(),
                        });
                    }
                    packed[ri + i] = d.sqrt();
                } else {
                    packed[ri + j] = (p[[i, j]] - s) / packed[rj + j];
                }
            }
        }
        Ok(Self {
            packed,
            n,
            jitter: None,
        })
    }

    /// Factor of `[[P, b], [bᵀ, nrm2]]` from the factor of `P`.
    pub fn appended(&self, b: ArrayView1<'_, T>, nrm2: T) -> Result<Self> {
        let mut out = self.clone();
        out.append(b, nrm2)?;
        Ok(out)
    }

    /// In-place form of [`CholeskyFactor::appended`]; leaves `self` untouched on error.
    pub fn append(&mut self, b: ArrayView1<'_, T>, nrm2: T) -> Result<()> {
        let s = self.forward_solve(b)?;
        let d = nrm2 - s.dot(&s);
        self.push_row(s.view(), d)
    }

    /// Appends `[sᵀ, √schur]` where `s = L⁻¹b` was already computed by the caller.
    pub fn push_row(&mut self, s: ArrayView1<'_, T>, schur: T) -> Result<()> {
        if s.len() != self.n {
            return Err(Error::dim(format!(
                "append row has length {}, factor size is {}",
                s.len(),
                self.n
            )));
        }
        if !(schur > T::zero()) || !schur.is_finite() {
            return Err(Error::DegenerateAppend(schur.as_f64()));
        }
        self.packed.extend(s.iter().copied());
        self.packed.push(schur.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Solves `L s = y`.
    pub fn forward_solve(&self, y: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if y.len() != self.n {
            return Err(Error::dim(format!(
                "rhs has length {}, factor size is {}",
                y.len(),
                self.n
            )));
        }
        let mut s = y.to_vec();
        for i in 0..self.n {
            let r = self.row(i);
            let acc = dot(&r[..i], &s[..i]);
            s[i] = (s[i] - acc) / r[i];
        }
        Ok(Array1::from(s))
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward_solve(&self, y: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if y.len() != self.n {
            return Err(Error::dim(format!(
                "rhs has length {}, factor size is {}",
                y.len(),
                self.n
            )));
        }
        let mut x = y.to_vec();
        for i in (0..self.n).rev() {
            let r = self.row(i);
            x[i] /= r[i];
            let xi = x[i];
            for (xk, &l) in x[..i].iter_mut().zip(&r[..i]) {
                *xk -= l * xi;
            }
        }
        Ok(Array1::from(x))
    }

    /// Solves `L Lᵀ z = y`.
    pub fn solve(&self, y: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let s = self.forward_solve(y)?;
        self.backward_solve(s.view())
    }

    /// Column-by-column [`CholeskyFactor::solve`] for a matrix right-hand side.
    pub fn solve_mat(&self, y: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if y.nrows() != self.n {
            return Err(Error::dim(format!(
                "rhs has {} rows, factor size is {}",
                y.nrows(),
                self.n
            )));
        }
        let mut out = Array2::zeros(y.raw_dim());
        for (c, col) in y.columns().into_iter().enumerate() {
            let z = self.solve(col)?;
            out.column_mut(c).assign(&z);
        }
        Ok(out)
    }
}

/// Factor of a symmetric positive definite matrix.
pub fn cholesky<T: Scalar>(
    p: ArrayView2<'_, T>,
    opts: CholeskyOptions,
) -> Result<CholeskyFactor<T>> {
    CholeskyFactor::factor(p, opts)
}

/// Symmetric eigendecomposition `P = U diag(λ) Uᵀ`, eigenvalues in descending
/// order, eigenvectors in the columns of `U`.
pub fn sym_eig<T: Scalar>(p: ArrayView2<'_, T>) -> Result<(Array1<T>, Array2<T>)> {
    check_symmetric(p)?;
    let n = p.nrows();
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let mut v: Vec<T> = p.iter().copied().collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.iter().map(|&i| d[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| v[r * n + order[c]]);
    Ok((vals, vecs))
}

// Householder reduction to tridiagonal form. `v` is row-major n×n.
fn tred2<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let z = T::zero();
    let at = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = z;
        let mut h = z;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == z {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = z;
                v[at(j, i)] = z;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > z {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = z;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = z;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = z;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = T::one();
        let h = d[i + 1];
        if h != z {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = z;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = z;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = z;
    }
    v[at(n - 1, n - 1)] = T::one();
    e[0] = z;
}

// Implicit QL on the tridiagonal matrix, accumulating rotations into `v`.
fn tql2<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    let z = T::zero();
    let one = T::one();
    let two = T::of(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = z;
    let mut f = z;
    let mut tst1 = z;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Rank(format!("eigenvalue {l} did not converge")));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < z {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = z;
                let mut s2 = z;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let row = k * n;
                        h = v[row + i + 1];
                        v[row + i + 1] = s * v[row + i] + c * h;
                        v[row + i] = c * v[row + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = z;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_p() -> Array2<f64> {
        array![[9., 1., 1.], [1., 3., 1.], [1., 1., 3.]]
    }

    #[test]
    fn toy_cholesky() {
        let f = cholesky(toy_p().view(), CholeskyOptions::default()).unwrap();
        assert_eq!(f.get(0, 0), 3.0);
        let l = f.to_matrix();
        let rec = l.dot(&l.t());
        for (a, b) in rec.iter().zip(toy_p().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let i = Array2::<f64>::eye(4);
        assert_eq!(
            cholesky(i.view(), CholeskyOptions::default())
                .unwrap()
                .to_matrix(),
            i
        );
    }

    #[test]
    fn indefinite_rejected() {
        let p = array![[1., 2.], [2., 1.]];
        match cholesky(p.view(), CholeskyOptions::default()) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
        let asym = array![[1., 2.], [0., 1.]];
        assert!(matches!(
            cholesky(asym.view(), CholeskyOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn jitter_is_reported() {
        let p = array![[1., 1.], [1., 1.]];
        assert!(cholesky(p.view(), CholeskyOptions::default()).is_err());
        let f = cholesky(p.view(), CholeskyOptions { jitter: true }).unwrap();
        assert_abs_diff_eq!(f.jitter().unwrap(), 1e-12, epsilon = 1e-20);
        let ok = cholesky(toy_p().view(), CholeskyOptions { jitter: true }).unwrap();
        assert!(ok.jitter().is_none());
    }

    #[test]
    fn appends_match_batch() {
        let p = toy_p();
        let mut f = CholeskyFactor::empty();
        f.append(Array1::zeros(0).view(), 9.0).unwrap();
        assert_eq!(f.get(0, 0), 3.0);
        f.append(array![1.].view(), 3.0).unwrap();
        f.append(array![1., 1.].view(), 3.0).unwrap();
        let batch = cholesky(p.view(), CholeskyOptions::default()).unwrap();
        for (a, b) in f.to_matrix().iter().zip(batch.to_matrix().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn dependent_append_is_degenerate() {
        let f = CholeskyFactor::empty()
            .appended(Array1::zeros(0).view(), 4.0)
            .unwrap();
        assert!(matches!(
            f.appended(array![4.].view(), 4.0),
            Err(Error::DegenerateAppend(_))
        ));
    }

    #[test]
    fn solves() {
        let f = cholesky(toy_p().view(), CholeskyOptions::default()).unwrap();
        let y = array![-3., 5., 3.];
        let s = f.forward_solve(y.view()).unwrap();
        let l = f.to_matrix();
        for (a, b) in l.dot(&s).iter().zip(y.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        let z = f.solve(y.view()).unwrap();
        for (a, b) in z.iter().zip([-0.588, 1.647, 0.647]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-3);
        }
        let two = CholeskyFactor::empty()
            .appended(Array1::zeros(0).view(), 4.0)
            .unwrap();
        assert_eq!(two.forward_solve(array![4.].view()).unwrap(), array![2.]);
        assert!(matches!(
            f.forward_solve(array![1.].view()),
            Err(Error::Dimension(_))
        ));
        let ym = ndarray::stack![ndarray::Axis(1), y, &y * 2.0];
        let zm = f.solve_mat(ym.view()).unwrap();
        assert_abs_diff_eq!(zm[[1, 1]], 2.0 * z[1], epsilon = 1e-12);
    }

    #[test]
    fn toy_eigenpair() {
        let (vals, vecs) = sym_eig(toy_p().view()).unwrap();
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        assert_abs_diff_eq!(vals[2], 2.0, epsilon = 1e-12);
        let u = vecs.column(2);
        assert_abs_diff_eq!(u[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], -u[2], epsilon = 1e-12);
        let rec = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (a, b) in rec.iter().zip(toy_p().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn trivial_eigenproblems() {
        let (vals, _) = sym_eig(Array2::<f64>::eye(3).view()).unwrap();
        assert_eq!(vals, array![1., 1., 1.]);
        let (vals, vecs) = sym_eig(array![[1.0f64, 0.], [0., 4.]].view()).unwrap();
        assert_eq!(vals, array![4., 1.]);
        assert_abs_diff_eq!(vecs[[1, 0]].abs(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vecs[[0, 1]].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn single_precision_factor() {
        let p = array![[4.0f32, 2.0], [2.0, 3.0]];
        let f = cholesky(p.view(), CholeskyOptions::default()).unwrap();
        let z = f.solve(array![2.0f32, 1.0].view()).unwrap();
        let r = p.dot(&z) - array![2.0f32, 1.0];
        assert!(r.iter().all(|v| v.abs() < 1e-5));
    }
}
