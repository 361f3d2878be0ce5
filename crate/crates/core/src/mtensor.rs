//! The m-tensor format: an order-(n+1) tensor `Φ ∈ R^{m×p_1×…×p_n}` stored as
//! `n` core matrices `Ψ_j ∈ R^{m×p_j}` that share their row count, with
//!
//! ```text
//! Φ[k, i_1, …, i_n] = Π_j Ψ_j[k, i_j]
//! ```
//!
//! Row `k` of an m-tensor is the rank-1 tensor `⊗_j Ψ_j[k, :]`. Every operation
//! here works on the cores directly, so the cost depends on `Σ_j p_j` and never on
//! `Π_j p_j`. The two operations that must materialize a dense result
//! ([`MTensor::contract_c`], [`MTensor::unfold_mode1`]) are guarded by a cap.
//!
//! Dense flattening order is always row-major over the multi-index: `i_1`
//! varies slowest and `i_n` fastest.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default upper bound on the number of entries a dense materialization may produce.
pub const DEFAULT_DENSE_CAP: usize = 1_000_000;

/// Factorized m-tensor. Cloning and transposing share the core storage.
#[derive(Debug, Clone)]
pub struct MTensor<T> {
    cores: Arc<Vec<Array2<T>>>,
    transposed: bool,
}

/// One row of an m-tensor: the rank-1 tensor `⊗_j factors[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Row<T> {
    pub factors: Vec<Array1<T>>,
}

/// Dense tensor with row-major (first axis slowest) storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn checked_product(dims: impl IntoIterator<Item = usize>) -> Option<usize> {
    dims.into_iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(d))
}

fn ensure_cap(requested: Option<usize>, cap: usize) -> Result<usize> {
    match requested {
        Some(n) if n <= cap => Ok(n),
        Some(n) => Err(Error::Capacity { requested: n, cap }),
        None => Err(Error::Capacity {
            requested: usize::MAX,
            cap,
        }),
    }
}

impl<T: Scalar> MTensor<T> {
    /// Wraps a sequence of cores. All cores must be non-empty and share a row count.
    pub fn from_cores(cores: Vec<Array2<T>>) -> Result<Self> {
        let first = cores
            .first()
            .ok_or_else(|| Error::arg("an m-tensor needs at least one core"))?;
        let m = first.nrows();
        if m == 0 {
            return Err(Error::arg("cores must have at least one row"));
        }
        for (j, c) in cores.iter().enumerate() {
            if c.nrows() != m {
                return Err(Error::dim(format!(
                    "core {j} has {} rows, core 0 has {m}",
                    c.nrows()
                )));
            }
            if c.ncols() == 0 {
                return Err(Error::arg(format!("core {j} has no columns")));
            }
        }
        Ok(Self {
            cores: Arc::new(cores),
            transposed: false,
        })
    }

    /// Shared row count `m`.
    pub fn rdim(&self) -> usize {
        self.cores[0].nrows()
    }

    /// Column counts `[p_1, …, p_n]` in core order.
    pub fn cdims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.ncols()).collect()
    }

    /// Number of cores `n`.
    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Array2<T>] {
        &self.cores
    }

    pub fn core(&self, j: usize) -> ArrayView2<'_, T> {
        self.cores[j].view()
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    /// Axis reversal. Only the role flag changes; the cores are shared.
    pub fn transpose(&self) -> Self {
        Self {
            cores: Arc::clone(&self.cores),
            transposed: !self.transposed,
        }
    }

    /// Logical shape: `[m, p_1, …, p_n]`, or `[p_n, …, p_1, m]` when transposed.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.order() + 1);
        s.push(self.rdim());
        s.extend(self.cdims());
        if self.transposed {
            s.reverse();
        }
        s
    }

    /// `Π_j Ψ_j[k, idx[j]]`, with `(k, idx)` given in untransposed order.
    pub fn element(&self, k: usize, idx: &[usize]) -> Result<T> {
        if k >= self.rdim() {
            return Err(Error::index(format!("row {k} >= rdim {}", self.rdim())));
        }
        if idx.len() != self.order() {
            return Err(Error::index(format!(
                "multi-index has {} entries, tensor has {} cores",
                idx.len(),
                self.order()
            )));
        }
        let mut acc = T::one();
        for (j, (&i, core)) in idx.iter().zip(self.cores.iter()).enumerate() {
            if i >= core.ncols() {
                return Err(Error::index(format!(
                    "index {i} on core {j} of width {}",
                    core.ncols()
                )));
            }
            acc *= core[[k, i]];
        }
        Ok(acc)
    }

    /// Element lookup with a full index in the tensor's logical axis order.
    pub fn element_at(&self, index: &[usize]) -> Result<T> {
        if index.len() != self.order() + 1 {
            return Err(Error::index(format!(
                "expected {} indices, got {}",
                self.order() + 1,
                index.len()
            )));
        }
        if self.transposed {
            let (k, rest) = index.split_last().expect("non-empty index");
            let idx: Vec<usize> = rest.iter().rev().copied().collect();
            self.element(*k, &idx)
        } else {
            self.element(index[0], &index[1..])
        }
    }

    pub fn row(&self, k: usize) -> Result<Rank1Row<T>> {
        if k >= self.rdim() {
            return Err(Error::index(format!("row {k} >= rdim {}", self.rdim())));
        }
        Ok(Rank1Row {
            factors: self.cores.iter().map(|c| c.row(k).to_owned()).collect(),
        })
    }

    /// Sub-tensor made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::arg("row selection is empty"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rdim()) {
            return Err(Error::index(format!("row {bad} >= rdim {}", self.rdim())));
        }
        let cores = self
            .cores
            .iter()
            .map(|c| c.select(ndarray::Axis(0), rows))
            .collect();
        Self::from_cores(cores)
    }

    /// Squared norm of every row: `Π_j ‖Ψ_j[k, :]‖²`.
    pub fn row_norms_sq(&self) -> Array1<T> {
        let mut out = Array1::from_elem(self.rdim(), T::one());
        for core in self.cores.iter() {
            Zip::from(&mut out)
                .and(core.rows())
                .for_each(|o, r| *o *= r.dot(&r));
        }
        out
    }

    /// r-dim contraction: entry `k` is the sum of all entries of row `k`,
    /// i.e. `Π_j Σ_i Ψ_j[k, i]`. Cost `O(m·Σ p_j)`.
    pub fn contract_r(&self) -> Array1<T> {
        let mut out = Array1::from_elem(self.rdim(), T::one());
        for core in self.cores.iter() {
            Zip::from(&mut out)
                .and(core.rows())
                .for_each(|o, r| *o *= r.sum());
        }
        out
    }

    /// c-dim contraction with the default cap.
    pub fn contract_c(&self) -> Result<DenseTensor<T>> {
        self.contract_c_capped(DEFAULT_DENSE_CAP)
    }

    /// c-dim contraction `Σ_k Φ[k, …]`. This is `O(m·Π p_j)`.
    pub fn contract_c_capped(&self, cap: usize) -> Result<DenseTensor<T>> {
        let weights = Array1::from_elem(self.rdim(), T::one());
        self.weighted_contract_c(weights.view(), cap)
    }

    /// `Σ_k w_k Φ[k, …]`, the dense coefficient tensor of a dual expansion.
    pub fn weighted_contract_c(&self, w: ArrayView1<'_, T>, cap: usize) -> Result<DenseTensor<T>> {
        if w.len() != self.rdim() {
            return Err(Error::dim(format!(
                "weights have length {}, rdim is {}",
                w.len(),
                self.rdim()
            )));
        }
        let cdims = self.cdims();
        let size = ensure_cap(checked_product(cdims.iter().copied()), cap)?;
        let mut data = vec![T::zero(); size];
        let mut row_buf = vec![T::zero(); size];
        for k in 0..self.rdim() {
            self.write_row_kron(k, &mut row_buf);
            let wk = w[k];
            for (d, &r) in data.iter_mut().zip(&row_buf) {
                *d += wk * r;
            }
        }
        DenseTensor::from_vec(cdims, data)
    }

    /// Mode-1 unfolding (the face-splitting product of the cores) with the default cap.
    pub fn unfold_mode1(&self) -> Result<Array2<T>> {
        self.unfold_mode1_capped(DEFAULT_DENSE_CAP)
    }

    pub fn unfold_mode1_capped(&self, cap: usize) -> Result<Array2<T>> {
        let cols = checked_product(self.cdims());
        let total = cols.and_then(|c| c.checked_mul(self.rdim()));
        ensure_cap(total, cap)?;
        let cols = cols.expect("checked above");
        let mut out = Array2::zeros((self.rdim(), cols));
        let mut buf = vec![T::zero(); cols];
        for k in 0..self.rdim() {
            self.write_row_kron(k, &mut buf);
            out.row_mut(k)
                .iter_mut()
                .zip(&buf)
                .for_each(|(o, &b)| *o = b);
        }
        Ok(out)
    }

    /// Kronecker product of the k-th core rows into `buf` (len = Π p_j).
    fn write_row_kron(&self, k: usize, buf: &mut [T]) {
        let mut len = 1usize;
        buf[0] = T::one();
        for core in self.cores.iter() {
            let p = core.ncols();
            let row = core.row(k);
            // Expand in place from the back so earlier cores vary slowest.
            for a in (0..len).rev() {
                let v = buf[a];
                for (b, &r) in row.iter().enumerate().rev() {
                    buf[a * p + b] = v * r;
                }
            }
            len *= p;
        }
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.rdim() != other.rdim() || self.cdims() != other.cdims() {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    fn check_same_cdims(&self, other: &Self, what: &str) -> Result<()> {
        if self.cdims() != other.cdims() {
            return Err(Error::dim(format!(
                "{what}: cdims {:?} and {:?} differ",
                self.cdims(),
                other.cdims()
            )));
        }
        Ok(())
    }

    /// Element-wise product, computed core by core in `O(m·Σ p_j)`.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "hadamard")?;
        let cores = self
            .cores
            .iter()
            .zip(other.cores.iter())
            .map(|(a, b)| a * b)
            .collect();
        Self::from_cores(cores)
    }

    /// Frobenius inner product `Σ_k Π_j ⟨Ψ^A_j[k], Ψ^B_j[k]⟩`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "inner")?;
        let mut per_row = Array1::from_elem(self.rdim(), T::one());
        for (a, b) in self.cores.iter().zip(other.cores.iter()) {
            Zip::from(&mut per_row)
                .and(a.rows())
                .and(b.rows())
                .for_each(|o, ra, rb| *o *= ra.dot(&rb));
        }
        Ok(per_row.sum())
    }

    pub fn norm(&self) -> T {
        self.row_norms_sq().sum().sqrt()
    }

    /// m-product `A ⋉ Bᵀ = ⊙_j Ψ^A_j (Ψ^B_j)ᵀ`, shape `rdim(A) × rdim(B)`.
    ///
    /// Both operands contribute their rows; the c-dims are always the contracted
    /// axes, so the transposition flag of either operand does not change the result.
    pub fn mprod(&self, other: &Self) -> Result<Array2<T>> {
        self.check_same_cdims(other, "mprod")?;
        let mut out = Array2::from_elem((self.rdim(), other.rdim()), T::one());
        for (a, b) in self.cores.iter().zip(other.cores.iter()) {
            let g = a.dot(&b.t());
            out *= &g;
        }
        Ok(out)
    }

    /// `r ⋉ Bᵀ`: entry `l` is `Π_j ⟨r.factors[j], Ψ^B_j[l]⟩`. Cost `O(m·Σ p_j)`.
    pub fn mprod_row(&self, r: &Rank1Row<T>) -> Result<Array1<T>> {
        let mut out = Array1::zeros(self.rdim());
        self.mprod_row_into(r, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`MTensor::mprod_row`] for hot loops.
    pub fn mprod_row_into(&self, r: &Rank1Row<T>, out: &mut Array1<T>) -> Result<()> {
        if r.dims() != self.cdims() {
            return Err(Error::dim(format!(
                "row dims {:?} do not match cdims {:?}",
                r.dims(),
                self.cdims()
            )));
        }
        if out.len() != self.rdim() {
            return Err(Error::dim("output buffer length differs from rdim"));
        }
        out.fill(T::one());
        for (f, core) in r.factors.iter().zip(self.cores.iter()) {
            let f = f.as_slice().expect("owned rank-1 factors are contiguous");
            match core.as_slice() {
                Some(flat) => {
                    let p = f.len();
                    for (o, crow) in out.iter_mut().zip(flat.chunks_exact(p)) {
                        let mut d = T::zero();
                        for (&a, &b) in crow.iter().zip(f) {
                            d += a * b;
                        }
                        *o *= d;
                    }
                }
                None => {
                    Zip::from(&mut *out).and(core.rows()).for_each(|o, crow| {
                        *o *= crow.iter().zip(f).fold(T::zero(), |d, (&a, &b)| d + a * b)
                    });
                }
            }
        }
        Ok(())
    }

    /// Scales core `j` by `alpha` (and so the whole tensor by `alpha`).
    pub fn scale_core(&self, j: usize, alpha: T) -> Result<Self> {
        if j >= self.order() {
            return Err(Error::index(format!("core {j} >= order {}", self.order())));
        }
        let mut cores = (*self.cores).clone();
        cores[j].mapv_inplace(|v| v * alpha);
        Self::from_cores(cores)
    }
}

impl<T: Scalar> Rank1Row<T> {
    pub fn new(factors: Vec<Array1<T>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::arg("a rank-1 row needs at least one factor"));
        }
        Ok(Self { factors })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.len()).collect()
    }

    pub fn norm_sq(&self) -> T {
        self.factors
            .iter()
            .map(|f| f.dot(f))
            .fold(T::one(), |a, b| a * b)
    }

    /// Single-row m-tensor view of this rank-1 tensor.
    pub fn to_mtensor(&self) -> Result<MTensor<T>> {
        let cores = self
            .factors
            .iter()
            .map(|f| f.clone().insert_axis(ndarray::Axis(0)))
            .collect();
        MTensor::from_cores(cores)
    }

    /// Dense flattening, first factor slowest.
    pub fn to_dense_vec(&self) -> Vec<T> {
        let mut out = vec![T::one()];
        for f in &self.factors {
            let mut next = Vec::with_capacity(out.len() * f.len());
            for &a in &out {
                next.extend(f.iter().map(|&b| a * b));
            }
            out = next;
        }
        out
    }
}

impl<T: Scalar> DenseTensor<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = checked_product(shape.iter().copied())
            .ok_or_else(|| Error::arg("dense tensor size overflows"))?;
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.shape.len()];
        for a in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.shape[a + 1];
        }
        strides
    }

    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() {
            return Err(Error::index(format!(
                "index of length {} for tensor of order {}",
                idx.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for ((&i, &n), s) in idx.iter().zip(&self.shape).zip(self.strides()) {
            if i >= n {
                return Err(Error::index(format!("index {i} on axis of extent {n}")));
            }
            off += i * s;
        }
        Ok(off)
    }

    pub fn get(&self, idx: &[usize]) -> Result<T> {
        Ok(self.data[self.offset(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], v: T) -> Result<()> {
        let off = self.offset(idx)?;
        self.data[off] = v;
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Multi-index of a flat offset.
    pub fn unravel(&self, mut off: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for a in (0..self.shape.len()).rev() {
            idx[a] = off % self.shape[a];
            off /= self.shape[a];
        }
        idx
    }
}

/// Sums a dense tensor over the given axes. The remaining axes keep their order;
/// contracting every axis yields an order-0 tensor holding one value.
pub fn contract_general<T: Scalar>(t: &DenseTensor<T>, axes: &[usize]) -> Result<DenseTensor<T>> {
    let order = t.order();
    let mut drop = vec![false; order];
    for &a in axes {
        if a >= order {
            return Err(Error::index(format!("axis {a} on tensor of order {order}")));
        }
        if drop[a] {
            return Err(Error::arg(format!("axis {a} listed twice")));
        }
        drop[a] = true;
    }
    let kept: Vec<usize> = (0..order).filter(|&a| !drop[a]).collect();
    let out_shape: Vec<usize> = kept.iter().map(|&a| t.shape[a]).collect();
    let mut out = DenseTensor::zeros(out_shape);
    let out_strides = out.strides();
    for (off, &v) in t.data.iter().enumerate() {
        let idx = t.unravel(off);
        let o: usize = kept
            .iter()
            .zip(&out_strides)
            .map(|(&a, &s)| idx[a] * s)
            .sum();
        out.data[o] += v;
    }
    Ok(out)
}
