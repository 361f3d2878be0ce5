#![allow(dead_code)]

use mtensor::MTensor;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

/// Relative closeness with the scale floored at one.
pub fn close(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && {
        let scale = want.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        got.iter()
            .zip(want)
            .all(|(g, w)| (g - w).abs() <= tol * scale)
    }
}

pub fn cores_from(m: usize, cdims: &[usize], vals: &[f64]) -> MTensor<f64> {
    let mut off = 0;
    let cores = cdims
        .iter()
        .map(|&p| {
            let c = Array2::from_shape_vec((m, p), vals[off..off + m * p].to_vec()).unwrap();
            off += m * p;
            c
        })
        .collect();
    MTensor::from_cores(cores).unwrap()
}

/// Random m-tensor with `m ≤ max_m`, `n ≤ max_n`, `p_j ≤ max_p`, entries in `[−1, 1]`.
pub fn mtensor(max_m: usize, max_n: usize, max_p: usize) -> impl Strategy<Value = MTensor<f64>> {
    (1..=max_m, prop::collection::vec(1..=max_p, 1..=max_n)).prop_flat_map(|(m, cdims)| {
        let total: usize = cdims.iter().map(|p| p * m).sum();
        prop::collection::vec(-1.0f64..=1.0, total).prop_map(move |v| cores_from(m, &cdims, &v))
    })
}

/// Two m-tensors with the same c-dims; row counts may differ.
pub fn mtensor_pair(same_rows: bool) -> impl Strategy<Value = (MTensor<f64>, MTensor<f64>)> {
    (
        1..=6usize,
        1..=6usize,
        prop::collection::vec(1..=3usize, 1..=4),
    )
        .prop_flat_map(move |(ma, mb, cdims)| {
            let mb = if same_rows { ma } else { mb };
            let w: usize = cdims.iter().sum();
            (
                prop::collection::vec(-1.0f64..=1.0, ma * w),
                prop::collection::vec(-1.0f64..=1.0, mb * w),
            )
                .prop_map(move |(a, b)| (cores_from(ma, &cdims, &a), cores_from(mb, &cdims, &b)))
        })
}

pub fn vector(len: usize) -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(-1.0f64..=1.0, len).prop_map(Array1::from)
}

pub fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}
