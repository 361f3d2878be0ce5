//! Randomized comparison of the factorized operations against the dense
//! reference implementations, plus structural invariants at toy scale.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::Serialize;

use crate::dense::{self, LstsqBranch};
use crate::error::Result;
use crate::experiments::rng;
use crate::linalg::sym_eig;
use crate::mtensor::{contract_general, DenseTensor, MTensor, Rank1Row};
use crate::regression::{fit_least_squares, FitOptions};

/// Tolerance of factorized-versus-dense agreement, relative to `max(‖ref‖∞, 1)`.
pub const ORACLE_TOL: f64 = 1e-12;
/// Tolerance of m-tensor versus dense-matrix least-squares predictions.
pub const LSTSQ_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Default)]
pub struct GroupResult {
    pub name: String,
    pub passed: usize,
    /// `"seed <s>: <what>"` per failing instance.
    pub failures: Vec<String>,
}

impl GroupResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    fn record(&mut self, seed: u64, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(format!("seed {seed}: {}", what()));
        }
    }

    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SelftestReport {
    pub instances: usize,
    pub groups: Vec<GroupResult>,
}

impl SelftestReport {
    pub fn pass(&self) -> bool {
        self.groups.iter().all(GroupResult::pass)
    }
}

pub fn random_matrix<R: Rng>(r: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-1.0..=1.0))
}

pub fn random_mtensor<R: Rng>(r: &mut R, m: usize, cdims: &[usize]) -> MTensor<f64> {
    MTensor::from_cores(cdims.iter().map(|&p| random_matrix(r, m, p)).collect())
        .expect("random cores share their row count")
}

/// Random shape with `m ≤ 6`, `n ≤ 4`, `p_j ≤ 3`.
pub fn random_shape<R: Rng>(r: &mut R) -> (usize, Vec<usize>) {
    let m = r.random_range(1..=6);
    let n = r.random_range(1..=4);
    (m, (0..n).map(|_| r.random_range(1..=3)).collect())
}

fn close(got: &[f64], want: &[f64], tol: f64) -> bool {
    if got.len() != want.len() {
        return false;
    }
    let scale = want.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    got.iter()
        .zip(want)
        .all(|(g, w)| (g - w).abs() <= tol * scale)
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

/// Dense-oracle equivalence of every m-tensor operation on `instances` random
/// problems, seeds `seed..seed+instances`.
pub fn oracle_groups(seed: u64, instances: usize) -> Vec<GroupResult> {
    let names = [
        "element",
        "row",
        "contract_r",
        "contract_c",
        "hadamard",
        "inner",
        "norm",
        "mprod",
        "mprod_row",
        "unfold_mode1",
    ];
    let mut groups: Vec<GroupResult> = names.iter().map(|n| GroupResult::new(n)).collect();
    for i in 0..instances {
        let s = seed.wrapping_add(i as u64);
        let mut r = rng(s);
        let (m, cdims) = random_shape(&mut r);
        let a = random_mtensor(&mut r, m, &cdims);
        let b = random_mtensor(&mut r, m, &cdims);
        let m2 = r.random_range(1..=6);
        let c = random_mtensor(&mut r, m2, &cdims);
        let da = dense::materialize(&a, usize::MAX).expect("toy sizes");
        let db = dense::materialize(&b, usize::MAX).expect("toy sizes");
        let dc = dense::materialize(&c, usize::MAX).expect("toy sizes");
        let width: usize = cdims.iter().product();

        // element
        let got: Vec<f64> = (0..da.data().len())
            .map(|off| {
                let idx = da.unravel(off);
                a.element(idx[0], &idx[1..]).expect("in range")
            })
            .collect();
        groups[0].record(s, close(&got, da.data(), ORACLE_TOL), || "element".into());

        // row
        let k = r.random_range(0..m);
        let got = a.row(k).expect("in range").to_dense_vec();
        let want = &da.data()[k * width..(k + 1) * width];
        groups[1].record(s, close(&got, want, ORACLE_TOL), || format!("row {k}"));

        groups[2].record(
            s,
            close(
                &a.contract_r().to_vec(),
                &dense::contract_r(&da),
                ORACLE_TOL,
            ),
            || "contract_r".into(),
        );
        groups[3].record(
            s,
            close(
                a.contract_c().expect("toy sizes").data(),
                &dense::contract_c(&da),
                ORACLE_TOL,
            ),
            || "contract_c".into(),
        );
        let h = dense::materialize(&a.hadamard(&b).expect("same shape"), usize::MAX).expect("toy");
        let hd = dense::hadamard(&da, &db).expect("same shape");
        groups[4].record(s, close(h.data(), hd.data(), ORACLE_TOL), || {
            "hadamard".into()
        });
        groups[5].record(
            s,
            close(
                &[a.inner(&b).expect("same shape")],
                &[dense::inner(&da, &db).expect("same shape")],
                ORACLE_TOL,
            ),
            || "inner".into(),
        );
        groups[6].record(
            s,
            close(&[a.norm()], &[dense::norm(&da)], ORACLE_TOL),
            || "norm".into(),
        );
        let mp = a.mprod(&c).expect("same cdims");
        let md = dense::mprod(&da, &dc).expect("same cdims");
        groups[7].record(s, close(&flat(&mp), &flat(&md), ORACLE_TOL), || {
            "mprod".into()
        });
        let row = c.row(r.random_range(0..m2)).expect("in range");
        let got = a.mprod_row(&row).expect("same cdims").to_vec();
        let want = dense::mprod_row(&row.to_dense_vec(), &da).expect("same width");
        groups[8].record(s, close(&got, &want, ORACLE_TOL), || "mprod_row".into());
        let u = a.unfold_mode1().expect("toy sizes");
        let fs = dense::face_splitting(a.cores(), usize::MAX).expect("toy sizes");
        groups[9].record(s, u == fs && close(&flat(&u), da.data(), 0.0), || {
            "unfold_mode1".into()
        });
    }
    groups
}

/// m-tensor least squares versus dense pseudoinverse predictions at random
/// rank-1 query points, on well-conditioned random problems.
pub fn lstsq_group(seed: u64, instances: usize) -> GroupResult {
    let mut g = GroupResult::new("lstsq_prediction");
    let mut i = 0u64;
    let mut done = 0;
    while done < instances {
        let s = seed.wrapping_add(i);
        i += 1;
        let mut r = rng(s);
        let n = r.random_range(1..=3);
        let cdims: Vec<usize> = (0..n).map(|_| r.random_range(1..=3)).collect();
        let width: usize = cdims.iter().product();
        let m = r.random_range(1..=6usize.min(width));
        let phi = random_mtensor(&mut r, m, &cdims);
        let p = phi.mprod(&phi).expect("same cdims");
        let (vals, _) = sym_eig(p.view()).expect("symmetric");
        if !(vals[m - 1] > 1e-6 * vals[0]) {
            continue;
        }
        done += 1;
        let y: Array1<f64> = (0..m).map(|_| r.random_range(-1.0..=1.0)).collect();
        let y2 = y.clone().insert_axis(ndarray::Axis(1));
        let sol = match fit_least_squares(&phi, y2.view(), FitOptions::default()) {
            Ok(sol) => sol,
            Err(e) => {
                g.record(s, false, || format!("fit failed: {e}"));
                continue;
            }
        };
        let u = dense::face_splitting(phi.cores(), usize::MAX).expect("toy sizes");
        let c = match dense::dense_lstsq(u.view(), y.view(), LstsqBranch::Rows) {
            Ok(c) => c,
            Err(e) => {
                g.record(s, false, || format!("dense solve failed: {e}"));
                continue;
            }
        };
        let q = Rank1Row::new(
            cdims
                .iter()
                .map(|&p| (0..p).map(|_| r.random_range(-2.0..=2.0)).collect())
                .collect(),
        )
        .expect("non-empty");
        let fast = phi.mprod_row(&q).expect("same cdims").dot(&sol.z.column(0));
        let slow: f64 = q
            .to_dense_vec()
            .iter()
            .zip(c.iter())
            .map(|(a, b)| a * b)
            .sum();
        g.record(s, close(&[fast], &[slow], LSTSQ_TOL), || {
            format!("prediction {fast} vs {slow}")
        });
    }
    g
}

/// Structural identities: unfolding rows, Gram symmetry and semidefiniteness,
/// `mprod` through the unfoldings, rank-1 contraction factorization.
pub fn invariant_groups(seed: u64, instances: usize) -> Vec<GroupResult> {
    let mut rows = GroupResult::new("unfolding_rows");
    let mut gram = GroupResult::new("gram_psd");
    let mut via = GroupResult::new("mprod_via_unfolding");
    let mut rank1 = GroupResult::new("rank1_contraction");
    for i in 0..instances {
        let s = seed.wrapping_add(i as u64);
        let mut r = rng(s);
        let (m, cdims) = random_shape(&mut r);
        let a = random_mtensor(&mut r, m, &cdims);
        let u = a.unfold_mode1().expect("toy sizes");
        let ok = (0..m).all(|k| u.row(k).to_vec() == a.row(k).expect("in range").to_dense_vec());
        rows.record(s, ok, || "unfolding row differs from flattened row".into());

        let p = a.mprod(&a).expect("same cdims");
        let sym = (0..m).all(|x| (0..m).all(|y| p[[x, y]] == p[[y, x]]));
        let trace: f64 = p.diag().sum();
        let (vals, _) = sym_eig(p.view()).expect("symmetric");
        let psd = vals.iter().all(|&v| v >= -1e-10 * trace.max(1.0));
        gram.record(s, sym && psd, || format!("min eigenvalue {}", vals[m - 1]));

        let mb = r.random_range(1..=6);
        let b = random_mtensor(&mut r, mb, &cdims);
        let ub = b.unfold_mode1().expect("toy sizes");
        let want = u.dot(&ub.t());
        let got = a.mprod(&b).expect("same cdims");
        via.record(s, close(&flat(&got), &flat(&want), ORACLE_TOL), || {
            "mprod differs from unfolded product".into()
        });

        let factors: Vec<Array1<f64>> = cdims
            .iter()
            .map(|&p| (0..p).map(|_| r.random_range(-1.0..=1.0)).collect())
            .collect();
        let expected: f64 = factors.iter().map(|f| f.sum()).product();
        let row = Rank1Row::new(factors).expect("non-empty");
        let d = DenseTensor::from_vec(cdims.clone(), row.to_dense_vec()).expect("sizes match");
        let axes: Vec<usize> = (0..cdims.len()).collect();
        let total = contract_general(&d, &axes).expect("valid axes").data()[0];
        rank1.record(s, close(&[total], &[expected], ORACLE_TOL), || {
            format!("{total} vs {expected}")
        });
    }
    vec![rows, gram, via, rank1]
}

/// The whole suite.
pub fn run(seed: u64, instances: usize) -> Result<SelftestReport> {
    let mut groups = oracle_groups(seed, instances);
    groups.push(lstsq_group(seed, instances));
    groups.extend(invariant_groups(seed, instances));
    Ok(SelftestReport { instances, groups })
}
