mod common;

use common::{close, mtensor};
use mtensor::ali::{
    ali_weights, decompose, greedy_ali, optimal_ali, projection_mse, projection_residuals, AliMode,
    AliOptions,
};
use mtensor::dense;
use mtensor::linalg::{cholesky, CholeskyOptions};
use mtensor::MTensor;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

/// Squared distance of `t` to the span of the rows of `basis`, through the
/// normal equations of the dense unfolded rows.
fn dense_distance(basis: &Array2<f64>, t: &Array1<f64>) -> f64 {
    if basis.nrows() == 0 {
        return t.dot(t);
    }
    let g = basis.dot(&basis.t());
    let b = basis.dot(t).insert_axis(ndarray::Axis(1));
    let c = dense::gauss_solve(g.view(), b.view()).unwrap();
    let proj = basis.t().dot(&c.column(0));
    let r = t - &proj;
    r.dot(&r)
}

fn relative_eps(phi: &MTensor<f64>, rel: f64) -> f64 {
    rel * phi.row_norms_sq().iter().fold(0.0f64, |a, &v| a.max(v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mse_is_bounded_by_epsilon(phi in mtensor(12, 3, 3), rel in 1e-6f64..0.5, optimal in any::<bool>()) {
        let mode = if optimal { AliMode::Optimal } else { AliMode::Greedy };
        let eps = relative_eps(&phi, rel);
        let d = decompose(&phi, eps, AliOptions { mode, ..Default::default() }).unwrap();
        prop_assert!(d.retained() <= phi.rdim());
        prop_assert!(d.retained() >= 1);
        let res = projection_residuals(&d, &phi).unwrap();
        prop_assert!(res.iter().all(|&r| r <= eps * (1.0 + 1e-9)));
        prop_assert!(projection_mse(&d, &phi).unwrap() <= eps);
        let sub = phi.select_rows(&d.indices).unwrap();
        prop_assert!(cholesky(sub.mprod(&sub).unwrap().view(), CholeskyOptions::default()).is_ok());
    }

    #[test]
    fn greedy_keeps_row_zero_in_order(phi in mtensor(12, 3, 3), rel in 1e-6f64..0.5) {
        let d = greedy_ali(&phi, relative_eps(&phi, rel), false).unwrap();
        prop_assert_eq!(d.indices[0], 0);
        prop_assert!(d.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn distances_match_dense_projection(phi in mtensor(8, 3, 3), rel in 1e-4f64..0.5) {
        let d = greedy_ali(&phi, relative_eps(&phi, rel), false).unwrap();
        let u = phi.unfold_mode1().unwrap();
        let basis = u.select(ndarray::Axis(0), &d.indices);
        let res = projection_residuals(&d, &phi).unwrap();
        for k in 0..phi.rdim() {
            let want = dense_distance(&basis, &u.row(k).to_owned());
            prop_assert!((res[k] - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn weights_reproduce_retained_rows(phi in mtensor(10, 3, 3), rel in 1e-4f64..0.5) {
        let d = greedy_ali(&phi, relative_eps(&phi, rel), true).unwrap();
        let w = ali_weights(&d, &phi).unwrap();
        let u = phi.unfold_mode1().unwrap();
        let kept = u.select(ndarray::Axis(0), &d.indices);
        let recon = w.dot(&kept);
        for &k in &d.indices {
            prop_assert!(close(&recon.row(k).to_vec(), &u.row(k).to_vec(), 1e-9));
        }
    }

    #[test]
    fn shortcut_scoring_also_respects_the_bound(phi in mtensor(10, 3, 3), rel in 1e-4f64..0.5) {
        let eps = relative_eps(&phi, rel);
        let d = optimal_ali(&phi, eps, true).unwrap();
        prop_assert!(projection_mse(&d, &phi).unwrap() <= eps);
    }
}

#[test]
fn duplicate_rows_are_dropped() {
    let core = ndarray::array![[1.0, 2.0], [1.0, 2.0], [0.5, -1.0], [1.0, 2.0]];
    let phi = MTensor::from_cores(vec![core.clone(), core]).unwrap();
    for mode in [AliMode::Greedy, AliMode::Optimal] {
        let d = decompose(
            &phi,
            1e-9,
            AliOptions {
                mode,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(d.retained(), 2, "{mode}");
    }
}

#[test]
fn non_positive_epsilon_rejected() {
    let phi = MTensor::from_cores(vec![ndarray::array![[1.0, 2.0]]]).unwrap();
    assert!(greedy_ali(&phi, 0.0, false).is_err());
    assert!(optimal_ali(&phi, -1.0, false).is_err());
}
