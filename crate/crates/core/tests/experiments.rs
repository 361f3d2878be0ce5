use mtensor::experiments::{
    lhs_sample, loglog_slope, relative_error, rosenbrock, run_rosenbrock, run_toy,
    ExperimentReport, KuramotoConfig, LorenzConfig, RosenbrockConfig,
};
use mtensor::io::{load_model, read_report, save_model, write_report};
use mtensor::regression::{FitOptions, RegressionModel, Regularizer};
use ndarray::array;
use proptest::prelude::*;

#[test]
fn rosenbrock_values() {
    assert_eq!(rosenbrock(array![1.0, 1.0, 1.0, 1.0].view()).unwrap(), 0.0);
    assert_eq!(rosenbrock(array![0.0, 0.0].view()).unwrap(), 1.0);
    assert_eq!(rosenbrock(array![1.0, 2.0].view()).unwrap(), 100.0);
    assert!(rosenbrock(array![1.0].view()).is_err());
}

#[test]
fn relative_error_values() {
    let t = [3.0, 4.0];
    assert_eq!(relative_error(&t, &t).unwrap(), 0.0);
    assert_eq!(relative_error(&t, &[0.0, 0.0]).unwrap(), 1.0);
    assert!(relative_error(&[0.0, 0.0], &t).is_err());
}

proptest! {
    #[test]
    fn relative_error_is_scale_invariant(
        v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20),
        alpha in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
    ) {
        let t: Vec<f64> = v.iter().map(|p| p.0).collect();
        let a: Vec<f64> = v.iter().map(|p| p.1).collect();
        prop_assume!(t.iter().any(|x| *x != 0.0));
        let e = relative_error(&t, &a).unwrap();
        let ts: Vec<f64> = t.iter().map(|x| x * alpha).collect();
        let as_: Vec<f64> = a.iter().map(|x| x * alpha).collect();
        prop_assert!((relative_error(&ts, &as_).unwrap() - e).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn lhs_fills_every_stratum_once(m in 1..60usize, n in 1..5usize, seed in any::<u64>()) {
        let bounds = vec![(-5.0, 10.0); n];
        let x = lhs_sample(m, &bounds, seed).unwrap();
        for a in 0..n {
            let mut seen = vec![false; m];
            for k in 0..m {
                let s = (((x[[k, a]] + 5.0) / 15.0) * m as f64).floor() as usize;
                prop_assert!(s < m && !seen[s]);
                seen[s] = true;
            }
        }
    }
}

#[test]
fn slope_of_a_power_law() {
    let xs = [20.0, 50.0, 100.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3e-6 * x.powf(1.3)).collect();
    assert!((loglog_slope(&xs, &ys).unwrap() - 1.3).abs() < 1e-12);
}

#[test]
fn toy_checks_pass() {
    let r = run_toy().unwrap();
    for c in &r.checks {
        assert!(c.pass, "{}: {:?} vs {:?}", c.name, c.expected, c.got);
    }
}

fn small_config() -> RosenbrockConfig {
    RosenbrockConfig {
        n: 12,
        alpha: 10,
        repeats: 2,
        timing_samples: 10,
        seed: 42,
        ..Default::default()
    }
}

fn strip_timings(mut r: ExperimentReport) -> ExperimentReport {
    r.timings = Default::default();
    if let Some(runs) = r.details.get_mut("repeats").and_then(|v| v.as_array_mut()) {
        for run in runs {
            let obj = run.as_object_mut().unwrap();
            obj.retain(|k, _| !k.ends_with("seconds") && !k.ends_with("per_sample"));
        }
    }
    r
}

#[test]
fn rosenbrock_is_reproducible_and_round_trips() {
    let cfg = small_config();
    let a = run_rosenbrock(&cfg).unwrap();
    let b = run_rosenbrock(&cfg).unwrap();
    assert_eq!(a.model.m, 120);
    assert_eq!(strip_timings(a.clone()), strip_timings(b));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    write_report(&path, &a).unwrap();
    assert_eq!(read_report(&path).unwrap(), a);
}

#[test]
fn tikhonov_zero_report_equals_least_squares() {
    let ls = run_rosenbrock(&small_config()).unwrap();
    let tk = run_rosenbrock(&RosenbrockConfig {
        regularizer: Regularizer::Tikhonov { lambda: 0.0 },
        ..small_config()
    })
    .unwrap();
    assert!((ls.errors.train_rel_l2 - tk.errors.train_rel_l2).abs() < 1e-10);
    let (a, b) = (
        ls.errors.test_rel_l2.unwrap(),
        tk.errors.test_rel_l2.unwrap(),
    );
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn saved_models_predict_identically() {
    let cfg = small_config();
    let x = lhs_sample(cfg.m(), &vec![(cfg.lower, cfg.upper); cfg.n], 1).unwrap();
    let y = x
        .rows()
        .into_iter()
        .map(|r| rosenbrock(r).unwrap())
        .collect::<ndarray::Array1<f64>>();
    let y = y.insert_axis(ndarray::Axis(1));
    let reg = Regularizer::Ali {
        epsilon: 1e-20,
        mode: mtensor::ali::AliMode::Greedy,
    };
    let model = RegressionModel::fit(
        x.view(),
        y.view(),
        cfg.maps().unwrap(),
        reg,
        FitOptions::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let back: RegressionModel<f64> = load_model(&path).unwrap();
    assert_eq!(back.retained(), model.retained());
    let q = lhs_sample(20, &vec![(cfg.lower, cfg.upper); cfg.n], 2).unwrap();
    assert_eq!(
        back.predict_batch(q.view()).unwrap(),
        model.predict_batch(q.view()).unwrap()
    );
}

#[test]
fn configs_reject_bad_values() {
    assert!(RosenbrockConfig {
        n: 2,
        alpha: 0,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(RosenbrockConfig {
        n: 1,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(LorenzConfig {
        dt: 0.0,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(KuramotoConfig {
        n: 0,
        ..Default::default()
    }
    .validate()
    .is_err());
    let unknown = serde_json::from_str::<RosenbrockConfig>(r#"{"n": 5, "bogus": 1}"#);
    assert!(unknown.is_err());
}
