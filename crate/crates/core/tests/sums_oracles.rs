use tailclust::limitpp::QSampler;
use tailclust::sums::{c0, c0_by_contour, c0_by_periods, centering_drift, partial_sum_path, stable_params_from_q};
use tailclust::{Cluster, LinearModel, ModelSpec, RegVarLaw, SeriesSample};

const ONE_MINUS_EULER: f64 = 0.422_784_335_098_467_1;

#[test]
fn c0_schemes_hit_one_minus_euler() {
    assert!((c0_by_periods() - ONE_MINUS_EULER).abs() < 1e-9);
    assert!((c0_by_contour() - ONE_MINUS_EULER).abs() < 1e-9);
    assert_eq!(c0(), c0());
}

#[test]
fn drift_is_continuous_through_one() {
    for (p, eps) in [(0.7, 0.1), (0.2, 0.01), (1.0, 0.5)] {
        let at_one = centering_drift(1.0, p, eps);
        assert!((at_one - (2.0 * p - 1.0) * (1.0f64 / eps).ln()).abs() < 1e-12);
        for a in [1.0 - 1e-7, 1.0 + 1e-7] {
            assert!((centering_drift(a, p, eps) - at_one).abs() < 1e-5);
        }
    }
    assert_eq!(centering_drift(1.5, 0.5, 0.1), 0.0);
}

#[test]
fn partial_sums_end_at_scaled_total() {
    let model = ModelSpec::Linear {
        model: LinearModel::new(vec![1.0, -0.7], 0, RegVarLaw { alpha: 1.2, p: 0.6 }).unwrap(),
    };
    let values = vec![0.5, -2.0, 3.25, 1.0, -0.75];
    let s = SeriesSample::from_values(values.clone(), model);
    let path = partial_sum_path(&s, 2.0).unwrap();
    let total: f64 = values.iter().sum::<f64>() / 2.0;
    assert!((path.value(1.0) - total).abs() < 1e-12);
    assert_eq!(path.value(0.0), 0.0);
}

#[test]
fn nonnegative_ma1_stable_params() {
    // Q = (1, 0.7) with certainty; theta = 1 / (1 + 0.7^alpha)
    let q = QSampler::fixed(Cluster::new(vec![1.0, 0.7]), 1.0).unwrap();
    for a in [0.5f64, 0.7, 1.5] {
        let theta = 1.0 / (1.0 + 0.7f64.powf(a));
        let est = stable_params_from_q(a, theta, &q, 1.0, 0, 0).unwrap();
        let sigma = (theta * 1.7f64.powf(a)).powf(1.0 / a);
        assert!((est.params.sigma - sigma).abs() < 1e-12);
        assert!((est.params.beta - 1.0).abs() < 1e-12);
        let b = if a > 1.0 { a / (a - 1.0) } else { 0.0 };
        assert!((est.params.b - b).abs() < 1e-12, "alpha={a}: b={}", est.params.b);
        assert!(est.dh95_residual.unwrap().value.abs() < 1e-12);
    }
}
