use std::sync::Arc;

use fgp_core::genfun::{
    self, homogenize, CorrectedGeometricMean, DerivativeBackend, Diversity, ExtendedEntropy,
    GeometricMean, Homogeneity, HomogenizedCall, PowerSum, SharedFunction,
    ShiftedCall, SquareRootClaim,
};
use fgp_core::market::{
    covariance, discount_path, simulate_path, simulate_path_indexed, undiscount_path, CovarianceView,
    MarketModel, TimeGrid,
};
use fgp_core::portfolio::{integrate_value, weights_at, EngineOptions};
use proptest::prelude::*;

fn catalog(cov: &CovarianceView) -> Vec<SharedFunction> {
    vec![
        Arc::new(GeometricMean::new(vec![0.5, 0.3, 0.2]).unwrap()),
        Arc::new(CorrectedGeometricMean::new(vec![0.2, 0.5, 0.3], cov).unwrap()),
        Arc::new(Diversity::new(0.5, 3).unwrap()),
        Arc::new(SquareRootClaim::new(cov.volatilities(), 1.0).unwrap()),
        Arc::new(ExtendedEntropy::new(3).unwrap()),
        Arc::new(PowerSum::new(vec![0.5, 2.0, 1.5], cov.volatilities(), 1.0).unwrap()),
    ]
}

fn cov3() -> CovarianceView {
    CovarianceView::diagonal(&[0.2, 0.25, 0.3])
}

fn prices() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.3f64..3.0, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_sum_to_one(x in prices(), x0 in 0.5f64..1.5, t in 0.0f64..0.95) {
        for f in catalog(&cov3()) {
            let w = weights_at(f.as_ref(), x0, &x, t, &EngineOptions::default()).unwrap();
            prop_assert!((w.total() - 1.0).abs() < 1e-12, "{}: {}", f.name(), w.total());
        }
    }

    #[test]
    fn degree_one_functions_hold_no_riskless_asset(x in prices(), t in 0.0f64..0.95) {
        for f in catalog(&cov3()) {
            if f.homogeneity() == Homogeneity::DegreeOne {
                let w = weights_at(f.as_ref(), 0.8, &x, t, &EngineOptions::default()).unwrap();
                prop_assert_eq!(w.riskless, 0.0);
            }
        }
    }

    #[test]
    fn weights_stay_in_declared_bounds(x in prices(), t in 0.0f64..0.95) {
        for f in catalog(&cov3()) {
            let Some((lo, hi)) = f.weight_bounds() else { continue };
            let w = weights_at(f.as_ref(), 1.0, &x, t, &EngineOptions::default()).unwrap();
            for wi in &w.risky {
                prop_assert!(*wi >= lo - 1e-12 && *wi <= hi + 1e-12, "{}: {wi}", f.name());
            }
        }
    }

    #[test]
    fn homogenized_functions_scale_linearly(x in prices(), x0 in 0.5f64..1.5, s in 0.2f64..5.0, t in 0.0f64..0.95) {
        for f in catalog(&cov3()) {
            let h = homogenize(f);
            let args: Vec<f64> = std::iter::once(x0).chain(x.iter().copied()).collect();
            let scaled: Vec<f64> = args.iter().map(|a| a * s).collect();
            let a = genfun::evaluate(&h, &args, t).unwrap();
            let b = genfun::evaluate(&h, &scaled, t).unwrap();
            prop_assert!((b - s * a).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn homogenized_functions_restrict_to_the_original(x in prices(), t in 0.0f64..0.95) {
        for f in catalog(&cov3()) {
            let v = genfun::evaluate(f.as_ref(), &x, t).unwrap();
            let h = homogenize(f);
            let args: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
            let hv = genfun::evaluate(&h, &args, t).unwrap();
            prop_assert!((hv - v).abs() <= 1e-13 * v.abs().max(1.0));
        }
    }

    #[test]
    fn analytic_and_finite_difference_gradients_agree(x in prices(), t in 0.0f64..0.95) {
        for f in catalog(&cov3()) {
            let a = genfun::gradient(f.as_ref(), &x, t, DerivativeBackend::Analytic).unwrap();
            let d = genfun::gradient(f.as_ref(), &x, t, DerivativeBackend::FiniteDifference).unwrap();
            let v = genfun::evaluate(f.as_ref(), &x, t).unwrap();
            for i in 0..3 {
                prop_assert!((a[i] - d[i]).abs() * x[i] / v < 1e-6, "{} slot {i}", f.name());
            }
        }
    }

    #[test]
    fn discounting_round_trips(seed in 0u64..1000, rate in -0.05f64..0.1) {
        let model = MarketModel::diagonal(vec![0.03, 0.01], &[0.2, 0.4], rate, vec![1.0, 2.0], 0.9).unwrap();
        let path = simulate_path(&model, 1.0, 16, seed).unwrap();
        let back = undiscount_path(&discount_path(&path), &path.riskless).unwrap();
        for k in 0..=16 {
            for (a, b) in path.log_prices_at(k).iter().zip(back.log_prices_at(k)) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn euler_identity_on_a_fifty_point_grid() {
    let cov = CovarianceView::diagonal(&[0.2]);
    let degree_one: Vec<SharedFunction> = vec![
        Arc::new(ShiftedCall::new(1.0, 0.2, 1.0).unwrap()),
        Arc::new(HomogenizedCall::new(1.0, 0.2, 1.0).unwrap()),
        Arc::new(SquareRootClaim::new(cov.volatilities(), 1.0).unwrap()),
    ];
    for f in degree_one {
        for k in 0..50 {
            let x: Vec<f64> = (0..f.arity()).map(|i| 0.5 + 0.03 * k as f64 + 0.1 * i as f64).collect();
            let t = 0.018 * k as f64;
            for backend in [DerivativeBackend::Analytic, DerivativeBackend::FiniteDifference] {
                let e = genfun::euler_check(f.as_ref(), &x, t, backend).unwrap();
                assert!(e < 1e-6, "{} at {x:?}: {e}", f.name());
            }
        }
    }
}

#[test]
fn terminal_log_price_moments() {
    let model = MarketModel::diagonal(vec![0.04, -0.02], &[0.2, 0.35], 0.01, vec![1.0, 1.5], 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let paths = 100_000u64;
    for i in 0..2 {
        let draws: Vec<f64> = (0..paths)
            .map(|p| simulate_path_indexed(&model, grid, 5, p).unwrap().log_prices_at(4)[i])
            .collect();
        let mean = draws.iter().sum::<f64>() / paths as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
        let se = (var / paths as f64).sqrt();
        let want = model.initial_prices[i].ln() + model.growth[i].at(0.0) * 1.0;
        assert!((mean - want).abs() < 4.0 * se, "asset {i}: {mean} vs {want} (se {se})");
        let sigma = [0.2, 0.35][i];
        assert!((var - sigma * sigma).abs() < 0.02 * sigma * sigma);
    }
}

#[test]
fn power_sum_holds_the_riskless_asset_on_random_paths() {
    let model = MarketModel::diagonal(vec![0.02; 3], &[0.2, 0.25, 0.3], 0.03, vec![1.0; 3], 1.0).unwrap();
    let cov = covariance(&model);
    let f = PowerSum::new(vec![0.5, 2.0, 1.5], cov.volatilities(), 1.0).unwrap();
    for seed in 0..10 {
        let path = simulate_path(&model, 1.0, 50, seed).unwrap();
        let traj = integrate_value(&f, &path, &cov, model.gamma0(), &EngineOptions::default()).unwrap();
        assert!(traj.weights.iter().any(|w| w.riskless.abs() > 1e-6));
    }
}
