//! Acceptance suite: one PASS/FAIL line per criterion. Failures are reported
//! but only change the exit status when `FGP_ACCEPTANCE_STRICT=1` is set.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use fgp_core::genfun::builtins::excess_growth_of;
use fgp_core::genfun::{
    self, euler_check, homogenize, CorrectedGeometricMean, DerivativeBackend, Diversity,
    ExtendedEntropy, FnFunction, GeneratingFunction, GeometricMean, Homogeneity, HomogenizedCall,
    PowerSum, SharedFunction, SquareRootClaim,
};
use fgp_core::market::{covariance, simulate_path_indexed, CovarianceView, MarketModel, TimeGrid};
use fgp_core::portfolio::{integrate_value, local_time_drift_check, EngineOptions};
use fgp_core::replication::hedging::{hedge_errors, median};
use fgp_core::replication::{
    bs_call, bs_shifted_claim, heat_kernel_solve_1d, homogenized_call, pde_residual, residual_at,
    sample_points,
};
use fgp_core::{Error, Result};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn three_asset_market() -> MarketModel {
    MarketModel::diagonal(vec![0.05, 0.03, 0.04], &[0.2, 0.2, 0.2], 0.0, vec![1.0, 1.0, 1.0], 1.0).unwrap()
}

fn smooth_three_asset_builtins(cov: &CovarianceView) -> Vec<SharedFunction> {
    let p = vec![0.2, 0.5, 0.3];
    vec![
        Arc::new(GeometricMean::new(p.clone()).unwrap()),
        Arc::new(CorrectedGeometricMean::new(p, cov).unwrap()),
        Arc::new(Diversity::new(0.5, 3).unwrap()),
        Arc::new(SquareRootClaim::new(cov.volatilities(), 1.0).unwrap()),
        Arc::new(ExtendedEntropy::new(3).unwrap()),
        Arc::new(PowerSum::new(vec![0.5, 1.5, 2.0], cov.volatilities(), 1.0).unwrap()),
    ]
}

fn euler_homogeneity() -> Result<Outcome> {
    let start = Instant::now();
    let cov = CovarianceView::diagonal(&[0.2, 0.25, 0.3]);
    let degree_one: Vec<SharedFunction> = vec![
        Arc::new(GeometricMean::new(vec![0.2, 0.5, 0.3])?),
        Arc::new(CorrectedGeometricMean::new(vec![0.2, 0.5, 0.3], &cov)?),
        Arc::new(Diversity::new(0.5, 3)?),
        Arc::new(SquareRootClaim::new(vec![0.2, 0.25, 0.3], 1.0)?),
        Arc::new(ExtendedEntropy::new(3)?),
        Arc::new(HomogenizedCall::new(1.0, 0.2, 1.0)?),
        Arc::new(homogenize(Arc::new(PowerSum::new(vec![0.5, 2.0], vec![0.2, 0.3], 1.0)?))),
    ];
    let mut worst = (0.0f64, 0.0f64);
    let mut bad = Vec::new();
    for f in &degree_one {
        assert_eq!(f.homogeneity(), Homogeneity::DegreeOne);
        let grid = sample_points(f.arity(), 50, 101, (0.5, 2.0), (0.0, 0.95));
        for (x, t) in &grid {
            let v = genfun::evaluate(f.as_ref(), x, *t)?;
            let a = euler_check(f.as_ref(), x, *t, DerivativeBackend::Analytic)?.abs() / v;
            let n = euler_check(f.as_ref(), x, *t, DerivativeBackend::FiniteDifference)?.abs() / v;
            worst = (worst.0.max(a), worst.1.max(n));
            if a >= 1e-8 || n >= 1e-6 {
                bad.push(f.name());
            }
        }
    }
    let ps = PowerSum::new(vec![0.5, 1.5, 2.0], vec![0.2, 0.25, 0.3], 1.0)?;
    let grid = sample_points(3, 50, 101, (0.5, 2.0), (0.0, 0.95));
    let mut ps_max = 0.0f64;
    for (x, t) in &grid {
        let v = genfun::evaluate(&ps, x, *t)?;
        ps_max = ps_max.max(euler_check(&ps, x, *t, DerivativeBackend::Analytic)?.abs() / v);
    }
    let elapsed = start.elapsed().as_secs_f64();
    bad.dedup();
    Ok(outcome(
        bad.is_empty() && ps_max >= 1e-8 && elapsed < 1.0,
        format!(
            "max |euler|/V analytic {:.2e} (< 1e-8), fd {:.2e} (< 1e-6); power sum {:.2e} (fails as required); {:.2}s{}",
            worst.0,
            worst.1,
            ps_max,
            elapsed,
            if bad.is_empty() { String::new() } else { format!("; failing: {bad:?}") }
        ),
    ))
}

/// Rounding level below which a decomposition gap counts as exactly zero.
const ROUNDING_FLOOR: f64 = 1e-12;

fn decomposition() -> Result<Outcome> {
    let start = Instant::now();
    let model = three_asset_market();
    let cov = covariance(&model);
    let fine_grid = TimeGrid::new(1.0, 20_000)?;
    let paths: Vec<_> = (0..20u64)
        .into_par_iter()
        .map(|i| simulate_path_indexed(&model, fine_grid, 2024, i))
        .collect::<Result<_>>()?;
    let opts = EngineOptions::default();
    let mut pass = true;
    let mut lines = Vec::new();
    for f in smooth_three_asset_builtins(&cov) {
        let gaps: Vec<(f64, f64)> = paths
            .par_iter()
            .map(|fine| {
                let coarse = fine.coarsen(2)?;
                let g = |p| -> Result<f64> {
                    let traj = integrate_value(f.as_ref(), p, &cov, 0.0, &opts)?;
                    Ok(traj.decomposition_gaps().unwrap().into_iter().fold(0.0, f64::max))
                };
                Ok((g(&coarse)?, g(fine)?))
            })
            .collect::<Result<_>>()?;
        let coarse: Vec<f64> = gaps.iter().map(|g| g.0).collect();
        let fine: Vec<f64> = gaps.iter().map(|g| g.1).collect();
        let worst = coarse.iter().copied().fold(0.0, f64::max);
        let (mc, mf) = (median(&coarse), median(&fine));
        let exact = mc < ROUNDING_FLOOR && mf < ROUNDING_FLOOR;
        let ratio = mc / mf;
        let ok = worst < 1e-3 && (exact || (1.5..=3.0).contains(&ratio));
        pass &= ok;
        lines.push(format!(
            "{} max {:.2e} ratio {}{}",
            f.name(),
            worst,
            if exact { "exact".to_string() } else { format!("{ratio:.3}") },
            if ok { "" } else { " [x]" }
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(outcome(pass && elapsed < 30.0, format!("{}; {:.1}s", lines.join(", "), elapsed)))
}

fn constant_weights() -> Result<Outcome> {
    let model = three_asset_market();
    let cov = covariance(&model);
    let p = vec![0.2, 0.5, 0.3];
    let f = GeometricMean::new(p.clone())?;
    let path = simulate_path_indexed(&model, TimeGrid::new(1.0, 10_000)?, 7, 0)?;
    let traj = integrate_value(&f, &path, &cov, 0.0, &EngineOptions::default())?;
    let exact = traj.weights.iter().all(|w| w.risky == p && w.riskless == 0.0);
    let expected = excess_growth_of(&p, &cov) * 1.0;
    let got = *traj.phi_analytic.as_ref().unwrap().last().unwrap();
    let err = (got - expected).abs();
    Ok(outcome(
        exact && err < 1e-12,
        format!("weights equal p at all {} nodes: {exact}; |Phi(T) - egr T| = {err:.2e}", traj.nodes()),
    ))
}

fn replicability() -> Result<Outcome> {
    let sigma = [0.2, 0.25, 0.3];
    let cov = CovarianceView::diagonal(&sigma);
    let grid3 = sample_points(3, 50, 303, (0.5, 2.0), (0.0, 0.95));
    let grid_call = sample_points(2, 50, 303, (0.5, 2.0), (0.0, 0.95));
    let cov1 = CovarianceView::diagonal(&[0.2]);
    let p = vec![0.2, 0.5, 0.3];

    let replicable: Vec<(SharedFunction, &CovarianceView, f64, &Vec<(Vec<f64>, f64)>)> = vec![
        (Arc::new(CorrectedGeometricMean::new(p.clone(), &cov)?), &cov, 0.0, &grid3),
        (Arc::new(SquareRootClaim::new(sigma.to_vec(), 1.0)?), &cov, 0.0, &grid3),
        (Arc::new(HomogenizedCall::new(1.0, 0.2, 1.0)?), &cov1, 0.05, &grid_call),
        (Arc::new(PowerSum::new(vec![0.5, 1.5, 2.0], sigma.to_vec(), 1.0)?), &cov, 0.0, &grid3),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (f, c, g0, grid) in &replicable {
        let a = pde_residual(f.as_ref(), c, *g0, grid, DerivativeBackend::Analytic, 1e-6)?;
        let n = pde_residual(f.as_ref(), c, *g0, grid, DerivativeBackend::FiniteDifference, 1e-4)?;
        let ok = a.max < 1e-6 && n.max < 1e-4;
        pass &= ok;
        lines.push(format!("{} {:.1e}/{:.1e}", f.name(), a.max, n.max));
    }
    let not_replicable: Vec<SharedFunction> =
        vec![Arc::new(GeometricMean::new(p)?), Arc::new(Diversity::new(0.5, 3)?)];
    for f in &not_replicable {
        let a = pde_residual(f.as_ref(), &cov, 0.0, &grid3, DerivativeBackend::Analytic, 1e-6)?;
        let n = pde_residual(f.as_ref(), &cov, 0.0, &grid3, DerivativeBackend::FiniteDifference, 1e-4)?;
        let ok = a.max > 1e-3 && n.max > 1e-3;
        pass &= ok;
        lines.push(format!("{} {:.1e}/{:.1e} (not replicable)", f.name(), a.max, n.max));
    }
    Ok(outcome(pass, format!("max normalised residual analytic/fd: {}", lines.join(", "))))
}

fn black_scholes() -> Result<Outcome> {
    let (k, r, sigma, horizon) = (1.0, 0.05, 0.25, 1.0);
    let call = FnFunction::new("bs_call", 1, Homogeneity::Inhomogeneous, move |x: &[f64], t| {
        bs_call(x[0], k, r, sigma, t, horizon).map_or(f64::NAN, |q| q.price)
    })
    .with_horizon(horizon);
    let cov = CovarianceView::diagonal(&[sigma]);
    let mut pde = 0.0f64;
    let mut pde_fd = 0.0f64;
    let mut delta = 0.0f64;
    let mut shifted = 0.0f64;
    let mut recovery = 0.0f64;
    let mut recovery_sign = true;
    for i in 0..10 {
        let x = 0.7 + 0.08 * i as f64;
        for j in 0..10 {
            let t = 0.09 * j as f64;
            let (res, v) = residual_at(&call, &cov, r, &[x], t, DerivativeBackend::FiniteDifference)?;
            pde_fd = pde_fd.max((res / v).abs());
            let q = bs_call(x, k, r, sigma, t, horizon)?;
            pde = pde.max((q.pde_residual() / q.price).abs());
            let fd = genfun::gradient(&call, &[x], t, DerivativeBackend::FiniteDifference)?[0];
            delta = delta.max((fd - q.delta).abs());
            let h = homogenized_call(1.0, x, k, sigma, t, horizon)?;
            shifted = shifted.max((h - bs_shifted_claim(x, k, sigma, t, horizon)?).abs());
            let x0 = (r * (t - horizon)).exp();
            let lifted = homogenized_call(x0, x, k, sigma, t, horizon)? - k * x0;
            recovery_sign &= lifted >= 0.0;
            recovery = recovery.max((lifted - q.price).abs());
        }
    }
    Ok(outcome(
        pde < 1e-6 && delta < 1e-6 && shifted < 1e-10 && recovery < 1e-10 && recovery_sign,
        format!(
            "pde {pde:.1e} (< 1e-6; fd route {pde_fd:.1e}), delta {delta:.1e} (< 1e-6), shifted {shifted:.1e} (< 1e-10), recovery {recovery:.1e} (< 1e-10)"
        ),
    ))
}

fn hedging() -> Result<Outcome> {
    let start = Instant::now();
    let rate: f64 = 0.05;
    let model = MarketModel::diagonal(vec![0.06], &[0.2], rate, vec![1.0], (-rate).exp())?;
    let f = HomogenizedCall::new(1.0, 0.2, 1.0)?;
    let runs = hedge_errors(&f, &model, 1.0, &[250, 1000, 4000], 200, 77)?;
    let medians: Vec<f64> = runs.iter().map(|r| r.median).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let elapsed = start.elapsed().as_secs_f64();
    Ok(outcome(
        decreasing && medians[2] < 1e-2 && elapsed < 120.0,
        format!(
            "median terminal error M=250 {:.2e}, M=1000 {:.2e}, M=4000 {:.2e} (< 1e-2); {:.1}s",
            medians[0], medians[1], medians[2], elapsed
        ),
    ))
}

fn heat_kernel() -> Result<Outcome> {
    let start = Instant::now();
    let sigma = [0.2, 0.3];
    let horizon = 1.0;
    let closed = SquareRootClaim::new(sigma.to_vec(), horizon)?;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let x = [0.5 + 0.15 * i as f64, 1.8 - 0.12 * i as f64];
        for j in 0..10 {
            let t = 0.1 * j as f64;
            let tau = horizon - t;
            let y: Vec<f64> = (0..2).map(|m| x[m].ln() + sigma[m] * sigma[m] * t / 2.0).collect();
            let mut whole = [0.0; 2];
            let mut half = [0.0; 2];
            for m in 0..2 {
                let s2 = sigma[m] * sigma[m];
                whole[m] = (-s2 * horizon / 2.0).exp() * heat_kernel_solve_1d(f64::exp, sigma[m], tau, y[m])?;
                half[m] = (-s2 * horizon / 4.0).exp()
                    * heat_kernel_solve_1d(|z: f64| (z / 2.0).exp(), sigma[m], tau, y[m])?;
            }
            let v = whole[0] + whole[1] + 2.0 * half[0] * half[1];
            let c = genfun::evaluate(&closed, &x, t)?;
            worst = worst.max(((v - c) / c).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(outcome(
        worst < 1e-4 && elapsed < 10.0,
        format!("max relative deviation {worst:.2e} (< 1e-4) over 10x10 grid; {elapsed:.2}s"),
    ))
}

fn local_time() -> Result<Outcome> {
    let model = MarketModel::diagonal(vec![0.0, 0.0], &[0.4, 0.4], 0.0, vec![1.0, 1.0], 1.0)?;
    let cov = covariance(&model);
    let grid = TimeGrid::new(1.0, 1000)?;
    let reports = (0..100u64)
        .into_par_iter()
        .map(|i| local_time_drift_check(&simulate_path_indexed(&model, grid, 8, i)?, &cov))
        .collect::<Result<Vec<_>>>()?;
    let non_positive = reports.iter().filter(|r| r.terminal <= 0.0).count();
    let in_band = reports.iter().all(|r| r.within_band);
    let worst = reports.iter().map(|r| r.max_upward_move).fold(f64::NEG_INFINITY, f64::max);
    Ok(outcome(
        non_positive >= 95 && in_band,
        format!(
            "residual drift at T <= 0 on {non_positive}/100 paths (>= 95); largest upward move {worst:.2e} vs band {:.2e}",
            reports[0].noise_band
        ),
    ))
}

fn diversity_drift() -> Result<Outcome> {
    let model = three_asset_market();
    let cov = covariance(&model);
    let p = 0.5;
    let f = Diversity::new(p, 3)?;
    let grid = TimeGrid::new(1.0, 1000)?;
    let dt = grid.dt();
    let worst = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path_indexed(&model, grid, 9, i)?;
            let traj = integrate_value(&f, &path, &cov, 0.0, &EngineOptions::default())?;
            let phi = traj.phi_analytic.as_ref().ok_or(Error::NonSmooth { function: f.name() })?;
            let scaled: f64 = traj.excess_growth[..grid.steps].iter().map(|g| (1.0 - p) * g * dt).sum();
            Ok((phi[grid.steps] - scaled).abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(outcome(worst < 1e-12, format!("max |Phi(T) - (1-p) sum egr dt| = {worst:.2e} over 20 paths")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("euler homogeneity", euler_homogeneity),
        ("log-value decomposition", decomposition),
        ("constant-weight identity", constant_weights),
        ("replicability verdicts", replicability),
        ("black-scholes cross-checks", black_scholes),
        ("hedging monte carlo", hedging),
        ("heat-kernel oracle", heat_kernel),
        ("local-time sign test", local_time),
        ("diversity drift identity", diversity_drift),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        if !o.pass {
            failures += 1;
        }
        println!("criterion {} {name}: {} | {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    let strict = std::env::var("FGP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failures == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
