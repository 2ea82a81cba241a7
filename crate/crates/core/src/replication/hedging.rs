//! Monte Carlo replication: run the self-financing portfolio generated by a
//! claim function and compare its terminal value with the payoff.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genfun::{self, GeneratingFunction};
use crate::market::{covariance, simulate_path_indexed, MarketModel, PricePath, TimeGrid};
use crate::portfolio::{integrate_value, EngineOptions, ValueScheme};

/// Terminal hedging errors on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeRun {
    pub steps: usize,
    pub errors: Vec<f64>,
    pub median: f64,
    pub p90: f64,
}

/// Empirical quantile by the nearest-rank rule.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// `|Z(T) - V(X(T), T)|` for one path, with `Z(0) = V(X(0), 0)` and
/// arithmetic self-financing updates.
pub fn terminal_error<F: GeneratingFunction + ?Sized>(
    f: &F,
    path: &PricePath,
    model: &MarketModel,
) -> Result<f64> {
    let cov = covariance(model);
    let options = EngineOptions { scheme: ValueScheme::Arithmetic, ..EngineOptions::default() };
    let traj = integrate_value(f, path, &cov, model.gamma0(), &options)?;
    let z = traj.log_value.last().copied().unwrap_or(f64::NAN).exp();
    let v = traj.log_function.last().copied().unwrap_or(f64::NAN).exp();
    Ok((z - v).abs())
}

/// Hedging errors for each grid in `steps`. Paths are simulated once on the
/// finest grid and coarsened, so every grid sees the same noise; every
/// entry of `steps` must divide the largest.
pub fn hedge_errors<F: GeneratingFunction + ?Sized>(
    f: &F,
    model: &MarketModel,
    horizon: f64,
    steps: &[usize],
    paths: usize,
    seed: u64,
) -> Result<Vec<HedgeRun>> {
    let finest = steps.iter().copied().max().ok_or_else(|| Error::InvalidGrid("no grids given".into()))?;
    if let Some(bad) = steps.iter().find(|m| **m == 0 || finest % **m != 0) {
        return Err(Error::InvalidGrid(format!("{bad} steps does not divide {finest}")));
    }
    let grid = TimeGrid::new(horizon, finest)?;
    let per_path: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|index| {
            let fine = simulate_path_indexed(model, grid, seed, index)?;
            steps
                .iter()
                .map(|&m| terminal_error(f, &fine.coarsen(finest / m)?, model))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(steps
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let errors: Vec<f64> = per_path.iter().map(|row| row[j]).collect();
            HedgeRun { steps: m, median: median(&errors), p90: quantile(&errors, 0.9), errors }
        })
        .collect())
}

/// The value of the claim function at the start of a path.
pub fn initial_price<F: GeneratingFunction + ?Sized>(f: &F, model: &MarketModel) -> Result<f64> {
    let args: Vec<f64> = if f.arity() == model.n + 1 {
        std::iter::once(model.initial_riskless).chain(model.initial_prices.iter().copied()).collect()
    } else {
        model.initial_prices.clone()
    };
    genfun::evaluate(f, &args, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::HomogenizedCall;

    #[test]
    fn quantiles() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&v), 3.0);
        assert_eq!(median(&[1.0, 2.0]), 1.5);
        assert_eq!(quantile(&v, 0.9), 5.0);
        assert_eq!(quantile(&v, 0.2), 1.0);
    }

    #[test]
    fn hedging_error_shrinks() {
        let rate: f64 = 0.05;
        let model = MarketModel::diagonal(vec![0.07], &[0.2], rate, vec![1.0], (-rate).exp()).unwrap();
        let f = HomogenizedCall::new(1.0, 0.2, 1.0).unwrap();
        let runs = hedge_errors(&f, &model, 1.0, &[50, 800], 24, 11).unwrap();
        assert!(runs[1].median < runs[0].median);
        assert!(initial_price(&f, &model).unwrap() > (-rate).exp());
    }

    #[test]
    fn grids_must_nest() {
        let model = MarketModel::diagonal(vec![0.0], &[0.2], 0.0, vec![1.0], 1.0).unwrap();
        let f = HomogenizedCall::new(1.0, 0.2, 1.0).unwrap();
        assert!(hedge_errors(&f, &model, 1.0, &[3, 10], 2, 0).is_err());
    }
}
