//! Replicability and pricing.
//!
//! A generating function is replicable when its drift process vanishes,
//! which for a smooth `V` means it solves
//!
//! ```text
//! 1/2 sum_ij sigma_ij x_i x_j D_ij V + D_t V + gamma_0 (sum_i x_i D_i V - V) = 0.
//! ```
//!
//! [`pde_residual`] measures the left side, divided by `V`, on a set of
//! sample points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genfun::{self, DerivativeBackend, GeneratingFunction};
use crate::market::CovarianceView;

pub mod black_scholes;
pub mod heat;
pub mod hedging;
pub mod pricing;

pub use black_scholes::{bs_call, bs_shifted_claim, homogenized_call, BsQuote};
pub use heat::{heat_kernel_solve_1d, HeatKernelSolution, SeparablePayoff};
pub use hedging::{hedge_errors, HedgeRun};
pub use pricing::{power_sum_solution, three_step_price, ClaimProblem, PricingOutcome, StepOneSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Replicable,
    NotReplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub x: Vec<f64>,
    pub t: f64,
    pub value: f64,
    pub residual: f64,
    /// `residual / V`
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeResidualReport {
    pub function: String,
    pub backend: DerivativeBackend,
    pub gamma0: f64,
    pub samples: Vec<ResidualSample>,
    pub max: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// A sample point `(x, t)` in the function's argument space.
pub type SamplePoint = (Vec<f64>, f64);

/// Unnormalised residual and value at one point. `cov` covers the risky
/// arguments; when `f` has one more argument than `cov` has rows, the first
/// argument is the riskless price and carries no quadratic variation.
pub fn residual_at<F: GeneratingFunction + ?Sized>(
    f: &F,
    cov: &CovarianceView,
    gamma0: f64,
    x: &[f64],
    t: f64,
    backend: DerivativeBackend,
) -> Result<(f64, f64)> {
    let offset = match f.arity().checked_sub(cov.dim()) {
        Some(0) => 0,
        Some(1) => 1,
        _ => {
            return Err(Error::Dimension(format!(
                "`{}` takes {} prices, covariance is {}x{}",
                f.name(),
                f.arity(),
                cov.dim(),
                cov.dim()
            )))
        }
    };
    let d = genfun::derivatives(f, x, t, backend)?;
    let s = cov.at(t);
    let n = cov.dim();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += s[(i, j)] * x[i + offset] * x[j + offset] * d.hessian[(i + offset, j + offset)];
        }
    }
    let euler: f64 = x.iter().zip(&d.gradient).map(|(xi, gi)| xi * gi).sum::<f64>() - d.value;
    Ok((0.5 * quad + d.time + gamma0 * euler, d.value))
}

pub fn pde_residual<F: GeneratingFunction + ?Sized>(
    f: &F,
    cov: &CovarianceView,
    gamma0: f64,
    samples: &[SamplePoint],
    backend: DerivativeBackend,
    tolerance: f64,
) -> Result<PdeResidualReport> {
    let rows = samples
        .par_iter()
        .map(|(x, t)| {
            let (residual, value) = residual_at(f, cov, gamma0, x, *t, backend)?;
            Ok(ResidualSample {
                x: x.clone(),
                t: *t,
                value,
                residual,
                normalized: residual / value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max = rows.iter().map(|r| r.normalized.abs()).fold(0.0, f64::max);
    Ok(PdeResidualReport {
        function: f.name(),
        backend,
        gamma0,
        samples: rows,
        max,
        tolerance,
        verdict: if max < tolerance { Verdict::Replicable } else { Verdict::NotReplicable },
    })
}

/// `count` points with log-uniform prices in `prices` and uniform times in
/// `times`, from a fixed seed.
pub fn sample_points(
    arity: usize,
    count: usize,
    seed: u64,
    prices: (f64, f64),
    times: (f64, f64),
) -> Vec<SamplePoint> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (lo, hi) = (prices.0.ln(), prices.1.ln());
    (0..count)
        .map(|_| {
            let x = (0..arity).map(|_| rng.random_range(lo..hi).exp()).collect();
            let t = if times.1 > times.0 { rng.random_range(times.0..times.1) } else { times.0 };
            (x, t)
        })
        .collect()
}
