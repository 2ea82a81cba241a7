//! The three-step pricing procedure.
//!
//! 1. Solve the zero-rate replicability equation for the discounted market
//!    with terminal value `f`.
//! 2. Homogenize the solution over the riskless price.
//! 3. The homogenized function is replicable for the undiscounted market;
//!    this is checked, not assumed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::heat::{HeatKernelSolution, SeparablePayoff};
use super::{pde_residual, sample_points, PdeResidualReport, SamplePoint, Verdict};
use crate::error::{Error, Result};
use crate::genfun::{self, homogenize, BuildContext, DerivativeBackend, FunctionSpec, Homogenized, SharedFunction};
use crate::market::{covariance, MarketModel};

/// `sum_i e^{(p_i - p_i^2) sigma_i^2 (t - T)/2} x_i^{p_i}`.
pub fn power_sum_solution(p: &[f64], sigma: &[f64], x: &[f64], t: f64, horizon: f64) -> Result<f64> {
    if p.len() != sigma.len() || p.len() != x.len() {
        return Err(Error::Dimension("power-sum inputs must have equal length".into()));
    }
    Ok(p.iter()
        .zip(sigma)
        .zip(x)
        .map(|((p, s), x)| ((p - p * p) * s * s * (t - horizon) / 2.0).exp() * x.powf(*p))
        .sum())
}

/// A claim with terminal value `f`, described by the closed-form builtin
/// that solves it for the discounted market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimProblem {
    pub claim: FunctionSpec,
    pub model: MarketModel,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOneSolver {
    #[default]
    ClosedForm,
    /// Gaussian-convolution quadrature; diagonal covariance only.
    HeatKernel,
}

impl ClaimProblem {
    /// Requires `X_0(T) = 1`, i.e. `X_0(0) = e^{-gamma_0 T}`.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let terminal = self.model.initial_riskless * (self.model.gamma0() * self.horizon).exp();
        if (terminal - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "the riskless asset must be worth 1 at the horizon, got {terminal}"
            )));
        }
        match self.claim {
            FunctionSpec::ShiftedCall { .. }
            | FunctionSpec::PowerSum { .. }
            | FunctionSpec::SquareRootClaim { .. } => Ok(()),
            ref other => Err(Error::InvalidParameter(format!(
                "`{}` is not a claim with a known step-1 solution",
                other.kind()
            ))),
        }
    }

    pub fn context(&self) -> BuildContext {
        BuildContext { n: self.model.n, cov: covariance(&self.model), horizon: self.horizon }
    }

    pub fn separable_payoff(&self) -> Result<SeparablePayoff> {
        match &self.claim {
            FunctionSpec::ShiftedCall { strike, .. } => Ok(SeparablePayoff::max_strike(*strike)),
            FunctionSpec::PowerSum { p, .. } => Ok(SeparablePayoff::power_sum(p)),
            FunctionSpec::SquareRootClaim { .. } => Ok(SeparablePayoff::square_root_claim(self.model.n)),
            other => Err(Error::InvalidParameter(format!("`{}` is not separable", other.kind()))),
        }
    }

    /// `f(x) = V(x, T)`.
    pub fn terminal_value(&self, x: &[f64]) -> Result<f64> {
        let v = self.claim.build(&self.context())?;
        genfun::evaluate(v.as_ref(), x, self.horizon)
    }

    pub fn step_one(&self, solver: StepOneSolver) -> Result<SharedFunction> {
        self.validate()?;
        let ctx = self.context();
        match solver {
            StepOneSolver::ClosedForm => self.claim.build(&ctx),
            StepOneSolver::HeatKernel => {
                if !ctx.cov.is_diagonal() {
                    return Err(Error::InvalidParameter(
                        "the heat-kernel solver needs independent assets".into(),
                    ));
                }
                let sigma = ctx.cov.volatilities();
                Ok(Arc::new(HeatKernelSolution::new(self.separable_payoff()?, sigma, self.horizon)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingOptions {
    pub samples: usize,
    pub seed: u64,
    pub backend: DerivativeBackend,
    pub tolerance: f64,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions { samples: 40, seed: 0, backend: DerivativeBackend::Analytic, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct PricingOutcome {
    pub price_function: Arc<Homogenized>,
    /// Residual of the step-1 solution on the discounted market.
    pub discounted: PdeResidualReport,
    /// Residual of the homogenized function on `(X_0, X)`.
    pub homogenized: PdeResidualReport,
}

fn riskless_samples(problem: &ClaimProblem, points: &[SamplePoint]) -> Vec<SamplePoint> {
    let x0 = |t: f64| problem.model.initial_riskless * (problem.model.gamma0() * t).exp();
    points
        .iter()
        .map(|(x, t)| {
            let lifted = std::iter::once(x0(*t)).chain(x.iter().map(|xi| xi * x0(*t))).collect();
            (lifted, *t)
        })
        .collect()
}

pub fn three_step_price(
    problem: &ClaimProblem,
    solver: StepOneSolver,
    options: &PricingOptions,
) -> Result<PricingOutcome> {
    let step_one = problem.step_one(solver)?;
    let cov = covariance(&problem.model);
    let points = sample_points(problem.model.n, options.samples, options.seed, (0.5, 2.0), (0.0, 0.95 * problem.horizon));
    let discounted = pde_residual(step_one.as_ref(), &cov, 0.0, &points, options.backend, options.tolerance)?;
    if discounted.verdict != Verdict::Replicable {
        return Err(Error::PipelineRejected(format!(
            "step 1 solution `{}` has normalised residual {:.3e} >= {:.1e}",
            discounted.function, discounted.max, options.tolerance
        )));
    }
    let price_function = Arc::new(homogenize(step_one));
    let homogenized = pde_residual(
        price_function.as_ref(),
        &cov,
        problem.model.gamma0(),
        &riskless_samples(problem, &points),
        options.backend,
        options.tolerance,
    )?;
    if homogenized.verdict != discounted.verdict {
        return Err(Error::PipelineRejected(format!(
            "homogenized function `{}` has normalised residual {:.3e} although step 1 passed",
            homogenized.function, homogenized.max
        )));
    }
    Ok(PricingOutcome { price_function, discounted, homogenized })
}
