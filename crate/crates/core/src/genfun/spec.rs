//! JSON descriptors for the builtin catalog, e.g.
//! `{"kind": "diversity", "p": 0.5}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::builtins::*;
use super::transform::{extend_simplex_function, homogenize, ConstantSimplex, GibbsShannonEntropy};
use super::SharedFunction;
use crate::error::{Error, Result};
use crate::market::CovarianceView;

/// Every accepted `kind`.
pub const NAMES: &[&str] = &[
    "geometric_mean",
    "corrected_geometric_mean",
    "diversity",
    "square_root_claim",
    "extended_entropy",
    "shifted_call",
    "homogenized_call",
    "power_sum",
    "pairwise_max",
    "homogenized",
    "extended_simplex",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    GeometricMean {
        p: Vec<f64>,
    },
    CorrectedGeometricMean {
        p: Vec<f64>,
    },
    Diversity {
        p: f64,
    },
    SquareRootClaim {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<Vec<f64>>,
    },
    ExtendedEntropy,
    ShiftedCall {
        strike: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    HomogenizedCall {
        strike: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    PowerSum {
        p: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<Vec<f64>>,
    },
    PairwiseMax,
    Homogenized {
        inner: Box<FunctionSpec>,
    },
    ExtendedSimplex {
        simplex: SimplexSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimplexSpec {
    GibbsShannonEntropy,
    Constant { c: f64 },
}

/// What a descriptor may borrow from the surrounding experiment: the number
/// of risky assets, their covariance, and the horizon.
#[derive(Debug, Clone)]
pub struct BuildContext {
    pub n: usize,
    pub cov: CovarianceView,
    pub horizon: f64,
}

impl BuildContext {
    fn volatilities(&self, given: Option<Vec<f64>>, what: &str) -> Result<Vec<f64>> {
        match given {
            Some(s) => Ok(s),
            None if self.cov.is_diagonal() => Ok(self.cov.volatilities()),
            None => Err(Error::InvalidParameter(format!(
                "{what}: sigma must be given when the covariance is not diagonal"
            ))),
        }
    }

    fn single_volatility(&self, given: Option<f64>, what: &str) -> Result<f64> {
        match given {
            Some(s) => Ok(s),
            None if self.n == 1 => Ok(self.cov.get(0, 0).sqrt()),
            None => Err(Error::InvalidParameter(format!(
                "{what}: sigma must be given for a market with {} assets",
                self.n
            ))),
        }
    }

    fn expect_assets(&self, what: &str, wanted: usize) -> Result<()> {
        if self.n == wanted {
            Ok(())
        } else {
            Err(Error::Dimension(format!("{what} needs {wanted} risky assets, market has {}", self.n)))
        }
    }
}

impl FunctionSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            FunctionSpec::GeometricMean { .. } => "geometric_mean",
            FunctionSpec::CorrectedGeometricMean { .. } => "corrected_geometric_mean",
            FunctionSpec::Diversity { .. } => "diversity",
            FunctionSpec::SquareRootClaim { .. } => "square_root_claim",
            FunctionSpec::ExtendedEntropy => "extended_entropy",
            FunctionSpec::ShiftedCall { .. } => "shifted_call",
            FunctionSpec::HomogenizedCall { .. } => "homogenized_call",
            FunctionSpec::PowerSum { .. } => "power_sum",
            FunctionSpec::PairwiseMax => "pairwise_max",
            FunctionSpec::Homogenized { .. } => "homogenized",
            FunctionSpec::ExtendedSimplex { .. } => "extended_simplex",
        }
    }

    pub fn build(&self, ctx: &BuildContext) -> Result<SharedFunction> {
        let f: SharedFunction = match self {
            FunctionSpec::GeometricMean { p } => {
                ctx.expect_assets("geometric_mean", p.len())?;
                Arc::new(GeometricMean::new(p.clone())?)
            }
            FunctionSpec::CorrectedGeometricMean { p } => {
                ctx.expect_assets("corrected_geometric_mean", p.len())?;
                Arc::new(CorrectedGeometricMean::new(p.clone(), &ctx.cov)?)
            }
            FunctionSpec::Diversity { p } => Arc::new(Diversity::new(*p, ctx.n)?),
            FunctionSpec::SquareRootClaim { sigma } => {
                let sigma = ctx.volatilities(sigma.clone(), "square_root_claim")?;
                ctx.expect_assets("square_root_claim", sigma.len())?;
                Arc::new(SquareRootClaim::new(sigma, ctx.horizon)?)
            }
            FunctionSpec::ExtendedEntropy => Arc::new(ExtendedEntropy::new(ctx.n)?),
            FunctionSpec::ShiftedCall { strike, sigma } => {
                ctx.expect_assets("shifted_call", 1)?;
                let sigma = ctx.single_volatility(*sigma, "shifted_call")?;
                Arc::new(ShiftedCall::new(*strike, sigma, ctx.horizon)?)
            }
            FunctionSpec::HomogenizedCall { strike, sigma } => {
                ctx.expect_assets("homogenized_call", 1)?;
                let sigma = ctx.single_volatility(*sigma, "homogenized_call")?;
                Arc::new(HomogenizedCall::new(*strike, sigma, ctx.horizon)?)
            }
            FunctionSpec::PowerSum { p, sigma } => {
                ctx.expect_assets("power_sum", p.len())?;
                let sigma = ctx.volatilities(sigma.clone(), "power_sum")?;
                Arc::new(PowerSum::new(p.clone(), sigma, ctx.horizon)?)
            }
            FunctionSpec::PairwiseMax => {
                ctx.expect_assets("pairwise_max", 2)?;
                Arc::new(PairwiseMax)
            }
            FunctionSpec::Homogenized { inner } => Arc::new(homogenize(inner.build(ctx)?)),
            FunctionSpec::ExtendedSimplex { simplex } => {
                let n = ctx.n;
                match simplex {
                    SimplexSpec::GibbsShannonEntropy => {
                        if n < 2 {
                            return Err(Error::InvalidParameter(
                                "entropy needs at least two assets".into(),
                            ));
                        }
                        Arc::new(extend_simplex_function(Arc::new(GibbsShannonEntropy { n })))
                    }
                    SimplexSpec::Constant { c } => {
                        if !(*c > 0.0 && c.is_finite()) {
                            return Err(Error::InvalidParameter(format!(
                                "constant simplex function must be positive, got {c}"
                            )));
                        }
                        Arc::new(extend_simplex_function(Arc::new(ConstantSimplex { n, c: *c })))
                    }
                }
            }
        };
        Ok(f)
    }
}
