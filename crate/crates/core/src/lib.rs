//! Functionally generated portfolios and contingent-claim pricing.
//!
//! The crate is organised around four layers:
//!
//! - [`market`]: constant-coefficient log-normal market models and exact
//!   log-space path simulation with keyed, reproducible random streams.
//! - [`genfun`]: positive generating functions of prices and time with
//!   analytic or finite-difference derivatives, the builtin catalog, and the
//!   homogenization and simplex-extension transforms.
//! - [`portfolio`]: portfolio weights, self-financing value integration and
//!   the log-value / drift decomposition.
//! - [`replication`]: the generalized Black-Scholes residual, closed-form
//!   claims, the heat-kernel quadrature solver, the three-step pricing
//!   pipeline and Monte Carlo hedging.

pub mod error;
pub mod genfun;
pub mod market;
pub mod normal;
pub mod portfolio;
pub mod replication;

pub use error::{Error, Result};
pub use genfun::{
    Derivatives, DerivativeBackend, FunctionSpec, GeneratingFunction, Homogeneity, Smoothness,
};
pub use market::{CovarianceView, MarketModel, PricePath, TimeGrid};
pub use portfolio::{PortfolioTrajectory, WeightVector};
