//! The builtin catalog of generating functions and contingent claim
//! functions.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{GeneratingFunction, Homogeneity, Smoothness};
use crate::error::{Error, Result};
use crate::market::CovarianceView;
use crate::normal::{norm_cdf, norm_pdf};
use crate::replication::black_scholes::{self, z_pair};

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| *v > 0.0 && v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {values:?}"))
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        invalid(format!("horizon must be positive, got {horizon}"))
    }
}

fn degree_tag(p: &[f64]) -> Homogeneity {
    if (p.iter().sum::<f64>() - 1.0).abs() <= 1e-12 {
        Homogeneity::DegreeOne
    } else {
        Homogeneity::Inhomogeneous
    }
}

fn abs_max(p: &[f64]) -> f64 {
    p.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `x_1^{p_1} ... x_n^{p_n}`. With `sum p_i = 1` it generates the
/// constant-weighted portfolio `pi_i = p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMean {
    p: Vec<f64>,
}

impl GeometricMean {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|v| !v.is_finite()) {
            return invalid("geometric mean exponents must be finite and non-empty");
        }
        Ok(GeometricMean { p })
    }

    pub fn exponents(&self) -> &[f64] {
        &self.p
    }
}

fn geometric_value(p: &[f64], x: &[f64]) -> f64 {
    p.iter().zip(x).map(|(pi, xi)| xi.powf(*pi)).product()
}

fn geometric_hessian(p: &[f64], x: &[f64], v: f64) -> DMatrix<f64> {
    let n = p.len();
    DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { p[i] } else { 0.0 };
        (p[i] * p[j] - delta) * v / (x[i] * x[j])
    })
}

impl GeneratingFunction for GeometricMean {
    fn name(&self) -> String {
        "geometric_mean".into()
    }
    fn arity(&self) -> usize {
        self.p.len()
    }
    fn homogeneity(&self) -> Homogeneity {
        degree_tag(&self.p)
    }
    fn raw_value(&self, x: &[f64], _t: f64) -> f64 {
        geometric_value(&self.p, x)
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let v = self.raw_value(x, t);
        Some(self.p.iter().zip(x).map(|(p, xi)| p * v / xi).collect())
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        Some(geometric_hessian(&self.p, x, self.raw_value(x, t)))
    }
    fn analytic_time_derivative(&self, _x: &[f64], _t: f64) -> Option<f64> {
        Some(0.0)
    }
    fn closed_form_weights(&self, _x: &[f64], _t: f64) -> Option<Vec<f64>> {
        Some(self.p.clone())
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        let m = abs_max(&self.p);
        Some((-m, m))
    }
}

/// Excess growth rate `1/2 (sum pi_i sigma_ii - sum pi_i pi_j sigma_ij)` of
/// fixed risky weights.
pub fn excess_growth_of(weights: &[f64], cov: &CovarianceView) -> f64 {
    let s = cov.at(0.0);
    let n = weights.len();
    let mut diag = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        diag += weights[i] * s[(i, i)];
        for j in 0..n {
            quad += weights[i] * weights[j] * s[(i, j)];
        }
    }
    0.5 * (diag - quad)
}

/// `x_1^{p_1} ... x_n^{p_n} exp(gamma* t)` with the excess growth rate of
/// the constant weights `p` under a constant covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedGeometricMean {
    p: Vec<f64>,
    excess_growth: f64,
}

impl CorrectedGeometricMean {
    pub fn new(p: Vec<f64>, cov: &CovarianceView) -> Result<Self> {
        let base = GeometricMean::new(p)?;
        if cov.dim() != base.p.len() {
            return Err(Error::Dimension(format!(
                "covariance is {0}x{0}, exponents have {1} entries",
                cov.dim(),
                base.p.len()
            )));
        }
        let excess_growth = excess_growth_of(&base.p, cov);
        Ok(CorrectedGeometricMean { p: base.p, excess_growth })
    }

    pub fn excess_growth(&self) -> f64 {
        self.excess_growth
    }
}

impl GeneratingFunction for CorrectedGeometricMean {
    fn name(&self) -> String {
        "corrected_geometric_mean".into()
    }
    fn arity(&self) -> usize {
        self.p.len()
    }
    fn homogeneity(&self) -> Homogeneity {
        degree_tag(&self.p)
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        geometric_value(&self.p, x) * (self.excess_growth * t).exp()
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let v = self.raw_value(x, t);
        Some(self.p.iter().zip(x).map(|(p, xi)| p * v / xi).collect())
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        Some(geometric_hessian(&self.p, x, self.raw_value(x, t)))
    }
    fn analytic_time_derivative(&self, x: &[f64], t: f64) -> Option<f64> {
        Some(self.excess_growth * self.raw_value(x, t))
    }
    fn closed_form_weights(&self, _x: &[f64], _t: f64) -> Option<Vec<f64>> {
        Some(self.p.clone())
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        let m = abs_max(&self.p);
        Some((-m, m))
    }
}

/// Diversity `(x_1^p + ... + x_n^p)^{1/p}`, `0 < p < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diversity {
    p: f64,
    n: usize,
}

impl Diversity {
    pub fn new(p: f64, n: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return invalid(format!("diversity parameter must lie in (0, 1), got {p}"));
        }
        if n == 0 {
            return invalid("diversity needs at least one asset");
        }
        Ok(Diversity { p, n })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn power_sum(&self, x: &[f64]) -> f64 {
        x.iter().map(|xi| xi.powf(self.p)).sum()
    }
}

impl GeneratingFunction for Diversity {
    fn name(&self) -> String {
        "diversity".into()
    }
    fn arity(&self) -> usize {
        self.n
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::DegreeOne
    }
    fn raw_value(&self, x: &[f64], _t: f64) -> f64 {
        self.power_sum(x).powf(1.0 / self.p)
    }
    fn analytic_gradient(&self, x: &[f64], _t: f64) -> Option<Vec<f64>> {
        let s = self.power_sum(x);
        let scale = s.powf(1.0 / self.p - 1.0);
        Some(x.iter().map(|xi| scale * xi.powf(self.p - 1.0)).collect())
    }
    fn analytic_hessian(&self, x: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let p = self.p;
        let s = self.power_sum(x);
        let outer = (1.0 - p) * s.powf(1.0 / p - 2.0);
        let diag = (p - 1.0) * s.powf(1.0 / p - 1.0);
        Some(DMatrix::from_fn(self.n, self.n, |i, j| {
            let mut h = outer * x[i].powf(p - 1.0) * x[j].powf(p - 1.0);
            if i == j {
                h += diag * x[i].powf(p - 2.0);
            }
            h
        }))
    }
    fn analytic_time_derivative(&self, _x: &[f64], _t: f64) -> Option<f64> {
        Some(0.0)
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }
}

/// The replicable square-root claim for independent assets:
///
/// ```text
/// V(x, t) = sum_i x_i + sum_{i != j} e^{sigma_i^2 (t-T)/8} e^{sigma_j^2 (t-T)/8} sqrt(x_i x_j)
/// ```
///
/// with terminal value `(sqrt(x_1) + ... + sqrt(x_n))^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareRootClaim {
    sigma: Vec<f64>,
    horizon: f64,
}

impl SquareRootClaim {
    pub fn new(sigma: Vec<f64>, horizon: f64) -> Result<Self> {
        check_positive("square-root claim volatilities", &sigma)?;
        check_horizon(horizon)?;
        Ok(SquareRootClaim { sigma, horizon })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// `a_i = e^{sigma_i^2 (t-T)/8} sqrt(x_i)` and the discount factors.
    fn terms(&self, x: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
        let e: Vec<f64> = self
            .sigma
            .iter()
            .map(|s| (s * s * (t - self.horizon) / 8.0).exp())
            .collect();
        let a = e.iter().zip(x).map(|(ei, xi)| ei * xi.sqrt()).collect();
        (a, e)
    }
}

impl GeneratingFunction for SquareRootClaim {
    fn name(&self) -> String {
        "square_root_claim".into()
    }
    fn arity(&self) -> usize {
        self.sigma.len()
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::DegreeOne
    }
    fn horizon(&self) -> Option<f64> {
        Some(self.horizon)
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        let (a, _) = self.terms(x, t);
        let total: f64 = a.iter().sum();
        let cross: f64 = a.iter().map(|ai| ai * (total - ai)).sum();
        x.iter().sum::<f64>() + cross
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let (a, e) = self.terms(x, t);
        let total: f64 = a.iter().sum();
        Some((0..x.len()).map(|i| 1.0 + (total - a[i]) * e[i] / x[i].sqrt()).collect())
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        let (a, e) = self.terms(x, t);
        let total: f64 = a.iter().sum();
        let n = x.len();
        Some(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -(total - a[i]) * e[i] / (2.0 * x[i].powf(1.5))
            } else {
                e[i] * e[j] / (2.0 * (x[i] * x[j]).sqrt())
            }
        }))
    }
    fn analytic_time_derivative(&self, x: &[f64], t: f64) -> Option<f64> {
        let (a, _) = self.terms(x, t);
        let total: f64 = a.iter().sum();
        Some(
            self.sigma
                .iter()
                .zip(&a)
                .map(|(s, ai)| s * s * ai * (total - ai))
                .sum::<f64>()
                / 4.0,
        )
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }
}

/// `z log z - sum x_i log x_i` with `z = sum x_i`: the degree-one extension
/// of the Gibbs-Shannon entropy of the market weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedEntropy {
    n: usize,
}

impl ExtendedEntropy {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return invalid("extended entropy needs at least two assets to be positive");
        }
        Ok(ExtendedEntropy { n })
    }
}

impl GeneratingFunction for ExtendedEntropy {
    fn name(&self) -> String {
        "extended_entropy".into()
    }
    fn arity(&self) -> usize {
        self.n
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::DegreeOne
    }
    fn raw_value(&self, x: &[f64], _t: f64) -> f64 {
        let z: f64 = x.iter().sum();
        // Written as -sum x_i log(x_i / z) to avoid cancellation.
        -x.iter().map(|xi| xi * (xi / z).ln()).sum::<f64>()
    }
    fn analytic_gradient(&self, x: &[f64], _t: f64) -> Option<Vec<f64>> {
        let z: f64 = x.iter().sum();
        Some(x.iter().map(|xi| -(xi / z).ln()).collect())
    }
    fn analytic_hessian(&self, x: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let z: f64 = x.iter().sum();
        Some(DMatrix::from_fn(self.n, self.n, |i, j| {
            1.0 / z - if i == j { 1.0 / x[i] } else { 0.0 }
        }))
    }
    fn analytic_time_derivative(&self, _x: &[f64], _t: f64) -> Option<f64> {
        Some(0.0)
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }
}

/// The positive call solution for zero interest:
/// `N(z_0) x + (1 - N(z_1)) K`, terminal value `x v K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedCall {
    strike: f64,
    sigma: f64,
    horizon: f64,
}

impl ShiftedCall {
    pub fn new(strike: f64, sigma: f64, horizon: f64) -> Result<Self> {
        check_positive("strike and volatility", &[strike, sigma])?;
        check_horizon(horizon)?;
        Ok(ShiftedCall { strike, sigma, horizon })
    }

    fn greeks(&self, x: f64, t: f64) -> (f64, f64, f64) {
        let tau = self.horizon - t;
        let s = self.sigma * tau.sqrt();
        let (z0, _) = z_pair((x / self.strike).ln(), self.sigma, tau);
        let phi = norm_pdf(z0);
        (norm_cdf(z0), phi / (x * s), -x * phi * self.sigma / (2.0 * tau.sqrt()))
    }
}

impl GeneratingFunction for ShiftedCall {
    fn name(&self) -> String {
        "shifted_call".into()
    }
    fn arity(&self) -> usize {
        1
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::Inhomogeneous
    }
    fn horizon(&self) -> Option<f64> {
        Some(self.horizon)
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        black_scholes::shifted_claim_value(x[0], self.strike, self.sigma, t, self.horizon)
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        Some(vec![self.greeks(x[0], t).0])
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.greeks(x[0], t).1))
    }
    fn analytic_time_derivative(&self, x: &[f64], t: f64) -> Option<f64> {
        Some(self.greeks(x[0], t).2)
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }
}

/// The homogenized shifted call over `(x_0, x)`:
/// `N(z_0) x + (1 - N(z_1)) K x_0` with moneyness `x / (K x_0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizedCall {
    strike: f64,
    sigma: f64,
    horizon: f64,
}

impl HomogenizedCall {
    pub fn new(strike: f64, sigma: f64, horizon: f64) -> Result<Self> {
        check_positive("strike and volatility", &[strike, sigma])?;
        check_horizon(horizon)?;
        Ok(HomogenizedCall { strike, sigma, horizon })
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }
}

impl GeneratingFunction for HomogenizedCall {
    fn name(&self) -> String {
        "homogenized_call".into()
    }
    fn arity(&self) -> usize {
        2
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::DegreeOne
    }
    fn horizon(&self) -> Option<f64> {
        Some(self.horizon)
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        black_scholes::homogenized_call_value(x[0], x[1], self.strike, self.sigma, t, self.horizon)
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let tau = self.horizon - t;
        let (z0, z1) = z_pair((x[1] / (self.strike * x[0])).ln(), self.sigma, tau);
        Some(vec![self.strike * norm_cdf(-z1), norm_cdf(z0)])
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        let tau = self.horizon - t;
        let s = self.sigma * tau.sqrt();
        let (z0, _) = z_pair((x[1] / (self.strike * x[0])).ln(), self.sigma, tau);
        let phi = norm_pdf(z0);
        let (x0, x1) = (x[0], x[1]);
        let cross = -phi / (x0 * s);
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[x1 * phi / (x0 * x0 * s), cross, cross, phi / (x1 * s)],
        ))
    }
    fn analytic_time_derivative(&self, x: &[f64], t: f64) -> Option<f64> {
        let tau = self.horizon - t;
        let (z0, _) = z_pair((x[1] / (self.strike * x[0])).ln(), self.sigma, tau);
        Some(-x[1] * norm_pdf(z0) * self.sigma / (2.0 * tau.sqrt()))
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }
}

/// `sum_i e^{(p_i - p_i^2) sigma_i^2 (t - T)/2} x_i^{p_i}`, the zero-rate
/// solution for the power-sum payoff `x_1^{p_1} + ... + x_n^{p_n}` under
/// independent assets.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSum {
    p: Vec<f64>,
    sigma: Vec<f64>,
    horizon: f64,
}

impl PowerSum {
    pub fn new(p: Vec<f64>, sigma: Vec<f64>, horizon: f64) -> Result<Self> {
        if p.is_empty() || p.len() != sigma.len() {
            return Err(Error::Dimension(format!(
                "power sum needs matching exponents and volatilities ({} vs {})",
                p.len(),
                sigma.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return invalid("power-sum exponents must be finite");
        }
        if sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return invalid("power-sum volatilities must be non-negative");
        }
        check_horizon(horizon)?;
        Ok(PowerSum { p, sigma, horizon })
    }

    /// `alpha_i = (p_i - p_i^2) sigma_i^2 / 2`.
    pub fn rates(&self) -> Vec<f64> {
        self.p
            .iter()
            .zip(&self.sigma)
            .map(|(p, s)| (p - p * p) * s * s / 2.0)
            .collect()
    }

    fn terms(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.rates()
            .iter()
            .zip(&self.p)
            .zip(x)
            .map(|((a, p), xi)| (a * (t - self.horizon)).exp() * xi.powf(*p))
            .collect()
    }
}

impl GeneratingFunction for PowerSum {
    fn name(&self) -> String {
        "power_sum".into()
    }
    fn arity(&self) -> usize {
        self.p.len()
    }
    fn homogeneity(&self) -> Homogeneity {
        if self.p.len() == 1 && self.p[0] == 1.0 {
            Homogeneity::DegreeOne
        } else {
            Homogeneity::Inhomogeneous
        }
    }
    fn horizon(&self) -> Option<f64> {
        Some(self.horizon)
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        self.terms(x, t).iter().sum()
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let terms = self.terms(x, t);
        Some((0..x.len()).map(|i| self.p[i] * terms[i] / x[i]).collect())
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        let terms = self.terms(x, t);
        let n = x.len();
        Some(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.p[i] * (self.p[i] - 1.0) * terms[i] / (x[i] * x[i])
            } else {
                0.0
            }
        }))
    }
    fn analytic_time_derivative(&self, x: &[f64], t: f64) -> Option<f64> {
        let terms = self.terms(x, t);
        Some(self.rates().iter().zip(&terms).map(|(a, c)| a * c).sum())
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        let m = abs_max(&self.p);
        Some((-m, m))
    }
}

/// `x_1 v x_2`. Not differentiable on the diagonal; generates the portfolio
/// holding whichever asset leads, ties going to asset 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseMax;

impl GeneratingFunction for PairwiseMax {
    fn name(&self) -> String {
        "pairwise_max".into()
    }
    fn arity(&self) -> usize {
        2
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::DegreeOne
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::NonSmooth
    }
    fn raw_value(&self, x: &[f64], _t: f64) -> f64 {
        x[0].max(x[1])
    }
    fn closed_form_weights(&self, x: &[f64], _t: f64) -> Option<Vec<f64>> {
        Some(if x[0] >= x[1] { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }
}

type ValueFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

/// A value-only function from a closure; every derivative comes from finite
/// differences.
#[derive(Clone)]
pub struct FnFunction {
    name: String,
    arity: usize,
    homogeneity: Homogeneity,
    horizon: Option<f64>,
    value: Arc<ValueFn>,
}

impl FnFunction {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        homogeneity: Homogeneity,
        value: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnFunction {
            name: name.into(),
            arity,
            homogeneity,
            horizon: None,
            value: Arc::new(value),
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }
}

impl fmt::Debug for FnFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFunction")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .finish_non_exhaustive()
    }
}

impl GeneratingFunction for FnFunction {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn arity(&self) -> usize {
        self.arity
    }
    fn homogeneity(&self) -> Homogeneity {
        self.homogeneity
    }
    fn horizon(&self) -> Option<f64> {
        self.horizon
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        (self.value)(x, t)
    }
}
