//! Gaussian-convolution solutions of the heat equation
//! `dU/dtau = 1/2 sigma^2 d^2U/dy^2`, by trapezoid quadrature.
//!
//! With `y_i = log x_i + sigma_i^2 t / 2` and `tau = T - t`, a zero-rate
//! claim on independent assets becomes a heat equation in each coordinate.
//! For payoffs that are sums of products of one-dimensional factors the
//! solution is the same sum of products of one-dimensional convolutions,
//! which is what [`HeatKernelSolution`] evaluates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genfun::{GeneratingFunction, Homogeneity};

pub const INITIAL_NODES: usize = 4001;
pub const HALF_WIDTH: f64 = 10.0;
pub const RELATIVE_TOLERANCE: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 12;

/// `K[g](y, tau)` and its first two `y` derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convolution {
    pub value: f64,
    pub dy: f64,
    pub dyy: f64,
}

/// Trapezoid sums over `[y - 10 s, y + 10 s]`, `s = sigma sqrt(tau)`,
/// starting from 4001 nodes and halving the spacing until every one of the
/// three integrals changes by less than `1e-8` relative.
pub fn convolve<G: Fn(f64) -> f64>(g: G, sigma: f64, tau: f64, y: f64) -> Result<Convolution> {
    if !(sigma > 0.0 && sigma.is_finite()) || !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Quadrature(format!(
            "need sigma > 0 and tau >= 0, got sigma = {sigma}, tau = {tau}"
        )));
    }
    let var = sigma * sigma * tau;
    if var == 0.0 {
        return Err(Error::Quadrature("kernel width is zero; derivatives are undefined".into()));
    }
    let s = var.sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    let term = |u: f64| -> [f64; 3] {
        let k = norm * (-u * u / (2.0 * var)).exp() * g(y + u);
        [k, u / var * k, (u * u / (var * var) - 1.0 / var) * k]
    };
    let (a, b) = (-HALF_WIDTH * s, HALF_WIDTH * s);

    let mut intervals = INITIAL_NODES - 1;
    let mut h = (b - a) / intervals as f64;
    let mut sums = [0.0; 3];
    for j in 0..=intervals {
        let weight = if j == 0 || j == intervals { 0.5 } else { 1.0 };
        let v = term(a + j as f64 * h);
        for m in 0..3 {
            sums[m] += weight * v[m];
        }
    }
    let mut current = sums.map(|v| v * h);
    for _ in 0..MAX_DOUBLINGS {
        let mut mid = [0.0; 3];
        for j in 0..intervals {
            let v = term(a + (j as f64 + 0.5) * h);
            for m in 0..3 {
                mid[m] += v[m];
            }
        }
        let next: [f64; 3] = std::array::from_fn(|m| 0.5 * current[m] + 0.5 * h * mid[m]);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature(format!("non-finite integral at y = {y}")));
        }
        let scale = next[0].abs().max(f64::MIN_POSITIVE);
        let converged = (0..3).all(|m| (next[m] - current[m]).abs() <= RELATIVE_TOLERANCE * next[m].abs().max(scale * 1e-6));
        intervals *= 2;
        h *= 0.5;
        current = next;
        if converged {
            let tail = term(a)[0].abs().max(term(b)[0].abs()) * (b - a);
            if tail > RELATIVE_TOLERANCE * scale {
                return Err(Error::Quadrature(format!(
                    "integrand is not negligible at the truncation edge (y = {y}, tau = {tau})"
                )));
            }
            return Ok(Convolution { value: current[0], dy: current[1], dyy: current[2] });
        }
    }
    Err(Error::Quadrature(format!(
        "no convergence after {MAX_DOUBLINGS} doublings at y = {y}, tau = {tau}"
    )))
}

/// `(2 pi sigma^2 tau)^{-1/2} int exp(-(y - z)^2 / (2 sigma^2 tau)) g(z) dz`;
/// returns `g(y)` at `tau = 0`.
pub fn heat_kernel_solve_1d<G: Fn(f64) -> f64>(g: G, sigma: f64, tau: f64, y: f64) -> Result<f64> {
    if tau == 0.0 {
        return Ok(g(y));
    }
    Ok(convolve(g, sigma, tau, y)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Factor {
    /// `x^p`
    Power { p: f64 },
    /// `x v K`
    MaxStrike { strike: f64 },
}

impl Factor {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Factor::Power { p } => x.powf(p),
            Factor::MaxStrike { strike } => x.max(strike),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableTerm {
    pub coefficient: f64,
    /// `(asset, factor)`, at most one factor per asset.
    pub factors: Vec<(usize, Factor)>,
}

/// `sum_terms c prod_(i, f) f(x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparablePayoff {
    pub n: usize,
    pub terms: Vec<SeparableTerm>,
}

impl SeparablePayoff {
    pub fn terminal(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                term.coefficient * term.factors.iter().map(|(i, f)| f.apply(x[*i])).product::<f64>()
            })
            .sum()
    }

    /// `(sqrt(x_1) + ... + sqrt(x_n))^2` expanded.
    pub fn square_root_claim(n: usize) -> Self {
        let mut terms: Vec<SeparableTerm> = (0..n)
            .map(|i| SeparableTerm { coefficient: 1.0, factors: vec![(i, Factor::Power { p: 1.0 })] })
            .collect();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    terms.push(SeparableTerm {
                        coefficient: 1.0,
                        factors: vec![(i, Factor::Power { p: 0.5 }), (j, Factor::Power { p: 0.5 })],
                    });
                }
            }
        }
        SeparablePayoff { n, terms }
    }

    pub fn power_sum(p: &[f64]) -> Self {
        SeparablePayoff {
            n: p.len(),
            terms: p
                .iter()
                .enumerate()
                .map(|(i, &p)| SeparableTerm { coefficient: 1.0, factors: vec![(i, Factor::Power { p })] })
                .collect(),
        }
    }

    pub fn max_strike(strike: f64) -> Self {
        SeparablePayoff {
            n: 1,
            terms: vec![SeparableTerm { coefficient: 1.0, factors: vec![(0, Factor::MaxStrike { strike })] }],
        }
    }

    fn validate(&self) -> Result<()> {
        for term in &self.terms {
            let mut seen = vec![false; self.n];
            for (i, _) in &term.factors {
                if *i >= self.n || std::mem::replace(&mut seen[*i], true) {
                    return Err(Error::InvalidParameter(format!(
                        "separable term uses asset {i} out of range or twice"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Zero-rate solution of a separable claim on independent assets, valued by
/// quadrature. Derivatives come from convolving the derivatives of the
/// kernel, so the value and its derivatives share one quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernelSolution {
    payoff: SeparablePayoff,
    sigma: Vec<f64>,
    horizon: f64,
}

/// Per-term, per-factor convolutions at one point.
type Pieces = Vec<Vec<(usize, Convolution)>>;

impl HeatKernelSolution {
    pub fn new(payoff: SeparablePayoff, sigma: Vec<f64>, horizon: f64) -> Result<Self> {
        payoff.validate()?;
        if sigma.len() != payoff.n {
            return Err(Error::Dimension(format!(
                "payoff has {} assets, {} volatilities given",
                payoff.n,
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("heat-kernel volatilities must be positive".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        Ok(HeatKernelSolution { payoff, sigma, horizon })
    }

    fn pieces(&self, x: &[f64], t: f64) -> Result<Pieces> {
        let tau = self.horizon - t;
        self.payoff
            .terms
            .iter()
            .map(|term| {
                term.factors
                    .iter()
                    .map(|(i, factor)| {
                        let s2 = self.sigma[*i] * self.sigma[*i];
                        let y = x[*i].ln() + s2 * t / 2.0;
                        let shift = s2 * self.horizon / 2.0;
                        let g = |z: f64| factor.apply((z - shift).exp());
                        convolve(g, self.sigma[*i], tau, y).map(|c| (*i, c))
                    })
                    .collect()
            })
            .collect()
    }

    /// Value with the quadrature error surfaced.
    pub fn try_value(&self, x: &[f64], t: f64) -> Result<f64> {
        if t >= self.horizon {
            return Ok(self.payoff.terminal(x));
        }
        let pieces = self.pieces(x, t)?;
        Ok(self
            .payoff
            .terms
            .iter()
            .zip(&pieces)
            .map(|(term, p)| term.coefficient * p.iter().map(|(_, c)| c.value).product::<f64>())
            .sum())
    }
}

fn product_except(p: &[(usize, Convolution)], skip: &[usize]) -> f64 {
    p.iter().filter(|(i, _)| !skip.contains(i)).map(|(_, c)| c.value).product()
}

impl GeneratingFunction for HeatKernelSolution {
    fn name(&self) -> String {
        "heat_kernel_solution".into()
    }
    fn arity(&self) -> usize {
        self.payoff.n
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::Unknown
    }
    fn horizon(&self) -> Option<f64> {
        Some(self.horizon)
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        self.try_value(x, t).unwrap_or(f64::NAN)
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let pieces = self.pieces(x, t).ok()?;
        let mut grad = vec![0.0; x.len()];
        for (term, p) in self.payoff.terms.iter().zip(&pieces) {
            for (i, c) in p {
                grad[*i] += term.coefficient * c.dy * product_except(p, &[*i]) / x[*i];
            }
        }
        Some(grad)
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        let pieces = self.pieces(x, t).ok()?;
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        for (term, p) in self.payoff.terms.iter().zip(&pieces) {
            for (i, ci) in p {
                let rest = product_except(p, &[*i]);
                h[(*i, *i)] += term.coefficient * (ci.dyy - ci.dy) * rest / (x[*i] * x[*i]);
                for (j, cj) in p {
                    if i != j {
                        let rest = product_except(p, &[*i, *j]);
                        h[(*i, *j)] += term.coefficient * ci.dy * cj.dy * rest / (x[*i] * x[*j]);
                    }
                }
            }
        }
        Some(h)
    }
    fn analytic_time_derivative(&self, x: &[f64], t: f64) -> Option<f64> {
        // d/dt = sum_i (sigma_i^2 / 2) (d/dy_i - d^2/dy_i^2) along y(x, t), tau = T - t.
        let pieces = self.pieces(x, t).ok()?;
        let mut dt = 0.0;
        for (term, p) in self.payoff.terms.iter().zip(&pieces) {
            for (i, c) in p {
                let s2 = self.sigma[*i] * self.sigma[*i];
                dt += term.coefficient * 0.5 * s2 * (c.dy - c.dyy) * product_except(p, &[*i]);
            }
        }
        Some(dt)
    }
}
