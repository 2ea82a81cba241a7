//! Structural transforms: homogenization over a riskless slot and the
//! degree-one extension of functions defined on the unit simplex.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{GeneratingFunction, Homogeneity, SharedFunction, Smoothness};

/// `x_0 V(x / x_0, t)` over `(x_0, x_1, ..., x_n)`.
#[derive(Debug, Clone)]
pub struct Homogenized {
    inner: SharedFunction,
}

pub fn homogenize(inner: SharedFunction) -> Homogenized {
    Homogenized { inner }
}

impl Homogenized {
    pub fn inner(&self) -> &SharedFunction {
        &self.inner
    }

    fn split(x: &[f64]) -> (f64, Vec<f64>) {
        let x0 = x[0];
        (x0, x[1..].iter().map(|xi| xi / x0).collect())
    }
}

impl GeneratingFunction for Homogenized {
    fn name(&self) -> String {
        format!("homogenized({})", self.inner.name())
    }
    fn arity(&self) -> usize {
        self.inner.arity() + 1
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::DegreeOne
    }
    fn smoothness(&self) -> Smoothness {
        self.inner.smoothness()
    }
    fn horizon(&self) -> Option<f64> {
        self.inner.horizon()
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        let (x0, y) = Self::split(x);
        x0 * self.inner.raw_value(&y, t)
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let (_, y) = Self::split(x);
        let g = self.inner.analytic_gradient(&y, t)?;
        let v = self.inner.raw_value(&y, t);
        let lead = v - y.iter().zip(&g).map(|(yi, gi)| yi * gi).sum::<f64>();
        Some(std::iter::once(lead).chain(g).collect())
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        let (x0, y) = Self::split(x);
        let h = self.inner.analytic_hessian(&y, t)?;
        let yv = DVector::from_column_slice(&y);
        let hy = &h * &yv;
        let n = y.len();
        let mut out = DMatrix::zeros(n + 1, n + 1);
        out[(0, 0)] = yv.dot(&hy) / x0;
        for i in 0..n {
            out[(0, i + 1)] = -hy[i] / x0;
            out[(i + 1, 0)] = -hy[i] / x0;
            for j in 0..n {
                out[(i + 1, j + 1)] = h[(i, j)] / x0;
            }
        }
        Some(out)
    }
    fn analytic_time_derivative(&self, x: &[f64], t: f64) -> Option<f64> {
        let (x0, y) = Self::split(x);
        Some(x0 * self.inner.analytic_time_derivative(&y, t)?)
    }
    fn closed_form_weights(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let (_, y) = Self::split(x);
        let w = self.inner.closed_form_weights(&y, t)?;
        let lead = 1.0 - w.iter().sum::<f64>();
        Some(std::iter::once(lead).chain(w).collect())
    }
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        let (lo, hi) = self.inner.weight_bounds()?;
        let n = self.inner.arity() as f64;
        Some((lo.min(1.0 - n * hi), hi.max(1.0 - n * lo)))
    }
}

/// A positive function of the market weights `mu` (a point of the unit
/// simplex) and time, smooth on a neighbourhood of the simplex.
pub trait SimplexFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn arity(&self) -> usize;
    fn value(&self, mu: &[f64], t: f64) -> f64;
    fn gradient(&self, _mu: &[f64], _t: f64) -> Option<Vec<f64>> {
        None
    }
    fn hessian(&self, _mu: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        None
    }
    fn time_derivative(&self, _mu: &[f64], _t: f64) -> Option<f64> {
        None
    }
}

/// `-sum mu_i log mu_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsShannonEntropy {
    pub n: usize,
}

impl SimplexFunction for GibbsShannonEntropy {
    fn name(&self) -> String {
        "gibbs_shannon_entropy".into()
    }
    fn arity(&self) -> usize {
        self.n
    }
    fn value(&self, mu: &[f64], _t: f64) -> f64 {
        -mu.iter().map(|m| m * m.ln()).sum::<f64>()
    }
    fn gradient(&self, mu: &[f64], _t: f64) -> Option<Vec<f64>> {
        Some(mu.iter().map(|m| -m.ln() - 1.0).collect())
    }
    fn hessian(&self, mu: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(self.n, self.n, |i, j| if i == j { -1.0 / mu[i] } else { 0.0 }))
    }
    fn time_derivative(&self, _mu: &[f64], _t: f64) -> Option<f64> {
        Some(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSimplex {
    pub n: usize,
    pub c: f64,
}

impl SimplexFunction for ConstantSimplex {
    fn name(&self) -> String {
        "constant".into()
    }
    fn arity(&self) -> usize {
        self.n
    }
    fn value(&self, _mu: &[f64], _t: f64) -> f64 {
        self.c
    }
    fn gradient(&self, _mu: &[f64], _t: f64) -> Option<Vec<f64>> {
        Some(vec![0.0; self.n])
    }
    fn hessian(&self, _mu: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.n, self.n))
    }
    fn time_derivative(&self, _mu: &[f64], _t: f64) -> Option<f64> {
        Some(0.0)
    }
}

/// `z S(x / z, t)` with `z = x_1 + ... + x_n`. Generates the same
/// portfolio as `S` evaluated at the market weights.
#[derive(Debug, Clone)]
pub struct SimplexExtension {
    inner: Arc<dyn SimplexFunction>,
}

pub fn extend_simplex_function(inner: Arc<dyn SimplexFunction>) -> SimplexExtension {
    SimplexExtension { inner }
}

impl SimplexExtension {
    fn split(x: &[f64]) -> (f64, Vec<f64>) {
        let z: f64 = x.iter().sum();
        (z, x.iter().map(|xi| xi / z).collect())
    }
}

impl GeneratingFunction for SimplexExtension {
    fn name(&self) -> String {
        format!("extended({})", self.inner.name())
    }
    fn arity(&self) -> usize {
        self.inner.arity()
    }
    fn homogeneity(&self) -> Homogeneity {
        Homogeneity::DegreeOne
    }
    fn raw_value(&self, x: &[f64], t: f64) -> f64 {
        let (z, mu) = Self::split(x);
        z * self.inner.value(&mu, t)
    }
    fn analytic_gradient(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let (_, mu) = Self::split(x);
        let g = self.inner.gradient(&mu, t)?;
        let s = self.inner.value(&mu, t);
        let mg: f64 = mu.iter().zip(&g).map(|(m, gi)| m * gi).sum();
        Some(g.iter().map(|gi| s + gi - mg).collect())
    }
    fn analytic_hessian(&self, x: &[f64], t: f64) -> Option<DMatrix<f64>> {
        let (z, mu) = Self::split(x);
        let h = self.inner.hessian(&mu, t)?;
        let m = DVector::from_column_slice(&mu);
        let hm = &h * &m;
        let mhm = m.dot(&hm);
        let n = mu.len();
        Some(DMatrix::from_fn(n, n, |i, j| (h[(i, j)] - hm[i] - hm[j] + mhm) / z))
    }
    fn analytic_time_derivative(&self, x: &[f64], t: f64) -> Option<f64> {
        let (z, mu) = Self::split(x);
        Some(z * self.inner.time_derivative(&mu, t)?)
    }
}
