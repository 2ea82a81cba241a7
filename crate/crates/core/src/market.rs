//! Market models and exact log-space price path simulation.
//!
//! Risky assets follow
//!
//! ```text
//! d log X_i(t) = gamma_i dt + sum_l zeta_{i,l} dW_l(t),    i = 1..n, l = 1..d
//! ```
//!
//! and the riskless asset follows `d log X_0(t) = gamma_0 dt`. With constant
//! coefficients the log-space Euler step is exact in distribution, and prices
//! are positive by construction.
//!
//! Randomness: every path owns a ChaCha20 stream keyed by `(seed, path_index)`
//! (seed through `seed_from_u64`, path index as the ChaCha stream id). Standard
//! normals come from the Box-Muller transform, both outputs used in order:
//! `u1 = 1 - U`, `u2 = U'` with `U` the 53-bit uniform on `[0, 1)`, then
//! `r = sqrt(-2 ln u1)`, `z = (r cos 2 pi u2, r sin 2 pi u2)`. Changing any of
//! this changes every stored path, so it is fixed.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A coefficient specification. Only constants exist today; the untagged
/// representation keeps the JSON a plain number for them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Constant(f64),
}

impl RateSpec {
    pub fn at(&self, _t: f64) -> f64 {
        match *self {
            RateSpec::Constant(v) => v,
        }
    }
}

/// Volatility loadings `zeta`, an `n x d` matrix given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LoadingSpec {
    Constant(Vec<Vec<f64>>),
}

impl LoadingSpec {
    pub fn rows(&self) -> &[Vec<f64>] {
        match self {
            LoadingSpec::Constant(rows) => rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    /// Number of risky assets.
    pub n: usize,
    /// Number of Brownian drivers.
    pub d: usize,
    /// Log growth rate of each risky asset.
    pub growth: Vec<RateSpec>,
    pub vol: LoadingSpec,
    pub riskless_rate: RateSpec,
    /// `X_1(0), ..., X_n(0)`.
    pub initial_prices: Vec<f64>,
    /// `X_0(0)`.
    #[serde(default = "one")]
    pub initial_riskless: f64,
}

fn one() -> f64 {
    1.0
}

impl MarketModel {
    pub fn new(
        growth: Vec<f64>,
        vol: Vec<Vec<f64>>,
        riskless_rate: f64,
        initial_prices: Vec<f64>,
        initial_riskless: f64,
    ) -> Result<Self> {
        let n = initial_prices.len();
        let d = vol.first().map_or(0, Vec::len);
        let model = MarketModel {
            n,
            d,
            growth: growth.into_iter().map(RateSpec::Constant).collect(),
            vol: LoadingSpec::Constant(vol),
            riskless_rate: RateSpec::Constant(riskless_rate),
            initial_prices,
            initial_riskless,
        };
        model.validate()?;
        Ok(model)
    }

    /// Independent drivers (`d = n`) with per-asset volatilities `sigma`.
    pub fn diagonal(
        growth: Vec<f64>,
        sigma: &[f64],
        riskless_rate: f64,
        initial_prices: Vec<f64>,
        initial_riskless: f64,
    ) -> Result<Self> {
        let n = sigma.len();
        let vol = (0..n)
            .map(|i| (0..n).map(|j| if i == j { sigma[i] } else { 0.0 }).collect())
            .collect();
        Self::new(growth, vol, riskless_rate, initial_prices, initial_riskless)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if self.d < self.n {
            return bad(format!("d = {} must be at least n = {}", self.d, self.n));
        }
        if self.initial_prices.len() != self.n {
            return bad(format!(
                "initial_prices has {} entries, expected n = {}",
                self.initial_prices.len(),
                self.n
            ));
        }
        if self.growth.len() != self.n {
            return bad(format!(
                "growth has {} entries, expected n = {}",
                self.growth.len(),
                self.n
            ));
        }
        let rows = self.vol.rows();
        if rows.len() != self.n || rows.iter().any(|r| r.len() != self.d) {
            return bad(format!("vol must be an {} x {} matrix", self.n, self.d));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return bad("vol entries must be finite".into());
        }
        if self.growth.iter().any(|g| !g.at(0.0).is_finite())
            || !self.riskless_rate.at(0.0).is_finite()
        {
            return bad("growth and riskless rates must be finite".into());
        }
        for (i, &x) in self.initial_prices.iter().enumerate() {
            if !(x > 0.0 && x.is_finite()) {
                return bad(format!("initial price of asset {} must be positive, got {x}", i + 1));
            }
        }
        if !(self.initial_riskless > 0.0 && self.initial_riskless.is_finite()) {
            return bad(format!(
                "initial riskless price must be positive, got {}",
                self.initial_riskless
            ));
        }
        let cov = covariance_matrix(self);
        let min_eig = cov.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-12 {
            return bad(format!("covariance has negative eigenvalue {min_eig}"));
        }
        Ok(())
    }

    pub fn gamma0(&self) -> f64 {
        self.riskless_rate.at(0.0)
    }

    pub fn loading(&self, i: usize, l: usize) -> f64 {
        self.vol.rows()[i][l]
    }
}

fn covariance_matrix(model: &MarketModel) -> DMatrix<f64> {
    let z = model.vol.rows();
    DMatrix::from_fn(model.n, model.n, |i, j| {
        z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum()
    })
}

/// The covariance rates `sigma_ij = sum_l zeta_il zeta_jl`, constant in time.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceView {
    matrix: DMatrix<f64>,
}

impl CovarianceView {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension("covariance must be square".into()));
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-14 * (1.0 + matrix[(i, j)].abs()) {
                    return Err(Error::InvalidParameter("covariance must be symmetric".into()));
                }
            }
        }
        Ok(CovarianceView { matrix })
    }

    pub fn diagonal(sigma: &[f64]) -> Self {
        let n = sigma.len();
        CovarianceView {
            matrix: DMatrix::from_fn(n, n, |i, j| if i == j { sigma[i] * sigma[i] } else { 0.0 }),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `sigma(t)`; constant.
    pub fn at(&self, _t: f64) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Per-asset volatilities `sqrt(sigma_ii)`.
    pub fn volatilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].sqrt()).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)] == 0.0))
    }

    /// The covariance of `(X_0, X_1, ..., X_n)`: a zero row and column for the
    /// riskless slot.
    pub fn with_riskless(&self) -> Self {
        let n = self.dim();
        CovarianceView {
            matrix: DMatrix::from_fn(n + 1, n + 1, |i, j| {
                if i == 0 || j == 0 {
                    0.0
                } else {
                    self.matrix[(i - 1, j - 1)]
                }
            }),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigen().eigenvalues.min()
    }
}

pub fn covariance(model: &MarketModel) -> CovarianceView {
    CovarianceView {
        matrix: covariance_matrix(model),
    }
}

/// Uniform grid `t_k = k T / M`, `k = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 1 {
            return Err(Error::InvalidGrid("steps must be at least 1".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }
}

/// Box-Muller standard normal stream over a keyed ChaCha20 generator.
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        NormalStream { rng, spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// One realization of `(X_0, X_1, ..., X_n)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub grid: TimeGrid,
    pub n: usize,
    pub d: usize,
    /// Row-major `(M + 1) x n` matrix of `log X_i(t_k)`.
    log_prices: Vec<f64>,
    /// `X_0(t_k)`.
    pub riskless: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
    /// Row-major `M x d` standard normal draws that drove the path.
    increments: Vec<f64>,
}

impl PricePath {
    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn log_prices_at(&self, k: usize) -> &[f64] {
        &self.log_prices[k * self.n..(k + 1) * self.n]
    }

    pub fn prices_at(&self, k: usize) -> Vec<f64> {
        self.log_prices_at(k).iter().map(|y| y.exp()).collect()
    }

    pub fn riskless_at(&self, k: usize) -> f64 {
        self.riskless[k]
    }

    pub fn increments_at(&self, k: usize) -> &[f64] {
        &self.increments[k * self.d..(k + 1) * self.d]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.grid.time(k)
    }

    /// Subsample every `factor`-th node. Coarse increments are the block sums
    /// of the fine draws divided by `sqrt(factor)`, so the coarse path is the
    /// same Brownian realization seen on a grid with `factor` times the step.
    pub fn coarsen(&self, factor: usize) -> Result<PricePath> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps()
            )));
        }
        let steps = self.steps() / factor;
        let mut log_prices = Vec::with_capacity((steps + 1) * self.n);
        let mut riskless = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            log_prices.extend_from_slice(self.log_prices_at(k * factor));
            riskless.push(self.riskless[k * factor]);
        }
        let scale = (factor as f64).sqrt();
        let mut increments = vec![0.0; steps * self.d];
        for k in 0..steps {
            for j in 0..factor {
                for (acc, z) in increments[k * self.d..(k + 1) * self.d]
                    .iter_mut()
                    .zip(self.increments_at(k * factor + j))
                {
                    *acc += z;
                }
            }
        }
        increments.iter_mut().for_each(|z| *z /= scale);
        Ok(PricePath {
            grid: TimeGrid { horizon: self.grid.horizon, steps },
            n: self.n,
            d: self.d,
            log_prices,
            riskless,
            seed: self.seed,
            path_index: self.path_index,
            increments,
        })
    }

    /// CSV with header `t,X0,X1,...,Xn`, one row per node, 17 significant
    /// digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,X0");
        for i in 1..=self.n {
            let _ = write!(out, ",X{i}");
        }
        out.push('\n');
        for k in 0..self.grid.nodes() {
            let _ = write!(out, "{}", fmt17(self.time(k)));
            let _ = write!(out, ",{}", fmt17(self.riskless[k]));
            for y in self.log_prices_at(k) {
                let _ = write!(out, ",{}", fmt17(y.exp()));
            }
            out.push('\n');
        }
        out
    }

    /// Reads a path back from [`PricePath::to_csv`] output. The Gaussian
    /// increments are not part of the file and come back empty (zeros).
    pub fn from_csv(text: &str, seed: u64, path_index: u64) -> Result<PricePath> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Csv("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "t" || cols[1] != "X0" {
            return Err(Error::Csv(format!("unexpected header `{header}`")));
        }
        let n = cols.len() - 2;
        let mut times = Vec::new();
        let mut riskless = Vec::new();
        let mut log_prices = Vec::new();
        for (row, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Csv(format!("row {}: {e}", row + 1)))?;
            if vals.len() != n + 2 {
                return Err(Error::Csv(format!("row {} has {} fields", row + 1, vals.len())));
            }
            times.push(vals[0]);
            riskless.push(vals[1]);
            log_prices.extend(vals[2..].iter().map(|x| x.ln()));
        }
        if times.len() < 2 {
            return Err(Error::Csv("need at least two rows".into()));
        }
        let grid = TimeGrid::new(*times.last().unwrap(), times.len() - 1)?;
        Ok(PricePath {
            grid,
            n,
            d: n,
            log_prices,
            riskless,
            seed,
            path_index,
            increments: vec![0.0; grid.steps * n],
        })
    }
}

pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Simulates path 0 of the stream keyed by `seed`.
pub fn simulate_path(model: &MarketModel, horizon: f64, steps: usize, seed: u64) -> Result<PricePath> {
    simulate_path_indexed(model, TimeGrid::new(horizon, steps)?, seed, 0)
}

pub fn simulate_path_indexed(
    model: &MarketModel,
    grid: TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<PricePath> {
    model.validate()?;
    let (n, d) = (model.n, model.d);
    let m = grid.steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut stream = NormalStream::new(seed, path_index);

    let mut increments = Vec::with_capacity(m * d);
    let mut log_prices = Vec::with_capacity((m + 1) * n);
    log_prices.extend(model.initial_prices.iter().map(|x| x.ln()));
    let mut current: Vec<f64> = log_prices.clone();

    for k in 0..m {
        let t = grid.time(k);
        let z: Vec<f64> = (0..d).map(|_| stream.next_normal()).collect();
        for (i, y) in current.iter_mut().enumerate() {
            let diffusion: f64 = (0..d).map(|l| model.loading(i, l) * z[l]).sum();
            *y += model.growth[i].at(t) * dt + diffusion * sqrt_dt;
            let x = y.exp();
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::NonFinitePrice { node: k + 1, asset: i + 1 });
            }
        }
        increments.extend_from_slice(&z);
        log_prices.extend_from_slice(&current);
    }

    let x0 = model.initial_riskless;
    let gamma0 = model.gamma0();
    let riskless: Vec<f64> = (0..=m).map(|k| x0 * (gamma0 * grid.time(k)).exp()).collect();
    if let Some(k) = riskless.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::NonFinitePrice { node: k, asset: 0 });
    }

    Ok(PricePath {
        grid,
        n,
        d,
        log_prices,
        riskless,
        seed,
        path_index,
        increments,
    })
}

/// The path of `(1, X_1 / X_0, ..., X_n / X_0)`.
pub fn discount_path(path: &PricePath) -> PricePath {
    let mut out = path.clone();
    for k in 0..path.grid.nodes() {
        let shift = path.riskless[k].ln();
        for y in &mut out.log_prices[k * path.n..(k + 1) * path.n] {
            *y -= shift;
        }
    }
    out.riskless = vec![1.0; path.grid.nodes()];
    out
}

/// Inverse of [`discount_path`] given the original riskless leg.
pub fn undiscount_path(discounted: &PricePath, riskless: &[f64]) -> Result<PricePath> {
    if riskless.len() != discounted.grid.nodes() {
        return Err(Error::Dimension("riskless leg length does not match the grid".into()));
    }
    let mut out = discounted.clone();
    for (k, x0) in riskless.iter().enumerate() {
        let shift = x0.ln();
        for y in &mut out.log_prices[k * out.n..(k + 1) * out.n] {
            *y += shift;
        }
    }
    out.riskless = riskless.to_vec();
    Ok(out)
}
