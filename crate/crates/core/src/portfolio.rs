//! Portfolios generated by a function along a price path.
//!
//! The weights are `pi_i = x_i D_i V / V` for each risky argument and the
//! riskless asset takes the rest, `pi_0 = 1 - sum_{i>=1} pi_i`. A function of
//! `n` risky prices sees the path through `(X_1, ..., X_n)`; a function of
//! arity `n + 1` sees `(X_0, X_1, ..., X_n)`.
//!
//! Portfolio value is integrated with left-point weights, either in log form
//!
//! ```text
//! dlog Z = sum_i pi_i dlog X_i + pi_0 dlog X_0 + gamma*_pi dt
//! ```
//!
//! or arithmetically from relative price changes. The drift process
//! accumulates
//!
//! ```text
//! dPhi = -1/(2V) sum_ij D_ij V x_i x_j sigma_ij dt - D_t V / V dt + gamma_0 (pi_0 - w_0) dt
//! ```
//!
//! where `w_0 = x_0 D_0 V / V` when `V` has a riskless slot and 0 otherwise.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genfun::{self, DerivativeBackend, GeneratingFunction, Homogeneity, Smoothness};
use crate::market::{fmt17, CovarianceView, PricePath};

pub const DEFAULT_WEIGHT_BOUND: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub t: f64,
    pub riskless: f64,
    pub risky: Vec<f64>,
}

impl WeightVector {
    pub fn total(&self) -> f64 {
        self.riskless + self.risky.iter().sum::<f64>()
    }

    /// `(pi_0, pi_1, ..., pi_n)`.
    pub fn all(&self) -> Vec<f64> {
        std::iter::once(self.riskless).chain(self.risky.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueScheme {
    #[default]
    Logarithmic,
    /// `Z_{k+1} = Z_k sum_i pi_i X_i(t_{k+1}) / X_i(t_k)`.
    Arithmetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineOptions {
    pub backend: DerivativeBackend,
    pub weight_bound: f64,
    pub scheme: ValueScheme,
    /// `log Z(0)`; `None` starts the portfolio at `log V(X(0), 0)`.
    pub initial_log_value: Option<f64>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            backend: DerivativeBackend::Analytic,
            weight_bound: DEFAULT_WEIGHT_BOUND,
            scheme: ValueScheme::Logarithmic,
            initial_log_value: None,
        }
    }
}

/// How the function's arguments map onto the market.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Risky,
    WithRiskless,
}

fn layout<F: GeneratingFunction + ?Sized>(f: &F, n: usize) -> Result<Layout> {
    if f.arity() == n {
        Ok(Layout::Risky)
    } else if f.arity() == n + 1 {
        Ok(Layout::WithRiskless)
    } else {
        Err(Error::Dimension(format!(
            "`{}` takes {} prices; the market has {n} risky assets",
            f.name(),
            f.arity()
        )))
    }
}

fn arguments(layout: Layout, x0: f64, x: &[f64]) -> Vec<f64> {
    match layout {
        Layout::Risky => x.to_vec(),
        Layout::WithRiskless => std::iter::once(x0).chain(x.iter().copied()).collect(),
    }
}

/// `x_j D_j V / V` for every argument of `f`.
fn argument_weights<F: GeneratingFunction + ?Sized>(
    f: &F,
    args: &[f64],
    t: f64,
    value: f64,
    backend: DerivativeBackend,
) -> Result<Vec<f64>> {
    if let Some(w) = f.closed_form_weights(args, t) {
        return Ok(w);
    }
    if f.smoothness() == Smoothness::NonSmooth {
        return Err(Error::NonSmooth { function: f.name() });
    }
    let grad = genfun::gradient(f, args, t, backend)?;
    Ok(args.iter().zip(&grad).map(|(a, g)| a * g / value).collect())
}

fn assemble(
    layout: Layout,
    degree_one: bool,
    closed_form: bool,
    t: f64,
    mut w: Vec<f64>,
) -> WeightVector {
    match layout {
        Layout::Risky => {
            if degree_one {
                let excess = w.iter().sum::<f64>() - 1.0;
                if excess != 0.0 && !closed_form {
                    // Finite-difference noise goes into the largest slot.
                    let k = (0..w.len())
                        .max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()))
                        .unwrap_or(0);
                    let rest: f64 = (0..w.len()).filter(|&j| j != k).map(|j| w[j]).sum();
                    w[k] = 1.0 - rest;
                }
                WeightVector { t, riskless: 0.0, risky: w }
            } else {
                let riskless = 1.0 - w.iter().sum::<f64>();
                WeightVector { t, riskless, risky: w }
            }
        }
        Layout::WithRiskless => {
            let risky = w.split_off(1);
            let riskless = 1.0 - risky.iter().sum::<f64>();
            WeightVector { t, riskless, risky }
        }
    }
}

fn check_bounds(w: &WeightVector, bound: f64) -> Result<()> {
    for (index, value) in w.all().into_iter().enumerate() {
        if !value.is_finite() || value.abs() > bound {
            return Err(Error::WeightBound { index, value, bound, t: w.t });
        }
    }
    Ok(())
}

/// Weights generated by `f` at risky prices `x` and riskless price `x0`.
/// `x0` is only read when `f` has a riskless slot.
pub fn weights_at<F: GeneratingFunction + ?Sized>(
    f: &F,
    x0: f64,
    x: &[f64],
    t: f64,
    options: &EngineOptions,
) -> Result<WeightVector> {
    let layout = layout(f, x.len())?;
    let args = arguments(layout, x0, x);
    let value = genfun::evaluate(f, &args, t)?;
    let closed_form = f.closed_form_weights(&args, t).is_some();
    let w = argument_weights(f, &args, t, value, options.backend)?;
    let out = assemble(layout, f.homogeneity() == Homogeneity::DegreeOne, closed_form, t, w);
    check_bounds(&out, options.weight_bound)?;
    Ok(out)
}

/// `1/2 (sum pi_i sigma_ii - sum pi_i pi_j sigma_ij)` over the risky assets.
pub fn excess_growth(weights: &WeightVector, cov: &CovarianceView, t: f64) -> f64 {
    let s = cov.at(t);
    let pi = &weights.risky;
    let mut diag = 0.0;
    let mut quad = 0.0;
    for i in 0..pi.len() {
        diag += pi[i] * s[(i, i)];
        for j in 0..pi.len() {
            quad += pi[i] * pi[j] * s[(i, j)];
        }
    }
    0.5 * (diag - quad)
}

/// Weights and, for smooth functions, the drift rate normalised by `V`.
fn node_state<F: GeneratingFunction + ?Sized>(
    f: &F,
    layout: Layout,
    x0: f64,
    x: &[f64],
    t: f64,
    cov: &CovarianceView,
    gamma0: f64,
    options: &EngineOptions,
) -> Result<(WeightVector, Option<f64>)> {
    let args = arguments(layout, x0, x);
    let degree_one = f.homogeneity() == Homogeneity::DegreeOne;
    let closed = f.closed_form_weights(&args, t);
    if f.smoothness() == Smoothness::NonSmooth {
        let w = argument_weights(f, &args, t, genfun::evaluate(f, &args, t)?, options.backend)?;
        let out = assemble(layout, degree_one, true, t, w);
        check_bounds(&out, options.weight_bound)?;
        return Ok((out, None));
    }
    let d = genfun::derivatives(f, &args, t, options.backend)?;
    let closed_form = closed.is_some();
    let w = closed.unwrap_or_else(|| args.iter().zip(&d.gradient).map(|(a, g)| a * g / d.value).collect());
    let weights = assemble(layout, degree_one, closed_form, t, w);
    check_bounds(&weights, options.weight_bound)?;

    let offset = match layout {
        Layout::Risky => 0,
        Layout::WithRiskless => 1,
    };
    let s = cov.at(t);
    let mut quad = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            quad += d.hessian[(i + offset, j + offset)] * x[i] * x[j] * s[(i, j)];
        }
    }
    let slot_weight = match layout {
        Layout::Risky => 0.0,
        Layout::WithRiskless => x0 * d.gradient[0] / d.value,
    };
    let rate = -0.5 * quad / d.value - d.time / d.value + gamma0 * (weights.riskless - slot_weight);
    Ok((weights, Some(rate)))
}

/// Rate of the drift process at one point, normalised by `V`.
pub fn drift_rate<F: GeneratingFunction + ?Sized>(
    f: &F,
    x0: f64,
    x: &[f64],
    t: f64,
    cov: &CovarianceView,
    gamma0: f64,
    options: &EngineOptions,
) -> Result<f64> {
    let layout = layout(f, x.len())?;
    node_state(f, layout, x0, x, t, cov, gamma0, options)?
        .1
        .ok_or_else(|| Error::NonSmooth { function: f.name() })
}

/// Node-by-node record of a generated portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioTrajectory {
    pub function: String,
    pub times: Vec<f64>,
    pub weights: Vec<WeightVector>,
    pub log_value: Vec<f64>,
    /// `log V(X(t_k), t_k)`.
    pub log_function: Vec<f64>,
    /// Accumulated analytic drift; absent for non-smooth functions.
    pub phi_analytic: Option<Vec<f64>>,
    pub phi_residual: Vec<f64>,
    pub excess_growth: Vec<f64>,
}

impl PortfolioTrajectory {
    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    /// `|log Z - log V - Phi|` at each node, relative to the initial offset.
    pub fn decomposition_gaps(&self) -> Option<Vec<f64>> {
        let phi = self.phi_analytic.as_ref()?;
        let base = self.log_value[0] - self.log_function[0];
        Some(
            (0..self.nodes())
                .map(|k| (self.log_value[k] - self.log_function[k] - base - phi[k]).abs())
                .collect(),
        )
    }

    /// Header `t,pi0,pi1..pin,logZ,phi_analytic,phi_residual,egr`.
    pub fn to_csv(&self) -> String {
        let n = self.weights.first().map_or(0, |w| w.risky.len());
        let mut out = String::from("t,pi0");
        for i in 1..=n {
            let _ = write!(out, ",pi{i}");
        }
        out.push_str(",logZ,phi_analytic,phi_residual,egr\n");
        for k in 0..self.nodes() {
            out.push_str(&fmt17(self.times[k]));
            for w in self.weights[k].all() {
                out.push(',');
                out.push_str(&fmt17(w));
            }
            let phi = self.phi_analytic.as_ref().map_or(f64::NAN, |p| p[k]);
            for v in [self.log_value[k], phi, self.phi_residual[k], self.excess_growth[k]] {
                out.push(',');
                out.push_str(&fmt17(v));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the generated portfolio along `path`. Derivatives are taken at
/// `t_0, ..., t_{M-1}`; the terminal node only evaluates `V`, and its
/// weights repeat those of `t_{M-1}`.
pub fn integrate_value<F: GeneratingFunction + ?Sized>(
    f: &F,
    path: &PricePath,
    cov: &CovarianceView,
    gamma0: f64,
    options: &EngineOptions,
) -> Result<PortfolioTrajectory> {
    let layout = layout(f, path.n)?;
    let steps = path.steps();
    let dt = path.grid.dt();
    let smooth = f.smoothness() == Smoothness::Smooth;

    let mut times = Vec::with_capacity(steps + 1);
    let mut weights: Vec<WeightVector> = Vec::with_capacity(steps + 1);
    let mut log_value = Vec::with_capacity(steps + 1);
    let mut log_function = Vec::with_capacity(steps + 1);
    let mut phi = Vec::with_capacity(steps + 1);
    let mut egr = Vec::with_capacity(steps + 1);
    let mut rate = None;

    for k in 0..=steps {
        let t = path.time(k);
        let x = path.prices_at(k);
        let x0 = path.riskless_at(k);
        let args = arguments(layout, x0, &x);
        let v = genfun::evaluate(f, &args, t)?;
        times.push(t);
        log_function.push(v.ln());

        if k == 0 {
            log_value.push(options.initial_log_value.unwrap_or(v.ln()));
            phi.push(0.0);
        } else {
            let prev = &weights[k - 1];
            let lx_prev = path.log_prices_at(k - 1);
            let lx = path.log_prices_at(k);
            let z = match options.scheme {
                ValueScheme::Logarithmic => {
                    let mut dz = prev.riskless * (x0 / path.riskless_at(k - 1)).ln();
                    for i in 0..path.n {
                        dz += prev.risky[i] * (lx[i] - lx_prev[i]);
                    }
                    log_value[k - 1] + dz + egr[k - 1] * dt
                }
                ValueScheme::Arithmetic => {
                    let mut growth = prev.riskless * x0 / path.riskless_at(k - 1);
                    for i in 0..path.n {
                        growth += prev.risky[i] * (lx[i] - lx_prev[i]).exp();
                    }
                    if !(growth > 0.0) {
                        return Err(Error::NonFinite(format!(
                            "portfolio value left the positive axis at t = {t}"
                        )));
                    }
                    log_value[k - 1] + growth.ln()
                }
            };
            if !z.is_finite() {
                return Err(Error::NonFinite(format!("log portfolio value at t = {t}")));
            }
            log_value.push(z);
            if let Some(r) = rate {
                phi.push(phi[k - 1] + r * dt);
            }
        }

        let w = if k < steps {
            let (w, r) = node_state(f, layout, x0, &x, t, cov, gamma0, options)?;
            rate = r;
            w
        } else {
            let mut w = weights[k - 1].clone();
            w.t = t;
            w
        };
        egr.push(excess_growth(&w, cov, t));
        weights.push(w);
    }

    let phi_residual = (0..=steps)
        .map(|k| log_value[k] - log_function[k] - (log_value[0] - log_function[0]))
        .collect();
    Ok(PortfolioTrajectory {
        function: f.name(),
        times,
        weights,
        log_value,
        log_function,
        phi_analytic: smooth.then_some(phi),
        phi_residual,
        excess_growth: egr,
    })
}

/// `max_k |log Z(t_k) - log V(X(t_k), t_k) - Phi(t_k)|`.
pub fn decomposition_check<F: GeneratingFunction + ?Sized>(
    f: &F,
    path: &PricePath,
    cov: &CovarianceView,
    gamma0: f64,
    options: &EngineOptions,
) -> Result<f64> {
    let traj = integrate_value(f, path, cov, gamma0, options)?;
    let gaps = traj
        .decomposition_gaps()
        .ok_or_else(|| Error::NonSmooth { function: f.name() })?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeReport {
    pub residual_drift: Vec<f64>,
    pub terminal: f64,
    /// Largest increase of the residual drift between adjacent nodes.
    pub max_upward_move: f64,
    pub noise_band: f64,
    pub within_band: bool,
}

/// `3 max_i sigma_ii dt`: the tolerance for upward moves of the residual
/// drift of the max portfolio.
pub fn local_time_noise_band(cov: &CovarianceView, dt: f64) -> f64 {
    let s = cov.at(0.0);
    let peak = (0..cov.dim()).map(|i| s[(i, i)]).fold(0.0, f64::max);
    3.0 * peak * dt
}

/// Residual drift of the portfolio generated by `x_1 v x_2`. It should
/// only move down, by the local time of `log X_1 - log X_2` at 0.
pub fn local_time_drift_check(path: &PricePath, cov: &CovarianceView) -> Result<LocalTimeReport> {
    if path.n != 2 {
        return Err(Error::Dimension(format!(
            "the max portfolio needs two assets, path has {}",
            path.n
        )));
    }
    let traj = integrate_value(&genfun::PairwiseMax, path, cov, 0.0, &EngineOptions::default())?;
    let series = traj.phi_residual;
    let max_upward_move = series.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let noise_band = local_time_noise_band(cov, path.grid.dt());
    Ok(LocalTimeReport {
        terminal: *series.last().unwrap_or(&0.0),
        residual_drift: series,
        max_upward_move,
        noise_band,
        within_band: max_upward_move <= noise_band,
    })
}
