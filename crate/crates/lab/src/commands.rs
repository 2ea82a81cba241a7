use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use fgp_core::genfun::{self, FunctionSpec, GeneratingFunction, SharedFunction};
use fgp_core::market::{covariance, simulate_path_indexed, TimeGrid};
use fgp_core::portfolio::{integrate_value, EngineOptions, PortfolioTrajectory};
use fgp_core::replication::hedging::{initial_price, median};
use fgp_core::replication::pricing::PricingOptions;
use fgp_core::replication::{
    hedge_errors, pde_residual, sample_points, three_step_price, ClaimProblem, HedgeRun,
    PdeResidualReport, Verdict,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::report::{fmt17, Output, RunReport};
use crate::LabError;

/// Tolerance for identities that hold to rounding.
const IDENTITY_TOLERANCE: f64 = 1e-12;

pub struct Invocation<'a> {
    pub loaded: &'a LoadedConfig,
    pub out: Option<&'a Path>,
    pub refine: Option<usize>,
}

impl Invocation<'_> {
    fn config(&self) -> &ExperimentConfig {
        &self.loaded.config
    }

    fn output(&self) -> Result<Output, LabError> {
        Output::create(self.config().output_dir(self.out))
    }

    fn report<S: Serialize>(&self, command: &str, passed: bool, summary: S) -> RunReport<S> {
        RunReport {
            command: command.into(),
            version: crate::report::VERSION.into(),
            config_sha256: self.loaded.sha256.clone(),
            config: self.config().clone(),
            passed,
            summary,
        }
    }

    /// Writes the report, manifest and timing, then maps a failed check to
    /// [`LabError::Verdict`].
    fn finish<S: Serialize>(
        &self,
        mut output: Output,
        command: &str,
        passed: bool,
        summary: S,
        started: Instant,
        failure: impl FnOnce() -> String,
    ) -> Result<(), LabError> {
        output.write_json(&format!("{command}.json"), &self.report(command, passed, summary))?;
        output.finish(command, &self.loaded.sha256, started.elapsed().as_secs_f64())?;
        if passed {
            Ok(())
        } else {
            Err(LabError::Verdict(failure()))
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    paths: usize,
    steps: usize,
    terminal_prices: Vec<Vec<f64>>,
}

pub fn simulate(inv: &Invocation) -> Result<(), LabError> {
    let started = Instant::now();
    let cfg = inv.config();
    let grid = cfg.time_grid()?;
    let paths = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| simulate_path_indexed(&cfg.model, grid, cfg.seed, i))
        .collect::<fgp_core::Result<Vec<_>>>()?;
    let mut output = inv.output()?;
    for (i, p) in paths.iter().enumerate() {
        output.write(&format!("paths/{}_{i}.csv", cfg.seed), p.to_csv().as_bytes())?;
    }
    let summary = SimulateSummary {
        paths: paths.len(),
        steps: grid.steps,
        terminal_prices: paths.iter().map(|p| p.prices_at(grid.steps)).collect(),
    };
    inv.finish(output, "simulate", true, summary, started, String::new)
}

#[derive(Debug, Serialize)]
struct PathDecomposition {
    index: u64,
    max_gap: Option<f64>,
    phi_analytic_terminal: Option<f64>,
    phi_residual_terminal: Option<f64>,
    residual_drift_max: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Refinement {
    factor: usize,
    median_gap_coarse: f64,
    median_gap_fine: f64,
    ratio: f64,
}

#[derive(Debug, Serialize)]
struct DecomposeSummary {
    function: String,
    steps: usize,
    max_gap: Option<f64>,
    median_gap: Option<f64>,
    residual_drift_max: f64,
    residual_drift_within_tolerance: bool,
    pi_constant: bool,
    /// Mean of `Phi(T) / T` over paths.
    drift_slope: Option<f64>,
    excess_growth_initial: f64,
    /// For diversity: `Phi(T) = (1 - p) sum egr dt` on every path.
    drift_matches_egr_scaled: Option<bool>,
    refinement: Option<Refinement>,
    per_path: Vec<PathDecomposition>,
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn weights_constant(traj: &PortfolioTrajectory) -> bool {
    traj.weights.windows(2).all(|w| w[0].riskless == w[1].riskless && w[0].risky == w[1].risky)
}

pub fn decompose(inv: &Invocation) -> Result<(), LabError> {
    let started = Instant::now();
    let cfg = inv.config();
    let spec = cfg.function_spec()?;
    let f = spec.build(&cfg.build_context())?;
    let cov = covariance(&cfg.model);
    let gamma0 = cfg.model.gamma0();
    let options = EngineOptions { backend: cfg.backend, ..EngineOptions::default() };
    let factor = inv.refine.unwrap_or(1);
    if factor == 0 {
        return Err(LabError::Config("--refine: must be at least 1".into()));
    }
    let grid = cfg.time_grid()?;
    let fine_grid = TimeGrid::new(grid.horizon, grid.steps * factor)?;

    type Run = (Result<PortfolioTrajectory, String>, Option<f64>);
    let runs: Vec<Run> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let fine = match simulate_path_indexed(&cfg.model, fine_grid, cfg.seed, i) {
                Ok(p) => p,
                Err(e) => return (Err(e.to_string()), None),
            };
            let coarse = match fine.coarsen(factor) {
                Ok(p) => p,
                Err(e) => return (Err(e.to_string()), None),
            };
            let traj = integrate_value(f.as_ref(), &coarse, &cov, gamma0, &options).map_err(|e| e.to_string());
            let fine_gap = (factor > 1)
                .then(|| integrate_value(f.as_ref(), &fine, &cov, gamma0, &options).ok())
                .flatten()
                .and_then(|t| t.decomposition_gaps())
                .map(max_of);
            (traj, fine_gap)
        })
        .collect();

    let mut output = inv.output()?;
    let mut per_path = Vec::with_capacity(runs.len());
    let mut trajectories = Vec::new();
    for (i, (traj, _)) in runs.iter().enumerate() {
        match traj {
            Ok(t) => {
                output.write(&format!("trajectories/{}_{i}.csv", cfg.seed), t.to_csv().as_bytes())?;
                per_path.push(PathDecomposition {
                    index: i as u64,
                    max_gap: t.decomposition_gaps().map(max_of),
                    phi_analytic_terminal: t.phi_analytic.as_ref().and_then(|p| p.last().copied()),
                    phi_residual_terminal: t.phi_residual.last().copied(),
                    residual_drift_max: Some(max_of(t.phi_residual.iter().map(|v| v.abs()))),
                    error: None,
                });
                trajectories.push(t);
            }
            Err(e) => per_path.push(PathDecomposition {
                index: i as u64,
                max_gap: None,
                phi_analytic_terminal: None,
                phi_residual_terminal: None,
                residual_drift_max: None,
                error: Some(e.clone()),
            }),
        }
    }
    let failures = per_path.iter().filter(|p| p.error.is_some()).count();
    let gaps: Option<Vec<f64>> = per_path.iter().filter(|p| p.error.is_none()).map(|p| p.max_gap).collect();
    let max_gap = gaps.as_ref().map(|g| max_of(g.iter().copied()));
    let median_gap = gaps.as_ref().map(|g| median(g));
    let residual_drift_max = max_of(per_path.iter().filter_map(|p| p.residual_drift_max));
    let drift_slope = {
        let slopes: Option<Vec<f64>> = per_path
            .iter()
            .filter(|p| p.error.is_none())
            .map(|p| p.phi_analytic_terminal.map(|v| v / grid.horizon))
            .collect();
        slopes.filter(|s| !s.is_empty()).map(|s| s.iter().sum::<f64>() / s.len() as f64)
    };
    let drift_matches_egr_scaled = match spec {
        FunctionSpec::Diversity { p } => Some(trajectories.iter().all(|t| {
            let scaled: f64 = t.excess_growth[..grid.steps].iter().map(|g| (1.0 - p) * g * grid.dt()).sum();
            t.phi_analytic.as_ref().is_some_and(|phi| (phi[grid.steps] - scaled).abs() < IDENTITY_TOLERANCE)
        })),
        _ => None,
    };
    let refinement = (factor > 1).then(|| {
        let fine: Vec<f64> = runs.iter().filter_map(|r| r.1).collect();
        let (coarse, fine) = (median_gap.unwrap_or(f64::NAN), median(&fine));
        Refinement { factor, median_gap_coarse: coarse, median_gap_fine: fine, ratio: coarse / fine }
    });
    let summary = DecomposeSummary {
        function: f.name(),
        steps: grid.steps,
        max_gap,
        median_gap,
        residual_drift_max,
        residual_drift_within_tolerance: residual_drift_max < cfg.tolerances.gap,
        pi_constant: !trajectories.is_empty() && trajectories.iter().all(|t| weights_constant(t)),
        drift_slope,
        excess_growth_initial: trajectories.first().map_or(f64::NAN, |t| t.excess_growth[0]),
        drift_matches_egr_scaled,
        refinement,
        per_path,
    };
    let gap_ok = max_gap.is_none_or(|g| g < cfg.tolerances.gap);
    let passed = failures == 0 && gap_ok && drift_matches_egr_scaled.unwrap_or(true);
    let gap = max_gap.unwrap_or(f64::NAN);
    let tolerance = cfg.tolerances.gap;
    inv.finish(output, "decompose", passed, summary, started, || {
        format!("{failures} path(s) failed; max gap {gap:.3e} (tolerance {tolerance:.1e})")
    })
}

fn residual_samples(cfg: &ExperimentConfig, f: &dyn GeneratingFunction) -> Vec<(Vec<f64>, f64)> {
    let times = (0.0, 0.95 * cfg.grid.horizon);
    sample_points(f.arity(), cfg.replicate.samples, cfg.seed, cfg.replicate.price_range, times)
}

pub fn replicate_check(inv: &Invocation) -> Result<(), LabError> {
    let started = Instant::now();
    let cfg = inv.config();
    let f = cfg.function_spec()?.build(&cfg.build_context())?;
    let cov = covariance(&cfg.model);
    let points = residual_samples(cfg, f.as_ref());
    let report = pde_residual(f.as_ref(), &cov, cfg.model.gamma0(), &points, cfg.backend, cfg.tolerances.residual)?;
    let output = inv.output()?;
    let passed = report.verdict == Verdict::Replicable;
    let message = format!("`{}` is not replicable: residual {:.3e} >= {:.1e}", report.function, report.max, report.tolerance);
    inv.finish(output, "replicate-check", passed, report, started, || message)
}

#[derive(Debug, Serialize)]
struct PriceRow {
    t: f64,
    scale: f64,
    riskless: f64,
    prices: Vec<f64>,
    value: f64,
}

#[derive(Debug, Serialize)]
struct PriceSummary {
    function: String,
    discounted: Option<PdeResidualReport>,
    homogenized: Option<PdeResidualReport>,
    rejection: Option<String>,
    table: Vec<PriceRow>,
    /// Rows at `t = T` reproduce the terminal claim exactly.
    terminal_exact: Option<bool>,
}

fn claim_problem(cfg: &ExperimentConfig) -> Result<ClaimProblem, LabError> {
    let problem = ClaimProblem {
        claim: cfg.function_spec()?.clone(),
        model: cfg.model.clone(),
        horizon: cfg.grid.horizon,
    };
    problem.validate().map_err(|e| LabError::Config(format!("function: {e}")))?;
    Ok(problem)
}

pub fn price(inv: &Invocation) -> Result<(), LabError> {
    let started = Instant::now();
    let cfg = inv.config();
    let problem = claim_problem(cfg)?;
    let options = PricingOptions {
        samples: cfg.replicate.samples,
        seed: cfg.seed,
        backend: cfg.backend,
        tolerance: cfg.tolerances.residual,
    };
    let horizon = cfg.grid.horizon;
    let mut output = inv.output()?;
    let outcome = match three_step_price(&problem, cfg.price.solver, &options) {
        Ok(o) => o,
        Err(fgp_core::Error::PipelineRejected(reason)) => {
            let summary = PriceSummary {
                function: problem.claim.kind().into(),
                discounted: None,
                homogenized: None,
                rejection: Some(reason.clone()),
                table: Vec::new(),
                terminal_exact: None,
            };
            return inv.finish(output, "price", false, summary, started, || reason);
        }
        Err(e) => return Err(e.into()),
    };
    let times = cfg.price.times.clone().unwrap_or_else(|| vec![0.0, 0.5 * horizon, horizon]);
    let x0_at = |t: f64| cfg.model.initial_riskless * (cfg.model.gamma0() * t).exp();
    let mut table = Vec::new();
    let mut terminal_exact = true;
    let mut csv = String::from("t,scale,X0");
    for i in 1..=cfg.model.n {
        csv.push_str(&format!(",X{i}"));
    }
    csv.push_str(",value\n");
    for &t in &times {
        for &scale in &cfg.price.scales {
            let prices: Vec<f64> = cfg.model.initial_prices.iter().map(|x| x * scale).collect();
            let riskless = if t == horizon { 1.0 } else { x0_at(t) };
            let args: Vec<f64> = std::iter::once(riskless).chain(prices.iter().copied()).collect();
            let value = genfun::evaluate(outcome.price_function.as_ref(), &args, t)?;
            if t == horizon {
                terminal_exact &= value == problem.terminal_value(&prices)?;
            }
            csv.push_str(&fmt17(t));
            csv.push_str(&format!(",{}", fmt17(scale)));
            for v in args.iter().chain(std::iter::once(&value)) {
                csv.push(',');
                csv.push_str(&fmt17(*v));
            }
            csv.push('\n');
            table.push(PriceRow { t, scale, riskless, prices, value });
        }
    }
    output.write("price_table.csv", csv.as_bytes())?;
    let has_terminal = times.contains(&horizon);
    let passed = !has_terminal || terminal_exact;
    let summary = PriceSummary {
        function: outcome.price_function.name(),
        discounted: Some(outcome.discounted),
        homogenized: Some(outcome.homogenized),
        rejection: None,
        table,
        terminal_exact: has_terminal.then_some(terminal_exact),
    };
    inv.finish(output, "price", passed, summary, started, || {
        "the price function does not reproduce the terminal claim".to_string()
    })
}

#[derive(Debug, Serialize)]
struct HedgeSummary {
    function: String,
    initial_price: f64,
    runs: Vec<HedgeRun>,
    medians_decreasing: bool,
    finest_median: f64,
    tolerance: f64,
}

/// Claims with a known step-1 solution are hedged with their three-step
/// price function; anything else is used as given.
fn hedging_function(cfg: &ExperimentConfig) -> Result<SharedFunction, LabError> {
    let spec = cfg.function_spec()?;
    let problem = ClaimProblem { claim: spec.clone(), model: cfg.model.clone(), horizon: cfg.grid.horizon };
    if problem.validate().is_ok() {
        let options = PricingOptions {
            samples: cfg.replicate.samples,
            seed: cfg.seed,
            backend: cfg.backend,
            tolerance: cfg.tolerances.residual,
        };
        let outcome = three_step_price(&problem, cfg.price.solver, &options)?;
        return Ok(outcome.price_function as Arc<dyn GeneratingFunction>);
    }
    Ok(spec.build(&cfg.build_context())?)
}

pub fn hedge(inv: &Invocation) -> Result<(), LabError> {
    let started = Instant::now();
    let cfg = inv.config();
    let f = hedging_function(cfg)?;
    let mut steps = cfg.hedge.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let runs = hedge_errors(f.as_ref(), &cfg.model, cfg.grid.horizon, &steps, cfg.paths, cfg.seed)?;
    let mut output = inv.output()?;
    let mut csv = String::from("steps,median,p90\n");
    for r in &runs {
        csv.push_str(&format!("{},{},{}\n", r.steps, fmt17(r.median), fmt17(r.p90)));
    }
    output.write("hedge_errors.csv", csv.as_bytes())?;
    let medians_decreasing = runs.windows(2).all(|w| w[1].median < w[0].median);
    let finest_median = runs.last().map_or(f64::NAN, |r| r.median);
    let tolerance = cfg.tolerances.hedge;
    let passed = medians_decreasing && finest_median < tolerance;
    let summary = HedgeSummary {
        function: f.name(),
        initial_price: initial_price(f.as_ref(), &cfg.model)?,
        runs,
        medians_decreasing,
        finest_median,
        tolerance,
    };
    inv.finish(output, "hedge", passed, summary, started, || {
        format!("hedging medians decreasing: {medians_decreasing}; finest median {finest_median:.3e} (tolerance {tolerance:.1e})")
    })
}
