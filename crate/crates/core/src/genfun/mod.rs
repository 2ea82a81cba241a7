//! Positive generating functions of prices and time.
//!
//! A [`GeneratingFunction`] is a positive function `V(x, t)` on
//! `R+^arity x [0, T]`. Implementors supply the value and, when they can,
//! analytic first and second price derivatives and the time derivative.
//! Anything missing is filled in by central finite differences (see [`fd`]).
//!
//! Functions over `(x_0, x_1, ..., x_n)` (the output of [`homogenize`], the
//! homogenized call) put the riskless price in slot 0.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod builtins;
pub mod fd;
pub mod spec;
pub mod transform;

pub use builtins::{
    CorrectedGeometricMean, Diversity, ExtendedEntropy, FnFunction, GeometricMean,
    HomogenizedCall, PairwiseMax, PowerSum, ShiftedCall, SquareRootClaim,
};
pub use fd::{dt_fd, gradient_fd, hessian_fd};
pub use spec::{BuildContext, FunctionSpec};
pub use transform::{
    extend_simplex_function, homogenize, ConstantSimplex, GibbsShannonEntropy, Homogenized,
    SimplexExtension, SimplexFunction,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Smooth,
    /// Only the value (and possibly closed-form weights) exist.
    NonSmooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Homogeneity {
    DegreeOne,
    Inhomogeneous,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeBackend {
    /// Analytic derivatives where the function provides them, finite
    /// differences otherwise.
    #[default]
    Analytic,
    FiniteDifference,
}

pub trait GeneratingFunction: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn arity(&self) -> usize;

    fn homogeneity(&self) -> Homogeneity;

    fn smoothness(&self) -> Smoothness {
        Smoothness::Smooth
    }

    /// Terminal time when the function is only `C^{2,1}` on `[0, T)`.
    fn horizon(&self) -> Option<f64> {
        None
    }

    /// The value without domain or positivity checks.
    fn raw_value(&self, x: &[f64], t: f64) -> f64;

    fn analytic_gradient(&self, _x: &[f64], _t: f64) -> Option<Vec<f64>> {
        None
    }

    fn analytic_hessian(&self, _x: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        None
    }

    fn analytic_time_derivative(&self, _x: &[f64], _t: f64) -> Option<f64> {
        None
    }

    /// Weights `x_i D_i V / V` in closed form, for functions where they are
    /// known exactly (constant weights, indicator weights).
    fn closed_form_weights(&self, _x: &[f64], _t: f64) -> Option<Vec<f64>> {
        None
    }

    /// Declared range of every `x_i D_i V / V`.
    fn weight_bounds(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Value and derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub time: f64,
}

fn check_point<F: GeneratingFunction + ?Sized>(f: &F, x: &[f64]) -> Result<()> {
    if x.len() != f.arity() {
        return Err(Error::Dimension(format!(
            "`{}` takes {} prices, got {}",
            f.name(),
            f.arity(),
            x.len()
        )));
    }
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain {
            function: f.name(),
            message: format!("coordinate {i} must be positive and finite, got {v}"),
        });
    }
    Ok(())
}

fn check_time<F: GeneratingFunction + ?Sized>(f: &F, t: f64, allow_terminal: bool) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain {
            function: f.name(),
            message: format!("time must be non-negative, got {t}"),
        });
    }
    if let Some(horizon) = f.horizon() {
        if t > horizon || (!allow_terminal && t >= horizon) {
            return Err(Error::Domain {
                function: f.name(),
                message: format!(
                    "t = {t} is outside [0, {horizon}{}",
                    if allow_terminal { "]" } else { ")" }
                ),
            });
        }
    }
    Ok(())
}

/// Value with the positivity check but no time-domain check. Finite
/// differences sample through this.
pub(crate) fn positive_value<F: GeneratingFunction + ?Sized>(f: &F, x: &[f64], t: f64) -> Result<f64> {
    let v = f.raw_value(x, t);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Positivity {
            function: f.name(),
            value: v,
            x: x.to_vec(),
            t,
        })
    }
}

/// `V(x, t)`, with `t = T` allowed.
pub fn evaluate<F: GeneratingFunction + ?Sized>(f: &F, x: &[f64], t: f64) -> Result<f64> {
    check_point(f, x)?;
    check_time(f, t, true)?;
    positive_value(f, x, t)
}

fn require_smooth<F: GeneratingFunction + ?Sized>(f: &F, x: &[f64], t: f64) -> Result<()> {
    if f.smoothness() == Smoothness::NonSmooth {
        return Err(Error::NonSmooth { function: f.name() });
    }
    check_point(f, x)?;
    check_time(f, t, false)
}

pub fn gradient<F: GeneratingFunction + ?Sized>(
    f: &F,
    x: &[f64],
    t: f64,
    backend: DerivativeBackend,
) -> Result<Vec<f64>> {
    require_smooth(f, x, t)?;
    match backend {
        DerivativeBackend::Analytic => match f.analytic_gradient(x, t) {
            Some(g) => Ok(g),
            None => fd::gradient_fd(f, x, t, fd::GRADIENT_REL_STEP),
        },
        DerivativeBackend::FiniteDifference => fd::gradient_fd(f, x, t, fd::GRADIENT_REL_STEP),
    }
}

pub fn hessian<F: GeneratingFunction + ?Sized>(
    f: &F,
    x: &[f64],
    t: f64,
    backend: DerivativeBackend,
) -> Result<DMatrix<f64>> {
    require_smooth(f, x, t)?;
    match backend {
        DerivativeBackend::Analytic => match f.analytic_hessian(x, t) {
            Some(h) => Ok(h),
            None => fd::hessian_fd(f, x, t, fd::HESSIAN_REL_STEP),
        },
        DerivativeBackend::FiniteDifference => fd::hessian_fd(f, x, t, fd::HESSIAN_REL_STEP),
    }
}

pub fn time_derivative<F: GeneratingFunction + ?Sized>(
    f: &F,
    x: &[f64],
    t: f64,
    backend: DerivativeBackend,
) -> Result<f64> {
    require_smooth(f, x, t)?;
    match backend {
        DerivativeBackend::Analytic => match f.analytic_time_derivative(x, t) {
            Some(d) => Ok(d),
            None => fd::dt_fd(f, x, t, fd::TIME_REL_STEP),
        },
        DerivativeBackend::FiniteDifference => fd::dt_fd(f, x, t, fd::TIME_REL_STEP),
    }
}

pub fn derivatives<F: GeneratingFunction + ?Sized>(
    f: &F,
    x: &[f64],
    t: f64,
    backend: DerivativeBackend,
) -> Result<Derivatives> {
    let value = evaluate(f, x, t)?;
    Ok(Derivatives {
        value,
        gradient: gradient(f, x, t, backend)?,
        hessian: hessian(f, x, t, backend)?,
        time: time_derivative(f, x, t, backend)?,
    })
}

/// `sum_i x_i D_i V(x, t) - V(x, t)`: zero along the ray through `x` exactly
/// when `V` is locally homogeneous of degree one there.
pub fn euler_check<F: GeneratingFunction + ?Sized>(
    f: &F,
    x: &[f64],
    t: f64,
    backend: DerivativeBackend,
) -> Result<f64> {
    let value = evaluate(f, x, t)?;
    let grad = gradient(f, x, t, backend)?;
    Ok(x.iter().zip(&grad).map(|(xi, gi)| xi * gi).sum::<f64>() - value)
}

/// Shared handle used across the engine and the CLI.
pub type SharedFunction = Arc<dyn GeneratingFunction>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_rejects_bad_inputs() {
        let f = GeometricMean::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(evaluate(&f, &[1.0, -1.0], 0.0), Err(Error::Domain { .. })));
        assert!(matches!(evaluate(&f, &[1.0, 0.0], 0.0), Err(Error::Domain { .. })));
        assert!(matches!(evaluate(&f, &[1.0], 0.0), Err(Error::Dimension(_))));
        assert!(matches!(evaluate(&f, &[1.0, 1.0], -0.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn positivity_violation_names_the_function() {
        let f = FnFunction::new("negative", 1, Homogeneity::Unknown, |x: &[f64], _| x[0] - 2.0);
        match evaluate(&f, &[1.0], 0.0) {
            Err(Error::Positivity { function, value, .. }) => {
                assert_eq!(function, "negative");
                assert_eq!(value, -1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn derivatives_need_t_before_horizon() {
        let f = ShiftedCall::new(1.0, 0.2, 1.0).unwrap();
        assert!(evaluate(&f, &[1.0], 1.0).is_ok());
        assert!(gradient(&f, &[1.0], 1.0, DerivativeBackend::Analytic).is_err());
        assert!(evaluate(&f, &[1.0], 1.5).is_err());
    }

    #[test]
    fn non_smooth_blocks_derivatives() {
        let f = PairwiseMax;
        assert_eq!(evaluate(&f, &[1.0, 2.0], 0.0).unwrap(), 2.0);
        assert!(matches!(
            gradient(&f, &[1.0, 2.0], 0.0, DerivativeBackend::Analytic),
            Err(Error::NonSmooth { .. })
        ));
        assert!(euler_check(&f, &[1.0, 2.0], 0.0, DerivativeBackend::FiniteDifference).is_err());
    }

    #[test]
    fn euler_residual_signals_homogeneity() {
        let gm = GeometricMean::new(vec![0.2, 0.3, 0.5]).unwrap();
        let x = [0.7, 1.9, 3.1];
        assert!(euler_check(&gm, &x, 0.3, DerivativeBackend::Analytic).unwrap().abs() < 1e-14);
        let r = euler_check(&gm, &x, 0.3, DerivativeBackend::FiniteDifference).unwrap();
        assert!(r.abs() / evaluate(&gm, &x, 0.3).unwrap() < 1e-8);

        let ps = PowerSum::new(vec![0.5, 2.0, 1.0], vec![0.2; 3], 1.0).unwrap();
        let r = euler_check(&ps, &x, 0.3, DerivativeBackend::Analytic).unwrap();
        assert!(r.abs() > 1e-2);
    }
}
