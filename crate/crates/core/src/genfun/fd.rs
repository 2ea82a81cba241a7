//! Central finite differences for generating functions.
//!
//! Price steps are relative: `h_i = rel * max(x_i, 1)`, capped at `x_i / 4`
//! so that the stencil stays inside the positive orthant. The time step is
//! `rel * max(t, 1)`; within `2 h` of the horizon the stencil switches to the
//! second-order backward difference so nothing is sampled at or past `T`;
//! near `t = 0` it uses the forward difference instead.

use nalgebra::DMatrix;

use super::{positive_value, GeneratingFunction};
use crate::error::{Error, Result};

pub const GRADIENT_REL_STEP: f64 = 1e-5;
/// Second differences lose `eps / h^2`; `1e-4` balances that against the
/// `h^2` truncation term.
pub const HESSIAN_REL_STEP: f64 = 1e-4;
pub const TIME_REL_STEP: f64 = 1e-5;

fn price_step(x: f64, rel: f64) -> f64 {
    (rel * x.max(1.0)).min(0.25 * x)
}

fn finite(f_name: String, what: String, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Differentiation { function: f_name, what })
    }
}

pub fn gradient_fd<F: GeneratingFunction + ?Sized>(f: &F, x: &[f64], t: f64, rel: f64) -> Result<Vec<f64>> {
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = price_step(x[i], rel);
        let (up, down) = (x[i] + h, x[i] - h);
        point[i] = up;
        let f_up = positive_value(f, &point, t)?;
        point[i] = down;
        let f_down = positive_value(f, &point, t)?;
        point[i] = x[i];
        grad.push(finite(f.name(), format!("D_{i}"), (f_up - f_down) / (up - down))?);
    }
    Ok(grad)
}

/// Second differences, symmetrized as `(H + H^T) / 2`.
pub fn hessian_fd<F: GeneratingFunction + ?Sized>(f: &F, x: &[f64], t: f64, rel: f64) -> Result<DMatrix<f64>> {
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|&xi| price_step(xi, rel)).collect();
    let center = positive_value(f, x, t)?;
    let mut point = x.to_vec();
    let mut hess = DMatrix::zeros(n, n);
    let eval = |point: &mut Vec<f64>, moves: &[(usize, f64)]| -> Result<f64> {
        for &(i, d) in moves {
            point[i] = x[i] + d;
        }
        let v = positive_value(f, point, t);
        for &(i, _) in moves {
            point[i] = x[i];
        }
        v
    };
    for i in 0..n {
        let h = steps[i];
        let up = eval(&mut point, &[(i, h)])?;
        let down = eval(&mut point, &[(i, -h)])?;
        hess[(i, i)] = finite(f.name(), format!("D_{i}{i}"), (up - 2.0 * center + down) / (h * h))?;
        for j in 0..i {
            let k = steps[j];
            let pp = eval(&mut point, &[(i, h), (j, k)])?;
            let pm = eval(&mut point, &[(i, h), (j, -k)])?;
            let mp = eval(&mut point, &[(i, -h), (j, k)])?;
            let mm = eval(&mut point, &[(i, -h), (j, -k)])?;
            let v = finite(f.name(), format!("D_{i}{j}"), (pp - pm - mp + mm) / (4.0 * h * k))?;
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

pub fn dt_fd<F: GeneratingFunction + ?Sized>(f: &F, x: &[f64], t: f64, rel: f64) -> Result<f64> {
    let h = rel * t.abs().max(1.0);
    let near_horizon = f.horizon().is_some_and(|horizon| t + 2.0 * h >= horizon);
    let d = if near_horizon {
        let f0 = positive_value(f, x, t)?;
        let f1 = positive_value(f, x, t - h)?;
        let f2 = positive_value(f, x, t - 2.0 * h)?;
        (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h)
    } else if t >= 0.0 && t - h < 0.0 {
        let f0 = positive_value(f, x, t)?;
        let f1 = positive_value(f, x, t + h)?;
        let f2 = positive_value(f, x, t + 2.0 * h)?;
        (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
    } else {
        let (up, down) = (t + h, t - h);
        (positive_value(f, x, up)? - positive_value(f, x, down)?) / (up - down)
    };
    finite(f.name(), "D_t".into(), d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::{FnFunction, Homogeneity};

    #[test]
    fn product_gradient_and_hessian() {
        let f = FnFunction::new("product", 2, Homogeneity::Unknown, |x: &[f64], _| x[0] * x[1]);
        let g = gradient_fd(&f, &[2.0, 3.0], 0.0, GRADIENT_REL_STEP).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-9);
        assert!((g[1] - 2.0).abs() < 1e-9);
        let h = hessian_fd(&f, &[2.0, 3.0], 0.0, HESSIAN_REL_STEP).unwrap();
        assert!((h[(0, 1)] - 1.0).abs() < 1e-7);
        assert!((h[(1, 0)] - 1.0).abs() < 1e-7);
        assert!(h[(0, 0)].abs() < 1e-6 && h[(1, 1)].abs() < 1e-6);
    }

    #[test]
    fn time_derivative_is_one_sided_near_horizon() {
        use std::sync::atomic::{AtomicU64, Ordering};
        static LATEST: AtomicU64 = AtomicU64::new(0);
        #[derive(Debug)]
        struct Probe;
        impl GeneratingFunction for Probe {
            fn name(&self) -> String {
                "probe".into()
            }
            fn arity(&self) -> usize {
                1
            }
            fn homogeneity(&self) -> Homogeneity {
                Homogeneity::Unknown
            }
            fn horizon(&self) -> Option<f64> {
                Some(1.0)
            }
            fn raw_value(&self, x: &[f64], t: f64) -> f64 {
                let prev = f64::from_bits(LATEST.load(Ordering::SeqCst));
                LATEST.store(prev.max(t).to_bits(), Ordering::SeqCst);
                x[0] * (1.0 + t * t)
            }
        }
        let t = 1.0 - 1e-5;
        let d = dt_fd(&Probe, &[2.0], t, TIME_REL_STEP).unwrap();
        assert!((d - 4.0 * t).abs() < 1e-8);
        assert!(f64::from_bits(LATEST.load(Ordering::SeqCst)) <= t);
    }

    #[test]
    fn steps_stay_inside_the_orthant() {
        let f = FnFunction::new("log", 1, Homogeneity::Unknown, |x: &[f64], _| 1.0 + x[0].ln().abs());
        assert!(gradient_fd(&f, &[1e-7], 0.0, GRADIENT_REL_STEP).is_ok());
        assert!(hessian_fd(&f, &[1e-7], 0.0, HESSIAN_REL_STEP).is_ok());
    }
}
