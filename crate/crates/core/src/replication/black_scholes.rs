//! Closed-form call prices: the classical call, its positive zero-rate
//! shift `N(z_0) x + (1 - N(z_1)) K`, and the homogenized shift over the
//! riskless price.
//!
//! At `t = T` every pricer returns the terminal payoff exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{norm_cdf, norm_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsQuote {
    pub x: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    pub t: f64,
    pub horizon: f64,
    pub z0: f64,
    pub z1: f64,
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    /// `dV/dt`.
    pub theta: f64,
}

impl BsQuote {
    /// `1/2 sigma^2 x^2 gamma + theta + r (x delta - V)`.
    pub fn pde_residual(&self) -> f64 {
        0.5 * self.sigma * self.sigma * self.x * self.x * self.gamma
            + self.theta
            + self.rate * (self.x * self.delta - self.price)
    }
}

/// `z_0 = (m + sigma^2 tau / 2) / (sigma sqrt(tau))` and
/// `z_1 = z_0 - sigma sqrt(tau)` for log-moneyness `m`.
pub fn z_pair(log_moneyness: f64, sigma: f64, tau: f64) -> (f64, f64) {
    let s = sigma * tau.sqrt();
    let z0 = (log_moneyness + 0.5 * s * s) / s;
    (z0, z0 - s)
}

fn validate(what: &str, positive: &[f64], t: f64, horizon: f64) -> Result<()> {
    if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "{what}: prices, strike and volatility must be positive, got {positive:?}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) || !(0.0..=horizon).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "{what}: need 0 <= t <= T, got t = {t}, T = {horizon}"
        )));
    }
    Ok(())
}

/// `z` at expiry: `+inf`, `-inf` or 0 by the sign of the log-moneyness.
fn terminal_z(log_moneyness: f64) -> f64 {
    if log_moneyness > 0.0 {
        f64::INFINITY
    } else if log_moneyness < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

/// `N(z_0) x - N(z_1) K e^{r(t - T)}`.
pub fn bs_call(x: f64, strike: f64, rate: f64, sigma: f64, t: f64, horizon: f64) -> Result<BsQuote> {
    validate("bs_call", &[x, strike, sigma], t, horizon)?;
    if !rate.is_finite() {
        return Err(Error::InvalidParameter(format!("bs_call: rate must be finite, got {rate}")));
    }
    let tau = horizon - t;
    let discount = (-rate * tau).exp();
    let m = (x / strike).ln() + rate * tau;
    let s = sigma * tau.sqrt();
    let (z0, z1, price, gamma, theta) = if t == horizon {
        let z = terminal_z(m);
        (z, z, (x - strike).max(0.0), 0.0, 0.0)
    } else if s == 0.0 {
        let z = terminal_z(m);
        let itm = if x > strike * discount { 1.0 } else { 0.0 };
        (z, z, (x - strike * discount).max(0.0), 0.0, -rate * strike * discount * itm)
    } else {
        let (z0, z1) = z_pair(m, sigma, tau);
        let gamma = norm_pdf(z0) / (x * s);
        let theta = -x * norm_pdf(z0) * sigma / (2.0 * tau.sqrt()) - rate * strike * discount * norm_cdf(z1);
        (z0, z1, norm_cdf(z0) * x - norm_cdf(z1) * strike * discount, gamma, theta)
    };
    Ok(BsQuote {
        x,
        strike,
        rate,
        sigma,
        t,
        horizon,
        z0,
        z1,
        price,
        delta: norm_cdf(z0),
        gamma,
        theta,
    })
}

pub(crate) fn shifted_claim_value(x: f64, strike: f64, sigma: f64, t: f64, horizon: f64) -> f64 {
    let tau = horizon - t;
    if t >= horizon || sigma * tau.sqrt() == 0.0 {
        return x.max(strike);
    }
    let (z0, z1) = z_pair((x / strike).ln(), sigma, tau);
    norm_cdf(z0) * x + norm_cdf(-z1) * strike
}

/// The zero-rate call plus `K`: positive, with terminal value `x v K`.
pub fn bs_shifted_claim(x: f64, strike: f64, sigma: f64, t: f64, horizon: f64) -> Result<f64> {
    validate("bs_shifted_claim", &[x, strike, sigma], t, horizon)?;
    Ok(shifted_claim_value(x, strike, sigma, t, horizon))
}

pub(crate) fn homogenized_call_value(x0: f64, x: f64, strike: f64, sigma: f64, t: f64, horizon: f64) -> f64 {
    let tau = horizon - t;
    if t >= horizon || sigma * tau.sqrt() == 0.0 {
        return x0 * (x / x0).max(strike);
    }
    let (z0, z1) = z_pair((x / (strike * x0)).ln(), sigma, tau);
    norm_cdf(z0) * x + norm_cdf(-z1) * strike * x0
}

/// `N(z_0) x + (1 - N(z_1)) K x_0` with moneyness `x / (K x_0)`.
pub fn homogenized_call(x0: f64, x: f64, strike: f64, sigma: f64, t: f64, horizon: f64) -> Result<f64> {
    validate("homogenized_call", &[x0, x, strike, sigma], t, horizon)?;
    Ok(homogenized_call_value(x0, x, strike, sigma, t, horizon))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    #[test]
    fn at_the_money_reference() {
        // N(0.1) - N(-0.1) = 0.07965567455405796293
        let q = bs_call(1.0, 1.0, 0.0, 0.2, 0.0, 1.0).unwrap();
        assert!((q.z0 - 0.1).abs() < 1e-15);
        assert!((q.z1 + 0.1).abs() < 1e-15);
        assert!((q.price - 0.079_655_674_554_057_96).abs() < 1e-15);
        assert!((q.delta - 0.539_827_837_277_028_98).abs() < 1e-15);
    }

    #[test]
    fn with_rate_reference() {
        let q = bs_call(1.1, 1.0, 0.05, 0.3, 0.25, 1.0).unwrap();
        assert!((q.price - 0.188_560_083_306_818_3).abs() < 1e-14);
        assert!((q.delta - 0.739_268_034_543_545).abs() < 1e-14);
        assert!((q.z1 - (q.z0 - 0.3 * 0.75f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn greeks_satisfy_the_pricing_equation() {
        for (x, t) in [(0.7, 0.0), (1.0, 0.5), (1.3, 0.9)] {
            let q = bs_call(x, 1.0, 0.05, 0.25, t, 1.0).unwrap();
            assert!(q.pde_residual().abs() < 1e-14);
            let h = 1e-4;
            let up = bs_call(x + h, 1.0, 0.05, 0.25, t, 1.0).unwrap();
            let down = bs_call(x - h, 1.0, 0.05, 0.25, t, 1.0).unwrap();
            assert!(((up.price - 2.0 * q.price + down.price) / (h * h) - q.gamma).abs() < 1e-6);
            let later = bs_call(x, 1.0, 0.05, 0.25, t + h, 1.0).unwrap();
            assert!(((later.price - q.price) / h - q.theta).abs() < 1e-3);
        }
    }

    #[test]
    fn deep_in_the_money() {
        let (k, r, tau) = (1.0, 0.03, 0.5);
        let q = bs_call(100.0 * k, k, r, 0.2, 1.0 - tau, 1.0).unwrap();
        assert!((q.price - (100.0 * k - k * (-r * tau).exp())).abs() < 1e-10 * 100.0);
    }

    #[test]
    fn terminal_values_are_exact() {
        assert_eq!(bs_call(1.3, 1.0, 0.05, 0.2, 1.0, 1.0).unwrap().price, 1.3 - 1.0);
        assert_eq!(bs_call(0.7, 1.0, 0.05, 0.2, 1.0, 1.0).unwrap().price, 0.0);
        assert_eq!(bs_shifted_claim(0.7, 1.0, 0.2, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(bs_shifted_claim(1.7, 1.0, 0.2, 1.0, 1.0).unwrap(), 1.7);
        assert_eq!(homogenized_call(0.5, 0.7, 1.0, 0.2, 1.0, 1.0).unwrap(), 0.7);
        assert_eq!(homogenized_call(0.8, 0.7, 1.0, 0.2, 1.0, 1.0).unwrap(), 0.8);
    }

    #[test]
    fn tiny_remaining_variance_uses_the_terminal_branch() {
        let q = bs_call(1.2, 1.0, 0.0, 1e-300, 0.5, 1.0).unwrap();
        assert_eq!(q.price, 1.2 - 1.0);
        assert!(q.price.is_finite() && q.delta == 1.0);
    }

    #[test]
    fn unit_riskless_price_gives_shifted_claim() {
        for x in [0.5, 1.0, 1.5] {
            let a = homogenized_call(1.0, x, 1.0, 0.2, 0.3, 1.0).unwrap();
            let b = bs_shifted_claim(x, 1.0, 0.2, 0.3, 1.0).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn call_recovery_with_discounted_riskless_price() {
        let (r, t, horizon): (f64, f64, f64) = (0.05, 0.4, 1.0);
        let x0 = (r * (t - horizon)).exp();
        for x in [0.6, 1.0, 1.4] {
            let v = homogenized_call(x0, x, 1.0, 0.25, t, horizon).unwrap();
            let c = bs_call(x, 1.0, r, 0.25, t, horizon).unwrap().price;
            assert!(v - x0 >= 0.0);
            assert!((v - x0 - c).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(bs_call(-1.0, 1.0, 0.0, 0.2, 0.0, 1.0).is_err());
        assert!(bs_call(1.0, 1.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(bs_call(1.0, 1.0, 0.0, 0.2, 1.5, 1.0).is_err());
        assert!(homogenized_call(0.0, 1.0, 1.0, 0.2, 0.0, 1.0).is_err());
    }
}
