//! Riccati-type decay trajectories.
//!
//! Both stages obey
//! `dphi/dtau = -(2*Lt(l)*phi + gt(l)*(phi^2/(mu*eps) + 1))`
//! with the stage scalings from [`EtmParams`]. The right-hand side is at most
//! `-gt(l)` while `phi >= 0`, so trajectories decrease strictly until they
//! cross zero; values past the first non-positive node are never needed and
//! integration stops there.

use serde::{Deserialize, Serialize};

use super::EtmParams;
use crate::error::{Error, Result};

/// Right-hand side of the stage-`l` decay ODE.
pub fn phi_derivative(l: u8, phi: f64, p: &EtmParams) -> f64 {
    let lt = p.lip_tilde(l);
    let gt = p.gamma_tilde(l);
    -(2.0 * lt * phi + gt * (phi * phi / (p.mu * p.eps) + 1.0))
}

/// Upper bound on the time stage-`l` needs to fall from its initial value to
/// `target` (>= 0). Derived from the Lipschitz-free dynamics, which decay no
/// faster than the full right-hand side.
pub fn phi_horizon_bound(l: u8, target: f64, p: &EtmParams) -> f64 {
    let gt = p.gamma_tilde(l);
    let k = (p.mu * p.eps).sqrt();
    let init = if l == 0 { p.phi0_init } else { p.phi1_init };
    let target = target.max(0.0);
    (k / gt) * ((init / k).atan() - (target / k).atan())
}

/// One fixed-horizon trajectory sampled on a uniform grid.
///
/// Node derivatives are kept alongside the values so lookups can use cubic
/// Hermite interpolation, which keeps the table accurate at coarse steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiSlice {
    step: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl PhiSlice {
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Grid values, `values()[j] = phi(j * step)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Last grid time covered by the slice.
    pub fn domain_end(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    /// Cubic Hermite lookup. Fails outside `[0, domain_end]` (with a one-ulp
    /// style slack for boundary round-off).
    pub fn eval(&self, tau: f64) -> Result<f64> {
        let end = self.domain_end();
        let slack = self.step * 1e-6;
        if !tau.is_finite() || tau < -slack || tau > end + slack {
            return Err(Error::PhiOutOfRange { tau, max: end });
        }
        let tau = tau.clamp(0.0, end);
        let mut j = (tau / self.step) as usize;
        if j >= self.values.len() - 1 {
            j = self.values.len() - 2;
        }
        let t = (tau - j as f64 * self.step) / self.step;
        let (f0, f1) = (self.values[j], self.values[j + 1]);
        let (d0, d1) = (self.derivs[j] * self.step, self.derivs[j + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        Ok(f0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + f1 * (-2.0 * t3 + 3.0 * t2)
            + d0 * (t3 - 2.0 * t2 + t)
            + d1 * (t3 - t2))
    }
}

/// Fixed-step classical fourth-order integration of stage `l` from its
/// initial value. Integration stops at `horizon` or at the first node where
/// the trajectory is no longer positive, whichever comes first.
pub fn integrate_phi(p: &EtmParams, l: u8, horizon: f64, step: f64) -> Result<PhiSlice> {
    if !(step > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidParameter(
            "integration step and horizon must be positive".into(),
        ));
    }
    let n_steps = (horizon / step).ceil() as usize;
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut derivs = Vec::with_capacity(n_steps + 1);
    let mut phi = if l == 0 { p.phi0_init } else { p.phi1_init };
    values.push(phi);
    derivs.push(phi_derivative(l, phi, p));
    for idx in 0..n_steps {
        let k1 = phi_derivative(l, phi, p);
        let k2 = phi_derivative(l, phi + 0.5 * step * k1, p);
        let k3 = phi_derivative(l, phi + 0.5 * step * k2, p);
        let k4 = phi_derivative(l, phi + step * k3, p);
        phi += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !phi.is_finite() {
            return Err(Error::PhiNonFinite {
                tau: (idx + 1) as f64 * step,
            });
        }
        values.push(phi);
        derivs.push(phi_derivative(l, phi, p));
        if phi <= 0.0 {
            break;
        }
    }
    Ok(PhiSlice { step, values, derivs })
}

/// Both stage trajectories on a shared grid, integrated far enough to cover
/// every lookup the trigger functions and the storage evaluator perform
/// (`tau_max + tau_masp` plus margin).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiTable {
    step: f64,
    phi0: PhiSlice,
    phi1: PhiSlice,
}

impl PhiTable {
    #[cfg(test)]
    pub(crate) fn from_parts(step: f64, phi0: PhiSlice, phi1: PhiSlice) -> Self {
        Self { step, phi0, phi1 }
    }

    pub fn integrate(p: &EtmParams, step: f64) -> Result<Self> {
        // The first timing boundary sits where gt(0)*phi0 meets
        // lambda^2*gt(1)*phi1(0); bound that point analytically and pad with
        // tau_masp so sampling-offset lookups stay in range.
        let target = p.lambda * p.lambda * p.gamma_tilde(1) * p.phi1_init / p.gamma_tilde(0);
        let horizon = phi_horizon_bound(0, target, p) + p.tau_masp + 2.0 * step;
        let phi0 = integrate_phi(p, 0, horizon, step)?;
        let phi1 = integrate_phi(p, 1, horizon, step)?;
        Ok(Self { step, phi0, phi1 })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn slice(&self, l: u8) -> &PhiSlice {
        if l == 0 {
            &self.phi0
        } else {
            &self.phi1
        }
    }

    pub fn phi0(&self, tau: f64) -> Result<f64> {
        self.phi0.eval(tau)
    }

    pub fn phi1(&self, tau: f64) -> Result<f64> {
        self.phi1.eval(tau)
    }
}
