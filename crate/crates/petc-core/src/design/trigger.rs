//! Trigger-side quantities: the flow gain of the trigger variable, the
//! transmission top-up `rho`, the sampling penalty `nu`, and the exact
//! discretization of the trigger-variable dynamics.

use serde::{Deserialize, Serialize};

use super::phi::{PhiSlice, PhiTable};
use super::{EtmParams, TimingConstants};
use crate::error::{Error, Result};

/// Whether the sampling-offset-dependent coefficients are computed per
/// sampling instant or replaced by their a-priori worst case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerMode {
    Online,
    Conservative,
}

/// Per-agent trigger-function bundle.
///
/// `rho` maps to a non-negative value and `nu` to a non-positive one for
/// every input; both are enforced at runtime because the sign contracts are
/// exactly what the storage argument relies on.
#[derive(Debug, Clone)]
pub struct TriggerFunctions {
    mode: TriggerMode,
    eps_eta: f64,
    /// Enforced minimum inter-event time actually in use (may be shorter
    /// than `timing.tau_miet` when the operator selected one).
    miet: f64,
    tau_max: f64,
    gamma0: f64,
    gamma1: f64,
    lambda: f64,
    phi1_init: f64,
    psi_coeff: f64,
    phi0: PhiSlice,
}

/// Tolerance below which a violated sign contract is treated as a hard error
/// rather than round-off.
const SIGN_TOL: f64 = 1e-12;

impl TriggerFunctions {
    pub fn new(
        p: &EtmParams,
        table: &PhiTable,
        timing: &TimingConstants,
        miet: f64,
        mode: TriggerMode,
        eps_eta: f64,
    ) -> Result<Self> {
        if !(miet > 0.0 && miet <= timing.tau_miet + 1e-15) {
            return Err(Error::Design(format!(
                "selected inter-event time {miet} outside (0, {}]",
                timing.tau_miet
            )));
        }
        let tf = Self {
            mode,
            eps_eta,
            miet,
            tau_max: timing.tau_max,
            gamma0: p.gamma_tilde(0),
            gamma1: p.gamma_tilde(1),
            lambda: p.lambda,
            phi1_init: p.phi1_init,
            psi_coeff: (1.0 - p.eps) * p.mu * p.n_out as f64,
            phi0: table.slice(0).clone(),
        };
        // Surface inconsistent constants at construction, not mid-run.
        tf.rho_coefficient(p.tau_masp)?;
        tf.nu_coefficient(p.tau_masp)?;
        Ok(tf)
    }

    pub fn mode(&self) -> TriggerMode {
        self.mode
    }

    pub fn miet(&self) -> f64 {
        self.miet
    }

    pub fn eps_eta(&self) -> f64 {
        self.eps_eta
    }

    /// Flow gain of the trigger variable:
    /// `psi = varsigma + (1 - eps) * mu * N * h_floor^2`.
    pub fn psi(&self, varsigma: f64, h_floor: f64) -> f64 {
        varsigma + self.psi_coeff * h_floor * h_floor
    }

    /// Coefficient of `|e_out|^2` in the transmission top-up.
    pub fn rho_coefficient(&self, sigma: f64) -> Result<f64> {
        let phi0 = match self.mode {
            TriggerMode::Online => self.phi0.eval(self.miet + sigma)?,
            TriggerMode::Conservative => self.phi0.eval(self.tau_max)?,
        };
        let coeff = self.gamma0 * phi0 - self.gamma1 * self.phi1_init * self.lambda * self.lambda;
        if coeff < -SIGN_TOL {
            return Err(Error::Design(format!(
                "transmission top-up coefficient is negative ({coeff:.3e}): timing constants inconsistent"
            )));
        }
        Ok(coeff.max(0.0))
    }

    /// Transmission top-up `rho(e_out) = coeff(sigma) * |e_out|^2 >= 0`.
    pub fn rho(&self, e_out_norm_sq: f64, sigma: f64) -> Result<f64> {
        Ok(self.rho_coefficient(sigma)? * e_out_norm_sq)
    }

    /// Decay-difference coefficient of the sampling penalty (non-positive).
    pub fn nu_coefficient(&self, sigma: f64) -> Result<f64> {
        let diff = match self.mode {
            TriggerMode::Online => self.phi0.eval(self.miet + sigma)? - self.phi0.eval(self.miet)?,
            TriggerMode::Conservative => self.phi0.eval(self.tau_max)? - self.phi0.eval(self.miet)?,
        };
        if diff > SIGN_TOL {
            return Err(Error::Design(format!(
                "sampling penalty coefficient is positive ({diff:.3e}): decay table not monotone"
            )));
        }
        Ok(diff.min(0.0))
    }

    /// Sampling penalty `nu(e_out, tau, sigma) <= 0`. Zero while the timer has
    /// not exceeded the enforced inter-event time (the set-valued boundary at
    /// `tau = miet` is resolved to zero).
    pub fn nu(&self, e_out_norm_sq: f64, tau: f64, sigma: f64) -> Result<f64> {
        if tau <= self.miet {
            return Ok(0.0);
        }
        Ok(self.gamma0 * self.nu_coefficient(sigma)? * e_out_norm_sq)
    }
}

/// Exact flow of the trigger variable over `dt` with the gain held constant:
/// solves `eta' = psi - eps_eta * eta`.
pub fn eta_exact_step(eta: f64, psi_val: f64, eps_eta: f64, dt: f64) -> f64 {
    debug_assert!(dt >= 0.0 && eps_eta > 0.0);
    let decay = (-eps_eta * dt).exp();
    // (1 - e^{-a dt}) / a computed without cancellation
    let gain = -(-eps_eta * dt).exp_m1() / eps_eta;
    decay * eta + gain * psi_val
}
