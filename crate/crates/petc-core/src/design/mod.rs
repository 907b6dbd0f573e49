//! Per-agent timing design: integrates the decay trajectories that bound the
//! stored network-error energy, derives the admissible timing constants from
//! them, and builds the trigger functions used by the event generators.

mod phi;
mod timing;
mod trigger;

pub use phi::{integrate_phi, phi_derivative, phi_horizon_bound, PhiSlice, PhiTable};
pub use timing::{certify_timing, compute_tau_mad, compute_tau_max, tradeoff_curve, CurvePoint, CurveWarning, TimingCertificate, TimingConstants, TradeoffCurve};
pub use trigger::{eta_exact_step, TriggerFunctions, TriggerMode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-agent tuning and platform constants the timing design works from.
///
/// `gamma` and `mu` come from the L2-gain bound of the local closed loop,
/// `lip` from the output-growth bound, `lambda`/`eps` are free tuning knobs,
/// and `tau_masp`/`d_min` describe the sampling platform.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EtmParams {
    /// L2-gain constant of the error-to-output channel (> 0).
    pub gamma: f64,
    /// Output-growth Lipschitz constant (>= 0).
    pub lip: f64,
    /// Energy weight on the output-rate bound (> 0).
    pub mu: f64,
    /// Splitting factor in (0, 1].
    pub eps: f64,
    /// Contraction tuning factor in (0, 1).
    pub lambda: f64,
    /// Number of out-neighbors (>= 1).
    pub n_out: usize,
    /// Initial value of the post-update decay trajectory (> 0).
    pub phi0_init: f64,
    /// Initial value of the in-flight decay trajectory (> 0).
    pub phi1_init: f64,
    /// Maximum allowable sampling period, seconds.
    pub tau_masp: f64,
    /// Minimum inter-sampling gap, seconds.
    pub d_min: f64,
}

impl EtmParams {
    /// Scaled gain: `lambda^{-l} * gamma` for stage `l` in {0, 1}.
    pub fn gamma_tilde(&self, l: u8) -> f64 {
        debug_assert!(l <= 1);
        if l == 0 {
            self.gamma
        } else {
            self.gamma / self.lambda
        }
    }

    /// Scaled Lipschitz constant: `lambda^{-l} * sqrt(N_i) * lip`.
    pub fn lip_tilde(&self, l: u8) -> f64 {
        debug_assert!(l <= 1);
        let base = (self.n_out as f64).sqrt() * self.lip;
        if l == 0 {
            base
        } else {
            base / self.lambda
        }
    }

    /// Checks ranges and the initial-condition ordering
    /// `gt(1)*phi1(0) >= gt(0)*phi0(0) > lambda^2*gt(1)*phi1(0) > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in (0,1), got {}",
                self.lambda
            )));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must lie in (0,1], got {}",
                self.eps
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter("mu must be positive".into()));
        }
        if self.lip < 0.0 {
            return Err(Error::InvalidParameter("lip must be non-negative".into()));
        }
        if self.n_out == 0 {
            return Err(Error::InvalidParameter("n_out must be at least 1".into()));
        }
        if !(self.phi0_init > 0.0 && self.phi1_init > 0.0) {
            return Err(Error::InvalidParameter(
                "phi trajectory initial values must be positive".into(),
            ));
        }
        if !(self.d_min > 0.0 && self.d_min <= self.tau_masp) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < d_min <= tau_masp, got d_min={}, tau_masp={}",
                self.d_min, self.tau_masp
            )));
        }
        let g0 = self.gamma_tilde(0);
        let g1 = self.gamma_tilde(1);
        let hi = g1 * self.phi1_init;
        let mid = g0 * self.phi0_init;
        let lo = self.lambda * self.lambda * g1 * self.phi1_init;
        if !(hi >= mid && mid > lo && lo > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "initial-condition ordering violated: need {hi:.6} >= {mid:.6} > {lo:.6} > 0"
            )));
        }
        Ok(())
    }
}

/// Complete design output for one agent: decay tables, certified timing
/// constants and the trigger-function bundle.
#[derive(Debug, Clone)]
pub struct AgentDesign {
    pub params: EtmParams,
    pub table: PhiTable,
    pub timing: TimingConstants,
    pub trigger: TriggerFunctions,
}

/// Runs the full per-agent pipeline: integrate both decay trajectories,
/// locate the timing boundaries and assemble the trigger functions.
///
/// `miet_selection` optionally requests a shorter enforced inter-event time;
/// it is clamped into the admissible band `[tau_mad, tau_max - tau_masp]`.
pub fn design_agent(
    params: EtmParams,
    step: f64,
    mode: TriggerMode,
    eps_eta: f64,
    miet_selection: Option<f64>,
) -> Result<AgentDesign> {
    params.validate()?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("integration step must be positive".into()));
    }
    if !(eps_eta > 0.0) {
        return Err(Error::InvalidParameter("eps_eta must be positive".into()));
    }
    let table = PhiTable::integrate(&params, step)?;
    let tau_max = compute_tau_max(&params, &table)?;
    if tau_max <= params.tau_masp {
        return Err(Error::Design(format!(
            "tau_max = {tau_max:.6} does not exceed tau_masp = {}; sampling is too slow for these tuning parameters",
            params.tau_masp
        )));
    }
    // The delay bound must also leave room for one sampling period.
    let tau_mad = compute_tau_mad(&params, &table)?.min(tau_max - params.tau_masp);
    let timing = TimingConstants::new(tau_max, tau_mad, params.tau_masp)?;
    let miet = match miet_selection {
        Some(sel) => {
            if !(sel > 0.0) {
                return Err(Error::InvalidParameter("selected inter-event time must be positive".into()));
            }
            sel.clamp(timing.tau_mad, timing.tau_miet)
        }
        None => timing.tau_miet,
    };
    let trigger = TriggerFunctions::new(&params, &table, &timing, miet, mode, eps_eta)?;
    Ok(AgentDesign {
        params,
        table,
        timing,
        trigger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn bench_params_n2() -> EtmParams {
        // Eight-agent consensus benchmark, degree-2 class.
        EtmParams {
            gamma: 20.05_f64.sqrt(),
            lip: 0.0,
            mu: 0.76 / 2.0,
            eps: 0.5,
            lambda: 0.2,
            n_out: 2,
            phi0_init: 5.0,
            phi1_init: 2.0,
            tau_masp: 1e-2,
            d_min: 1e-3,
        }
    }

    #[test]
    fn gamma_tilde_scaling() {
        let p = bench_params_n2();
        assert_eq!(p.gamma_tilde(0), p.gamma);
        assert_eq!(p.gamma_tilde(1), p.gamma / 0.2);
    }

    #[test]
    fn validate_accepts_benchmark_and_rejects_bad_lambda() {
        let p = bench_params_n2();
        p.validate().unwrap();
        let mut q = p;
        q.lambda = 1.0;
        assert!(q.validate().is_err());
        let mut q = p;
        q.lambda = 0.45; // breaks gt(1)*phi1(0) >= gt(0)*phi0(0)
        assert!(q.validate().is_err());
    }

    #[test]
    fn design_pipeline_produces_consistent_constants() {
        let d = design_agent(bench_params_n2(), 1e-5, TriggerMode::Online, 0.05, None).unwrap();
        assert!(d.timing.tau_max > d.timing.tau_mad + d.params.tau_masp - 1e-12);
        assert!((d.timing.tau_miet - (d.timing.tau_max - d.params.tau_masp)).abs() < 1e-15);
        assert!(d.timing.tau_miet >= d.timing.tau_mad);
    }

    #[test]
    fn miet_selection_clamped_to_admissible_band() {
        let d = design_agent(bench_params_n2(), 1e-5, TriggerMode::Online, 0.05, Some(0.07)).unwrap();
        assert!(d.trigger.miet() <= d.timing.tau_miet);
        assert!(d.trigger.miet() >= d.timing.tau_mad);
        let d2 = design_agent(bench_params_n2(), 1e-5, TriggerMode::Online, 0.05, Some(1e-9)).unwrap();
        assert_eq!(d2.trigger.miet(), d2.timing.tau_mad);
    }
}
