//! Timing boundaries extracted from the decay tables.
//!
//! `tau_max` is the last time the post-update trajectory still dominates the
//! contraction threshold; `tau_mad` is the longest prefix on which the
//! in-flight trajectory dominates the post-update one. Both boundaries are
//! bracketed on the grid and refined by bisection on the interpolant.

use serde::{Deserialize, Serialize};

use super::phi::{integrate_phi, PhiSlice, PhiTable};
use super::EtmParams;
use crate::error::{Error, Result};

/// Bisection resolution for the timing boundaries, seconds.
const BOUNDARY_TOL: f64 = 1e-9;

/// Certified per-agent timing constants, seconds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimingConstants {
    /// Boundary of the contraction inequality.
    pub tau_max: f64,
    /// Maximum allowable total packet delay.
    pub tau_mad: f64,
    /// Enforceable minimum inter-event time, `tau_max - tau_masp`.
    pub tau_miet: f64,
}

impl TimingConstants {
    pub fn new(tau_max: f64, tau_mad: f64, tau_masp: f64) -> Result<Self> {
        let tau_miet = tau_max - tau_masp;
        if !(tau_max > 0.0 && tau_mad > 0.0 && tau_miet > 0.0) {
            return Err(Error::Design(format!(
                "timing constants must be positive: tau_max={tau_max}, tau_mad={tau_mad}, tau_miet={tau_miet}"
            )));
        }
        if tau_max < tau_mad + tau_masp - 1e-15 {
            return Err(Error::Design(format!(
                "need tau_max >= tau_mad + tau_masp ({tau_max} < {tau_mad} + {tau_masp})"
            )));
        }
        Ok(Self {
            tau_max,
            tau_mad,
            tau_miet,
        })
    }
}

/// Largest `tau` with `gt(0)*phi0(tau) >= lambda^2*gt(1)*phi1(0)`.
///
/// The trajectory is strictly decreasing, so the boundary is unique; the
/// returned value is the inequality-satisfying end of the final bisection
/// bracket.
pub fn compute_tau_max(p: &EtmParams, table: &PhiTable) -> Result<f64> {
    let threshold = p.lambda * p.lambda * p.gamma_tilde(1) * p.phi1_init;
    let slice = table.slice(0);
    let margin = |tau: f64| -> Result<f64> { Ok(p.gamma_tilde(0) * slice.eval(tau)? - threshold) };
    if margin(0.0)? < 0.0 {
        return Err(Error::Design(
            "contraction inequality already violated at tau = 0 (invalid initial conditions)".into(),
        ));
    }
    first_violation(slice, margin)
}

/// Largest `tau` such that `gt(1)*phi1(s) >= gt(0)*phi0(s)` holds for every
/// `s` in `[0, tau]` (prefix semantics: the scan stops at the first grid node
/// where the ordering fails).
pub fn compute_tau_mad(p: &EtmParams, table: &PhiTable) -> Result<f64> {
    let s0 = table.slice(0);
    let s1 = table.slice(1);
    let margin = |tau: f64| -> Result<f64> {
        Ok(p.gamma_tilde(1) * s1.eval(tau)? - p.gamma_tilde(0) * s0.eval(tau)?)
    };
    if margin(0.0)? < 0.0 {
        return Err(Error::Design(
            "in-flight trajectory does not dominate at tau = 0 (invalid initial conditions)".into(),
        ));
    }
    // Restrict the scan to the grid both slices cover.
    let end = s0.domain_end().min(s1.domain_end());
    let step = s1.step();
    let n = (end / step).round() as usize;
    let mut prev = 0.0;
    for j in 1..=n {
        let tau = j as f64 * step;
        if margin(tau)? < 0.0 {
            return bisect(prev, tau, margin);
        }
        prev = tau;
    }
    Ok(end)
}

/// Scans a slice's grid for the first sign change of `margin` and refines it.
fn first_violation<F>(slice: &PhiSlice, margin: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let step = slice.step();
    let n = slice.values().len() - 1;
    let mut prev = 0.0;
    for j in 1..=n {
        let tau = j as f64 * step;
        if margin(tau)? < 0.0 {
            return bisect(prev, tau, margin);
        }
        prev = tau;
    }
    Ok(slice.domain_end())
}

/// Bisection between a satisfying `lo` and a violating `hi`; returns the
/// satisfying end once the bracket is below [`BOUNDARY_TOL`].
fn bisect<F>(mut lo: f64, mut hi: f64, margin: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    while hi - lo > BOUNDARY_TOL {
        let mid = 0.5 * (lo + hi);
        if margin(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Result of re-checking produced timing constants against an independent
/// re-integration on a ten-times finer grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingCertificate {
    pub passed: bool,
    /// Worst margin of the contraction inequality at `tau_max`.
    pub contraction_margin: f64,
    /// Worst margin of the ordering inequality over `[0, tau_mad]`.
    pub ordering_margin: f64,
    /// Allowance used for both checks (boundary sits at an equality, so the
    /// bisection resolution translates into a value-space slack).
    pub slack: f64,
}

/// Re-verifies both design inequalities on trajectories re-integrated with
/// `step / 10`.
pub fn certify_timing(
    p: &EtmParams,
    timing: &TimingConstants,
    step: f64,
) -> Result<TimingCertificate> {
    let fine_step = step / 10.0;
    let horizon0 = timing.tau_max + fine_step * 2.0;
    let fine0 = integrate_phi(p, 0, horizon0, fine_step)?;
    let fine1 = integrate_phi(p, 1, timing.tau_mad + fine_step * 2.0, fine_step)?;

    let g0 = p.gamma_tilde(0);
    let g1 = p.gamma_tilde(1);
    let phi0_at_max = fine0.eval(timing.tau_max)?;
    // Value-space slack: boundary resolution times the local decay rate.
    let slack = 2.0 * BOUNDARY_TOL * g0 * super::phi::phi_derivative(0, phi0_at_max, p).abs()
        + 1e-12 * g0 * p.phi0_init;

    let contraction_margin = g0 * phi0_at_max - p.lambda * p.lambda * g1 * p.phi1_init;

    let mut ordering_margin = f64::INFINITY;
    let end = timing.tau_mad.min(fine1.domain_end()).min(fine0.domain_end());
    let n = (end / fine_step).floor() as usize;
    for j in 0..=n {
        let tau = (j as f64 * fine_step).min(end);
        let m = g1 * fine1.eval(tau)? - g0 * fine0.eval(tau)?;
        ordering_margin = ordering_margin.min(m);
    }
    let m_end = g1 * fine1.eval(end)? - g0 * fine0.eval(end)?;
    ordering_margin = ordering_margin.min(m_end);

    let ordering_slack = 2.0 * BOUNDARY_TOL
        * (g1 * super::phi::phi_derivative(1, fine1.eval(end)?, p).abs()
            + g0 * super::phi::phi_derivative(0, fine0.eval(end)?, p).abs())
        + 1e-12 * g1 * p.phi1_init;
    let slack = slack.max(ordering_slack);

    Ok(TimingCertificate {
        passed: contraction_margin >= -slack && ordering_margin >= -slack,
        contraction_margin,
        ordering_margin,
        slack,
    })
}

/// One admissible design point of a contraction-factor sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub tau_max: f64,
    pub tau_mad: f64,
    pub tau_miet: f64,
}

/// A sweep value that produced no admissible design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveWarning {
    pub lambda: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub points: Vec<CurvePoint>,
    pub warnings: Vec<CurveWarning>,
}

/// Re-runs the timing pipeline for each contraction factor in `lambda_grid`.
/// Values whose initial-condition ordering fails (or that leave no sampling
/// margin) are skipped with a warning record. Output is sorted by `lambda`.
pub fn tradeoff_curve(base: &EtmParams, lambda_grid: &[f64], step: f64) -> Result<TradeoffCurve> {
    let mut grid: Vec<f64> = lambda_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for &lambda in &grid {
        let mut p = *base;
        p.lambda = lambda;
        if let Err(e) = p.validate() {
            warnings.push(CurveWarning {
                lambda,
                reason: e.to_string(),
            });
            continue;
        }
        let table = PhiTable::integrate(&p, step)?;
        let tau_max = compute_tau_max(&p, &table)?;
        if tau_max <= p.tau_masp {
            warnings.push(CurveWarning {
                lambda,
                reason: format!("tau_max = {tau_max:.6e} leaves no sampling margin"),
            });
            continue;
        }
        let tau_mad = compute_tau_mad(&p, &table)?.min(tau_max - p.tau_masp);
        points.push(CurvePoint {
            lambda,
            tau_max,
            tau_mad,
            tau_miet: tau_max - p.tau_masp,
        });
    }
    Ok(TradeoffCurve { points, warnings })
}
