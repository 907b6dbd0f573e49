//! Shared test oracles, independent of the library's integration path.
#![allow(dead_code)] // each test binary uses a subset

use petc_core::design::EtmParams;

/// Closed form of the Lipschitz-free decay stage, by separation of
/// variables: `phi(tau) = k * tan(atan(phi(0)/k) - gt(l) * tau / k)` with
/// `k = sqrt(mu * eps)`.
pub fn closed_form_phi(l: u8, tau: f64, p: &EtmParams) -> f64 {
    let k = (p.mu * p.eps).sqrt();
    let gt = p.gamma_tilde(l);
    let init = if l == 0 { p.phi0_init } else { p.phi1_init };
    k * ((init / k).atan() - gt * tau / k).tan()
}

/// Closed-form contraction boundary for the Lipschitz-free case:
/// `tau_max = (k / gamma) * (atan(phi0(0)/k) - atan(lambda * phi1(0) / k))`.
pub fn closed_form_tau_max(p: &EtmParams) -> f64 {
    let k = (p.mu * p.eps).sqrt();
    (k / p.gamma) * ((p.phi0_init / k).atan() - (p.lambda * p.phi1_init / k).atan())
}

/// Benchmark tuning constants per out-degree (delta = alpha = 0.05, a = 0.1).
pub fn bench_etm_params(n_out: usize, tau_masp: f64) -> EtmParams {
    let c = 0.95 * (1.0 - 0.1 * n_out as f64);
    EtmParams {
        gamma: (n_out as f64 / 0.1 + 0.05).sqrt(),
        lip: 0.0,
        mu: c / n_out as f64,
        eps: 0.5,
        lambda: 0.2,
        n_out,
        phi0_init: 5.0,
        phi1_init: 2.0,
        tau_masp,
        d_min: 1e-3,
    }
}

/// Largest pairwise distance between scalar agent states.
pub fn spread(x: &[f64]) -> f64 {
    let mx = x.iter().cloned().fold(f64::MIN, f64::max);
    let mn = x.iter().cloned().fold(f64::MAX, f64::min);
    mx - mn
}
