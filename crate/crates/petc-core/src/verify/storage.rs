//! Storage-function machinery: the pending-set indicator, the worst-case
//! error measure over pending updates, the clock-frozen decay lookup, and
//! the full storage function evaluated on hybrid states.

use crate::design::AgentDesign;
use crate::error::Result;
use crate::hybrid::HybridState;
use crate::model::{block_offsets, SystemModel};

/// Largest pending set the subset maximization accepts.
const MAX_PENDING: usize = 16;

/// Stage indicator: 1 while any outgoing packet of the agent is in flight or
/// buffered, 0 once everything is processed.
pub fn p_flag(out_neighbors: &[usize], ell: &[bool], buf: &[bool]) -> u8 {
    if out_neighbors.iter().any(|&m| ell[m] || buf[m]) {
        1
    } else {
        0
    }
}

/// Worst-case outgoing error measure.
///
/// `pending` updates would replace a receiver's error block by
/// `r_i - y_i`; the measure takes the maximum of the fully-updated error
/// norm and `lambda` times the worst partially-updated norm over all
/// subsets of the pending set (exhaustive enumeration; the pending set is
/// at most the out-degree, and instances past [`MAX_PENDING`] are rejected).
pub fn w_tilde(
    lambda: f64,
    out_neighbors: &[usize],
    ell: &[bool],
    buf: &[bool],
    y: &[f64],
    e_out: &[Vec<f64>],
    r: &[f64],
) -> f64 {
    let mut pending = [0usize; MAX_PENDING];
    let mut n_pending = 0usize;
    for &m in out_neighbors {
        if ell[m] || buf[m] {
            assert!(
                n_pending < MAX_PENDING,
                "pending set exceeds the subset-enumeration guard ({MAX_PENDING})"
            );
            pending[n_pending] = m;
            n_pending += 1;
        }
    }
    let pending = &pending[..n_pending];

    // Squared norm of the replacement block r - y.
    let q_sq: f64 = r.iter().zip(y).map(|(rk, yk)| (rk - yk) * (rk - yk)).sum();
    let block_sq = |m: usize| -> f64 { e_out[m].iter().map(|v| v * v).sum() };

    // Fully updated: every pending block replaced by r - y.
    let mut first_sq = 0.0;
    for &m in out_neighbors {
        first_sq += if pending.contains(&m) { q_sq } else { block_sq(m) };
    }

    // Partial updates: enumerate every subset of the pending set.
    let base_sq: f64 = out_neighbors.iter().map(|&m| block_sq(m)).sum();
    let mut worst_sq = base_sq;
    for mask in 1u32..(1u32 << pending.len()) {
        let mut s = base_sq;
        for (bit, &m) in pending.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                s += q_sq - block_sq(m);
            }
        }
        worst_sq = worst_sq.max(s);
    }

    first_sq.sqrt().max(lambda * worst_sq.sqrt())
}

/// Clock-frozen decay value: the running trajectory while the transmission
/// clock is within the enforced gap of the last sampling, frozen at
/// `miet + sigma` beyond it.
pub fn phi_bar(design: &AgentDesign, l: u8, tau: f64, sigma: f64) -> Result<f64> {
    let miet = design.trigger.miet();
    let slice = design.table.slice(l);
    if tau - sigma <= miet {
        slice.eval(tau)
    } else {
        slice.eval(miet + sigma)
    }
}

/// Storage-function evaluator bound to a model and its per-agent designs.
pub struct StorageEvaluator<'a> {
    pub model: &'a dyn SystemModel,
    pub designs: &'a [AgentDesign],
}

impl<'a> StorageEvaluator<'a> {
    pub fn new(model: &'a dyn SystemModel, designs: &'a [AgentDesign]) -> Self {
        Self { model, designs }
    }

    /// Contribution of one agent's pending-error term.
    pub fn error_term(&self, state: &HybridState, i: usize) -> Result<f64> {
        let topo = self.model.topology();
        let design = &self.designs[i];
        let p = p_flag(topo.out_neighbors(i), &state.ell[i], &state.buf[i]);
        let offs = block_offsets(self.model.state_dims());
        let y = self.model.output(i, &state.x[offs[i]..offs[i + 1]]);
        let w = w_tilde(
            design.params.lambda,
            topo.out_neighbors(i),
            &state.ell[i],
            &state.buf[i],
            &y,
            &state.e[i],
            &state.r[i],
        );
        let phi = phi_bar(design, p, state.tau[i], state.sigma[i])?;
        Ok(design.params.gamma_tilde(p) * phi * w * w)
    }

    /// Full storage value
    /// `U = V(x) + sum_i eta_i + sum_i gt(p_i) * phibar_{p_i} * Wt_i^2`.
    pub fn storage(&self, state: &HybridState) -> Result<f64> {
        let mut u = self.model.lyapunov(&state.x);
        for i in 0..self.model.topology().n_agents() {
            u += state.eta[i];
            u += self.error_term(state, i)?;
        }
        Ok(u)
    }

    /// Supply rate bounding the storage flow:
    /// `s(x, e, v) - sum_i eps_eta_i * eta_i`.
    pub fn supply(&self, state: &HybridState, v: &[f64]) -> f64 {
        let mut s = self.model.supply_rate(&state.x, &state.e, v);
        for i in 0..self.model.topology().n_agents() {
            s -= self.designs[i].trigger.eps_eta() * state.eta[i];
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{ConsensusModel, ConsensusParams};
    use crate::design::{design_agent, TriggerMode};
    use crate::graph::GraphTopology;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line_model(n: usize) -> ConsensusModel {
        let pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let topo = GraphTopology::undirected(n, &pairs).unwrap();
        ConsensusModel::new(
            topo,
            ConsensusParams {
                delta: 0.05,
                a: 0.1,
                alpha: 0.05,
            },
        )
        .unwrap()
    }

    fn designs_for(model: &ConsensusModel) -> Vec<AgentDesign> {
        (0..model.topology().n_agents())
            .map(|i| {
                let p = model.etm_params(i, 0.2, 0.5, 5.0, 2.0, 5e-3, 1e-3);
                design_agent(p, 1e-5, TriggerMode::Online, 0.05, None).unwrap()
            })
            .collect()
    }

    #[test]
    fn p_flag_cases() {
        let out = [1usize, 2];
        assert_eq!(p_flag(&out, &[false; 4], &[false; 4]), 0);
        let mut ell = [false; 4];
        ell[1] = true;
        assert_eq!(p_flag(&out, &ell, &[false; 4]), 1);
        // invariant under the flight->buffer swap
        let mut buf = [false; 4];
        buf[1] = true;
        assert_eq!(p_flag(&out, &[false; 4], &buf), 1);
    }

    #[test]
    fn w_tilde_reduces_to_error_norm_when_idle() {
        let out = [1usize, 2];
        let e_out = vec![vec![0.0], vec![0.3], vec![-0.4]];
        let w = w_tilde(0.5, &out, &[false; 3], &[false; 3], &[1.0], &e_out, &[0.7]);
        assert_relative_eq!(w, 0.5, epsilon = 1e-15); // |(0.3, -0.4)| = 0.5
    }

    #[test]
    fn w_tilde_contracts_right_after_transmission() {
        // post-transmission shape: every out-link pending, r = y
        let out = [1usize, 2];
        let lambda = 0.2;
        let y = [0.9];
        let e_out = vec![vec![0.0], vec![0.3], vec![-0.4]];
        let mut ell = [false; 3];
        ell[1] = true;
        ell[2] = true;
        let w_post = w_tilde(lambda, &out, &ell, &[false; 3], &y, &e_out, &y);
        let w_idle = w_tilde(lambda, &out, &[false; 3], &[false; 3], &y, &e_out, &[0.2]);
        assert!(w_post <= lambda * w_idle + 1e-12, "{w_post} vs {}", lambda * w_idle);
    }

    proptest! {
        /// Enumeration agrees with a from-scratch brute force over subset
        /// bitmasks on random small instances.
        #[test]
        fn w_tilde_matches_bruteforce(
            e in proptest::collection::vec(-5.0..5.0f64, 3),
            y in -5.0..5.0f64,
            r in -5.0..5.0f64,
            flags in proptest::collection::vec(0u8..3, 3),
            lambda in 0.05..0.95f64,
        ) {
            let out = [0usize, 1, 2];
            let ell: Vec<bool> = flags.iter().map(|&f| f == 1).collect();
            let buf: Vec<bool> = flags.iter().map(|&f| f == 2).collect();
            let e_out: Vec<Vec<f64>> = e.iter().map(|&v| vec![v]).collect();
            let got = w_tilde(lambda, &out, &ell, &buf, &[y], &e_out, &[r]);

            // independent brute force
            let pending: Vec<usize> = (0..3).filter(|&m| ell[m] || buf[m]).collect();
            let q = r - y;
            let full: f64 = (0..3)
                .map(|m| if pending.contains(&m) { q * q } else { e[m] * e[m] })
                .sum::<f64>()
                .sqrt();
            let mut worst: f64 = 0.0;
            for mask in 0..(1usize << pending.len()) {
                let mut sq = 0.0;
                for m in 0..3 {
                    let replaced = pending
                        .iter()
                        .enumerate()
                        .any(|(bit, &pm)| pm == m && mask & (1 << bit) != 0);
                    sq += if replaced { q * q } else { e[m] * e[m] };
                }
                worst = worst.max(sq.sqrt());
            }
            let expect = full.max(lambda * worst);
            prop_assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        }

        /// Stage-weighted measure dominates the plain error gain:
        /// `gt(p)^2 * Wt^2 >= gamma^2 * |e_out|^2`.
        #[test]
        fn gain_dominance(
            e in proptest::collection::vec(-5.0..5.0f64, 2),
            y in -5.0..5.0f64,
            r in -5.0..5.0f64,
            flags in proptest::collection::vec(0u8..3, 2),
        ) {
            let model = line_model(3);
            let designs = designs_for(&model);
            let design = &designs[1]; // middle agent, two out-neighbors
            let out = model.topology().out_neighbors(1).to_vec();
            let mut ell = vec![false; 3];
            let mut buf = vec![false; 3];
            for (k, &m) in out.iter().enumerate() {
                ell[m] = flags[k] == 1;
                buf[m] = flags[k] == 2;
            }
            let mut e_out = vec![vec![0.0]; 3];
            for (k, &m) in out.iter().enumerate() {
                e_out[m][0] = e[k];
            }
            let p = p_flag(&out, &ell, &buf);
            let w = w_tilde(design.params.lambda, &out, &ell, &buf, &[y], &e_out, &[r]);
            let gt = design.params.gamma_tilde(p);
            let g = design.params.gamma;
            let e_norm_sq: f64 = e.iter().map(|v| v * v).sum();
            prop_assert!(gt * gt * w * w >= g * g * e_norm_sq - 1e-9,
                "p={p}: {} vs {}", gt * gt * w * w, g * g * e_norm_sq);
        }
    }

    #[test]
    fn phi_bar_branches_and_continuity() {
        let model = line_model(2);
        let designs = designs_for(&model);
        let d = &designs[0];
        let miet = d.trigger.miet();
        // inside the running branch
        let v1 = phi_bar(d, 0, 0.5 * miet, 0.0).unwrap();
        assert_relative_eq!(v1, d.table.phi0(0.5 * miet).unwrap(), epsilon = 1e-15);
        // frozen branch: value stops moving as tau grows
        let sigma = 2e-3;
        let a = phi_bar(d, 0, miet + sigma + 1e-4, sigma).unwrap();
        let b = phi_bar(d, 0, miet + sigma + 3e-3, sigma).unwrap();
        assert_eq!(a, b);
        assert_relative_eq!(a, d.table.phi0(miet + sigma).unwrap(), epsilon = 1e-15);
        // continuity across the branch boundary tau - sigma = miet
        let tau_b = miet + sigma;
        let inside = phi_bar(d, 0, tau_b, sigma).unwrap();
        let outside = phi_bar(d, 0, tau_b + 1e-12, sigma).unwrap();
        assert!((inside - outside).abs() < 1e-9);
    }

    #[test]
    fn phi_bar_out_of_horizon_is_an_error() {
        let model = line_model(2);
        let designs = designs_for(&model);
        // running branch far past the table: tau - sigma <= miet needs a huge sigma
        assert!(phi_bar(&designs[0], 0, 10.0, 10.0).is_err());
    }

    #[test]
    fn storage_vanishes_on_the_attractor() {
        let model = line_model(3);
        let designs = designs_for(&model);
        let ev = StorageEvaluator::new(&model, &designs);
        let state = HybridState::initial(&model, &[0.4, 0.4, 0.4], &[0.0; 3]).unwrap();
        let u = ev.storage(&state).unwrap();
        assert!(u.abs() < 1e-12, "U = {u}");
    }

    #[test]
    fn storage_dominates_lyapunov() {
        let model = line_model(3);
        let designs = designs_for(&model);
        let ev = StorageEvaluator::new(&model, &designs);
        let mut state = HybridState::initial(&model, &[0.9, -0.2, 0.4], &[0.1, 0.0, 0.3]).unwrap();
        state.e[0][1][0] = 0.25;
        let u = ev.storage(&state).unwrap();
        assert!(u >= model.lyapunov(&state.x));
    }
}
