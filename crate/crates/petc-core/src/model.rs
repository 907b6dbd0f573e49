//! Pluggable agent dynamics. A [`SystemModel`] bundles the local vector
//! fields, output maps, the output-rate bounds the timing design needs, and
//! the storage-side quantities the runtime monitor evaluates.

use crate::graph::GraphTopology;

/// Held output estimates available to one agent, one block per sender.
/// Block `m` is the agent's current estimate of agent `m`'s output; blocks of
/// agents it does not listen to are empty or zero. The agent's own block
/// carries its last broadcast value.
pub type Estimates = Vec<Vec<f64>>;

pub trait SystemModel: Send + Sync {
    fn topology(&self) -> &GraphTopology;

    /// Per-agent state dimensions.
    fn state_dims(&self) -> &[usize];

    /// Per-agent output dimensions.
    fn output_dims(&self) -> &[usize];

    /// Per-agent exogenous-input dimensions.
    fn input_dims(&self) -> &[usize];

    /// Local output map `h_i(x_i)`.
    fn output(&self, i: usize, x_i: &[f64]) -> Vec<f64>;

    /// Allocation-free variant of [`SystemModel::output`] for hot paths.
    fn output_into(&self, i: usize, x_i: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.output(i, x_i));
    }

    /// Local state derivative `f_i(x, yhat_in, v_i)` written into `out`.
    /// `x` is the global state (physical couplings are allowed), `yhat_in`
    /// the held estimates of agent `i`.
    fn deriv(&self, i: usize, x: &[f64], yhat_in: &Estimates, v_i: &[f64], out: &mut [f64]);

    /// Output-rate bound `H_i`: `|d/dt y_i| <= H_i + L_i |e_i^i|`.
    fn rate_bound(&self, i: usize, x: &[f64], yhat_in: &Estimates, v_i: &[f64]) -> f64;

    /// Lower rate bound computable from held estimates alone,
    /// `rate_floor <= rate_bound` pointwise.
    fn rate_floor(&self, i: usize, yhat_in: &Estimates) -> f64;

    /// Output-growth Lipschitz constant `L_i`.
    fn lip(&self, i: usize) -> f64;

    /// Non-negative estimate-dependent supply contribution.
    fn varsigma(&self, _i: usize, _yhat_in: &Estimates) -> f64 {
        0.0
    }

    /// Storage-side Lyapunov function `V(x)`.
    fn lyapunov(&self, x: &[f64]) -> f64;

    /// Supply rate `s(x, e, v)`; `e[i][m]` is the error of agent `i`'s output
    /// as held by agent `m` (diagonal entries are the self-broadcast errors).
    fn supply_rate(&self, x: &[f64], e: &[Vec<Vec<f64>>], v: &[f64]) -> f64;

    /// Distance of `x` to the attractor set.
    fn attractor_distance(&self, x: &[f64]) -> f64;

    /// True when the supply-rate comparison should be reported as advisory
    /// rather than a hard certificate (imprecisely specified supply rates).
    fn supply_rate_advisory(&self) -> bool {
        false
    }
}

/// Prefix offsets for per-agent blocks inside a flat concatenation.
pub fn block_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(dims.len() + 1);
    let mut acc = 0;
    for &d in dims {
        offs.push(acc);
        acc += d;
    }
    offs.push(acc);
    offs
}
