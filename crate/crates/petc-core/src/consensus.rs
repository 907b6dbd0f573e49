//! Single-integrator consensus over an undirected connected graph.
//!
//! Each agent holds a scalar state, broadcasts it, and steers with the
//! disagreement of its held estimates. The model ships the constants the
//! timing design needs (`gamma_i`, `mu_i`) derived from the Laplacian
//! Lyapunov bound.

use serde::{Deserialize, Serialize};

use crate::design::EtmParams;
use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::model::{Estimates, SystemModel};

/// Tuning constants of the consensus Lyapunov bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConsensusParams {
    /// Split between the disagreement and control penalties, in (0,1).
    pub delta: f64,
    /// Young's-inequality weight, must satisfy `a * N_i < 1` for every agent.
    pub a: f64,
    /// Gain margin added to the error channel (> 0).
    pub alpha: f64,
}

impl ConsensusParams {
    pub fn validate(&self, topology: &GraphTopology) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        for i in 0..topology.n_agents() {
            let n_i = topology.out_degree(i) as f64;
            if !(self.a > 0.0 && self.a * n_i < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "need 0 < a < 1/N_i; a = {}, N_{} = {}",
                    self.a,
                    i,
                    n_i
                )));
            }
        }
        Ok(())
    }

    /// `c_i = (1 - delta) (1 - a N_i)`.
    pub fn c(&self, n_out: usize) -> f64 {
        (1.0 - self.delta) * (1.0 - self.a * n_out as f64)
    }

    /// Disagreement penalty weight `delta (1 - a N_i)`.
    pub fn d_lyap(&self, n_out: usize) -> f64 {
        self.delta * (1.0 - self.a * n_out as f64)
    }

    /// `mu_i = c_i / N_i`.
    pub fn mu(&self, n_out: usize) -> f64 {
        self.c(n_out) / n_out as f64
    }

    /// `gamma_i = sqrt(N_i / a + alpha)`.
    pub fn gamma(&self, n_out: usize) -> f64 {
        (n_out as f64 / self.a + self.alpha).sqrt()
    }
}

/// The consensus [`SystemModel`]: `x_i' = u_i`, `y_i = x_i`, rate bound
/// `H_i = |u_i|` (exact, so the floor equals the bound) and `L_i = 0`.
#[derive(Debug, Clone)]
pub struct ConsensusModel {
    topology: GraphTopology,
    params: ConsensusParams,
    dims: Vec<usize>,
    no_inputs: Vec<usize>,
    laplacian: Vec<Vec<f64>>,
}

impl ConsensusModel {
    pub fn new(topology: GraphTopology, params: ConsensusParams) -> Result<Self> {
        if !topology.is_undirected() {
            return Err(Error::InvalidTopology(
                "consensus model requires an undirected graph".into(),
            ));
        }
        if !topology.is_connected() {
            return Err(Error::InvalidTopology(
                "consensus model requires a connected graph".into(),
            ));
        }
        params.validate(&topology)?;
        let n = topology.n_agents();
        let laplacian = topology.laplacian();
        Ok(Self {
            topology,
            params,
            dims: vec![1; n],
            no_inputs: vec![0; n],
            laplacian,
        })
    }

    pub fn params(&self) -> &ConsensusParams {
        &self.params
    }

    /// Disagreement control law evaluated on held estimates:
    /// `u_i = -sum_{m in V_in(i)} (yhat_i^i - yhat_m^i)`.
    pub fn control(&self, i: usize, yhat_in: &Estimates) -> f64 {
        let own = yhat_in[i][0];
        -self
            .topology
            .in_neighbors(i)
            .iter()
            .map(|&m| own - yhat_in[m][0])
            .sum::<f64>()
    }

    /// Local disagreement `z_i = sum_{m in V_in(i)} (x_i - x_m)`.
    pub fn disagreement(&self, i: usize, x: &[f64]) -> f64 {
        self.topology
            .in_neighbors(i)
            .iter()
            .map(|&m| x[i] - x[m])
            .sum()
    }

    /// Builds the per-agent timing-design inputs from the derived constants.
    pub fn etm_params(
        &self,
        i: usize,
        lambda: f64,
        eps: f64,
        phi0_init: f64,
        phi1_init: f64,
        tau_masp: f64,
        d_min: f64,
    ) -> EtmParams {
        let n_out = self.topology.out_degree(i);
        EtmParams {
            gamma: self.params.gamma(n_out),
            lip: 0.0,
            mu: self.params.mu(n_out),
            eps,
            lambda,
            n_out,
            phi0_init,
            phi1_init,
            tau_masp,
            d_min,
        }
    }
}

impl SystemModel for ConsensusModel {
    fn topology(&self) -> &GraphTopology {
        &self.topology
    }

    fn state_dims(&self) -> &[usize] {
        &self.dims
    }

    fn output_dims(&self) -> &[usize] {
        &self.dims
    }

    fn input_dims(&self) -> &[usize] {
        &self.no_inputs
    }

    fn output(&self, _i: usize, x_i: &[f64]) -> Vec<f64> {
        vec![x_i[0]]
    }

    fn output_into(&self, _i: usize, x_i: &[f64], out: &mut [f64]) {
        out[0] = x_i[0];
    }

    fn deriv(&self, i: usize, _x: &[f64], yhat_in: &Estimates, _v_i: &[f64], out: &mut [f64]) {
        out[0] = self.control(i, yhat_in);
    }

    fn rate_bound(&self, i: usize, _x: &[f64], yhat_in: &Estimates, _v_i: &[f64]) -> f64 {
        self.control(i, yhat_in).abs()
    }

    fn rate_floor(&self, i: usize, yhat_in: &Estimates) -> f64 {
        // u_i depends on estimates only, so the bound is exact.
        self.control(i, yhat_in).abs()
    }

    fn lip(&self, _i: usize) -> f64 {
        0.0
    }

    fn lyapunov(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                v += x[i] * self.laplacian[i][j] * x[j];
            }
        }
        v
    }

    fn supply_rate(&self, x: &[f64], e: &[Vec<Vec<f64>>], _v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.topology.n_agents() {
            let n_out = self.topology.out_degree(i);
            let z = self.disagreement(i, x);
            let e_self = e[i][i][0];
            s += -self.params.d_lyap(n_out) * z * z - self.params.mu(n_out) * e_self * e_self;
        }
        s
    }

    fn attractor_distance(&self, x: &[f64]) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|&xi| (xi - mean) * (xi - mean)).sum::<f64>().sqrt()
    }

    fn supply_rate_advisory(&self) -> bool {
        // The disagreement weighting in the supply rate is a modeling choice;
        // the monitor reports its violations as warnings, not failures.
        true
    }
}
