//! The hybrid system state and its flow/jump maps.
//!
//! The state collects the plant, the network-induced errors, the two local
//! clocks per agent, the last-broadcast memory, the per-link in-flight and
//! buffered indicators, and the trigger variables. Three jump types exist:
//! sampling with transmission, sampling without transmission, and packet
//! reception (buffering only; processing happens at the receiver's next
//! sampling instant).

use crate::design::{eta_exact_step, AgentDesign};
use crate::error::{Error, Result};
use crate::model::{block_offsets, Estimates, SystemModel};

/// Full hybrid state. Error blocks are indexed `e[sender][receiver]`; the
/// diagonal carries each agent's error on its own last broadcast (updated
/// with zero delay at its own transmissions), all blocks for non-links stay
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub x: Vec<f64>,
    pub e: Vec<Vec<Vec<f64>>>,
    /// Seconds since the agent's last transmission.
    pub tau: Vec<f64>,
    /// Seconds since the agent's last sampling instant.
    pub sigma: Vec<f64>,
    /// Last transmitted output per agent.
    pub r: Vec<Vec<f64>>,
    /// Packet in flight on link (sender, receiver).
    pub ell: Vec<Vec<bool>>,
    /// Packet delivered but not yet processed on link (sender, receiver).
    pub buf: Vec<Vec<bool>>,
    /// Trigger variables, non-negative.
    pub eta: Vec<f64>,
}

impl HybridState {
    /// State at time zero: estimates agree with the true outputs, clocks at
    /// zero (time zero counts as a transmission instant for every agent), no
    /// traffic.
    pub fn initial(model: &dyn SystemModel, x0: &[f64], eta0: &[f64]) -> Result<Self> {
        let n = model.topology().n_agents();
        let offs = block_offsets(model.state_dims());
        if x0.len() != offs[n] {
            return Err(Error::InvalidConfig(format!(
                "initial state has {} entries, model needs {}",
                x0.len(),
                offs[n]
            )));
        }
        if eta0.len() != n || eta0.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig(
                "eta0 must hold one non-negative value per agent".into(),
            ));
        }
        let r: Vec<Vec<f64>> = (0..n)
            .map(|i| model.output(i, &x0[offs[i]..offs[i + 1]]))
            .collect();
        let e = (0..n)
            .map(|i| (0..n).map(|_| vec![0.0; model.output_dims()[i]]).collect())
            .collect();
        Ok(Self {
            x: x0.to_vec(),
            e,
            tau: vec![0.0; n],
            sigma: vec![0.0; n],
            r,
            ell: vec![vec![false; n]; n],
            buf: vec![vec![false; n]; n],
            eta: eta0.to_vec(),
        })
    }

    /// Current output of agent `i`.
    pub fn output(&self, i: usize, model: &dyn SystemModel) -> Vec<f64> {
        let offs = block_offsets(model.state_dims());
        model.output(i, &self.x[offs[i]..offs[i + 1]])
    }

    /// Squared norm of agent `i`'s outgoing error blocks (self block
    /// excluded; it is not part of the broadcast error).
    pub fn e_out_norm_sq(&self, i: usize, model: &dyn SystemModel) -> f64 {
        model
            .topology()
            .out_neighbors(i)
            .iter()
            .map(|&m| self.e[i][m].iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Re-checks the state-space constraints; used after every operation in
    /// checked runs.
    pub fn validate(&self, model: &dyn SystemModel, designs: &[AgentDesign], t: f64) -> Result<()> {
        let topo = model.topology();
        let n = topo.n_agents();
        for i in 0..n {
            if !self.eta[i].is_finite() || self.eta[i] < -1e-12 {
                return Err(Error::Invariant {
                    t,
                    msg: format!("eta[{i}] = {} negative or non-finite", self.eta[i]),
                });
            }
            if self.sigma[i] < 0.0 || self.sigma[i] > designs[i].params.tau_masp + 1e-9 {
                return Err(Error::Invariant {
                    t,
                    msg: format!("sigma[{i}] = {} outside sampling window", self.sigma[i]),
                });
            }
            for m in 0..n {
                if self.ell[i][m] && self.buf[i][m] {
                    return Err(Error::Invariant {
                        t,
                        msg: format!("link ({i},{m}) both in flight and buffered"),
                    });
                }
                if (self.ell[i][m] || self.buf[i][m])
                    && self.tau[i] > designs[i].timing.tau_mad + 1e-9
                {
                    return Err(Error::Invariant {
                        t,
                        msg: format!(
                            "link ({i},{m}) pending while tau[{i}] = {} exceeds the delay bound",
                            self.tau[i]
                        ),
                    });
                }
                if !topo.delta(i, m) && i != m {
                    let z = self.e[i][m].iter().all(|&v| v == 0.0);
                    if !z {
                        return Err(Error::Invariant {
                            t,
                            msg: format!("redundant error block ({i},{m}) is non-zero"),
                        });
                    }
                }
            }
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t,
                msg: "plant state".into(),
            });
        }
        Ok(())
    }
}

/// Held estimates of agent `i`: block `m` is `h_m(x_m) + e_m^i` for
/// in-neighbors and for the agent itself, zero blocks elsewhere.
pub fn estimates_in(state: &HybridState, i: usize, model: &dyn SystemModel) -> Estimates {
    let n = model.topology().n_agents();
    let mut est: Estimates = (0..n).map(|m| vec![0.0; model.output_dims()[m]]).collect();
    estimates_in_into(state, i, model, &mut est);
    est
}

/// Writes agent `i`'s held estimates into a pre-sized block vector.
pub fn estimates_in_into(state: &HybridState, i: usize, model: &dyn SystemModel, est: &mut Estimates) {
    let topo = model.topology();
    let offs = block_offsets(model.state_dims());
    for &m in topo.in_neighbors(i).iter().chain(std::iter::once(&i)) {
        model.output_into(m, &state.x[offs[m]..offs[m + 1]], &mut est[m]);
        for (k, v) in est[m].iter_mut().enumerate() {
            *v += state.e[m][i][k];
        }
    }
}

/// Reusable buffers for the flow map; one instance per run avoids
/// re-allocating the held-estimate and integrator workspaces at every step.
#[derive(Debug, Clone)]
pub struct FlowScratch {
    held: Vec<Estimates>,
    psi: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    y: Vec<Vec<f64>>,
}

impl FlowScratch {
    pub fn new(model: &dyn SystemModel) -> Self {
        let n = model.topology().n_agents();
        let dim: usize = model.state_dims().iter().sum();
        let blocks = |_: usize| -> Estimates {
            (0..n).map(|m| vec![0.0; model.output_dims()[m]]).collect()
        };
        Self {
            held: (0..n).map(blocks).collect(),
            psi: vec![0.0; n],
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
            y: (0..n).map(|m| vec![0.0; model.output_dims()[m]]).collect(),
        }
    }
}

/// Flows the state for `dt` seconds with no events inside the interval.
///
/// All held estimates are constant along flow, so the plant is integrated
/// with one classical fourth-order step against the frozen estimates, the
/// error blocks are reset from the hold identity `e = yhat - h(x)`, and the
/// trigger variables advance by their exact linear flow. Callers keep `dt`
/// small (they slice at events and at recording points).
pub fn flow(
    state: &mut HybridState,
    v: &[f64],
    dt: f64,
    model: &dyn SystemModel,
    designs: &[AgentDesign],
) -> Result<()> {
    let mut scratch = FlowScratch::new(model);
    flow_with(state, v, dt, model, designs, &mut scratch)
}

/// [`flow`] with caller-provided workspaces.
pub fn flow_with(
    state: &mut HybridState,
    v: &[f64],
    dt: f64,
    model: &dyn SystemModel,
    designs: &[AgentDesign],
    scratch: &mut FlowScratch,
) -> Result<()> {
    if dt == 0.0 {
        return Ok(());
    }
    let topo = model.topology();
    let n = topo.n_agents();
    let offs = block_offsets(model.state_dims());
    let v_offs = block_offsets(model.input_dims());
    let FlowScratch {
        held,
        psi,
        k1,
        k2,
        k3,
        k4,
        tmp,
        y,
    } = scratch;

    for i in 0..n {
        for block in held[i].iter_mut() {
            block.fill(0.0);
        }
        estimates_in_into(state, i, model, &mut held[i]);
    }

    // Trigger-variable gains are constant along flow.
    for i in 0..n {
        psi[i] = designs[i]
            .trigger
            .psi(model.varsigma(i, &held[i]), model.rate_floor(i, &held[i]));
    }

    let deriv = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            model.deriv(
                i,
                x,
                &held[i],
                &v[v_offs[i]..v_offs[i + 1]],
                &mut out[offs[i]..offs[i + 1]],
            );
        }
    };
    let dim = offs[n];
    deriv(&state.x, k1);
    for j in 0..dim {
        tmp[j] = state.x[j] + 0.5 * dt * k1[j];
    }
    deriv(tmp, k2);
    for j in 0..dim {
        tmp[j] = state.x[j] + 0.5 * dt * k2[j];
    }
    deriv(tmp, k3);
    for j in 0..dim {
        tmp[j] = state.x[j] + dt * k3[j];
    }
    deriv(tmp, k4);
    for j in 0..dim {
        state.x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        if !state.x[j].is_finite() {
            return Err(Error::NonFinite {
                t: f64::NAN,
                msg: format!("plant state entry {j} after flow"),
            });
        }
    }

    // ZOH identity: the held value of sender m at receiver i has not moved,
    // so the error absorbs the output drift exactly.
    for m in 0..n {
        model.output_into(m, &state.x[offs[m]..offs[m + 1]], &mut y[m]);
        for &i in topo.out_neighbors(m).iter().chain(std::iter::once(&m)) {
            for k in 0..y[m].len() {
                state.e[m][i][k] = held[i][m][k] - y[m][k];
            }
        }
    }

    for i in 0..n {
        state.tau[i] += dt;
        state.sigma[i] += dt;
        state.eta[i] = eta_exact_step(state.eta[i], psi[i], designs[i].trigger.eps_eta(), dt);
    }
    Ok(())
}

/// Processes every buffered packet at receiver `i`: the stored broadcast
/// value replaces the held estimate, expressed on the error variables.
fn process_buffered(state: &mut HybridState, i: usize, model: &dyn SystemModel) {
    let n = model.topology().n_agents();
    let offs = block_offsets(model.state_dims());
    for j in 0..n {
        if state.buf[j][i] {
            let y_j = model.output(j, &state.x[offs[j]..offs[j + 1]]);
            for k in 0..y_j.len() {
                state.e[j][i][k] = state.r[j][k] - y_j[k];
            }
            state.buf[j][i] = false;
        }
    }
}

/// Sampling jump with transmission.
///
/// Buffered packets at `i` are processed, the trigger variable is topped up
/// from the pre-jump sampling offset, both clocks reset, the broadcast
/// memory takes the current output (the agent's own estimate updates with
/// zero delay), and one in-flight flag is raised per out-neighbor.
pub fn jump_transmit(
    state: &mut HybridState,
    i: usize,
    model: &dyn SystemModel,
    design: &AgentDesign,
) -> Result<()> {
    let topo = model.topology();
    for &m in topo.out_neighbors(i) {
        if state.ell[i][m] || state.buf[i][m] {
            return Err(Error::Protocol {
                t: f64::NAN,
                msg: format!("transmission by {i} while packet to {m} still pending"),
            });
        }
    }
    process_buffered(state, i, model);
    let rho = design
        .trigger
        .rho(state.e_out_norm_sq(i, model), state.sigma[i])?;
    state.eta[i] += rho;
    state.tau[i] = 0.0;
    state.sigma[i] = 0.0;
    let y_i = state.output(i, model);
    for k in 0..y_i.len() {
        state.e[i][i][k] = 0.0;
    }
    state.r[i] = y_i;
    for &m in topo.out_neighbors(i) {
        state.ell[i][m] = true;
    }
    Ok(())
}

/// Sampling jump without transmission: buffered packets are processed, the
/// sampling penalty (evaluated at the pre-jump clocks) is applied, and the
/// sampling clock resets.
pub fn jump_sample(
    state: &mut HybridState,
    i: usize,
    model: &dyn SystemModel,
    design: &AgentDesign,
) -> Result<()> {
    let nu = design
        .trigger
        .nu(state.e_out_norm_sq(i, model), state.tau[i], state.sigma[i])?;
    process_buffered(state, i, model);
    state.eta[i] += nu;
    state.sigma[i] = 0.0;
    Ok(())
}

/// Reception jump on link `(i, m)`: the in-flight packet becomes buffered.
/// Nothing else moves.
pub fn jump_receive(state: &mut HybridState, i: usize, m: usize) -> Result<()> {
    if !state.ell[i][m] {
        return Err(Error::Protocol {
            t: f64::NAN,
            msg: format!("delivery on link ({i},{m}) with no packet in flight"),
        });
    }
    state.ell[i][m] = false;
    state.buf[i][m] = true;
    Ok(())
}

/// Event-trigger rule evaluated at a sampling instant of agent `i`:
/// transmit iff the enforced inter-event time has elapsed and
/// `eta_i + nu_i <= 0`. Equality transmits.
pub fn trigger_decision(
    state: &HybridState,
    i: usize,
    model: &dyn SystemModel,
    design: &AgentDesign,
) -> Result<bool> {
    if state.tau[i] < design.trigger.miet() {
        return Ok(false);
    }
    // A pending packet at tau == miet is only reachable when the enforced
    // gap was clamped down to the delay bound and the boundary instants
    // collide; deferring to the next sampling instant keeps the indicator
    // constraints intact.
    if model
        .topology()
        .out_neighbors(i)
        .iter()
        .any(|&m| state.ell[i][m] || state.buf[i][m])
    {
        return Ok(false);
    }
    let nu = design
        .trigger
        .nu(state.e_out_norm_sq(i, model), state.tau[i], state.sigma[i])?;
    Ok(state.eta[i] + nu <= 0.0)
}
