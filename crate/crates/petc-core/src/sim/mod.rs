//! Discrete-event engine: asynchronous per-agent sampling schedules,
//! admissible network delays, and the event loop driving the hybrid state
//! from time zero to the horizon.
//!
//! Event times live on an integer picosecond grid; simultaneity is exact and
//! ties resolve deterministically (deliveries before samplings, deliveries by
//! (receiver, sender, seq), samplings by agent index). Every agent draws from
//! its own seeded random streams, so adding an agent leaves the others'
//! schedules untouched.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::{DrawSpec, ScenarioConfig, X0Config};
use crate::design::AgentDesign;
use crate::error::{Error, Result};
use crate::hybrid::{self, FlowScratch, HybridState};
use crate::model::SystemModel;
use crate::trace::{DeliveryRecord, PacketRecord, RowKind, SimTrace, TraceRow};
use crate::verify::StorageEvaluator;

pub const TICKS_PER_SECOND: f64 = 1e12;

pub fn to_ticks(seconds: f64) -> u64 {
    (seconds * TICKS_PER_SECOND).round() as u64
}

pub fn to_seconds(ticks: u64) -> f64 {
    ticks as f64 / TICKS_PER_SECOND
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    // Variant order is the tie-break order at equal ticks.
    Delivery {
        receiver: usize,
        sender: usize,
        seq: u64,
    },
    Sampling {
        agent: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    tick: u64,
    kind: EventKind,
}

/// Independent per-purpose random stream derived from the master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the next inter-sampling gap in ticks from `[d_min, tau_masp]`.
fn draw_gap<R: Rng>(spec: DrawSpec, d_ticks: u64, masp_ticks: u64, rng: &mut R) -> u64 {
    match spec {
        DrawSpec::Uniform => rng.gen_range(d_ticks..=masp_ticks),
        DrawSpec::Fraction { value } => {
            d_ticks + ((masp_ticks - d_ticks) as f64 * value).round() as u64
        }
    }
}

/// Draws a network delay in ticks from `[0, dmax]`.
fn draw_delay<R: Rng>(spec: DrawSpec, dmax_ticks: u64, rng: &mut R) -> u64 {
    match spec {
        DrawSpec::Uniform => rng.gen_range(0..=dmax_ticks),
        DrawSpec::Fraction { value } => (dmax_ticks as f64 * value).round() as u64,
    }
}

/// One inter-sampling gap in seconds, drawn on the picosecond grid.
pub fn draw_sampling_gap<R: Rng>(spec: DrawSpec, d_min: f64, tau_masp: f64, rng: &mut R) -> f64 {
    to_seconds(draw_gap(spec, to_ticks(d_min), to_ticks(tau_masp), rng))
}

/// One network delay in seconds from `[0, delay_margin]`.
pub fn draw_network_delay<R: Rng>(spec: DrawSpec, delay_margin: f64, rng: &mut R) -> f64 {
    to_seconds(draw_delay(spec, to_ticks(delay_margin.max(0.0)), rng))
}

struct Engine<'a> {
    model: &'a dyn SystemModel,
    designs: &'a [AgentDesign],
    state: HybridState,
    now: u64,
    last_tx: Vec<u64>,
    last_sample: Vec<u64>,
    heap: BinaryHeap<Reverse<Event>>,
    samp_rng: Vec<ChaCha12Rng>,
    delay_rng: Vec<ChaCha12Rng>,
    sampling_spec: DrawSpec,
    delay_spec: DrawSpec,
    d_ticks: Vec<u64>,
    masp_ticks: Vec<u64>,
    mad_ticks: Vec<u64>,
    stride_ticks: Option<u64>,
    record_jumps: bool,
    checked: bool,
    flow_max_ticks: u64,
    v_zero: Vec<f64>,
    scratch: FlowScratch,
    rows: Vec<TraceRow>,
    transmissions: Vec<(usize, f64)>,
    samplings: Vec<(usize, f64)>,
    packets: Vec<PacketRecord>,
    /// Index into `packets` of the packet currently pending on each link.
    link_packet: Vec<Vec<Option<usize>>>,
    last_row_tick: Option<u64>,
    seq: u64,
}

impl<'a> Engine<'a> {
    fn t(&self) -> f64 {
        to_seconds(self.now)
    }

    fn at_time<T>(&self, res: Result<T>) -> Result<T> {
        res.map_err(|e| match e {
            Error::NonFinite { msg, .. } => Error::NonFinite { t: self.t(), msg },
            Error::Protocol { msg, .. } => Error::Protocol { t: self.t(), msg },
            Error::Invariant { msg, .. } => Error::Invariant { t: self.t(), msg },
            other => other,
        })
    }

    fn reanchor_clocks(&mut self) {
        for i in 0..self.state.tau.len() {
            self.state.tau[i] = to_seconds(self.now - self.last_tx[i]);
            self.state.sigma[i] = to_seconds(self.now - self.last_sample[i]);
        }
    }

    fn record(&mut self, kind: RowKind, agent: Option<usize>, link: Option<(usize, usize)>) -> Result<()> {
        let ev = StorageEvaluator::new(self.model, self.designs);
        let u = ev.storage(&self.state)?;
        let v = self.model.lyapunov(&self.state.x);
        self.rows.push(TraceRow {
            t: self.t(),
            kind,
            agent,
            link,
            state: self.state.clone(),
            u,
            v,
        });
        self.last_row_tick = Some(self.now);
        Ok(())
    }

    /// Emits the pre-jump state as a row at the jump timestamp, once per tick.
    fn pre_jump_row(&mut self) -> Result<()> {
        if self.record_jumps && self.last_row_tick != Some(self.now) {
            self.record(RowKind::Flow, None, None)?;
        }
        Ok(())
    }

    /// Flows to `target`, slicing at recording points and the step cap.
    fn advance_to(&mut self, target: u64) -> Result<()> {
        while self.now < target {
            let mut next = target;
            if let Some(stride) = self.stride_ticks {
                next = next.min((self.now / stride + 1) * stride);
            }
            next = next.min(self.now + self.flow_max_ticks);
            let dt = (next - self.now) as f64 / TICKS_PER_SECOND;
            let res = hybrid::flow_with(
                &mut self.state,
                &self.v_zero,
                dt,
                self.model,
                self.designs,
                &mut self.scratch,
            );
            self.at_time(res)?;
            self.now = next;
            self.reanchor_clocks();
            if self.checked {
                self.state.validate(self.model, self.designs, self.t())?;
            }
            if let Some(stride) = self.stride_ticks {
                if self.now.is_multiple_of(stride) {
                    self.record(RowKind::Flow, None, None)?;
                }
            }
        }
        Ok(())
    }

    fn handle_delivery(&mut self, sender: usize, receiver: usize) -> Result<()> {
        self.pre_jump_row()?;
        let res = hybrid::jump_receive(&mut self.state, sender, receiver);
        self.at_time(res)?;
        if self.checked {
            self.state.validate(self.model, self.designs, self.t())?;
        }
        if self.record_jumps {
            self.record(RowKind::Receive, None, Some((sender, receiver)))?;
        }
        Ok(())
    }

    fn handle_sampling(&mut self, i: usize) -> Result<()> {
        self.pre_jump_row()?;
        // Packets this sampling instant will process.
        let to_process: Vec<usize> = (0..self.state.buf.len())
            .filter(|&j| self.state.buf[j][i])
            .collect();

        let decision = {
            let res = hybrid::trigger_decision(&self.state, i, self.model, &self.designs[i]);
            self.at_time(res)?
        };
        if decision {
            let res = hybrid::jump_transmit(&mut self.state, i, self.model, &self.designs[i]);
            self.at_time(res)?;
            self.last_tx[i] = self.now;
            self.transmissions.push((i, self.t()));
            self.seq += 1;
            let seq = self.seq;
            let mut deliveries = Vec::new();
            for &m in self.model.topology().out_neighbors(i) {
                if self.link_packet[i][m].is_some() {
                    return Err(Error::Protocol {
                        t: self.t(),
                        msg: format!("link ({i},{m}) already carries a packet"),
                    });
                }
                let dmax = self.mad_ticks[i].saturating_sub(self.masp_ticks[m]);
                let delta = draw_delay(self.delay_spec, dmax, &mut self.delay_rng[i]);
                let tick = self.now + delta;
                self.heap.push(Reverse(Event {
                    tick,
                    kind: EventKind::Delivery {
                        receiver: m,
                        sender: i,
                        seq,
                    },
                }));
                deliveries.push(DeliveryRecord {
                    receiver: m,
                    delivered_at: to_seconds(tick),
                    processed_at: None,
                });
                self.link_packet[i][m] = Some(self.packets.len());
            }
            self.packets.push(PacketRecord {
                sender: i,
                seq,
                sent_at: self.t(),
                deliveries,
            });
        } else {
            let res = hybrid::jump_sample(&mut self.state, i, self.model, &self.designs[i]);
            self.at_time(res)?;
        }
        self.last_sample[i] = self.now;
        self.samplings.push((i, self.t()));
        self.reanchor_clocks();

        // Processing bookkeeping and the tick-exact total-delay bound.
        for j in to_process {
            if let Some(idx) = self.link_packet[j][i].take() {
                let sent_tick = to_ticks(self.packets[idx].sent_at);
                if self.now - sent_tick > self.mad_ticks[j] {
                    return Err(Error::Protocol {
                        t: self.t(),
                        msg: format!(
                            "packet from {j} processed after {} ticks, delay bound is {}",
                            self.now - sent_tick,
                            self.mad_ticks[j]
                        ),
                    });
                }
                let t = self.t();
                for d in &mut self.packets[idx].deliveries {
                    if d.receiver == i {
                        d.processed_at = Some(t);
                    }
                }
            }
        }

        if self.checked {
            self.state.validate(self.model, self.designs, self.t())?;
        }
        if self.record_jumps {
            let kind = if decision { RowKind::Transmit } else { RowKind::Sample };
            self.record(kind, Some(i), None)?;
        }

        // Schedule the next sampling instant of this agent.
        let gap = draw_gap(
            self.sampling_spec,
            self.d_ticks[i],
            self.masp_ticks[i],
            &mut self.samp_rng[i],
        );
        self.heap.push(Reverse(Event {
            tick: self.now + gap,
            kind: EventKind::Sampling { agent: i },
        }));
        Ok(())
    }
}

/// Draws the initial plant state according to the configuration, using the
/// dedicated stream of the master seed.
pub fn draw_initial_state(config: &ScenarioConfig, n_entries: usize) -> Vec<f64> {
    match &config.scenario.x0 {
        X0Config::Values(v) => v.clone(),
        X0Config::Uniform { uniform: (lo, hi) } => {
            let mut rng = stream_rng(config.scenario.seed, 0);
            (0..n_entries).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
        }
    }
}

/// Runs the scenario against an already-built model and design set.
pub fn run_scenario(
    config: &ScenarioConfig,
    model: &dyn SystemModel,
    designs: &[AgentDesign],
) -> Result<SimTrace> {
    let n = model.topology().n_agents();
    let seed = config.scenario.seed;
    let x0 = draw_initial_state(config, model.state_dims().iter().sum());
    let state = HybridState::initial(model, &x0, &vec![config.scenario.eta0; n])?;
    let horizon = to_ticks(config.scenario.horizon);

    let stride_ticks = config.scenario.record.flow_stride.map(to_ticks);
    if stride_ticks == Some(0) {
        return Err(Error::InvalidConfig("flow_stride below one picosecond".into()));
    }
    let mut engine = Engine {
        model,
        designs,
        state,
        now: 0,
        last_tx: vec![0; n],
        last_sample: vec![0; n],
        heap: BinaryHeap::new(),
        samp_rng: (0..n).map(|i| stream_rng(seed, 1 + 2 * i as u64)).collect(),
        delay_rng: (0..n).map(|i| stream_rng(seed, 2 + 2 * i as u64)).collect(),
        sampling_spec: config.scenario.sampling_dist,
        delay_spec: config.scenario.delay_dist,
        d_ticks: designs.iter().map(|d| to_ticks(d.params.d_min)).collect(),
        masp_ticks: designs.iter().map(|d| to_ticks(d.params.tau_masp)).collect(),
        mad_ticks: designs
            .iter()
            .map(|d| (d.timing.tau_mad * TICKS_PER_SECOND).floor() as u64)
            .collect(),
        stride_ticks,
        record_jumps: config.scenario.record.jumps,
        checked: config.scenario.checked,
        flow_max_ticks: to_ticks(config.scenario.flow_max_step).max(1),
        v_zero: vec![0.0; model.input_dims().iter().sum()],
        scratch: FlowScratch::new(model),
        rows: Vec::new(),
        transmissions: Vec::new(),
        samplings: Vec::new(),
        packets: Vec::new(),
        link_packet: vec![vec![None; n]; n],
        last_row_tick: None,
        seq: 0,
    };

    for i in 0..n {
        let gap = draw_gap(
            engine.sampling_spec,
            engine.d_ticks[i],
            engine.masp_ticks[i],
            &mut engine.samp_rng[i],
        );
        engine.heap.push(Reverse(Event {
            tick: gap,
            kind: EventKind::Sampling { agent: i },
        }));
    }

    if engine.stride_ticks.is_some() {
        engine.record(RowKind::Flow, None, None)?;
    }

    while let Some(&Reverse(ev)) = engine.heap.peek() {
        if ev.tick > horizon {
            break;
        }
        engine.heap.pop();
        debug_assert!(ev.tick >= engine.now, "event popped out of time order");
        engine.advance_to(ev.tick)?;
        match ev.kind {
            EventKind::Delivery { receiver, sender, .. } => {
                engine.handle_delivery(sender, receiver)?;
            }
            EventKind::Sampling { agent } => {
                engine.handle_sampling(agent)?;
            }
        }
    }
    engine.advance_to(horizon)?;
    if engine.stride_ticks.is_some() && engine.last_row_tick != Some(horizon) {
        engine.record(RowKind::Flow, None, None)?;
    }

    Ok(SimTrace {
        n_agents: n,
        horizon: config.scenario.horizon,
        seed,
        rows: engine.rows,
        transmissions: engine.transmissions,
        samplings: engine.samplings,
        packets: engine.packets,
        final_state: engine.state,
        final_time: to_seconds(horizon),
    })
}

/// Builds the model and designs from the configuration, validates the run
/// settings, and executes the scenario.
pub fn run(config: &ScenarioConfig) -> Result<(SimTrace, Vec<AgentDesign>)> {
    let model = config.build_model()?;
    let designs = config.build_designs(&model)?;
    config.validate_run(&model, &designs)?;
    let trace = run_scenario(config, &model, &designs)?;
    Ok((trace, designs))
}
