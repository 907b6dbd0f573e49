//! Trace-level certificate checks: storage non-increase at jumps, the
//! dissipation inequality along flow segments, and run metrics.

use serde::{Deserialize, Serialize};

use super::storage::StorageEvaluator;
use crate::design::AgentDesign;
use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::trace::{RowKind, SimTrace};

/// Relative scale of the per-jump tolerance.
const JUMP_TOL_SCALE: f64 = 1e-8;
/// Absolute and first-order parts of the flow-segment tolerance.
const FLOW_TOL_ABS: f64 = 1e-6;
const FLOW_TOL_REL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpViolation {
    pub t: f64,
    pub kind: String,
    pub agent: Option<usize>,
    pub link: Option<(usize, usize)>,
    pub delta_u: f64,
    pub tolerance: f64,
    pub check: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpSection {
    pub checked: usize,
    /// G_c jumps plus buffer-free sampling jumps within the enforced gap,
    /// which must leave the storage value unchanged.
    pub equality_checked: usize,
    pub max_delta_u: f64,
    pub worst_equality_deviation: f64,
    pub violations: Vec<JumpViolation>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowViolation {
    pub t: f64,
    pub rate: f64,
    pub supply: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSection {
    pub samples: usize,
    /// Supply-rate misses that still respect storage non-increase, reported
    /// as warnings for models with an advisory supply rate.
    pub downgraded: usize,
    pub worst_supply_gap: f64,
    pub hard_violations: Vec<FlowViolation>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent: usize,
    pub transmissions: usize,
    pub min_iet: Option<f64>,
    pub mean_iet: Option<f64>,
    pub max_iet: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSection {
    pub per_agent: Vec<AgentMetrics>,
    /// Every inter-transmission gap reached the agent's enforced gap.
    pub min_iet_ok: bool,
    /// Every processed packet met the sender's total-delay bound.
    pub delay_ok: bool,
    pub max_total_delay: Option<f64>,
    /// Every transmission coincided with a sampling instant.
    pub transmissions_at_samplings: bool,
    /// Per-agent transmission counts respect the count bound from the
    /// enforced gap.
    pub zeno_bound_ok: bool,
    pub spread_series: Vec<(f64, f64)>,
    pub final_spread: f64,
    pub final_v: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorReport {
    pub jumps: JumpSection,
    pub flow: FlowSection,
    pub metrics: MetricsSection,
    pub passed: bool,
}

fn tick_of(t: f64) -> u64 {
    (t * 1e12).round() as u64
}

/// Storage non-increase at every recorded jump, with exact invariance where
/// the construction gives it: delivery jumps, and sampling jumps within the
/// enforced gap that process no buffered packet.
pub fn check_jumps(trace: &SimTrace, ev: &StorageEvaluator) -> Result<JumpSection> {
    let mut section = JumpSection {
        checked: 0,
        equality_checked: 0,
        max_delta_u: f64::NEG_INFINITY,
        worst_equality_deviation: 0.0,
        violations: Vec::new(),
        passed: true,
    };
    for w in trace.rows.windows(2) {
        let (pre, post) = (&w[0], &w[1]);
        if post.kind == RowKind::Flow {
            continue;
        }
        if pre.t != post.t {
            return Err(Error::Trace(format!(
                "jump row at t = {} lacks a pre-state row at the same timestamp",
                post.t
            )));
        }
        let u_pre = ev.storage(&pre.state)?;
        let u_post = ev.storage(&post.state)?;
        let delta = u_post - u_pre;
        let tol = JUMP_TOL_SCALE * (1.0 + u_pre);
        section.checked += 1;
        section.max_delta_u = section.max_delta_u.max(delta);
        if delta > tol {
            section.violations.push(JumpViolation {
                t: post.t,
                kind: post.kind.label().into(),
                agent: post.agent,
                link: post.link,
                delta_u: delta,
                tolerance: tol,
                check: "non-increase".into(),
            });
        }
        let equality = match post.kind {
            RowKind::Receive => true,
            RowKind::Sample => {
                let i = post.agent.expect("sampling row without agent");
                let flush_free = (0..trace.n_agents).all(|j| !pre.state.buf[j][i]);
                flush_free && pre.state.tau[i] <= ev.designs[i].trigger.miet()
            }
            _ => false,
        };
        if equality {
            section.equality_checked += 1;
            if delta.abs() > section.worst_equality_deviation {
                section.worst_equality_deviation = delta.abs();
            }
            if delta.abs() > tol {
                section.violations.push(JumpViolation {
                    t: post.t,
                    kind: post.kind.label().into(),
                    agent: post.agent,
                    link: post.link,
                    delta_u: delta,
                    tolerance: tol,
                    check: "invariance".into(),
                });
            }
        }
    }
    section.passed = section.violations.is_empty();
    Ok(section)
}

/// Finite-difference dissipation check along recorded flow segments:
/// `(U(t+h) - U(t)) / h <= supply(t) + tol` with first-order slack.
///
/// For models with an advisory supply rate, misses that still satisfy
/// storage non-increase are downgraded to warnings.
pub fn check_flow(trace: &SimTrace, ev: &StorageEvaluator) -> Result<FlowSection> {
    let mut section = FlowSection {
        samples: 0,
        downgraded: 0,
        worst_supply_gap: f64::NEG_INFINITY,
        hard_violations: Vec::new(),
        passed: true,
    };
    let v_zero = vec![0.0; ev.model.input_dims().iter().sum()];
    let advisory = ev.model.supply_rate_advisory();
    for w in trace.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.kind != RowKind::Flow || b.t <= a.t {
            continue;
        }
        let h = b.t - a.t;
        let rate = (ev.storage(&b.state)? - ev.storage(&a.state)?) / h;
        let supply = ev.supply(&a.state, &v_zero);
        let tol = FLOW_TOL_ABS + FLOW_TOL_REL * supply.abs();
        section.samples += 1;
        section.worst_supply_gap = section.worst_supply_gap.max(rate - supply);
        if rate > supply + tol {
            if advisory && rate <= tol {
                section.downgraded += 1;
            } else {
                section.hard_violations.push(FlowViolation {
                    t: a.t,
                    rate,
                    supply,
                    tolerance: tol,
                });
            }
        }
    }
    section.passed = section.hard_violations.is_empty();
    Ok(section)
}

/// Inter-event statistics, delay-bound replay, the sampling-instant relation
/// and the transmission-count bound.
pub fn metrics(trace: &SimTrace, designs: &[AgentDesign], model: &dyn SystemModel) -> MetricsSection {
    let n = trace.n_agents;
    let mut per_agent = Vec::with_capacity(n);
    let mut min_iet_ok = true;
    let mut zeno_ok = true;
    for i in 0..n {
        let times: Vec<f64> = trace
            .transmissions
            .iter()
            .filter(|&&(a, _)| a == i)
            .map(|&(_, t)| t)
            .collect();
        let mut gaps = Vec::new();
        for w in times.windows(2) {
            // tick-exact gap, matching the trigger rule's arithmetic
            let gap = (tick_of(w[1]) - tick_of(w[0])) as f64 / 1e12;
            gaps.push(gap);
        }
        let miet = designs[i].trigger.miet();
        if gaps.iter().any(|&g| g < miet) {
            min_iet_ok = false;
        }
        let bound = (trace.horizon / miet).ceil() as usize + 1;
        if times.len() > bound {
            zeno_ok = false;
        }
        per_agent.push(AgentMetrics {
            agent: i,
            transmissions: times.len(),
            min_iet: gaps.iter().copied().reduce(f64::min),
            mean_iet: if gaps.is_empty() {
                None
            } else {
                Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
            },
            max_iet: gaps.iter().copied().reduce(f64::max),
        });
    }

    let mut delay_ok = true;
    let mut max_total_delay: Option<f64> = None;
    for p in &trace.packets {
        let sent = tick_of(p.sent_at);
        let bound_ticks = (designs[p.sender].timing.tau_mad * 1e12).floor() as u64;
        for d in &p.deliveries {
            if let Some(done) = d.processed_at {
                let total_ticks = tick_of(done) - sent;
                if total_ticks > bound_ticks {
                    delay_ok = false;
                }
                let total = total_ticks as f64 / 1e12;
                max_total_delay = Some(max_total_delay.map_or(total, |m: f64| m.max(total)));
            }
        }
    }

    let mut sampling_ticks: Vec<std::collections::BTreeSet<u64>> = vec![Default::default(); n];
    for &(i, t) in &trace.samplings {
        sampling_ticks[i].insert(tick_of(t));
    }
    let transmissions_at_samplings = trace
        .transmissions
        .iter()
        .all(|&(i, t)| sampling_ticks[i].contains(&tick_of(t)));

    let spread_of = |x: &[f64]| -> f64 {
        let dims = model.state_dims();
        if dims.iter().any(|&d| d != dims[0]) {
            return 0.0;
        }
        let d = dims[0];
        let mut worst = 0.0f64;
        for i in 0..n {
            for m in (i + 1)..n {
                let diff: f64 = (0..d)
                    .map(|k| (x[i * d + k] - x[m * d + k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(diff);
            }
        }
        worst
    };
    let spread_series: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.kind == RowKind::Flow)
        .map(|r| (r.t, spread_of(&r.state.x)))
        .collect();
    let final_spread = spread_of(&trace.final_state.x);
    let final_v = model.lyapunov(&trace.final_state.x);

    let passed = min_iet_ok && delay_ok && transmissions_at_samplings && zeno_ok;
    MetricsSection {
        per_agent,
        min_iet_ok,
        delay_ok,
        max_total_delay,
        transmissions_at_samplings,
        zeno_bound_ok: zeno_ok,
        spread_series,
        final_spread,
        final_v,
        passed,
    }
}

/// Runs every section and combines the verdicts.
pub fn check_trace(
    trace: &SimTrace,
    model: &dyn SystemModel,
    designs: &[AgentDesign],
) -> Result<MonitorReport> {
    let ev = StorageEvaluator::new(model, designs);
    let jumps = check_jumps(trace, &ev)?;
    let flow = check_flow(trace, &ev)?;
    let metrics = metrics(trace, designs, model);
    let passed = jumps.passed && flow.passed && metrics.passed;
    Ok(MonitorReport {
        jumps,
        flow,
        metrics,
        passed,
    })
}

/// Compact per-run summary written next to the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub horizon: f64,
    pub n_agents: usize,
    pub transmissions: Vec<usize>,
    pub min_iet: Vec<Option<f64>>,
    pub mean_iet: Vec<Option<f64>>,
    pub total_packets: usize,
    pub max_total_delay: Option<f64>,
    pub final_spread: f64,
    pub final_v: f64,
    pub final_attractor_distance: f64,
}

pub fn summarize(trace: &SimTrace, designs: &[AgentDesign], model: &dyn SystemModel) -> RunSummary {
    let m = metrics(trace, designs, model);
    RunSummary {
        seed: trace.seed,
        horizon: trace.horizon,
        n_agents: trace.n_agents,
        transmissions: m.per_agent.iter().map(|a| a.transmissions).collect(),
        min_iet: m.per_agent.iter().map(|a| a.min_iet).collect(),
        mean_iet: m.per_agent.iter().map(|a| a.mean_iet).collect(),
        total_packets: trace.packets.len(),
        max_total_delay: m.max_total_delay,
        final_spread: m.final_spread,
        final_v: m.final_v,
        final_attractor_distance: model.attractor_distance(&trace.final_state.x),
    }
}
