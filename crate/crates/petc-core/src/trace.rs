//! Time-stamped simulation record and its serialized forms.
//!
//! Rows carry the full hybrid state so every monitored quantity can be
//! recomputed from a serialized trace alone. Jump rows are always preceded
//! by a row at the same timestamp holding the pre-jump state (a `flow` row,
//! or the previous jump row of a simultaneous batch).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::HybridState;
use crate::model::SystemModel;

/// Trace CSV layout version; bumped when the column contract changes.
pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Flow,
    Transmit,
    Sample,
    Receive,
}

impl RowKind {
    pub fn label(self) -> &'static str {
        match self {
            RowKind::Flow => "flow",
            RowKind::Transmit => "G_a",
            RowKind::Sample => "G_b",
            RowKind::Receive => "G_c",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(RowKind::Flow),
            "G_a" => Ok(RowKind::Transmit),
            "G_b" => Ok(RowKind::Sample),
            "G_c" => Ok(RowKind::Receive),
            other => Err(Error::Trace(format!("unknown row kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: f64,
    pub kind: RowKind,
    /// Sampling agent for jump rows of kind `G_a`/`G_b`.
    pub agent: Option<usize>,
    /// (sender, receiver) for delivery rows.
    pub link: Option<(usize, usize)>,
    pub state: HybridState,
    /// Storage-function value at this row.
    pub u: f64,
    /// Lyapunov value at this row.
    pub v: f64,
}

/// One transmitted packet with its per-receiver fate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacketRecord {
    pub sender: usize,
    pub seq: u64,
    pub sent_at: f64,
    pub deliveries: Vec<DeliveryRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub receiver: usize,
    pub delivered_at: f64,
    pub processed_at: Option<f64>,
}

/// Complete record of one run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub n_agents: usize,
    pub horizon: f64,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// (agent, time) of every transmission, kept even when row recording is off.
    pub transmissions: Vec<(usize, f64)>,
    /// (agent, time) of every sampling instant.
    pub samplings: Vec<(usize, f64)>,
    pub packets: Vec<PacketRecord>,
    pub final_state: HybridState,
    pub final_time: f64,
}

/// Column schema for (de)serializing hybrid states; derived from the model's
/// block dimensions.
#[derive(Debug, Clone)]
pub struct TraceSchema {
    state_dims: Vec<usize>,
    output_dims: Vec<usize>,
}

impl TraceSchema {
    pub fn from_model(model: &dyn SystemModel) -> Self {
        Self {
            state_dims: model.state_dims().to_vec(),
            output_dims: model.output_dims().to_vec(),
        }
    }

    fn n(&self) -> usize {
        self.state_dims.len()
    }

    fn header(&self) -> String {
        let n = self.n();
        let mut cols = vec![
            "time".to_string(),
            "kind".to_string(),
            "agent".to_string(),
            "link_from".to_string(),
            "link_to".to_string(),
            "U".to_string(),
            "V".to_string(),
        ];
        for (i, &d) in self.state_dims.iter().enumerate() {
            for k in 0..d {
                cols.push(format!("x{i}_{k}"));
            }
        }
        for i in 0..n {
            cols.push(format!("eta{i}"));
        }
        for i in 0..n {
            cols.push(format!("tau{i}"));
        }
        for i in 0..n {
            cols.push(format!("sigma{i}"));
        }
        for (i, &d) in self.output_dims.iter().enumerate() {
            for k in 0..d {
                cols.push(format!("r{i}_{k}"));
            }
        }
        for (i, &d) in self.output_dims.iter().enumerate() {
            for m in 0..n {
                for k in 0..d {
                    cols.push(format!("e{i}_{m}_{k}"));
                }
            }
        }
        for i in 0..n {
            for m in 0..n {
                cols.push(format!("ell{i}_{m}"));
            }
        }
        for i in 0..n {
            for m in 0..n {
                cols.push(format!("buf{i}_{m}"));
            }
        }
        cols.join(",")
    }

    fn write_row<W: Write>(&self, w: &mut W, row: &TraceRow) -> Result<()> {
        let s = &row.state;
        let mut out = String::with_capacity(256);
        out.push_str(&format!("{},{}", row.t, row.kind.label()));
        match row.agent {
            Some(a) => out.push_str(&format!(",{a}")),
            None => out.push(','),
        }
        match row.link {
            Some((from, to)) => out.push_str(&format!(",{from},{to}")),
            None => out.push_str(",,"),
        }
        out.push_str(&format!(",{},{}", row.u, row.v));
        for v in &s.x {
            out.push_str(&format!(",{v}"));
        }
        for v in &s.eta {
            out.push_str(&format!(",{v}"));
        }
        for v in &s.tau {
            out.push_str(&format!(",{v}"));
        }
        for v in &s.sigma {
            out.push_str(&format!(",{v}"));
        }
        for block in &s.r {
            for v in block {
                out.push_str(&format!(",{v}"));
            }
        }
        for sender in &s.e {
            for block in sender {
                for v in block {
                    out.push_str(&format!(",{v}"));
                }
            }
        }
        for row_flags in &s.ell {
            for &f in row_flags {
                out.push_str(if f { ",1" } else { ",0" });
            }
        }
        for row_flags in &s.buf {
            for &f in row_flags {
                out.push_str(if f { ",1" } else { ",0" });
            }
        }
        out.push('\n');
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    fn parse_row(&self, line: &str) -> Result<TraceRow> {
        let mut it = line.split(',');
        let mut next = |name: &str| -> Result<&str> {
            it.next()
                .ok_or_else(|| Error::Trace(format!("missing column '{name}'")))
        };
        let parse_f = |s: &str, name: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Trace(format!("bad float '{s}' in column '{name}'")))
        };
        let t = parse_f(next("time")?, "time")?;
        let kind = RowKind::from_label(next("kind")?)?;
        let agent_s = next("agent")?;
        let agent = if agent_s.is_empty() {
            None
        } else {
            Some(agent_s.parse().map_err(|_| Error::Trace("bad agent".into()))?)
        };
        let from_s = next("link_from")?;
        let to_s = next("link_to")?;
        let link = if from_s.is_empty() {
            None
        } else {
            Some((
                from_s.parse().map_err(|_| Error::Trace("bad link".into()))?,
                to_s.parse().map_err(|_| Error::Trace("bad link".into()))?,
            ))
        };
        let u = parse_f(next("U")?, "U")?;
        let v = parse_f(next("V")?, "V")?;
        let n = self.n();
        let mut x = Vec::new();
        for (i, &d) in self.state_dims.iter().enumerate() {
            for k in 0..d {
                x.push(parse_f(next("x")?, &format!("x{i}_{k}"))?);
            }
        }
        let mut eta = Vec::with_capacity(n);
        for i in 0..n {
            eta.push(parse_f(next("eta")?, &format!("eta{i}"))?);
        }
        let mut tau = Vec::with_capacity(n);
        for i in 0..n {
            tau.push(parse_f(next("tau")?, &format!("tau{i}"))?);
        }
        let mut sigma = Vec::with_capacity(n);
        for i in 0..n {
            sigma.push(parse_f(next("sigma")?, &format!("sigma{i}"))?);
        }
        let mut r = Vec::with_capacity(n);
        for (i, &d) in self.output_dims.iter().enumerate() {
            let mut block = Vec::with_capacity(d);
            for k in 0..d {
                block.push(parse_f(next("r")?, &format!("r{i}_{k}"))?);
            }
            r.push(block);
        }
        let mut e = Vec::with_capacity(n);
        for (i, &d) in self.output_dims.iter().enumerate() {
            let mut sender = Vec::with_capacity(n);
            for m in 0..n {
                let mut block = Vec::with_capacity(d);
                for k in 0..d {
                    block.push(parse_f(next("e")?, &format!("e{i}_{m}_{k}"))?);
                }
                sender.push(block);
            }
            e.push(sender);
        }
        let mut parse_flags = |name: &str| -> Result<Vec<Vec<bool>>> {
            let mut flags = Vec::with_capacity(n);
            for _ in 0..n {
                let mut row_flags = Vec::with_capacity(n);
                for _ in 0..n {
                    row_flags.push(next(name)? == "1");
                }
                flags.push(row_flags);
            }
            Ok(flags)
        };
        let ell = parse_flags("ell")?;
        let buf = parse_flags("buf")?;
        Ok(TraceRow {
            t,
            kind,
            agent,
            link,
            state: HybridState {
                x,
                e,
                tau,
                sigma,
                r,
                ell,
                buf,
                eta,
            },
            u,
            v,
        })
    }
}

impl SimTrace {
    /// Writes the row record as CSV (UTF-8, LF, '.' decimal separator).
    /// Floats use the shortest round-trippable representation, so re-reading
    /// reproduces every value bit for bit.
    pub fn write_csv<W: Write>(&self, schema: &TraceSchema, w: &mut W) -> Result<()> {
        writeln!(w, "# petc trace v{TRACE_FORMAT_VERSION}")?;
        writeln!(w, "# seed={} horizon={} agents={}", self.seed, self.horizon, self.n_agents)?;
        writeln!(w, "{}", schema.header())?;
        for row in &self.rows {
            schema.write_row(w, row)?;
        }
        Ok(())
    }

    /// Reads rows back from CSV produced by [`SimTrace::write_csv`].
    pub fn read_csv<R: BufRead>(schema: &TraceSchema, r: R) -> Result<SimTrace> {
        let mut rows = Vec::new();
        let mut seed = 0u64;
        let mut horizon = 0.0f64;
        let mut n_agents = schema.n();
        let mut header_seen = false;
        for line in r.lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix("# ") {
                for part in meta.split_whitespace() {
                    if let Some(v) = part.strip_prefix("seed=") {
                        seed = v.parse().unwrap_or(0);
                    } else if let Some(v) = part.strip_prefix("horizon=") {
                        horizon = v.parse().unwrap_or(0.0);
                    } else if let Some(v) = part.strip_prefix("agents=") {
                        n_agents = v.parse().unwrap_or(n_agents);
                    }
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true; // column header line
                continue;
            }
            rows.push(schema.parse_row(&line)?);
        }
        if rows.is_empty() {
            return Err(Error::Trace("trace has no rows".into()));
        }
        let transmissions = rows
            .iter()
            .filter(|r| r.kind == RowKind::Transmit)
            .map(|r| (r.agent.unwrap(), r.t))
            .collect();
        let samplings = rows
            .iter()
            .filter(|r| matches!(r.kind, RowKind::Transmit | RowKind::Sample))
            .map(|r| (r.agent.unwrap(), r.t))
            .collect();
        let last = rows.last().unwrap();
        Ok(SimTrace {
            n_agents,
            horizon,
            seed,
            final_state: last.state.clone(),
            final_time: last.t,
            rows,
            transmissions,
            samplings,
            packets: Vec::new(),
        })
    }
}
