//! Directed communication topology between agents.
//!
//! Edges are ordered pairs `(i, m)`: agent `i` broadcasts its output to
//! agent `m`. In-/out-neighbor sets and out-degrees are derived once at
//! construction and reused everywhere else.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Communication graph over `n_agents` vertices (0-based agent ids).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphTopology {
    n_agents: usize,
    edges: BTreeSet<(usize, usize)>,
    in_neighbors: Vec<Vec<usize>>,
    out_neighbors: Vec<Vec<usize>>,
}

impl GraphTopology {
    /// Builds the topology from directed edges `(sender, receiver)`.
    /// Self-loops are rejected; duplicate edges collapse.
    pub fn new(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::InvalidTopology("need at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for &(i, m) in edges {
            if i == m {
                return Err(Error::InvalidTopology(format!("self-loop on agent {i}")));
            }
            if i >= n_agents || m >= n_agents {
                return Err(Error::InvalidTopology(format!(
                    "edge ({i},{m}) out of range for {n_agents} agents"
                )));
            }
            set.insert((i, m));
        }
        let mut in_neighbors = vec![Vec::new(); n_agents];
        let mut out_neighbors = vec![Vec::new(); n_agents];
        for &(i, m) in &set {
            out_neighbors[i].push(m);
            in_neighbors[m].push(i);
        }
        Ok(Self {
            n_agents,
            edges: set,
            in_neighbors,
            out_neighbors,
        })
    }

    /// Undirected construction: every listed pair is inserted in both directions.
    pub fn undirected(n_agents: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        for &(i, m) in pairs {
            edges.push((i, m));
            edges.push((m, i));
        }
        Self::new(n_agents, &edges)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Agents that send information to `i`.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    /// Agents that receive agent `i`'s broadcasts.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_neighbors[i]
    }

    /// Out-degree `N_i`.
    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbors[i].len()
    }

    /// Link indicator: 1 when `m` is an out-neighbor of `i`.
    pub fn delta(&self, i: usize, m: usize) -> bool {
        self.edges.contains(&(i, m))
    }

    /// True when every edge has its reverse.
    pub fn is_undirected(&self) -> bool {
        self.edges.iter().all(|&(i, m)| self.edges.contains(&(m, i)))
    }

    /// Connectivity of the underlying undirected graph.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_agents];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in self.out_neighbors(v).iter().chain(self.in_neighbors(v)) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Graph Laplacian of the underlying undirected graph (in-degree on the
    /// diagonal, -1 per in-edge).
    pub fn laplacian(&self) -> Vec<Vec<f64>> {
        let n = self.n_agents;
        let mut lap = vec![vec![0.0; n]; n];
        for i in 0..n {
            lap[i][i] = self.in_neighbors[i].len() as f64;
            for &m in &self.in_neighbors[i] {
                lap[i][m] -= 1.0;
            }
        }
        lap
    }
}
