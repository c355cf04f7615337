//! Exact transient law of the forest-fire process on tiny trees by
//! uniformization of the explicit generator over all occupancy bitmasks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{TopologyError, TreeTopology, VertexId};

/// Largest tree the oracle accepts (4096 states).
pub const MAX_ORACLE_VERTICES: u64 = 12;
/// Poisson mass left out of the uniformization sum.
pub const TRUNCATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("state space 2^{vertices} too large (at most 2^{MAX_ORACLE_VERTICES})")]
    TooLarge { vertices: u64 },
    #[error("ignition rate must be finite and non-negative, got {0}")]
    BadRate(f64),
    #[error("time must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error("uniformization did not reach tolerance after {steps} steps")]
    NotConverged { steps: usize },
}

/// Joint occupancy event: all of `occupied` occupied and all of `vacant` vacant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyQuery {
    pub occupied: Vec<VertexId>,
    pub vacant: Vec<VertexId>,
}

impl OccupancyQuery {
    pub fn occupied(v: VertexId) -> Self {
        Self { occupied: vec![v], vacant: Vec::new() }
    }

    pub fn all_vacant(topo: &TreeTopology) -> Self {
        Self { occupied: Vec::new(), vacant: topo.vertices().collect() }
    }

    fn masks(&self, topo: &TreeTopology) -> Result<(usize, usize), TopologyError> {
        let mut on = 0usize;
        let mut off = 0usize;
        for &v in &self.occupied {
            topo.check(v)?;
            on |= 1 << v.0;
        }
        for &v in &self.vacant {
            topo.check(v)?;
            off |= 1 << v.0;
        }
        Ok((on, off))
    }
}

/// Sparse generator of the forest-fire chain on a small `B_n`.
#[derive(Debug, Clone)]
pub struct CtmcOracle {
    topo: TreeTopology,
    lambda: f64,
    /// Off-diagonal transitions `(target, rate)` per state.
    transitions: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
    uniform_rate: f64,
}

fn cluster_mask(topo: &TreeTopology, state: usize, start: u64) -> usize {
    let mut mask = 1usize << start;
    let mut stack = vec![VertexId(start)];
    while let Some(v) = stack.pop() {
        let neighbours = topo.parent_unchecked(v).into_iter().chain(topo.child_range(v).map(VertexId));
        for w in neighbours {
            let bit = 1usize << w.0;
            if state & bit != 0 && mask & bit == 0 {
                mask |= bit;
                stack.push(w);
            }
        }
    }
    mask
}

impl CtmcOracle {
    pub fn new(r: u32, n: u32, lambda: f64) -> Result<Self, OracleError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(OracleError::BadRate(lambda));
        }
        let topo = TreeTopology::new(r, n)?;
        let vertices = topo.vertex_count();
        if vertices > MAX_ORACLE_VERTICES {
            return Err(OracleError::TooLarge { vertices });
        }
        let states = 1usize << vertices;
        let mut transitions = Vec::with_capacity(states);
        let mut exit = Vec::with_capacity(states);
        for s in 0..states {
            let mut out: Vec<(usize, f64)> = Vec::new();
            let mut add = |target: usize, rate: f64| {
                if rate > 0.0 {
                    match out.iter_mut().find(|(t, _)| *t == target) {
                        Some(entry) => entry.1 += rate,
                        None => out.push((target, rate)),
                    }
                }
            };
            for v in 0..vertices {
                let bit = 1usize << v;
                if s & bit == 0 {
                    add(s | bit, 1.0);
                } else {
                    add(s & !cluster_mask(&topo, s, v), lambda);
                }
            }
            exit.push(out.iter().map(|(_, q)| q).sum());
            transitions.push(out);
        }
        let uniform_rate = exit.iter().cloned().fold(0.0, f64::max);
        Ok(Self { topo, lambda, transitions, exit, uniform_rate })
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topo
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn step(&self, p: &[f64], out: &mut [f64]) {
        let rate = self.uniform_rate;
        for (s, slot) in out.iter_mut().enumerate() {
            *slot = p[s] * (1.0 - self.exit[s] / rate);
        }
        for (s, trans) in self.transitions.iter().enumerate() {
            let mass = p[s];
            if mass == 0.0 {
                continue;
            }
            for &(target, q) in trans {
                out[target] += mass * q / rate;
            }
        }
    }

    /// Law of the occupancy bitmask at time `t`, started from all vacant.
    /// Bit `v` of the state index is the occupancy of vertex `v`.
    pub fn distribution(&self, t: f64) -> Result<Vec<f64>, OracleError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(OracleError::BadTime(t));
        }
        let states = self.exit.len();
        let mut p = vec![0.0; states];
        p[0] = 1.0;
        let mu = self.uniform_rate * t;
        if mu == 0.0 {
            return Ok(p);
        }
        let max_steps = (mu + 50.0 * mu.sqrt() + 100.0).ceil() as usize;
        let mut result = vec![0.0; states];
        let mut next = vec![0.0; states];
        let mut log_weight = -mu;
        let mut mass = 0.0;
        for k in 0..=max_steps {
            if k > 0 {
                log_weight += mu.ln() - (k as f64).ln();
                self.step(&p, &mut next);
                std::mem::swap(&mut p, &mut next);
            }
            let w = log_weight.exp();
            mass += w;
            for (acc, &x) in result.iter_mut().zip(&p) {
                *acc += w * x;
            }
            if k as f64 >= mu && 1.0 - mass < TRUNCATION_TOLERANCE {
                return Ok(result);
            }
        }
        Err(OracleError::NotConverged { steps: max_steps })
    }

    pub fn probability(&self, t: f64, query: &OccupancyQuery) -> Result<f64, OracleError> {
        let (on, off) = query.masks(&self.topo)?;
        let dist = self.distribution(t)?;
        Ok(dist
            .iter()
            .enumerate()
            .filter(|(s, _)| s & on == on && s & off == 0)
            .map(|(_, &p)| p)
            .sum())
    }
}

/// Probability of `query` at time `t` for the forest-fire process on `B_n`
/// with ignition rate `lambda`.
pub fn ctmc_oracle_occupancy(
    r: u32,
    n: u32,
    lambda: f64,
    t: f64,
    query: &OccupancyQuery,
) -> Result<f64, OracleError> {
    CtmcOracle::new(r, n, lambda)?.probability(t, query)
}
