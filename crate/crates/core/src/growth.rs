//! Pure growth snapshots on `B_n` and occupied-cluster extraction.
//!
//! A vertex is occupied at time `t` iff the first arrival of its GROWTH
//! stream is `<= t`. Every module evaluates that predicate through
//! [`grown_by`], so snapshots, lazy views and the fire engine agree bit for
//! bit on shared streams.

use std::ops::Range;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::mean_offspring;
use crate::parallel::TrialRunner;
use crate::rng::TrialStreams;
use crate::stats::{mean_and_se, Proportion};
use crate::topology::{TopologyError, TreeTopology, VertexId};

/// Largest tree a materialized snapshot accepts.
pub const SNAPSHOT_MAX_VERTICES: u64 = 1 << 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("time must be finite and non-negative, got {0}")]
    BadTime(f64),
    #[error("snapshot of {0} vertices exceeds the materialization cap")]
    TooLarge(u64),
    #[error("conditioning event never observed in {trials} trials")]
    ConditionNeverObserved { trials: u64 },
    #[error("bitmap has {got} bits, tree has {expected} vertices")]
    SizeMismatch { got: usize, expected: u64 },
}

/// Growth-occupancy predicate shared by every consumer of GROWTH streams.
#[inline]
pub fn grown_by(streams: &TrialStreams, v: VertexId, t: f64) -> bool {
    streams.first_growth(v) <= t
}

/// Read access to a configuration on `B_n`.
pub trait Occupancy {
    fn topology(&self) -> &TreeTopology;
    /// Caller guarantees `v` is inside the tree.
    fn is_occupied(&self, v: VertexId) -> bool;
}

/// Materialized pure growth configuration `σ_t` on `B_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthSnapshot {
    topo: TreeTopology,
    t: f64,
    occupied: FixedBitSet,
}

impl GrowthSnapshot {
    pub fn new(streams: &TrialStreams, topo: &TreeTopology, t: f64) -> Result<Self, GrowthError> {
        if !(t >= 0.0) || t.is_nan() {
            return Err(GrowthError::BadTime(t));
        }
        let count = topo.vertex_count();
        if count > SNAPSHOT_MAX_VERTICES {
            return Err(GrowthError::TooLarge(count));
        }
        let mut occupied = FixedBitSet::with_capacity(count as usize);
        for v in 0..count {
            if grown_by(streams, VertexId(v), t) {
                occupied.insert(v as usize);
            }
        }
        Ok(Self { topo: topo.clone(), t, occupied })
    }

    /// Snapshot of an explicit configuration, for forced-stream tests and
    /// for wrapping other processes' states.
    pub fn from_bits(topo: &TreeTopology, t: f64, occupied: FixedBitSet) -> Result<Self, GrowthError> {
        if occupied.len() as u64 != topo.vertex_count() {
            return Err(GrowthError::SizeMismatch { got: occupied.len(), expected: topo.vertex_count() });
        }
        Ok(Self { topo: topo.clone(), t, occupied })
    }

    pub fn from_vertices(
        topo: &TreeTopology,
        t: f64,
        vertices: impl IntoIterator<Item = VertexId>,
    ) -> Result<Self, GrowthError> {
        let mut occupied = FixedBitSet::with_capacity(topo.vertex_count() as usize);
        for v in vertices {
            topo.check(v)?;
            occupied.insert(v.index());
        }
        Ok(Self { topo: topo.clone(), t, occupied })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.occupied
    }

    pub fn occupied_count(&self) -> u64 {
        self.occupied.count_ones(..) as u64
    }

    pub fn occupied_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.occupied.ones().map(|i| VertexId(i as u64))
    }

    pub fn occupied(&self, v: VertexId) -> Result<bool, TopologyError> {
        self.topo.check(v)?;
        Ok(self.occupied.contains(v.index()))
    }
}

impl Occupancy for GrowthSnapshot {
    fn topology(&self) -> &TreeTopology {
        &self.topo
    }

    #[inline]
    fn is_occupied(&self, v: VertexId) -> bool {
        self.occupied.contains(v.index())
    }
}

pub fn snapshot(streams: &TrialStreams, topo: &TreeTopology, t: f64) -> Result<GrowthSnapshot, GrowthError> {
    GrowthSnapshot::new(streams, topo, t)
}

/// Pure growth configuration evaluated on demand; cost is proportional to
/// the vertices actually inspected.
#[derive(Debug, Clone, Copy)]
pub struct LazyGrowth<'a> {
    topo: &'a TreeTopology,
    streams: TrialStreams,
    t: f64,
}

impl<'a> LazyGrowth<'a> {
    pub fn new(topo: &'a TreeTopology, streams: TrialStreams, t: f64) -> Self {
        Self { topo, streams, t }
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

impl Occupancy for LazyGrowth<'_> {
    fn topology(&self) -> &TreeTopology {
        self.topo
    }

    #[inline]
    fn is_occupied(&self, v: VertexId) -> bool {
        grown_by(&self.streams, v, self.t)
    }
}

/// An occupied cluster inside `B_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Lowest-generation member, which is also the smallest id.
    pub root: VertexId,
    pub size: u64,
    /// Members in discovery order.
    pub members: Vec<VertexId>,
    /// Some member lies in generation n.
    pub touches_boundary: bool,
}

impl ClusterReport {
    pub fn sorted_members(&self) -> Vec<VertexId> {
        let mut m = self.members.clone();
        m.sort_unstable();
        m
    }
}

#[inline]
pub(crate) fn for_each_neighbour(topo: &TreeTopology, v: VertexId, mut f: impl FnMut(VertexId)) {
    if let Some(p) = topo.parent_unchecked(v) {
        f(p);
    }
    for c in topo.child_range(v) {
        f(VertexId(c));
    }
}

/// Occupied cluster of `x` by BFS over parent and children, or `None` when
/// `x` is vacant.
pub fn cluster_of<O: Occupancy + ?Sized>(occ: &O, x: VertexId) -> Result<Option<ClusterReport>, TopologyError> {
    let topo = occ.topology();
    topo.check(x)?;
    if !occ.is_occupied(x) {
        return Ok(None);
    }
    // The cluster is a subtree; walking up to its root first lets the BFS
    // go downward only, with no visited set.
    let mut root = x;
    while let Some(p) = topo.parent_unchecked(root) {
        if !occ.is_occupied(p) {
            break;
        }
        root = p;
    }
    let mut members = vec![root];
    let mut touches_boundary = false;
    let mut head = 0;
    while head < members.len() {
        let v = members[head];
        head += 1;
        if topo.is_leaf(v) {
            touches_boundary = true;
            continue;
        }
        for c in topo.child_range(v) {
            let c = VertexId(c);
            if occ.is_occupied(c) {
                members.push(c);
            }
        }
    }
    Ok(Some(ClusterReport {
        root,
        size: members.len() as u64,
        members,
        touches_boundary,
    }))
}

/// Whether the cluster of `x` reaches generation n, with early exit.
pub fn infinite_proxy<O: Occupancy + ?Sized>(occ: &O, x: VertexId) -> Result<bool, TopologyError> {
    let topo = occ.topology();
    topo.check(x)?;
    if !occ.is_occupied(x) {
        return Ok(false);
    }
    let mut root = x;
    while let Some(p) = topo.parent_unchecked(root) {
        if !occ.is_occupied(p) {
            break;
        }
        root = p;
    }
    Ok(deepest_generation_below(occ, root, topo.depth()) == topo.depth())
}

/// Deepest generation reached by occupied downward paths from the occupied
/// vertex `v`, capped at `cap`; depth-first so a surviving cluster exits early.
pub(crate) fn deepest_generation_below<O: Occupancy + ?Sized>(occ: &O, v: VertexId, cap: u32) -> u32 {
    let topo = occ.topology();
    let start = topo.generation_unchecked(v);
    let mut best = start;
    let mut stack = vec![(v, start)];
    while let Some((u, g)) = stack.pop() {
        if g > best {
            best = g;
            if best >= cap {
                return cap;
            }
        }
        for c in topo.child_range(u) {
            let c = VertexId(c);
            if occ.is_occupied(c) {
                stack.push((c, g + 1));
            }
        }
    }
    best
}

/// Root, size and boundary flag of one cluster in a census.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub root: VertexId,
    pub size: u64,
    pub touches_boundary: bool,
}

/// Every cluster of a snapshot, ordered by root id.
pub fn census(snapshot: &GrowthSnapshot) -> Vec<ClusterSummary> {
    let topo = snapshot.topology();
    let count = topo.vertex_count() as usize;
    let mut size = vec![0u32; count];
    let mut touches = FixedBitSet::with_capacity(count);
    let leaf_start = topo.generation_start(topo.depth()) as usize;
    for v in (0..count).rev() {
        if !snapshot.occupied.contains(v) {
            continue;
        }
        let mut s = 1u32;
        let mut t = v >= leaf_start;
        for c in topo.child_range(VertexId(v as u64)) {
            let c = c as usize;
            if snapshot.occupied.contains(c) {
                s += size[c];
                t |= touches.contains(c);
            }
        }
        size[v] = s;
        touches.set(v, t);
    }
    snapshot
        .occupied
        .ones()
        .filter(|&v| {
            topo.parent_unchecked(VertexId(v as u64))
                .is_none_or(|p| !snapshot.occupied.contains(p.index()))
        })
        .map(|v| ClusterSummary {
            root: VertexId(v as u64),
            size: size[v] as u64,
            touches_boundary: touches.contains(v),
        })
        .collect()
}

/// Finite-n samples of `|S^n_{t,x}| / m(t)^n`, the stand-in for the limit
/// variable of the cluster-growth martingale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScalingEstimate {
    pub n: u32,
    pub t: f64,
    pub x: VertexId,
    /// Samples are restricted to boundary-touching clusters.
    pub conditioned: bool,
    pub trials: u64,
    pub ratios: Vec<f64>,
}

impl ClusterScalingEstimate {
    pub fn mean_and_se(&self) -> (f64, f64) {
        mean_and_se(&self.ratios)
    }

    fn proportion(&self, hits: usize) -> Proportion {
        Proportion::wilson(hits as u64, self.ratios.len() as u64, 0.95)
    }

    /// Fraction of samples with ratio `> c`.
    pub fn fraction_above(&self, c: f64) -> Proportion {
        self.proportion(self.ratios.iter().filter(|&&x| x > c).count())
    }

    /// Fraction of samples with ratio `< c`.
    pub fn fraction_below(&self, c: f64) -> Proportion {
        self.proportion(self.ratios.iter().filter(|&&x| x < c).count())
    }
}

/// Samples `|S^n_{t,x}| / m(t)^n` over `trials`, each trial using its own
/// keyed streams. With `conditioned`, only boundary-touching clusters count.
pub fn truncated_cluster_size_samples(
    seed: u64,
    trials: Range<u64>,
    topo: &TreeTopology,
    t: f64,
    x: VertexId,
    conditioned: bool,
) -> Result<ClusterScalingEstimate, GrowthError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(GrowthError::BadTime(t));
    }
    topo.check(x)?;
    let n = topo.depth();
    let scale = mean_offspring(topo.r(), t).powi(n as i32);
    let total = trials.end.saturating_sub(trials.start);
    let mut ratios = Vec::new();
    for trial in trials {
        let lazy = LazyGrowth::new(topo, TrialStreams::new(seed, trial), t);
        match cluster_of(&lazy, x)? {
            Some(c) if !conditioned || c.touches_boundary => ratios.push(c.size as f64 / scale),
            None if !conditioned => ratios.push(0.0),
            _ => {}
        }
    }
    if ratios.is_empty() {
        return Err(GrowthError::ConditionNeverObserved { trials: total });
    }
    Ok(ClusterScalingEstimate { n, t, x, conditioned, trials: total, ratios })
}

/// Deepest generation of the root's pure growth cluster at time `t`,
/// capped at the depth of `topo`; `None` when the root is vacant.
///
/// Vertex ids are depth independent, so one call answers the boundary-reach
/// event for every `n <= depth` on the same streams.
pub fn root_cluster_depth(topo: &TreeTopology, streams: TrialStreams, t: f64) -> Option<u32> {
    let lazy = LazyGrowth::new(topo, streams, t);
    if !lazy.is_occupied(VertexId::ROOT) {
        return None;
    }
    Some(deepest_generation_below(&lazy, VertexId::ROOT, topo.depth()))
}

/// Frequency at which the root's pure growth cluster at time `t` reaches
/// generation n, for each `n` in `n_list`, on common streams across depths.
pub fn boundary_reach_frequencies(
    r: u32,
    t: f64,
    n_list: &[u32],
    seed: u64,
    trials: Range<u64>,
    runner: &TrialRunner,
) -> Result<Vec<(u32, Proportion)>, GrowthError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(GrowthError::BadTime(t));
    }
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let topo = TreeTopology::new(r, n_max)?;
    let total = trials.end.saturating_sub(trials.start);
    let depths = runner.map(trials, |trial| root_cluster_depth(&topo, TrialStreams::new(seed, trial), t));
    Ok(n_list
        .iter()
        .map(|&n| {
            let hits = depths.iter().filter(|d| d.is_some_and(|d| d >= n)).count() as u64;
            (n, Proportion::wilson(hits, total, 0.95))
        })
        .collect())
}
