//! Exact event-driven forest-fire simulation on `B_n`.
//!
//! Every vertex carries a rate-1 growth clock and a rate-λ ignition clock
//! keyed by `(seed, trial, vertex)`. Growth at a vacant vertex occupies it;
//! ignition at an occupied vertex vacates its whole occupied cluster at the
//! same instant. Events are processed in `(time, vertex, GROW before
//! IGNITE)` order.
//!
//! Ignition arrivals and first growth arrivals do not depend on the state,
//! so they are generated up front and radix sorted. Later growth arrivals
//! are either generated up front as well ([`GrowthScheduling::Eager`]) or
//! only scheduled after a burn ([`GrowthScheduling::Lazy`]); both give the
//! same occupancy trajectory, the lazy variant skips growth arrivals at
//! occupied vertices.

use std::borrow::Cow;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::{self, Write};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::growth::{for_each_neighbour, grown_by, ClusterReport};
use crate::rng::{exp1_from_uniform, mix64, StreamKind, TrialStreams};
use crate::topology::{TopologyError, TreeTopology, VertexId};

/// Largest tree the engine simulates (ids are kept in 32 bits internally).
pub const ENGINE_MAX_VERTICES: u64 = 1 << 27;
pub const MAX_HORIZON: f64 = 1e3;
pub const DEFAULT_MAX_EVENTS: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Grow,
    Ignite,
    Burn,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Grow => "GROW",
            EventKind::Ignite => "IGNITE",
            EventKind::Burn => "BURN",
        }
    }
}

/// One log entry. `burn_size` and `digest` are zero except for BURN, where
/// they hold the number of vacated vertices and [`member_digest`] of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub vertex: VertexId,
    pub kind: EventKind,
    pub burn_size: u64,
    pub digest: u64,
}

/// Order-independent fingerprint of a vertex set.
pub fn member_digest(members: impl IntoIterator<Item = VertexId>) -> u64 {
    members
        .into_iter()
        .fold(0u64, |acc, v| acc.wrapping_add(mix64(v.0.wrapping_add(1))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogDetail {
    /// Every processed event, including no-op growth and ignition.
    #[default]
    Full,
    /// Only events that change the state.
    Effective,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GrowthScheduling {
    /// Every growth arrival up to the horizon is an event.
    #[default]
    Eager,
    /// After a burn at time `s`, only the first later arrival is scheduled.
    Lazy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub log: LogDetail,
    pub scheduling: GrowthScheduling,
    /// Vertices whose full history is kept regardless of `log`.
    pub watch: Vec<VertexId>,
    pub max_events: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            log: LogDetail::Full,
            scheduling: GrowthScheduling::Eager,
            watch: Vec::new(),
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

impl RunOptions {
    /// No log, lazy growth, history only for `watch`.
    pub fn watching(watch: Vec<VertexId>) -> Self {
        Self {
            log: LogDetail::Off,
            scheduling: GrowthScheduling::Lazy,
            watch,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VertexEventKind {
    Occupy,
    Vacate,
    Ignite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexEvent {
    pub time: f64,
    pub kind: VertexEventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EngineCounters {
    pub events: u64,
    pub growth_effective: u64,
    pub growth_noop: u64,
    pub ignitions_effective: u64,
    pub ignitions_noop: u64,
    pub burned_vertices: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("ignition rate must be finite and non-negative, got {0}")]
    BadRate(f64),
    #[error("horizon must lie in (0, {MAX_HORIZON}], got {0}")]
    BadHorizon(f64),
    #[error("tree has {vertices} vertices, engine limit is {ENGINE_MAX_VERTICES}")]
    TooLarge { vertices: u64 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("event cap {cap} exceeded at time {time}")]
    EventCapExceeded { cap: u64, time: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("query time {t} outside [0, {horizon}]")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error("vertex {0} is neither watched nor covered by an event log")]
    NotRecorded(VertexId),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("event {index} goes back in time")]
    TimeOrder { index: usize },
    #[error("BURN at event {index} is not preceded by its IGNITE")]
    UnpairedBurn { index: usize },
    #[error("IGNITE at occupied vertex (event {index}) has no BURN")]
    MissingBurn { index: usize },
    #[error("BURN at event {index} does not match the occupied cluster ({expected} vs {recorded} vertices)")]
    BurnMismatch { index: usize, expected: u64, recorded: u64 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("cluster streams (seed {cluster_seed}, trial {cluster_trial}) differ from the engine's (seed {seed}, trial {trial})")]
    StreamMismatch { seed: u64, trial: u64, cluster_seed: u64, cluster_trial: u64 },
    #[error("vertex {0} is not occupied in the pure growth process at the query time")]
    NotGrowthCluster(VertexId),
    #[error(transparent)]
    Query(#[from] QueryError),
}

const GROW: u64 = 0;
const IGNITE: u64 = 1;

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    /// `vertex << 1 | kind`; orders ties by vertex, then GROW before IGNITE.
    tag: u64,
}

#[derive(Debug, Clone, Default)]
struct WatchLog {
    mask: FixedBitSet,
    slot: HashMap<u64, usize>,
    timelines: Vec<Vec<VertexEvent>>,
}

impl WatchLog {
    fn new(count: usize, watch: &[VertexId]) -> Self {
        let mut w = WatchLog { mask: FixedBitSet::with_capacity(count), ..Default::default() };
        for &v in watch {
            if !w.mask.contains(v.index()) {
                w.mask.insert(v.index());
                w.slot.insert(v.0, w.timelines.len());
                w.timelines.push(Vec::new());
            }
        }
        w
    }

    #[inline]
    fn record(&mut self, v: u64, time: f64, kind: VertexEventKind) {
        if self.mask.contains(v as usize) {
            let slot = self.slot[&v];
            self.timelines[slot].push(VertexEvent { time, kind });
        }
    }

    fn timeline(&self, v: VertexId) -> Option<&[VertexEvent]> {
        self.slot.get(&v.0).map(|&s| self.timelines[s].as_slice())
    }
}

/// Outcome of a run: final occupancy at the horizon plus whatever history
/// was requested.
#[derive(Debug, Clone)]
pub struct ForestFireState {
    topo: TreeTopology,
    streams: TrialStreams,
    lambda: f64,
    horizon: f64,
    options: RunOptions,
    occupied: FixedBitSet,
    log: Vec<EventRecord>,
    watch: WatchLog,
    counters: EngineCounters,
}

fn validate(topo: &TreeTopology, lambda: f64, horizon: f64, options: &RunOptions) -> Result<(), EngineError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(EngineError::BadRate(lambda));
    }
    if !(horizon > 0.0 && horizon <= MAX_HORIZON) {
        return Err(EngineError::BadHorizon(horizon));
    }
    if topo.vertex_count() > ENGINE_MAX_VERTICES {
        return Err(EngineError::TooLarge { vertices: topo.vertex_count() });
    }
    for &v in &options.watch {
        topo.check(v)?;
    }
    Ok(())
}

/// State-independent events up to the horizon, in processing order.
fn initial_events(topo: &TreeTopology, streams: &TrialStreams, lambda: f64, horizon: f64, eager: bool) -> Vec<Pending> {
    let count = topo.vertex_count();
    let mut events = Vec::with_capacity(count as usize);
    // -ln(u) <= h requires u >= e^{-h}; the slack keeps the prefilter conservative
    let growth_cut = (-horizon).exp() * (1.0 - 1e-12);
    let ignition_cut = (-lambda * horizon).exp() * (1.0 - 1e-12);
    for v in 0..count {
        let vid = VertexId(v);
        let u = streams.uniform(vid, StreamKind::Growth, 1);
        if u >= growth_cut {
            let mut cum = exp1_from_uniform(u);
            let mut k = 1;
            while cum <= horizon {
                events.push(Pending { time: cum, tag: v << 1 | GROW });
                if !eager {
                    break;
                }
                k += 1;
                cum += streams.exp_gap(vid, StreamKind::Growth, k);
            }
        }
        if lambda > 0.0 {
            let u = streams.uniform(vid, StreamKind::Ignition, 1);
            if u >= ignition_cut {
                let mut cum = exp1_from_uniform(u);
                let mut k = 1;
                while cum / lambda <= horizon {
                    events.push(Pending { time: cum / lambda, tag: v << 1 | IGNITE });
                    k += 1;
                    cum += streams.exp_gap(vid, StreamKind::Ignition, k);
                }
            }
        }
    }
    sort_events(events, horizon)
}

#[inline]
fn key(e: &Pending) -> (u64, u64) {
    (e.time.to_bits(), e.tag)
}

/// Sorts by `(time, tag)`. Times lie in `(0, horizon]` with a bounded
/// density, so one counting pass over about one bucket per event followed by
/// insertion sort inside each bucket is linear in practice.
fn sort_events(events: Vec<Pending>, horizon: f64) -> Vec<Pending> {
    let len = events.len();
    if len < 2 {
        return events;
    }
    let buckets = len;
    let scale = buckets as f64 / horizon;
    let bucket = |e: &Pending| ((e.time * scale) as usize).min(buckets - 1);
    let mut start = vec![0u32; buckets + 1];
    for e in &events {
        start[bucket(e) + 1] += 1;
    }
    for i in 0..buckets {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut sorted = vec![Pending { time: 0.0, tag: 0 }; len];
    for e in &events {
        let b = bucket(e);
        sorted[fill[b] as usize] = *e;
        fill[b] += 1;
    }
    drop(events);
    for b in 0..buckets {
        let slice = &mut sorted[start[b] as usize..start[b + 1] as usize];
        for i in 1..slice.len() {
            let mut j = i;
            while j > 0 && key(&slice[j - 1]) > key(&slice[j]) {
                slice.swap(j - 1, j);
                j -= 1;
            }
        }
    }
    sorted
}

/// Simulates the forest-fire process on `topo` up to `horizon`.
pub fn run(
    topo: &TreeTopology,
    streams: TrialStreams,
    lambda: f64,
    horizon: f64,
    options: &RunOptions,
) -> Result<ForestFireState, EngineError> {
    validate(topo, lambda, horizon, options)?;
    let count = topo.vertex_count() as usize;
    let lazy = options.scheduling == GrowthScheduling::Lazy;
    let events = initial_events(topo, &streams, lambda, horizon, !lazy);
    let mut state = ForestFireState {
        topo: topo.clone(),
        streams,
        lambda,
        horizon,
        options: options.clone(),
        occupied: FixedBitSet::with_capacity(count),
        log: Vec::new(),
        watch: WatchLog::new(count, &options.watch),
        counters: EngineCounters::default(),
    };
    state.simulate(&events)?;
    Ok(state)
}

impl ForestFireState {
    fn simulate(&mut self, events: &[Pending]) -> Result<(), EngineError> {
        let lazy = self.options.scheduling == GrowthScheduling::Lazy;
        let mut regrowth: BinaryHeap<Reverse<(u64, u64)>> = BinaryHeap::new();
        let mut burned: Vec<u32> = Vec::new();
        let mut stack: Vec<u32> = Vec::new();
        let mut next_static = 0;
        loop {
            let from_static = events.get(next_static).map(|e| (e.time.to_bits(), e.tag));
            let from_heap = regrowth.peek().map(|r| r.0);
            let (bits, tag) = match (from_static, from_heap) {
                (None, None) => break,
                (Some(s), Some(h)) if h < s => {
                    regrowth.pop();
                    h
                }
                (Some(s), _) => {
                    next_static += 1;
                    s
                }
                (None, Some(h)) => {
                    regrowth.pop();
                    h
                }
            };
            let time = f64::from_bits(bits);
            self.counters.events += 1;
            if self.counters.events > self.options.max_events {
                return Err(EngineError::EventCapExceeded { cap: self.options.max_events, time });
            }
            let v = tag >> 1;
            if tag & 1 == GROW {
                self.grow(time, v);
            } else if self.ignite(time, v, &mut burned, &mut stack) && lazy {
                for &u in &burned {
                    let t = self.regrowth_time(u as u64, time, v);
                    if t <= self.horizon {
                        regrowth.push(Reverse((t.to_bits(), (u as u64) << 1 | GROW)));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn grow(&mut self, time: f64, v: u64) {
        let vid = VertexId(v);
        if self.occupied.contains(v as usize) {
            self.counters.growth_noop += 1;
            if self.options.log == LogDetail::Full {
                self.push_log(time, vid, EventKind::Grow, 0, 0);
            }
            return;
        }
        self.occupied.insert(v as usize);
        self.counters.growth_effective += 1;
        if self.options.log != LogDetail::Off {
            self.push_log(time, vid, EventKind::Grow, 0, 0);
        }
        self.watch.record(v, time, VertexEventKind::Occupy);
    }

    /// Handles an ignition; returns whether a cluster burned (members left in `burned`).
    fn ignite(&mut self, time: f64, v: u64, burned: &mut Vec<u32>, stack: &mut Vec<u32>) -> bool {
        let vid = VertexId(v);
        self.watch.record(v, time, VertexEventKind::Ignite);
        if !self.occupied.contains(v as usize) {
            self.counters.ignitions_noop += 1;
            if self.options.log == LogDetail::Full {
                self.push_log(time, vid, EventKind::Ignite, 0, 0);
            }
            return false;
        }
        self.counters.ignitions_effective += 1;
        burned.clear();
        stack.clear();
        self.occupied.set(v as usize, false);
        stack.push(v as u32);
        while let Some(u) = stack.pop() {
            burned.push(u);
            let occupied = &mut self.occupied;
            for_each_neighbour(&self.topo, VertexId(u as u64), |w| {
                if occupied.contains(w.index()) {
                    occupied.set(w.index(), false);
                    stack.push(w.0 as u32);
                }
            });
        }
        self.counters.burned_vertices += burned.len() as u64;
        if self.options.log != LogDetail::Off {
            let digest = member_digest(burned.iter().map(|&u| VertexId(u as u64)));
            self.push_log(time, vid, EventKind::Ignite, 0, 0);
            self.push_log(time, vid, EventKind::Burn, burned.len() as u64, digest);
        }
        if !self.watch.timelines.is_empty() {
            for &u in burned.iter() {
                self.watch.record(u as u64, time, VertexEventKind::Vacate);
            }
        }
        true
    }

    /// First growth arrival of `u` ordered after the ignition `(s, v)`.
    fn regrowth_time(&self, u: u64, s: f64, v: u64) -> f64 {
        for (_, a) in self.streams.arrivals(VertexId(u), StreamKind::Growth) {
            if a > s || (a == s && u > v) {
                return a;
            }
        }
        unreachable!("arrival sequence is unbounded")
    }

    fn push_log(&mut self, time: f64, vertex: VertexId, kind: EventKind, burn_size: u64, digest: u64) {
        self.log.push(EventRecord { time, vertex, kind, burn_size, digest });
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topo
    }

    pub fn streams(&self) -> &TrialStreams {
        &self.streams
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn options(&self) -> &RunOptions {
        &self.options
    }

    pub fn counters(&self) -> &EngineCounters {
        &self.counters
    }

    /// Occupancy at the horizon.
    pub fn final_occupancy(&self) -> &FixedBitSet {
        &self.occupied
    }

    pub fn occupied_count(&self) -> u64 {
        self.occupied.count_ones(..) as u64
    }

    /// The event log; empty when logging was off.
    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn has_log(&self) -> bool {
        self.options.log != LogDetail::Off
    }

    pub fn is_watched(&self, z: VertexId) -> bool {
        self.watch.mask.contains(z.index())
    }

    /// Number of growth arrivals of `z` in `[0, t]` (the clock `G_{t,z}`).
    pub fn growth_count(&self, z: VertexId, t: f64) -> u64 {
        self.streams
            .arrivals(z, StreamKind::Growth)
            .take_while(|&(_, a)| a <= t)
            .count() as u64
    }

    /// Ignition arrival times of `z` in `[0, t]`.
    pub fn ignition_times(&self, z: VertexId, t: f64) -> Vec<f64> {
        if self.lambda == 0.0 {
            return Vec::new();
        }
        let lambda = self.lambda;
        self.streams
            .arrivals(z, StreamKind::Ignition)
            .map(|(_, a)| a / lambda)
            .take_while(|&s| s <= t)
            .collect()
    }

    /// Number of ignition arrivals of `z` in `[0, t]` (the clock `I_{t,z}`).
    pub fn ignition_count(&self, z: VertexId, t: f64) -> u64 {
        self.ignition_times(z, t).len() as u64
    }

    fn check_time(&self, t: f64) -> Result<(), QueryError> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(QueryError::BeyondHorizon { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// History of `z`: from the watch set if present, else rebuilt from the log.
    pub fn timeline(&self, z: VertexId) -> Result<Cow<'_, [VertexEvent]>, QueryError> {
        self.topo.check(z)?;
        if let Some(t) = self.watch.timeline(z) {
            return Ok(Cow::Borrowed(t));
        }
        if !self.has_log() {
            return Err(QueryError::NotRecorded(z));
        }
        let mut events = Vec::new();
        replay_each(&self.topo, &self.log, f64::INFINITY, |record, burned| {
            match record.kind {
                EventKind::Grow if record.vertex == z && burned.is_none() => {
                    events.push(VertexEvent { time: record.time, kind: VertexEventKind::Occupy })
                }
                EventKind::Ignite if record.vertex == z => {
                    events.push(VertexEvent { time: record.time, kind: VertexEventKind::Ignite })
                }
                EventKind::Burn
                    if burned.is_some_and(|b| b.contains(z.index())) => {
                        events.push(VertexEvent { time: record.time, kind: VertexEventKind::Vacate })
                    }
                _ => {}
            }
        })?;
        Ok(Cow::Owned(events))
    }

    /// `η_{t,z}`, right-continuous: events at time `t` are included.
    pub fn occupancy_at(&self, t: f64, z: VertexId) -> Result<bool, QueryError> {
        self.check_time(t)?;
        let timeline = self.timeline(z)?;
        Ok(occupancy_from_timeline(&timeline, t))
    }

    /// Times in the open window `(start, end)` at which `z` was burned.
    pub fn destruction_times(&self, z: VertexId, start: f64, end: f64) -> Result<Vec<f64>, QueryError> {
        self.check_time(end)?;
        let timeline = self.timeline(z)?;
        Ok(timeline
            .iter()
            .filter(|e| e.kind == VertexEventKind::Vacate && e.time > start && e.time < end)
            .map(|e| e.time)
            .collect())
    }

    /// Whether `η_{s,z} = σ_{s,z}` for every `s in [0, t]`, comparing the
    /// recorded history with the pure growth occupancy on the same streams
    /// at every breakpoint of either path.
    pub fn coupled_until(&self, z: VertexId, t: f64) -> Result<bool, QueryError> {
        self.check_time(t)?;
        let timeline = self.timeline(z)?;
        let first = self.streams.first_growth(z);
        let mut breakpoints: Vec<f64> = timeline.iter().map(|e| e.time).filter(|&s| s <= t).collect();
        breakpoints.push(0.0);
        if first <= t {
            breakpoints.push(first);
        }
        Ok(breakpoints
            .into_iter()
            .all(|s| occupancy_from_timeline(&timeline, s) == grown_by(&self.streams, z, s)))
    }

    /// Writes the log as CSV with header `time,vertex,kind,burn_size`.
    pub fn write_log_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_log_csv(&self.log, out)
    }
}

fn occupancy_from_timeline(timeline: &[VertexEvent], t: f64) -> bool {
    let mut occupied = false;
    for e in timeline {
        if e.time > t {
            break;
        }
        match e.kind {
            VertexEventKind::Occupy => occupied = true,
            VertexEventKind::Vacate => occupied = false,
            VertexEventKind::Ignite => {}
        }
    }
    occupied
}

pub fn write_log_csv<W: Write>(log: &[EventRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "time,vertex,kind,burn_size")?;
    for e in log {
        writeln!(out, "{},{},{},{}", e.time, e.vertex, e.kind.as_str(), e.burn_size)?;
    }
    Ok(())
}

fn cluster_bits(topo: &TreeTopology, occupied: &FixedBitSet, v: VertexId) -> FixedBitSet {
    let mut members = FixedBitSet::with_capacity(occupied.len());
    members.insert(v.index());
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        for_each_neighbour(topo, u, |w| {
            if occupied.contains(w.index()) && !members.contains(w.index()) {
                members.insert(w.index());
                stack.push(w);
            }
        });
    }
    members
}

/// Replays `log` up to time `until`, checking the log invariants, and calls
/// `visit` for each applied record. For BURN records `visit` receives the
/// recomputed burned set; for GROW records at an occupied vertex it
/// receives `Some(empty)` to mark the no-op.
fn replay_each(
    topo: &TreeTopology,
    log: &[EventRecord],
    until: f64,
    mut visit: impl FnMut(&EventRecord, Option<&FixedBitSet>),
) -> Result<FixedBitSet, ReplayError> {
    let count = topo.vertex_count() as usize;
    let mut occupied = FixedBitSet::with_capacity(count);
    let noop = FixedBitSet::new();
    let mut last = 0.0f64;
    let mut pending_burn: Option<(usize, f64, VertexId)> = None;
    for (index, record) in log.iter().enumerate() {
        topo.check(record.vertex)?;
        if record.time < last {
            return Err(ReplayError::TimeOrder { index });
        }
        last = record.time;
        if let Some((i, t, v)) = pending_burn {
            if record.kind != EventKind::Burn || record.time != t || record.vertex != v {
                return Err(ReplayError::MissingBurn { index: i });
            }
        }
        if record.time > until {
            break;
        }
        match record.kind {
            EventKind::Grow => {
                let was = occupied.contains(record.vertex.index());
                occupied.insert(record.vertex.index());
                visit(record, if was { Some(&noop) } else { None });
            }
            EventKind::Ignite => {
                if occupied.contains(record.vertex.index()) {
                    pending_burn = Some((index, record.time, record.vertex));
                }
                visit(record, None);
            }
            EventKind::Burn => {
                if pending_burn.take().is_none() {
                    return Err(ReplayError::UnpairedBurn { index });
                }
                let members = cluster_bits(topo, &occupied, record.vertex);
                let expected = members.count_ones(..) as u64;
                let digest = member_digest(members.ones().map(|i| VertexId(i as u64)));
                if expected != record.burn_size || digest != record.digest {
                    return Err(ReplayError::BurnMismatch { index, expected, recorded: record.burn_size });
                }
                occupied.difference_with(&members);
                visit(record, Some(&members));
            }
        }
    }
    if let Some((index, t, _)) = pending_burn {
        if t <= until {
            return Err(ReplayError::MissingBurn { index });
        }
    }
    Ok(occupied)
}

/// Occupancy after applying every record with time `<= until`, verifying
/// ordering, IGNITE/BURN pairing and that each burn vacates exactly the
/// occupied cluster of the ignited vertex.
pub fn replay(topo: &TreeTopology, log: &[EventRecord], until: f64) -> Result<FixedBitSet, ReplayError> {
    replay_each(topo, log, until, |_, _| {})
}

/// Fire statistics of a pure growth cluster `S^n_{τ_n,x}` in the coupled
/// forest-fire process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FireStatistics {
    /// Time from the last ignition inside the cluster up to `τ_n`, or `τ_n`.
    pub iota: f64,
    /// Ignitions inside the cluster in `[0, τ_n]`, occupied or not.
    pub ignitions: u64,
    /// Largest `n - generation` over ignited members, `-1` if none.
    pub ignition_depth: i64,
    /// Largest `n - generation` over members burned in `(0, τ_n]`, `-1` if none.
    pub destruction_depth: i64,
}

/// Computes `(ι, N, K, J)` for `cluster`, which must be the pure growth
/// cluster at `tau_n` on the engine's own growth streams.
pub fn fire_statistics(
    state: &ForestFireState,
    cluster: &ClusterReport,
    cluster_streams: &TrialStreams,
    tau_n: f64,
) -> Result<FireStatistics, CouplingError> {
    let streams = state.streams();
    if cluster_streams != streams {
        return Err(CouplingError::StreamMismatch {
            seed: streams.seed(),
            trial: streams.trial(),
            cluster_seed: cluster_streams.seed(),
            cluster_trial: cluster_streams.trial(),
        });
    }
    state.check_time(tau_n)?;
    let topo = state.topology();
    let n = topo.depth() as i64;
    let mut last_ignition: Option<f64> = None;
    let mut ignitions = 0u64;
    let mut ignition_depth = -1i64;
    let mut destruction_depth = -1i64;
    let logged_destroyed = if state.has_log() && cluster.members.iter().any(|&z| !state.is_watched(z)) {
        let mut destroyed = FixedBitSet::with_capacity(topo.vertex_count() as usize);
        replay_each(topo, state.log(), tau_n, |record, burned| {
            if record.kind == EventKind::Burn {
                if let Some(b) = burned {
                    destroyed.union_with(b);
                }
            }
        })
        .map_err(QueryError::from)?;
        Some(destroyed)
    } else {
        None
    };
    for &z in &cluster.members {
        topo.check(z).map_err(QueryError::from)?;
        if !grown_by(streams, z, tau_n) {
            return Err(CouplingError::NotGrowthCluster(z));
        }
        let depth = n - topo.generation_unchecked(z) as i64;
        let times = state.ignition_times(z, tau_n);
        if let Some(&t) = times.last() {
            last_ignition = Some(last_ignition.map_or(t, |s: f64| s.max(t)));
            ignition_depth = ignition_depth.max(depth);
        }
        ignitions += times.len() as u64;
        let destroyed = if let Some(timeline) = state.watch.timeline(z) {
            timeline.iter().any(|e| e.kind == VertexEventKind::Vacate && e.time <= tau_n)
        } else if let Some(d) = &logged_destroyed {
            d.contains(z.index())
        } else {
            return Err(QueryError::NotRecorded(z).into());
        };
        if destroyed {
            destruction_depth = destruction_depth.max(depth);
        }
    }
    Ok(FireStatistics {
        iota: last_ignition.map_or(tau_n, |s| tau_n - s),
        ignitions,
        ignition_depth,
        destruction_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{cluster_of, snapshot, LazyGrowth};

    fn topo(r: u32, n: u32) -> TreeTopology {
        TreeTopology::new(r, n).unwrap()
    }

    #[test]
    fn rejects_bad_arguments() {
        let t = topo(2, 3);
        let s = TrialStreams::new(1, 0);
        let o = RunOptions::default();
        assert_eq!(run(&t, s, -1.0, 1.0, &o).unwrap_err(), EngineError::BadRate(-1.0));
        assert!(matches!(run(&t, s, 1.0, 0.0, &o), Err(EngineError::BadHorizon(_))));
        assert!(matches!(run(&t, s, 1.0, 2e3, &o), Err(EngineError::BadHorizon(_))));
        assert!(matches!(run(&topo(2, 30), s, 1.0, 1.0, &o), Err(EngineError::TooLarge { .. })));
        let watch = RunOptions { watch: vec![VertexId(99)], ..RunOptions::default() };
        assert!(matches!(run(&t, s, 1.0, 1.0, &watch), Err(EngineError::Topology(_))));
    }

    #[test]
    fn event_cap_aborts() {
        let o = RunOptions { max_events: 10, ..RunOptions::default() };
        let err = run(&topo(2, 6), TrialStreams::new(1, 0), 1.0, 2.0, &o).unwrap_err();
        assert!(matches!(err, EngineError::EventCapExceeded { cap: 10, .. }));
    }

    #[test]
    fn vanishing_rate_matches_snapshot() {
        let t = topo(2, 10);
        for trial in 0..10 {
            let s = TrialStreams::new(3, trial);
            let state = run(&t, s, 1e-30, 2.0, &RunOptions::default()).unwrap();
            assert_eq!(state.final_occupancy(), snapshot(&s, &t, 2.0).unwrap().bits());
        }
    }

    #[test]
    fn lazy_and_eager_trajectories_agree() {
        let t = topo(2, 9);
        for trial in 0..20 {
            let s = TrialStreams::new(8, trial);
            let eager_opts = RunOptions { log: LogDetail::Effective, ..RunOptions::default() };
            let lazy_opts = RunOptions { scheduling: GrowthScheduling::Lazy, ..eager_opts.clone() };
            let eager = run(&t, s, 0.05, 3.0, &eager_opts).unwrap();
            let lazy = run(&t, s, 0.05, 3.0, &lazy_opts).unwrap();
            assert_eq!(eager.final_occupancy(), lazy.final_occupancy());
            assert_eq!(eager.log(), lazy.log());
            assert_eq!(lazy.counters().growth_noop, 0);
            assert!(eager.counters().events >= lazy.counters().events);
        }
    }

    #[test]
    fn replay_reproduces_final_state_and_conservation() {
        let t = topo(3, 5);
        for trial in 0..10 {
            let state = run(&t, TrialStreams::new(2, trial), 0.2, 4.0, &RunOptions::default()).unwrap();
            let replayed = replay(&t, state.log(), f64::INFINITY).unwrap();
            assert_eq!(&replayed, state.final_occupancy());
            let mut count: i64 = 0;
            replay_each(&t, state.log(), f64::INFINITY, |record, burned| match record.kind {
                EventKind::Grow if burned.is_none() => count += 1,
                EventKind::Burn => count -= record.burn_size as i64,
                _ => {}
            })
            .unwrap();
            assert_eq!(count as u64, state.occupied_count());
            let c = state.counters();
            assert_eq!(c.growth_effective - c.burned_vertices, state.occupied_count());
        }
    }

    #[test]
    fn replay_detects_tampering() {
        let t = topo(2, 6);
        let state = run(&t, TrialStreams::new(4, 1), 1.0, 3.0, &RunOptions::default()).unwrap();
        let mut log = state.log().to_vec();
        let burn = log.iter().position(|e| e.kind == EventKind::Burn).expect("some burn");
        log[burn].burn_size += 1;
        assert!(matches!(replay(&t, &log, f64::INFINITY), Err(ReplayError::BurnMismatch { .. })));
        let mut log = state.log().to_vec();
        log.remove(burn);
        assert!(matches!(replay(&t, &log, f64::INFINITY), Err(ReplayError::MissingBurn { .. })));
        let mut log = state.log().to_vec();
        log.swap(0, 5);
        assert!(replay(&t, &log, f64::INFINITY).is_err());
    }

    #[test]
    fn log_invariants() {
        let t = topo(2, 7);
        let state = run(&t, TrialStreams::new(6, 0), 0.5, 3.0, &RunOptions::default()).unwrap();
        let log = state.log();
        for w in log.windows(2) {
            assert!(w[0].time <= w[1].time);
        }
        for (i, e) in log.iter().enumerate() {
            if e.kind == EventKind::Burn {
                assert_eq!(log[i - 1].kind, EventKind::Ignite);
                assert_eq!(log[i - 1].time, e.time);
                assert_eq!(log[i - 1].vertex, e.vertex);
                assert!(e.burn_size >= 1);
            }
        }
        let c = state.counters();
        assert_eq!(c.events, log.len() as u64 - c.ignitions_effective);
    }

    #[test]
    fn queries_from_log_and_watch_agree() {
        let t = topo(2, 6);
        let s = TrialStreams::new(12, 3);
        let logged = run(&t, s, 0.5, 3.0, &RunOptions::default()).unwrap();
        let watched = run(&t, s, 0.5, 3.0, &RunOptions::watching(t.vertices().collect())).unwrap();
        assert!(watched.log().is_empty());
        for z in t.vertices() {
            for k in 0..=30 {
                let time = 0.1 * k as f64;
                assert_eq!(logged.occupancy_at(time, z).unwrap(), watched.occupancy_at(time, z).unwrap());
            }
            assert_eq!(
                logged.destruction_times(z, 0.0, 3.0).unwrap(),
                watched.destruction_times(z, 0.0, 3.0).unwrap()
            );
            assert_eq!(logged.coupled_until(z, 2.5).unwrap(), watched.coupled_until(z, 2.5).unwrap());
        }
        assert!(logged.occupancy_at(3.5, VertexId::ROOT).is_err());
        let bare = run(&t, s, 0.5, 3.0, &RunOptions { log: LogDetail::Off, ..RunOptions::default() }).unwrap();
        assert_eq!(bare.occupancy_at(1.0, VertexId(3)), Err(QueryError::NotRecorded(VertexId(3))));
    }

    #[test]
    fn occupancy_before_first_growth_and_after_burn() {
        let t = topo(2, 5);
        let s = TrialStreams::new(13, 0);
        let state = run(&t, s, 1.0, 4.0, &RunOptions::default()).unwrap();
        for z in t.vertices() {
            let first = s.first_growth(z);
            if first > 0.01 && first <= 4.0 {
                assert!(!state.occupancy_at(first * 0.5, z).unwrap());
            }
            for burn in state.destruction_times(z, 0.0, 4.0).unwrap() {
                assert!(!state.occupancy_at(burn, z).unwrap());
                let regrow = state
                    .timeline(z)
                    .unwrap()
                    .iter()
                    .find(|e| e.kind == VertexEventKind::Occupy && e.time > burn)
                    .map(|e| e.time)
                    .unwrap_or(f64::INFINITY);
                let mid = 0.5 * (burn + regrow.min(4.0));
                assert!(!state.occupancy_at(mid, z).unwrap());
            }
        }
    }

    #[test]
    fn csv_export_is_stable() {
        let t = topo(2, 3);
        let state = run(&t, TrialStreams::new(1, 1), 1.0, 1.0, &RunOptions::default()).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        state.write_log_csv(&mut a).unwrap();
        run(&t, TrialStreams::new(1, 1), 1.0, 1.0, &RunOptions::default()).unwrap().write_log_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("time,vertex,kind,burn_size\n"));
        assert_eq!(text.lines().count(), state.log().len() + 1);
    }

    #[test]
    fn fire_statistics_without_ignition() {
        let t = topo(2, 8);
        let s = TrialStreams::new(5, 0);
        let tau = 1.2;
        let cluster = (0..t.vertex_count())
            .find_map(|v| cluster_of(&LazyGrowth::new(&t, s, tau), VertexId(v)).unwrap())
            .unwrap();
        let state = run(&t, s, 1e-30, tau, &RunOptions::watching(cluster.members.clone())).unwrap();
        let stats = fire_statistics(&state, &cluster, &s, tau).unwrap();
        assert_eq!(stats, FireStatistics { iota: tau, ignitions: 0, ignition_depth: -1, destruction_depth: -1 });
        let other = TrialStreams::new(5, 1);
        assert!(matches!(fire_statistics(&state, &cluster, &other, tau), Err(CouplingError::StreamMismatch { .. })));
    }

    #[test]
    fn fire_statistics_routes_agree() {
        let t = topo(2, 8);
        let tau = 1.3;
        for trial in 0..30 {
            let s = TrialStreams::new(44, trial);
            let Some(cluster) = cluster_of(&LazyGrowth::new(&t, s, tau), VertexId::ROOT).unwrap() else { continue };
            let watched = run(&t, s, 0.1, tau, &RunOptions::watching(cluster.members.clone())).unwrap();
            let logged = run(&t, s, 0.1, tau, &RunOptions::default()).unwrap();
            let a = fire_statistics(&watched, &cluster, &s, tau).unwrap();
            let b = fire_statistics(&logged, &cluster, &s, tau).unwrap();
            assert_eq!(a, b);
            assert!(a.ignition_depth <= 8 && a.destruction_depth <= 8);
            if a.ignitions == 0 {
                assert_eq!(a.iota, tau);
            }
        }
    }
}
