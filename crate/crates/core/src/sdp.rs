//! Self-destructive percolation on `B_n`.
//!
//! `X` is Bernoulli(p), `X*` vacates every cluster of `X` that reaches
//! generation n, `Y` is an independent Bernoulli(δ) refresh and
//! `Z = X* ∨ Y`. In the time parametrization `X` is the growth
//! configuration at `τ` and `Y` marks growth arrivals in `(τ, τ+ε]`; in the
//! probability parametrization `X` uses the growth stream at
//! `τ(p) = -ln(1-p)` and `Y` an independent REFRESH stream.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::{self, Write};
use std::ops::Range;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::critical_probability;
use crate::growth::{deepest_generation_below, grown_by, infinite_proxy, GrowthSnapshot, Occupancy};
use crate::parallel::TrialRunner;
use crate::rng::{derive_seed, StreamKind, TrialStreams};
use crate::stats::Proportion;
use crate::topology::{TreeTopology, VertexId};

/// Confidence level of reported intervals.
pub const SDP_LEVEL: f64 = 0.95;
/// Largest tree [`realize`] materializes.
pub const REALIZE_MAX_VERTICES: u64 = 1 << 28;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("p = {p} is not above p_c = {p_c}")]
    Subcritical { p: f64, p_c: f64 },
    #[error("tree of {0} vertices is too large to materialize")]
    TooLarge(u64),
    #[error("scan needs at least one depth and one refresh value")]
    EmptyGrid,
    #[error("trials must be at least 1")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parametrization", rename_all = "snake_case")]
pub enum SdpParams {
    Time { tau: f64, eps: f64 },
    Probability { p: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpConfig {
    topo: TreeTopology,
    params: SdpParams,
}

impl SdpConfig {
    /// Degenerate values (`ε = 0`, any `τ >= 0`) are accepted; use
    /// [`require_supercritical`](Self::require_supercritical) where `p > p_c` matters.
    pub fn time(topo: &TreeTopology, tau: f64, eps: f64) -> Result<Self, SdpError> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(SdpError::OutOfRange { name: "tau", value: tau });
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(SdpError::OutOfRange { name: "eps", value: eps });
        }
        Ok(Self { topo: topo.clone(), params: SdpParams::Time { tau, eps } })
    }

    pub fn probability(topo: &TreeTopology, p: f64, delta: f64) -> Result<Self, SdpError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SdpError::OutOfRange { name: "p", value: p });
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(SdpError::OutOfRange { name: "delta", value: delta });
        }
        Ok(Self { topo: topo.clone(), params: SdpParams::Probability { p, delta } })
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topo
    }

    pub fn params(&self) -> SdpParams {
        self.params
    }

    /// `p = 1 - e^{-τ}`.
    pub fn p(&self) -> f64 {
        match self.params {
            SdpParams::Time { tau, .. } => -(-tau).exp_m1(),
            SdpParams::Probability { p, .. } => p,
        }
    }

    /// `δ = 1 - e^{-ε}`.
    pub fn delta(&self) -> f64 {
        match self.params {
            SdpParams::Time { eps, .. } => -(-eps).exp_m1(),
            SdpParams::Probability { delta, .. } => delta,
        }
    }

    /// Growth time defining `X`; infinite for `p = 1`.
    pub fn tau(&self) -> f64 {
        match self.params {
            SdpParams::Time { tau, .. } => tau,
            SdpParams::Probability { p, .. } => -(-p).ln_1p(),
        }
    }

    pub fn eps(&self) -> f64 {
        match self.params {
            SdpParams::Time { eps, .. } => eps,
            SdpParams::Probability { delta, .. } => -(-delta).ln_1p(),
        }
    }

    pub fn require_supercritical(&self) -> Result<(), SdpError> {
        let p = self.p();
        let p_c = critical_probability(self.topo.r());
        if p > p_c {
            Ok(())
        } else {
            Err(SdpError::Subcritical { p, p_c })
        }
    }

    #[inline]
    fn x(&self, streams: &TrialStreams, v: VertexId) -> bool {
        grown_by(streams, v, self.tau())
    }

    #[inline]
    fn y(&self, streams: &TrialStreams, v: VertexId) -> bool {
        match self.params {
            SdpParams::Time { tau, eps } => {
                if eps == 0.0 {
                    return false;
                }
                let end = tau + eps;
                streams
                    .arrivals(v, StreamKind::Growth)
                    .map(|(_, a)| a)
                    .find(|&a| a > tau)
                    .is_some_and(|a| a <= end)
            }
            SdpParams::Probability { delta, .. } => streams.uniform(v, StreamKind::Refresh, 1) < delta,
        }
    }
}

/// The four configurations of one realization on `B_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpRealization {
    topo: TreeTopology,
    pub x: FixedBitSet,
    pub x_star: FixedBitSet,
    pub y: FixedBitSet,
    pub z: FixedBitSet,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SdpInvariantError {
    #[error("vertex {0} is in X* but not in X")]
    NotInX(VertexId),
    #[error("vertex {0} is in X* although its X cluster reaches generation n")]
    TouchingClusterKept(VertexId),
    #[error("cluster rooted at {0} of X* reaches generation n")]
    TouchingClusterInXStar(VertexId),
    #[error("Z differs from X* or Y at vertex {0}")]
    NotUnion(VertexId),
}

/// `touches[v]`: the cluster of `v` in `occupied` reaches generation n.
fn boundary_touch(topo: &TreeTopology, occupied: &FixedBitSet) -> FixedBitSet {
    let count = topo.vertex_count() as usize;
    let leaf_start = topo.generation_start(topo.depth()) as usize;
    // downward reach, bottom up
    let mut down = FixedBitSet::with_capacity(count);
    for v in (0..count).rev() {
        if !occupied.contains(v) {
            continue;
        }
        let reach = v >= leaf_start
            || topo
                .child_range(VertexId(v as u64))
                .any(|c| occupied.contains(c as usize) && down.contains(c as usize));
        down.set(v, reach);
    }
    // a cluster touches iff its root reaches down; propagate top down
    let mut touches = FixedBitSet::with_capacity(count);
    for v in 0..count {
        if !occupied.contains(v) {
            continue;
        }
        let inherited = topo
            .parent_unchecked(VertexId(v as u64))
            .filter(|p| occupied.contains(p.index()))
            .map(|p| touches.contains(p.index()));
        touches.set(v, inherited.unwrap_or_else(|| down.contains(v)));
    }
    touches
}

/// Materializes `X, X*, Y, Z` for one trial.
pub fn realize(config: &SdpConfig, streams: &TrialStreams) -> Result<SdpRealization, SdpError> {
    let topo = config.topology();
    let count = topo.vertex_count();
    if count > REALIZE_MAX_VERTICES {
        return Err(SdpError::TooLarge(count));
    }
    let count = count as usize;
    let mut x = FixedBitSet::with_capacity(count);
    let mut y = FixedBitSet::with_capacity(count);
    for v in 0..count {
        let vid = VertexId(v as u64);
        x.set(v, config.x(streams, vid));
        y.set(v, config.y(streams, vid));
    }
    let touches = boundary_touch(topo, &x);
    let mut x_star = x.clone();
    x_star.difference_with(&touches);
    let mut z = x_star.clone();
    z.union_with(&y);
    Ok(SdpRealization { topo: topo.clone(), x, x_star, y, z })
}

impl SdpRealization {
    pub fn topology(&self) -> &TreeTopology {
        &self.topo
    }

    pub fn z_snapshot(&self) -> GrowthSnapshot {
        GrowthSnapshot::from_bits(&self.topo, f64::NAN, self.z.clone()).expect("sizes match")
    }

    /// Whether the root's cluster in `Z` reaches generation n.
    pub fn root_reaches_boundary(&self) -> bool {
        infinite_proxy(&self.z_snapshot(), VertexId::ROOT).expect("root is valid")
    }

    /// Checks `X* ≤ X`, that no `X*` cluster reaches generation n, that kept
    /// vertices have non-touching `X` clusters, and `Z = X* ∨ Y`. Cluster
    /// touches are recomputed by BFS, independently of the construction.
    pub fn check_invariants(&self) -> Result<(), SdpInvariantError> {
        let x_snap = GrowthSnapshot::from_bits(&self.topo, f64::NAN, self.x.clone()).expect("sizes match");
        let star_snap = GrowthSnapshot::from_bits(&self.topo, f64::NAN, self.x_star.clone()).expect("sizes match");
        let mut seen = FixedBitSet::with_capacity(self.x.len());
        for v in self.x_star.ones() {
            let vid = VertexId(v as u64);
            if !self.x.contains(v) {
                return Err(SdpInvariantError::NotInX(vid));
            }
            if seen.contains(v) {
                continue;
            }
            let cluster = crate::growth::cluster_of(&x_snap, vid).expect("valid").expect("occupied");
            if cluster.touches_boundary {
                return Err(SdpInvariantError::TouchingClusterKept(vid));
            }
            for m in &cluster.members {
                seen.insert(m.index());
            }
        }
        for c in crate::growth::census(&star_snap) {
            if c.touches_boundary {
                return Err(SdpInvariantError::TouchingClusterInXStar(c.root));
            }
        }
        for v in 0..self.z.len() {
            if self.z.contains(v) != (self.x_star.contains(v) || self.y.contains(v)) {
                return Err(SdpInvariantError::NotUnion(VertexId(v as u64)));
            }
        }
        Ok(())
    }
}

/// On-demand view of `Z`, memoizing boundary reach per `X` cluster root.
pub struct LazyZ<'a> {
    config: &'a SdpConfig,
    streams: TrialStreams,
    x_touch: RefCell<HashMap<u64, bool>>,
}

/// On-demand view of `X ∨ Y`.
pub struct LazyXOrY<'a> {
    config: &'a SdpConfig,
    streams: TrialStreams,
}

struct LazyX<'a> {
    config: &'a SdpConfig,
    streams: TrialStreams,
}

impl Occupancy for LazyX<'_> {
    fn topology(&self) -> &TreeTopology {
        self.config.topology()
    }

    fn is_occupied(&self, v: VertexId) -> bool {
        self.config.x(&self.streams, v)
    }
}

impl<'a> LazyZ<'a> {
    pub fn new(config: &'a SdpConfig, streams: TrialStreams) -> Self {
        Self { config, streams, x_touch: RefCell::new(HashMap::new()) }
    }

    fn x_cluster_touches(&self, v: VertexId) -> bool {
        let x = LazyX { config: self.config, streams: self.streams };
        let topo = self.config.topology();
        let mut root = v;
        while let Some(p) = topo.parent_unchecked(root) {
            if !x.is_occupied(p) {
                break;
            }
            root = p;
        }
        if let Some(&t) = self.x_touch.borrow().get(&root.0) {
            return t;
        }
        let t = deepest_generation_below(&x, root, topo.depth()) == topo.depth();
        self.x_touch.borrow_mut().insert(root.0, t);
        t
    }
}

impl Occupancy for LazyZ<'_> {
    fn topology(&self) -> &TreeTopology {
        self.config.topology()
    }

    fn is_occupied(&self, v: VertexId) -> bool {
        self.config.y(&self.streams, v) || (self.config.x(&self.streams, v) && !self.x_cluster_touches(v))
    }
}

impl<'a> LazyXOrY<'a> {
    pub fn new(config: &'a SdpConfig, streams: TrialStreams) -> Self {
        Self { config, streams }
    }
}

impl Occupancy for LazyXOrY<'_> {
    fn topology(&self) -> &TreeTopology {
        self.config.topology()
    }

    fn is_occupied(&self, v: VertexId) -> bool {
        self.config.x(&self.streams, v) || self.config.y(&self.streams, v)
    }
}

/// Whether the root's `Z` cluster reaches generation n, exploring lazily.
pub fn root_reaches_boundary(config: &SdpConfig, streams: TrialStreams) -> bool {
    infinite_proxy(&LazyZ::new(config, streams), VertexId::ROOT).expect("root is valid")
}

/// Size of the root's cluster in `Z` (0 when the root is vacant).
pub fn root_cluster_size(config: &SdpConfig, streams: TrialStreams) -> u64 {
    crate::growth::cluster_of(&LazyZ::new(config, streams), VertexId::ROOT)
        .expect("root is valid")
        .map_or(0, |c| c.size)
}

/// Wilson estimate of `P[root's Z cluster reaches generation n]`.
pub fn estimate_theta_p_delta(
    config: &SdpConfig,
    seed: u64,
    trials: Range<u64>,
    runner: &TrialRunner,
) -> Result<Proportion, SdpError> {
    if trials.is_empty() {
        return Err(SdpError::NoTrials);
    }
    let total = trials.end - trials.start;
    let hits = runner
        .map(trials, |t| root_reaches_boundary(config, TrialStreams::new(seed, t)))
        .into_iter()
        .filter(|&h| h)
        .count() as u64;
    Ok(Proportion::wilson(hits, total, SDP_LEVEL))
}

/// Paired per-trial indicators `(Z reaches, X ∨ Y reaches)` on shared streams.
pub fn paired_first_step_domination(
    config: &SdpConfig,
    seed: u64,
    trials: Range<u64>,
    runner: &TrialRunner,
) -> Vec<(bool, bool)> {
    runner.map(trials, |t| {
        let s = TrialStreams::new(seed, t);
        let z = root_reaches_boundary(config, s);
        let xy = infinite_proxy(&LazyXOrY::new(config, s), VertexId::ROOT).expect("root is valid");
        (z, xy)
    })
}

/// One cell of a refresh scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub p: f64,
    pub delta: f64,
    pub n: u32,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ScanRow {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// Heuristic `n → ∞` limit of one refresh value's estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub delta: f64,
    /// Aitken Δ² limit of the three deepest estimates, clamped to
    /// `[0, last estimate]`; the last estimate itself with fewer than three depths.
    pub limit: f64,
    /// `limit` is within the Wilson half-width of the deepest estimate.
    pub zero_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaScan {
    pub r: u32,
    pub p: f64,
    pub rows: Vec<ScanRow>,
    pub extrapolations: Vec<Extrapolation>,
    /// Per depth, the largest refresh value whose estimates up to that depth
    /// extrapolate to zero; `None` when no grid value does.
    pub critical_delta: Vec<(u32, Option<f64>)>,
    /// Sufficient threshold `1 - p_c/p` for the binary tree, `None` otherwise.
    pub explicit_bound: Option<f64>,
    /// Either no positive grid value or every grid value is zero-consistent.
    pub grid_too_coarse: bool,
}

fn extrapolate(estimates: &[(f64, f64)]) -> (f64, bool) {
    let Some(&(last, half)) = estimates.last() else { return (0.0, true) };
    let limit = if estimates.len() < 3 {
        last
    } else {
        let k = estimates.len();
        let (a, b, c) = (estimates[k - 3].0, estimates[k - 2].0, estimates[k - 1].0);
        let denom = (c - b) - (b - a);
        if denom.abs() < 1e-12 {
            c
        } else {
            c - (c - b) * (c - b) / denom
        }
    };
    let limit = if limit.is_finite() { limit.clamp(0.0, last) } else { last };
    (limit, limit <= half)
}

/// δ-sweep of the root boundary-reach frequency of `Z`. Depths use
/// independent seeds; at a fixed depth all refresh values share streams,
/// which makes the estimates pathwise monotone in δ.
pub fn critical_delta_scan(
    r: u32,
    p: f64,
    n_list: &[u32],
    delta_grid: &[f64],
    trials: u64,
    seed: u64,
    runner: &TrialRunner,
) -> Result<DeltaScan, SdpError> {
    if n_list.is_empty() || delta_grid.is_empty() {
        return Err(SdpError::EmptyGrid);
    }
    if trials == 0 {
        return Err(SdpError::NoTrials);
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut deltas = delta_grid.to_vec();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    let mut rows = Vec::new();
    for &n in &ns {
        let topo = TreeTopology::new(r, n).map_err(|_| SdpError::TooLarge(u64::MAX))?;
        let configs = deltas
            .iter()
            .map(|&d| SdpConfig::probability(&topo, p, d))
            .collect::<Result<Vec<_>, _>>()?;
        configs[0].require_supercritical()?;
        let n_seed = derive_seed(seed, n as u64);
        let hits_per_trial = runner.map(0..trials, |t| {
            let s = TrialStreams::new(n_seed, t);
            configs.iter().map(|c| root_reaches_boundary(c, s)).collect::<Vec<bool>>()
        });
        for (j, &delta) in deltas.iter().enumerate() {
            let hits = hits_per_trial.iter().filter(|h| h[j]).count() as u64;
            let prop = Proportion::wilson(hits, trials, SDP_LEVEL);
            rows.push(ScanRow {
                p,
                delta,
                n,
                trials,
                estimate: prop.estimate,
                ci_low: prop.ci_low,
                ci_high: prop.ci_high,
            });
        }
    }
    let series = |delta: f64, max_n: u32| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|row| row.delta == delta && row.n <= max_n)
            .map(|row| (row.estimate, row.half_width()))
            .collect()
    };
    let max_n = *ns.last().expect("non-empty");
    let extrapolations: Vec<Extrapolation> = deltas
        .iter()
        .map(|&delta| {
            let (limit, zero_consistent) = extrapolate(&series(delta, max_n));
            Extrapolation { delta, limit, zero_consistent }
        })
        .collect();
    let critical_delta = ns
        .iter()
        .map(|&n| {
            let best = deltas
                .iter()
                .copied()
                .filter(|&d| extrapolate(&series(d, n)).1)
                .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
            (n, best)
        })
        .collect();
    let positive: Vec<&Extrapolation> = extrapolations.iter().filter(|e| e.delta > 0.0).collect();
    let grid_too_coarse = positive.is_empty()
        || positive.iter().all(|e| e.zero_consistent)
        || positive.iter().all(|e| !e.zero_consistent);
    Ok(DeltaScan {
        r,
        p,
        rows,
        extrapolations,
        critical_delta,
        explicit_bound: (r == 2).then(|| 1.0 - critical_probability(2) / p),
        grid_too_coarse,
    })
}

impl DeltaScan {
    /// CSV with header `p,delta,n,trials,estimate,ci_low,ci_high`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "p,delta,n,trials,estimate,ci_low,ci_high")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.p, row.delta, row.n, row.trials, row.estimate, row.ci_low, row.ci_high
            )?;
        }
        Ok(())
    }

    pub fn row(&self, n: u32, delta: f64) -> Option<&ScanRow> {
        self.rows.iter().find(|r| r.n == n && r.delta == delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(n: u32) -> TreeTopology {
        TreeTopology::new(2, n).unwrap()
    }

    #[test]
    fn parametrizations_convert() {
        let t = topo(4);
        let a = SdpConfig::time(&t, 1.0, 0.2).unwrap();
        assert!((a.p() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((a.delta() - (1.0 - (-0.2f64).exp())).abs() < 1e-15);
        let b = SdpConfig::probability(&t, a.p(), a.delta()).unwrap();
        assert!((b.tau() - 1.0).abs() < 1e-12 && (b.eps() - 0.2).abs() < 1e-12);
        assert!(SdpConfig::probability(&t, 1.5, 0.1).is_err());
        assert!(SdpConfig::time(&t, 1.0, -0.1).is_err());
        assert!(SdpConfig::probability(&t, 0.4, 0.1).unwrap().require_supercritical().is_err());
    }

    #[test]
    fn zero_refresh_gives_x_star() {
        let t = topo(10);
        for trial in 0..20 {
            let s = TrialStreams::new(1, trial);
            let c = SdpConfig::probability(&t, 0.75, 0.0).unwrap();
            let real = realize(&c, &s).unwrap();
            assert_eq!(real.z, real.x_star);
            assert!(real.y.is_clear());
            real.check_invariants().unwrap();
            assert!(!real.root_reaches_boundary());
            let ct = SdpConfig::time(&t, 1.2, 0.0).unwrap();
            let rt = realize(&ct, &s).unwrap();
            assert_eq!(rt.z, rt.x_star);
        }
    }

    #[test]
    fn full_occupation_destroys_everything() {
        let t = topo(8);
        let c = SdpConfig::probability(&t, 1.0, 0.3).unwrap();
        let real = realize(&c, &TrialStreams::new(2, 0)).unwrap();
        assert!(real.x.is_full());
        assert!(real.x_star.is_clear());
        assert_eq!(real.z, real.y);
        real.check_invariants().unwrap();
    }

    #[test]
    fn full_refresh_occupies_everything() {
        let t = topo(8);
        let c = SdpConfig::probability(&t, 0.75, 1.0).unwrap();
        let p = estimate_theta_p_delta(&c, 3, 0..50, &TrialRunner::sequential()).unwrap();
        assert_eq!(p.estimate, 1.0);
    }

    #[test]
    fn invariant_checker_detects_corruption() {
        let t = topo(8);
        let c = SdpConfig::probability(&t, 0.75, 0.2).unwrap();
        let mut real = realize(&c, &TrialStreams::new(4, 0)).unwrap();
        real.check_invariants().unwrap();
        let v = real.x.ones().find(|&v| !real.x_star.contains(v)).unwrap();
        real.x_star.insert(v);
        assert!(real.check_invariants().is_err());
    }

    #[test]
    fn lazy_and_materialized_agree() {
        let t = topo(9);
        for (p, d) in [(0.75, 0.2), (0.6, 0.4), (0.9, 0.05)] {
            let c = SdpConfig::probability(&t, p, d).unwrap();
            for trial in 0..40 {
                let s = TrialStreams::new(5, trial);
                let real = realize(&c, &s).unwrap();
                real.check_invariants().unwrap();
                let lazy = LazyZ::new(&c, s);
                for v in t.vertices() {
                    assert_eq!(lazy.is_occupied(v), real.z.contains(v.index()), "v={v}");
                }
                assert_eq!(root_reaches_boundary(&c, s), real.root_reaches_boundary());
            }
        }
    }

    #[test]
    fn time_refresh_uses_second_interval() {
        let t = topo(6);
        let c = SdpConfig::time(&t, 1.0, 0.5).unwrap();
        let s = TrialStreams::new(9, 0);
        let real = realize(&c, &s).unwrap();
        for v in t.vertices() {
            let arrivals: Vec<f64> = s.arrivals(v, StreamKind::Growth).map(|(_, a)| a).take_while(|&a| a <= 2.0).collect();
            assert_eq!(real.x.contains(v.index()), arrivals.first().is_some_and(|&a| a <= 1.0));
            assert_eq!(real.y.contains(v.index()), arrivals.iter().any(|&a| a > 1.0 && a <= 1.5));
        }
    }

    #[test]
    fn domination_holds_pathwise() {
        let t = topo(10);
        let c = SdpConfig::probability(&t, 0.75, 0.2).unwrap();
        for (z, xy) in paired_first_step_domination(&c, 6, 0..300, &TrialRunner::sequential()) {
            assert!(!z || xy);
        }
    }

    #[test]
    fn scan_zero_row_and_csv() {
        let scan = critical_delta_scan(2, 0.75, &[6, 8], &[0.0, 0.5], 200, 1, &TrialRunner::sequential()).unwrap();
        for row in scan.rows.iter().filter(|r| r.delta == 0.0) {
            assert_eq!(row.estimate, 0.0);
        }
        assert!((scan.explicit_bound.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let mut out = Vec::new();
        scan.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("p,delta,n,trials,estimate,ci_low,ci_high\n"));
        assert_eq!(text.lines().count(), 5);
        assert!(critical_delta_scan(2, 0.4, &[6], &[0.1], 10, 1, &TrialRunner::sequential()).is_err());
    }

    #[test]
    fn aitken_extrapolation() {
        // geometric decay to 0.1
        let xs: Vec<(f64, f64)> = (0..4).map(|k| (0.1 + 0.5f64.powi(k), 0.01)).collect();
        let (limit, zero) = extrapolate(&xs);
        assert!((limit - 0.1).abs() < 1e-12);
        assert!(!zero);
        let ys: Vec<(f64, f64)> = (0..4).map(|k| (0.3 * 0.5f64.powi(k), 0.02)).collect();
        assert!(extrapolate(&ys).1);
    }
}
