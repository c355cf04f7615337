//! Canonically coupled (forest-fire, pure growth) trial harness: destruction
//! of proxy-infinite clusters after `τ_n`, the side of `τ` on which they
//! burn, and the fire statistics of the root cluster at `τ_n`.
//!
//! Each depth uses its own derived seed; trial `t` of depth `n` drives the
//! engine and the pure growth field from the same `TrialStreams`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{critical_time, tau_n, LambdaSchedule, ScaleFn, ScheduleError};
use crate::engine::{fire_statistics, run, CouplingError, EngineError, QueryError, RunOptions};
use crate::growth::{cluster_of, infinite_proxy, GrowthSnapshot, LazyGrowth};
use crate::parallel::TrialRunner;
use crate::rng::{derive_seed, TrialStreams};
use crate::stats::{mann_kendall, quantile, Proportion};
use crate::topology::{TopologyError, TreeTopology, VertexId};

pub const SCHEMA_VERSION: u32 = 1;
/// Confidence level of every reported interval.
pub const CI_LEVEL: f64 = 0.95;
/// One-sided Mann–Kendall level of every trend verdict.
pub const TREND_LEVEL: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("τ = {tau} must exceed t_c = {t_c}")]
    NotSupercritical { tau: f64, t_c: f64 },
    #[error("δ = {0} must be positive and finite")]
    BadDelta(f64),
    #[error("schedule time {schedule} differs from experiment τ = {tau}")]
    ScheduleMismatch { schedule: f64, tau: f64 },
    #[error("depth list is empty")]
    NoDepths,
    #[error("depth {0} must be at least 1")]
    ZeroDepth(u32),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("E must not be empty")]
    EmptySet,
    #[error("vertex {v} of E is not in B_{n}")]
    OutsideTree { v: VertexId, n: u32 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("trial {trial} at n={n}: {source}")]
    Engine { n: u32, trial: u64, source: EngineError },
    #[error("trial {trial} at n={n}: {source}")]
    Query { n: u32, trial: u64, source: QueryError },
    #[error("trial {trial} at n={n}: {source}")]
    Coupling { n: u32, trial: u64, source: CouplingError },
}

/// Configuration of a coupled experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceExperiment {
    pub r: u32,
    pub tau: f64,
    pub delta: f64,
    /// Watched vertex set `E`.
    pub e: Vec<VertexId>,
    pub schedule: LambdaSchedule,
    /// The scale `f(n)` defining `τ_n`.
    pub f: ScaleFn,
    pub n_list: Vec<u32>,
    pub trials: u64,
    pub seed: u64,
}

impl ConvergenceExperiment {
    /// `λ(n) = g(n) / m(τ)^n` with `E = {root}`.
    pub fn with_g(r: u32, tau: f64, delta: f64, g: ScaleFn, f: ScaleFn, n_list: Vec<u32>, trials: u64, seed: u64) -> Result<Self, ExperimentError> {
        let exp = Self {
            r,
            tau,
            delta,
            e: vec![VertexId::ROOT],
            schedule: LambdaSchedule::g_over_m(r, tau, g)?,
            f,
            n_list,
            trials,
            seed,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let t_c = critical_time(self.r);
        if !(self.tau > t_c && self.tau.is_finite()) {
            return Err(ExperimentError::NotSupercritical { tau: self.tau, t_c });
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(ExperimentError::BadDelta(self.delta));
        }
        if let Some(s) = self.schedule.tau() {
            if s != self.tau {
                return Err(ExperimentError::ScheduleMismatch { schedule: s, tau: self.tau });
            }
        }
        self.f.validate()?;
        if self.trials == 0 {
            return Err(ExperimentError::NoTrials);
        }
        if self.e.is_empty() {
            return Err(ExperimentError::EmptySet);
        }
        let n_min = *self.n_list.iter().min().ok_or(ExperimentError::NoDepths)?;
        if n_min == 0 {
            return Err(ExperimentError::ZeroDepth(0));
        }
        let topo = TreeTopology::new(self.r, n_min)?;
        for &v in &self.e {
            if !topo.contains(v) {
                return Err(ExperimentError::OutsideTree { v, n: n_min });
            }
        }
        for &n in &self.n_list {
            TreeTopology::new(self.r, n)?;
        }
        Ok(())
    }

    fn depths(&self) -> Vec<u32> {
        let mut ns = self.n_list.clone();
        ns.sort_unstable();
        ns.dedup();
        ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TimingVariant {
    /// `g ≡ 1`-type schedules: destruction expected just after `τ`.
    After,
    /// `g = exp(n^α)`: destruction expected just before `τ`.
    Before,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    DestructionTiming { variant: TimingVariant },
    FireScaling,
}

/// Depth skipped because `τ_n` is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDepth {
    pub n: u32,
    pub reason: String,
}

/// First destructions in `(τ-δ, τ+δ)` of watched vertices proxy-infinite at `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingCounts {
    /// (trial, vertex) pairs proxy-infinite at `τ`.
    pub candidates: u64,
    pub destroyed: u64,
    pub before_tau: u64,
    pub after_tau: u64,
    /// `after_tau / destroyed` or `before_tau / destroyed`, per variant.
    pub fraction: Option<Proportion>,
}

/// 5%, 50% and 95% sample quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Quantiles {
    fn of(xs: &[f64]) -> Option<Self> {
        (!xs.is_empty()).then(|| Self {
            q05: quantile(xs, 0.05),
            q50: quantile(xs, 0.5),
            q95: quantile(xs, 0.95),
        })
    }
}

/// Normalized fire statistics of the root cluster at `τ_n`, over trials in
/// which it reaches generation n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingQuantiles {
    /// `ι · f(n)`
    pub iota_f: Quantiles,
    /// `N / f(n)`
    pub count_over_f: Quantiles,
    /// `K / ln n`
    pub ignition_depth_over_log: Quantiles,
    /// `J / (f(n) ln n)`
    pub destruction_depth_over_f_log: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub n: u32,
    pub lambda: f64,
    pub tau_n: f64,
    /// `ln g(n) / n`, i.e. `ln` of the n-th root of `λ(n) m(τ)^n`.
    pub log_root_g: f64,
    pub trials: u64,
    /// Trials with some vertex of `E` proxy-infinite at `τ_n`.
    pub proxy_trials: u64,
    /// Forest fire equals pure growth on `E` throughout `[0, τ_n]`.
    pub coupled: Proportion,
    /// Every proxy-infinite vertex of `E` burns in `(τ_n, τ_n + δ)`.
    pub destroyed: Proportion,
    pub joint: Proportion,
    /// `destroyed` among `proxy_trials`.
    pub conditioned: Option<Proportion>,
    pub timing: TimingCounts,
    pub scaling: Option<ScalingQuantiles>,
    /// Trials violating `|S \ C| ≤ N (r^{J+1} - 1)/(r - 1)`.
    pub bound_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub series: String,
    /// `increasing`, `decreasing`, `not_increasing` or `not_decreasing`.
    pub expectation: String,
    pub s: i64,
    pub z: f64,
    pub p_increasing: f64,
    pub p_decreasing: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: u32,
    #[serde(flatten)]
    pub kind: ExperimentKind,
    pub config: ConvergenceExperiment,
    pub schedule_label: String,
    pub f_label: String,
    pub rows: Vec<DepthRow>,
    pub skipped: Vec<SkippedDepth>,
    pub trends: Vec<TrendTest>,
    pub checks: Vec<Check>,
}

impl ExperimentSummary {
    pub fn row(&self, n: u32) -> Option<&DepthRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn trend(&self, series: &str) -> Option<&TrendTest> {
        self.trends.iter().find(|t| t.series == series)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.trends.iter().all(|t| t.passed) && self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// The per-depth table as CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "n,lambda,tau_n,trials,proxy_trials,coupled,destroyed,joint,joint_ci_low,joint_ci_high,\
             conditioned,conditioned_ci_low,conditioned_ci_high,timing_destroyed,before_tau,after_tau,bound_violations"
        )?;
        for row in &self.rows {
            let (c, cl, ch) = row
                .conditioned
                .map_or((String::new(), String::new(), String::new()), |p| {
                    (p.estimate.to_string(), p.ci_low.to_string(), p.ci_high.to_string())
                });
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                row.n,
                row.lambda,
                row.tau_n,
                row.trials,
                row.proxy_trials,
                row.coupled.estimate,
                row.destroyed.estimate,
                row.joint.estimate,
                row.joint.ci_low,
                row.joint.ci_high,
                c,
                cl,
                ch,
                row.timing.destroyed,
                row.timing.before_tau,
                row.timing.after_tau,
                row.bound_violations
            )?;
        }
        Ok(())
    }

    /// `n,frequency,ci_low,ci_high` of the headline frequency: the joint
    /// event, the timing fraction, or the root-cluster conditioning rate.
    pub fn write_plot_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,frequency,ci_low,ci_high")?;
        for row in &self.rows {
            let p = match self.kind {
                ExperimentKind::Convergence => Some(row.joint),
                ExperimentKind::DestructionTiming { .. } => row.timing.fraction,
                ExperimentKind::FireScaling => Some(Proportion::wilson(row.proxy_trials, row.trials, CI_LEVEL)),
            };
            match p {
                Some(p) => writeln!(out, "{},{},{},{}", row.n, p.estimate, p.ci_low, p.ci_high)?,
                None => writeln!(out, "{},,,", row.n)?,
            }
        }
        Ok(())
    }
}

struct Depth {
    n: u32,
    topo: TreeTopology,
    lambda: f64,
    tau_n: f64,
    log_root_g: f64,
    seed: u64,
}

fn resolve_depths(exp: &ConvergenceExperiment) -> Result<(Vec<Depth>, Vec<SkippedDepth>), ExperimentError> {
    exp.validate()?;
    let mut depths = Vec::new();
    let mut skipped = Vec::new();
    let ln_m = crate::analytics::mean_offspring(exp.r, exp.tau).ln();
    for n in exp.depths() {
        let resolved = exp.schedule.lambda(n).and_then(|lambda| Ok((lambda, tau_n(&exp.schedule, &exp.f, n)?)));
        match resolved {
            Ok((lambda, tn)) => depths.push(Depth {
                n,
                topo: TreeTopology::new(exp.r, n)?,
                lambda,
                tau_n: tn,
                log_root_g: (exp.schedule.ln_lambda(n)? + n as f64 * ln_m) / n as f64,
                seed: derive_seed(exp.seed, n as u64),
            }),
            Err(e) => skipped.push(SkippedDepth { n, reason: e.to_string() }),
        }
    }
    Ok((depths, skipped))
}

#[derive(Debug, Clone, Default)]
struct CoupledTrial {
    any_proxy: bool,
    coupled: bool,
    destroyed: bool,
    /// First destruction in `(τ-δ, τ+δ)` per vertex proxy-infinite at `τ`.
    first_in_window: Vec<Option<f64>>,
}

fn coupled_trial(exp: &ConvergenceExperiment, d: &Depth, trial: u64) -> Result<CoupledTrial, ExperimentError> {
    let streams = TrialStreams::new(d.seed, trial);
    let growth = LazyGrowth::new(&d.topo, streams, d.tau_n);
    let proxies = exp
        .e
        .iter()
        .map(|&z| infinite_proxy(&growth, z))
        .collect::<Result<Vec<bool>, _>>()?;
    let at_tau = LazyGrowth::new(&d.topo, streams, exp.tau);
    let timing_proxies = exp
        .e
        .iter()
        .map(|&z| infinite_proxy(&at_tau, z))
        .collect::<Result<Vec<bool>, _>>()?;
    let horizon = (d.tau_n + exp.delta).max(exp.tau + exp.delta);
    let state = run(&d.topo, streams, d.lambda, horizon, &RunOptions::watching(exp.e.clone()))
        .map_err(|source| ExperimentError::Engine { n: d.n, trial, source })?;
    let query = |source| ExperimentError::Query { n: d.n, trial, source };
    let mut out = CoupledTrial { coupled: true, destroyed: true, ..CoupledTrial::default() };
    for ((&z, &proxy), &timing_proxy) in exp.e.iter().zip(&proxies).zip(&timing_proxies) {
        if !state.coupled_until(z, d.tau_n).map_err(query)? {
            out.coupled = false;
        }
        if proxy {
            out.any_proxy = true;
            if state.destruction_times(z, d.tau_n, d.tau_n + exp.delta).map_err(query)?.is_empty() {
                out.destroyed = false;
            }
        }
        if timing_proxy {
            let window = state.destruction_times(z, exp.tau - exp.delta, exp.tau + exp.delta).map_err(query)?;
            out.first_in_window.push(window.first().copied());
        }
    }
    Ok(out)
}

fn coupled_row(exp: &ConvergenceExperiment, d: &Depth, variant: TimingVariant, runner: &TrialRunner) -> Result<DepthRow, ExperimentError> {
    let trials = runner.try_map(0..exp.trials, |t| coupled_trial(exp, d, t))?;
    let count = |f: &dyn Fn(&CoupledTrial) -> bool| trials.iter().filter(|t| f(t)).count() as u64;
    let total = exp.trials;
    let proxy_trials = count(&|t| t.any_proxy);
    let conditioned_hits = count(&|t| t.any_proxy && t.destroyed);
    let mut timing = TimingCounts { candidates: 0, destroyed: 0, before_tau: 0, after_tau: 0, fraction: None };
    for first in trials.iter().flat_map(|t| &t.first_in_window) {
        timing.candidates += 1;
        if let Some(s) = *first {
            timing.destroyed += 1;
            if s > exp.tau {
                timing.after_tau += 1;
            } else if s < exp.tau {
                timing.before_tau += 1;
            }
        }
    }
    if timing.destroyed > 0 {
        let hits = match variant {
            TimingVariant::After => timing.after_tau,
            TimingVariant::Before => timing.before_tau,
        };
        timing.fraction = Some(Proportion::wilson(hits, timing.destroyed, CI_LEVEL));
    }
    Ok(DepthRow {
        n: d.n,
        lambda: d.lambda,
        tau_n: d.tau_n,
        log_root_g: d.log_root_g,
        trials: total,
        proxy_trials,
        coupled: Proportion::wilson(count(&|t| t.coupled), total, CI_LEVEL),
        destroyed: Proportion::wilson(count(&|t| t.destroyed), total, CI_LEVEL),
        joint: Proportion::wilson(count(&|t| t.coupled && t.destroyed), total, CI_LEVEL),
        conditioned: (proxy_trials > 0).then(|| Proportion::wilson(conditioned_hits, proxy_trials, CI_LEVEL)),
        timing,
        scaling: None,
        bound_violations: 0,
    })
}

fn trend(series: &str, expectation: &str, xs: &[f64]) -> TrendTest {
    let mk = mann_kendall(xs);
    let passed = match expectation {
        "increasing" => mk.increasing_at(TREND_LEVEL),
        "decreasing" => mk.decreasing_at(TREND_LEVEL),
        "not_increasing" => !mk.increasing_at(TREND_LEVEL),
        "not_decreasing" => !mk.decreasing_at(TREND_LEVEL),
        other => unreachable!("unknown expectation {other}"),
    };
    TrendTest {
        series: series.to_owned(),
        expectation: expectation.to_owned(),
        s: mk.s,
        z: mk.z,
        p_increasing: mk.p_increasing,
        p_decreasing: mk.p_decreasing,
        passed,
    }
}

/// `ln g(n)/n` must be non-increasing on the grid (the n-th root of `g` drifting to 1).
fn root_g_check(rows: &[DepthRow]) -> Check {
    let values: Vec<f64> = rows.iter().map(|r| r.log_root_g).collect();
    let passed = values.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Check {
        name: "root_g_non_increasing".into(),
        passed,
        detail: format!("ln g(n)/n = {values:?}"),
    }
}

fn summary(exp: &ConvergenceExperiment, kind: ExperimentKind, rows: Vec<DepthRow>, skipped: Vec<SkippedDepth>) -> ExperimentSummary {
    ExperimentSummary {
        schema_version: SCHEMA_VERSION,
        kind,
        config: exp.clone(),
        schedule_label: exp.schedule.label(),
        f_label: exp.f.label(),
        rows,
        skipped,
        trends: Vec::new(),
        checks: Vec::new(),
    }
}

/// Frequencies, per depth, of: coupling on `E` through `τ_n` (checked
/// exactly against the pure growth path), destruction of every
/// proxy-infinite vertex of `E` in `(τ_n, τ_n + δ)`, both jointly, and the
/// destruction frequency conditioned on some vertex being proxy-infinite.
pub fn run_convergence(exp: &ConvergenceExperiment, runner: &TrialRunner) -> Result<ExperimentSummary, ExperimentError> {
    let (depths, skipped) = resolve_depths(exp)?;
    let rows = depths
        .iter()
        .map(|d| coupled_row(exp, d, TimingVariant::After, runner))
        .collect::<Result<Vec<_>, _>>()?;
    let mut s = summary(exp, ExperimentKind::Convergence, rows, skipped);
    let joint: Vec<f64> = s.rows.iter().map(|r| r.joint.estimate).collect();
    s.trends.push(trend("joint", "increasing", &joint));
    let conditioned: Vec<f64> = s.rows.iter().filter_map(|r| r.conditioned.map(|p| p.estimate)).collect();
    s.trends.push(trend("conditioned", "increasing", &conditioned));
    s.checks.push(root_g_check(&s.rows));
    Ok(s)
}

/// On which side of `τ` the vertices of `E` that are proxy-infinite at `τ`
/// first burn within `(τ-δ, τ+δ)`. `Before` additionally checks `τ_n < τ` on the grid and
/// that `(τ - τ_n) f(n)` increases.
pub fn run_destruction_timing(
    exp: &ConvergenceExperiment,
    variant: TimingVariant,
    runner: &TrialRunner,
) -> Result<ExperimentSummary, ExperimentError> {
    let (depths, skipped) = resolve_depths(exp)?;
    let rows = depths
        .iter()
        .map(|d| coupled_row(exp, d, variant, runner))
        .collect::<Result<Vec<_>, _>>()?;
    let mut s = summary(exp, ExperimentKind::DestructionTiming { variant }, rows, skipped);
    let fractions: Vec<f64> = s.rows.iter().filter_map(|r| r.timing.fraction.map(|p| p.estimate)).collect();
    let name = match variant {
        TimingVariant::After => "fraction_after_tau",
        TimingVariant::Before => "fraction_before_tau",
    };
    s.trends.push(trend(name, "increasing", &fractions));
    s.checks.push(root_g_check(&s.rows));
    if variant == TimingVariant::Before {
        let (below, scaled) = before_tau_checks(exp, &s.rows);
        s.checks.push(below);
        s.checks.push(scaled);
    }
    Ok(s)
}

fn before_tau_checks(exp: &ConvergenceExperiment, rows: &[DepthRow]) -> (Check, Check) {
    let gaps: Vec<f64> = rows.iter().map(|r| exp.tau - r.tau_n).collect();
    let scaled: Vec<f64> = rows.iter().zip(&gaps).map(|(r, g)| g * exp.f.value(r.n)).collect();
    (
        Check {
            name: "tau_n_below_tau".into(),
            passed: !gaps.is_empty() && gaps.iter().all(|&g| g > 0.0),
            detail: format!("tau - tau_n = {gaps:?}"),
        },
        Check {
            name: "scaled_gap_increasing".into(),
            passed: !scaled.is_empty() && scaled.windows(2).all(|w| w[1] > w[0]),
            detail: format!("(tau - tau_n) f(n) = {scaled:?}"),
        },
    )
}

/// Fire statistics of one accepted trial.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ScalingTrial {
    iota: f64,
    ignitions: u64,
    ignition_depth: i64,
    destruction_depth: i64,
    lost: u64,
    bound: f64,
}

/// `N (r^{J+1} - 1)/(r - 1)`, zero when `J = -1`.
fn loss_bound(r: u32, ignitions: u64, destruction_depth: i64) -> f64 {
    let levels = (destruction_depth + 1) as i32;
    let r = r as f64;
    ignitions as f64 * (r.powi(levels) - 1.0) / (r - 1.0)
}

fn scaling_trial(d: &Depth, x: VertexId, trial: u64) -> Result<Option<ScalingTrial>, ExperimentError> {
    let streams = TrialStreams::new(d.seed, trial);
    let growth = LazyGrowth::new(&d.topo, streams, d.tau_n);
    let Some(cluster) = cluster_of(&growth, x)? else { return Ok(None) };
    if !cluster.touches_boundary {
        return Ok(None);
    }
    let state = run(&d.topo, streams, d.lambda, d.tau_n, &RunOptions::watching(cluster.members.clone()))
        .map_err(|source| ExperimentError::Engine { n: d.n, trial, source })?;
    let stats = fire_statistics(&state, &cluster, &streams, d.tau_n)
        .map_err(|source| ExperimentError::Coupling { n: d.n, trial, source })?;
    let mut bits = fixedbitset::FixedBitSet::with_capacity(d.topo.vertex_count() as usize);
    for &z in &cluster.members {
        if state.final_occupancy().contains(z.index()) {
            bits.insert(z.index());
        }
    }
    let surviving = GrowthSnapshot::from_bits(&d.topo, d.tau_n, bits).expect("sizes match");
    let kept = cluster_of(&surviving, x)?.map_or(0, |c| c.size);
    Ok(Some(ScalingTrial {
        iota: stats.iota,
        ignitions: stats.ignitions,
        ignition_depth: stats.ignition_depth,
        destruction_depth: stats.destruction_depth,
        lost: cluster.size - kept,
        bound: loss_bound(d.topo.r(), stats.ignitions, stats.destruction_depth),
    }))
}

/// Over trials in which the pure growth cluster `S` of the first vertex of
/// `E` at `τ_n` reaches generation n: quantiles of `ι f(n)`, `N / f(n)`,
/// `K / ln n` and `J / (f(n) ln n)`, and the per-trial bound on the part of
/// `S` missing from the forest-fire cluster `C` at `τ_n`.
pub fn run_fire_scaling(exp: &ConvergenceExperiment, runner: &TrialRunner) -> Result<ExperimentSummary, ExperimentError> {
    let (depths, skipped) = resolve_depths(exp)?;
    let x = exp.e[0];
    let mut rows = Vec::new();
    for d in &depths {
        let accepted: Vec<ScalingTrial> = runner
            .try_map(0..exp.trials, |t| scaling_trial(d, x, t))?
            .into_iter()
            .flatten()
            .collect();
        let f = exp.f.value(d.n);
        let ln_n = (d.n as f64).ln();
        let collect = |g: &dyn Fn(&ScalingTrial) -> f64| accepted.iter().map(g).collect::<Vec<f64>>();
        let scaling = Quantiles::of(&collect(&|t| t.iota * f)).map(|iota_f| ScalingQuantiles {
            iota_f,
            count_over_f: Quantiles::of(&collect(&|t| t.ignitions as f64 / f)).expect("non-empty"),
            ignition_depth_over_log: Quantiles::of(&collect(&|t| t.ignition_depth as f64 / ln_n)).expect("non-empty"),
            destruction_depth_over_f_log: Quantiles::of(&collect(&|t| t.destruction_depth as f64 / (f * ln_n)))
                .expect("non-empty"),
        });
        let accepted_count = accepted.len() as u64;
        let na = Proportion::wilson(0, 0, CI_LEVEL);
        rows.push(DepthRow {
            n: d.n,
            lambda: d.lambda,
            tau_n: d.tau_n,
            log_root_g: d.log_root_g,
            trials: exp.trials,
            proxy_trials: accepted_count,
            coupled: na,
            destroyed: na,
            joint: na,
            conditioned: None,
            timing: TimingCounts { candidates: 0, destroyed: 0, before_tau: 0, after_tau: 0, fraction: None },
            scaling,
            bound_violations: accepted.iter().filter(|t| t.lost as f64 > t.bound).count() as u64,
        });
    }
    let mut s = summary(exp, ExperimentKind::FireScaling, rows, skipped);
    let q = |g: &dyn Fn(&ScalingQuantiles) -> f64| -> Vec<f64> { s.rows.iter().filter_map(|r| r.scaling.as_ref().map(g)).collect() };
    let iota = q(&|x| x.iota_f.q05);
    let count = q(&|x| x.count_over_f.q95);
    let k = q(&|x| x.ignition_depth_over_log.q95);
    let j = q(&|x| x.destruction_depth_over_f_log.q95);
    let trends = vec![
        trend("iota_f_q05", "not_decreasing", &iota),
        trend("count_over_f_q95", "not_increasing", &count),
        trend("ignition_depth_over_log_q95", "not_increasing", &k),
        trend("destruction_depth_over_f_log_q95", "not_increasing", &j),
    ];
    let violations: u64 = s.rows.iter().map(|r| r.bound_violations).sum();
    let checks = vec![
        Check {
            name: "loss_bound".into(),
            passed: violations == 0,
            detail: format!("{violations} violating trials"),
        },
        Check {
            name: "iota_f_q05_positive".into(),
            passed: !iota.is_empty() && iota.iter().all(|&v| v > 0.0),
            detail: format!("{iota:?}"),
        },
    ];
    s.trends = trends;
    s.checks = checks;
    Ok(s)
}

/// Engine estimate of `P[η_{t,v} = 1]` for each `t` in `times`, one engine
/// run per trial up to the largest time.
pub fn occupancy_marginals(
    topo: &TreeTopology,
    lambda: f64,
    v: VertexId,
    times: &[f64],
    seed: u64,
    trials: u64,
    runner: &TrialRunner,
) -> Result<Vec<Proportion>, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::NoTrials);
    }
    topo.check(v)?;
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let n = topo.depth();
    let hits = runner.try_map(0..trials, |trial| {
        let state = run(topo, TrialStreams::new(seed, trial), lambda, horizon, &RunOptions::watching(vec![v]))
            .map_err(|source| ExperimentError::Engine { n, trial, source })?;
        times
            .iter()
            .map(|&t| state.occupancy_at(t, v))
            .collect::<Result<Vec<bool>, _>>()
            .map_err(|source| ExperimentError::Query { n, trial, source })
    })?;
    Ok((0..times.len())
        .map(|i| Proportion::wilson(hits.iter().filter(|h| h[i]).count() as u64, trials, CI_LEVEL))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(g: ScaleFn, n_list: Vec<u32>, trials: u64) -> ConvergenceExperiment {
        ConvergenceExperiment::with_g(2, 1.0, 0.3, g, ScaleFn::sqrt(), n_list, trials, 11).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ConvergenceExperiment::with_g(2, 0.5, 0.3, ScaleFn::ONE, ScaleFn::sqrt(), vec![8], 10, 1).is_err());
        assert!(ConvergenceExperiment::with_g(2, 1.0, 0.0, ScaleFn::ONE, ScaleFn::sqrt(), vec![8], 10, 1).is_err());
        assert!(ConvergenceExperiment::with_g(2, 1.0, 0.3, ScaleFn::ONE, ScaleFn::sqrt(), vec![], 10, 1).is_err());
        let mut exp = small(ScaleFn::ONE, vec![4, 6], 10);
        exp.e = vec![VertexId(31)];
        assert!(matches!(exp.validate(), Err(ExperimentError::OutsideTree { .. })));
        exp.e = vec![VertexId(30)];
        exp.validate().unwrap();
    }

    #[test]
    fn single_vertex_marginal() {
        let topo = TreeTopology::new(2, 0).unwrap();
        let p = occupancy_marginals(&topo, 1.0, VertexId::ROOT, &[0.5, 2.0], 1, 4000, &TrialRunner::sequential()).unwrap();
        for (prop, t) in p.iter().zip([0.5f64, 2.0]) {
            let exact = 0.5 * (1.0 - (-2.0 * t).exp());
            assert!((prop.estimate - exact).abs() < 4.0 * prop.std_error());
        }
    }

    #[test]
    fn loss_bound_values() {
        assert_eq!(loss_bound(2, 0, -1), 0.0);
        assert_eq!(loss_bound(2, 3, -1), 0.0);
        assert_eq!(loss_bound(2, 1, 0), 1.0);
        assert_eq!(loss_bound(2, 2, 2), 14.0);
        assert_eq!(loss_bound(3, 1, 1), 4.0);
    }

    #[test]
    fn negligible_ignition_keeps_coupling() {
        let mut exp = small(ScaleFn::ONE, vec![4, 6], 100);
        exp.schedule = LambdaSchedule::constant(2, 1e-30).unwrap();
        exp.f = ScaleFn::Constant { value: 1e-29 };
        let s = run_convergence(&exp, &TrialRunner::sequential()).unwrap();
        for row in &s.rows {
            assert_eq!(row.coupled.estimate, 1.0);
            // nothing burns, so part (b) holds exactly when the root is not proxy-infinite
            assert_eq!(row.destroyed.successes, row.trials - row.proxy_trials);
        }
    }

    #[test]
    fn undefined_tau_n_is_skipped() {
        let mut exp = small(ScaleFn::ONE, vec![4, 6], 5);
        exp.schedule = LambdaSchedule::constant(2, 1e-30).unwrap();
        let s = run_convergence(&exp, &TrialRunner::sequential()).unwrap();
        assert!(s.rows.is_empty());
        assert_eq!(s.skipped.len(), 2);
    }

    #[test]
    fn summaries_are_deterministic_across_workers() {
        let exp = small(ScaleFn::ONE, vec![6, 8], 60);
        let a = run_convergence(&exp, &TrialRunner::new(1).unwrap()).unwrap();
        let b = run_convergence(&exp, &TrialRunner::new(3).unwrap()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
        let mut plot = Vec::new();
        a.write_plot_csv(&mut plot).unwrap();
        assert!(String::from_utf8(plot).unwrap().starts_with("n,frequency,ci_low,ci_high\n"));
    }

    #[test]
    fn scaling_bound_holds_on_small_trees() {
        let exp = small(ScaleFn::ONE, vec![6, 8, 10], 200);
        let s = run_fire_scaling(&exp, &TrialRunner::sequential()).unwrap();
        assert!(s.check("loss_bound").unwrap().passed);
        for row in &s.rows {
            assert!(row.proxy_trials > 0);
            let q = row.scaling.unwrap();
            assert!(q.iota_f.q05 <= q.iota_f.q95);
        }
    }

    #[test]
    fn before_schedule_places_tau_n_below_tau() {
        let exp = ConvergenceExperiment::with_g(2, 1.0, 0.3, ScaleFn::ExpPower { alpha: 0.6 }, ScaleFn::sqrt(), vec![8, 10, 12], 20, 3).unwrap();
        let s = run_destruction_timing(&exp, TimingVariant::Before, &TrialRunner::sequential()).unwrap();
        assert!(s.check("tau_n_below_tau").unwrap().passed);
        assert!(s.check("scaled_gap_increasing").unwrap().passed);
    }
}
