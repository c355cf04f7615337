use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use treefire::analytics::{classify_regime, theta_fixed_point, CtmcOracle, OccupancyQuery};
use treefire::analytics::ctmc::MAX_ORACLE_VERTICES;
use treefire::engine::{self, EngineError, GrowthScheduling, LogDetail, RunOptions, ENGINE_MAX_VERTICES};
use treefire::experiments::{self, ConvergenceExperiment, ExperimentError, TimingVariant};
use treefire::growth::{census, cluster_of, GrowthSnapshot, SNAPSHOT_MAX_VERTICES};
use treefire::parallel::TrialRunner;
use treefire::rng::TrialStreams;
use treefire::sdp::{self, SdpConfig, REALIZE_MAX_VERTICES};
use treefire::{TreeTopology, VertexId};

use crate::config::{self, ConfigFile, ENV_SEED, ENV_WORKERS};
use crate::forms::{build_schedule, parse_scale};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub struct Context<'a> {
    pub file: Option<&'a ConfigFile>,
    pub dry_run: bool,
}

/// Resolves the layered config; `None` after a dry run.
fn resolve<T>(ctx: &Context, section: &str, defaults: T, flags: &T) -> Result<Option<T>, CliError>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let resolved = config::resolve(section, &defaults, ctx.file, flags)?;
    if ctx.dry_run {
        print!("{}", config::render(section, &resolved));
        return Ok(None);
    }
    Ok(Some(resolved))
}

fn need<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn engine_err(e: EngineError) -> CliError {
    match e {
        EngineError::EventCapExceeded { .. } => CliError::Cap(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn experiment_err(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Engine { source: EngineError::EventCapExceeded { .. }, .. } => CliError::Cap(e.to_string()),
        ExperimentError::Engine { .. } | ExperimentError::Query { .. } | ExperimentError::Coupling { .. } => {
            CliError::Runtime(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

fn runner(workers: Option<usize>) -> Result<TrialRunner, CliError> {
    TrialRunner::new(workers.unwrap_or(1)).map_err(config_err)
}

fn topology(r: u32, n: u32, cap: u64, what: &str) -> Result<TreeTopology, CliError> {
    let topo = TreeTopology::new(r, n).map_err(|e| CliError::Config(format!("B_{n} for r={r}: {e}")))?;
    if topo.vertex_count() > cap {
        return Err(CliError::Config(format!(
            "B_{n} for r={r} has {} vertices, {what} accepts at most {cap}",
            topo.vertex_count()
        )));
    }
    Ok(topo)
}

/// Summary JSON plus named output files.
struct Report {
    summary: Value,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Report {
    /// `workers` and `out` are left out of the recorded config: outputs must
    /// not depend on them.
    fn new(command: &str, config: &impl Serialize, body: Value) -> Self {
        let mut config = serde_json::to_value(config).expect("config serializes");
        if let Value::Object(c) = &mut config {
            c.remove("workers");
            c.remove("out");
        }
        let mut summary = json!({
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config": config,
        });
        if let (Value::Object(s), Value::Object(b)) = (&mut summary, body) {
            s.extend(b);
        }
        Self { summary, files: Vec::new() }
    }

    fn file(mut self, name: &'static str, bytes: Vec<u8>) -> Self {
        self.files.push((name, bytes));
        self
    }

    /// With `out`, writes `summary.json` and the files there; otherwise
    /// prints the summary.
    fn finish(self, out: &Option<PathBuf>) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        text.push('\n');
        match out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("summary.json"), text)?;
                for (name, bytes) in self.files {
                    std::fs::write(dir.join(name), bytes)?;
                }
            }
            None => print!("{text}"),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub r: Option<u32>,
    /// Tree depth.
    #[arg(long)]
    pub n: Option<u32>,
    /// Ignition rate per vertex; must be positive.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, env = ENV_SEED)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trial: Option<u64>,
    /// full, effective or off.
    #[arg(long)]
    pub log: Option<String>,
    /// eager or lazy.
    #[arg(long)]
    pub scheduling: Option<String>,
    #[arg(long)]
    pub max_events: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate_ff(ctx: &Context, flags: SimulateArgs) -> Result<(), CliError> {
    let defaults = SimulateArgs {
        r: Some(2),
        n: Some(10),
        horizon: Some(2.0),
        seed: Some(0),
        trial: Some(0),
        log: Some("full".into()),
        scheduling: Some("eager".into()),
        max_events: Some(engine::DEFAULT_MAX_EVENTS),
        ..SimulateArgs::default()
    };
    let Some(c) = resolve(ctx, "simulate-ff", defaults, &flags)? else { return Ok(()) };
    let lambda = need(&c.lambda, "lambda")?;
    if lambda == 0.0 {
        return Err(CliError::Config(
            "--lambda 0 disables fires; use the `pure-growth` subcommand for the fire-free process".into(),
        ));
    }
    let topo = topology(need(&c.r, "r")?, need(&c.n, "n")?, ENGINE_MAX_VERTICES, "the engine")?;
    let log = match need(&c.log, "log")?.as_str() {
        "full" => LogDetail::Full,
        "effective" => LogDetail::Effective,
        "off" => LogDetail::Off,
        other => return Err(CliError::Config(format!("--log must be full, effective or off, got `{other}`"))),
    };
    let scheduling = match need(&c.scheduling, "scheduling")?.as_str() {
        "eager" => GrowthScheduling::Eager,
        "lazy" => GrowthScheduling::Lazy,
        other => return Err(CliError::Config(format!("--scheduling must be eager or lazy, got `{other}`"))),
    };
    let options = RunOptions { log, scheduling, watch: Vec::new(), max_events: need(&c.max_events, "max-events")? };
    let streams = TrialStreams::new(need(&c.seed, "seed")?, need(&c.trial, "trial")?);
    let state = engine::run(&topo, streams, lambda, need(&c.horizon, "horizon")?, &options).map_err(engine_err)?;
    let occupied: Vec<VertexId> = state.final_occupancy().ones().map(|v| VertexId(v as u64)).collect();
    let body = json!({
        "counters": state.counters(),
        "occupied_count": state.occupied_count(),
        "occupancy_digest": format!("{:016x}", engine::member_digest(occupied)),
        "log_rows": state.log().len(),
    });
    let mut csv = Vec::new();
    state.write_log_csv(&mut csv)?;
    let report = Report::new("simulate-ff", &c, body);
    let report = if log == LogDetail::Off { report } else { report.file("events.csv", csv) };
    report.finish(&c.out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PureGrowthArgs {
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long)]
    pub n: Option<u32>,
    /// Snapshot time.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, env = ENV_SEED)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trial: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn pure_growth(ctx: &Context, flags: PureGrowthArgs) -> Result<(), CliError> {
    let defaults = PureGrowthArgs {
        r: Some(2),
        n: Some(10),
        t: Some(1.0),
        seed: Some(0),
        trial: Some(0),
        ..PureGrowthArgs::default()
    };
    let Some(c) = resolve(ctx, "pure-growth", defaults, &flags)? else { return Ok(()) };
    let topo = topology(need(&c.r, "r")?, need(&c.n, "n")?, SNAPSHOT_MAX_VERTICES, "a snapshot")?;
    let streams = TrialStreams::new(need(&c.seed, "seed")?, need(&c.trial, "trial")?);
    let snap = GrowthSnapshot::new(&streams, &topo, need(&c.t, "t")?).map_err(config_err)?;
    let clusters = census(&snap);
    let root = cluster_of(&snap, VertexId::ROOT).map_err(config_err)?;
    let body = json!({
        "occupied_count": snap.occupied_count(),
        "cluster_count": clusters.len(),
        "largest_cluster": clusters.iter().map(|c| c.size).max().unwrap_or(0),
        "boundary_clusters": clusters.iter().filter(|c| c.touches_boundary).count(),
        "root_cluster_size": root.as_ref().map_or(0, |c| c.size),
        "root_touches_boundary": root.as_ref().is_some_and(|c| c.touches_boundary),
    });
    let mut csv = String::from("root,size,touches_boundary\n");
    for c in &clusters {
        let _ = writeln!(csv, "{},{},{}", c.root, c.size, c.touches_boundary);
    }
    let mut occupied = String::from("vertex\n");
    for v in snap.occupied_vertices() {
        let _ = writeln!(occupied, "{v}");
    }
    Report::new("pure-growth", &c, body)
        .file("clusters.csv", csv.into_bytes())
        .file("occupied.csv", occupied.into_bytes())
        .finish(&c.out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpArgs {
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long)]
    pub n: Option<u32>,
    /// probability (p, delta) or time (tau, eps).
    #[arg(long)]
    pub parametrization: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, env = ENV_SEED)]
    pub seed: Option<u64>,
    /// Trial whose realization is exported.
    #[arg(long)]
    pub trial: Option<u64>,
    /// Trials of the boundary-reach estimate.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, env = ENV_WORKERS)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn sdp(ctx: &Context, flags: SdpArgs) -> Result<(), CliError> {
    let defaults = SdpArgs {
        r: Some(2),
        n: Some(10),
        parametrization: Some("probability".into()),
        p: Some(0.75),
        delta: Some(0.2),
        tau: Some(1.0),
        eps: Some(0.2),
        seed: Some(0),
        trial: Some(0),
        trials: Some(1000),
        workers: Some(1),
        ..SdpArgs::default()
    };
    let Some(c) = resolve(ctx, "sdp", defaults, &flags)? else { return Ok(()) };
    let topo = topology(need(&c.r, "r")?, need(&c.n, "n")?, REALIZE_MAX_VERTICES, "the sdp realization")?;
    let config = match need(&c.parametrization, "parametrization")?.as_str() {
        "probability" => SdpConfig::probability(&topo, need(&c.p, "p")?, need(&c.delta, "delta")?),
        "time" => SdpConfig::time(&topo, need(&c.tau, "tau")?, need(&c.eps, "eps")?),
        other => return Err(CliError::Config(format!("--parametrization must be probability or time, got `{other}`"))),
    }
    .map_err(config_err)?;
    let trials = need(&c.trials, "trials")?;
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let runner = runner(c.workers)?;
    let seed = need(&c.seed, "seed")?;
    let real = sdp::realize(&config, &TrialStreams::new(seed, need(&c.trial, "trial")?)).map_err(config_err)?;
    let invariants = real.check_invariants();
    let estimate = sdp::estimate_theta_p_delta(&config, seed, 0..trials, &runner).map_err(config_err)?;
    let pairs = sdp::paired_first_step_domination(&config, seed, 0..trials, &runner);
    let body = json!({
        "p": config.p(),
        "delta": config.delta(),
        "supercritical": config.require_supercritical().is_ok(),
        "realization": {
            "x": real.x.count_ones(..),
            "x_star": real.x_star.count_ones(..),
            "y": real.y.count_ones(..),
            "z": real.z.count_ones(..),
            "root_reaches_boundary": real.root_reaches_boundary(),
            "invariants": invariants.as_ref().map_or_else(|e| e.to_string(), |_| "ok".to_owned()),
        },
        "theta_estimate": estimate,
        "first_step_domination_violations": pairs.iter().filter(|(z, xy)| *z && !*xy).count(),
    });
    let mut csv = String::from("vertex,x,x_star,y,z\n");
    for v in 0..topo.vertex_count() as usize {
        let bits = [&real.x, &real.x_star, &real.y, &real.z].map(|s| u8::from(s.contains(v)));
        let _ = writeln!(csv, "{v},{},{},{},{}", bits[0], bits[1], bits[2], bits[3]);
    }
    Report::new("sdp", &c, body).file("realization.csv", csv.into_bytes()).finish(&c.out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpScanArgs {
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    pub delta_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, env = ENV_SEED)]
    pub seed: Option<u64>,
    #[arg(long, env = ENV_WORKERS)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn sdp_scan(ctx: &Context, flags: SdpScanArgs) -> Result<(), CliError> {
    let defaults = SdpScanArgs {
        r: Some(2),
        p: Some(0.75),
        n_list: Some(vec![8, 10, 12]),
        delta_grid: Some(vec![0.05, 0.1, 0.2, 0.4]),
        trials: Some(1000),
        seed: Some(0),
        workers: Some(1),
        ..SdpScanArgs::default()
    };
    let Some(c) = resolve(ctx, "sdp-scan", defaults, &flags)? else { return Ok(()) };
    let r = need(&c.r, "r")?;
    let n_list = need(&c.n_list, "n-list")?;
    for &n in &n_list {
        topology(r, n, REALIZE_MAX_VERTICES, "sdp-scan")?;
    }
    let runner = runner(c.workers)?;
    let scan = sdp::critical_delta_scan(
        r,
        need(&c.p, "p")?,
        &n_list,
        &need(&c.delta_grid, "delta-grid")?,
        need(&c.trials, "trials")?,
        need(&c.seed, "seed")?,
        &runner,
    )
    .map_err(config_err)?;
    let mut csv = Vec::new();
    scan.write_csv(&mut csv)?;
    Report::new("sdp-scan", &c, json!({ "scan": scan })).file("scan.csv", csv).finish(&c.out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ThetaArgs {
    #[arg(long)]
    pub r: Option<u32>,
    /// Explicit p values; overrides the p-min/p-max/p-steps grid.
    #[arg(long, value_delimiter = ',')]
    pub p_list: Option<Vec<f64>>,
    #[arg(long)]
    pub p_min: Option<f64>,
    #[arg(long)]
    pub p_max: Option<f64>,
    #[arg(long)]
    pub p_steps: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn theta(ctx: &Context, flags: ThetaArgs) -> Result<(), CliError> {
    let defaults = ThetaArgs {
        r: Some(2),
        p_min: Some(0.5),
        p_max: Some(1.0),
        p_steps: Some(11),
        ..ThetaArgs::default()
    };
    let Some(c) = resolve(ctx, "theta", defaults, &flags)? else { return Ok(()) };
    let r = need(&c.r, "r")?;
    if r < 2 {
        return Err(CliError::Config(format!("--r must be at least 2, got {r}")));
    }
    let ps = match &c.p_list {
        Some(list) => list.clone(),
        None => {
            let (lo, hi, steps) = (need(&c.p_min, "p-min")?, need(&c.p_max, "p-max")?, need(&c.p_steps, "p-steps")?);
            if steps < 2 {
                return Err(CliError::Config("--p-steps must be at least 2".into()));
            }
            (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
        }
    };
    if let Some(&bad) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Config(format!("p = {bad} is outside [0, 1]")));
    }
    let rows: Vec<(f64, f64)> = ps.iter().map(|&p| (p, theta_fixed_point(r, p))).collect();
    let mut csv = String::from("p,theta\n");
    for (p, t) in &rows {
        let _ = writeln!(csv, "{p},{t}");
    }
    let body = json!({ "rows": rows.iter().map(|(p, t)| json!({ "p": p, "theta": t })).collect::<Vec<_>>() });
    Report::new("theta", &c, body).file("theta.csv", csv.into_bytes()).finish(&c.out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Watched vertex ids.
    #[arg(long, value_delimiter = ',')]
    pub e: Option<Vec<u64>>,
    /// g(n) with λ(n) = g(n)/m(τ)^n.
    #[arg(long)]
    pub g: Option<String>,
    /// f(n) defining τ_n.
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<u32>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, env = ENV_SEED)]
    pub seed: Option<u64>,
    #[arg(long, env = ENV_WORKERS)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn defaults() -> Self {
        Self {
            r: Some(2),
            tau: Some(1.0),
            delta: Some(0.3),
            e: Some(vec![0]),
            g: Some("const:1".into()),
            f: Some("sqrt".into()),
            n_list: Some(vec![8, 10, 12]),
            trials: Some(200),
            seed: Some(0),
            workers: Some(1),
            out: None,
        }
    }

    fn experiment(&self) -> Result<ConvergenceExperiment, CliError> {
        let r = need(&self.r, "r")?;
        let tau = need(&self.tau, "tau")?;
        let schedule = build_schedule(r, "g-over-m", None, Some(tau), self.g.as_deref(), None).map_err(CliError::Config)?;
        let n_list = need(&self.n_list, "n-list")?;
        for &n in &n_list {
            topology(r, n, ENGINE_MAX_VERTICES, "the engine")?;
        }
        let exp = ConvergenceExperiment {
            r,
            tau,
            delta: need(&self.delta, "delta")?,
            e: need(&self.e, "e")?.into_iter().map(VertexId).collect(),
            schedule,
            f: parse_scale(&need(&self.f, "f")?).map_err(CliError::Config)?,
            n_list,
            trials: need(&self.trials, "trials")?,
            seed: need(&self.seed, "seed")?,
        };
        exp.validate().map_err(experiment_err)?;
        Ok(exp)
    }
}

fn experiment_report(command: &str, config: &impl Serialize, s: &experiments::ExperimentSummary) -> Result<Report, CliError> {
    let mut table = Vec::new();
    s.write_csv(&mut table)?;
    let mut plot = Vec::new();
    s.write_plot_csv(&mut plot)?;
    let body = json!({ "summary": s, "all_passed": s.all_passed() });
    Ok(Report::new(command, config, body).file("table.csv", table).file("plot.csv", plot))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergeArgs {
    /// convergence, after or before.
    #[arg(long)]
    pub variant: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub exp: ExperimentArgs,
}

pub fn converge(ctx: &Context, flags: ConvergeArgs) -> Result<(), CliError> {
    let defaults = ConvergeArgs { variant: Some("convergence".into()), exp: ExperimentArgs::defaults() };
    let Some(c) = resolve(ctx, "converge", defaults, &flags)? else { return Ok(()) };
    let exp = c.exp.experiment()?;
    let runner = runner(c.exp.workers)?;
    let summary = match need(&c.variant, "variant")?.as_str() {
        "convergence" => experiments::run_convergence(&exp, &runner),
        "after" => experiments::run_destruction_timing(&exp, TimingVariant::After, &runner),
        "before" => experiments::run_destruction_timing(&exp, TimingVariant::Before, &runner),
        other => return Err(CliError::Config(format!("--variant must be convergence, after or before, got `{other}`"))),
    }
    .map_err(experiment_err)?;
    experiment_report("converge", &c, &summary)?.finish(&c.exp.out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub exp: ExperimentArgs,
}

pub fn scaling(ctx: &Context, flags: ScalingArgs) -> Result<(), CliError> {
    let Some(c) = resolve(ctx, "scaling", ScalingArgs { exp: ExperimentArgs::defaults() }, &flags)? else {
        return Ok(());
    };
    let exp = c.exp.experiment()?;
    let summary = experiments::run_fire_scaling(&exp, &runner(c.exp.workers)?).map_err(experiment_err)?;
    experiment_report("scaling", &c, &summary)?.finish(&c.exp.out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleCheckArgs {
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub t_list: Option<Vec<f64>>,
    #[arg(long)]
    pub vertex: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, env = ENV_SEED)]
    pub seed: Option<u64>,
    #[arg(long, env = ENV_WORKERS)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn oracle_check(ctx: &Context, flags: OracleCheckArgs) -> Result<(), CliError> {
    let defaults = OracleCheckArgs {
        r: Some(2),
        n: Some(1),
        lambda: Some(1.0),
        t_list: Some(vec![0.25, 0.5, 1.0, 2.0]),
        vertex: Some(0),
        trials: Some(10_000),
        seed: Some(0),
        workers: Some(1),
        ..OracleCheckArgs::default()
    };
    let Some(c) = resolve(ctx, "oracle-check", defaults, &flags)? else { return Ok(()) };
    let (r, n, lambda) = (need(&c.r, "r")?, need(&c.n, "n")?, need(&c.lambda, "lambda")?);
    let topo = topology(r, n, MAX_ORACLE_VERTICES, "the exact oracle")?;
    let v = VertexId(need(&c.vertex, "vertex")?);
    topo.check(v).map_err(config_err)?;
    let times = need(&c.t_list, "t-list")?;
    if let Some(&bad) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(CliError::Config(format!("query time {bad} must be positive")));
    }
    let oracle = CtmcOracle::new(r, n, lambda).map_err(config_err)?;
    let exact = times
        .iter()
        .map(|&t| oracle.probability(t, &OccupancyQuery::occupied(v)))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let estimates = experiments::occupancy_marginals(
        &topo,
        lambda,
        v,
        &times,
        need(&c.seed, "seed")?,
        need(&c.trials, "trials")?,
        &runner(c.workers)?,
    )
    .map_err(experiment_err)?;
    let mut csv = String::from("t,oracle,estimate,std_error,z\n");
    let mut rows = Vec::new();
    for ((&t, &p), est) in times.iter().zip(&exact).zip(&estimates) {
        let se = (p * (1.0 - p) / est.trials as f64).sqrt();
        let z = if se > 0.0 { (est.estimate - p) / se } else { 0.0 };
        let _ = writeln!(csv, "{t},{p},{},{se},{z}", est.estimate);
        rows.push(json!({ "t": t, "oracle": p, "estimate": est.estimate, "std_error": se, "z": z }));
    }
    let within = rows.iter().all(|row| row["z"].as_f64().is_some_and(|z| z.abs() <= 3.0));
    Report::new("oracle-check", &c, json!({ "rows": rows, "within_3_se": within }))
        .file("oracle.csv", csv.into_bytes())
        .finish(&c.out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimesArgs {
    #[arg(long)]
    pub r: Option<u32>,
    /// constant, g-over-m or table.
    #[arg(long)]
    pub form: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub g: Option<String>,
    /// `n=value` pairs, comma separated.
    #[arg(long)]
    pub table: Option<String>,
    #[arg(long)]
    pub n_min: Option<u32>,
    #[arg(long)]
    pub n_max: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn regimes(ctx: &Context, flags: RegimesArgs) -> Result<(), CliError> {
    let defaults = RegimesArgs {
        r: Some(2),
        form: Some("g-over-m".into()),
        tau: Some(1.0),
        g: Some("const:1".into()),
        n_min: Some(5),
        n_max: Some(40),
        ..RegimesArgs::default()
    };
    let Some(c) = resolve(ctx, "regimes", defaults, &flags)? else { return Ok(()) };
    let schedule = build_schedule(
        need(&c.r, "r")?,
        &need(&c.form, "form")?,
        c.lambda,
        c.tau,
        c.g.as_deref(),
        c.table.as_deref(),
    )
    .map_err(CliError::Config)?;
    let (lo, hi) = (need(&c.n_min, "n-min")?, need(&c.n_max, "n-max")?);
    let regime = classify_regime(&schedule, lo..=hi).map_err(config_err)?;
    Report::new("regimes", &c, json!({ "schedule": schedule.label(), "regime": regime })).finish(&c.out)
}
