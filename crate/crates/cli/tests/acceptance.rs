//! Acceptance suite: one PASS/FAIL line per criterion.
//! Exits non-zero on a failure only with `ACCEPTANCE_STRICT=1`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use treefire::analytics::{
    ctmc_oracle_occupancy, expected_truncated_cluster_size, mean_offspring, moment_bounds, theta_fixed_point,
    OccupancyQuery, ScaleFn,
};
use treefire::engine::{run, LogDetail, RunOptions};
use treefire::experiments::{
    occupancy_marginals, run_convergence, run_destruction_timing, run_fire_scaling, ConvergenceExperiment,
    TimingVariant, TREND_LEVEL,
};
use treefire::growth::{boundary_reach_frequencies, snapshot, truncated_cluster_size_samples};
use treefire::parallel::TrialRunner;
use treefire::rng::TrialStreams;
use treefire::sdp::{critical_delta_scan, realize, SdpConfig};
use treefire::stats::mann_kendall;
use treefire::{TreeTopology, VertexId};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn runner() -> TrialRunner {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    TrialRunner::new(workers).expect("pool")
}

fn single_vertex_oracle() -> Outcome {
    let start = Instant::now();
    let topo = TreeTopology::new(2, 0).unwrap();
    let times = [0.25, 0.5, 1.0, 2.0];
    let est = occupancy_marginals(&topo, 1.0, VertexId::ROOT, &times, 101, 100_000, &runner()).unwrap();
    let mut worst: f64 = 0.0;
    for (p, &t) in est.iter().zip(&times) {
        let exact = 0.5 * (1.0 - (-2.0 * t).exp());
        let se = (exact * (1.0 - exact) / p.trials as f64).sqrt();
        worst = worst.max(((p.estimate - exact) / se).abs());
    }
    let elapsed = start.elapsed();
    outcome(worst <= 3.0 && within(elapsed, 10), format!("max |z| = {worst:.2}, {elapsed:.1?}"))
}

fn one_level_oracle() -> Outcome {
    let start = Instant::now();
    let topo = TreeTopology::new(2, 1).unwrap();
    let exact = ctmc_oracle_occupancy(2, 1, 1.0, 1.0, &OccupancyQuery::occupied(VertexId::ROOT)).unwrap();
    let est = occupancy_marginals(&topo, 1.0, VertexId::ROOT, &[1.0], 102, 100_000, &runner()).unwrap()[0];
    let se = (exact * (1.0 - exact) / est.trials as f64).sqrt();
    let z = (est.estimate - exact) / se;
    let elapsed = start.elapsed();
    outcome(
        z.abs() <= 3.0 && within(elapsed, 60),
        format!("oracle {exact:.6}, engine {:.6}, z = {z:.2}, {elapsed:.1?}", est.estimate),
    )
}

fn coupling_identity() -> Outcome {
    let start = Instant::now();
    let topo = TreeTopology::new(2, 16).unwrap();
    let mut mismatches = 0;
    for trial in 0..100 {
        let streams = TrialStreams::new(103, trial);
        let options = RunOptions { log: LogDetail::Off, ..RunOptions::default() };
        let state = run(&topo, streams, 1e-30, 2.0, &options).unwrap();
        let snap = snapshot(&streams, &topo, 2.0).unwrap();
        if state.final_occupancy() != snap.bits() {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(mismatches == 0 && within(elapsed, 60), format!("{mismatches}/100 mismatching trials, {elapsed:.1?}"))
}

fn moment_closed_form() -> Outcome {
    let topo = TreeTopology::new(2, 10).unwrap();
    let samples = truncated_cluster_size_samples(104, 0..100_000, &topo, 1.0, VertexId::ROOT, false).unwrap();
    let m = 2.0 * (1.0 - (-1.0f64).exp());
    let scale = m.powi(10);
    let sizes: Vec<f64> = samples.ratios.iter().map(|x| x * scale).collect();
    let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
    let var = sizes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (sizes.len() - 1) as f64;
    let se = (var / sizes.len() as f64).sqrt();
    let exact: f64 = (1.0 - (-1.0f64).exp()) * (0..=10).map(|i| m.powi(i)).sum::<f64>();
    let library = expected_truncated_cluster_size(2, 1.0, 10);
    let z = (mean - exact) / se;
    let mut bound_ok = (library - exact).abs() <= 1e-9 * exact;
    for t in [0.75, 1.0, 2.0] {
        let mt = mean_offspring(2, t);
        let bounds = moment_bounds(2, t, 30).unwrap();
        for n in 0..=30 {
            let e = expected_truncated_cluster_size(2, t, n);
            let ratio = e / mt.powi(n as i32);
            bound_ok &= 1.0 - (-t).exp() <= ratio && ratio <= mt / (mt - 1.0);
            bound_ok &= bounds.lower1 <= ratio && ratio <= bounds.upper1;
        }
    }
    outcome(z.abs() <= 3.0 && bound_ok, format!("mean {mean:.3} vs {exact:.3} (z = {z:.2}), ratio bounds n<=30: {bound_ok}"))
}

fn theta_fixed_point_check() -> Outcome {
    let start = Instant::now();
    let theta = theta_fixed_point(2, 0.75);
    let t = -(1.0f64 - 0.75).ln();
    let freq = boundary_reach_frequencies(2, t, &[12, 18, 24], 105, 0..100_000, &runner()).unwrap();
    let est: Vec<f64> = freq.iter().map(|(_, p)| p.estimate).collect();
    // common streams across depths: the estimates are pathwise non-increasing
    let decreasing = est.windows(2).all(|w| w[1] <= w[0]) && est.iter().all(|&e| e >= theta - 0.01);
    let gap = (est[2] - theta).abs();
    let elapsed = start.elapsed();
    outcome(
        (theta - 2.0 / 3.0).abs() < 1e-9 && decreasing && gap < 0.01 && within(elapsed, 300),
        format!("theta = {theta:.12}, reach {est:.4?}, final gap {gap:.4}, {elapsed:.1?}"),
    )
}

fn convergence_trend() -> Outcome {
    let start = Instant::now();
    let exp = ConvergenceExperiment::with_g(2, 1.0, 0.3, ScaleFn::ONE, ScaleFn::sqrt(), (8..=20).step_by(2).collect(), 2000, 106)
        .unwrap();
    let s = run_convergence(&exp, &runner()).unwrap();
    let coupled_everywhere = s.rows.iter().all(|r| r.coupled.successes == r.trials);
    let uncoupled: Vec<u64> = s.rows.iter().map(|r| r.trials - r.coupled.successes).collect();
    let joint: Vec<f64> = s.rows.iter().map(|r| r.joint.estimate).collect();
    let trend = s.trend("joint").unwrap();
    let last = *joint.last().unwrap();
    let elapsed = start.elapsed();
    outcome(
        coupled_everywhere && trend.passed && last > 0.8,
        format!(
            "uncoupled trials per n {uncoupled:?}; joint {joint:.3?} (MK p = {:.4}); final {last:.3}; {elapsed:.0?}",
            trend.p_increasing
        ),
    )
}

fn timing_direction() -> Outcome {
    let after = ConvergenceExperiment::with_g(2, 1.0, 0.3, ScaleFn::ONE, ScaleFn::sqrt(), (8..=20).step_by(2).collect(), 1000, 107)
        .unwrap();
    let a = run_destruction_timing(&after, TimingVariant::After, &runner()).unwrap();
    let before = ConvergenceExperiment::with_g(
        2,
        1.0,
        0.3,
        ScaleFn::ExpPower { alpha: 0.6 },
        ScaleFn::sqrt(),
        (8..=16).collect(),
        1000,
        108,
    )
    .unwrap();
    let b = run_destruction_timing(&before, TimingVariant::Before, &runner()).unwrap();
    let af = a.trend("fraction_after_tau").unwrap();
    let bf = b.trend("fraction_before_tau").unwrap();
    let below = b.check("tau_n_below_tau").unwrap().passed;
    let gap = b.check("scaled_gap_increasing").unwrap().passed;
    let fa: Vec<f64> = a.rows.iter().filter_map(|r| r.timing.fraction.map(|p| p.estimate)).collect();
    let fb: Vec<f64> = b.rows.iter().filter_map(|r| r.timing.fraction.map(|p| p.estimate)).collect();
    outcome(
        af.passed && bf.passed && below && gap,
        format!(
            "after {fa:.3?} (MK p = {:.4}); before {fb:.3?} (MK p = {:.4}); tau_n < tau: {below}; scaled gap increasing: {gap}",
            af.p_increasing, bf.p_increasing
        ),
    )
}

fn fire_scaling() -> Outcome {
    let exp = ConvergenceExperiment::with_g(2, 1.0, 0.3, ScaleFn::ONE, ScaleFn::sqrt(), (8..=16).collect(), 2000, 109).unwrap();
    let s = run_fire_scaling(&exp, &runner()).unwrap();
    let bound = s.check("loss_bound").unwrap();
    let positive = s.check("iota_f_q05_positive").unwrap().passed;
    let trends: Vec<String> = s
        .trends
        .iter()
        .map(|t| format!("{} {}: {}", t.series, t.expectation, if t.passed { "ok" } else { "violated" }))
        .collect();
    outcome(
        bound.passed && positive && s.trends.iter().all(|t| t.passed),
        format!("loss bound: {}; iota_f q05 > 0: {positive}; {}", bound.detail, trends.join(", ")),
    )
}

fn sdp_properties() -> Outcome {
    let topo = TreeTopology::new(2, 12).unwrap();
    let config = SdpConfig::probability(&topo, 0.75, 0.2).unwrap();
    let mut broken = 0;
    for trial in 0..10_000 {
        if realize(&config, &TrialStreams::new(110, trial)).unwrap().check_invariants().is_err() {
            broken += 1;
        }
    }
    let r = runner();
    let deltas = [0.05, 0.1, 0.2, 0.4];
    let scan = critical_delta_scan(2, 0.75, &[18], &deltas, 10_000, 111, &r).unwrap();
    let by_delta: Vec<f64> = deltas.iter().map(|&d| scan.row(18, d).unwrap().estimate).collect();
    let monotone = by_delta.windows(2).all(|w| w[0] <= w[1]) && by_delta[0] < by_delta[3];
    let ns: Vec<u32> = (4..=18).step_by(2).collect();
    let depth_scan = critical_delta_scan(2, 0.75, &ns, &[0.2], 10_000, 112, &r).unwrap();
    let by_n: Vec<f64> = ns.iter().map(|&n| depth_scan.row(n, 0.2).unwrap().estimate).collect();
    let mk = mann_kendall(&by_n);
    let limit = depth_scan.extrapolations[0];
    let to_zero = mk.decreasing_at(TREND_LEVEL) && limit.zero_consistent;
    outcome(
        broken == 0 && monotone && to_zero,
        format!(
            "{broken}/10000 broken realizations; theta(0.75, delta) at n=18 {by_delta:.4?}; delta=0.2 by n {by_n:.4?} (MK p = {:.4}, limit {:.4})",
            mk.p_decreasing, limit.limit
        ),
    )
}

fn run_cli(args: &[&str], out: Option<&Path>) -> (Vec<u8>, Vec<(String, Vec<u8>)>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_treefire"));
    cmd.args(args).env_remove("TREEFIRE_SEED").env_remove("TREEFIRE_WORKERS");
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    let output = cmd.output().expect("binary runs");
    assert!(output.status.success(), "{args:?}: {}", String::from_utf8_lossy(&output.stderr));
    let mut files = Vec::new();
    if let Some(dir) = out {
        let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            files.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
        }
    }
    (output.stdout, files)
}

fn determinism() -> Outcome {
    let cases: Vec<(Vec<&str>, bool)> = vec![
        (vec!["simulate-ff", "--r", "2", "--n", "10", "--lambda", "0.01", "--horizon", "2", "--seed", "7"], false),
        (vec!["pure-growth", "--n", "10", "--t", "1.2", "--seed", "7"], false),
        (vec!["sdp", "--n", "8", "--trials", "300", "--seed", "7"], true),
        (vec!["sdp-scan", "--n-list", "6,8", "--delta-grid", "0.1,0.4", "--trials", "300", "--seed", "7"], true),
        (vec!["theta", "--p-steps", "6"], false),
        (vec!["converge", "--n-list", "6,8", "--trials", "60", "--seed", "7"], true),
        (vec!["converge", "--variant", "before", "--g", "exp-power:0.6", "--n-list", "6,8", "--trials", "30", "--seed", "7"], true),
        (vec!["scaling", "--n-list", "6,8", "--trials", "100", "--seed", "7"], true),
        (vec!["oracle-check", "--trials", "2000", "--seed", "7"], true),
        (vec!["regimes"], false),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for (i, (args, parallel)) in cases.iter().enumerate() {
        let mut runs = Vec::new();
        for (k, workers) in ["1", "1", "3"].iter().enumerate() {
            let mut a = args.clone();
            if *parallel {
                a.extend(["--workers", workers]);
            }
            let dir = tmp.path().join(format!("{i}-{k}"));
            runs.push((run_cli(&a, None).0, run_cli(&a, Some(&dir)).1));
        }
        if runs.windows(2).any(|w| w[0] != w[1]) {
            failures.push(args[0]);
        }
    }
    outcome(failures.is_empty(), format!("{} invocations x 3 runs; differing: {failures:?}", cases.len()))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("single-vertex chain marginal", single_vertex_oracle),
        ("one-level tree vs exact chain", one_level_oracle),
        ("negligible-ignition coupling identity", coupling_identity),
        ("truncated cluster mean closed form", moment_closed_form),
        ("fixed point and boundary reach", theta_fixed_point_check),
        ("coupled destruction trend", convergence_trend),
        ("destruction side of tau", timing_direction),
        ("fire statistics scaling", fire_scaling),
        ("self-destructive percolation", sdp_properties),
        ("cli determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let result = check();
        if !result.passed {
            failed += 1;
        }
        println!("[{}] criterion {id:>2} {name}: {}", if result.passed { "PASS" } else { "FAIL" }, result.detail);
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
