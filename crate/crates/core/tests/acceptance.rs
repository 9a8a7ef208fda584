//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force_threshold, distinct, ks_distance};
use csk_core::composition::{compose_additive, compose_multiplicative, CompositionMode, Profile};
use csk_core::plant_sim::{
    estimate_risks, run_allocation_experiment, run_planning_experiment, AllocationRun,
    ExperimentConfig, PlanningRun,
};
use csk_core::scenario_bridge::{forward_bridge_stats, sample_violations, BridgeConfig};
use csk_core::{
    calibrate_tube, certificate, check_stability, select_threshold, solve_uniform_eps,
    verify_forward_bridge,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Beta, ContinuousCDF};

const SEED: u64 = 7;
const LABELS: [&str; 3] = ["increasing", "uniform", "decreasing"];

struct Suite {
    failures: usize,
}

impl Suite {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }

    /// Runs `body`, recording any error it returns as a failure.
    fn run(&mut self, name: &str, body: impl FnOnce(&mut Suite) -> Result<(), String>) {
        if let Err(e) = body(self) {
            self.check(name, false, format!("error: {e}"));
        }
    }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

fn secs(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

fn certificates(s: &mut Suite) -> Result<(), String> {
    let start = Instant::now();
    let want = [0.9264, 0.9095, 0.9264];
    let mut got = Vec::new();
    for prof in Profile::ALL {
        got.push(prof.allocation::<f64>(120).map_err(|e| e.to_string())?.certificate());
    }
    let elapsed = start.elapsed();
    let ok = got.iter().zip(want).all(|(&g, w)| within(g, w, 1e-4))
        && elapsed < Duration::from_secs(1);
    s.check("certificate exactness", ok, format!("{got:?} in {}", secs(elapsed)));
    Ok(())
}

fn beta_law(s: &mut Suite) -> Result<(), String> {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for r in [0usize, 3] {
        let stats = forward_bridge_stats(&BridgeConfig::new(120, r, 50_000, SEED + r as u64))
            .map_err(|e| e.to_string())?;
        let target = (r + 1) as f64 / 121.0;
        let mean_ok = within(stats.mean_violation, target, 3.0 * stats.mean_violation_se);

        let mut draws = sample_violations(&BridgeConfig::new(120, r, 2_000, SEED + 100 + r as u64))
            .map_err(|e| e.to_string())?;
        let law = Beta::new((r + 1) as f64, (120 - r) as f64).map_err(|e| e.to_string())?;
        let ks = ks_distance(&mut draws, |x| law.cdf(x));

        ok &= mean_ok && ks <= 0.04;
        detail.push(format!(
            "r={r} mean={:.6} (target {target:.6}, se {:.1e}) KS={ks:.4}",
            stats.mean_violation, stats.mean_violation_se
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(30);
    s.check("Beta-law equality", ok, format!("{} in {}", detail.join("; "), secs(elapsed)));
    Ok(())
}

fn containment(s: &mut Suite) -> Result<(), String> {
    let grid = [(5usize, 0usize), (10, 2), (50, 1), (120, 3), (200, 10)];
    let mut total = 0u64;
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, &(m, r)) in grid.iter().enumerate() {
        let cfg = BridgeConfig::new(m, r, 25_000, SEED + 1_000 + i as u64);
        match verify_forward_bridge(&cfg) {
            Ok(stats) => {
                total += stats.trials;
                let inc_ok = within(stats.inclusion_rate, stats.exact_mean, 3.0 * stats.inclusion_rate_se);
                ok &= inc_ok && stats.containment_violations == 0;
                detail.push(format!("({m},{r}) incl={:.4}/{:.4}", stats.inclusion_rate, stats.exact_mean));
            }
            Err(e) => {
                ok = false;
                detail.push(format!("({m},{r}) {e}"));
            }
        }
    }
    ok &= total >= 100_000;
    s.check("containment", ok, format!("{total} trials, {}", detail.join(" ")));
    Ok(())
}

fn stability(s: &mut Suite) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut stable = 0usize;
    let mut tried = 0usize;
    for m in [5usize, 10, 20] {
        for r in 0..=2usize {
            let mut n = 0;
            while n < 1_000 {
                let scores: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                if !distinct(&scores) {
                    continue;
                }
                n += 1;
                tried += 1;
                stable += usize::from(check_stability(&scores, r).map_err(|e| e.to_string())?);
            }
        }
    }

    let mut mismatches = 0usize;
    let mut oracle_cases = 0usize;
    for m in 1..=8usize {
        for r in 0..=3usize.min(m - 1) {
            for _ in 0..500 {
                let scores: Vec<f64> = (0..m).map(|_| rng.random_range(0..8) as f64).collect();
                let q = select_threshold(&scores, r).map_err(|e| e.to_string())?.q;
                oracle_cases += 1;
                mismatches += usize::from(q != brute_force_threshold(&scores, r));
            }
        }
    }
    s.check(
        "stability and discard oracle",
        stable == tried && mismatches == 0,
        format!("stable {stable}/{tried}, oracle mismatches {mismatches}/{oracle_cases}"),
    );
    Ok(())
}

fn multiplicative(s: &mut Suite) -> Result<(), String> {
    let e = |x: csk_core::Error| x.to_string();
    let blocks = vec![certificate(120, 1, 0.055).map_err(e)?; 4];
    let mult = compose_multiplicative(blocks.clone()).map_err(e)?.eps_total;
    let uniform = solve_uniform_eps(4, 0.22, CompositionMode::Multiplicative).map_err(e)?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut strict = true;
    for n in 2..=8usize {
        for _ in 0..50 {
            let bs = (0..n)
                .map(|_| certificate(120, rng.random_range(0..5), rng.random_range(0.001..0.5)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(e)?;
            let a = compose_additive(bs.clone()).map_err(e)?.eps_total;
            let m = compose_multiplicative(bs).map_err(e)?.eps_total;
            strict &= m < a;
        }
    }
    s.check(
        "multiplicative rule",
        within(mult, 0.202506, 1e-6) && within(uniform, 0.060225, 1e-6) && strict,
        format!("1-0.945^4={mult:.9} uniform eps={uniform:.9} strictly tighter={strict}"),
    );
    Ok(())
}

fn table1(s: &mut Suite, runs: &[AllocationRun], elapsed: Duration) {
    let mean_want = [0.0618, 0.0613, 0.0626];
    let q90_want = [0.0932, 0.0930, 0.0940];
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let mean = run.report.mean_traj_risk.unwrap_or(f64::NAN);
        let q90 = run.report.q90_traj_risk.unwrap_or(f64::NAN);
        ok &= within(mean, mean_want[i], 0.005) && within(q90, q90_want[i], 0.008);
        detail.push(format!("{} mean={mean:.4} Q90={q90:.4}", LABELS[i]));
    }
    s.check("Table 1 risk statistics", ok, format!("{} in {}", detail.join("; "), secs(elapsed)));
}

fn fig1_orderings(s: &mut Suite) -> Result<(), String> {
    let cfg = ExperimentConfig::fast(SEED);
    let mut margins = Vec::new();
    let mut risks = Vec::new();
    for label in LABELS {
        let run = run_allocation_experiment(label, &cfg).map_err(|e| e.to_string())?;
        margins.push(run.mean_margins());
        risks.push(run.mean_stage_risks());
    }
    let first = [margins[0][0], margins[1][0], margins[2][0]];
    let last = [margins[0][3], margins[1][3], margins[2][3]];
    let r_first = [risks[0][0], risks[1][0], risks[2][0]];
    let r_last = [risks[0][3], risks[1][3], risks[2][3]];
    let ok = first[0] > first[1]
        && first[1] > first[2]
        && last[0] < last[1]
        && last[1] < last[2]
        && r_first[0] < r_first[1]
        && r_first[1] < r_first[2]
        && r_last[0] > r_last[1]
        && r_last[1] > r_last[2];
    s.check(
        "Table 1 CI preset orderings",
        ok,
        format!("stage-1 margins {first:.3?}, stage-4 margins {last:.3?}"),
    );
    Ok(())
}

fn table2(s: &mut Suite, runs: &[PlanningRun]) {
    let u_want = [(0.3491, 0.01), (0.3331, 0.01), (0.2373, 0.015)];
    let v_want = [(0.0174, 0.004), (0.0123, 0.004), (0.0025, 0.002)];
    let t_want = [(0.4190, 0.01), (0.4004, 0.01), (0.2923, 0.015)];
    let mut ok = true;
    let mut u = [0.0; 3];
    let mut v = [0.0; 3];
    let mut detail = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let r = &run.report;
        u[i] = r.mean_u_star.unwrap_or(f64::NAN);
        v[i] = r.mean_violation_prob.unwrap_or(f64::NAN);
        let t = r.mean_terminal_output.unwrap_or(f64::NAN);
        ok &= within(u[i], u_want[i].0, u_want[i].1)
            && within(v[i], v_want[i].0, v_want[i].1)
            && within(t, t_want[i].0, t_want[i].1);
        detail.push(format!("{} u*={:.4} viol={:.4} term={t:.4}", LABELS[i], u[i], v[i]));
    }
    ok &= u[0] > u[1] && u[1] > u[2] && v[0] > v[1] && v[1] > v[2];
    s.check("Table 2 planning statistics", ok, detail.join("; "));
}

fn union_bound(s: &mut Suite) -> Result<(), String> {
    let e = |x: csk_core::Error| x.to_string();
    let cfg = ExperimentConfig::fast(SEED);
    let mut sets = 0usize;
    let mut ok = true;
    for prof in Profile::ALL {
        let alloc = prof.allocation::<f64>(cfg.m).map_err(e)?;
        for i in 0..cfg.calib_sets {
            let (calib, tests) = cfg.calibration_set(i, true).map_err(e)?;
            let tube = calibrate_tube(&cfg.predictor, &calib, &alloc).map_err(e)?;
            let risk = estimate_risks(&tube, &cfg.predictor, &tests).map_err(e)?;
            let sum: f64 = risk.stage_risks.iter().sum();
            let max = risk.stage_risks.iter().copied().fold(0.0, f64::max);
            ok &= risk.traj_risk <= sum && risk.traj_risk >= max;
            ok &= risk.check_union_bound().is_ok();
            sets += 1;
        }
    }
    s.check("union-bound invariant", ok, format!("{sets} test sets"));
    Ok(())
}

fn report_bytes(cfg: &ExperimentConfig) -> Result<String, String> {
    let mut out = String::new();
    for label in LABELS {
        let a = run_allocation_experiment(label, cfg).map_err(|e| e.to_string())?;
        let p = run_planning_experiment(label, cfg).map_err(|e| e.to_string())?;
        out += &serde_json::to_string(&a).map_err(|e| e.to_string())?;
        out += &serde_json::to_string(&p).map_err(|e| e.to_string())?;
    }
    let b = forward_bridge_stats(&BridgeConfig::new(120, 3, 20_000, SEED)).map_err(|e| e.to_string())?;
    out += &serde_json::to_string(&b).map_err(|e| e.to_string())?;
    Ok(out)
}

fn determinism(s: &mut Suite) -> Result<(), String> {
    let cfg = ExperimentConfig::fast(SEED);
    let mut outputs = Vec::new();
    for threads in [1usize, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        outputs.push(pool.install(|| report_bytes(&cfg))?);
    }
    outputs.push(report_bytes(&cfg)?);
    let ok = outputs.windows(2).all(|w| w[0] == w[1]);
    s.check(
        "determinism",
        ok,
        format!("{} report bytes, 1 vs 4 vs default workers", outputs[0].len()),
    );
    Ok(())
}

fn main() -> ExitCode {
    let mut s = Suite { failures: 0 };
    s.run("certificate exactness", certificates);
    s.run("Beta-law equality", beta_law);
    s.run("containment", containment);
    s.run("stability and discard oracle", stability);
    s.run("multiplicative rule", multiplicative);

    let cfg = ExperimentConfig::full(SEED);
    let start = Instant::now();
    let table1_runs: Result<Vec<_>, _> = LABELS.iter().map(|l| run_allocation_experiment(l, &cfg)).collect();
    let elapsed = start.elapsed();
    match table1_runs {
        Ok(runs) => table1(&mut s, &runs, elapsed),
        Err(e) => s.check("Table 1 risk statistics", false, format!("error: {e}")),
    }
    s.run("Table 1 CI preset orderings", fig1_orderings);

    let table2_runs: Result<Vec<_>, _> = LABELS.iter().map(|l| run_planning_experiment(l, &cfg)).collect();
    match table2_runs {
        Ok(runs) => table2(&mut s, &runs),
        Err(e) => s.check("Table 2 planning statistics", false, format!("error: {e}")),
    }

    s.run("union-bound invariant", union_bound);
    s.run("determinism", determinism);

    if s.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", s.failures);
        ExitCode::FAILURE
    }
}
