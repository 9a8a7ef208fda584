use std::path::PathBuf;

use clap::ValueEnum;
use csk_core::composition::{compose_multiplicative, solve_uniform_eps, CompositionMode, Profile};
use csk_core::plant_sim::{
    run_allocation, run_planning, run_sup_baseline, tube_snapshot, AllocationRun, ExperimentConfig, PlanningRun,
};
use csk_core::{certificate, Allocation};
use serde::Serialize;

use crate::{emit, to_json, CliResult, Failure};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long, value_enum)]
    target: Target,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Replicate counts: full = 1000/5000/4000, fast = 100/500/400.
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    preset: Preset,
    #[arg(long)]
    calib_sets: Option<usize>,
    #[arg(long)]
    test_tasks: Option<usize>,
    #[arg(long)]
    rollouts: Option<usize>,
    /// Sample trajectories in the fig2 data.
    #[arg(long, default_value_t = 20)]
    trajectories: usize,
    /// csv for tables and figures; `multiplicative` prints `name = value` lines unless a format is given.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Target {
    Table1,
    Table2,
    Fig1,
    Fig2,
    Multiplicative,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Full,
    Fast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Shortest decimal that round-trips to the same f64.
fn num(x: f64) -> String {
    format!("{x}")
}

fn joined<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::Invariant(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Invariant(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Invariant(e.to_string()))
}

fn config(args: &Args) -> ExperimentConfig {
    let mut cfg = match args.preset {
        Preset::Full => ExperimentConfig::full(args.seed),
        Preset::Fast => ExperimentConfig::fast(args.seed),
    };
    cfg.calib_sets = args.calib_sets.unwrap_or(cfg.calib_sets);
    cfg.test_tasks = args.test_tasks.unwrap_or(cfg.test_tasks);
    cfg.rollouts = args.rollouts.unwrap_or(cfg.rollouts);
    cfg
}

fn profiles(cfg: &ExperimentConfig) -> CliResult<Vec<Allocation<f64>>> {
    Profile::ALL
        .iter()
        .map(|p| p.allocation(cfg.m).map_err(Failure::from))
        .collect()
}

#[derive(Serialize)]
struct Runs<'a, R> {
    seed: u64,
    config: &'a ExperimentConfig,
    runs: Vec<R>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sup_residual: Option<R>,
}

fn table1(cfg: &ExperimentConfig, format: Format) -> CliResult<String> {
    let runs = profiles(cfg)?
        .iter()
        .map(|a| run_allocation(cfg, a).map_err(Failure::from))
        .collect::<CliResult<Vec<AllocationRun>>>()?;
    if format == Format::Json {
        return to_json(&Runs { seed: cfg.seed, config: cfg, runs, sup_residual: None });
    }
    let rows = runs
        .iter()
        .map(|run| {
            let r = &run.report;
            vec![
                r.allocation_label.clone(),
                joined(&r.ranks),
                joined(&r.eps),
                num(r.certificate),
                opt(r.mean_traj_risk),
                opt(r.q90_traj_risk),
                opt(r.q99_traj_risk),
            ]
        })
        .collect();
    csv_text(
        &["allocation", "r", "eps", "certificate", "mean_V_traj", "Q90_V_traj", "Q99_V_traj"],
        rows,
    )
}

fn table2(cfg: &ExperimentConfig, format: Format) -> CliResult<String> {
    let runs = profiles(cfg)?
        .iter()
        .map(|a| run_planning(cfg, a).map_err(Failure::from))
        .collect::<CliResult<Vec<PlanningRun>>>()?;
    if format == Format::Json {
        return to_json(&Runs { seed: cfg.seed, config: cfg, runs, sup_residual: None });
    }
    let rows = runs
        .iter()
        .map(|run| {
            let r = &run.report;
            vec![
                r.allocation_label.clone(),
                opt(r.mean_u_star),
                opt(r.q10_u_star),
                opt(r.q90_u_star),
                opt(r.mean_violation_prob),
                opt(r.q90_violation_prob),
                opt(r.mean_terminal_output),
            ]
        })
        .collect();
    csv_text(
        &[
            "allocation",
            "mean_u_star",
            "Q10_u_star",
            "Q90_u_star",
            "mean_violation_prob",
            "Q90_violation_prob",
            "mean_terminal_output",
        ],
        rows,
    )
}

fn fig1(cfg: &ExperimentConfig, format: Format) -> CliResult<String> {
    let allocs = profiles(cfg)?;
    let runs = allocs
        .iter()
        .map(|a| run_allocation(cfg, a).map_err(Failure::from))
        .collect::<CliResult<Vec<AllocationRun>>>()?;
    // the uniform profile fixes the joint baseline's (eps, delta) budget
    let sup = run_sup_baseline(cfg, &allocs[1])?;
    if format == Format::Json {
        return to_json(&Runs { seed: cfg.seed, config: cfg, runs, sup_residual: Some(sup) });
    }
    let mut rows = Vec::new();
    for run in runs.iter().chain(std::iter::once(&sup)) {
        let q = run.mean_margins();
        let risk = run.mean_stage_risks();
        for k in 0..q.len() {
            rows.push(vec![
                (k + 1).to_string(),
                run.report.allocation_label.clone(),
                num(q[k]),
                num(risk[k]),
            ]);
        }
    }
    csv_text(&["stage", "allocation", "mean_q", "mean_stage_risk"], rows)
}

fn fig2(cfg: &ExperimentConfig, count: usize, format: Format) -> CliResult<String> {
    let alloc = Profile::Increasing.allocation(cfg.m)?;
    let snap = tube_snapshot(cfg, &alloc, count)?;
    if format == Format::Json {
        return to_json(&serde_json::json!({ "seed": cfg.seed, "config": cfg, "snapshot": snap }));
    }
    let mut header: Vec<String> = ["stage", "nominal", "lower", "upper", "y_max"].map(String::from).to_vec();
    header.extend((1..=count).map(|i| format!("traj_{i}")));
    let rows = (0..snap.nominal.len())
        .map(|k| {
            let (y, q) = (snap.nominal[k], snap.margins[k]);
            let mut row = vec![k.to_string(), num(y), num(y - q), num(y + q), num(snap.y_max)];
            row.extend(snap.trajectories.iter().map(|t| num(t[k])));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(&header, rows)
}

#[derive(Serialize)]
struct Savings {
    blocks: usize,
    eps_k: f64,
    eps_total_additive: f64,
    eps_total_mult: f64,
    eps_uniform_solved: f64,
}

fn multiplicative(format: Option<Format>) -> CliResult<String> {
    let blocks = vec![certificate(120, 1, 0.055)?; 4];
    let s = Savings {
        blocks: 4,
        eps_k: 0.055,
        eps_total_additive: 0.22,
        eps_total_mult: compose_multiplicative(blocks)?.eps_total,
        eps_uniform_solved: solve_uniform_eps(4, 0.22, CompositionMode::Multiplicative)?,
    };
    let pairs = [
        ("blocks", s.blocks.to_string()),
        ("eps_k", num(s.eps_k)),
        ("eps_total_additive", num(s.eps_total_additive)),
        ("eps_total_mult", num(s.eps_total_mult)),
        ("eps_uniform_solved", num(s.eps_uniform_solved)),
    ];
    match format {
        Some(Format::Json) => to_json(&s),
        Some(Format::Csv) => csv_text(
            &["quantity", "value"],
            pairs.into_iter().map(|(k, v)| vec![k.to_string(), v]).collect(),
        ),
        None => Ok(pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()),
    }
}

pub fn run(args: Args) -> CliResult {
    let cfg = config(&args);
    let format = args.format.unwrap_or(Format::Csv);
    let text = match args.target {
        Target::Table1 => table1(&cfg, format)?,
        Target::Table2 => table2(&cfg, format)?,
        Target::Fig1 => fig1(&cfg, format)?,
        Target::Fig2 => fig2(&cfg, args.trajectories, format)?,
        Target::Multiplicative => multiplicative(args.format)?,
    };
    emit(&text, args.output.as_deref())
}
