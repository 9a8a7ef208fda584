//! Bilinear stochastic plant and the Monte Carlo allocation experiments.
//!
//! Plant: `x_{t+1} = a x_t + b u_t + c x_t u_t + w_t`, `y_t = x_t`,
//! `w_t ~ N(0, noise_std^2)`. Tasks draw `y0 ~ N(0, y0_std^2)` and inputs
//! i.i.d. uniform on `[input_low, input_high]`.
//!
//! Each calibration set `i` owns the random stream
//! `(seed, CALIBRATION_SETS, i)`: the first `m` tasks drawn from it calibrate
//! the tube, the following ones are that set's fresh test tasks. All
//! allocations therefore see the same calibration data for a given seed. The
//! planning experiment reuses those calibration tasks and draws its rollouts
//! from `(seed, PLANNING, i)`.
//!
//! Planning evaluates from the fixed `y0 = 0.1` while calibration tasks start
//! from `y0 ~ N(0, 1)`; this shift is part of the experiment and is not
//! corrected. A rollout counts as a violation when any stage output exceeds
//! `y_max`. Test tasks are redrawn per calibration set, and terminal outputs
//! are averaged within a set before averaging over sets.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{Allocation, Profile, PROFILE_SAMPLE_SIZE};
use crate::seed::{domain, substream};
use crate::tube::{
    calibrate_sup_tube, calibrate_tube, predict_multistep, stage_residuals, tighten_and_plan,
    CalibratedTube, CalibrationTask, NominalPredictor,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub noise_std: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            a: 0.78,
            b: 0.35,
            c: 0.12,
            noise_std: 0.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub y0_std: f64,
    pub input_low: f64,
    pub input_high: f64,
    pub horizon: usize,
}

impl Default for TaskDistribution {
    fn default() -> Self {
        Self {
            y0_std: 1.0,
            input_low: -1.0,
            input_high: 1.0,
            horizon: 4,
        }
    }
}

pub fn simulate_plant<R: Rng + ?Sized>(pp: &PlantParams, y0: f64, inputs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::Empty("plant inputs"));
    }
    let noise = Normal::new(0.0, pp.noise_std).map_err(|e| Error::domain(e.to_string()))?;
    let mut x = y0;
    Ok(inputs
        .iter()
        .map(|&u| {
            x = pp.a * x + pp.b * u + pp.c * x * u + noise.sample(rng);
            x
        })
        .collect())
}

pub fn generate_tasks<R: Rng + ?Sized>(
    td: &TaskDistribution,
    pp: &PlantParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<CalibrationTask<f64>>> {
    if count == 0 {
        return Err(Error::Empty("task count"));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(td.input_low < td.input_high) || td.horizon == 0 {
        return Err(Error::domain("task distribution needs input_low < input_high and horizon >= 1"));
    }
    let y0_law = Normal::new(0.0, td.y0_std).map_err(|e| Error::domain(e.to_string()))?;
    let u_law = Uniform::new(td.input_low, td.input_high).map_err(|e| Error::domain(e.to_string()))?;
    (0..count)
        .map(|_| {
            let y0 = y0_law.sample(rng);
            let inputs: Vec<f64> = (0..td.horizon).map(|_| u_law.sample(rng)).collect();
            let outputs = simulate_plant(pp, y0, &inputs, rng)?;
            CalibrationTask::new(y0, inputs, outputs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub stage_risks: Vec<f64>,
    pub traj_risk: f64,
    /// Raw miss counts behind the fractions.
    pub stage_misses: Vec<usize>,
    pub traj_misses: usize,
    pub test_tasks: usize,
}

impl RiskEstimate {
    /// `max_k misses_k <= traj_misses <= sum_k misses_k`, checked on counts.
    pub fn check_union_bound(&self) -> Result<()> {
        let sum: usize = self.stage_misses.iter().sum();
        let max = self.stage_misses.iter().copied().max().unwrap_or(0);
        if self.traj_misses > sum || self.traj_misses < max {
            return Err(Error::Invariant(format!(
                "trajectory misses {} outside [max stage {}, sum of stages {}]",
                self.traj_misses, max, sum
            )));
        }
        Ok(())
    }
}

pub fn estimate_risks(
    tube: &CalibratedTube<f64>,
    p: &NominalPredictor<f64>,
    test_tasks: &[CalibrationTask<f64>],
) -> Result<RiskEstimate> {
    if test_tasks.is_empty() {
        return Err(Error::Empty("test tasks"));
    }
    let h = tube.margins.len();
    let mut stage_misses = vec![0usize; h];
    let mut traj_misses = 0usize;
    for task in test_tasks {
        let res = stage_residuals(p, task)?;
        let mut missed = false;
        for (k, (r, q)) in res.iter().zip(&tube.margins).enumerate() {
            if r > q {
                stage_misses[k] += 1;
                missed = true;
            }
        }
        traj_misses += usize::from(missed);
    }
    let n = test_tasks.len() as f64;
    Ok(RiskEstimate {
        stage_risks: stage_misses.iter().map(|&c| c as f64 / n).collect(),
        traj_risk: traj_misses as f64 / n,
        stage_misses,
        traj_misses,
        test_tasks: test_tasks.len(),
    })
}

/// Settings shared by the Monte Carlo experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub calib_sets: usize,
    pub test_tasks: usize,
    pub rollouts: usize,
    pub seed: u64,
    pub m: usize,
    pub plant: PlantParams,
    pub tasks: TaskDistribution,
    pub predictor: NominalPredictor<f64>,
    pub plan_y0: f64,
    pub y_max: f64,
}

impl ExperimentConfig {
    /// 1,000 calibration sets, 5,000 test tasks, 4,000 rollouts.
    pub fn full(seed: u64) -> Self {
        Self {
            calib_sets: 1_000,
            test_tasks: 5_000,
            rollouts: 4_000,
            seed,
            m: PROFILE_SAMPLE_SIZE,
            plant: PlantParams::default(),
            tasks: TaskDistribution::default(),
            predictor: NominalPredictor::identified(),
            plan_y0: 0.1,
            y_max: 0.7,
        }
    }

    /// 100 / 500 / 400, for quick runs.
    pub fn fast(seed: u64) -> Self {
        Self {
            calib_sets: 100,
            test_tasks: 500,
            rollouts: 400,
            ..Self::full(seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.calib_sets == 0 || self.test_tasks == 0 || self.rollouts == 0 {
            return Err(Error::domain("replicate counts must be positive"));
        }
        if self.tasks.horizon != self.predictor.horizon {
            return Err(Error::DimensionMismatch {
                what: "task horizon vs predictor horizon",
                expected: self.predictor.horizon,
                found: self.tasks.horizon,
            });
        }
        Ok(())
    }

    /// Calibration and test tasks of calibration set `index`.
    pub fn calibration_set(
        &self,
        index: usize,
        with_tests: bool,
    ) -> Result<(TaskSet, TaskSet)> {
        let mut rng = substream(self.seed, domain::CALIBRATION_SETS, index as u64);
        let calib = generate_tasks(&self.tasks, &self.plant, self.m, &mut rng)?;
        let tests = if with_tests {
            generate_tasks(&self.tasks, &self.plant, self.test_tasks, &mut rng)?
        } else {
            Vec::new()
        };
        Ok((calib, tests))
    }
}

pub type TaskSet = Vec<CalibrationTask<f64>>;

/// Aggregated statistics; fields not produced by an experiment stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub allocation_label: String,
    pub ranks: Vec<usize>,
    pub eps: Vec<f64>,
    pub certificate: f64,
    pub calibration_sets: usize,
    /// Test tasks per set (allocation runs) or rollouts per set (planning runs).
    pub test_tasks_per_set: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_traj_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q90_traj_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q99_traj_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_u_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q10_u_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q90_u_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_violation_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q90_violation_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_terminal_output: Option<f64>,
}

impl ExperimentReport {
    fn new(alloc: &Allocation<f64>, calibration_sets: usize, per_set: usize) -> Self {
        Self {
            allocation_label: alloc.label.clone(),
            ranks: alloc.ranks(),
            eps: alloc.eps(),
            certificate: alloc.certificate(),
            calibration_sets,
            test_tasks_per_set: per_set,
            mean_traj_risk: None,
            q90_traj_risk: None,
            q99_traj_risk: None,
            mean_u_star: None,
            q10_u_star: None,
            q90_u_star: None,
            mean_violation_prob: None,
            q90_violation_prob: None,
            mean_terminal_output: None,
        }
    }
}

/// One allocation run with its per-calibration-set arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRun {
    pub report: ExperimentReport,
    pub traj_risks: Vec<f64>,
    /// `margins[i][k]`: half-width of stage `k` in calibration set `i`.
    pub margins: Vec<Vec<f64>>,
    pub stage_risks: Vec<Vec<f64>>,
}

impl AllocationRun {
    pub fn mean_margins(&self) -> Vec<f64> {
        column_means(&self.margins)
    }

    pub fn mean_stage_risks(&self) -> Vec<f64> {
        column_means(&self.stage_risks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningRun {
    pub report: ExperimentReport,
    pub u_star: Vec<f64>,
    pub violation_probs: Vec<f64>,
    pub terminal_outputs: Vec<f64>,
    pub infeasible_sets: usize,
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|k| rows.iter().map(|row| row[k]).sum::<f64>() / n)
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty sample");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn run_tubes<F>(cfg: &ExperimentConfig, alloc: &Allocation<f64>, build: F) -> Result<AllocationRun>
where
    F: Fn(&[CalibrationTask<f64>]) -> Result<CalibratedTube<f64>> + Sync,
{
    cfg.validate()?;
    let per_set: Vec<(CalibratedTube<f64>, RiskEstimate)> = (0..cfg.calib_sets)
        .into_par_iter()
        .map(|i| {
            let (calib, tests) = cfg.calibration_set(i, true)?;
            let tube = build(&calib)?;
            let risks = estimate_risks(&tube, &cfg.predictor, &tests)?;
            risks.check_union_bound()?;
            Ok((tube, risks))
        })
        .collect::<Result<_>>()?;

    let traj_risks: Vec<f64> = per_set.iter().map(|(_, r)| r.traj_risk).collect();
    let mut report = ExperimentReport::new(alloc, cfg.calib_sets, cfg.test_tasks);
    report.mean_traj_risk = Some(mean(&traj_risks));
    report.q90_traj_risk = Some(quantile(&traj_risks, 0.90));
    report.q99_traj_risk = Some(quantile(&traj_risks, 0.99));
    Ok(AllocationRun {
        report,
        margins: per_set.iter().map(|(t, _)| t.margins.clone()).collect(),
        stage_risks: per_set.iter().map(|(_, r)| r.stage_risks.clone()).collect(),
        traj_risks,
    })
}

/// Calibrates one tube per calibration set with `alloc` and estimates its
/// stage-wise and trajectory risks on fresh test tasks.
pub fn run_allocation(cfg: &ExperimentConfig, alloc: &Allocation<f64>) -> Result<AllocationRun> {
    if alloc.m() != cfg.m {
        return Err(Error::DimensionMismatch {
            what: "allocation sample size",
            expected: cfg.m,
            found: alloc.m(),
        });
    }
    run_tubes(cfg, alloc, |calib| calibrate_tube(&cfg.predictor, calib, alloc))
}

/// [`run_allocation`] for one of the named profiles (`"increasing"`, ...).
pub fn run_allocation_experiment(label: &str, cfg: &ExperimentConfig) -> Result<AllocationRun> {
    let alloc = Profile::parse(label)?.allocation(cfg.m)?;
    run_allocation(cfg, &alloc)
}

/// Joint baseline calibrating `max_k R_{j,k}` at the total risk budget of
/// `reference`, with rank chosen to keep `delta` within its `delta_total`.
pub fn run_sup_baseline(cfg: &ExperimentConfig, reference: &Allocation<f64>) -> Result<AllocationRun> {
    let (calib, _) = cfg.calibration_set(0, false)?;
    let template = calibrate_sup_tube(&cfg.predictor, &calib, reference.eps_total, reference.delta_total)?;
    let mut run = run_tubes(cfg, &template.allocation, |calib| {
        calibrate_sup_tube(&cfg.predictor, calib, reference.eps_total, reference.delta_total)
    })?;
    run.report.allocation_label = template.allocation.label;
    Ok(run)
}

/// Planning experiment: per calibration set, plan the largest admissible
/// constant input against the tightened constraints, then roll the true
/// plant out `rollouts` times from `plan_y0`.
pub fn run_planning(cfg: &ExperimentConfig, alloc: &Allocation<f64>) -> Result<PlanningRun> {
    cfg.validate()?;
    let h = cfg.predictor.horizon;
    let per_set: Vec<(f64, bool, f64, f64)> = (0..cfg.calib_sets)
        .into_par_iter()
        .map(|i| {
            let (calib, _) = cfg.calibration_set(i, false)?;
            let tube = calibrate_tube(&cfg.predictor, &calib, alloc)?;
            let plan = tighten_and_plan(&tube.margins, &cfg.predictor, cfg.plan_y0, cfg.y_max)?;
            let inputs = vec![plan.u_star; h];
            let mut rng = substream(cfg.seed, domain::PLANNING, i as u64);
            let mut violations = 0usize;
            let mut terminal = 0.0;
            for _ in 0..cfg.rollouts {
                let y = simulate_plant(&cfg.plant, cfg.plan_y0, &inputs, &mut rng)?;
                violations += usize::from(y.iter().any(|&v| v > cfg.y_max));
                terminal += y[h - 1];
            }
            let n = cfg.rollouts as f64;
            Ok((plan.u_star, plan.feasible, violations as f64 / n, terminal / n))
        })
        .collect::<Result<_>>()?;

    let u_star: Vec<f64> = per_set.iter().map(|s| s.0).collect();
    let violation_probs: Vec<f64> = per_set.iter().map(|s| s.2).collect();
    let terminal_outputs: Vec<f64> = per_set.iter().map(|s| s.3).collect();
    let mut report = ExperimentReport::new(alloc, cfg.calib_sets, cfg.rollouts);
    report.mean_u_star = Some(mean(&u_star));
    report.q10_u_star = Some(quantile(&u_star, 0.10));
    report.q90_u_star = Some(quantile(&u_star, 0.90));
    report.mean_violation_prob = Some(mean(&violation_probs));
    report.q90_violation_prob = Some(quantile(&violation_probs, 0.90));
    report.mean_terminal_output = Some(mean(&terminal_outputs));
    Ok(PlanningRun {
        report,
        infeasible_sets: per_set.iter().filter(|s| !s.1).count(),
        u_star,
        violation_probs,
        terminal_outputs,
    })
}

pub fn run_planning_experiment(label: &str, cfg: &ExperimentConfig) -> Result<PlanningRun> {
    let alloc = Profile::parse(label)?.allocation(cfg.m)?;
    run_planning(cfg, &alloc)
}

/// One representative tightened tube with sampled true trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSnapshot {
    pub allocation_label: String,
    pub u_star: f64,
    pub y_max: f64,
    /// Stages `0..=H`; stage 0 is the initial output.
    pub nominal: Vec<f64>,
    /// Half-widths for stages `0..=H` (zero at stage 0).
    pub margins: Vec<f64>,
    pub trajectories: Vec<Vec<f64>>,
}

/// Tube from calibration set 0 under `alloc`, its planned input, and
/// `count` plant trajectories under that input.
pub fn tube_snapshot(cfg: &ExperimentConfig, alloc: &Allocation<f64>, count: usize) -> Result<TubeSnapshot> {
    cfg.validate()?;
    let h = cfg.predictor.horizon;
    let (calib, _) = cfg.calibration_set(0, false)?;
    let tube = calibrate_tube(&cfg.predictor, &calib, alloc)?;
    let plan = tighten_and_plan(&tube.margins, &cfg.predictor, cfg.plan_y0, cfg.y_max)?;
    let inputs = vec![plan.u_star; h];

    let mut nominal = vec![cfg.plan_y0];
    nominal.extend(predict_multistep(&cfg.predictor, cfg.plan_y0, &inputs)?);
    let mut margins = vec![0.0];
    margins.extend(&tube.margins);

    let mut rng = substream(cfg.seed, domain::FIGURE, 0);
    let trajectories = (0..count)
        .map(|_| {
            let mut y = vec![cfg.plan_y0];
            y.extend(simulate_plant(&cfg.plant, cfg.plan_y0, &inputs, &mut rng)?);
            Ok(y)
        })
        .collect::<Result<_>>()?;
    Ok(TubeSnapshot {
        allocation_label: alloc.label.clone(),
        u_star: plan.u_star,
        y_max: cfg.y_max,
        nominal,
        margins,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet() -> PlantParams {
        PlantParams {
            noise_std: 0.0,
            ..PlantParams::default()
        }
    }

    #[test]
    fn deterministic_plant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pp = quiet();
        assert_eq!(simulate_plant(&pp, 1.0, &[0.0], &mut rng).unwrap(), vec![0.78]);
        assert_eq!(simulate_plant(&pp, 0.0, &[1.0], &mut rng).unwrap(), vec![0.35]);
        assert!((simulate_plant(&pp, 1.0, &[1.0], &mut rng).unwrap()[0] - 1.25).abs() < 1e-15);
        assert!(simulate_plant(&pp, 1.0, &[], &mut rng).is_err());
    }

    #[test]
    fn deterministic_plant_is_the_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pp = quiet();
        let u = [0.5, -0.25, 1.0, 0.0];
        let y = simulate_plant(&pp, 0.3, &u, &mut rng).unwrap();
        let mut x = 0.3;
        for (k, &uk) in u.iter().enumerate() {
            x = 0.78 * x + 0.35 * uk + 0.12 * x * uk;
            assert_eq!(y[k], x);
        }
    }

    #[test]
    fn task_generation() {
        let td = TaskDistribution::default();
        let pp = PlantParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!(generate_tasks(&td, &pp, 0, &mut rng).is_err());
        let tasks = generate_tasks(&td, &pp, 120, &mut rng).unwrap();
        assert_eq!(tasks.len(), 120);
        assert!(tasks.iter().all(|t| t.inputs.len() == 4 && t.outputs.len() == 4));
        assert!(tasks.iter().flat_map(|t| &t.inputs).all(|&u| (-1.0..=1.0).contains(&u)));
        let again = generate_tasks(&td, &pp, 120, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let first = generate_tasks(&td, &pp, 120, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(again, first);
    }

    #[test]
    fn risk_extremes() {
        let cfg = ExperimentConfig::fast(1);
        let (calib, tests) = cfg.calibration_set(0, true).unwrap();
        let alloc = Profile::Increasing.allocation(120).unwrap();
        let mut tube = calibrate_tube(&cfg.predictor, &calib, &alloc).unwrap();

        tube.margins = vec![1e9; 4];
        let r = estimate_risks(&tube, &cfg.predictor, &tests).unwrap();
        assert_eq!(r.traj_risk, 0.0);
        assert!(r.stage_risks.iter().all(|&s| s == 0.0));

        tube.margins = vec![0.0; 4];
        let r = estimate_risks(&tube, &cfg.predictor, &tests).unwrap();
        assert_eq!(r.traj_risk, 1.0);
        r.check_union_bound().unwrap();

        assert!(estimate_risks(&tube, &cfg.predictor, &[]).is_err());
    }

    #[test]
    fn union_bound_check_rejects_bad_counts() {
        let bad = RiskEstimate {
            stage_risks: vec![0.1, 0.1],
            traj_risk: 0.3,
            stage_misses: vec![1, 1],
            traj_misses: 3,
            test_tasks: 10,
        };
        assert!(bad.check_union_bound().is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.9), 4.6);
        assert_eq!(quantile(&xs, 1.0), 5.0);
    }

    #[test]
    fn unknown_label() {
        let cfg = ExperimentConfig::fast(1);
        assert!(matches!(run_allocation_experiment("sideways", &cfg), Err(Error::UnknownLabel(_))));
        assert!(matches!(run_planning_experiment("sideways", &cfg), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn snapshot_shape() {
        let cfg = ExperimentConfig::fast(7);
        let alloc = Profile::Increasing.allocation(120).unwrap();
        let s = tube_snapshot(&cfg, &alloc, 20).unwrap();
        assert_eq!(s.nominal.len(), 5);
        assert_eq!(s.margins[0], 0.0);
        assert_eq!(s.trajectories.len(), 20);
        assert!(s.trajectories.iter().all(|t| t.len() == 5 && t[0] == 0.1));
    }
}
