//! Scalar sample-and-discard scenario program and checks of the forward bridge.
//!
//! The program is `min q s.t. R_i <= q for all but r indices`. Its discard set
//! `D_r(S)` is the top-`r` scores, and the reconstruction set `C_r(S)` is the
//! single retained score that attains the optimum (so `zeta = 1`). Any retained
//! score outside `C_r(S)` can be removed without moving the decision.
//!
//! The exchangeability argument says a fresh point `R` violates the decision
//! computed from `S` only if, in the augmented sample `S+ = (S, R)`, the fresh
//! index lands in `D_r(S+) ∪ C_r(S+)`. [`verify_forward_bridge`] checks that
//! containment trial by trial and estimates `E[V_r(S)] = (r + 1)/(m + 1)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::calibration::select_threshold;
use crate::seed::{domain, substream};
use crate::stat_core::{beta_mean, BetaParams};
use crate::{Error, Real, Result};

/// Reconstruction-set size bound of the scalar program.
pub const ZETA: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome<T> {
    pub decision: T,
    /// 0-based, ascending.
    pub discarded: Vec<usize>,
    /// 0-based; a single index for the scalar program.
    pub reconstruction: Vec<usize>,
    pub m: usize,
    pub r: usize,
}

impl<T> ScenarioOutcome<T> {
    /// Whether index `i` belongs to `D_r(S) ∪ C_r(S)`.
    pub fn is_exceptional(&self, i: usize) -> bool {
        self.discarded.binary_search(&i).is_ok() || self.reconstruction.contains(&i)
    }
}

pub fn solve_discard<T: Real>(scores: &[T], r: usize) -> Result<ScenarioOutcome<T>> {
    let t = select_threshold(scores, r)?;
    Ok(ScenarioOutcome {
        decision: t.q,
        discarded: t.discarded,
        reconstruction: vec![t.binding],
        m: scores.len(),
        r,
    })
}

/// Leave-one-out stability: removing any sample outside `D ∪ C` keeps the decision.
pub fn check_stability<T: Real>(scores: &[T], r: usize) -> Result<bool> {
    let m = scores.len();
    if m < 2 || r + 2 > m {
        return Err(Error::domain(format!(
            "stability check needs m >= 2 and r <= m - 2, got m={m}, r={r}"
        )));
    }
    let base = solve_discard(scores, r)?;
    let mut reduced = Vec::with_capacity(m - 1);
    for j in (0..m).filter(|&j| !base.is_exceptional(j)) {
        reduced.clear();
        reduced.extend(scores.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v));
        if solve_discard(&reduced, r)?.decision != base.decision {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Continuous score law used in the verification experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreDistribution {
    #[default]
    Normal,
    Uniform,
    Exponential,
}

impl ScoreDistribution {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ScoreDistribution::Normal => StandardNormal.sample(rng),
            ScoreDistribution::Uniform => rng.random::<f64>(),
            ScoreDistribution::Exponential => Exp1.sample(rng),
        }
    }

    /// `P{R > x}`.
    pub fn survival(self, x: f64) -> f64 {
        match self {
            ScoreDistribution::Normal => Normal::standard().sf(x),
            ScoreDistribution::Uniform => (1.0 - x).clamp(0.0, 1.0),
            ScoreDistribution::Exponential => (-x.max(0.0)).exp(),
        }
    }

    pub fn cdf(self, x: f64) -> f64 {
        match self {
            ScoreDistribution::Normal => Normal::standard().cdf(x),
            _ => 1.0 - self.survival(x),
        }
    }
}

impl std::str::FromStr for ScoreDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(ScoreDistribution::Normal),
            "uniform" => Ok(ScoreDistribution::Uniform),
            "exponential" | "exp" => Ok(ScoreDistribution::Exponential),
            _ => Err(Error::domain(format!("unknown score distribution {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub m: usize,
    pub r: usize,
    pub trials: u64,
    pub seed: u64,
    pub distribution: ScoreDistribution,
}

impl BridgeConfig {
    pub fn new(m: usize, r: usize, trials: u64, seed: u64) -> Self {
        Self {
            m,
            r,
            trials,
            seed,
            distribution: ScoreDistribution::Normal,
        }
    }

    pub fn with_distribution(mut self, distribution: ScoreDistribution) -> Self {
        self.distribution = distribution;
        self
    }

    fn validate(&self) -> Result<()> {
        crate::calibration::check_rank(self.m, self.r)?;
        if self.trials == 0 {
            return Err(Error::domain("trials must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeStats {
    pub m: usize,
    pub r: usize,
    pub zeta: usize,
    pub trials: u64,
    /// Monte Carlo mean of `V_r(S) = P{R > q_r(S) | S}`.
    pub mean_violation: f64,
    pub mean_violation_se: f64,
    /// `(r + 1) / (m + 1)`.
    pub exact_mean: f64,
    /// `(r + zeta) / (m + 1)`.
    pub bound: f64,
    /// Frequency of the fresh point violating the decision computed from `S`.
    pub fresh_violation_rate: f64,
    /// Frequency of the fresh index landing in `D ∪ C` of the augmented solve.
    pub inclusion_rate: f64,
    pub inclusion_rate_se: f64,
    pub containment_violations: u64,
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    violation: f64,
    fresh_violates: bool,
    included: bool,
}

fn run_trial(cfg: &BridgeConfig, index: u64) -> Result<Trial> {
    let mut rng = substream(cfg.seed, domain::FORWARD_BRIDGE, index);
    let mut scores: Vec<f64> = (0..cfg.m).map(|_| cfg.distribution.sample(&mut rng)).collect();
    let fresh = cfg.distribution.sample(&mut rng);

    let outcome = solve_discard(&scores, cfg.r)?;
    let violation = cfg.distribution.survival(outcome.decision);
    let fresh_violates = fresh > outcome.decision;

    scores.push(fresh);
    let augmented = solve_discard(&scores, cfg.r)?;
    Ok(Trial {
        violation,
        fresh_violates,
        included: augmented.is_exceptional(cfg.m),
    })
}

fn run_trials(cfg: &BridgeConfig) -> Result<Vec<Trial>> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect()
}

/// Samples of `V_r(S)` under the configured score law, one per trial.
pub fn sample_violations(cfg: &BridgeConfig) -> Result<Vec<f64>> {
    Ok(run_trials(cfg)?.into_iter().map(|t| t.violation).collect())
}

/// Runs the augmented-sample experiment and reports statistics, including the
/// number of containment violations, without failing on them.
pub fn forward_bridge_stats(cfg: &BridgeConfig) -> Result<BridgeStats> {
    summarize(cfg, &run_trials(cfg)?)
}

fn summarize(cfg: &BridgeConfig, trials: &[Trial]) -> Result<BridgeStats> {
    let n = trials.len() as f64;

    let mean_violation = trials.iter().map(|t| t.violation).sum::<f64>() / n;
    let var = trials
        .iter()
        .map(|t| (t.violation - mean_violation).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let fresh = trials.iter().filter(|t| t.fresh_violates).count() as f64 / n;
    let inclusion = trials.iter().filter(|t| t.included).count() as f64 / n;
    let containment_violations = trials
        .iter()
        .filter(|t| t.fresh_violates && !t.included)
        .count() as u64;

    let law = BetaParams::<f64>::violation_law(cfg.m, cfg.r)?;
    Ok(BridgeStats {
        m: cfg.m,
        r: cfg.r,
        zeta: ZETA,
        trials: cfg.trials,
        mean_violation,
        mean_violation_se: (var / n).sqrt(),
        exact_mean: beta_mean(law),
        bound: (cfg.r + ZETA) as f64 / (cfg.m + 1) as f64,
        fresh_violation_rate: fresh,
        inclusion_rate: inclusion,
        inclusion_rate_se: (inclusion * (1.0 - inclusion) / n).sqrt(),
        containment_violations,
    })
}

/// Like [`forward_bridge_stats`], but a single containment counterexample is an
/// error: it would mean the discard/reconstruction maps are wrong.
pub fn verify_forward_bridge(cfg: &BridgeConfig) -> Result<BridgeStats> {
    let trials = run_trials(cfg)?;
    let stats = summarize(cfg, &trials)?;
    if let Some(first) = trials.iter().position(|t| t.fresh_violates && !t.included) {
        return Err(Error::ContainmentViolated {
            count: stats.containment_violations,
            first: first as u64,
        });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCORES: [f64; 5] = [0.1, 0.5, 0.3, 0.9, 0.7];

    #[test]
    fn solve_examples() {
        let o = solve_discard(&SCORES, 1).unwrap();
        assert_eq!((o.decision, o.discarded.clone(), o.reconstruction.clone()), (0.7, vec![3], vec![4]));
        let o = solve_discard(&SCORES, 0).unwrap();
        assert_eq!((o.decision, o.reconstruction), (0.9, vec![3]));
        let o = solve_discard(&SCORES, 4).unwrap();
        assert_eq!(o.decision, 0.1);
        assert!(solve_discard(&SCORES, 5).is_err());
        assert!(solve_discard::<f64>(&[], 0).is_err());
    }

    #[test]
    fn stability_examples() {
        assert!(check_stability(&SCORES, 1).unwrap());
        assert!(check_stability(&[1.0, 2.0], 0).unwrap());
        assert!(check_stability(&[1.0], 0).is_err());
        assert!(check_stability(&SCORES, 4).is_err());
    }

    #[test]
    fn exhaustive_leave_one_out_on_example() {
        let base = solve_discard(&SCORES, 1).unwrap();
        for j in 0..SCORES.len() {
            let reduced: Vec<f64> = SCORES.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v).collect();
            let d = solve_discard(&reduced, 1).unwrap().decision;
            if base.is_exceptional(j) {
                // removing the binding or a discarded score moves the optimum
                assert_ne!(d, base.decision, "j={j}");
            } else {
                assert_eq!(d, base.decision, "j={j}");
            }
        }
    }

    #[test]
    fn single_point_bridge() {
        let s = verify_forward_bridge(&BridgeConfig::new(1, 0, 10_000, 3)).unwrap();
        assert!((s.mean_violation - 0.5).abs() < 0.02);
        assert!((s.inclusion_rate - 0.5).abs() < 0.02);
        assert_eq!(s.bound, 0.5);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(verify_forward_bridge(&BridgeConfig::new(10, 0, 0, 1)).is_err());
        assert!(verify_forward_bridge(&BridgeConfig::new(10, 10, 5, 1)).is_err());
    }

    #[test]
    fn distribution_helpers() {
        assert!((ScoreDistribution::Normal.survival(0.0) - 0.5).abs() < 1e-15);
        assert!((ScoreDistribution::Exponential.cdf(1.0) - (1.0 - (-1.0_f64).exp())).abs() < 1e-15);
        assert_eq!(ScoreDistribution::Uniform.survival(0.25), 0.75);
        assert_eq!("exp".parse::<ScoreDistribution>().unwrap(), ScoreDistribution::Exponential);
    }
}
