//! Calibrated multi-step output tubes and constraint tightening.
//!
//! A nominal linear surrogate `y_{t+1} = a_hat * y_t + b_hat * u_t` is iterated
//! open loop over the horizon, feeding back its own predictions. For each
//! stage `k` the absolute residual `|Y^(k) - y_hat_k|` is calibrated on its own
//! with discard rank `r_k`; the resulting half-widths `q_k` form the tube
//! `|y^(k) - y_hat_k| <= q_k` (closed intervals). The joint guarantee is the
//! allocation's composed budget.

use serde::{Deserialize, Serialize};

use crate::calibration::{certificate, select_threshold};
use crate::composition::{compose_additive, Allocation};
use crate::{Error, Real, Result};

/// One prediction task: regressor `(y0, u_0..u_{H-1})` and realized outputs `Y^(1..H)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTask<T> {
    pub y0: T,
    pub inputs: Vec<T>,
    pub outputs: Vec<T>,
}

impl<T: Real> CalibrationTask<T> {
    pub fn new(y0: T, inputs: Vec<T>, outputs: Vec<T>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Empty("planned inputs"));
        }
        if outputs.len() != inputs.len() {
            return Err(Error::DimensionMismatch {
                what: "task outputs",
                expected: inputs.len(),
                found: outputs.len(),
            });
        }
        Ok(Self { y0, inputs, outputs })
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalPredictor<T> {
    pub a_hat: T,
    pub b_hat: T,
    pub horizon: usize,
}

/// Identified surrogate of the bilinear plant.
pub const A_HAT: f64 = 0.7799;
pub const B_HAT: f64 = 0.3491;

impl<T: Real> NominalPredictor<T> {
    pub fn new(a_hat: T, b_hat: T, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::domain("predictor horizon must be at least 1"));
        }
        Ok(Self { a_hat, b_hat, horizon })
    }

    /// The identified surrogate `(0.7799, 0.3491)` over four steps.
    pub fn identified() -> Self {
        Self {
            a_hat: T::lit(A_HAT),
            b_hat: T::lit(B_HAT),
            horizon: 4,
        }
    }

    /// Stage-`k` prediction (1-based) under a constant input `u`:
    /// `a^k y0 + b u sum_{j<k} a^j`.
    pub fn predict_constant(&self, y0: T, u: T, k: usize) -> T {
        let (pow, geo) = self.powers(k);
        pow * y0 + self.b_hat * u * geo
    }

    /// `(a^k, sum_{j<k} a^j)`.
    fn powers(&self, k: usize) -> (T, T) {
        let mut pow = T::one();
        let mut geo = T::zero();
        for _ in 0..k {
            geo = geo + pow;
            pow = pow * self.a_hat;
        }
        (pow, geo)
    }
}

/// Open-loop `H`-step prediction feeding back the surrogate's own outputs.
pub fn predict_multistep<T: Real>(p: &NominalPredictor<T>, y0: T, inputs: &[T]) -> Result<Vec<T>> {
    if inputs.len() != p.horizon {
        return Err(Error::DimensionMismatch {
            what: "planned inputs",
            expected: p.horizon,
            found: inputs.len(),
        });
    }
    let mut y = y0;
    Ok(inputs
        .iter()
        .map(|&u| {
            y = p.a_hat * y + p.b_hat * u;
            y
        })
        .collect())
}

/// Absolute residuals of one task, stage by stage.
pub fn stage_residuals<T: Real>(p: &NominalPredictor<T>, task: &CalibrationTask<T>) -> Result<Vec<T>> {
    if task.outputs.len() != p.horizon {
        return Err(Error::DimensionMismatch {
            what: "task outputs",
            expected: p.horizon,
            found: task.outputs.len(),
        });
    }
    let pred = predict_multistep(p, task.y0, &task.inputs)?;
    Ok(task
        .outputs
        .iter()
        .zip(pred)
        .map(|(&y, yh)| (y - yh).abs())
        .collect())
}

/// Row `j`, column `k`: `|Y_j^(k) - y_hat_k(xi_j)|`.
pub fn residual_scores<T: Real>(p: &NominalPredictor<T>, tasks: &[CalibrationTask<T>]) -> Result<Vec<Vec<T>>> {
    if tasks.is_empty() {
        return Err(Error::Empty("calibration tasks"));
    }
    tasks.iter().map(|t| stage_residuals(p, t)).collect()
}

fn column<T: Copy>(rows: &[Vec<T>], k: usize) -> Vec<T> {
    rows.iter().map(|row| row[k]).collect()
}

/// Per-stage half-widths `q_k` with the allocation that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct CalibratedTube<T> {
    pub horizon: usize,
    pub margins: Vec<T>,
    /// Stage-wise tubes carry one block per stage; the sup-residual baseline
    /// carries a single joint block.
    pub allocation: Allocation<T>,
}

impl<T: Real> CalibratedTube<T> {
    pub fn certificate(&self) -> T {
        self.allocation.certificate()
    }
}

pub fn calibrate_tube<T: Real>(
    p: &NominalPredictor<T>,
    tasks: &[CalibrationTask<T>],
    alloc: &Allocation<T>,
) -> Result<CalibratedTube<T>> {
    if alloc.len() != p.horizon {
        return Err(Error::DimensionMismatch {
            what: "allocation blocks vs horizon",
            expected: p.horizon,
            found: alloc.len(),
        });
    }
    if alloc.m() != tasks.len() {
        return Err(Error::DimensionMismatch {
            what: "allocation sample size vs task count",
            expected: alloc.m(),
            found: tasks.len(),
        });
    }
    let scores = residual_scores(p, tasks)?;
    let margins = upper_box(&scores, &alloc.ranks())?;
    Ok(CalibratedTube {
        horizon: p.horizon,
        margins,
        allocation: alloc.clone(),
    })
}

/// Joint baseline: one threshold on `max_k R_{j,k}`, applied at every stage.
///
/// The rank is the largest `r` whose certificate at `eps_total` keeps
/// `delta <= delta_budget` (falling back to `r = 0`).
pub fn calibrate_sup_tube<T: Real>(
    p: &NominalPredictor<T>,
    tasks: &[CalibrationTask<T>],
    eps_total: T,
    delta_budget: T,
) -> Result<CalibratedTube<T>> {
    let scores = residual_scores(p, tasks)?;
    let sup: Vec<T> = scores
        .iter()
        .map(|row| row.iter().copied().fold(T::zero(), T::max))
        .collect();
    let m = sup.len();
    let mut block = certificate(m, 0, eps_total)?;
    for r in 1..m {
        let next = certificate(m, r, eps_total)?;
        if next.delta > delta_budget {
            break;
        }
        block = next;
    }
    let q = select_threshold(&sup, block.r)?.q;
    Ok(CalibratedTube {
        horizon: p.horizon,
        margins: vec![q; p.horizon],
        allocation: compose_additive(vec![block])?.with_label("joint sup-residual"),
    })
}

/// Whether every stage residual of `task` lies within its margin.
pub fn tube_contains<T: Real>(tube: &CalibratedTube<T>, p: &NominalPredictor<T>, task: &CalibrationTask<T>) -> Result<bool> {
    if tube.margins.len() != p.horizon {
        return Err(Error::DimensionMismatch {
            what: "tube margins",
            expected: p.horizon,
            found: tube.margins.len(),
        });
    }
    Ok(stage_residuals(p, task)?
        .iter()
        .zip(&tube.margins)
        .all(|(res, q)| res <= q))
}

/// Coordinate-wise thresholds: column `k` gets its `(m - r_k)`th order statistic.
pub fn upper_box<T: Real>(samples: &[Vec<T>], ranks: &[usize]) -> Result<Vec<T>> {
    if samples.is_empty() {
        return Err(Error::Empty("sample matrix"));
    }
    let n = ranks.len();
    if let Some(row) = samples.iter().find(|row| row.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "sample row",
            expected: n,
            found: row.len(),
        });
    }
    ranks
        .iter()
        .enumerate()
        .map(|(k, &r)| select_threshold(&column(samples, k), r).map(|t| t.q))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome<T> {
    pub u_star: T,
    /// 1-based stage whose tightened constraint is tightest.
    pub binding_stage: usize,
    pub feasible: bool,
}

/// Largest constant input `u in [0, 1]` with `y_hat_k(y0, u) <= y_max - q_k`
/// at every stage.
///
/// Predictions are affine in `u`, so each stage gives an upper bound on `u`.
/// When `u = 0` already violates a tightened constraint the plan is reported
/// infeasible with `u_star = 0`.
pub fn tighten_and_plan<T: Real>(margins: &[T], p: &NominalPredictor<T>, y0: T, y_max: T) -> Result<PlanOutcome<T>> {
    if p.b_hat <= T::zero() {
        return Err(Error::NonMonotone(format!("b_hat = {} must be positive", p.b_hat)));
    }
    if margins.len() != p.horizon {
        return Err(Error::DimensionMismatch {
            what: "tube margins",
            expected: p.horizon,
            found: margins.len(),
        });
    }
    if let Some(i) = margins.iter().position(|q| !q.is_finite()) {
        return Err(Error::NonFinite(i));
    }

    let mut best = T::infinity();
    let mut binding_stage = 1;
    let mut feasible = true;
    for (i, &q) in margins.iter().enumerate() {
        let k = i + 1;
        let (pow, geo) = p.powers(k);
        let slope = p.b_hat * geo;
        if slope <= T::zero() {
            return Err(Error::NonMonotone(format!("stage {k} gain {slope} is not positive")));
        }
        let room = y_max - q - pow * y0;
        if room < T::zero() {
            feasible = false;
        }
        let bound = room / slope;
        if bound < best {
            best = bound;
            binding_stage = k;
        }
    }
    let u_star = if feasible {
        best.max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    Ok(PlanOutcome {
        u_star,
        binding_stage,
        feasible,
    })
}
