//! Finite-sample risk certificates from held-out calibration data.
//!
//! The crate turns exchangeable calibration scores into explicit
//! calibration-conditional guarantees of the form
//! `P_S{ V(S) <= eps } >= 1 - delta`:
//!
//! * [`stat_core`]: binomial tails, the regularized incomplete beta function and
//!   order-statistic helpers.
//! * [`calibration`]: single-block order-statistic thresholds and their exact
//!   Beta law.
//! * [`composition`]: additive (union bound) and multiplicative (independent
//!   blocks) composition of blockwise certificates into one joint budget.
//! * [`scenario_bridge`]: the scalar sample-and-discard program with explicit
//!   discard and reconstruction sets, and Monte Carlo checks of the
//!   exchangeability argument behind the mean violation law.
//! * [`tube`]: calibrated multi-step output tubes around a nominal predictor and
//!   constraint tightening.
//! * [`plant_sim`]: the bilinear stochastic plant and the Monte Carlo
//!   experiments over allocation profiles.
//!
//! Numerical code is generic over [`Real`] (implemented for `f32` and `f64`).
//! Concrete `f64` aliases are exported at the crate root.

pub mod calibration;
pub mod composition;
mod error;
pub mod plant_sim;
pub mod scenario_bridge;
pub mod seed;
pub mod stat_core;
pub mod tube;

pub use error::{Error, Result};

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar used by the certificate and tube code.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub use calibration::{
    certificate, invert_eps, min_sample_size, select_threshold, CertificateBlock, ThresholdResult,
};
pub use composition::{
    allocation_profiles, compose_additive, compose_multiplicative, solve_uniform_eps, Allocation,
    CompositionMode, Profile,
};
pub use scenario_bridge::{
    check_stability, solve_discard, verify_forward_bridge, BridgeConfig, BridgeStats,
    ScenarioOutcome, ScoreDistribution,
};
pub use stat_core::{beta_cdf, beta_mean, binomial_tail, sort_with_indices, BetaParams, SortedSample};
pub use tube::{
    calibrate_tube, predict_multistep, residual_scores, tighten_and_plan, tube_contains, upper_box,
    CalibratedTube, CalibrationTask, NominalPredictor, PlanOutcome,
};

pub type BetaParamsF64 = BetaParams<f64>;
pub type SortedSampleF64 = SortedSample<f64>;
pub type CertificateBlockF64 = CertificateBlock<f64>;
pub type ThresholdResultF64 = ThresholdResult<f64>;
pub type AllocationF64 = Allocation<f64>;
pub type ScenarioOutcomeF64 = ScenarioOutcome<f64>;
pub type CalibrationTaskF64 = CalibrationTask<f64>;
pub type CalibratedTubeF64 = CalibratedTube<f64>;
pub type NominalPredictorF64 = NominalPredictor<f64>;
pub type PlanOutcomeF64 = PlanOutcome<f64>;

pub type CertificateBlockF32 = CertificateBlock<f32>;
pub type AllocationF32 = Allocation<f32>;
pub type CalibratedTubeF32 = CalibratedTube<f32>;
pub type NominalPredictorF32 = NominalPredictor<f32>;
