//! Composition of blockwise certificates into one joint guarantee.
//!
//! Given blocks with `P_S{ V_k(S) <= eps_k } >= 1 - delta_k`, the intersection
//! of the block predictors satisfies
//!
//! * additive (no assumptions, union bound):
//!   `P_S{ V(S) <= sum eps_k } >= 1 - sum delta_k`;
//! * multiplicative (coordinates independent in both test point and
//!   calibration sample): `P_S{ V(S) <= 1 - prod(1 - eps_k) } >= prod(1 - delta_k)`.
//!
//! The multiplicative rule is only valid when the caller can vouch for
//! independence. Selecting [`CompositionMode::Multiplicative`] records that
//! assertion in the allocation; nothing here tests it.
//!
//! Budgets with `eps_total >= 1` or `delta_total >= 1` are returned and flagged
//! as vacuous instead of rejected.

use serde::{Deserialize, Serialize};

use crate::calibration::{certificate, CertificateBlock};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionMode {
    Additive,
    Multiplicative,
}

impl std::fmt::Display for CompositionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompositionMode::Additive => "additive",
            CompositionMode::Multiplicative => "multiplicative",
        })
    }
}

/// Blocks sharing one calibration sample, plus their composed budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    pub label: String,
    pub mode: CompositionMode,
    pub blocks: Vec<CertificateBlock<T>>,
    pub eps_total: T,
    pub delta_total: T,
}

impl<T: Real> Allocation<T> {
    /// Shared calibration sample size.
    pub fn m(&self) -> usize {
        self.blocks[0].m
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.r).collect()
    }

    pub fn eps(&self) -> Vec<T> {
        self.blocks.iter().map(|b| b.eps).collect()
    }

    /// Joint confidence; `1 - delta_total`.
    pub fn certificate(&self) -> T {
        T::one() - self.delta_total
    }

    pub fn is_vacuous(&self) -> bool {
        self.delta_total >= T::one() || self.eps_total >= T::one()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Recalibrates the same `(r_k, eps_k)` schedule for a different sample size.
    pub fn rebased(&self, m: usize) -> Result<Self> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| certificate(m, b.r, b.eps))
            .collect::<Result<Vec<_>>>()?;
        compose(blocks, self.mode).map(|a| a.with_label(self.label.clone()))
    }
}

fn check_blocks<T>(blocks: &[CertificateBlock<T>]) -> Result<()> {
    let first = blocks.first().ok_or(Error::Empty("block list"))?;
    if let Some(b) = blocks.iter().find(|b| b.m != first.m) {
        return Err(Error::MixedSampleSize(first.m, b.m));
    }
    Ok(())
}

/// Union-bound composition: `(sum eps_k, sum delta_k)`.
pub fn compose_additive<T: Real>(blocks: Vec<CertificateBlock<T>>) -> Result<Allocation<T>> {
    check_blocks(&blocks)?;
    let eps_total = blocks.iter().map(|b| b.eps).sum();
    let delta_total = blocks.iter().map(|b| b.delta).sum();
    Ok(Allocation {
        label: String::new(),
        mode: CompositionMode::Additive,
        blocks,
        eps_total,
        delta_total,
    })
}

/// Composition under asserted independence:
/// `(1 - prod(1 - eps_k), 1 - prod(1 - delta_k))`.
pub fn compose_multiplicative<T: Real>(
    blocks: Vec<CertificateBlock<T>>,
) -> Result<Allocation<T>> {
    check_blocks(&blocks)?;
    let keep = |f: fn(&CertificateBlock<T>) -> T| {
        T::one()
            - blocks
                .iter()
                .map(|b| T::one() - f(b))
                .fold(T::one(), |acc, x| acc * x)
    };
    let eps_total = keep(|b| b.eps);
    let delta_total = keep(|b| b.delta);
    Ok(Allocation {
        label: String::new(),
        mode: CompositionMode::Multiplicative,
        blocks,
        eps_total,
        delta_total,
    })
}

pub fn compose<T: Real>(blocks: Vec<CertificateBlock<T>>, mode: CompositionMode) -> Result<Allocation<T>> {
    match mode {
        CompositionMode::Additive => compose_additive(blocks),
        CompositionMode::Multiplicative => compose_multiplicative(blocks),
    }
}

/// Per-block `eps` that spends `eps_total_target` evenly over `n` blocks.
pub fn solve_uniform_eps<T: Real>(n: usize, eps_total_target: T, mode: CompositionMode) -> Result<T> {
    if n == 0 {
        return Err(Error::Empty("block count"));
    }
    if !(eps_total_target > T::zero() && eps_total_target < T::one()) {
        return Err(Error::domain(format!(
            "total risk target must lie in (0, 1), got {eps_total_target}"
        )));
    }
    let nf = T::count(n);
    Ok(match mode {
        CompositionMode::Additive => eps_total_target / nf,
        CompositionMode::Multiplicative => {
            // 1 - (1 - target)^(1/n), written to avoid cancellation for small targets
            -((-eps_total_target).ln_1p() / nf).exp_m1()
        }
    })
}

/// The three horizon-wise risk profiles: total risk 0.22, total rank 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Increasing,
    Uniform,
    Decreasing,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Increasing, Profile::Uniform, Profile::Decreasing];

    pub fn label(self) -> &'static str {
        match self {
            Profile::Increasing => "increasing risk",
            Profile::Uniform => "uniform risk",
            Profile::Decreasing => "decreasing risk",
        }
    }

    pub fn ranks(self) -> [usize; 4] {
        match self {
            Profile::Increasing => [0, 1, 2, 3],
            Profile::Uniform => [1, 1, 2, 2],
            Profile::Decreasing => [3, 2, 1, 0],
        }
    }

    pub fn eps(self) -> [f64; 4] {
        match self {
            Profile::Increasing => [0.04, 0.05, 0.06, 0.07],
            Profile::Uniform => [0.055; 4],
            Profile::Decreasing => [0.07, 0.06, 0.05, 0.04],
        }
    }

    /// Accepts `"increasing"` as well as the full label `"increasing risk"`.
    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_suffix(" risk").unwrap_or(&key);
        match key {
            "increasing" => Ok(Profile::Increasing),
            "uniform" => Ok(Profile::Uniform),
            "decreasing" => Ok(Profile::Decreasing),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }

    /// Additive allocation of this profile on `m` calibration points.
    pub fn allocation<T: Real>(self, m: usize) -> Result<Allocation<T>> {
        let blocks = self
            .ranks()
            .iter()
            .zip(self.eps())
            .map(|(&r, e)| certificate(m, r, T::lit(e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(compose_additive(blocks)?.with_label(self.label()))
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Profile::parse(s)
    }
}

/// Calibration sample size used by the profiles.
pub const PROFILE_SAMPLE_SIZE: usize = 120;

/// The three named profiles, additively composed on 120 calibration points.
pub fn allocation_profiles<T: Real>() -> Vec<Allocation<T>> {
    Profile::ALL
        .iter()
        .map(|p| {
            p.allocation(PROFILE_SAMPLE_SIZE)
                .expect("profile ranks are below the sample size")
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct BlockRecord<T> {
    r: usize,
    eps: T,
    delta: T,
}

#[derive(Serialize, Deserialize)]
struct AllocationRecord<T> {
    label: String,
    mode: CompositionMode,
    m: usize,
    blocks: Vec<BlockRecord<T>>,
    eps_total: T,
    delta_total: T,
    certificate: T,
    #[serde(default)]
    vacuous: bool,
}

impl<T: Real + Serialize> Serialize for Allocation<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AllocationRecord {
            label: self.label.clone(),
            mode: self.mode,
            m: self.m(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockRecord {
                    r: b.r,
                    eps: b.eps,
                    delta: b.delta,
                })
                .collect(),
            eps_total: self.eps_total,
            delta_total: self.delta_total,
            certificate: self.certificate(),
            vacuous: self.is_vacuous(),
        }
        .serialize(s)
    }
}

/// Deserialization keeps `(m, r_k, eps_k)` and recomputes every derived
/// quantity, so a hand-edited file cannot carry an inconsistent `delta`.
impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for Allocation<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = AllocationRecord::<T>::deserialize(d)?;
        let blocks = rec
            .blocks
            .iter()
            .map(|b| certificate(rec.m, b.r, b.eps))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        compose(blocks, rec.mode)
            .map(|a| a.with_label(rec.label))
            .map_err(D::Error::custom)
    }
}
