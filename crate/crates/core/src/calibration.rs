//! Single-block order-statistic calibration.
//!
//! Rank convention: with `m` scores and discard rank `r` the threshold is the
//! `(m - r)`th smallest score, 1-based, i.e. `R_(m-r)`. Index `m - r - 1` in a
//! 0-based sorted vector. For continuous scores the violation probability of
//! that threshold is exactly `Beta(r + 1, m - r)`, which gives
//!
//! ```text
//! P_S{ V_r(S) <= eps } = 1 - sum_{i=0}^{r} C(m,i) eps^i (1-eps)^(m-i)
//! ```
//!
//! Tied scores are legal input. They are discarded highest original index
//! first and reported through [`ThresholdResult::has_ties`]; the exact law only
//! holds for atomless score distributions.

use serde::{Deserialize, Serialize};

use crate::stat_core::{binomial_tail, sort_with_indices};
use crate::{Error, Real, Result};

/// One calibrated block `(m, r, eps, delta)` with `delta = binomial_tail(m, r, eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateBlock<T> {
    pub m: usize,
    pub r: usize,
    pub eps: T,
    pub delta: T,
}

impl<T: Real> CertificateBlock<T> {
    /// Confidence `1 - delta` of the calibration-conditional statement.
    pub fn confidence(&self) -> T {
        T::one() - self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult<T> {
    pub q: T,
    /// 1-based order-statistic index `m - r`.
    pub rank: usize,
    /// 0-based positions of the `r` discarded scores, ascending.
    pub discarded: Vec<usize>,
    /// 0-based position of the retained score equal to `q` (lowest index on ties).
    pub binding: usize,
    /// Whether the sample contains repeated values.
    pub has_ties: bool,
}

pub(crate) fn check_rank(m: usize, r: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Empty("calibration sample"));
    }
    if r >= m {
        return Err(Error::RankOutOfRange { r, m });
    }
    Ok(())
}

/// Solves `min q s.t. R_i <= q for all but r indices`.
pub fn select_threshold<T: Real>(scores: &[T], r: usize) -> Result<ThresholdResult<T>> {
    let sorted = sort_with_indices(scores)?;
    let m = sorted.len();
    check_rank(m, r)?;
    let pos = m - r - 1;
    let q = sorted.values[pos];

    let mut discarded = sorted.original_indices[pos + 1..].to_vec();
    discarded.sort_unstable();

    // the first sorted position holding q has the lowest original index among ties
    let first_eq = sorted.values[..=pos].partition_point(|&v| v < q);
    let binding = sorted.original_indices[first_eq];
    let has_ties = sorted.values.windows(2).any(|w| w[0] == w[1]);

    Ok(ThresholdResult {
        q,
        rank: m - r,
        discarded,
        binding,
        has_ties,
    })
}

/// Exact certificate for the `(m - r)`th order statistic at risk level `eps`.
pub fn certificate<T: Real>(m: usize, r: usize, eps: T) -> Result<CertificateBlock<T>> {
    check_rank(m, r)?;
    let delta = binomial_tail(m, r, eps)?;
    Ok(CertificateBlock { m, r, eps, delta })
}

const BISECTION_MAX_ITER: usize = 200;

/// Risk level `eps` at which the certificate's failure probability equals
/// `delta_target`.
///
/// `binomial_tail(m, r, .)` decreases strictly from 1 to 0 on `[0, 1]` for
/// `r < m`, so bisection brackets the unique root. Iteration runs to the
/// scalar's resolution (at most 200 halvings): the tail can be steep, and an
/// `eps` bracket of 1e-10 alone does not pin `delta` to 1e-10.
pub fn invert_eps<T: Real>(m: usize, r: usize, delta_target: T) -> Result<T> {
    check_rank(m, r)?;
    if !(delta_target > T::zero() && delta_target < T::one()) {
        return Err(Error::domain(format!(
            "delta target must lie in (0, 1), got {delta_target}"
        )));
    }
    let (mut lo, mut hi) = (T::zero(), T::one());
    for _ in 0..BISECTION_MAX_ITER {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if binomial_tail(m, r, mid)? > delta_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / T::lit(2.0))
}

/// Smallest `m > r` with `binomial_tail(m, r, eps) <= delta_target`.
pub fn min_sample_size<T: Real>(r: usize, eps: T, delta_target: T) -> Result<usize> {
    let unit = |x: T| x > T::zero() && x < T::one();
    if !unit(eps) || !unit(delta_target) {
        return Err(Error::domain("eps and delta must lie in (0, 1)"));
    }
    let ok = |m: usize| binomial_tail(m, r, eps).map(|d| d <= delta_target);

    let mut lo = r; // binomial_tail(r, r, .) = 1 > delta_target
    let mut hi = r + 1;
    while !ok(hi)? {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .ok_or_else(|| Error::domain("required sample size overflows"))?;
    }
    // invariant: !ok(lo), ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCORES: [f64; 5] = [0.1, 0.5, 0.3, 0.9, 0.7];

    #[test]
    fn threshold_examples() {
        let t = select_threshold(&SCORES, 1).unwrap();
        assert_eq!((t.q, t.rank, t.discarded.clone(), t.binding), (0.7, 4, vec![3], 4));
        assert!(!t.has_ties);

        let t = select_threshold(&SCORES, 0).unwrap();
        assert_eq!((t.q, t.discarded.len(), t.binding), (0.9, 0, 3));

        let t = select_threshold(&[2.0, 2.0, 2.0], 1).unwrap();
        assert_eq!((t.q, t.discarded.clone(), t.binding), (2.0, vec![2], 0));
        assert!(t.has_ties);
    }

    #[test]
    fn threshold_errors() {
        assert_eq!(
            select_threshold(&SCORES, 5),
            Err(Error::RankOutOfRange { r: 5, m: 5 })
        );
        assert!(select_threshold::<f64>(&[], 0).is_err());
    }

    #[test]
    fn certificate_examples() {
        let c = certificate(120, 1, 0.055_f64).unwrap();
        assert!((c.delta - 0.008_995_896_636_427_51).abs() < 1e-12);
        let c = certificate(120, 0, 0.04).unwrap();
        assert!((c.delta - 0.96_f64.powi(120)).abs() < 1e-15);
        for r in 0..10 {
            assert_eq!(certificate(10, r, 1.0).unwrap().delta, 0.0);
        }
        assert!(certificate(120, 120, 0.5).is_err());
    }

    #[test]
    fn invert_examples() {
        assert!((invert_eps(120, 0, 0.007_456_8).unwrap() - 0.04_f64).abs() < 1e-5);
        assert!((invert_eps(1, 0, 0.5).unwrap() - 0.5_f64).abs() < 1e-10);
        assert!((invert_eps(120, 3, 0.028_119_7).unwrap() - 0.07_f64).abs() < 1e-5);
        assert!(invert_eps(10, 0, 1.0).is_err());
    }

    #[test]
    fn min_sample_size_examples() {
        assert_eq!(min_sample_size(0, 0.05, 0.01).unwrap(), 90);
        assert_eq!(min_sample_size(0, 0.5, 0.5).unwrap(), 1);
        assert_eq!(min_sample_size(3, 0.07, 0.03).unwrap(), 119);
    }

    #[test]
    fn min_sample_size_matches_upward_scan() {
        for r in 0..4 {
            for &(eps, delta) in &[(0.1, 0.05), (0.02, 0.1), (0.3, 0.001)] {
                let mut m = r + 1;
                while binomial_tail(m, r, eps).unwrap() > delta {
                    m += 1;
                }
                assert_eq!(min_sample_size(r, eps, delta).unwrap(), m);
            }
        }
    }
}
