//! Special functions and order-statistic utilities behind the certificates.
//!
//! Everything here is a pure function of its arguments.

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Shape parameters of a Beta distribution.
///
/// For an order-statistic threshold with discard rank `r` on `m` calibration
/// points the violation probability is `Beta(r + 1, m - r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams<T> {
    a: T,
    b: T,
}

impl<T: Num + PartialOrd + Copy> BetaParams<T> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the check
    pub fn new(a: T, b: T) -> Result<Self> {
        if !(a > T::zero()) || !(b > T::zero()) {
            return Err(Error::domain("beta shape parameters must be positive"));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }
}

impl<T: Real> BetaParams<T> {
    /// Law of the violation probability `V_r` of the `(m - r)`th order statistic.
    pub fn violation_law(m: usize, r: usize) -> Result<Self> {
        if m == 0 || r >= m {
            return Err(Error::RankOutOfRange { r, m });
        }
        Self::new(T::count(r + 1), T::count(m - r))
    }
}

/// Scores in ascending order together with the position each came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedSample<T> {
    pub values: Vec<T>,
    /// `original_indices[k]` is the input position (0-based) of `values[k]`.
    pub original_indices: Vec<usize>,
}

impl<T: Copy> SortedSample<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Undoes the sort, returning the values in input order.
    pub fn unsorted(&self) -> Vec<T> {
        let mut out = self.values.clone();
        for (&v, &i) in self.values.iter().zip(&self.original_indices) {
            out[i] = v;
        }
        out
    }
}

/// Stable ascending sort that remembers input positions.
///
/// Equal values keep their input order, so ties are broken by original index.
pub fn sort_with_indices<T: Real>(values: &[T]) -> Result<SortedSample<T>> {
    if values.is_empty() {
        return Err(Error::Empty("score list"));
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // finite values are totally ordered
    idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    Ok(SortedSample {
        values: idx.iter().map(|&i| values[i]).collect(),
        original_indices: idx,
    })
}

/// Lower binomial tail `sum_{i=0}^{r} C(m,i) eps^i (1-eps)^(m-i)`.
///
/// This is the failure probability `delta` of an order-statistic certificate
/// with discard rank `r` at risk level `eps`. Terms are accumulated in log
/// space and summed with Neumaier compensation, so the result stays accurate
/// for `m` in the tens of thousands.
pub fn binomial_tail<T: Real>(m: usize, r: usize, eps: T) -> Result<T> {
    if r > m {
        return Err(Error::domain(format!(
            "binomial tail needs r <= m, got r={r}, m={m}"
        )));
    }
    if !(eps >= T::zero() && eps <= T::one()) {
        return Err(Error::domain(format!("eps must lie in [0, 1], got {eps}")));
    }
    if r == m {
        return Ok(T::one());
    }
    if eps == T::zero() {
        return Ok(T::one());
    }
    if eps == T::one() {
        return Ok(T::zero());
    }

    let ln_eps = eps.ln();
    let ln_comp = (-eps).ln_1p();
    // Sum whichever side of the mean is smaller; its rounding error is then
    // relative to a small number.
    if T::count(r) >= T::count(m) * eps {
        let upper = lower_tail_from_logs(m, m - r - 1, ln_comp, ln_eps);
        Ok((T::one() - upper).max(T::zero()).min(T::one()))
    } else {
        Ok(lower_tail_from_logs(m, r, ln_eps, ln_comp))
    }
}

/// `sum_{i<=r} C(m,i) p^i q^(m-i)` given `ln p` and `ln q`.
fn lower_tail_from_logs<T: Real>(m: usize, r: usize, ln_p: T, ln_q: T) -> T {
    let ln_odds = ln_p - ln_q;
    let mf = T::count(m);

    // log C(m, i) p^i q^(m-i) via the ratio C(m,i)/C(m,i-1) = (m-i+1)/i.
    let mut log_terms = Vec::with_capacity(r + 1);
    let mut log_t = mf * ln_q;
    log_terms.push(log_t);
    for i in 1..=r {
        let fi = T::count(i);
        log_t = log_t + ((mf - fi + T::one()) / fi).ln() + ln_odds;
        log_terms.push(log_t);
    }
    let peak = log_terms
        .iter()
        .copied()
        .fold(T::neg_infinity(), |acc, x| acc.max(x));
    if peak == T::neg_infinity() {
        return T::zero();
    }
    let scaled = neumaier_sum(log_terms.iter().map(|&lt| (lt - peak).exp()));
    let total = (scaled.ln() + peak).exp();
    total.max(T::zero()).min(T::one())
}

/// Regularized incomplete beta function `I_x(a, b)`, the Beta CDF.
///
/// Continued fraction (modified Lentz) with the symmetry switch
/// `I_x(a,b) = 1 - I_{1-x}(b,a)` for `x > a/(a+b)`.
pub fn beta_cdf<T: Real>(p: BetaParams<T>, x: T) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::domain(format!("beta_cdf needs x in [0, 1], got {x}")));
    }
    let (a, b) = (p.a, p.b);
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }
    let value = if x > a / (a + b) {
        T::one() - beta_cf(b, a, T::one() - x)?
    } else {
        beta_cf(a, b, x)?
    };
    Ok(value.max(T::zero()).min(T::one()))
}

/// Mean `a / (a + b)`; exact for rational scalars.
pub fn beta_mean<T: Num + Copy>(p: BetaParams<T>) -> T {
    p.a / (p.a + p.b)
}

const CF_MAX_ITER: usize = 5_000;

fn beta_cf<T: Real>(a: T, b: T, x: T) -> Result<T> {
    let one = T::one();
    let two = T::lit(2.0);
    let tiny = T::min_positive_value() / T::epsilon();
    let tol = T::epsilon().max(T::lit(1e-12));

    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let front = ln_front.exp() / a;

    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;

    for n in 1..=CF_MAX_ITER {
        let nf = T::count(n);
        let n2 = two * nf;

        let even = nf * (b - nf) * x / ((qam + n2) * (a + n2));
        d = one + even * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + even / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;

        let odd = -(a + nf) * (qab + nf) * x / ((a + n2) * (qap + n2));
        d = one + odd * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + odd / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let step = d * c;
        h = h * step;
        if (step - one).abs() <= tol {
            return Ok(front * h);
        }
    }
    Err(Error::Convergence {
        a: a.to_f64().unwrap_or(f64::NAN),
        b: b.to_f64().unwrap_or(f64::NAN),
        x: x.to_f64().unwrap_or(f64::NAN),
    })
}

/// `ln B(a, b)`.
pub fn ln_beta<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::count(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

fn neumaier_sum<T: Real>(terms: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp = comp + ((sum - t) + x);
        } else {
            comp = comp + ((x - t) + sum);
        }
        sum = t;
    }
    sum + comp
}
