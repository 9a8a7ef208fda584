#![allow(dead_code)]

/// `min over |D| = r of max_{i not in D} R_i`, by enumerating discard sets.
pub fn brute_force_threshold(scores: &[f64], r: usize) -> f64 {
    fn rec(scores: &[f64], start: usize, left: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if left == 0 {
            let q = scores
                .iter()
                .enumerate()
                .filter(|(i, _)| !chosen.contains(i))
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            *best = best.min(q);
            return;
        }
        for i in start..scores.len() {
            chosen.push(i);
            rec(scores, i + 1, left - 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(scores, 0, r, &mut Vec::new(), &mut best);
    best
}

pub fn distinct(values: &[f64]) -> bool {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).all(|w| w[0] < w[1])
}

/// Two-sided Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
