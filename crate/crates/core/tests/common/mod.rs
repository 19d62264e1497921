//! Shared statistical helpers for the integration suites: KS distances,
//! correlation measures, and stream generation shortcuts.
#![allow(dead_code)]

use bitbe_core::distributions::{BivariateSample, FamilyParams, VIndicator};
use bitbe_core::rng::derive_rng;
use bitbe_core::transform::{transform_first, transform_second, ArrivalRank, LabeledZ};

/// One-sample Kolmogorov-Smirnov distance against a reference CDF.
/// `samples` need not be sorted.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// 1% critical value of the one-sample KS distance.
pub fn ks_one_sample_crit(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        if sa[i] <= sb[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// 1% critical value of the two-sample KS distance.
pub fn ks_two_sample_crit(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    (m, (var / x.len() as f64).sqrt())
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Lag-1 autocorrelation.
pub fn autocorr1(x: &[f64]) -> f64 {
    pearson(&x[..x.len() - 1], &x[1..])
}

/// Kendall's tau (O(n^2); fine up to ~10^4 points).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (x[i] - x[j]) * (y[i] - y[j]);
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    (concordant - discordant) as f64 / (n * (n - 1) / 2) as f64
}

/// Composite Simpson integration.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2; // even
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Draw `n` vectors from `params`.
pub fn draws(params: &FamilyParams, n: usize, seed: u64) -> Vec<BivariateSample> {
    let mut rng = derive_rng(seed, 0);
    (0..n).map(|_| params.sample(&mut rng)).collect()
}

/// Transform `n` vectors drawn from `oc` through the in-control pipeline for
/// `ic`, returning the labeled observation stream.
pub fn transformed_stream(
    ic: &FamilyParams,
    oc: &FamilyParams,
    n: usize,
    seed: u64,
) -> Vec<LabeledZ> {
    let mut rng = derive_rng(seed, 0);
    let mut out = Vec::with_capacity(2 * n);
    for i in 1..=n as u64 {
        let s = oc.sample(&mut rng);
        let v = s.v();
        let (first, second) = s.ordered();
        let rank = if v == VIndicator::Tie { ArrivalRank::Tied } else { ArrivalRank::First };
        out.push(transform_first(ic, first, v, i, rank).unwrap());
        if v != VIndicator::Tie {
            out.push(transform_second(ic, first, second, v, i).unwrap());
        }
    }
    out
}

pub fn exp1_cdf(z: f64) -> f64 {
    -(-z).exp_m1()
}
