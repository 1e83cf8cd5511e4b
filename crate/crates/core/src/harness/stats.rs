//! Summary statistics, Kolmogorov-Smirnov tests and the Wasserstein-1 distance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::HarnessError;

/// Sum by recursive halving; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (0 for a single observation).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Sample mean and variance with a normal-approximation confidence interval for the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci_level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Summary {
    pub fn new(xs: &[f64], ci_level: f64) -> Result<Self, HarnessError> {
        if xs.is_empty() {
            return Err(HarnessError::EmptySample);
        }
        if !(ci_level > 0.0 && ci_level < 1.0) {
            return Err(HarnessError::InvalidConfig(format!("confidence level {ci_level} is not in (0, 1)")));
        }
        let m = mean(xs);
        let variance = sample_variance(xs);
        let std_error = (variance / xs.len() as f64).sqrt();
        let z = Normal::standard().inverse_cdf(0.5 + ci_level / 2.0);
        Ok(Summary {
            count: xs.len(),
            mean: m,
            variance,
            std_error,
            ci_level,
            ci_low: m - z * std_error,
            ci_high: m + z * std_error,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `P(K > lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        total += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * total).clamp(0.0, 1.0)
}

fn ks_p_value(statistic: f64, effective_n: f64) -> f64 {
    let root = effective_n.sqrt();
    kolmogorov_tail((root + 0.12 + 0.11 / root) * statistic)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample statistic `sup |F_x - F_y|` with its asymptotic p-value.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsResult, HarnessError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(HarnessError::EmptySample);
    }
    let (xs, ys) = (sorted(xs), sorted(ys));
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n * m / (n + m)) })
}

/// One-sample statistic `sup |F_x - F|` against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, HarnessError> {
    if xs.is_empty() {
        return Err(HarnessError::EmptySample);
    }
    let xs = sorted(xs);
    let n = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    });
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n) })
}

/// `int |F_x - F_y|`, which for equal sample sizes is the mean absolute
/// difference of the order statistics.
pub fn wasserstein1(xs: &[f64], ys: &[f64]) -> Result<f64, HarnessError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(HarnessError::EmptySample);
    }
    let (xs, ys) = (sorted(xs), sorted(ys));
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = xs[0].min(ys[0]);
    let mut pieces = Vec::with_capacity(xs.len() + ys.len());
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        pieces.push((i as f64 / n - j as f64 / m).abs() * (v - prev));
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        prev = v;
    }
    Ok(pairwise_sum(&pieces))
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let sxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
    pairwise_sum(&sxy) / pairwise_sum(&sxx)
}
