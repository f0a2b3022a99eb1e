//! Small descriptive and inferential statistics used by the harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); exactly zero for fewer than
/// two values or a constant sample.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|x| *x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn se(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sd(xs) / (xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Linear-interpolated quantile, `q ∈ [0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap confidence interval for `statistic` over
/// resamples of row indices `0..n`.
pub fn bootstrap_ci<F>(n: usize, statistic: F, reps: usize, level: f64, seed: u64) -> (f64, f64)
where
    F: Fn(&[usize]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let draws: Vec<f64> = (0..reps)
        .map(|_| {
            for slot in idx.iter_mut() {
                *slot = rng.random_range(0..n);
            }
            statistic(&idx)
        })
        .collect();
    let tail = (1.0 - level) / 2.0;
    (quantile(&draws, tail), quantile(&draws, 1.0 - tail))
}

/// One-sided sign test: `P(X ≥ successes)` for `X ~ Binomial(trials, 1/2)`.
pub fn sign_test_p(successes: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    // log-space binomial coefficients keep this exact enough for large n
    let ln_half = trials as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0; // ln C(trials, 0)
    let mut total = 0.0;
    for k in 0..=trials {
        if k > 0 {
            ln_choose += ((trials - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= successes {
            total += (ln_choose + ln_half).exp();
        }
    }
    total.min(1.0)
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Residuals of `y` about its least-squares line against `x`.
pub fn detrended(x: &[f64], y: &[f64]) -> Vec<f64> {
    let b = ols_slope(x, y);
    let a = mean(y) - b * mean(x);
    x.iter().zip(y).map(|(xi, yi)| yi - a - b * xi).collect()
}
