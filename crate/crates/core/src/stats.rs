//! Small descriptive statistics used by diagnostics and reports.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and `cdf`.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (j, &x)| {
        let f = cdf(x);
        let lo = j as f64 / n;
        let hi = (j + 1) as f64 / n;
        d.max((f - lo).abs()).max((hi - f).abs())
    })
}

/// Equal-width histogram over `[lo, hi]`; values outside are dropped.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for &x in xs {
        if x < lo || x > hi {
            continue;
        }
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Mean and standard error of `exp(logs)` without overflow, returned in log
/// scale as `(log mean, standard error of the mean)` with the error expressed
/// in the same shifted units as the mean (`se / mean`).
pub fn log_mean_exp(logs: &[f64]) -> (f64, f64) {
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return (shift, f64::NAN);
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let m = mean(&w);
    let rel_se = if w.len() > 1 { std_error(&w) / m } else { f64::NAN };
    (m.ln() + shift, rel_se)
}
