//! Exact conditional run densities for the two tractable models.
//!
//! These are the ground truth against which the adaptive approximation is
//! judged: the Gaussian walk conditioned on its sum is again Gaussian, and
//! for the centered exponential the remaining sum is a shifted Gamma.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::density::RunSpec;
use crate::error::{Error, Result};
use crate::model::log_normal_pdf;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-density of `(X_1..X_k) | S_n = n a` for i.i.d. standard normals,
/// as the product of the one-step conditionals
/// `X_{i+1} | S_{i+1..n} = n a - s_i ~ N(m_i, (n-i-1)/(n-i))`.
pub fn gaussian_conditional_log_density(n: usize, k: usize, a: f64, y: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), k);
    debug_assert!(k < n);
    let total = n as f64 * a;
    let mut sum = 0.0;
    let mut out = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let rest = (n - i) as f64;
        let m_i = (total - sum) / rest;
        out += log_normal_pdf(m_i, (rest - 1.0) / rest, yi);
        sum += yi;
    }
    out
}

/// The same law evaluated jointly: mean `a·1`, covariance `I - J/n`
/// restricted to `k` coordinates, inverted by Sherman–Morrison.
pub fn gaussian_conditional_log_density_joint(n: usize, k: usize, a: f64, y: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), k);
    let gap = (n - k) as f64;
    let (sq, lin) = y.iter().fold((0.0, 0.0), |(sq, lin), &yi| {
        let d = yi - a;
        (sq + d * d, lin + d)
    });
    let quad_form = sq + lin * lin / gap;
    let log_det = (gap / n as f64).ln();
    -0.5 * (k as f64 * LN_2PI + log_det + quad_form)
}

/// Log-density of `(X_1..X_k) | S_n = n a` for `X = E - 1`, `E ~ Exp(1)`:
/// `log[(n-1)!/(n-k-1)!] + (n-k-1) log(na - Σy + n - k) - (n-1) log(n(1+a))`
/// on the admissible region, `-inf` outside.
pub fn exponential_conditional_log_density(n: usize, k: usize, a: f64, y: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), k);
    debug_assert!(k < n);
    if y.iter().any(|&yi| yi < -1.0) {
        return f64::NEG_INFINITY;
    }
    let total: f64 = y.iter().sum();
    let nf = n as f64;
    let rest = (n - k) as f64;
    let w = nf * a - total + rest;
    if w <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_gamma(nf) - ln_gamma(rest) + (rest - 1.0) * w.ln() - (nf - 1.0) * (nf * (1.0 + a)).ln()
}

/// Exact conditional log-density for the spec's model and level.
pub fn exact_conditional_log_density(spec: &RunSpec, y: &[f64]) -> Result<f64> {
    match spec.model.name() {
        "normal" => Ok(gaussian_conditional_log_density(spec.n, y.len(), spec.a, y)),
        "centered_exponential" => Ok(exponential_conditional_log_density(spec.n, y.len(), spec.a, y)),
        _ => Err(Error::Unsupported(
            "exact conditional density is known only for normal and centered_exponential",
        )),
    }
}

/// Exact and approximate log-densities at one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEval {
    pub log_density_exact: f64,
    pub log_density_approx: f64,
    /// `log approx - log exact`.
    pub log_diff: f64,
}

impl OracleEval {
    /// `approx / exact - 1`.
    pub fn rel_error(&self) -> f64 {
        self.log_diff.exp_m1()
    }
}

/// Summary of `|h/p - 1|` over a bundle of paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub paths: usize,
    pub mean_abs_rel_error: f64,
    pub sd_rel_error: f64,
    pub max_abs_rel_error: f64,
    pub max_abs_log_diff: f64,
}

/// Compare approximate log-densities of sampled paths with the exact ones.
/// `paths` yields `(values, log h(values))`.
pub fn oracle_relative_error<'p, I>(spec: &RunSpec, paths: I) -> Result<(Vec<OracleEval>, OracleSummary)>
where
    I: IntoIterator<Item = (&'p [f64], f64)>,
{
    let mut evals = Vec::new();
    for (values, approx) in paths {
        let exact = exact_conditional_log_density(spec, values)?;
        evals.push(OracleEval {
            log_density_exact: exact,
            log_density_approx: approx,
            log_diff: approx - exact,
        });
    }
    let count = evals.len();
    let rel: Vec<f64> = evals.iter().map(OracleEval::rel_error).collect();
    let cf = count.max(1) as f64;
    let mean_rel = rel.iter().sum::<f64>() / cf;
    let sd = if count > 1 {
        (rel.iter().map(|r| (r - mean_rel).powi(2)).sum::<f64>() / (cf - 1.0)).sqrt()
    } else {
        0.0
    };
    let summary = OracleSummary {
        paths: count,
        mean_abs_rel_error: rel.iter().map(|r| r.abs()).sum::<f64>() / cf,
        sd_rel_error: sd,
        max_abs_rel_error: rel.iter().fold(0.0, |m, r| m.max(r.abs())),
        max_abs_log_diff: evals.iter().fold(0.0, |m, e| m.max(e.log_diff.abs())),
    };
    Ok((evals, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use approx::assert_relative_eq;

    /// Gamma(shape, 1) log-density.
    fn ln_gamma_pdf(shape: f64, x: f64) -> f64 {
        (shape - 1.0) * x.ln() - x - ln_gamma(shape)
    }

    /// Bayes chain: each coordinate given the remaining sum, using exact
    /// Gamma densities of the shifted partial sums.
    fn exponential_by_bayes(n: usize, a: f64, y: &[f64]) -> f64 {
        let mut remaining = n as f64 * (1.0 + a);
        let mut out = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let rest = (n - i) as f64;
            let e = yi + 1.0;
            out += -e + ln_gamma_pdf(rest - 1.0, remaining - e) - ln_gamma_pdf(rest, remaining);
            remaining -= e;
        }
        out
    }

    #[test]
    fn gaussian_single_coordinate() {
        let (n, a) = (25, 0.4);
        for y in [-1.0, 0.4, 2.0] {
            let expected = log_normal_pdf(a, (n as f64 - 1.0) / n as f64, y);
            assert_relative_eq!(
                gaussian_conditional_log_density(n, 1, a, &[y]),
                expected,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn gaussian_sequential_matches_joint() {
        let n = 12;
        let a = 0.3;
        let y: Vec<f64> = (0..11).map(|j| ((j * 37 % 11) as f64 - 5.0) * 0.31).collect();
        for k in [1, 4, 11] {
            let s = gaussian_conditional_log_density(n, k, a, &y[..k]);
            let j = gaussian_conditional_log_density_joint(n, k, a, &y[..k]);
            assert!((s - j).abs() < 1e-10, "k={k}: {s} vs {j}");
        }
    }

    #[test]
    fn gaussian_full_run_is_finite() {
        let n = 6;
        let a = 0.5;
        let mut y = vec![0.1, 0.9, 0.3, 0.7, 0.2];
        let last = n as f64 * a - a - y.iter().sum::<f64>();
        y[4] += last;
        assert!((y.iter().sum::<f64>() - (n as f64 * a - a)).abs() < 1e-12);
        let v = gaussian_conditional_log_density(n, 5, a, &y);
        assert!(v.is_finite());
        assert!((v - gaussian_conditional_log_density_joint(n, 5, a, &y)).abs() < 1e-10);
    }

    #[test]
    fn exponential_two_step_is_uniform() {
        let a = 0.35;
        let expected = -(2.0 * a + 2.0f64).ln();
        for y in [-0.99, 0.0, 1.5] {
            assert_relative_eq!(
                exponential_conditional_log_density(2, 1, a, &[y]),
                expected,
                epsilon = 1e-13
            );
        }
        assert_eq!(
            exponential_conditional_log_density(2, 1, a, &[2.0 * a + 1.01]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn exponential_boundary_is_continuous() {
        let left = exponential_conditional_log_density(10, 2, 0.2, &[-1.0 + 1e-12, 0.3]);
        let at = exponential_conditional_log_density(10, 2, 0.2, &[-1.0, 0.3]);
        assert!(left.is_finite() && (left - at).abs() < 1e-9);
    }

    #[test]
    fn oracles_are_proper_densities() {
        for n in [5usize, 50] {
            let a = 0.3;
            let hi = n as f64 * a + (n - 1) as f64;
            let mass = quad::integrate(
                |y| exponential_conditional_log_density(n, 1, a, &[y]).exp(),
                -1.0,
                hi,
                1e-12,
            )
            .unwrap();
            assert!((mass - 1.0).abs() < 1e-9, "n={n}: {mass}");
            let mass = quad::integrate(
                |y| gaussian_conditional_log_density(n, 1, a, &[y]).exp(),
                -20.0,
                20.0,
                1e-12,
            )
            .unwrap();
            assert!((mass - 1.0).abs() < 1e-9);
        }
        // k = 2 by iterated quadrature.
        let (n, a) = (6usize, 0.4);
        let top = n as f64 * a + n as f64 - 2.0;
        let mass = quad::integrate(
            |y1| {
                quad::integrate(
                    |y2| exponential_conditional_log_density(n, 2, a, &[y1, y2]).exp(),
                    -1.0,
                    top - y1,
                    1e-11,
                )
                .unwrap()
            },
            -1.0,
            top + 1.0,
            1e-10,
        )
        .unwrap();
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn exponential_closed_form_matches_bayes_chain() {
        let n = 40;
        let a = 0.25;
        let y: Vec<f64> = (0..30).map(|j| ((j * 13 % 7) as f64) * 0.2 - 0.6).collect();
        for k in [1, 10, 30] {
            let closed = exponential_conditional_log_density(n, k, a, &y[..k]);
            let chain = exponential_by_bayes(n, a, &y[..k]);
            assert!(
                (closed - chain).abs() < 1e-12 * closed.abs().max(1.0),
                "k={k}: {closed} vs {chain}"
            );
        }
    }

    #[test]
    fn large_n_does_not_overflow() {
        let y = vec![0.1; 900];
        let v = exponential_conditional_log_density(1000, 900, 0.1, &y);
        assert!(v.is_finite());
    }
}
