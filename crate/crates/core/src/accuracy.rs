//! Certifying how long a run may be.
//!
//! The relative error of the adaptive density `h` against the true
//! conditional density `p_n` is summarized by
//! `ERE = 1 - E_{p_X}[h²/(p_X p_n)]` and `VRE = E_{p_X}[h³/(p_X p_n²)] - (1-ERE)²`,
//! estimated from blocks drawn i.i.d. from `p_X`. The true `p_n` is replaced
//! by a saddlepoint proxy unless an exact density is available.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{step_log_density, RunSpec, TiltChain};
use crate::error::{Error, Result};
use crate::model::{log_normal_pdf, SourceModel};
use crate::oracles::exact_conditional_log_density;
use crate::rng::{substream, Purpose};
use crate::stats;
use crate::tilted::{cumulants_at, invert_m, CumulantPoint};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// First-order saddlepoint log-density of the mean of `n` copies of `f(X)`
/// at `u`: `½ log n + nψ(t) - ntu - log(s(t)√2π)` with `m(t) = u`.
pub fn saddlepoint_log_density(model: &dyn SourceModel, n: usize, u: f64) -> Result<f64> {
    let t = invert_m(model, u)?;
    let cum = cumulants_at(model, t)?;
    let nf = n as f64;
    Ok(0.5 * nf.ln() + nf * (model.log_mgf(t) - t * u) - 0.5 * cum.s2.ln() - LN_SQRT_2PI)
}

/// Edgeworth correction polynomials of the standardized sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteExpansion {
    pub order: u8,
    /// Standardized third cumulant `κ3/s³`.
    pub skew: f64,
    /// Standardized fourth cumulant `κ4/s⁴`.
    pub excess_kurtosis: f64,
}

pub fn hermite3(z: f64) -> f64 {
    z * (z * z - 3.0)
}

pub fn hermite4(z: f64) -> f64 {
    let z2 = z * z;
    z2 * (z2 - 6.0) + 3.0
}

pub fn hermite6(z: f64) -> f64 {
    let z2 = z * z;
    ((z2 - 15.0) * z2 + 45.0) * z2 - 15.0
}

impl HermiteExpansion {
    /// From a cumulant point whose `mu3`, `mu4` are the third and fourth cumulants.
    pub fn from_cumulants(cum: &CumulantPoint, order: u8) -> Self {
        let s2 = cum.s2;
        Self {
            order,
            skew: cum.mu3 / s2.powf(1.5),
            excess_kurtosis: cum.mu4 / (s2 * s2),
        }
    }

    /// From central moments `(s², μ3, μ4)`.
    pub fn from_moments(s2: f64, mu3: f64, mu4: f64, order: u8) -> Self {
        Self {
            order,
            skew: mu3 / s2.powf(1.5),
            excess_kurtosis: (mu4 - 3.0 * s2 * s2) / (s2 * s2),
        }
    }

    pub fn p3(&self, z: f64) -> f64 {
        self.skew / 6.0 * hermite3(z)
    }

    pub fn p4(&self, z: f64) -> f64 {
        self.skew * self.skew / 72.0 * hermite6(z) + self.excess_kurtosis / 24.0 * hermite4(z)
    }

    /// `1 + P3/√n [+ P4/n]`, clamped below at `1e-12`.
    pub fn bracket(&self, n: usize, z: f64) -> f64 {
        let nf = n as f64;
        let mut b = 1.0 + self.p3(z) / nf.sqrt();
        if self.order >= 4 {
            b += self.p4(z) / nf;
        }
        b.max(1e-12)
    }
}

/// Log of the Edgeworth density of the standardized sum of `n` copies at `z`.
pub fn edgeworth_log_density(cum: &CumulantPoint, n: usize, z: f64, order: u8) -> f64 {
    let h = HermiteExpansion::from_cumulants(cum, order);
    log_normal_pdf(0.0, 1.0, z) + h.bracket(n, z).ln()
}

/// `log p_X(y)` summed over the path.
pub fn source_log_density(model: &dyn SourceModel, y: &[f64]) -> f64 {
    y.iter().map(|&v| model.log_density(v)).sum()
}

/// Saddlepoint proxy of the conditional log-density of `(X_1..X_k)` given
/// `Σ f(X_i) = n·level`, with `k = y.len()`.
pub fn proxy_conditional_log_density(spec: &RunSpec, y: &[f64]) -> Result<f64> {
    let model = spec.model.as_ref();
    let k = y.len();
    if k == 0 {
        return Ok(0.0);
    }
    if k >= spec.n {
        return Err(Error::InvalidSpec(format!(
            "path length {k} must be below n = {}",
            spec.n
        )));
    }
    let u_k: f64 = y.iter().map(|&v| model.f(v)).sum();
    proxy_from_sum(spec, k, u_k, source_log_density(model, y))
}

fn proxy_from_sum(spec: &RunSpec, k: usize, u_k: f64, log_px: f64) -> Result<f64> {
    let model = spec.model.as_ref();
    let n = spec.n;
    let m_k = spec.mean_target(k, u_k);
    let num = saddlepoint_log_density(model, n - k, m_k).map_err(|e| e.at_step(k))?;
    let den = saddlepoint_log_density(model, n, spec.level())?;
    Ok(log_px + (n as f64 / (n - k) as f64).ln() + num - den)
}

/// Which conditional density stands for `p_n` in the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    #[default]
    Saddlepoint,
    /// Closed-form conditional density (normal and centered exponential only).
    Exact,
}

/// Monte-Carlo estimates of `A` and `B` at one run length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbEstimate {
    pub k: usize,
    pub a_hat: f64,
    pub b_hat: f64,
    pub a_hat_stderr: f64,
    pub b_hat_stderr: f64,
    /// Mean importance weight `h/p_X` of the kept blocks; `1` in expectation.
    pub w_hat: f64,
    /// Blocks that contributed.
    pub used: usize,
    /// Fraction of blocks dropped because `m_k` left the attainable range.
    pub drop_rate: f64,
}

/// Per-block log-statistics for every requested `k`; `None` once the block
/// has left the attainable range.
fn block_statistics(spec: &RunSpec, reference: Reference, ks: &[usize], l: u64) -> Result<Vec<Option<[f64; 3]>>> {
    let model = spec.model.as_ref();
    let k_max = *ks.iter().max().expect("non-empty k list");
    let mut rng = substream(spec.seed, Purpose::Block, l);
    let y: Vec<f64> = (0..k_max)
        .map(|_| model.sample(&mut rng))
        .collect::<Option<_>>()
        .ok_or(Error::Unsupported(
            "relative-error statistics need an exact sampler for p",
        ))?;
    let long = spec.with_k(k_max)?;
    let mut chain = TiltChain::new(&long);
    let mut log_h = Vec::with_capacity(k_max + 1);
    log_h.push(0.0);
    let mut log_px = vec![0.0];
    let mut sums = vec![0.0];
    for &yi in &y {
        let step = match chain.current_step() {
            Ok(s) => s,
            Err(Error::TargetOutsideRange { .. }) | Err(Error::TiltOutOfDomain { .. }) => break,
            Err(e) => return Err(e),
        };
        log_h.push(log_h.last().unwrap() + step_log_density(&step, model, yi));
        log_px.push(log_px.last().unwrap() + model.log_density(yi));
        chain.advance(&step, yi);
        sums.push(chain.partial_sum());
    }
    ks.iter()
        .map(|&k| {
            if k >= log_h.len() {
                return Ok(None);
            }
            let log_pn = match reference {
                Reference::Saddlepoint => match proxy_from_sum(spec, k, sums[k], log_px[k]) {
                    Ok(v) => v,
                    Err(Error::TargetOutsideRange { .. }) | Err(Error::TiltOutOfDomain { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                },
                Reference::Exact => exact_conditional_log_density(spec, &y[..k])?,
            };
            let (h, px) = (log_h[k], log_px[k]);
            let log_b = 2.0 * h - px - log_pn;
            let log_a = 3.0 * h - px - 2.0 * log_pn;
            Ok((log_a.is_finite() && log_b.is_finite()).then_some([log_a, log_b, h - px]))
        })
        .collect()
}

/// How block averages are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Plain means `Â = mean(A_l)`, `B̂ = mean(B_l)`.
    Plain,
    /// Means divided by the mean importance weight `mean(h/p_X)`, which
    /// removes the weight noise shared by `Â` and `B̂`.
    #[default]
    SelfNormalized,
}

/// `Σ num / Σ den` (or the plain mean of `num` when `den` is `None`) with its
/// standard error, computed under one shared shift.
fn shifted_mean(log_num: &[f64], log_den: Option<&[f64]>) -> (f64, f64) {
    let shift = log_num
        .iter()
        .chain(log_den.unwrap_or(&[]))
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let num: Vec<f64> = log_num.iter().map(|l| (l - shift).exp()).collect();
    match log_den {
        None => {
            let (lm, rel) = stats::log_mean_exp(log_num);
            (lm.exp(), lm.exp() * rel)
        }
        Some(log_den) => {
            let den: Vec<f64> = log_den.iter().map(|l| (l - shift).exp()).collect();
            let total: f64 = den.iter().sum();
            let ratio = num.iter().sum::<f64>() / total;
            let resid: f64 = num.iter().zip(&den).map(|(x, w)| (x - ratio * w).powi(2)).sum();
            (ratio, resid.sqrt() / total)
        }
    }
}

/// Estimate `Â`, `B̂` for each run length in `ks` from `blocks` i.i.d. blocks.
/// Block `l` always uses the same substream, so the estimates at different
/// `k` share their randomness.
pub fn ab_statistics(spec: &RunSpec, blocks: usize, reference: Reference, ks: &[usize]) -> Result<Vec<AbEstimate>> {
    ab_statistics_weighted(spec, blocks, reference, ks, Weighting::Plain)
}

pub fn ab_statistics_weighted(
    spec: &RunSpec,
    blocks: usize,
    reference: Reference,
    ks: &[usize],
    weighting: Weighting,
) -> Result<Vec<AbEstimate>> {
    if blocks < 2 {
        return Err(Error::InvalidSpec("at least two blocks are needed".into()));
    }
    if ks.is_empty() || ks.iter().any(|&k| k == 0 || k >= spec.n) {
        return Err(Error::InvalidSpec(format!("run lengths must lie in 1..{}", spec.n)));
    }
    let per_block: Vec<Vec<Option<[f64; 3]>>> = (0..blocks as u64)
        .into_par_iter()
        .map(|l| block_statistics(spec, reference, ks, l))
        .collect::<Result<_>>()?;
    ks.iter()
        .enumerate()
        .map(|(j, &k)| {
            let kept: Vec<[f64; 3]> = per_block.iter().filter_map(|b| b[j]).collect();
            if kept.len() < 2 {
                return Err(Error::DegenerateEstimate);
            }
            let column = |c: usize| -> Vec<f64> { kept.iter().map(|p| p[c]).collect() };
            let (log_a, log_b, log_w) = (column(0), column(1), column(2));
            let den = match weighting {
                Weighting::Plain => None,
                Weighting::SelfNormalized => Some(log_w.as_slice()),
            };
            let (a, a_se) = shifted_mean(&log_a, den);
            let (b, b_se) = shifted_mean(&log_b, den);
            Ok(AbEstimate {
                k,
                a_hat: a,
                b_hat: b,
                a_hat_stderr: a_se,
                b_hat_stderr: b_se,
                w_hat: shifted_mean(&log_w, None).0,
                used: kept.len(),
                drop_rate: 1.0 - kept.len() as f64 / blocks as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiBar {
    pub ere_bar: f64,
    pub vre_bar: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// `ERE̅ = 1 - B̂`, `VRE̅ = Â - B̂²`, interval `ERE̅ ∓ 2√max(VRE̅, 0)`.
pub fn ci_bar(a_hat: f64, b_hat: f64) -> CiBar {
    let ere_bar = 1.0 - b_hat;
    let vre_bar = a_hat - b_hat * b_hat;
    let half = 2.0 * vre_bar.max(0.0).sqrt();
    CiBar {
        ere_bar,
        vre_bar,
        ci_lo: ere_bar - half,
        ci_hi: ere_bar + half,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub k: usize,
    pub ere_bar: f64,
    pub vre_bar: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub a_hat_stderr: f64,
    pub b_hat_stderr: f64,
    pub drop_rate: f64,
    /// `VRE̅` is below zero by more than its propagated standard error.
    pub negative_variance: bool,
    pub k_delta: Option<usize>,
}

impl AccuracyReport {
    pub fn from_estimate(est: &AbEstimate, blocks: usize) -> Self {
        let ci = ci_bar(est.a_hat, est.b_hat);
        let vre_se = est.a_hat_stderr + 2.0 * est.b_hat.abs() * est.b_hat_stderr;
        Self {
            k: est.k,
            ere_bar: ci.ere_bar,
            vre_bar: ci.vre_bar,
            ci_lo: ci.ci_lo,
            ci_hi: ci.ci_hi,
            l: blocks,
            a_hat_stderr: est.a_hat_stderr,
            b_hat_stderr: est.b_hat_stderr,
            drop_rate: est.drop_rate,
            negative_variance: ci.vre_bar < -vre_se,
            k_delta: None,
        }
    }

    pub fn contains(&self, delta: f64) -> bool {
        self.ci_lo <= delta && delta <= self.ci_hi
    }
}

/// Accuracy reports for every run length in `ks`.
pub fn accuracy_curve(
    spec: &RunSpec,
    blocks: usize,
    reference: Reference,
    ks: &[usize],
    weighting: Weighting,
) -> Result<Vec<AccuracyReport>> {
    Ok(ab_statistics_weighted(spec, blocks, reference, ks, weighting)?
        .iter()
        .map(|e| AccuracyReport::from_estimate(e, blocks))
        .collect())
}

/// Scan stride for the run-length search: 1 up to `n = 200`, else `n/100`.
pub fn default_stride(n: usize) -> usize {
    if n <= 200 {
        1
    } else {
        (n / 100).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    /// First scanned `k` whose interval contains `δ`.
    pub k_delta: Option<usize>,
    /// Last scanned `k` before which every interval lies strictly below `δ`.
    pub last_below: Option<usize>,
    pub cap_reached: bool,
    pub reports: Vec<AccuracyReport>,
}

/// Scan `k = stride, 2·stride, …, n-2` and return the first run length whose
/// interval contains `delta`.
pub fn select_k(spec: &RunSpec, delta: f64, blocks: usize, stride: usize, weighting: Weighting) -> Result<KSelection> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidSpec(format!("delta must lie in (0, 1), got {delta}")));
    }
    if spec.n < 3 {
        return Err(Error::InvalidSpec("run-length search needs n ≥ 3".into()));
    }
    let cap = spec.n - 2;
    let stride = stride.max(1);
    let mut ks: Vec<usize> = (1..=cap).step_by(stride).collect();
    if *ks.last().unwrap() != cap {
        ks.push(cap);
    }
    let mut reports = accuracy_curve(spec, blocks, Reference::Saddlepoint, &ks, weighting)?;
    let k_delta = reports.iter().find(|r| r.contains(delta)).map(|r| r.k);
    let last_below = reports.iter().take_while(|r| r.ci_hi < delta).last().map(|r| r.k);
    for r in &mut reports {
        r.k_delta = k_delta;
    }
    Ok(KSelection {
        k_delta,
        last_below,
        cap_reached: k_delta.is_none(),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CenteredExponential, ModelRef, StandardNormal};
    use crate::quad;
    use statrs::function::gamma::ln_gamma;
    use std::sync::Arc;

    fn gamma_mean_log_density(n: usize, u: f64) -> f64 {
        // S/n with S = G - n, G ~ Gamma(n, 1).
        let nf = n as f64;
        let g = nf * (u + 1.0);
        nf.ln() + (nf - 1.0) * g.ln() - g - ln_gamma(nf)
    }

    #[test]
    fn saddlepoint_is_exact_for_gaussian() {
        for n in [1usize, 7, 100, 1000] {
            for u in [-0.8, 0.0, 0.05, 1.3] {
                let exact = log_normal_pdf(0.0, 1.0 / n as f64, u);
                let sp = saddlepoint_log_density(&StandardNormal, n, u).unwrap();
                assert!((sp - exact).abs() < 1e-12, "n={n} u={u}");
            }
        }
    }

    #[test]
    fn saddlepoint_exponential_relative_error() {
        let err = |n| {
            (saddlepoint_log_density(&CenteredExponential, n, 0.233).unwrap() - gamma_mean_log_density(n, 0.233))
                .exp_m1()
                .abs()
        };
        assert!(err(100) < 0.02);
        let errs: Vec<f64> = [50, 100, 500, 1000].map(err).to_vec();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn hermite_parity() {
        let h = HermiteExpansion::from_moments(1.3, 0.7, 6.0, 4);
        assert_eq!(h.p3(0.0), 0.0);
        let d = (h.p4(1e-5) - h.p4(-1e-5)) / 2e-5;
        assert!(d.abs() < 1e-9);
        assert!((h.p3(0.8) + h.p3(-0.8)).abs() < 1e-15);
    }

    #[test]
    fn edgeworth_gaussian_cumulants_are_exact() {
        let cum = cumulants_at(&StandardNormal, 0.4).unwrap();
        for z in [-2.0, 0.0, 0.7] {
            for order in [3, 4] {
                assert!((edgeworth_log_density(&cum, 10, z, order) - log_normal_pdf(0.0, 1.0, z)).abs() < 1e-15);
            }
        }
        let exp = cumulants_at(&CenteredExponential, 0.0).unwrap();
        assert!((edgeworth_log_density(&exp, 10, 0.0, 3) - log_normal_pdf(0.0, 1.0, 0.0)).abs() < 1e-15);
    }

    fn gamma_standardized(n: usize, z: f64) -> f64 {
        let nf = n as f64;
        0.5 * nf.ln() + gamma_mean_log_density(n, z / nf.sqrt()) - nf.ln()
    }

    #[test]
    fn edgeworth_exponential_order4() {
        let cum = cumulants_at(&CenteredExponential, 0.0).unwrap();
        let rel = (edgeworth_log_density(&cum, 100, 1.0, 4) - gamma_standardized(100, 1.0))
            .exp_m1()
            .abs();
        assert!(rel < 1e-3, "{rel}");
        for n in [50, 100, 400] {
            let max_err = |order| {
                (0..=60)
                    .map(|j| -3.0 + 0.1 * j as f64)
                    .map(|z| {
                        (edgeworth_log_density(&cum, n, z, order) - gamma_standardized(n, z))
                            .exp_m1()
                            .abs()
                    })
                    .fold(0.0, f64::max)
            };
            assert!(max_err(4) < max_err(3), "n={n}");
        }
    }

    #[test]
    fn proxy_empty_path_and_gaussian_oracle() {
        let model: ModelRef = Arc::new(StandardNormal);
        let spec = RunSpec::new(model, 1000, 900, 0.0736).unwrap();
        assert_eq!(proxy_conditional_log_density(&spec, &[]).unwrap(), 0.0);
        let y: Vec<f64> = (0..900).map(|j| 0.0736 + ((j * 29 % 17) as f64 - 8.0) * 0.1).collect();
        for k in [1, 100, 900] {
            let exact = crate::oracles::gaussian_conditional_log_density(1000, k, 0.0736, &y[..k]);
            let proxy = proxy_conditional_log_density(&spec, &y[..k]).unwrap();
            assert!((proxy - exact).abs() < 1e-3, "k={k}: {proxy} vs {exact}");
        }
    }

    #[test]
    fn proxy_exponential_oracle() {
        let model: ModelRef = Arc::new(CenteredExponential);
        let a = 2.3263 / 10.0;
        let spec = RunSpec::new(model, 100, 50, a).unwrap();
        let y: Vec<f64> = (0..50).map(|j| a + ((j * 7 % 11) as f64 - 5.0) * 0.15).collect();
        let exact = crate::oracles::exponential_conditional_log_density(100, 50, a, &y);
        let proxy = proxy_conditional_log_density(&spec, &y).unwrap();
        assert!((proxy - exact).abs() < 2e-2, "{proxy} vs {exact}");
    }

    #[test]
    fn proxy_is_normalized_at_k1() {
        let model: ModelRef = Arc::new(CenteredExponential);
        let spec = RunSpec::new(model, 30, 1, 0.3).unwrap();
        let top = 30.0 * 0.3 + 29.0 - 1e-9;
        let mass = quad::integrate(
            |y| proxy_conditional_log_density(&spec, &[y]).unwrap().exp(),
            -1.0,
            top,
            1e-10,
        )
        .unwrap();
        assert!((mass - 1.0).abs() < 0.01, "{mass}");
    }

    #[test]
    fn ci_bar_arithmetic() {
        let c = ci_bar(1.0, 1.0);
        assert_eq!((c.ere_bar, c.vre_bar, c.ci_lo, c.ci_hi), (0.0, 0.0, 0.0, 0.0));
        let c = ci_bar(1.04, 0.99);
        assert!((c.ere_bar - 0.01).abs() < 1e-15);
        assert_eq!(c.vre_bar, 1.04 - 0.99 * 0.99);
        assert!((c.vre_bar - 0.0599).abs() < 1e-15);
        assert!((c.ci_hi - (0.01 + 2.0 * 0.0599f64.sqrt())).abs() < 1e-14);
        let wider = ci_bar(1.2, 0.99);
        assert!(wider.ci_hi - wider.ci_lo > c.ci_hi - c.ci_lo);
        let neg = ci_bar(0.9, 1.0);
        assert_eq!(neg.ci_lo, neg.ci_hi);
    }

    #[test]
    fn gaussian_statistics_are_unbiased() {
        let model: ModelRef = Arc::new(StandardNormal);
        let spec = RunSpec::new(model, 50, 10, 0.3).unwrap().with_seed(3);
        let est = ab_statistics(&spec, 4000, Reference::Saddlepoint, &[1, 5, 10]).unwrap();
        for e in &est {
            assert!((e.b_hat - 1.0).abs() < 3.0 * e.b_hat_stderr + 1e-12, "{e:?}");
            assert_eq!(e.drop_rate, 0.0);
        }
        let exact = ab_statistics(&spec, 4000, Reference::Exact, &[1, 5, 10]).unwrap();
        for (p, x) in est.iter().zip(&exact) {
            assert!((p.b_hat - x.b_hat).abs() < 1e-9 * x.b_hat);
        }
    }

    #[test]
    fn stderr_shrinks_with_blocks() {
        let model: ModelRef = Arc::new(CenteredExponential);
        let spec = RunSpec::new(model, 100, 30, 0.2326).unwrap().with_seed(9);
        let small = ab_statistics(&spec, 1000, Reference::Saddlepoint, &[20]).unwrap()[0];
        let large = ab_statistics(&spec, 2000, Reference::Saddlepoint, &[20]).unwrap()[0];
        let ratio = small.b_hat_stderr / large.b_hat_stderr;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn exponential_selection_lands_in_upper_half() {
        let model: ModelRef = Arc::new(CenteredExponential);
        let spec = RunSpec::new(model, 100, 1, 0.23263).unwrap();
        let sel = select_k(&spec, 0.05, 1000, 1, Weighting::SelfNormalized).unwrap();
        let k = sel.k_delta.expect("delta enters the interval");
        assert!((49..=98).contains(&k), "{k}");
        assert!(sel.last_below.unwrap() < k);
    }

    #[test]
    fn gaussian_selection_runs_to_cap() {
        let model: ModelRef = Arc::new(StandardNormal);
        let spec = RunSpec::new(model, 60, 1, 0.3).unwrap();
        let sel = select_k(&spec, 0.05, 200, 1, Weighting::SelfNormalized).unwrap();
        assert!(sel.cap_reached && sel.k_delta.is_none());
        assert!(sel.reports.iter().all(|r| r.ere_bar.abs() < 0.01));
        assert_eq!(sel.reports.len(), 58);
    }

    #[test]
    fn selection_is_monotone_in_delta() {
        let model: ModelRef = Arc::new(CenteredExponential);
        let spec = RunSpec::new(model, 60, 1, 0.3).unwrap().with_seed(1);
        let lo = select_k(&spec, 0.02, 400, 1, Weighting::SelfNormalized).unwrap();
        let hi = select_k(&spec, 0.2, 400, 1, Weighting::SelfNormalized).unwrap();
        let cap = 58;
        assert!(hi.k_delta.unwrap_or(cap + 1) >= lo.k_delta.unwrap_or(cap + 1));
        for r in &lo.reports {
            assert!(r.ci_lo <= r.ere_bar && r.ere_bar <= r.ci_hi);
        }
    }
}
