//! Drawing conditioned runs from the adaptive tilting density.
//!
//! A run is built one coordinate at a time: after `i` draws the step density
//! `h_i` is rebuilt from the realized partial sum and the next value is drawn
//! from it. Three step kernels are available:
//!
//! * a rejection sampler whose envelope is the tilted law `π_f^θ` with
//!   `θ = kernel_mean / α`; it is exact and needs `sample_tilted`;
//! * the uniform-envelope rejection sampler on the probability scale of the
//!   kernel normal; exact, needs `f = id` and a density bound;
//! * random-walk Metropolis–Hastings, for everything else.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::density::{step_log_density, RunSpec, StepDensity, StepKind, TiltChain};
use crate::error::{Error, Result};
use crate::model::SourceModel;
use crate::rng::{substream, Purpose, StreamRng};
use crate::tilted::{invert_m, tilt_log_density};

/// Proposals after which a rejection sampler gives up.
pub const MAX_PROPOSALS: u64 = 100_000;
/// Minimum acceptance rate tolerated over [`MAX_PROPOSALS`] proposals.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// Which kernel draws each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSampler {
    /// Tilted envelope when the model has an exact tilted sampler, else the
    /// uniform envelope when `f = id` and `p` is bounded, else MH.
    #[default]
    Auto,
    TiltedEnvelope,
    UniformEnvelope,
    Metropolis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub step_sampler: StepSampler,
    /// MH steps taken before the returned state.
    pub mh_burn_in: usize,
    /// Multiplier on the tilted-law scale used as the MH proposal sd.
    pub mh_scale: f64,
    /// Fresh substreams tried after a path leaves the attainable mean range.
    pub retry_budget: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            step_sampler: StepSampler::Auto,
            mh_burn_in: 200,
            mh_scale: 1.0,
            retry_budget: 10,
        }
    }
}

/// Which substream produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub seed: u64,
    pub path_index: u64,
    /// `0` for the first attempt; each abort moves to the next substream.
    pub attempt: u32,
}

impl SeedTrace {
    pub fn stream_index(&self) -> u64 {
        (self.path_index << 8) | self.attempt as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub values: Vec<f64>,
    /// `partial_sums[i] = Σ_{j ≤ i} f(values[j])`.
    pub partial_sums: Vec<f64>,
    /// Targets `m_i` of the successive steps.
    pub mean_targets: Vec<f64>,
    pub log_density: f64,
    /// Proposals per step for rejection kernels, accepted moves for MH.
    pub rejection_stats: Vec<u64>,
    pub seed_trace: SeedTrace,
}

/// Fail when acceptance has been too rare over a full proposal budget.
fn check_budget(proposals: u64) -> Result<()> {
    if proposals >= MAX_PROPOSALS {
        return Err(Error::EnvelopeFailure {
            rate: 1.0 / proposals as f64,
            proposals,
        });
    }
    Ok(())
}

/// Random-walk Metropolis–Hastings on `log_target`, `burn_in` steps from
/// `start`. Returns the final state and the number of accepted moves.
pub fn metropolis<R: Rng + ?Sized>(
    log_target: impl Fn(f64) -> f64,
    start: f64,
    scale: f64,
    burn_in: usize,
    rng: &mut R,
) -> (f64, u64) {
    let mut x = start;
    let mut lx = log_target(x);
    let mut accepted = 0;
    for _ in 0..burn_in {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let y = x + scale * z;
        let ly = log_target(y);
        if ly.is_finite() && (lx == f64::NEG_INFINITY || rng.random::<f64>().ln() < ly - lx) {
            x = y;
            lx = ly;
            accepted += 1;
        }
    }
    (x, accepted)
}

/// One draw from the tilted law `π_f^t` with `m(t) = level`.
pub fn sample_initial(model: &dyn SourceModel, level: f64, rng: &mut StreamRng) -> Result<f64> {
    sample_initial_with(model, level, rng, 1000)
}

/// [`sample_initial`] with an explicit MH burn-in for models lacking an exact
/// tilted sampler.
pub fn sample_initial_with(model: &dyn SourceModel, level: f64, rng: &mut StreamRng, burn_in: usize) -> Result<f64> {
    let t = invert_m(model, level)?;
    if let Some(y) = model.sample_tilted(t, rng) {
        return Ok(y);
    }
    let (center, scale) = model.tilted_location(t);
    let target = |x: f64| tilt_log_density(model, t, x).unwrap_or(f64::NEG_INFINITY);
    Ok(metropolis(target, center, scale, burn_in, rng).0)
}

/// Draw `Y ∝ p(y) n(mean, variance, y)` by rejection on the probability scale:
/// `X ~ U(0,1)`, `Y = N⁻¹(X)`, accept when `K·U ≤ p(Y)` with `K` the density
/// bound of `p`. Returns the draw and the number of proposals used.
pub fn sample_step_rejection(
    model: &dyn SourceModel,
    mean: f64,
    variance: f64,
    rng: &mut StreamRng,
) -> Result<(f64, u64)> {
    let bound = model
        .density_bound()
        .ok_or(Error::Unsupported("uniform-envelope rejection needs a density bound"))?;
    let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut proposals = 0;
    loop {
        check_budget(proposals)?;
        proposals += 1;
        let x: f64 = rng.random();
        if x <= 0.0 {
            continue;
        }
        let y = normal.inverse_cdf(x);
        let u: f64 = rng.random();
        if bound * u <= model.density(y) {
            return Ok((y, proposals));
        }
    }
}

/// Draw from a kernel step by proposing from `π_f^θ`, `θ = kernel_mean/α`,
/// and accepting with probability `exp(-f(y)²/(2α))`.
pub fn sample_step_tilted(model: &dyn SourceModel, step: &StepDensity, rng: &mut StreamRng) -> Result<(f64, u64)> {
    let theta = step.kernel_mean() / step.alpha;
    if !model.contains_tilt(theta) {
        return Err(Error::TiltOutOfDomain {
            t: theta,
            lo: model.t_domain().0,
            hi: model.t_domain().1,
        });
    }
    let mut proposals = 0;
    loop {
        check_budget(proposals)?;
        proposals += 1;
        let y = model
            .sample_tilted(theta, rng)
            .ok_or(Error::Unsupported("model has no exact tilted sampler"))?;
        let fy = model.f(y);
        let u: f64 = rng.random();
        if u.ln() <= -fy * fy / (2.0 * step.alpha) {
            return Ok((y, proposals));
        }
    }
}

/// One MH draw targeting the step density, started at `start`.
pub fn sample_step_mh(
    model: &dyn SourceModel,
    step: &StepDensity,
    config: &SamplerConfig,
    start: f64,
    rng: &mut StreamRng,
) -> (f64, u64) {
    let scale = config.mh_scale * model.tilted_location(step.t_i).1;
    metropolis(|y| step.log_kernel(model, y), start, scale, config.mh_burn_in, rng)
}

fn tilted_envelope_usable(model: &dyn SourceModel, step: &StepDensity, rng: &mut StreamRng) -> bool {
    let theta = step.kernel_mean() / step.alpha;
    model.contains_tilt(theta) && model.sample_tilted(theta, &mut rng.clone()).is_some()
}

fn draw_step(
    spec: &RunSpec,
    config: &SamplerConfig,
    step: &StepDensity,
    previous: Option<f64>,
    rng: &mut StreamRng,
) -> Result<(f64, u64)> {
    let model = spec.model.as_ref();
    if step.kind == StepKind::Tilted {
        let burn_in = (10 * spec.k).max(config.mh_burn_in);
        return sample_initial_with(model, step.m_i, rng, burn_in).map(|y| (y, 1));
    }
    let choice = match config.step_sampler {
        StepSampler::Auto if tilted_envelope_usable(model, step, rng) => StepSampler::TiltedEnvelope,
        StepSampler::Auto if model.f_is_identity() && model.density_bound().is_some() => StepSampler::UniformEnvelope,
        StepSampler::Auto => StepSampler::Metropolis,
        other => other,
    };
    match choice {
        StepSampler::TiltedEnvelope => sample_step_tilted(model, step, rng),
        StepSampler::UniformEnvelope => {
            if !model.f_is_identity() {
                return Err(Error::Unsupported("uniform-envelope rejection needs f = identity"));
            }
            sample_step_rejection(model, step.kernel_mean(), step.alpha, rng)
        }
        _ => {
            let start = previous.unwrap_or_else(|| model.tilted_location(step.t_i).0);
            Ok(sample_step_mh(model, step, config, start, rng))
        }
    }
}

fn sample_attempt(spec: &RunSpec, config: &SamplerConfig, trace: SeedTrace) -> Result<PathSample> {
    let mut rng = substream(spec.seed, Purpose::Path, trace.stream_index());
    let mut chain = TiltChain::new(spec);
    let mut values = Vec::with_capacity(spec.k);
    let mut partial_sums = Vec::with_capacity(spec.k);
    let mut mean_targets = Vec::with_capacity(spec.k);
    let mut stats = Vec::with_capacity(spec.k);
    let mut log_density = 0.0;
    for _ in 0..spec.k {
        let step = chain.current_step()?;
        let (y, count) =
            draw_step(spec, config, &step, values.last().copied(), &mut rng).map_err(|e| e.at_step(step.i))?;
        log_density += step_log_density(&step, spec.model.as_ref(), y);
        chain.advance(&step, y);
        values.push(y);
        partial_sums.push(chain.partial_sum());
        mean_targets.push(step.m_i);
        stats.push(count);
    }
    if !log_density.is_finite() {
        return Err(Error::DegenerateEstimate);
    }
    Ok(PathSample {
        values,
        partial_sums,
        mean_targets,
        log_density,
        rejection_stats: stats,
        seed_trace: trace,
    })
}

/// Sample the run with index `path_index`, retrying on a fresh substream
/// whenever the path drives `m_i` out of the attainable range.
pub fn sample_path(spec: &RunSpec, config: &SamplerConfig, path_index: u64) -> Result<PathSample> {
    let mut attempt = 0;
    loop {
        let trace = SeedTrace {
            seed: spec.seed,
            path_index,
            attempt,
        };
        match sample_attempt(spec, config, trace) {
            Err(Error::TargetOutsideRange { .. }) | Err(Error::TiltOutOfDomain { .. })
                if attempt < config.retry_budget =>
            {
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// A bundle of independently sampled runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    pub paths: Vec<PathSample>,
    /// Aborted attempts summed over paths.
    pub aborts: u64,
}

impl PathBundle {
    pub fn abort_rate(&self) -> f64 {
        let attempts = self.paths.len() as u64 + self.aborts;
        self.aborts as f64 / attempts.max(1) as f64
    }
}

/// Sample paths `0..count` in parallel. The result does not depend on the
/// number of threads.
pub fn sample_paths(spec: &RunSpec, config: &SamplerConfig, count: usize) -> Result<PathBundle> {
    let paths: Vec<PathSample> = (0..count as u64)
        .into_par_iter()
        .map(|j| sample_path(spec, config, j))
        .collect::<Result<_>>()?;
    let aborts = paths.iter().map(|p| p.seed_trace.attempt as u64).sum();
    Ok(PathBundle { paths, aborts })
}

/// Draw `count` values from a step kernel with the chosen sampler; used by
/// diagnostics and tests of the kernels themselves.
pub fn sample_step_many(
    spec: &RunSpec,
    config: &SamplerConfig,
    step: &StepDensity,
    count: usize,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut prev = None;
    for _ in 0..count {
        let (y, _) = draw_step(spec, config, step, prev, rng)?;
        prev = Some(y);
        out.push(y);
    }
    Ok(out)
}

/// Generic exact draw from `p`, when the model offers one.
pub fn sample_source(model: &dyn SourceModel, rng: &mut dyn RngCore) -> Result<f64> {
    model
        .sample(rng)
        .ok_or(Error::Unsupported("model has no exact sampler"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{path_log_density, step_params, MeanAnchor};
    use crate::model::{CenteredExponential, ModelRef, NormalSquare, StandardNormal};
    use crate::quad;
    use crate::stats::{ks_statistic, mean, skewness, variance};
    use std::sync::Arc;

    fn normal_cdf(m: f64, v: f64) -> impl Fn(f64) -> f64 {
        let d = Normal::new(m, v.sqrt()).unwrap();
        move |x| d.cdf(x)
    }

    #[test]
    fn initial_gaussian_is_shifted_normal() {
        let mut rng = substream(1, Purpose::Scratch, 0);
        let a = 0.3;
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_initial(&StandardNormal, a, &mut rng).unwrap())
            .collect();
        assert!((mean(&xs) - a).abs() < 3.0 / (1e5f64).sqrt());
    }

    #[test]
    fn initial_exponential_has_tilted_mean() {
        let mut rng = substream(2, Purpose::Scratch, 0);
        let a = 0.2;
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_initial(&CenteredExponential, a, &mut rng).unwrap())
            .collect();
        assert!(xs.iter().all(|&x| x > -1.0));
        assert!((mean(&xs) - a).abs() < 3.0 * (1.0 + a) / (1e5f64).sqrt());
    }

    #[test]
    fn zero_tilt_draws_from_p() {
        let mut rng = substream(3, Purpose::Scratch, 0);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| sample_initial(&CenteredExponential, 0.0, &mut rng).unwrap())
            .collect();
        assert!(ks_statistic(&xs, |x| 1.0 - (-(x + 1.0)).exp()) < 0.015);
    }

    #[test]
    fn rejection_product_of_gaussians() {
        let mut rng = substream(4, Purpose::Scratch, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_step_rejection(&StandardNormal, 0.0, 1.0, &mut rng).unwrap().0)
            .collect();
        let (m, v) = (mean(&xs), variance(&xs));
        let se_m = (0.5f64 / 1e5).sqrt();
        let se_v = 0.5 * (2.0f64 / 1e5).sqrt();
        assert!(m.abs() < 3.0 * se_m, "{m}");
        assert!((v - 0.5).abs() < 3.0 * se_v, "{v}");
    }

    #[test]
    fn rejection_proposal_count_matches_quadrature() {
        let mut rng = substream(5, Purpose::Scratch, 0);
        let draws = 100_000;
        let total: u64 = (0..draws)
            .map(|_| sample_step_rejection(&StandardNormal, 0.0, 1.0, &mut rng).unwrap().1)
            .sum();
        let inv = Normal::new(0.0, 1.0).unwrap();
        let acc = quad::integrate(
            |x| StandardNormal.density(inv.inverse_cdf(x)),
            1e-15,
            1.0 - 1e-15,
            1e-10,
        )
        .unwrap();
        let expected = StandardNormal.density_bound().unwrap() / acc;
        assert!((expected - 2f64.sqrt()).abs() < 1e-6);
        let observed = total as f64 / draws as f64;
        assert!((observed - expected).abs() < 0.01, "{observed} vs {expected}");
    }

    #[test]
    fn rejection_uniform_source_is_flat() {
        use crate::model::CustomModel;
        let uniform = CustomModel::new(
            "uniform",
            |x| {
                if (0.0..=1.0).contains(&x) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            },
            |t: f64| {
                if t.abs() < 1e-12 {
                    0.0
                } else {
                    ((t.exp() - 1.0) / t).ln()
                }
            },
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .with_support(0.0, 1.0)
        .with_density_bound(1.0);
        let mut rng = substream(6, Purpose::Scratch, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_step_rejection(&uniform, 0.5, 1e6, &mut rng).unwrap().0)
            .collect();
        assert!(ks_statistic(&xs, |x| x.clamp(0.0, 1.0)) < 0.01);
    }

    fn gaussian_step(n: usize, i: usize) -> (RunSpec, StepDensity) {
        let model: ModelRef = Arc::new(StandardNormal);
        let spec = RunSpec::new(model, n, n - 1, 0.2).unwrap();
        let mut step = step_params(&spec, i, 0.7).unwrap();
        crate::density::normalize(&spec, &mut step).unwrap();
        (spec, step)
    }

    #[test]
    fn mh_matches_exact_gaussian_step() {
        let (spec, step) = gaussian_step(20, 5);
        let var = (20.0 - 5.0 - 1.0) / (20.0 - 5.0);
        let config = SamplerConfig {
            step_sampler: StepSampler::Metropolis,
            ..SamplerConfig::default()
        };
        let mut rng = substream(7, Purpose::Scratch, 0);
        let xs = sample_step_many(&spec, &config, &step, 10_000, &mut rng).unwrap();
        assert!(ks_statistic(&xs, normal_cdf(step.m_i, var)) < 0.02);
        let sk = skewness(&xs);
        assert!(sk.abs() < 3.0 * (6.0f64 / 1e4).sqrt(), "{sk}");
    }

    #[test]
    fn every_kernel_matches_exact_gaussian_step() {
        let (spec, step) = gaussian_step(50, 30);
        let var = (50.0 - 30.0 - 1.0) / (50.0 - 30.0);
        for kind in [StepSampler::TiltedEnvelope, StepSampler::UniformEnvelope] {
            let config = SamplerConfig {
                step_sampler: kind,
                ..SamplerConfig::default()
            };
            let mut rng = substream(8, Purpose::Scratch, kind as u64);
            let xs = sample_step_many(&spec, &config, &step, 20_000, &mut rng).unwrap();
            let d = ks_statistic(&xs, normal_cdf(step.m_i, var));
            assert!(d < 0.015, "{kind:?}: {d}");
        }
    }

    #[test]
    fn square_kernel_runs_through_tilted_envelope() {
        let model: ModelRef = Arc::new(NormalSquare);
        let spec = RunSpec::new(model, 200, 100, 0.3).unwrap();
        let path = sample_path(&spec, &SamplerConfig::default(), 0).unwrap();
        assert_eq!(path.values.len(), 100);
        let mh = SamplerConfig {
            step_sampler: StepSampler::Metropolis,
            ..SamplerConfig::default()
        };
        let path = sample_path(&spec, &mh, 0).unwrap();
        assert!(path.log_density.is_finite());
    }

    #[test]
    fn path_is_self_consistent_and_deterministic() {
        let model: ModelRef = Arc::new(CenteredExponential);
        for anchor in [MeanAnchor::AnchorMi, MeanAnchor::AnchorA] {
            let spec = RunSpec::new(model.clone(), 60, 40, 0.3)
                .unwrap()
                .with_anchor(anchor)
                .with_seed(11);
            let p = sample_path(&spec, &SamplerConfig::default(), 3).unwrap();
            let q = sample_path(&spec, &SamplerConfig::default(), 3).unwrap();
            assert_eq!(p, q);
            let recomputed = path_log_density(&spec, &p.values).unwrap();
            assert!((recomputed - p.log_density).abs() < 1e-10);
            let mut s = 0.0;
            for (v, ps) in p.values.iter().zip(&p.partial_sums) {
                s += v;
                assert_eq!(s, *ps);
            }
        }
    }

    #[test]
    fn single_step_run_is_initial_law() {
        let model: ModelRef = Arc::new(StandardNormal);
        let spec = RunSpec::new(model, 30, 1, 0.4)
            .unwrap()
            .with_anchor(MeanAnchor::AnchorA);
        let bundle = sample_paths(&spec, &SamplerConfig::default(), 5000).unwrap();
        let xs: Vec<f64> = bundle.paths.iter().map(|p| p.values[0]).collect();
        assert!(ks_statistic(&xs, normal_cdf(0.4, 1.0)) < 0.025);
    }

    #[test]
    fn bundle_is_thread_independent() {
        let model: ModelRef = Arc::new(StandardNormal);
        let spec = RunSpec::new(model, 40, 20, 0.3).unwrap().with_seed(5);
        let par = sample_paths(&spec, &SamplerConfig::default(), 16).unwrap();
        for (j, p) in par.paths.iter().enumerate() {
            assert_eq!(*p, sample_path(&spec, &SamplerConfig::default(), j as u64).unwrap());
        }
    }
}
