//! The adaptive product density of a run `y_1, …, y_k`.
//!
//! Each factor is the source density `p` times a normal kernel in `f(y)`
//! whose mean and variance track the running sum of the path:
//!
//! ```text
//! h_i(y | y_1..y_i) = C_i p(y) n(anchor + αβ, α, f(y))
//! m_i = (n (σa + μ) - u_i) / (n - i)         u_i = f(y_1) + … + f(y_i)
//! m(t_i) = m_i
//! α = s²(t_i) (n - i - 1)
//! β = t_i + μ3(t_i) / (2 s⁴(t_i) (n - i - 1))
//! ```
//!
//! `C_i` is computed by quadrature (default) or estimated by Monte Carlo.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_normal_pdf, ModelRef, SourceModel};
use crate::quad;
use crate::rng::{self, Purpose};
use crate::tilted::{self, check_regime, CumulantPoint, RegimeDiagnostics};

/// Where the Gaussian kernel of a step is centered before the `αβ` shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeanAnchor {
    /// Kernel mean `σa + μ + αβ`; the first factor is the plain tilted law.
    #[serde(rename = "a")]
    AnchorA,
    /// Kernel mean `m_i + αβ` at every step, including the first. Exact for
    /// the Gaussian model.
    #[serde(rename = "mi")]
    AnchorMi,
}

/// How the tilt `t_i` is obtained at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inversion {
    /// Solve `m(t_i) = m_i` by safeguarded Newton.
    ExactNewton,
    /// One-step linearized update from `t_{i-1}`.
    Incremental,
}

/// How the per-step normalizing constants are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    Quadrature,
    MonteCarlo,
}

/// Power of `s` in the denominator of the `β` correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaForm {
    /// `μ3 / (2 s⁴ (n - i - 1))`.
    S4,
    /// `μ3 / (2 s² (n - i - 1))`, kept for comparison only.
    S2,
}

pub const DEFAULT_MC_BUDGET: usize = 100_000;
const QUAD_TOL: f64 = 1e-13;
const QUAD_HALF_WIDTH: f64 = 50.0;
const QUAD_PANELS: usize = 20;

/// A fully reproducible description of one conditioned-run experiment.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub model: ModelRef,
    pub n: usize,
    pub k: usize,
    pub a: f64,
    pub mean_anchor: MeanAnchor,
    pub inversion: Inversion,
    pub normalizer: Normalizer,
    pub mc_budget_c: usize,
    pub beta_form: BetaForm,
    pub seed: u64,
    mu: f64,
    sigma: f64,
}

impl RunSpec {
    /// Validated spec with default options (`AnchorMi`, exact inversion,
    /// quadrature normalizers, `s⁴` form, seed 0).
    pub fn new(model: ModelRef, n: usize, k: usize, a: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSpec(format!("n = {n} must be at least 2")));
        }
        if k < 1 || k >= n {
            return Err(Error::InvalidSpec(format!(
                "run length k = {k} must satisfy 1 <= k <= n - 1 = {}; n - k must stay positive",
                n - 1
            )));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidSpec(format!("level a = {a} must be positive")));
        }
        let at_zero = tilted::cumulants_at(model.as_ref(), 0.0)?;
        Ok(Self {
            model,
            n,
            k,
            a,
            mean_anchor: MeanAnchor::AnchorMi,
            inversion: Inversion::ExactNewton,
            normalizer: Normalizer::Quadrature,
            mc_budget_c: DEFAULT_MC_BUDGET,
            beta_form: BetaForm::S4,
            seed: 0,
            mu: at_zero.m,
            sigma: at_zero.s2.sqrt(),
        })
    }

    pub fn with_anchor(mut self, anchor: MeanAnchor) -> Self {
        self.mean_anchor = anchor;
        self
    }

    pub fn with_inversion(mut self, inversion: Inversion) -> Self {
        self.inversion = inversion;
        self
    }

    pub fn with_normalizer(mut self, normalizer: Normalizer, budget: usize) -> Self {
        self.normalizer = normalizer;
        self.mc_budget_c = budget;
        self
    }

    pub fn with_beta_form(mut self, form: BetaForm) -> Self {
        self.beta_form = form;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Same spec with another run length.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        if k < 1 || k >= self.n {
            return Err(Error::InvalidSpec(format!(
                "run length k = {k} out of range for n = {}",
                self.n
            )));
        }
        let mut s = self.clone();
        s.k = k;
        Ok(s)
    }

    /// `E f(X)`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `√Var f(X)`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Conditioning level `σa + μ` of the empirical mean of `f`.
    pub fn level(&self) -> f64 {
        self.sigma * self.a + self.mu
    }

    pub fn regime(&self) -> RegimeDiagnostics {
        check_regime(self.n, self.k, self.a)
    }

    /// Adaptive mean target `m_i = (n·level - u_i) / (n - i)`.
    pub fn mean_target(&self, i: usize, partial_sum: f64) -> f64 {
        (self.n as f64 * self.level() - partial_sum) / (self.n - i) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepKind {
    /// Plain tilted law `π_f^{t_0}` (first factor under `AnchorA`).
    Tilted,
    /// `C_i p(y) n(anchor + αβ, α, f(y))`.
    Kernel,
}

/// Parameters of one factor `h_i(· | y_1..y_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDensity {
    pub i: usize,
    pub kind: StepKind,
    pub m_i: f64,
    pub t_i: f64,
    pub cumulants: CumulantPoint,
    pub alpha: f64,
    pub beta: f64,
    pub anchor: f64,
    /// `log C_i`; NaN until normalized.
    pub log_c: f64,
    pub log_c_stderr: f64,
}

impl StepDensity {
    /// Mean of the normal kernel in `f(y)`.
    pub fn kernel_mean(&self) -> f64 {
        self.anchor + self.alpha * self.beta
    }

    /// Unnormalized log factor `log p(y) + log n(kernel_mean, α, f(y))`.
    pub fn log_kernel(&self, model: &dyn SourceModel, y: f64) -> f64 {
        let lp = model.log_density(y);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + log_normal_pdf(self.kernel_mean(), self.alpha, model.f(y))
    }

    pub fn is_normalized(&self) -> bool {
        self.kind == StepKind::Tilted || !self.log_c.is_nan()
    }
}

/// Step parameters from the realized state `(i, u_i)` and a known tilt.
fn step_from_tilt(spec: &RunSpec, i: usize, partial_sum: f64, t_i: f64) -> Result<StepDensity> {
    let m_i = spec.mean_target(i, partial_sum);
    let cumulants = tilted::cumulants_at(spec.model.as_ref(), t_i).map_err(|e| e.at_step(i))?;
    let rest = (spec.n - i - 1) as f64;
    let alpha = cumulants.s2 * rest;
    let denom = match spec.beta_form {
        BetaForm::S4 => cumulants.s2 * cumulants.s2,
        BetaForm::S2 => cumulants.s2,
    };
    let beta = t_i + cumulants.mu3 / (2.0 * denom * rest);
    let (kind, anchor) = match (spec.mean_anchor, i) {
        (MeanAnchor::AnchorA, 0) => (StepKind::Tilted, spec.level()),
        (MeanAnchor::AnchorA, _) => (StepKind::Kernel, spec.level()),
        (MeanAnchor::AnchorMi, _) => (StepKind::Kernel, m_i),
    };
    Ok(StepDensity {
        i,
        kind,
        m_i,
        t_i,
        cumulants,
        alpha,
        beta,
        anchor,
        log_c: f64::NAN,
        log_c_stderr: 0.0,
    })
}

/// Step parameters with `t_i` from the exact inversion of `m`.
/// The normalizing constant is left unset.
pub fn step_params(spec: &RunSpec, i: usize, partial_sum: f64) -> Result<StepDensity> {
    let m_i = spec.mean_target(i, partial_sum);
    let t_i = tilted::invert_m(spec.model.as_ref(), m_i).map_err(|e| e.at_step(i))?;
    step_from_tilt(spec, i, partial_sum, t_i)
}

/// Monte-Carlo estimate of `log C` where
/// `1/C = ∫ p(y) n(mean, alpha, f(y)) dy`, sampling `y` from `p`.
/// Returns `(log C, standard error of log C)`.
pub fn normalizing_constant(
    model: &dyn SourceModel,
    mean: f64,
    alpha: f64,
    budget: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, f64)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidSpec(format!("kernel variance {alpha} must be positive")));
    }
    if budget < 1000 {
        return Err(Error::InvalidSpec(format!("Monte-Carlo budget {budget} below 1000")));
    }
    let mut logs = Vec::with_capacity(budget);
    for _ in 0..budget {
        let y = model.sample(rng).ok_or(Error::Unsupported(
            "Monte-Carlo normalizer needs an exact sampler for p",
        ))?;
        logs.push(log_normal_pdf(mean, alpha, model.f(y)));
    }
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::DegenerateEstimate);
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let b = budget as f64;
    let mean_w = w.iter().sum::<f64>() / b;
    let var_w = w.iter().map(|x| (x - mean_w).powi(2)).sum::<f64>() / (b - 1.0);
    let log_inv_c = mean_w.ln() + shift;
    let stderr = var_w.sqrt() / (mean_w * b.sqrt());
    Ok((-log_inv_c, stderr))
}

/// Deterministic `log C` by adaptive quadrature over a window around the
/// tilted law at `t`.
pub fn normalizing_constant_quad(model: &dyn SourceModel, step: &StepDensity) -> Result<f64> {
    let (center, scale) = model.tilted_location(step.t_i);
    let (slo, shi) = model.support();
    let lo = (center - QUAD_HALF_WIDTH * scale).max(slo);
    let hi = (center + QUAD_HALF_WIDTH * scale).min(shi);
    let log_f = |y: f64| step.log_kernel(model, y);
    // Shift by the largest value on a coarse grid.
    let grid = 256;
    let shift = (0..=grid)
        .map(|j| log_f(lo + (hi - lo) * j as f64 / grid as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::DegenerateEstimate);
    }
    let log_inv_c = quad::log_integrate(log_f, lo, hi, shift, QUAD_TOL, QUAD_PANELS)?;
    Ok(-log_inv_c)
}

/// Fill in `log C_i` according to `spec.normalizer`.
pub fn normalize(spec: &RunSpec, step: &mut StepDensity) -> Result<()> {
    if step.kind == StepKind::Tilted {
        step.log_c = 0.0;
        return Ok(());
    }
    match spec.normalizer {
        Normalizer::Quadrature => {
            step.log_c = normalizing_constant_quad(spec.model.as_ref(), step)?;
            step.log_c_stderr = 0.0;
        }
        Normalizer::MonteCarlo => {
            let mut rng = rng::substream(spec.seed, Purpose::Normalizer, step.i as u64);
            let (log_c, se) = normalizing_constant(
                spec.model.as_ref(),
                step.kernel_mean(),
                step.alpha,
                spec.mc_budget_c,
                &mut rng,
            )?;
            step.log_c = log_c;
            step.log_c_stderr = se;
        }
    }
    Ok(())
}

/// `log h_i(y | y_1..y_i)` for a normalized step.
pub fn step_log_density(step: &StepDensity, model: &dyn SourceModel, y: f64) -> f64 {
    match step.kind {
        StepKind::Tilted => {
            let lp = model.log_density(y);
            if lp == f64::NEG_INFINITY {
                lp
            } else {
                step.t_i * model.f(y) - model.log_mgf(step.t_i) + lp
            }
        }
        StepKind::Kernel => step.log_c + step.log_kernel(model, y),
    }
}

/// Sequential state of the tilt chain along a path.
#[derive(Debug, Clone)]
pub struct TiltChain<'a> {
    spec: &'a RunSpec,
    i: usize,
    partial_sum: f64,
    prev: Option<CumulantPoint>,
    last_f: f64,
}

impl<'a> TiltChain<'a> {
    pub fn new(spec: &'a RunSpec) -> Self {
        Self {
            spec,
            i: 0,
            partial_sum: 0.0,
            prev: None,
            last_f: 0.0,
        }
    }

    pub fn index(&self) -> usize {
        self.i
    }

    pub fn partial_sum(&self) -> f64 {
        self.partial_sum
    }

    /// Normalized factor for the current index.
    pub fn current_step(&self) -> Result<StepDensity> {
        let spec = self.spec;
        let mut step = match (spec.inversion, self.prev) {
            (Inversion::Incremental, Some(prev)) => {
                let t = tilted::incremental_t_update(&prev, self.last_f, spec.n, self.i);
                step_from_tilt(spec, self.i, self.partial_sum, t)?
            }
            _ => step_params(spec, self.i, self.partial_sum)?,
        };
        normalize(spec, &mut step).map_err(|e| e.at_step(self.i))?;
        Ok(step)
    }

    /// Record the realized value for the current step and advance.
    pub fn advance(&mut self, step: &StepDensity, y: f64) {
        let fy = self.spec.model.f(y);
        self.partial_sum += fy;
        self.last_f = fy;
        self.prev = Some(step.cumulants);
        self.i += 1;
    }
}

/// Per-step evaluation of a path: the factors and their log values.
#[derive(Debug, Clone)]
pub struct PathEvaluation {
    pub steps: Vec<StepDensity>,
    pub step_log_densities: Vec<f64>,
    /// `u_i` after each step (length `k`).
    pub partial_sums: Vec<f64>,
}

impl PathEvaluation {
    pub fn log_density(&self) -> f64 {
        self.step_log_densities.iter().sum()
    }
}

pub fn evaluate_path(spec: &RunSpec, y: &[f64]) -> Result<PathEvaluation> {
    let mut chain = TiltChain::new(spec);
    let mut steps = Vec::with_capacity(y.len());
    let mut logs = Vec::with_capacity(y.len());
    let mut sums = Vec::with_capacity(y.len());
    for &yi in y {
        let step = chain.current_step()?;
        logs.push(step_log_density(&step, spec.model.as_ref(), yi));
        chain.advance(&step, yi);
        sums.push(chain.partial_sum());
        steps.push(step);
    }
    Ok(PathEvaluation {
        steps,
        step_log_densities: logs,
        partial_sums: sums,
    })
}

/// `log h(y_1..y_k)` with `k = y.len()`, which must equal `spec.k`.
pub fn path_log_density(spec: &RunSpec, y: &[f64]) -> Result<f64> {
    if y.len() != spec.k {
        return Err(Error::InvalidSpec(format!(
            "path length {} differs from run length k = {}",
            y.len(),
            spec.k
        )));
    }
    Ok(evaluate_path(spec, y)?.log_density())
}
