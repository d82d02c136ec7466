//! Source laws of the summands.
//!
//! A [`SourceModel`] bundles the density `p` of `X`, the conditioning
//! function `f`, the log moment generating function `ψ(t) = log E exp(t f(X))`
//! and whatever exact samplers the law admits. Three analytic models are
//! built in; anything else goes through [`CustomModel`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// The law of `X` together with the conditioning function `f`.
///
/// Implementations must keep `ψ(0) = 0` and `ψ'' > 0` on the open tilt
/// domain. Only `log_density`, `f`, `log_mgf` and `t_domain` are required;
/// the optional hooks unlock faster or exact code paths.
pub trait SourceModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// `log p(x)`, `-inf` outside the support.
    fn log_density(&self, x: f64) -> f64;

    /// Conditioning function.
    fn f(&self, x: f64) -> f64;

    fn f_is_identity(&self) -> bool {
        false
    }

    /// `ψ(t) = log E exp(t f(X))`.
    fn log_mgf(&self, t: f64) -> f64;

    /// Open interval on which `ψ` is finite.
    fn t_domain(&self) -> (f64, f64);

    /// Closed hull of the support of `p`.
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Analytic `(ψ', ψ'', ψ''', ψ'''')` at `t`; `None` selects finite differences.
    fn log_mgf_derivatives(&self, _t: f64) -> Option<[f64; 4]> {
        None
    }

    /// Finite supremum of `p`, when known.
    fn density_bound(&self) -> Option<f64> {
        None
    }

    /// Exact draw from `p`.
    fn sample(&self, _rng: &mut dyn RngCore) -> Option<f64> {
        None
    }

    /// Exact draw from the tilted law `exp(t f(x) - ψ(t)) p(x)`.
    fn sample_tilted(&self, _t: f64, _rng: &mut dyn RngCore) -> Option<f64> {
        None
    }

    /// Rough `(center, scale)` of the tilted law in `x`-space, used to place
    /// quadrature windows and MH proposals.
    fn tilted_location(&self, _t: f64) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    fn contains_tilt(&self, t: f64) -> bool {
        let (lo, hi) = self.t_domain();
        t > lo && t < hi
    }
}

pub type ModelRef = Arc<dyn SourceModel>;

/// Standard normal `X` with `f(x) = x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormal;

impl SourceModel for StandardNormal {
    fn name(&self) -> &str {
        "normal"
    }

    fn log_density(&self, x: f64) -> f64 {
        -0.5 * x * x - LN_SQRT_2PI
    }

    fn f(&self, x: f64) -> f64 {
        x
    }

    fn f_is_identity(&self) -> bool {
        true
    }

    fn log_mgf(&self, t: f64) -> f64 {
        0.5 * t * t
    }

    fn t_domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn log_mgf_derivatives(&self, t: f64) -> Option<[f64; 4]> {
        Some([t, 1.0, 0.0, 0.0])
    }

    fn density_bound(&self) -> Option<f64> {
        Some(1.0 / (2.0 * PI).sqrt())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<f64> {
        Some(Normal::new(0.0, 1.0).ok()?.sample(rng))
    }

    fn sample_tilted(&self, t: f64, rng: &mut dyn RngCore) -> Option<f64> {
        Some(Normal::new(t, 1.0).ok()?.sample(rng))
    }

    fn tilted_location(&self, t: f64) -> (f64, f64) {
        (t, 1.0)
    }
}

/// `X = E - 1` with `E` a unit exponential, `f(x) = x`.
///
/// Mean 0, variance 1, support `(-1, ∞)`, `ψ(t) = -t - log(1 - t)` for `t < 1`.
/// The tilted law at `t` is `-1 + Exp(1 - t)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CenteredExponential;

impl SourceModel for CenteredExponential {
    fn name(&self) -> &str {
        "centered_exponential"
    }

    fn log_density(&self, x: f64) -> f64 {
        if x >= -1.0 {
            -(x + 1.0)
        } else {
            f64::NEG_INFINITY
        }
    }

    fn f(&self, x: f64) -> f64 {
        x
    }

    fn f_is_identity(&self) -> bool {
        true
    }

    fn log_mgf(&self, t: f64) -> f64 {
        if t < 1.0 {
            -t - (-t).ln_1p()
        } else {
            f64::INFINITY
        }
    }

    fn t_domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, 1.0)
    }

    fn support(&self) -> (f64, f64) {
        (-1.0, f64::INFINITY)
    }

    fn log_mgf_derivatives(&self, t: f64) -> Option<[f64; 4]> {
        let r = 1.0 / (1.0 - t);
        Some([r - 1.0, r * r, 2.0 * r.powi(3), 6.0 * r.powi(4)])
    }

    fn density_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<f64> {
        Some(Exp::new(1.0).ok()?.sample(rng) - 1.0)
    }

    fn sample_tilted(&self, t: f64, rng: &mut dyn RngCore) -> Option<f64> {
        if t >= 1.0 {
            return None;
        }
        Some(Exp::new(1.0 - t).ok()?.sample(rng) - 1.0)
    }

    fn tilted_location(&self, t: f64) -> (f64, f64) {
        let scale = 1.0 / (1.0 - t.min(1.0 - 1e-12));
        (scale - 1.0, scale)
    }
}

/// Standard normal `X` conditioned through `f(x) = x²`.
///
/// `f(X)` is chi-square with one degree of freedom: `μ = 1`, `σ² = 2`,
/// `ψ(t) = -log(1 - 2t)/2` for `t < 1/2`, and the tilted law is `N(0, 1/(1 - 2t))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalSquare;

impl SourceModel for NormalSquare {
    fn name(&self) -> &str {
        "normal_square"
    }

    fn log_density(&self, x: f64) -> f64 {
        -0.5 * x * x - LN_SQRT_2PI
    }

    fn f(&self, x: f64) -> f64 {
        x * x
    }

    fn log_mgf(&self, t: f64) -> f64 {
        if t < 0.5 {
            -0.5 * (-2.0 * t).ln_1p()
        } else {
            f64::INFINITY
        }
    }

    fn t_domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, 0.5)
    }

    fn log_mgf_derivatives(&self, t: f64) -> Option<[f64; 4]> {
        let r = 1.0 / (1.0 - 2.0 * t);
        Some([r, 2.0 * r * r, 8.0 * r.powi(3), 48.0 * r.powi(4)])
    }

    fn density_bound(&self) -> Option<f64> {
        Some(1.0 / (2.0 * PI).sqrt())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<f64> {
        Some(Normal::new(0.0, 1.0).ok()?.sample(rng))
    }

    fn sample_tilted(&self, t: f64, rng: &mut dyn RngCore) -> Option<f64> {
        if t >= 0.5 {
            return None;
        }
        let sd = (1.0 / (1.0 - 2.0 * t)).sqrt();
        Some(Normal::new(0.0, sd).ok()?.sample(rng))
    }

    fn tilted_location(&self, t: f64) -> (f64, f64) {
        (0.0, (1.0 / (1.0 - 2.0 * t.min(0.5 - 1e-12))).sqrt())
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// User-supplied model.
///
/// This is the plugin interface for laws without a built-in implementation:
/// supply `log p`, `ψ` and its domain, and optionally `f`, the support, a
/// density bound and an exact sampler for `p`. Cumulants are obtained by
/// finite differences of `ψ`.
///
/// ```
/// use condwalk::model::{CustomModel, SourceModel};
/// // Laplace(0, 1/√2): unit variance, ψ(t) = -log(1 - t²/2) on |t| < √2.
/// let b = 1.0 / 2f64.sqrt();
/// let laplace = CustomModel::new(
///     "laplace",
///     move |x: f64| -x.abs() / b - (2.0 * b).ln(),
///     move |t: f64| -(1.0 - t * t * b * b).ln(),
///     (-2f64.sqrt(), 2f64.sqrt()),
/// )
/// .with_density_bound(1.0 / (2.0 * b));
/// assert!((laplace.log_mgf(0.0)).abs() < 1e-15);
/// ```
#[derive(Clone)]
pub struct CustomModel {
    name: String,
    log_density: ScalarFn,
    f: Option<ScalarFn>,
    log_mgf: ScalarFn,
    t_domain: (f64, f64),
    support: (f64, f64),
    density_bound: Option<f64>,
    sampler: Option<SamplerFn>,
    location: Option<Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>>,
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("CustomModel")
            .field("name", &self.name)
            .field("t_domain", &self.t_domain)
            .field("support", &self.support)
            .field("density_bound", &self.density_bound)
            .field("has_sampler", &self.sampler.is_some())
            .finish()
    }
}

impl CustomModel {
    pub fn new(
        name: impl Into<String>,
        log_density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        log_mgf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        t_domain: (f64, f64),
    ) -> Self {
        Self {
            name: name.into(),
            log_density: Arc::new(log_density),
            f: None,
            log_mgf: Arc::new(log_mgf),
            t_domain,
            support: (f64::NEG_INFINITY, f64::INFINITY),
            density_bound: None,
            sampler: None,
            location: None,
        }
    }

    /// Replace the identity conditioning function. `ψ` must then be the
    /// log-MGF of `f(X)`.
    pub fn with_f(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.support = (lo, hi);
        self
    }

    pub fn with_density_bound(mut self, bound: f64) -> Self {
        self.density_bound = Some(bound);
        self
    }

    pub fn with_sampler(mut self, sampler: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static) -> Self {
        self.sampler = Some(Arc::new(sampler));
        self
    }

    pub fn with_tilted_location(mut self, location: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        self.location = Some(Arc::new(location));
        self
    }
}

impl SourceModel for CustomModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn log_density(&self, x: f64) -> f64 {
        (self.log_density)(x)
    }

    fn f(&self, x: f64) -> f64 {
        match &self.f {
            Some(f) => f(x),
            None => x,
        }
    }

    fn f_is_identity(&self) -> bool {
        self.f.is_none()
    }

    fn log_mgf(&self, t: f64) -> f64 {
        (self.log_mgf)(t)
    }

    fn t_domain(&self) -> (f64, f64) {
        self.t_domain
    }

    fn support(&self) -> (f64, f64) {
        self.support
    }

    fn density_bound(&self) -> Option<f64> {
        self.density_bound
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<f64> {
        self.sampler.as_ref().map(|s| s(rng))
    }

    fn tilted_location(&self, t: f64) -> (f64, f64) {
        match &self.location {
            Some(loc) => loc(t),
            None => (0.0, 1.0),
        }
    }
}

/// Model identifiers accepted by configuration files and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Normal,
    CenteredExponential,
    NormalSquare,
    Custom,
}

impl ModelKind {
    pub fn build(self) -> Result<ModelRef> {
        match self {
            ModelKind::Normal => Ok(Arc::new(StandardNormal)),
            ModelKind::CenteredExponential => Ok(Arc::new(CenteredExponential)),
            ModelKind::NormalSquare => Ok(Arc::new(NormalSquare)),
            ModelKind::Custom => Err(Error::Unsupported(
                "custom models are supplied through the library CustomModel interface",
            )),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Normal => "normal",
            ModelKind::CenteredExponential => "centered_exponential",
            ModelKind::NormalSquare => "normal_square",
            ModelKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(ModelKind::Normal),
            "centered_exponential" | "exponential" => Ok(ModelKind::CenteredExponential),
            "normal_square" => Ok(ModelKind::NormalSquare),
            "custom" => Ok(ModelKind::Custom),
            other => Err(Error::InvalidSpec(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Normal density with mean `mean` and variance `var`, in log scale.
pub fn log_normal_pdf(mean: f64, var: f64, x: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    fn builtins() -> Vec<ModelRef> {
        vec![
            Arc::new(StandardNormal),
            Arc::new(CenteredExponential),
            Arc::new(NormalSquare),
        ]
    }

    #[test]
    fn log_mgf_vanishes_at_zero() {
        for m in builtins() {
            assert_eq!(m.log_mgf(0.0), 0.0, "{}", m.name());
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for m in builtins() {
            let (lo, hi) = m.support();
            let lo = lo.max(-40.0);
            let hi = hi.min(60.0);
            let total = quad::integrate(|x| m.density(x), lo, hi, 1e-12).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "{}: {total}", m.name());
        }
    }

    #[test]
    fn exponential_support_is_preserved() {
        assert_eq!(CenteredExponential.log_density(-1.000_001), f64::NEG_INFINITY);
        assert_eq!(CenteredExponential.log_mgf(1.0), f64::INFINITY);
    }

    #[test]
    fn derivatives_at_zero_give_moments_of_f() {
        let d = NormalSquare.log_mgf_derivatives(0.0).unwrap();
        assert_eq!(d[0], 1.0);
        assert_eq!(d[1], 2.0);
        let d = CenteredExponential.log_mgf_derivatives(0.0).unwrap();
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 1.0);
    }

    #[test]
    fn model_kind_parses_and_builds() {
        for s in ["normal", "centered_exponential", "normal_square"] {
            let kind: ModelKind = s.parse().unwrap();
            assert_eq!(kind.build().unwrap().name(), s);
        }
        assert!(ModelKind::Custom.build().is_err());
        assert!("weibull".parse::<ModelKind>().is_err());
    }

    #[test]
    fn custom_model_defaults_to_identity_f() {
        let m = CustomModel::new(
            "gauss",
            |x| -0.5 * x * x - LN_SQRT_2PI,
            |t| 0.5 * t * t,
            (f64::NEG_INFINITY, f64::INFINITY),
        );
        assert!(m.f_is_identity());
        assert_eq!(m.f(2.5), 2.5);
        let sq = m.clone().with_f(|x| x * x);
        assert!(!sq.f_is_identity());
        assert_eq!(sq.f(3.0), 9.0);
    }
}
