//! Named experiment settings.
//!
//! Levels are matched through Gaussian quantiles, `a = z_p/√n` with
//! `P(N(0,1) > z_p) = p`, for every model, so runs at the same tail
//! probability are comparable across models.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::ModelKind;

/// `z` with upper tail `1e-2`.
pub const Z_1E2: f64 = 2.3263;
/// `z` with upper tail `1e-8`.
pub const Z_1E8: f64 = 5.6120;

/// Upper Gaussian quantile `z_p`; the two tabulated tails return the rounded
/// constants above.
pub fn gaussian_upper_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "tail probability must lie in (0, 1), got {p}"
        )));
    }
    if p == 1e-2 {
        return Ok(Z_1E2);
    }
    if p == 1e-8 {
        return Ok(Z_1E8);
    }
    Ok(Normal::standard().inverse_cdf(1.0 - p))
}

/// `a = z_p/√n`.
pub fn level_for_pvalue(p: f64, n: usize) -> Result<f64> {
    Ok(gaussian_upper_quantile(p)? / (n as f64).sqrt())
}

/// Tail probability of the exact law of `S_n/n`, for per-model matching.
pub fn exact_level_for_pvalue(model: ModelKind, p: f64, n: usize) -> Result<f64> {
    match model {
        ModelKind::Normal => level_for_pvalue(p, n),
        ModelKind::CenteredExponential => {
            let gamma =
                statrs::distribution::Gamma::new(n as f64, 1.0).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            Ok(gamma.inverse_cdf(1.0 - p) / n as f64 - 1.0)
        }
        ModelKind::NormalSquare => {
            let chi = statrs::distribution::ChiSquared::new(n as f64).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            // level = σa + μ with σ = √2, μ = 1.
            Ok((chi.inverse_cdf(1.0 - p) / n as f64 - 1.0) / 2f64.sqrt())
        }
        ModelKind::Custom => Err(Error::Unsupported("exact quantile matching needs a built-in model")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    NormalModerate,
    NormalLarge,
    ExponentialModerate,
    ExponentialLarge,
    SquareModerate,
}

/// Fully resolved preset parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetValues {
    pub model: ModelKind,
    pub n: usize,
    pub k: usize,
    pub pvalue: f64,
    pub a: f64,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::NormalModerate,
        Preset::NormalLarge,
        Preset::ExponentialModerate,
        Preset::ExponentialLarge,
        Preset::SquareModerate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::NormalModerate => "normal-moderate",
            Preset::NormalLarge => "normal-large",
            Preset::ExponentialModerate => "exponential-moderate",
            Preset::ExponentialLarge => "exponential-large",
            Preset::SquareModerate => "square-moderate",
        }
    }

    pub fn values(self) -> PresetValues {
        let (model, k, pvalue) = match self {
            Preset::NormalModerate => (ModelKind::Normal, 999, 1e-2),
            Preset::NormalLarge => (ModelKind::Normal, 999, 1e-8),
            Preset::ExponentialModerate => (ModelKind::CenteredExponential, 900, 1e-2),
            Preset::ExponentialLarge => (ModelKind::CenteredExponential, 900, 1e-8),
            Preset::SquareModerate => (ModelKind::NormalSquare, 900, 1e-2),
        };
        let n = 1000;
        PresetValues {
            model,
            n,
            k,
            pvalue,
            a: level_for_pvalue(pvalue, n).expect("tabulated tail"),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown preset `{s}`")))
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_quantiles_agree_with_inverse_cdf() {
        let inv = |p: f64| Normal::standard().inverse_cdf(1.0 - p);
        assert!((inv(1e-2) - Z_1E2).abs() < 1e-4);
        assert!((inv(1e-8) - Z_1E8).abs() < 1e-3);
        assert_eq!(level_for_pvalue(1e-2, 100).unwrap(), Z_1E2 / 10.0);
    }

    #[test]
    fn presets_round_trip_names() {
        for p in Preset::ALL {
            assert_eq!(p.as_str().parse::<Preset>().unwrap(), p);
            assert!(p.values().k < p.values().n);
        }
    }

    #[test]
    fn exact_exponential_level_is_above_gaussian_one() {
        let g = level_for_pvalue(1e-2, 100).unwrap();
        let e = exact_level_for_pvalue(ModelKind::CenteredExponential, 1e-2, 100).unwrap();
        assert!(e > g && e < 1.5 * g);
    }
}
