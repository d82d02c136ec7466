//! Resolved experiment configuration and its manifest file.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use condwalk::accuracy::Weighting;
use condwalk::density::{MeanAnchor, RunSpec};
use condwalk::model::ModelKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Sample,
    Hist,
    Accuracy,
    SelectK,
    Validate,
}

/// Invalid user input; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Every parameter a command depends on. Written next to the outputs as
/// `manifest.toml`; rerunning from it reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub model: ModelKind,
    pub n: usize,
    pub k: usize,
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pvalue: Option<f64>,
    pub anchor: MeanAnchor,
    pub seed: u64,
    pub paths: usize,
    pub bins: usize,
    #[serde(rename = "L")]
    pub blocks: usize,
    pub delta: f64,
    pub stride: usize,
    #[serde(default)]
    pub weighting: Weighting,
    pub plot: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError(m));
        if self.model == ModelKind::Custom {
            return fail("custom models are available through the library only".into());
        }
        if self.n < 3 {
            return fail(format!("n must be at least 3, got {}", self.n));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return fail(format!("the level a must be positive, got {}", self.a));
        }
        let k_max = if self.model == ModelKind::Normal {
            self.n - 1
        } else {
            self.n - 2
        };
        if self.k == 0 || self.k > k_max {
            return fail(format!(
                "k = {} is outside 1..={k_max}: runs must stay short against n (k ≤ n − 2; \
                 k = n − 1 only for the normal model, where the approximation is exact)",
                self.k
            ));
        }
        match self.command {
            CommandKind::Sample | CommandKind::Hist if self.paths == 0 => fail("at least one path is required".into()),
            CommandKind::Hist if self.bins == 0 => fail("at least one bin is required".into()),
            CommandKind::Accuracy | CommandKind::SelectK if self.blocks < 100 => {
                fail(format!("L must be at least 100, got {}", self.blocks))
            }
            CommandKind::SelectK if !(self.delta > 0.0 && self.delta < 1.0) => {
                fail(format!("delta must lie in (0, 1), got {}", self.delta))
            }
            _ => Ok(()),
        }
    }

    pub fn run_spec(&self) -> anyhow::Result<RunSpec> {
        let spec = RunSpec::new(self.model.build()?, self.n, self.k, self.a)?;
        Ok(spec.with_anchor(self.anchor).with_seed(self.seed))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("invalid manifest: {e}")))
    }

    pub fn write_manifest(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.toml");
        std::fs::write(&path, self.to_toml()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read_manifest(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self::from_toml(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> ExperimentConfig {
        ExperimentConfig {
            command: CommandKind::Sample,
            model: ModelKind::CenteredExponential,
            n: 1000,
            k: 900,
            a: 2.3263 / 1000f64.sqrt(),
            pvalue: Some(1e-2),
            anchor: MeanAnchor::AnchorMi,
            seed: 42,
            paths: 5,
            bins: 60,
            blocks: 1000,
            delta: 0.05,
            stride: 10,
            weighting: Weighting::Plain,
            plot: true,
        }
    }

    #[test]
    fn manifest_round_trips() {
        let c = sample_config();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        let mut d = c.clone();
        d.pvalue = None;
        d.a = 0.1 + 0.2;
        assert_eq!(ExperimentConfig::from_toml(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn long_runs_are_rejected() {
        let mut c = sample_config();
        c.k = 999;
        let err = c.validate().unwrap_err();
        assert!(err.0.contains("n − 2"), "{err}");
        c.model = ModelKind::Normal;
        assert!(c.validate().is_ok());
        c.k = 1000;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_path_sets_are_rejected() {
        let mut c = sample_config();
        c.command = CommandKind::Hist;
        c.paths = 0;
        assert!(c.validate().is_err());
    }
}
