use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use iragent::iqa::QualityMode;
use iragent::restore::{TaskLabel, ToolSpec};
use serde::{Deserialize, Serialize};

pub const DEFAULT_RESOLUTION: (usize, usize) = (256, 256);

/// Settings read from the TOML file given with `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Working resolution `[width, height]` for generated datasets.
    pub resolution: (usize, usize),
    /// Root seed; every random choice derives from it.
    pub seed: u64,
    pub calibration: Option<PathBuf>,
    pub quality_mode: QualityMode,
    pub epsilon: f64,
    /// Strategy used by `restore` when `--strategy` is absent. `None` means
    /// perception followed by greedy.
    pub strategy: Option<String>,
    /// Strategy list used by `compare` when `--strategies` is absent.
    pub compare_strategies: Vec<String>,
    /// Rollback budget in `bench-complexity`; defaults to the task count.
    pub bench_max_rollbacks: Option<usize>,
    pub bench_trials: usize,
    pub variants_per_source: usize,
    pub jobs: Option<usize>,
    pub perceiver: PerceiverConfig,
    /// Replacement tool lists, keyed by task (`DN_M`, `DH`, ...).
    pub registry: BTreeMap<TaskLabel, Vec<ToolSpec>>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            seed: 0,
            calibration: None,
            quality_mode: QualityMode::Normalized,
            epsilon: iragent::agent::DEFAULT_EPSILON,
            strategy: None,
            compare_strategies: vec!["greedy".into(), "random".into(), "reverse".into()],
            bench_max_rollbacks: None,
            bench_trials: 20,
            variants_per_source: 10,
            jobs: None,
            perceiver: PerceiverConfig::default(),
            registry: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceiverConfig {
    /// `tcp://host:port` or a command line; internal detectors when absent.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for PerceiverConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_ms: 30_000,
        }
    }
}

impl Config {
    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(cal) = cfg.calibration.take() {
            let cal = if cal.is_relative() {
                base.join(cal)
            } else {
                cal
            };
            if !cal.is_file() {
                bail!(
                    "calibration file {} named in config does not exist",
                    cal.display()
                );
            }
            cfg.calibration = Some(cal);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            bail!("resolution must be positive, got {:?}", self.resolution);
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be a finite non-negative number");
        }
        if self.variants_per_source == 0 || self.bench_trials == 0 {
            bail!("variants_per_source and bench_trials must be at least 1");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: Config = toml::from_str("").unwrap();
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("sede = 3").is_err());
        assert!(toml::from_str::<Config>("[perceiver]\nport = 3").is_err());
    }

    #[test]
    fn registry_overrides_parse() {
        let text = r#"
            resolution = [128, 96]
            quality_mode = "RawEq1"
            [[registry.DN_M]]
            task = "DN_M"
            tool_id = "bilateral"
            params = { op = "bilateral", sigma_s = 2.0, sigma_r = 0.1 }
        "#;
        let cfg: Config = toml::from_str(text).unwrap();
        assert_eq!(cfg.resolution, (128, 96));
        assert_eq!(cfg.quality_mode, QualityMode::RawEq1);
        assert_eq!(cfg.registry[&TaskLabel::DnM][0].tool_id, "bilateral");
    }
}
