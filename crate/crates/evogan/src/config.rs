//! Experiment configuration: a TOML file mirroring [`TrainingConfig`],
//! plus dotted-path `--set key=value` overrides. Every run writes its
//! fully resolved configuration next to its outputs so any artifact can be
//! reproduced from that snapshot and the seed alone.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::latent::LatentSpec;
use crate::nn::NetworkConfig;

/// Which model the run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain InfoGAN, no GA stage at all.
    BaselineInfogan,
    /// GA stage without crossover: selection and mutation only.
    InfoganGaWoc,
    /// GA stage with the full operator set including arithmetic crossover.
    InfoganGaWc,
}

impl Variant {
    pub fn uses_ga(&self) -> bool {
        !matches!(self, Variant::BaselineInfogan)
    }

    pub fn crossover_enabled(&self) -> bool {
        matches!(self, Variant::InfoganGaWc)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::BaselineInfogan => "baseline_infogan",
            Variant::InfoganGaWoc => "infogan_ga_woc",
            Variant::InfoganGaWc => "infogan_ga_wc",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub g_learning_rate: f64,
    pub d_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            g_learning_rate: 2e-4,
            d_learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

/// Weights of the mutual-information term in both losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaConfig {
    pub categorical: f64,
    pub continuous: f64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig {
            categorical: 1.0,
            continuous: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// `toy_conv` or `inception_v3`.
    pub embedder: String,
    /// Moving-average window (in evaluated points) for the convergence
    /// epoch.
    pub ce_window: usize,
    /// Relative tolerance around the final moving average.
    pub ce_tolerance: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            embedder: "toy_conv".into(),
            ce_window: 50,
            ce_tolerance: 0.05,
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub variant: Variant,
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Root of the two-level image dataset.
    pub dataset: PathBuf,
    pub device: String,
    /// Epochs between checkpoints.
    pub checkpoint_interval: u64,
    /// Epochs between FID evaluations; epoch 1 is always evaluated so the
    /// starting score is recorded.
    pub fid_interval: u64,
    /// Generated samples per FID evaluation.
    pub fid_samples: usize,
    /// For GA variants, refine evaluation samples with the GA stage — the
    /// model output is the genetic algorithm's output, not the raw
    /// generator batch.
    pub eval_with_ga: bool,
    pub optimizer: OptimizerConfig,
    pub lambda: LambdaConfig,
    pub latent: LatentSpec,
    pub network: NetworkConfig,
    pub ga: GaConfig,
    pub metrics: MetricsConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            variant: Variant::BaselineInfogan,
            epochs: 3000,
            batch_size: 64,
            seed: 0,
            dataset: PathBuf::from("data"),
            device: "cpu".into(),
            checkpoint_interval: 500,
            fid_interval: 100,
            fid_samples: 1024,
            eval_with_ga: true,
            optimizer: OptimizerConfig::default(),
            lambda: LambdaConfig::default(),
            latent: LatentSpec::default(),
            network: NetworkConfig::default(),
            ga: GaConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl TrainingConfig {
    /// Reads a TOML file and applies `--set` overrides; with no file, the
    /// defaults are the base. Unknown keys are rejected with the list of
    /// valid ones.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
            }
            None => toml::Value::try_from(TrainingConfig::default())
                .expect("default config serialises"),
        };
        for (key, raw) in overrides {
            set_path(&mut value, key, raw)?;
        }
        let cfg: TrainingConfig = value
            .try_into()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg.resolved())
    }

    /// Normalises derived fields: the GA crossover flag follows the
    /// variant.
    pub fn resolved(mut self) -> Self {
        self.ga.crossover_enabled = self.variant.crossover_enabled();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "batch_size must be >= 2 (batch statistics need it)".into(),
            ));
        }
        if self.device != "cpu" {
            return Err(Error::InvalidConfig(format!(
                "unsupported device `{}`; this build supports: cpu",
                self.device
            )));
        }
        for (name, v) in [
            ("optimizer.g_learning_rate", self.optimizer.g_learning_rate),
            ("optimizer.d_learning_rate", self.optimizer.d_learning_rate),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.lambda.categorical < 0.0 || self.lambda.continuous < 0.0 {
            return Err(Error::InvalidConfig("lambda weights must be >= 0".into()));
        }
        if self.fid_samples < 2 {
            return Err(Error::InvalidConfig("fid_samples must be >= 2".into()));
        }
        if self.fid_interval < 1 || self.checkpoint_interval < 1 {
            return Err(Error::InvalidConfig(
                "fid_interval and checkpoint_interval must be >= 1".into(),
            ));
        }
        self.latent.validate()?;
        self.network.validate()?;
        self.ga.validate()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text =
            toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Writes `raw` into the dotted `key` path of a TOML value, creating
/// intermediate tables. The raw text is parsed as a TOML literal first and
/// falls back to a string.
fn set_path(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cursor = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cursor.as_table_mut().ok_or_else(|| Error::UnknownConfigKey {
            key: key.to_string(),
            valid: "dotted paths into config tables".into(),
        })?;
        if i == parts.len() - 1 {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = TrainingConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: TrainingConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = TrainingConfig::load(
            None,
            &[
                ("variant".into(), "\"infogan_ga_wc\"".into()),
                ("epochs".into(), "5".into()),
                ("ga.mutation_rate".into(), "0.25".into()),
                ("optimizer.g_learning_rate".into(), "1e-3".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.variant, Variant::InfoganGaWc);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.ga.mutation_rate, 0.25);
        assert_eq!(cfg.optimizer.g_learning_rate, 1e-3);
    }

    #[test]
    fn bare_strings_work_without_quotes() {
        let cfg = TrainingConfig::load(
            None,
            &[("variant".into(), "infogan_ga_woc".into())],
        )
        .unwrap();
        assert_eq!(cfg.variant, Variant::InfoganGaWoc);
    }

    #[test]
    fn unknown_key_lists_valid_ones() {
        let err = TrainingConfig::load(None, &[("epochz".into(), "3".into())]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epochz"), "{msg}");
        assert!(msg.contains("epochs"), "{msg}");
    }

    #[test]
    fn unknown_variant_is_rejected_with_alternatives() {
        let err =
            TrainingConfig::load(None, &[("variant".into(), "\"wgan\"".into())]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("wgan"), "{msg}");
        assert!(msg.contains("baseline_infogan"), "{msg}");
    }

    #[test]
    fn crossover_flag_follows_variant() {
        for (v, expect) in [
            ("baseline_infogan", false),
            ("infogan_ga_woc", false),
            ("infogan_ga_wc", true),
        ] {
            let cfg =
                TrainingConfig::load(None, &[("variant".into(), v.into())]).unwrap();
            assert_eq!(cfg.ga.crossover_enabled, expect);
        }
    }

    #[test]
    fn validate_rejects_bad_device_and_rates() {
        let mut cfg = TrainingConfig::default();
        cfg.device = "cuda".into();
        assert!(cfg.validate().is_err());
        let mut cfg = TrainingConfig::default();
        cfg.optimizer.d_learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn file_round_trip_with_save() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        let mut cfg = TrainingConfig::default();
        cfg.epochs = 7;
        cfg.variant = Variant::InfoganGaWoc;
        cfg = cfg.resolved();
        cfg.save(&path).unwrap();
        let loaded = TrainingConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(cfg, loaded);
    }
}
