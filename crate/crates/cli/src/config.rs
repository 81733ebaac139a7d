use std::path::{Path, PathBuf};

use debias_core::data::GenConfig;
use debias_core::train::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a pipeline run depends on. Every field has a default, so `{}`
/// is a complete configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: GenConfig,
    /// The frozen two-headed classifier.
    pub classifier: Hyperparams,
    /// Single-head classifiers used by the spillover report.
    pub attribute_classifier: Hyperparams,
    /// The U-net reconstructor.
    pub debiaser: Hyperparams,
    pub target_attribute: String,
    pub protected_attribute: String,
    pub threshold: f64,
    pub paths: Paths,
    pub sweep: SweepGrid,
}

/// Output locations. Relative paths are taken relative to the directory
/// holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        // At desk scale an epoch is ~60 steps rather than thousands, and the
        // reconstructor and the single-head classifiers barely move in five
        // epochs at 1e-3; both use a tenfold step instead.
        let desk = Hyperparams {
            learning_rate: 1e-2,
            ..Hyperparams::default()
        };
        RunConfig {
            data: GenConfig::default(),
            classifier: Hyperparams::default(),
            attribute_classifier: desk.clone(),
            debiaser: desk,
            target_attribute: "Attractive".into(),
            protected_attribute: "Male".into(),
            threshold: 0.5,
            paths: Paths::default(),
            sweep: SweepGrid::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: "data".into(),
            checkpoint_dir: "checkpoints".into(),
            report_dir: "reports".into(),
        }
    }
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            lambda_min: 0.01,
            lambda_max: 0.15,
            lambda_step: 0.01,
            repeats: 3,
        }
    }
}

impl SweepGrid {
    /// `lambda_min, lambda_min + step, ...` up to `lambda_max` inclusive,
    /// computed by multiplication so the grid does not drift.
    pub fn lambdas(&self) -> Vec<f64> {
        let count = ((self.lambda_max - self.lambda_min) / self.lambda_step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.lambda_min + k as f64 * self.lambda_step).collect()
    }

    fn validate(&self) -> Result<(), String> {
        let finite = [self.lambda_min, self.lambda_max, self.lambda_step].iter().all(|v| v.is_finite());
        if !finite || self.lambda_min < 0.0 || self.lambda_step <= 0.0 || self.lambda_max < self.lambda_min {
            return Err(format!(
                "sweep: need 0 <= lambda_min <= lambda_max and lambda_step > 0, got {} / {} / {}",
                self.lambda_min, self.lambda_max, self.lambda_step
            ));
        }
        if self.repeats == 0 {
            return Err("sweep.repeats must be >= 1".into());
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses `text`, naming the offending key on failure.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Copy with relative paths joined onto `base`, normally the directory
    /// holding the config file.
    pub fn resolved(&self, base: &Path) -> Self {
        let mut cfg = self.clone();
        for p in [&mut cfg.paths.data_dir, &mut cfg.paths.checkpoint_dir, &mut cfg.paths.report_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let config = |e: debias_core::Error| CliError::Config(e.to_string());
        self.data.validate().map_err(config)?;
        self.classifier.validate().map_err(config)?;
        self.attribute_classifier.validate().map_err(config)?;
        self.debiaser.validate().map_err(config)?;
        self.sweep.validate().map_err(CliError::Config)?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if self.target_attribute == self.protected_attribute {
            return Err(CliError::Config("target and protected attributes must differ".into()));
        }
        Ok(())
    }

    /// Reseeds data generation and every training stage from one value.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.classifier.seed = seed;
        self.attribute_classifier.seed = seed;
        self.debiaser.seed = seed;
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn train_dir(&self) -> PathBuf {
        self.paths.data_dir.join("train")
    }

    pub fn test_dir(&self) -> PathBuf {
        self.paths.data_dir.join("test")
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.paths.checkpoint_dir.join("classifier.ckpt")
    }

    pub fn unet_path(&self) -> PathBuf {
        self.paths.checkpoint_dir.join("unet.ckpt")
    }

    pub fn attribute_classifier_path(&self, attribute: &str) -> PathBuf {
        self.paths.checkpoint_dir.join(format!("attr_{attribute}.ckpt"))
    }
}
