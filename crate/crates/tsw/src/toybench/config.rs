//! Benchmark configuration. Every section may be omitted; a section that is
//! present must be complete. Defaults reproduce the stock benchmark.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Task family geometry: each task is `classes` Gaussian clusters whose means
/// sit on a sphere of the given radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub tasks: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub hidden: Vec<usize>,
    pub radius: f32,
    pub spread: f32,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub pretrain_per_task: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            tasks: 8,
            input_dim: 64,
            classes: 10,
            hidden: vec![128],
            radius: 6.5,
            spread: 0.75,
            train_per_class: 40,
            test_per_class: 25,
            pretrain_per_task: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f32,
    pub epochs: usize,
    pub batch: usize,
}

impl TrainConfig {
    /// Deliberately short so fine-tuning has headroom on every task.
    fn pretrain_default() -> Self {
        Self {
            lr: 0.05,
            epochs: 2,
            batch: 32,
        }
    }

    fn finetune_default() -> Self {
        Self {
            lr: 0.05,
            epochs: 30,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlledConfig {
    pub alphas: Vec<f32>,
    pub seeds: Vec<u64>,
}

impl Default for ControlledConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergingConfig {
    pub alpha: f32,
    pub queries_per_task: usize,
    pub neighbors: usize,
    pub seeds: Vec<u64>,
    pub arith_coef: f32,
}

impl Default for MergingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            queries_per_task: 100,
            neighbors: 5,
            seeds: vec![0, 1, 2, 3, 4],
            arith_coef: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub suite: SuiteConfig,
    #[serde(default = "TrainConfig::pretrain_default")]
    pub pretrain: TrainConfig,
    #[serde(default = "TrainConfig::finetune_default")]
    pub finetune: TrainConfig,
    #[serde(default)]
    pub controlled: ControlledConfig,
    #[serde(default)]
    pub merging: MergingConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            suite: SuiteConfig::default(),
            pretrain: TrainConfig::pretrain_default(),
            finetune: TrainConfig::finetune_default(),
            controlled: ControlledConfig::default(),
            merging: MergingConfig::default(),
        }
    }
}

fn bad(what: impl Into<String>) -> Error {
    Error::Config { what: what.into() }
}

fn check_alpha(alpha: f32, what: &str) -> Result<()> {
    if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) {
        return Err(bad(format!("{what} must lie in [0, 1), got {alpha}")));
    }
    Ok(())
}

impl TrainConfig {
    fn validate(&self, section: &str) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(bad(format!("{section}.lr must be finite and >= 0")));
        }
        if self.batch == 0 {
            return Err(bad(format!("{section}.batch must be at least 1")));
        }
        Ok(())
    }
}

impl BenchConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| Error::Corrupt {
            path: origin.to_path_buf(),
            what: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.suite;
        if s.tasks == 0 {
            return Err(bad("suite.tasks must be at least 1"));
        }
        if s.input_dim == 0 {
            return Err(bad("suite.input_dim must be at least 1"));
        }
        if s.classes < 2 {
            return Err(bad("suite.classes must be at least 2"));
        }
        if s.hidden.is_empty() || s.hidden.contains(&0) {
            return Err(bad("suite.hidden needs at least one nonzero layer width"));
        }
        if !s.radius.is_finite() || s.radius < 0.0 {
            return Err(bad("suite.radius must be finite and >= 0"));
        }
        if !s.spread.is_finite() || s.spread < 0.0 {
            return Err(bad("suite.spread must be finite and >= 0"));
        }
        if s.train_per_class == 0 || s.test_per_class == 0 || s.pretrain_per_task == 0 {
            return Err(bad("suite sample counts must be at least 1"));
        }
        self.pretrain.validate("pretrain")?;
        self.finetune.validate("finetune")?;
        if self.controlled.alphas.is_empty() {
            return Err(bad("controlled.alphas must not be empty"));
        }
        for &a in &self.controlled.alphas {
            check_alpha(a, "controlled.alphas entries")?;
        }
        if self.controlled.seeds.is_empty() {
            return Err(bad("controlled.seeds must not be empty"));
        }
        check_alpha(self.merging.alpha, "merging.alpha")?;
        if self.merging.queries_per_task == 0 {
            return Err(bad("merging.queries_per_task must be at least 1"));
        }
        if self.merging.queries_per_task > s.classes * s.train_per_class {
            return Err(bad(format!(
                "merging.queries_per_task exceeds the {} training examples per task",
                s.classes * s.train_per_class
            )));
        }
        if self.merging.neighbors == 0 {
            return Err(bad("merging.neighbors must be at least 1"));
        }
        if self.merging.neighbors > self.suite.tasks * self.merging.queries_per_task {
            return Err(bad("merging.neighbors exceeds the query index size"));
        }
        if self.merging.seeds.is_empty() {
            return Err(bad("merging.seeds must not be empty"));
        }
        if !self.merging.arith_coef.is_finite() {
            return Err(bad("merging.arith_coef must be finite"));
        }
        Ok(())
    }
}
