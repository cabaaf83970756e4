use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::symnet::NetworkSpec;

use super::TrainError;

/// One stretch of the learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub epochs: usize,
    pub lr: f64,
}

/// Seven epochs at 0.05, two at 0.01, one at 0.005.
pub fn default_schedule() -> Vec<Phase> {
    vec![Phase { epochs: 7, lr: 0.05 }, Phase { epochs: 2, lr: 0.01 }, Phase { epochs: 1, lr: 0.005 }]
}

/// Everything that determines the optimisation trajectory. Paths are kept
/// out so two runs in different directories produce identical checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    #[serde(default = "default_true")]
    pub masked: bool,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<Phase>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

/// Training run description, read from TOML:
///
/// ```toml
/// manifest = "data/manifest.toml"
/// checkpoint_dir = "runs/medium"
/// batch_size = 128
/// seed = 42
/// masked = true
///
/// [network]
/// tied = true
/// layers = [{ filters = 16, kernel = 7 }, { filters = 16, kernel = 5 }]
///
/// [[schedule]]
/// epochs = 7
/// lr = 0.05
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub network: NetworkSpec,
    pub manifest: PathBuf,
    pub checkpoint_dir: PathBuf,
    #[serde(default = "default_true")]
    pub masked: bool,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<Phase>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Validation examples scored per epoch; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_limit: Option<usize>,
}

fn default_true() -> bool {
    true
}

fn default_batch_size() -> usize {
    128
}

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_init_std() -> f64 {
    0.01
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            masked: true,
            batch_size: default_batch_size(),
            schedule: default_schedule(),
            seed: DEFAULT_SEED,
            init_std: default_init_std(),
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.schedule.is_empty() {
            return bad("schedule is empty".into());
        }
        for (i, p) in self.schedule.iter().enumerate() {
            if !(p.lr > 0.0 && p.lr.is_finite()) {
                return bad(format!("schedule[{i}].lr must be positive, got {}", p.lr));
            }
            if p.epochs == 0 {
                return bad(format!("schedule[{i}] has no epochs"));
            }
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.schedule.iter().map(|p| p.epochs).sum()
    }

    /// Learning rate of 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> Option<f64> {
        let mut end = 0;
        for p in &self.schedule {
            end += p.epochs;
            if epoch < end {
                return Some(p.lr);
            }
        }
        None
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> Hyperparameters {
        Hyperparameters {
            masked: self.masked,
            batch_size: self.batch_size,
            schedule: self.schedule.clone(),
            seed: self.seed,
            init_std: self.init_std,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.hyper().validate()?;
        self.network.validate().map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<TrainConfig, TrainError> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, then applies `key=value` overrides. Keys are dotted
    /// paths; values are TOML literals, or bare strings if they do not parse.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<TrainConfig, TrainError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| TrainError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: TrainConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative `manifest` and `checkpoint_dir` paths
    /// are resolved against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<TrainConfig, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|source| TrainError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml_with_overrides(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.checkpoint_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), TrainError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| TrainError::Config(format!("override {spec:?} is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| TrainError::Config(format!("override {key}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
manifest = "data/manifest.toml"
checkpoint_dir = "runs/a"

[network]
layers = [{ filters = 4, kernel = 3 }]
"#;

    #[test]
    fn defaults() {
        let cfg = TrainConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.hyper(), Hyperparameters::default());
        assert_eq!(cfg.hyper().total_epochs(), 10);
        assert!(cfg.network.tied);
        assert_eq!(cfg.network.board_size, 19);
        assert_eq!(cfg.validation_limit, None);
    }

    #[test]
    fn schedule_lookup() {
        let h = Hyperparameters::default();
        let lrs: Vec<f64> = (0..10).map(|e| h.lr_at(e).unwrap()).collect();
        assert_eq!(lrs, [0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.01, 0.01, 0.005]);
        assert_eq!(h.lr_at(10), None);
    }

    #[test]
    fn overrides() {
        let o = [
            "batch_size=16".to_string(),
            "network.tied=false".to_string(),
            "schedule=[{epochs=3, lr=0.1}]".to_string(),
            "checkpoint_dir=runs/b".to_string(),
        ];
        let cfg = TrainConfig::from_toml_with_overrides(BASE, &o).unwrap();
        assert_eq!(cfg.batch_size, 16);
        assert!(!cfg.network.tied);
        assert_eq!(cfg.schedule, vec![Phase { epochs: 3, lr: 0.1 }]);
        assert_eq!(cfg.checkpoint_dir, PathBuf::from("runs/b"));
        assert!(TrainConfig::from_toml_with_overrides(BASE, &["nokey".into()]).is_err());
        assert!(TrainConfig::from_toml_with_overrides(BASE, &["manifest.x=1".into()]).is_err());
    }

    #[test]
    fn invalid_configs() {
        for o in ["batch_size=0", "schedule=[]", "schedule=[{epochs=1, lr=0.0}]", "unknown=1", "network.layers=[{filters=2, kernel=4}]"] {
            assert!(TrainConfig::from_toml_with_overrides(BASE, &[o.to_string()]).is_err(), "{o}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = TrainConfig::from_toml_with_overrides(BASE, &["validation_limit=50".into()]).unwrap();
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
