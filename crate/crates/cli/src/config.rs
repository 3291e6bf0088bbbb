//! Run configuration: a TOML file whose top-level keys are the experiment
//! settings plus the run seed and seed count.

use std::path::{Path, PathBuf};

use celldet_bench::experiments::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::read_to_string;

pub const CONFIG_ENV: &str = "CELLDET_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Seeds used by `experiment`: `seed, seed + 1, ...`.
    pub n_seeds: usize,
    /// Worker threads for per-scene work; 0 uses the available cores.
    pub workers: usize,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_seeds: 5,
            workers: 0,
            experiment: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(CliError::Config("n_seeds must be at least 1".into()));
        }
        Ok(self.experiment.validate()?)
    }

    /// Parses a TOML run configuration. The run keys and the experiment
    /// settings are read in separate passes so type errors keep their line.
    pub fn from_toml(path: &Path, text: &str) -> Result<Self> {
        let err = |e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
            CliError::parse(path, line, e.message().to_string())
        };
        let head: RunKeys = toml::from_str(text).map_err(err)?;
        let experiment: ExperimentConfig = toml::from_str(text).map_err(err)?;
        Ok(Self {
            seed: head.seed,
            n_seeds: head.n_seeds,
            workers: head.workers,
            experiment,
        })
    }

    pub fn seeds(&self, n: usize) -> Vec<u64> {
        (0..n as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn worker_count(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

#[derive(Deserialize)]
#[serde(default)]
struct RunKeys {
    seed: u64,
    n_seeds: usize,
    workers: usize,
}

impl Default for RunKeys {
    fn default() -> Self {
        let d = RunConfig::default();
        Self {
            seed: d.seed,
            n_seeds: d.n_seeds,
            workers: d.workers,
        }
    }
}

/// Where the configuration came from, recorded in manifests.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigSource {
    Defaults,
    File(PathBuf),
}

/// Loads the configuration named by `--config`, else `$CELLDET_CONFIG`,
/// else the defaults; applies the seed override and validates.
pub fn load(flag: Option<&Path>, seed: Option<u64>) -> Result<(RunConfig, ConfigSource)> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    let (mut cfg, source) = match path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::MissingInput(p.display().to_string()));
            }
            let text = read_to_string(&p)?;
            (RunConfig::from_toml(&p, &text)?, ConfigSource::File(p))
        }
        None => (RunConfig::default(), ConfigSource::Defaults),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok((cfg, source))
}
