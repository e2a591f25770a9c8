use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::AlcConfig;
use crate::search::SearchConfig;
use crate::trainer::{AugmentMode, TrainerConfig};

/// Everything one budgeted run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Directory holding `train/` and `test/` dataset directories.
    pub dataset: PathBuf,
    pub output: PathBuf,
    /// Time budget in seconds.
    pub budget: f64,
    pub t0: f64,
    pub trainer: TrainerConfig,
    pub search: SearchConfig,
    pub mode: AugmentMode,
    pub seed: u64,
    /// Checkpoint whose conv stack initializes the model.
    pub warmstart: Option<PathBuf>,
    /// Sub-policy pool JSON; the built-in pool when absent.
    pub pool: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            output: PathBuf::from("out"),
            budget: 1200.0,
            t0: 60.0,
            trainer: TrainerConfig::default(),
            search: SearchConfig::default(),
            mode: AugmentMode::Searched,
            seed: 0,
            warmstart: None,
            pool: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        AlcConfig::new(self.budget, self.t0)?;
        self.trainer.validate()?;
        self.search.validate()
    }

    pub fn alc_config(&self) -> AlcConfig {
        AlcConfig {
            budget: self.budget,
            t0: self.t0,
        }
    }

    /// Trainer and search settings with the run seed applied.
    pub fn seeded(&self) -> (TrainerConfig, SearchConfig) {
        let trainer = TrainerConfig {
            seed: self.seed,
            ..self.trainer.clone()
        };
        let search = SearchConfig {
            seed: self.seed,
            ..self.search
        };
        (trainer, search)
    }
}
