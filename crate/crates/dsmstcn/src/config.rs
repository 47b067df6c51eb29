//! TOML experiment configuration. Every table is optional and every field
//! falls back to its default:
//!
//! ```toml
//! seed = 7                  # overrides synth.seed and train.seed
//! protocol = "lab_losocv"   # or "home_generalization"
//!
//! [synth]
//! subjects = 10
//! snr_db = 10.0
//!
//! [train]
//! epochs = 20
//! batch_size = 2
//! micro_budget = 1.0
//! anneal_to = 0.05         # cosine lr decay to this fraction; omit for constant lr
//! [train.model]
//! mode = "dual_scale"
//! num_layers = 9
//! num_filters = 8
//! [train.loss]
//! eta = 1.0
//! [train.adam]
//! lr = 0.002
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use dsmstcn_core::data::FoldProtocol;
use dsmstcn_core::harness::TrainConfig;
use dsmstcn_core::model::ModelMode;
use dsmstcn_core::synthgen::ScenarioSpec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub protocol: FoldProtocol,
    pub synth: ScenarioSpec,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: None,
            protocol: FoldProtocol::LabLosocv,
            synth: ScenarioSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<ModelMode>,
    pub eta: Option<f64>,
    pub micro_budget: Option<f64>,
    pub epochs: Option<usize>,
    pub protocol: Option<FoldProtocol>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path`, or the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&crate::formats::read_text(p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        }
    }

    /// Applies overrides and the top-level seed, then validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.train.seed = s;
        }
        if let Some(m) = o.mode {
            self.train.model.mode = m;
        }
        if let Some(e) = o.eta {
            self.train.loss.eta = e;
        }
        if let Some(b) = o.micro_budget {
            self.train.micro_budget = b;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(p) = o.protocol {
            self.protocol = p;
        }
        self.synth.validate()?;
        self.train.validate()?;
        Ok(self)
    }
}
