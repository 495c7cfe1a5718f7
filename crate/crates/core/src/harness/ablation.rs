use std::fs::{self, File};
use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use super::{run_experiment, ExperimentConfig};
use crate::bottleneck::BottleneckMode;
use crate::error::{Error, Result};

pub const ABLATION_SCHEMA: &str = "ccs.ablation.v1";
pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: BottleneckMode,
    pub world_fingerprint: String,
    pub initial_eval_accuracy: Option<f64>,
    pub final_eval_accuracy: Option<f64>,
    /// Mean training reward over the last reward window.
    pub mean_reward: Option<f64>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, mode: BottleneckMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

/// Trains one policy per mode on the same world and seed, each into
/// `output_dir/<mode>`, and writes `ablation.csv` to `output_dir`.
pub fn run_ablation(config: &ExperimentConfig, modes: &[BottleneckMode]) -> Result<AblationTable> {
    if modes.len() < 2 {
        return Err(Error::Config("an ablation needs at least two modes".into()));
    }
    config.validate()?;
    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut cfg = config.clone();
        cfg.reward.mode = mode;
        cfg.output_dir = config.output_dir.join(mode.as_str());
        let run = run_experiment(&cfg)?;
        rows.push(AblationRow {
            mode,
            world_fingerprint: run.summary.world_fingerprint,
            initial_eval_accuracy: run.summary.initial_eval_accuracy,
            final_eval_accuracy: run.summary.final_eval_accuracy,
            mean_reward: run.summary.last_window_reward,
            config_hash: run.config_hash,
        });
    }
    fs::create_dir_all(&config.output_dir)?;
    let mut out = BufWriter::new(File::create(config.output_dir.join(ABLATION_FILE))?);
    writeln!(out, "#schema={ABLATION_SCHEMA} config_hash={}", config.hash())?;
    let mut w = csv::Writer::from_writer(out);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(AblationTable { rows })
}
