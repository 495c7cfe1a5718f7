//! Recomputes rewards for a saved trajectory log, optionally under a different
//! bottleneck mode or reconstructor, without retraining.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Setup, CONFIG_FILE, TRAJECTORIES_FILE};
use crate::agent::io::read_log;
use crate::agent::Trajectory;
use crate::bottleneck::BottleneckMode;
use crate::error::{Error, Result};
use crate::reconstruct::ReconstructorKind;
use crate::reward::RewardPipeline;
use crate::world::{GoldAudit, Question};

pub const REPLAY_SCHEMA: &str = "ccs.replay.v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub step: usize,
    pub question_id: usize,
    pub group_index: usize,
    /// Reward stored in the log by the original run.
    pub logged_reward: f64,
    /// Reward under the replay configuration.
    pub reward: f64,
}

/// Replays `run_dir`'s trajectory log. Groups are the log's consecutive runs
/// of records sharing (step, question), as written by the trainer. Returns the
/// effective replay config alongside the records.
pub fn replay(
    run_dir: &Path,
    mode: Option<BottleneckMode>,
    reconstructor: Option<ReconstructorKind>,
) -> Result<(ExperimentConfig, Vec<ReplayRecord>)> {
    let original = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
    let log_path = run_dir.join(TRAJECTORIES_FILE);
    let (hash, records) = read_log(BufReader::new(File::open(&log_path)?), &log_path)?;
    if hash != original.hash() {
        return Err(Error::Contract(format!(
            "trajectory log hash {hash} does not match config hash {}",
            original.hash()
        )));
    }
    let mut config = original;
    if let Some(m) = mode {
        config.reward.mode = m;
    }
    if let Some(r) = reconstructor {
        config.reward.reconstructor = r;
    }

    let setup = Setup::new(&config)?;
    let by_id = |id: usize| -> Result<&Question> {
        setup
            .train
            .iter()
            .chain(&setup.heldout)
            .find(|q| q.id == id)
            .ok_or_else(|| Error::Contract(format!("log refers to unknown question {id}")))
    };
    let pipeline = RewardPipeline::new(&setup.kb, config.reward.clone())?;
    let audit = GoldAudit::default();

    let mut out = Vec::with_capacity(records.len());
    let mut start = 0;
    while start < records.len() {
        let key = (records[start].step, records[start].question_id);
        let end = records[start..]
            .iter()
            .position(|r| (r.step, r.question_id) != key)
            .map_or(records.len(), |p| start + p);
        let group = &records[start..end];
        let trajs: Vec<Trajectory> = group
            .iter()
            .map(|r| r.to_trajectory(&setup.kb))
            .collect::<Result<_>>()?;
        let refs: Vec<&Trajectory> = trajs.iter().collect();
        let scored = pipeline.score_group::<f64>(&setup.kb, by_id(key.1)?, &refs, &audit)?;
        for (r, reward) in group.iter().zip(scored.rewards) {
            out.push(ReplayRecord {
                step: r.step,
                question_id: r.question_id,
                group_index: r.group_index,
                logged_reward: r.reward,
                reward,
            });
        }
        start = end;
    }
    Ok((config, out))
}

/// Writes replay records as CSV under a schema line.
pub fn write_replay_csv(path: &Path, config_hash: &str, records: &[ReplayRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "#schema={REPLAY_SCHEMA} config_hash={config_hash}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
