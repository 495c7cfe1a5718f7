//! Line-delimited JSON trajectory logs.
//!
//! One record per trajectory: question id, the action/observation steps with
//! snippet texts and scores, the chosen index and candidate count of every
//! decision, and the behavior log-likelihood.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{snippet_from_text, Action, Observation, Step, Trajectory};
use crate::error::{Error, Result};
use crate::world::KnowledgeBase;

pub const TRAJECTORY_SCHEMA: &str = "ccs.trajectories.v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub text: Vec<String>,
    pub score: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: Action,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub observation: Option<Vec<SnippetRecord>>,
    pub chosen: usize,
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub question_id: usize,
    pub group_index: usize,
    pub steps: Vec<StepRecord>,
    pub behavior_loglik: f64,
    pub reward: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header { schema: String, config_hash: String },
    Trajectory(TrajectoryRecord),
}

impl TrajectoryRecord {
    pub fn new(step: usize, group_index: usize, traj: &Trajectory, reward: f64) -> Self {
        let steps = traj
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let decision = traj.decisions.get(i);
                StepRecord {
                    action: s.action.clone(),
                    observation: s.observation.as_ref().map(|o| {
                        o.snippets
                            .iter()
                            .map(|sn| SnippetRecord {
                                text: sn.text.clone(),
                                score: sn.score,
                            })
                            .collect()
                    }),
                    chosen: decision.map_or(0, |d| d.chosen),
                    candidates: decision.map_or(0, |d| d.candidates.len()),
                }
            })
            .collect();
        Self {
            step,
            question_id: traj.question_id,
            group_index,
            steps,
            behavior_loglik: traj.behavior_loglik,
            reward,
        }
    }

    /// Rebuilds the trajectory's actions and observations. Candidate sets are
    /// not logged, so the result carries no decisions.
    pub fn to_trajectory(&self, kb: &KnowledgeBase) -> Result<Trajectory> {
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let observation = match &s.observation {
                    None => None,
                    Some(snips) => Some(Observation {
                        snippets: snips
                            .iter()
                            .map(|r| snippet_from_text(kb, &r.text, r.score))
                            .collect::<Result<_>>()?,
                    }),
                };
                Ok(Step {
                    action: s.action.clone(),
                    observation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let traj = Trajectory {
            question_id: self.question_id,
            steps,
            decisions: Vec::new(),
            behavior_loglik: self.behavior_loglik,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn num_searches(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s.action, Action::Search { .. }))
            .count()
    }
}

/// Append-only writer; the header goes out on creation.
pub struct TrajectoryLogWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryLogWriter<W> {
    pub fn new(mut out: W, config_hash: &str) -> Result<Self> {
        serde_json::to_writer(
            &mut out,
            &LogLine::Header {
                schema: TRAJECTORY_SCHEMA.into(),
                config_hash: config_hash.into(),
            },
        )?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn append(&mut self, record: &TrajectoryRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, &LogLine::Trajectory(record.clone()))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a log, returning its config hash and records.
pub fn read_log<R: BufRead>(r: R, origin: &Path) -> Result<(String, Vec<TrajectoryRecord>)> {
    let mut hash = None;
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        match parsed {
            LogLine::Header { schema, config_hash } => {
                if schema != TRAJECTORY_SCHEMA {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: i + 1,
                        detail: format!("unsupported schema {schema}"),
                    });
                }
                hash = Some(config_hash);
            }
            LogLine::Trajectory(t) => records.push(t),
        }
    }
    let hash = hash.ok_or_else(|| Error::Parse {
        path: origin.to_path_buf(),
        line: 1,
        detail: "missing header line".into(),
    })?;
    Ok((hash, records))
}
