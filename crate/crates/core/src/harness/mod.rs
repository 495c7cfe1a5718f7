//! Experiment orchestration: configuration, seeded end-to-end runs, ablation
//! and leakage drivers, replay, and plot-ready metric series.
//!
//! A run directory holds
//!
//! | file | content |
//! |------|---------|
//! | `config.toml` | effective configuration, with its hash in a leading comment |
//! | `trajectories.jsonl` | every sampled trajectory and its reward |
//! | `metrics.csv` | one row per step |
//! | `checkpoints/*.ckpt` | policy weights |
//! | `summary.json` | accuracies, reward windows and gold-read counts |
//!
//! Every artifact carries the config hash.

mod ablation;
mod checkpoint;
mod metrics;
mod probe;
mod replay;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ablation::{run_ablation, AblationRow, AblationTable, ABLATION_FILE, ABLATION_SCHEMA};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use metrics::{
    emit_plots, read_metrics, read_series, MetricsRecord, MetricsWriter, PlotFiles, METRICS_SCHEMA,
    SERIES_SCHEMA,
};
pub use probe::{copy_policy_trajectory, run_leakage_probe, LeakageReport, ProbeScore};
pub use replay::{replay, write_replay_csv, ReplayRecord, REPLAY_SCHEMA};

use crate::agent::io::{TrajectoryLogWriter, TrajectoryRecord};
use crate::agent::{rollout, PolicyParams, RolloutConfig};
use crate::error::{Error, Result};
use crate::grpo::{train_loop, GrpoConfig, Trainer};
use crate::reward::{gold_em_reward, RewardConfig, RewardPipeline};
use crate::rng::{self, label};
use crate::world::io::sha256_hex;
use crate::world::{generate_questions, generate_world, GoldAudit, GoldPurpose, KnowledgeBase, Question, WorldConfig};
use crate::Params;

pub const CONFIG_SCHEMA: &str = "ccs.config.v1";
pub const SUMMARY_SCHEMA: &str = "ccs.summary.v1";

pub const CONFIG_FILE: &str = "config.toml";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
/// Present only when a run aborted; holds the error.
pub const INCOMPLETE_FILE: &str = "INCOMPLETE";

/// Steps averaged into the first and last reward windows.
pub const REWARD_WINDOW: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Training seed. The world has its own seed in `world.seed`.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub budget: usize,
    pub top_k: usize,
    /// Evaluate every this many steps; 0 evaluates only after the last step.
    pub eval_every: usize,
    /// Share of the question set held out for evaluation (taken from the end).
    pub heldout_fraction: f64,
    /// Rollouts per held-out question.
    pub eval_samples: usize,
    /// Record elapsed seconds in `wall_time`; off keeps metrics byte-reproducible.
    pub record_wall_time: bool,
    pub world: WorldConfig,
    pub grpo: GrpoConfig,
    pub reward: RewardConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let rollout = RolloutConfig::default();
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            budget: rollout.budget,
            top_k: rollout.top_k,
            eval_every: 50,
            heldout_fraction: 0.2,
            eval_samples: 4,
            record_wall_time: false,
            world: WorldConfig::default(),
            grpo: GrpoConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.grpo.validate()?;
        self.reward.validate()?;
        if self.budget < 1 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(Error::Config("heldout_fraction must lie in [0, 1)".into()));
        }
        if self.eval_samples == 0 {
            return Err(Error::Config("eval_samples must be positive".into()));
        }
        let (train, _) = self.split_sizes();
        if train == 0 {
            return Err(Error::Config("no training questions left after the held-out split".into()));
        }
        Ok(())
    }

    pub fn rollout(&self) -> RolloutConfig {
        RolloutConfig {
            budget: self.budget,
            top_k: self.top_k,
        }
    }

    fn split_sizes(&self) -> (usize, usize) {
        let n = self.world.n_questions;
        let held = ((n as f64) * self.heldout_fraction).round() as usize;
        (n - held.min(n), held.min(n))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical TOML form with `output_dir` blanked, so the
    /// same experiment hashes identically wherever it is written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        sha256_hex(canonical.to_toml().as_bytes())
    }

    /// The snapshot written to `config.toml`.
    pub fn snapshot(&self) -> String {
        format!("# schema={CONFIG_SCHEMA} config_hash={}\n{}", self.hash(), self.to_toml())
    }
}

/// Generated world with its train / held-out question split.
pub struct Setup {
    pub kb: KnowledgeBase,
    pub train: Vec<Question>,
    pub heldout: Vec<Question>,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let kb = generate_world(&config.world)?;
        let mut questions = generate_questions(&kb, &config.world)?;
        let (n_train, _) = config.split_sizes();
        let n_train = n_train.min(questions.len());
        if n_train == 0 {
            return Err(Error::Config("no training questions were generated".into()));
        }
        let heldout = questions.split_off(n_train);
        Ok(Self {
            kb,
            train: questions,
            heldout,
        })
    }
}

/// Held-out gold exact-match accuracy: `samples` rollouts per question, each
/// on its own stream. Gold is read for evaluation only. `None` without questions.
pub fn evaluate(
    theta: &Params,
    kb: &KnowledgeBase,
    questions: &[Question],
    rollout_config: &RolloutConfig,
    samples: usize,
    seed: u64,
    audit: &GoldAudit,
) -> Result<Option<f64>> {
    if questions.is_empty() || samples == 0 {
        return Ok(None);
    }
    let jobs: Vec<(usize, usize)> = (0..questions.len())
        .flat_map(|qi| (0..samples).map(move |s| (qi, s)))
        .collect();
    let hits: Vec<f64> = jobs
        .par_iter()
        .map(|&(qi, s)| {
            let q = &questions[qi];
            let mut r = rng::stream(seed, &[label::EVAL, q.id as u64, s as u64]);
            let traj = rollout(theta, kb, q, rollout_config, &mut r);
            gold_em_reward::<f64>(&traj, kb, q.gold_answer(audit, GoldPurpose::Evaluation))
        })
        .collect::<Result<_>>()?;
    Ok(Some(hits.iter().sum::<f64>() / hits.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub config_hash: String,
    pub world_fingerprint: String,
    pub steps: usize,
    pub initial_eval_accuracy: Option<f64>,
    pub final_eval_accuracy: Option<f64>,
    /// Mean reward over the first [`REWARD_WINDOW`] steps.
    pub first_window_reward: Option<f64>,
    /// Mean reward over the last [`REWARD_WINDOW`] steps.
    pub last_window_reward: Option<f64>,
    pub gold_reads_training: u64,
    pub gold_reads_evaluation: u64,
    pub final_theta: Vec<f64>,
}

/// Paths of everything a run wrote.
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub config_hash: String,
    pub config: PathBuf,
    pub trajectories: PathBuf,
    pub metrics: PathBuf,
    pub summary_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub summary: RunSummary,
}

fn window_mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Generates the world, trains, evaluates and writes every artifact into
/// `config.output_dir`. If training aborts, the artifacts written so far are
/// kept and an `INCOMPLETE` file records the error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    let _ = fs::remove_file(dir.join(INCOMPLETE_FILE));
    let hash = config.hash();
    fs::write(dir.join(CONFIG_FILE), config.snapshot())?;

    let setup = Setup::new(config)?;
    let audit = GoldAudit::default();
    let pipeline = RewardPipeline::new(&setup.kb, config.reward.clone())?;
    let rollout_config = config.rollout();
    let trainer = Trainer {
        kb: &setup.kb,
        questions: &setup.train,
        pipeline: &pipeline,
        audit: &audit,
        rollout: rollout_config,
        grpo: config.grpo.clone(),
        seed: config.seed,
    };
    let eval = |theta: &Params| {
        evaluate(
            theta,
            &setup.kb,
            &setup.heldout,
            &rollout_config,
            config.eval_samples,
            config.seed,
            &audit,
        )
    };

    let theta0 = PolicyParams::zeros(rollout_config.feature_map().dim());
    let initial_eval_accuracy = eval(&theta0)?;

    let traj_path = dir.join(TRAJECTORIES_FILE);
    let metrics_path = dir.join(METRICS_FILE);
    let mut traj_log = TrajectoryLogWriter::new(BufWriter::new(File::create(&traj_path)?), &hash)?;
    let mut metrics = MetricsWriter::new(BufWriter::new(File::create(&metrics_path)?), &hash)?;
    let mut checkpoints = Vec::new();
    let mut rewards = Vec::with_capacity(config.grpo.steps);
    let mut final_eval_accuracy = initial_eval_accuracy;
    let started = Instant::now();
    let steps = config.grpo.steps;

    let result = train_loop(&trainer, theta0.clone(), |out, theta| {
        let step = out.metrics.step;
        for g in &out.groups {
            for (i, (t, &r)) in g.trajectories.iter().zip(&g.rewards).enumerate() {
                traj_log.append(&TrajectoryRecord::new(step, i, t, r))?;
            }
        }
        let last = step + 1 == steps;
        let due = config.eval_every > 0 && (step + 1) % config.eval_every == 0;
        let eval_accuracy = if due || last { eval(theta)? } else { None };
        if last {
            final_eval_accuracy = eval_accuracy;
        }
        metrics.append(&MetricsRecord {
            step,
            mean_reward: out.metrics.mean_reward,
            reward_channel: config.reward.channel.as_str().to_string(),
            mode: config.reward.mode.as_str().to_string(),
            mean_kl: out.metrics.mean_kl,
            avg_num_search: out.metrics.avg_num_search,
            eval_accuracy,
            wall_time: if config.record_wall_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        })?;
        let every = config.grpo.checkpoint_every;
        if every > 0 && (step + 1) % every == 0 && !last {
            let path = dir.join(CHECKPOINT_DIR).join(format!("step-{:06}.ckpt", step + 1));
            write_checkpoint(&path, theta, step + 1, config.seed, &hash)?;
            checkpoints.push(path);
        }
        rewards.push(out.metrics.mean_reward);
        Ok(())
    });
    traj_log.flush()?;
    metrics.flush()?;
    drop(traj_log);
    drop(metrics);

    let theta = match result {
        Ok((theta, _)) => theta,
        Err(e) => {
            fs::write(dir.join(INCOMPLETE_FILE), format!("{e}\n"))?;
            return Err(e);
        }
    };
    let final_path = dir.join(CHECKPOINT_DIR).join("final.ckpt");
    write_checkpoint(&final_path, &theta, steps, config.seed, &hash)?;
    checkpoints.push(final_path);

    let w = REWARD_WINDOW.min(rewards.len());
    let summary = RunSummary {
        schema: SUMMARY_SCHEMA.into(),
        config_hash: hash.clone(),
        world_fingerprint: setup.kb.fingerprint(),
        steps,
        initial_eval_accuracy,
        final_eval_accuracy,
        first_window_reward: window_mean(&rewards[..w]),
        last_window_reward: window_mean(&rewards[rewards.len() - w..]),
        gold_reads_training: audit.reads(GoldPurpose::TrainingReward),
        gold_reads_evaluation: audit.reads(GoldPurpose::Evaluation),
        final_theta: theta.theta.clone(),
    };
    let summary_path = dir.join(SUMMARY_FILE);
    let mut f = BufWriter::new(File::create(&summary_path)?);
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    f.flush()?;

    Ok(RunArtifacts {
        output_dir: dir,
        config_hash: hash,
        config: config.output_dir.join(CONFIG_FILE),
        trajectories: traj_path,
        metrics: metrics_path,
        summary_path,
        checkpoints,
        summary,
    })
}

/// Reads a run's `summary.json`.
pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(dir.join(SUMMARY_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
