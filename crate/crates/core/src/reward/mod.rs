//! Reward channels.
//!
//! * Cycle: cosine between embeddings of the question and its reconstruction
//!   from the bottlenecked trajectory. No gold answer is involved.
//! * GoldEM: exact match of the final response against the gold answer.
//! * MajorityVote: agreement with the group's modal final response.

mod embed;
mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use embed::{cosine, embed, fnv1a, token_slot, EmbeddingVector, DEFAULT_DIM};
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, EMBEDDER_ENV};

use crate::agent::Trajectory;
use crate::bottleneck::{apply_mode, BottleneckMode, ReconstructorInput};
use crate::error::{Error, Result};
use crate::reconstruct::{
    reconstruct_lexical, reconstruct_oracle, OracleContext, ReconstructionResult,
    ReconstructorKind, RemoteReconstructor,
};
use crate::scalar::Scalar;
use crate::world::{GoldAudit, GoldPurpose, KnowledgeBase, Question};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardChannel {
    #[default]
    Cycle,
    GoldEm,
    MajorityVote,
}

impl RewardChannel {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardChannel::Cycle => "cycle",
            RewardChannel::GoldEm => "gold-em",
            RewardChannel::MajorityVote => "majority-vote",
        }
    }
}

impl std::str::FromStr for RewardChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [RewardChannel::Cycle, RewardChannel::GoldEm, RewardChannel::MajorityVote]
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown reward channel {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderKind {
    Hashed { dim: usize },
    Remote(RemoteEmbedderConfig),
}

impl Default for EmbedderKind {
    fn default() -> Self {
        EmbedderKind::Hashed { dim: DEFAULT_DIM }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub channel: RewardChannel,
    pub mode: BottleneckMode,
    pub reconstructor: ReconstructorKind,
    pub clamp_negative: bool,
    pub na_reward: f64,
    pub embedder: EmbedderKind,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            channel: RewardChannel::Cycle,
            mode: BottleneckMode::MaskedActionsObs,
            reconstructor: ReconstructorKind::Oracle,
            clamp_negative: true,
            na_reward: 0.0,
            embedder: EmbedderKind::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if let EmbedderKind::Hashed { dim: 0 } = self.embedder {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if !self.na_reward.is_finite() {
            return Err(Error::Config("na_reward must be finite".into()));
        }
        Ok(())
    }
}

/// Cosine reward for one reconstruction, given the embeddings involved.
pub fn cycle_reward_from<T: Scalar>(
    question: &EmbeddingVector<T>,
    reconstruction: Option<&EmbeddingVector<T>>,
    config: &RewardConfig,
) -> T {
    match reconstruction {
        None => T::lit(config.na_reward),
        Some(r) => {
            let c = cosine(question, r);
            if config.clamp_negative {
                c.max(T::zero()).min(T::one())
            } else {
                c
            }
        }
    }
}

/// Cycle reward with the hashed embedder.
pub fn cycle_reward<T: Scalar>(q: &Question, result: &ReconstructionResult, config: &RewardConfig) -> T {
    let dim = match config.embedder {
        EmbedderKind::Hashed { dim } => dim,
        EmbedderKind::Remote(ref r) => r.dim,
    };
    let eq = embed::<T, _>(&q.tokens, dim);
    let er = result.tokens().map(|t| embed::<T, _>(t, dim));
    cycle_reward_from(&eq, er.as_ref(), config)
}

/// 1 when the final response is exactly the gold entity's surface.
pub fn gold_em_reward<T: Scalar>(traj: &Trajectory, kb: &KnowledgeBase, gold: usize) -> Result<T> {
    let response = traj.final_response().ok_or_else(|| {
        Error::Contract(format!("trajectory for question {} has no final response", traj.question_id))
    })?;
    let hit = response.len() == 1 && response[0] == kb.entity(gold).surface;
    Ok(if hit { T::one() } else { T::zero() })
}

/// 1 for responses equal to the modal one (ties go to the lexicographically
/// smallest), 0 otherwise.
pub fn majority_vote_reward<T: Scalar>(finals: &[Vec<String>]) -> Vec<T> {
    assert!(!finals.is_empty(), "majority vote needs at least one response");
    let mut counts: BTreeMap<&Vec<String>, usize> = BTreeMap::new();
    for f in finals {
        *counts.entry(f).or_default() += 1;
    }
    let best = counts.values().copied().max().expect("non-empty");
    // BTreeMap iterates in lexicographic order, so the first hit wins ties.
    let modal = counts
        .iter()
        .find(|(_, &c)| c == best)
        .map(|(k, _)| (*k).clone())
        .expect("non-empty");
    finals
        .iter()
        .map(|f| if *f == modal { T::one() } else { T::zero() })
        .collect()
}

enum Embedder {
    Hashed(usize),
    Remote(RemoteEmbedder),
}

enum Reconstructor {
    Oracle,
    Lexical,
    Remote(RemoteReconstructor),
}

/// A reward channel bound to one world.
pub struct RewardPipeline {
    config: RewardConfig,
    oracle: OracleContext,
    reconstructor: Reconstructor,
    embedder: Embedder,
}

/// Rewards for one group, with the reconstructions that produced them when
/// the channel is Cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredGroup<T> {
    pub rewards: Vec<T>,
    pub reconstructions: Vec<Option<ReconstructionResult>>,
}

impl RewardPipeline {
    /// Builds the channel. Remote endpoints are contacted here so a bad
    /// embedder dimension fails at startup.
    pub fn new(kb: &KnowledgeBase, config: RewardConfig) -> Result<Self> {
        config.validate()?;
        let reconstructor = match &config.reconstructor {
            ReconstructorKind::Oracle => Reconstructor::Oracle,
            ReconstructorKind::Lexical => Reconstructor::Lexical,
            ReconstructorKind::Remote(r) => {
                Reconstructor::Remote(RemoteReconstructor::new(r.clone().with_env_override())?)
            }
        };
        let embedder = match (&config.channel, &config.embedder) {
            (_, EmbedderKind::Hashed { dim }) => Embedder::Hashed(*dim),
            (RewardChannel::Cycle, EmbedderKind::Remote(r)) => Embedder::Remote(RemoteEmbedder::connect(r.clone())?),
            (_, EmbedderKind::Remote(r)) => Embedder::Hashed(r.dim),
        };
        Ok(Self {
            config,
            oracle: OracleContext::from_kb(kb),
            reconstructor,
            embedder,
        })
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn input(&self, traj: &Trajectory) -> ReconstructorInput {
        apply_mode(traj, self.config.mode, &self.oracle.vocab)
    }

    /// Reconstructs every trajectory under the configured mode.
    pub fn reconstruct_all(&self, trajs: &[&Trajectory]) -> Result<Vec<ReconstructionResult>> {
        let inputs: Vec<ReconstructorInput> = trajs.iter().map(|t| self.input(t)).collect();
        match &self.reconstructor {
            Reconstructor::Oracle => Ok(inputs.iter().map(|i| reconstruct_oracle(i, &self.oracle)).collect()),
            Reconstructor::Lexical => Ok(inputs.iter().map(reconstruct_lexical).collect()),
            Reconstructor::Remote(r) => r.reconstruct_batch(&inputs),
        }
    }

    fn embed<T: Scalar>(&self, tokens: &[String]) -> Result<EmbeddingVector<T>> {
        match &self.embedder {
            Embedder::Hashed(dim) => Ok(embed(tokens, *dim)),
            Embedder::Remote(r) => r.embed(tokens),
        }
    }

    /// Scores a group of trajectories for one question. Only the GoldEM
    /// channel reads the gold answer, and it does so through `audit`.
    pub fn score_group<T: Scalar>(
        &self,
        kb: &KnowledgeBase,
        question: &Question,
        trajs: &[&Trajectory],
        audit: &GoldAudit,
    ) -> Result<ScoredGroup<T>> {
        match self.config.channel {
            RewardChannel::Cycle => {
                let recs = self.reconstruct_all(trajs)?;
                let eq = self.embed::<T>(&question.tokens)?;
                let rewards = recs
                    .iter()
                    .map(|r| {
                        let er = r.tokens().map(|t| self.embed::<T>(t)).transpose()?;
                        Ok(cycle_reward_from(&eq, er.as_ref(), &self.config))
                    })
                    .collect::<Result<Vec<T>>>()?;
                Ok(ScoredGroup {
                    rewards,
                    reconstructions: recs.into_iter().map(Some).collect(),
                })
            }
            RewardChannel::GoldEm => {
                let gold = question.gold_answer(audit, GoldPurpose::TrainingReward);
                let rewards = trajs
                    .iter()
                    .map(|t| gold_em_reward(t, kb, gold))
                    .collect::<Result<Vec<T>>>()?;
                Ok(ScoredGroup {
                    reconstructions: vec![None; rewards.len()],
                    rewards,
                })
            }
            RewardChannel::MajorityVote => {
                let finals: Vec<Vec<String>> = trajs
                    .iter()
                    .map(|t| t.final_response().map(<[String]>::to_vec).unwrap_or_default())
                    .collect();
                let rewards = majority_vote_reward(&finals);
                Ok(ScoredGroup {
                    reconstructions: vec![None; rewards.len()],
                    rewards,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    /// Independent cosine over explicit token-count maps, assuming no collisions.
    fn bag_cosine(a: &[String], b: &[String]) -> f64 {
        let count = |x: &[String]| {
            let mut m = BTreeMap::new();
            for t in x {
                *m.entry(t.clone()).or_insert(0.0) += 1.0;
            }
            m
        };
        let (ca, cb) = (count(a), count(b));
        let dot: f64 = ca.iter().map(|(k, v)| v * cb.get(k).copied().unwrap_or(0.0)).sum();
        let n = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
        dot / (n(&ca) * n(&cb))
    }

    fn collision_free(tokens: &[String]) -> bool {
        let mut slots: Vec<usize> = tokens.iter().map(|t| token_slot(t, DEFAULT_DIM).0).collect();
        let mut uniq = tokens.to_vec();
        uniq.sort();
        uniq.dedup();
        slots.sort();
        slots.dedup();
        slots.len() == uniq.len()
    }

    #[test]
    fn half_shared_four_token_texts() {
        let a = toks("alpha beta gamma delta");
        let b = toks("alpha beta kappa sigma");
        let all: Vec<String> = a.iter().chain(&b).cloned().collect();
        assert!(collision_free(&all));
        let c: f64 = cosine(&embed(&a, DEFAULT_DIM), &embed(&b, DEFAULT_DIM));
        assert_abs_diff_eq!(c, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn empty_text_is_zero_and_scores_zero() {
        let z: EmbeddingVector<f64> = embed::<f64, String>(&[], DEFAULT_DIM);
        assert!(z.is_zero());
        assert_eq!(cosine(&z, &embed(&toks("x"), DEFAULT_DIM)), 0.0);
    }

    #[test]
    fn relation_swap_matches_bag_oracle() {
        let q = toks("what is the part-of of the born-in of kalo");
        let q_hat = toks("what is the capital-of of the born-in of kalo");
        let all: Vec<String> = q.iter().chain(&q_hat).cloned().collect();
        assert!(collision_free(&all));
        let got: f64 = cosine(&embed(&q, DEFAULT_DIM), &embed(&q_hat, DEFAULT_DIM));
        assert_abs_diff_eq!(got, bag_cosine(&q, &q_hat), epsilon = 1e-12);
    }

    #[test]
    fn majority_cases() {
        let x = toks("x");
        let y = toks("y");
        let z = toks("z");
        let r: Vec<f64> = majority_vote_reward(&[x.clone(), x.clone(), x.clone(), y.clone(), z.clone()]);
        assert_eq!(r, [1.0, 1.0, 1.0, 0.0, 0.0]);
        let r: Vec<f64> = majority_vote_reward(&[z.clone(), y.clone(), x.clone()]);
        assert_eq!(r, [0.0, 0.0, 1.0]);
        let r: Vec<f64> = majority_vote_reward(&[y.clone(), x.clone(), y.clone(), x.clone(), x.clone()]);
        assert_eq!(r, [0.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn na_gets_configured_reward() {
        let cfg = RewardConfig::default();
        let e = embed::<f64, _>(&toks("a b"), DEFAULT_DIM);
        assert_eq!(cycle_reward_from(&e, None, &cfg), 0.0);
    }
}
