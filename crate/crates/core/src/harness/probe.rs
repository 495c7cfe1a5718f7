//! Leakage probe: a policy that learns nothing and copies the question.
//!
//! The copy policy issues the question verbatim as its only search, is served
//! distractor facts only, and answers by repeating the question. Without
//! masking, a lexical reconstructor rewards it for the copy alone.

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Setup};
use crate::agent::Trajectory;
use crate::bottleneck::BottleneckMode;
use crate::error::Result;
use crate::reconstruct::ReconstructorKind;
use crate::reward::{RewardChannel, RewardConfig, RewardPipeline};
use crate::world::scenario::{ScriptedPlan, ScriptedStep};
use crate::world::{retrieve_from, GoldAudit, KnowledgeBase, Question};

/// Mean reward and per-trajectory extremes under one (mode, reconstructor) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub mode: BottleneckMode,
    pub reconstructor: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub trajectories: usize,
    /// Observed snippets that are main (non-distractor) facts; 0 by construction.
    pub useful_snippets: usize,
    pub unmasked_lexical: ProbeScore,
    pub masked_lexical: ProbeScore,
    pub masked_oracle: ProbeScore,
    /// `unmasked_lexical.mean − masked_lexical.mean`.
    pub gap: f64,
}

/// The copy policy's trajectory for `question`.
pub fn copy_policy_trajectory(kb: &KnowledgeBase, question: &Question, top_k: usize) -> Trajectory {
    let snippets = retrieve_from(kb, &question.tokens, top_k, |id| kb.is_distractor(id));
    let plan = ScriptedPlan {
        steps: vec![ScriptedStep {
            query: question.tokens.clone(),
            snippets,
        }],
        final_response: question.tokens.clone(),
    };
    Trajectory::scripted(question.id, &plan)
}

fn score(
    kb: &KnowledgeBase,
    questions: &[Question],
    trajs: &[Trajectory],
    mode: BottleneckMode,
    reconstructor: ReconstructorKind,
) -> Result<ProbeScore> {
    let label = reconstructor.label().to_string();
    let pipeline = RewardPipeline::new(
        kb,
        RewardConfig {
            channel: RewardChannel::Cycle,
            mode,
            reconstructor,
            ..RewardConfig::default()
        },
    )?;
    let audit = GoldAudit::default();
    let mut rewards = Vec::with_capacity(trajs.len());
    for (q, t) in questions.iter().zip(trajs) {
        rewards.extend(pipeline.score_group::<f64>(kb, q, &[t], &audit)?.rewards);
    }
    let n = rewards.len().max(1) as f64;
    Ok(ProbeScore {
        mode,
        reconstructor: label,
        mean: rewards.iter().sum::<f64>() / n,
        min: rewards.iter().copied().fold(f64::INFINITY, f64::min),
        max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Scores the copy policy on every generated question under
/// (full-with-response, lexical), (masked, lexical) and (masked, oracle).
pub fn run_leakage_probe(config: &ExperimentConfig) -> Result<LeakageReport> {
    config.validate()?;
    let setup = Setup::new(config)?;
    let kb = &setup.kb;
    let questions: Vec<Question> = setup.train.iter().chain(&setup.heldout).cloned().collect();
    let trajs: Vec<Trajectory> = questions
        .iter()
        .map(|q| copy_policy_trajectory(kb, q, config.top_k))
        .collect();
    let useful_snippets = trajs
        .iter()
        .flat_map(|t| &t.steps)
        .filter_map(|s| s.observation.as_ref())
        .flat_map(|o| &o.snippets)
        .filter(|s| !kb.is_distractor(s.fact_id))
        .count();

    let unmasked_lexical = score(kb, &questions, &trajs, BottleneckMode::FullWithResponse, ReconstructorKind::Lexical)?;
    let masked_lexical = score(kb, &questions, &trajs, BottleneckMode::MaskedActionsObs, ReconstructorKind::Lexical)?;
    let masked_oracle = score(kb, &questions, &trajs, BottleneckMode::MaskedActionsObs, ReconstructorKind::Oracle)?;
    Ok(LeakageReport {
        trajectories: trajs.len(),
        useful_snippets,
        gap: unmasked_lexical.mean - masked_lexical.mean,
        unmasked_lexical,
        masked_lexical,
        masked_oracle,
    })
}
