use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    action_distribution, candidate_actions, trajectory_loglik, Action, AgentState, Decision,
    FeatureMap, Observation, PolicyParams, QuestionView, Step, Trajectory,
};
use crate::scalar::Scalar;
use crate::world::{retrieve, KnowledgeBase, Question, DEFAULT_TOP_K};

/// Maximum number of actions per episode, final response included.
pub const DEFAULT_BUDGET: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub budget: usize,
    pub top_k: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl RolloutConfig {
    pub fn feature_map(&self) -> FeatureMap {
        FeatureMap::new(self.budget)
    }
}

fn sample_index<R: Rng, T: Scalar>(probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples one episode. After `budget - 1` searches the final response is
/// forced (recorded as a single-candidate decision).
pub fn rollout<T: Scalar, R: Rng>(
    params: &PolicyParams<T>,
    kb: &KnowledgeBase,
    question: &Question,
    config: &RolloutConfig,
    rng: &mut R,
) -> Trajectory {
    assert!(config.budget >= 1, "action budget must be at least 1");
    let view = QuestionView::new(kb, question);
    let map = config.feature_map();
    let mut steps: Vec<Step> = Vec::new();
    let mut decisions: Vec<Decision> = Vec::new();

    loop {
        let state = AgentState::new(&steps);
        let mut candidates = candidate_actions(&state, &view, &map);
        let forced = steps.len() + 1 >= config.budget;
        if forced {
            candidates.retain(|c| c.action.is_final());
        }
        let chosen = if candidates.len() == 1 {
            0
        } else {
            sample_index(&action_distribution(params, &candidates), rng)
        };
        let action = candidates[chosen].action.clone();
        decisions.push(Decision { candidates, chosen });
        match action {
            Action::Search { ref query } => {
                let snippets = retrieve(kb, query, config.top_k);
                steps.push(Step {
                    action,
                    observation: Some(Observation { snippets }),
                });
            }
            Action::Final { .. } => {
                steps.push(Step {
                    action,
                    observation: None,
                });
                break;
            }
        }
    }

    let mut traj = Trajectory {
        question_id: question.id,
        steps,
        decisions,
        behavior_loglik: 0.0,
    };
    traj.behavior_loglik = trajectory_loglik(params, &traj).as_f64();
    traj
}
