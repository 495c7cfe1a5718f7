//! Search-agent model: trajectories, candidate actions, the log-linear policy
//! and the rollout loop.
//!
//! A trajectory alternates search actions with their observations and ends in
//! one final response. Every sampled action keeps the full candidate set it was
//! drawn from, so likelihoods can be recomputed under any parameters later.

mod features;
pub mod io;
mod policy;
mod rollout;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::scenario::ScriptedPlan;
use crate::world::{KnowledgeBase, Snippet};

pub use features::{candidate_actions, features, AgentState, CandidateAction, FeatureMap, QuestionView};
pub use policy::{
    action_distribution, grad_log_prob, log_prob, trajectory_grad, trajectory_loglik, PolicyParams,
    SparseVector,
};
pub use rollout::{rollout, RolloutConfig, DEFAULT_BUDGET};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Search { query: Vec<String> },
    Final { response: Vec<String> },
}

impl Action {
    pub fn tokens(&self) -> &[String] {
        match self {
            Action::Search { query } => query,
            Action::Final { response } => response,
        }
    }

    pub fn is_final(&self) -> bool {
        matches!(self, Action::Final { .. })
    }
}

/// Search results for one query.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub snippets: Vec<Snippet>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    pub observation: Option<Observation>,
}

/// The candidate set an action was sampled from and the index chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub candidates: Vec<CandidateAction>,
    pub chosen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: usize,
    pub steps: Vec<Step>,
    /// One entry per action for sampled trajectories; empty for scripted ones.
    pub decisions: Vec<Decision>,
    /// Log-likelihood of the agent's actions under the behavior policy.
    pub behavior_loglik: f64,
}

impl Trajectory {
    /// Builds the trajectory a scripted plan describes.
    pub fn scripted(question_id: usize, plan: &ScriptedPlan) -> Self {
        let mut steps: Vec<Step> = plan
            .steps
            .iter()
            .map(|s| Step {
                action: Action::Search {
                    query: s.query.clone(),
                },
                observation: Some(Observation {
                    snippets: s.snippets.clone(),
                }),
            })
            .collect();
        steps.push(Step {
            action: Action::Final {
                response: plan.final_response.clone(),
            },
            observation: None,
        });
        Self {
            question_id,
            steps,
            decisions: Vec::new(),
            behavior_loglik: 0.0,
        }
    }

    /// Number of actions, final response included.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_searches(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s.action, Action::Search { .. }))
            .count()
    }

    pub fn final_response(&self) -> Option<&[String]> {
        match self.steps.last().map(|s| &s.action) {
            Some(Action::Final { response }) => Some(response),
            _ => None,
        }
    }

    /// Checks the `(a_1, o_1, ..., a_{T-1}, o_{T-1}, a_T)` shape.
    pub fn validate(&self) -> Result<()> {
        let Some((last, searches)) = self.steps.split_last() else {
            return Err(Error::Contract("trajectory has no actions".into()));
        };
        for (i, s) in searches.iter().enumerate() {
            match (&s.action, &s.observation) {
                (Action::Search { query }, Some(_)) if !query.is_empty() => {}
                (Action::Search { .. }, Some(_)) => {
                    return Err(Error::Contract(format!("step {i}: empty search query")))
                }
                (Action::Search { .. }, None) => {
                    return Err(Error::Contract(format!("step {i}: search without observation")))
                }
                (Action::Final { .. }, _) => {
                    return Err(Error::Contract(format!("step {i}: final response before the end")))
                }
            }
        }
        match (&last.action, &last.observation) {
            (Action::Final { .. }, None) => {}
            _ => return Err(Error::Contract("trajectory must end in a final response".into())),
        }
        if !self.decisions.is_empty() {
            if self.decisions.len() != self.steps.len() {
                return Err(Error::Contract("one decision per action expected".into()));
            }
            for (i, (d, s)) in self.decisions.iter().zip(&self.steps).enumerate() {
                match d.candidates.get(d.chosen) {
                    Some(c) if c.action == s.action => {}
                    _ => {
                        return Err(Error::Contract(format!(
                            "step {i}: recorded choice does not match the action"
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rebuilds a snippet from its text by looking surfaces up in the world.
pub fn snippet_from_text(kb: &KnowledgeBase, text: &[String], score: u32) -> Result<Snippet> {
    let [h, r, t] = text else {
        return Err(Error::Contract(format!("snippet text {text:?} is not a triple")));
    };
    let lookup = || -> Option<Snippet> {
        let fact = crate::world::Fact {
            head: kb.entity_by_surface(h)?.id,
            relation: kb.relation_by_surface(r)?.id,
            tail: kb.entity_by_surface(t)?.id,
        };
        Some(Snippet {
            fact_id: kb.fact_id(&fact)?,
            fact,
            text: text.to_vec(),
            score,
        })
    };
    lookup().ok_or_else(|| Error::Contract(format!("snippet {text:?} is not a fact of this world")))
}
