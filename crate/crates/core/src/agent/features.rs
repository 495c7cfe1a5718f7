//! Candidate actions and their binary feature vectors.
//!
//! Feature indices are fixed:
//!
//! | index | fires when |
//! |-------|-----------|
//! | 0 | search; its relation appears in the question (the search bias) |
//! | 1 | search entity is the question anchor |
//! | 2 | search entity appears in the last observation |
//! | 3 | search entity appears in an earlier observation |
//! | 4 | search repeats a prior query |
//! | 5 | final response (the final bias) |
//! | 6 | search relation is the next unsearched hop of the question |
//! | 7 | search entity is the chain frontier: the anchor before any search, then the tail the last query resolved to |
//! | 8 | final response after every question relation was searched |
//! | 9 | final response after searches that each followed the chain frontier, the last one resolved |
//! | 10 + t - 1 | every candidate at action `t`, for `t = 1..=budget` |
//!
//! The action-index indicators are shared by all candidates of a state, so
//! they shift every logit equally and never change the distribution.

use serde::{Deserialize, Serialize};

use super::{Action, Step};
use crate::world::scenario::top_tail;
use crate::world::{KnowledgeBase, Question};

pub const REL_IN_QUESTION: usize = 0;
pub const ENTITY_IS_ANCHOR: usize = 1;
pub const ENTITY_FROM_LAST_OBS: usize = 2;
pub const ENTITY_FROM_EARLIER_OBS: usize = 3;
pub const REPEATS_PRIOR_QUERY: usize = 4;
pub const IS_FINAL: usize = 5;
pub const REL_IS_NEXT_HOP: usize = 6;
pub const ENTITY_IS_FRONTIER: usize = 7;
pub const FINAL_CHAIN_COVERED: usize = 8;
pub const FINAL_AFTER_RESOLVED_CHAIN: usize = 9;
const HOP_INDEX: usize = 10;

/// Layout of the feature space for a given action budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureMap {
    pub budget: usize,
}

impl FeatureMap {
    pub fn new(budget: usize) -> Self {
        Self { budget }
    }

    pub fn dim(&self) -> usize {
        HOP_INDEX + self.budget
    }

    /// Index of the "action `t`" indicator (1-based `t`).
    pub fn hop_at(&self, t: usize) -> usize {
        debug_assert!((1..=self.budget).contains(&t));
        HOP_INDEX + t - 1
    }
}

/// What the agent can see of a question: its anchor and relations, by surface.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuestionView {
    pub anchor: String,
    /// Relation surfaces in hop order (innermost first).
    pub relations: Vec<String>,
}

impl QuestionView {
    pub fn new(kb: &KnowledgeBase, question: &Question) -> Self {
        Self {
            anchor: kb.entity(question.anchor).surface.clone(),
            relations: question
                .relation_surfaces(kb)
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

/// The agent's position in an episode: the history so far.
#[derive(Clone, Copy, Debug)]
pub struct AgentState<'a> {
    pub history: &'a [Step],
    /// Number of searches already issued.
    pub hop_index: usize,
}

impl<'a> AgentState<'a> {
    pub fn new(history: &'a [Step]) -> Self {
        Self {
            history,
            hop_index: history.len(),
        }
    }
}

/// An action the policy may pick together with its sorted feature indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateAction {
    pub action: Action,
    pub features: Vec<usize>,
}

fn push_unique(list: &mut Vec<String>, token: &str) {
    if !list.iter().any(|t| t == token) {
        list.push(token.to_string());
    }
}

/// Where the chain stands after `history`: the current frontier entity (the
/// anchor before any search, then whatever the last query resolved to) and
/// whether every search so far was issued on the frontier of its time.
fn chain_position(history: &[Step], anchor: &str) -> (Option<String>, bool) {
    let mut frontier = Some(anchor.to_string());
    let mut on_chain = true;
    for step in history {
        let (Action::Search { query }, Some(obs)) = (&step.action, &step.observation) else {
            continue;
        };
        let [rel, entity] = query.as_slice() else {
            on_chain = false;
            frontier = None;
            continue;
        };
        on_chain &= frontier.as_deref() == Some(entity.as_str());
        frontier = obs
            .snippets
            .iter()
            .find(|s| s.text[0] == *entity && s.text[1] == *rel)
            .map(|s| s.text[2].clone());
    }
    (frontier, on_chain)
}

/// Feature indices of `action` in `state`.
pub fn features(
    state: &AgentState<'_>,
    view: &QuestionView,
    map: &FeatureMap,
    action: &Action,
) -> Vec<usize> {
    let observations: Vec<&[crate::world::Snippet]> = state
        .history
        .iter()
        .filter_map(|s| s.observation.as_ref().map(|o| o.snippets.as_slice()))
        .collect();
    let (frontier, on_chain) = chain_position(state.history, &view.anchor);
    let mut out = Vec::new();
    match action {
        Action::Final { .. } => {
            out.push(IS_FINAL);
            let searched: Vec<&str> = state
                .history
                .iter()
                .filter_map(|s| match &s.action {
                    Action::Search { query } => query.first().map(String::as_str),
                    _ => None,
                })
                .collect();
            if view.relations.iter().all(|r| searched.contains(&r.as_str())) {
                out.push(FINAL_CHAIN_COVERED);
            }
            if !searched.is_empty() && on_chain && frontier.is_some() {
                out.push(FINAL_AFTER_RESOLVED_CHAIN);
            }
        }
        Action::Search { query } => {
            let (rel, entity) = match query.as_slice() {
                [rel, entity] => (rel.as_str(), entity.as_str()),
                _ => ("", ""),
            };
            if view.relations.iter().any(|r| r == rel) {
                out.push(REL_IN_QUESTION);
            }
            if entity == view.anchor {
                out.push(ENTITY_IS_ANCHOR);
            }
            let mentions = |snips: &[crate::world::Snippet]| {
                snips.iter().any(|s| s.text[0] == entity || s.text[2] == entity)
            };
            if let Some((last, earlier)) = observations.split_last() {
                if mentions(last) {
                    out.push(ENTITY_FROM_LAST_OBS);
                }
                if earlier.iter().any(|o| mentions(o)) {
                    out.push(ENTITY_FROM_EARLIER_OBS);
                }
            }
            if state
                .history
                .iter()
                .any(|s| matches!(&s.action, Action::Search { query: q } if q == query))
            {
                out.push(REPEATS_PRIOR_QUERY);
            }
            if view.relations.get(state.hop_index).is_some_and(|r| r == rel) {
                out.push(REL_IS_NEXT_HOP);
            }
            if frontier.as_deref() == Some(entity) {
                out.push(ENTITY_IS_FRONTIER);
            }
        }
    }
    let t = state.hop_index + 1;
    if t <= map.budget {
        out.push(map.hop_at(t));
    }
    out.sort_unstable();
    out
}

/// Every `<relation> <entity>` query over question relations and visible
/// entities (anchor plus anything observed so far), then one final response
/// naming the tail of the last observation's best snippet.
pub fn candidate_actions(
    state: &AgentState<'_>,
    view: &QuestionView,
    map: &FeatureMap,
) -> Vec<CandidateAction> {
    let mut entities = vec![view.anchor.clone()];
    for step in state.history {
        if let Some(obs) = &step.observation {
            for s in &obs.snippets {
                push_unique(&mut entities, &s.text[0]);
                push_unique(&mut entities, &s.text[2]);
            }
        }
    }
    let mut relations: Vec<String> = Vec::new();
    for r in &view.relations {
        push_unique(&mut relations, r);
    }

    let mut actions: Vec<Action> = Vec::with_capacity(relations.len() * entities.len() + 1);
    for rel in &relations {
        for entity in &entities {
            actions.push(Action::Search {
                query: vec![rel.clone(), entity.clone()],
            });
        }
    }
    let last_obs = state
        .history
        .iter()
        .rev()
        .find_map(|s| s.observation.as_ref());
    actions.push(Action::Final {
        response: last_obs.map(|o| top_tail(&o.snippets)).unwrap_or_default(),
    });

    actions
        .into_iter()
        .map(|action| CandidateAction {
            features: features(state, view, map, &action),
            action,
        })
        .collect()
}
