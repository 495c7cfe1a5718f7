//! Scripted trajectories for the two failure modes a cycle reward must
//! penalize: lookalike evidence that misses the question's entity constraint
//! (information void) and stopping before the last hop (shallow depth).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{enumerate_chains, retrieve, retrieve_from, KnowledgeBase, Question, Snippet};
use crate::error::{Error, Result};
use crate::rng;

/// Question id used for scenario questions, outside any generated question set.
pub const SCENARIO_QUESTION_ID: usize = 1 << 40;

/// One scripted search: the query issued and the observation served for it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedStep {
    pub query: Vec<String>,
    pub snippets: Vec<Snippet>,
}

/// A forced-retrieval plan: searches with fixed observations, then a final response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedPlan {
    pub steps: Vec<ScriptedStep>,
    pub final_response: Vec<String>,
}

impl ScriptedPlan {
    pub fn num_searches(&self) -> usize {
        self.steps.len()
    }
}

/// A failure-mode question with its scripted trajectory and the matched
/// trajectory that follows the full chain correctly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub question: Question,
    pub plan: ScriptedPlan,
    pub repaired: ScriptedPlan,
}

/// Tail of the best-ranked snippet, the agent's answer heuristic.
pub fn top_tail(snippets: &[Snippet]) -> Vec<String> {
    snippets
        .first()
        .map(|s| vec![s.text[2].clone()])
        .unwrap_or_default()
}

fn query(relation: &str, entity: &str) -> Vec<String> {
    vec![relation.to_string(), entity.to_string()]
}

/// The reference policy: for each hop, search `<relation> <current entity>`
/// and move to that fact's tail.
pub fn perfect_plan(kb: &KnowledgeBase, question: &Question, k: usize) -> ScriptedPlan {
    let mut entity = question.anchor;
    let mut steps = Vec::with_capacity(question.hops);
    for &rel in &question.chain {
        let q = query(&kb.relation(rel).surface, &kb.entity(entity).surface);
        let snippets = retrieve(kb, &q, k);
        entity = kb
            .follow(entity, rel)
            .expect("question chains are followable by construction");
        steps.push(ScriptedStep { query: q, snippets });
    }
    let final_response = steps
        .last()
        .map(|s| top_tail(&s.snippets))
        .unwrap_or_default();
    ScriptedPlan {
        steps,
        final_response,
    }
}

/// Two-hop chains over the main facts, in a seed-determined order.
fn shuffled_two_hop_chains(kb: &KnowledgeBase, seed: u64) -> Vec<(usize, Vec<usize>)> {
    let mut chains = enumerate_chains(kb, 2);
    chains.shuffle(&mut rng::stream(seed, &[rng::label::SCENARIO]));
    chains
}

/// Information void: the first search targets the right relation and anchor,
/// but the engine serves facts about a lookalike entity of a different type,
/// so nothing observed satisfies the first hop's typed constraint.
pub fn gen_info_void_scenario(kb: &KnowledgeBase, seed: u64, k: usize) -> Result<Scenario> {
    let lookalikes = kb.lookalike_pairs();
    if lookalikes.is_empty() {
        return Err(Error::Scenario(
            "no pair of lexically similar entity surfaces".into(),
        ));
    }
    for (anchor, chain) in shuffled_two_hop_chains(kb, seed) {
        let target = kb.entity(anchor);
        let first_rel = chain[0];
        for &(_, lookalike) in lookalikes.iter().filter(|(a, _)| *a == anchor) {
            let twin = kb.entity(lookalike);
            if twin.tag == target.tag {
                continue;
            }
            let lure = query(&kb.relation(first_rel).surface, &twin.surface);
            // Facts mentioning the lookalike, minus anything that would
            // accidentally satisfy the first hop.
            let served = retrieve_from(kb, &lure, k, |id| {
                let f = kb.fact_by_id(id).expect("admitted ids exist");
                let mentions_twin = f.head == lookalike || f.tail == lookalike;
                let satisfies_hop = f.relation == first_rel && kb.entity(f.head).tag == target.tag;
                mentions_twin && !satisfies_hop
            });
            if served.is_empty() {
                continue;
            }
            let question = Question::from_chain(kb, SCENARIO_QUESTION_ID, anchor, chain.clone())?;
            let mut steps = vec![ScriptedStep {
                query: query(&kb.relation(first_rel).surface, &target.surface),
                snippets: served,
            }];
            // The agent carries on from whatever the lookalike evidence suggested.
            let next = steps[0].snippets[0].text[2].clone();
            let second = query(&kb.relation(chain[1]).surface, &next);
            let snippets = retrieve(kb, &second, k);
            steps.push(ScriptedStep {
                query: second,
                snippets,
            });
            let final_response = top_tail(&steps[1].snippets);
            let repaired = perfect_plan(kb, &question, k);
            return Ok(Scenario {
                question,
                plan: ScriptedPlan {
                    steps,
                    final_response,
                },
                repaired,
            });
        }
    }
    Err(Error::Scenario(
        "no 2-hop anchor has a differently typed lookalike with observable facts".into(),
    ))
}

/// Shallow depth: a 2-hop question answered after searching only the first hop.
pub fn gen_shallow_depth_scenario(kb: &KnowledgeBase, seed: u64, k: usize) -> Result<Scenario> {
    let (anchor, chain) = shuffled_two_hop_chains(kb, seed)
        .into_iter()
        .next()
        .ok_or_else(|| Error::Scenario("no 2-hop chain in the fact base".into()))?;
    let question = Question::from_chain(kb, SCENARIO_QUESTION_ID, anchor, chain)?;
    let repaired = perfect_plan(kb, &question, k);
    let first = repaired.steps[0].clone();
    let final_response = top_tail(&first.snippets);
    Ok(Scenario {
        question,
        plan: ScriptedPlan {
            steps: vec![first],
            final_response,
        },
        repaired,
    })
}
