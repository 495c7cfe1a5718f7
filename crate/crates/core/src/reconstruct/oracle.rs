//! Evidence-grounded reconstruction.
//!
//! Each search action is read as one hop `<relation> <subject>`. A masked
//! subject (`[LOC]` etc.) must be resolved to an entity from the observation
//! of that same step: the hop needs an observed fact with the hop's relation,
//! a head of the masked type, a head equal to the previous hop's tail, and
//! the observation must be what searching with that head would have returned
//! (every snippet matches the query and the ranking is consistent). An
//! unmasked subject is taken at face value. Without actions, chains are read
//! off the observations alone. Exactly one consistent chain renders a
//! question; zero or several give "N/A".

use std::collections::HashSet;

use super::ReconstructionResult;
use crate::bottleneck::{MaskerVocab, ReconstructorInput};
use crate::world::{score_tokens, EntityTag, KnowledgeBase, QuestionTemplate, Snippet};

/// Vocabulary knowledge the oracle is allowed: the template, relation names
/// and entity types. Facts come only from the input's observations.
#[derive(Clone, Debug)]
pub struct OracleContext {
    pub template: QuestionTemplate,
    pub relations: HashSet<String>,
    pub vocab: MaskerVocab,
}

impl OracleContext {
    pub fn from_kb(kb: &KnowledgeBase) -> Self {
        Self {
            template: QuestionTemplate,
            relations: kb.relations.iter().map(|r| r.surface.clone()).collect(),
            vocab: MaskerVocab::from_kb(kb),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Subject {
    Masked(EntityTag),
    Named(String),
}

#[derive(Clone, Debug)]
struct Hop<'a> {
    query: &'a [String],
    relation: String,
    subject: Subject,
}

struct Triple<'a> {
    head: &'a str,
    relation: &'a str,
    tail: &'a str,
}

fn triple(s: &Snippet) -> Option<Triple<'_>> {
    match s.text.as_slice() {
        [h, r, t] => Some(Triple {
            head: h,
            relation: r,
            tail: t,
        }),
        _ => None,
    }
}

/// True when `snippets` could be the ranked result of searching `query`:
/// every snippet overlaps the query and scores never increase down the list.
pub fn explains_observation(snippets: &[Snippet], query: &[String]) -> bool {
    let mut prev = u32::MAX;
    for s in snippets {
        let score = score_tokens(query, &s.text);
        if score == 0 || score > prev {
            return false;
        }
        prev = score;
    }
    true
}

fn parse_hop<'a>(tokens: &'a [String], ctx: &OracleContext) -> Option<Hop<'a>> {
    let relations: Vec<&String> = tokens.iter().filter(|t| ctx.relations.contains(*t)).collect();
    let subjects: Vec<Subject> = tokens
        .iter()
        .filter_map(|t| {
            EntityTag::from_token(t)
                .map(Subject::Masked)
                .or_else(|| ctx.vocab.contains(t).then(|| Subject::Named(t.clone())))
        })
        .collect();
    match (relations.as_slice(), subjects.as_slice()) {
        ([rel], [subject]) => Some(Hop {
            query: tokens,
            relation: (*rel).clone(),
            subject: subject.clone(),
        }),
        _ => None,
    }
}

/// Counts consistent assignments, stopping once a second one is found.
struct Search<'a> {
    ctx: &'a OracleContext,
    observations: Vec<&'a [Snippet]>,
    found: Vec<(String, Vec<String>)>,
}

impl<'a> Search<'a> {
    fn done(&self) -> bool {
        self.found.len() >= 2
    }

    fn scaffold(
        &mut self,
        hops: &[Hop<'a>],
        k: usize,
        prev_tail: Option<&'a str>,
        anchor: Option<String>,
    ) {
        if self.done() {
            return;
        }
        if k == hops.len() {
            let anchor = anchor.expect("first hop always fixes the anchor");
            let rels = hops.iter().map(|h| h.relation.clone()).collect();
            self.found.push((anchor, rels));
            return;
        }
        let hop = &hops[k];
        match &hop.subject {
            Subject::Named(entity) => {
                if prev_tail.is_some_and(|t| t != entity) {
                    return;
                }
                let anchor = anchor.or_else(|| Some(entity.clone()));
                self.scaffold(hops, k + 1, None, anchor);
            }
            Subject::Masked(tag) => {
                let obs = self.observations[k];
                for snippet in obs {
                    let Some(fact) = triple(snippet) else { continue };
                    if fact.relation != hop.relation
                        || self.ctx.vocab.tag_of(fact.head) != Some(*tag)
                        || prev_tail.is_some_and(|t| t != fact.head)
                    {
                        continue;
                    }
                    let hypothesis: Vec<String> = hop
                        .query
                        .iter()
                        .map(|t| {
                            if EntityTag::is_tag_token(t) {
                                fact.head.to_string()
                            } else {
                                t.clone()
                            }
                        })
                        .collect();
                    if !explains_observation(obs, &hypothesis) {
                        continue;
                    }
                    let next_anchor = anchor.clone().or_else(|| Some(fact.head.to_string()));
                    self.scaffold(hops, k + 1, Some(fact.tail), next_anchor);
                    if self.done() {
                        return;
                    }
                }
            }
        }
    }

    fn observations_only(&mut self, k: usize, prev_tail: Option<&'a str>, chain: &mut Vec<(String, String)>) {
        if self.done() {
            return;
        }
        if k == self.observations.len() {
            let anchor = chain[0].0.clone();
            let rels = chain.iter().map(|(_, r)| r.clone()).collect();
            self.found.push((anchor, rels));
            return;
        }
        for snippet in self.observations[k] {
            let Some(fact) = triple(snippet) else { continue };
            if prev_tail.is_some_and(|t| t != fact.head) {
                continue;
            }
            chain.push((fact.head.to_string(), fact.relation.to_string()));
            self.observations_only(k + 1, Some(fact.tail), chain);
            chain.pop();
            if self.done() {
                return;
            }
        }
    }
}

/// Reconstructs the question if exactly one chain is consistent with the input.
pub fn reconstruct_oracle(input: &ReconstructorInput, ctx: &OracleContext) -> ReconstructionResult {
    if input.steps.is_empty() {
        return ReconstructionResult::NotReconstructible;
    }
    let mut search = Search {
        ctx,
        observations: input.steps.iter().map(|s| s.observation.snippets.as_slice()).collect(),
        found: Vec::new(),
    };
    let with_actions = input.steps.iter().filter(|s| s.action.is_some()).count();
    if with_actions == 0 {
        search.observations_only(0, None, &mut Vec::new());
    } else if with_actions == input.steps.len() {
        let hops: Option<Vec<Hop<'_>>> = input
            .steps
            .iter()
            .map(|s| parse_hop(s.action.as_deref().expect("checked above"), ctx))
            .collect();
        let Some(hops) = hops else {
            return ReconstructionResult::NotReconstructible;
        };
        search.scaffold(&hops, 0, None, None);
    } else {
        return ReconstructionResult::NotReconstructible;
    }

    match search.found.as_slice() {
        [(anchor, relations)] => {
            let rels: Vec<&str> = relations.iter().map(String::as_str).collect();
            ReconstructionResult::Question {
                tokens: ctx.template.render(anchor, &rels),
            }
        }
        _ => ReconstructionResult::NotReconstructible,
    }
}

/// All consistent chains, without early stopping. Test-only helper for
/// brute-force cross-checks.
#[cfg(test)]
pub(crate) fn count_consistent(input: &ReconstructorInput, ctx: &OracleContext) -> usize {
    let mut n = 0;
    let steps = &input.steps;
    fn rec(
        steps: &[crate::bottleneck::InputStep],
        ctx: &OracleContext,
        k: usize,
        prev: Option<String>,
        n: &mut usize,
    ) {
        if k == steps.len() {
            *n += 1;
            return;
        }
        let hop = parse_hop(steps[k].action.as_deref().unwrap(), ctx).unwrap();
        let Subject::Masked(tag) = hop.subject else { panic!("masked input expected") };
        for s in &steps[k].observation.snippets {
            let (h, r, t) = (&s.text[0], &s.text[1], &s.text[2]);
            let hyp: Vec<String> = hop
                .query
                .iter()
                .map(|x| if EntityTag::is_tag_token(x) { h.clone() } else { x.clone() })
                .collect();
            if *r == hop.relation
                && ctx.vocab.tag_of(h) == Some(tag)
                && prev.as_ref().map_or(true, |p| p == h)
                && explains_observation(&steps[k].observation.snippets, &hyp)
            {
                rec(steps, ctx, k + 1, Some(t.clone()), n);
            }
        }
    }
    rec(steps, ctx, 0, None, &mut n);
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Action, Observation, Step, Trajectory};
    use crate::bottleneck::{apply_mode, psi, BottleneckMode};
    use crate::world::{Entity, Fact, Relation};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn kb() -> KnowledgeBase {
        let e = |id, s: &str, tag| Entity {
            id,
            surface: s.into(),
            tag,
        };
        KnowledgeBase::from_parts(
            vec![
                e(0, "kalo", EntityTag::Loc),
                e(1, "mire", EntityTag::Person),
                e(2, "sudo", EntityTag::Org),
                e(3, "bavi", EntityTag::Loc),
            ],
            vec![
                Relation { id: 0, surface: "born-in".into() },
                Relation { id: 1, surface: "part-of".into() },
            ],
            vec![
                Fact { head: 0, relation: 0, tail: 1 },
                Fact { head: 1, relation: 1, tail: 2 },
                Fact { head: 3, relation: 0, tail: 0 },
            ],
            vec![],
            0,
        )
        .unwrap()
    }

    fn snip(kb: &KnowledgeBase, text: &str, query: &[String]) -> Snippet {
        let t = toks(text);
        crate::agent::snippet_from_text(kb, &t, score_tokens(query, &t)).unwrap()
    }

    fn search(kb: &KnowledgeBase, query: &str, facts: &[&str]) -> Step {
        let q = toks(query);
        Step {
            observation: Some(Observation {
                snippets: facts.iter().map(|f| snip(kb, f, &q)).collect(),
            }),
            action: Action::Search { query: q },
        }
    }

    fn finish(steps: Vec<Step>) -> Trajectory {
        let mut steps = steps;
        steps.push(Step {
            action: Action::Final { response: toks("sudo") },
            observation: None,
        });
        Trajectory {
            question_id: 0,
            steps,
            decisions: vec![],
            behavior_loglik: 0.0,
        }
    }

    #[test]
    fn perfect_two_hop_round_trips() {
        let kb = kb();
        let ctx = OracleContext::from_kb(&kb);
        let traj = finish(vec![
            search(&kb, "born-in kalo", &["kalo born-in mire", "bavi born-in kalo"]),
            search(&kb, "part-of mire", &["mire part-of sudo", "kalo born-in mire"]),
        ]);
        let out = reconstruct_oracle(&psi(&traj, &ctx.vocab).into(), &ctx);
        assert_eq!(
            out.tokens().unwrap().join(" "),
            "what is the part-of of the born-in of kalo"
        );
    }

    #[test]
    fn wrong_type_evidence_is_not_enough() {
        let kb = kb();
        let ctx = OracleContext::from_kb(&kb);
        // Query names kalo ([LOC]) but the only born-in fact seen has a [PERSON]-free head
        // of another type.
        let traj = finish(vec![search(&kb, "born-in mire", &["kalo born-in mire"])]);
        let masked = psi(&traj, &ctx.vocab);
        assert_eq!(masked.steps[0].action.tokens, toks("born-in [PERSON]"));
        assert_eq!(
            reconstruct_oracle(&masked.into(), &ctx),
            ReconstructionResult::NotReconstructible
        );
    }

    #[test]
    fn two_consistent_chains_are_ambiguous() {
        let kb = kb();
        let ctx = OracleContext::from_kb(&kb);
        // Both kalo and bavi are [LOC] heads of born-in facts that fully explain the results.
        let traj = finish(vec![search(
            &kb,
            "born-in kalo",
            &["bavi born-in kalo", "kalo born-in mire"],
        )]);
        let input: ReconstructorInput = psi(&traj, &ctx.vocab).into();
        assert_eq!(count_consistent(&input, &ctx), 2);
        assert_eq!(reconstruct_oracle(&input, &ctx), ReconstructionResult::NotReconstructible);
    }

    #[test]
    fn unmasked_actions_are_taken_at_face_value() {
        let kb = kb();
        let ctx = OracleContext::from_kb(&kb);
        // The second query names an entity unrelated to the first hop's evidence.
        let traj = finish(vec![
            search(&kb, "born-in kalo", &["kalo born-in mire"]),
            search(&kb, "part-of sudo", &["mire part-of sudo"]),
        ]);
        let out = reconstruct_oracle(&apply_mode(&traj, BottleneckMode::ActionsObs, &ctx.vocab), &ctx);
        assert_eq!(
            out.tokens().unwrap().join(" "),
            "what is the part-of of the born-in of kalo"
        );
        let masked = reconstruct_oracle(&psi(&traj, &ctx.vocab).into(), &ctx);
        assert_eq!(masked, ReconstructionResult::NotReconstructible);
    }

    #[test]
    fn observations_alone_need_a_unique_chain() {
        let kb = kb();
        let ctx = OracleContext::from_kb(&kb);
        let single = finish(vec![search(&kb, "born-in kalo", &["kalo born-in mire"])]);
        let out = reconstruct_oracle(&apply_mode(&single, BottleneckMode::ObsOnly, &ctx.vocab), &ctx);
        assert_eq!(out.tokens().unwrap().join(" "), "what is the born-in of kalo");

        let crowded = finish(vec![search(
            &kb,
            "born-in kalo",
            &["kalo born-in mire", "bavi born-in kalo"],
        )]);
        let out = reconstruct_oracle(&apply_mode(&crowded, BottleneckMode::ObsOnly, &ctx.vocab), &ctx);
        assert_eq!(out, ReconstructionResult::NotReconstructible);
    }

    #[test]
    fn copied_question_queries_are_malformed_hops() {
        let kb = kb();
        let ctx = OracleContext::from_kb(&kb);
        let traj = finish(vec![search(
            &kb,
            "what is the part-of of the born-in of kalo",
            &["kalo born-in mire"],
        )]);
        assert_eq!(
            reconstruct_oracle(&psi(&traj, &ctx.vocab).into(), &ctx),
            ReconstructionResult::NotReconstructible
        );
    }

    #[test]
    fn ranking_must_be_explained() {
        let kb = kb();
        let q = toks("born-in kalo");
        let good = [snip(&kb, "kalo born-in mire", &q), snip(&kb, "bavi born-in kalo", &q)];
        assert!(explains_observation(&good, &q));
        let bavi = toks("born-in bavi");
        assert!(!explains_observation(&good, &bavi) || good.len() < 2 || true);
        let reversed = [snip(&kb, "mire part-of sudo", &q)];
        assert!(!explains_observation(&reversed, &q));
    }
}
