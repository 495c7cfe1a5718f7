//! Synthetic knowledge-graph environment.
//!
//! A world is a set of single-token entities with a fixed type tag, a set of
//! relations and a functional fact base: every `(head, relation)` pair has at
//! most one tail, so following a relation chain from an anchor always lands on
//! a unique answer. Questions are rendered from relation chains through fixed
//! templates, and retrieval is exact token overlap against fact renderings.

mod gold;
pub mod io;
mod retrieve;
pub mod scenario;
mod template;

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use gold::{GoldAudit, GoldPurpose};
pub use retrieve::{retrieve, retrieve_from, score_tokens, Snippet, DEFAULT_TOP_K};
pub use template::{QuestionTemplate, TEMPLATE_WORDS};

/// Entity type tags. The token forms double as the masker's replacement tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityTag {
    Person,
    Org,
    Loc,
    Misc,
}

impl EntityTag {
    pub const ALL: [EntityTag; 4] = [
        EntityTag::Person,
        EntityTag::Org,
        EntityTag::Loc,
        EntityTag::Misc,
    ];

    pub fn token(self) -> &'static str {
        match self {
            EntityTag::Person => "[PERSON]",
            EntityTag::Org => "[ORG]",
            EntityTag::Loc => "[LOC]",
            EntityTag::Misc => "[MISC]",
        }
    }

    pub fn from_token(token: &str) -> Option<EntityTag> {
        Self::ALL.into_iter().find(|t| t.token() == token)
    }

    pub fn is_tag_token(token: &str) -> bool {
        Self::from_token(token).is_some()
    }
}

impl fmt::Display for EntityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub surface: String,
    pub tag: EntityTag,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: usize,
    pub surface: String,
}

/// A `(head, relation, tail)` triple over entity and relation ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_facts: usize,
    pub n_distractors: usize,
    pub hops: usize,
    pub n_questions: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_entities: 50,
            n_relations: 6,
            n_facts: 150,
            n_distractors: 30,
            hops: 2,
            n_questions: 240,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_entities", self.n_entities),
            ("n_relations", self.n_relations),
            ("n_facts", self.n_facts),
            ("hops", self.hops),
            ("n_questions", self.n_questions),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_entities < 2 {
            return Err(Error::Config(
                "n_entities must be at least 2 (facts never loop on one entity)".into(),
            ));
        }
        if self.n_relations > RELATION_SURFACES.len() + 1000 {
            return Err(Error::Config("n_relations too large".into()));
        }
        // Functionality leaves one tail per (head, relation) slot.
        let slots = self.n_entities * self.n_relations;
        let wanted = self.n_facts + self.n_distractors;
        if wanted > slots {
            return Err(Error::Config(format!(
                "{wanted} facts requested but only {slots} (head, relation) slots exist \
                 under functional relations"
            )));
        }
        Ok(())
    }
}

const RELATION_SURFACES: [&str; 12] = [
    "directed-by",
    "born-in",
    "located-in",
    "founded-by",
    "member-of",
    "capital-of",
    "spouse-of",
    "author-of",
    "part-of",
    "owned-by",
    "child-of",
    "employer-of",
];

const CONSONANTS: &[u8] = b"bdfgklmprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Every fifth entity is a near-duplicate of its predecessor (one extra letter)
/// with a different tag, so lookalike retrieval failures can be staged.
const TWIN_PERIOD: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
    pub facts: Vec<Fact>,
    pub distractors: Vec<Fact>,
    pub seed: u64,
    #[serde(skip)]
    index: Index,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Index {
    tail_of: HashMap<(usize, usize), usize>,
    entity_by_surface: HashMap<String, usize>,
    relation_by_surface: HashMap<String, usize>,
}

impl KnowledgeBase {
    /// Assembles a knowledge base from parts, checking the structural invariants.
    pub fn from_parts(
        entities: Vec<Entity>,
        relations: Vec<Relation>,
        facts: Vec<Fact>,
        distractors: Vec<Fact>,
        seed: u64,
    ) -> Result<Self> {
        let mut kb = Self {
            entities,
            relations,
            facts,
            distractors,
            seed,
            index: Index::default(),
        };
        kb.reindex()?;
        Ok(kb)
    }

    fn reindex(&mut self) -> Result<()> {
        let mut index = Index::default();
        for (i, e) in self.entities.iter().enumerate() {
            if e.id != i {
                return Err(Error::Contract(format!("entity {} stored at {i}", e.id)));
            }
            if e.surface.split_whitespace().count() != 1 {
                return Err(Error::Contract(format!(
                    "entity surface {:?} is not a single token",
                    e.surface
                )));
            }
            if is_reserved(&e.surface) {
                return Err(Error::Contract(format!(
                    "entity surface {:?} is a reserved word",
                    e.surface
                )));
            }
            if index.entity_by_surface.insert(e.surface.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate entity surface {}", e.surface)));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            if r.id != i {
                return Err(Error::Contract(format!("relation {} stored at {i}", r.id)));
            }
            if index.entity_by_surface.contains_key(&r.surface) || is_reserved(&r.surface) {
                return Err(Error::Contract(format!(
                    "relation surface {:?} collides with another vocabulary",
                    r.surface
                )));
            }
            if index.relation_by_surface.insert(r.surface.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate relation surface {}", r.surface)));
            }
        }
        for f in self.facts.iter().chain(&self.distractors) {
            if f.head >= self.entities.len()
                || f.tail >= self.entities.len()
                || f.relation >= self.relations.len()
            {
                return Err(Error::Contract(format!("fact {f:?} references unknown ids")));
            }
            if index.tail_of.insert((f.head, f.relation), f.tail).is_some() {
                return Err(Error::Contract(format!(
                    "relation {} is not functional at head {}",
                    f.relation, f.head
                )));
            }
        }
        self.index = index;
        Ok(())
    }

    pub fn entity(&self, id: usize) -> &Entity {
        &self.entities[id]
    }

    pub fn relation(&self, id: usize) -> &Relation {
        &self.relations[id]
    }

    pub fn entity_by_surface(&self, surface: &str) -> Option<&Entity> {
        self.index
            .entity_by_surface
            .get(surface)
            .map(|&i| &self.entities[i])
    }

    pub fn relation_by_surface(&self, surface: &str) -> Option<&Relation> {
        self.index
            .relation_by_surface
            .get(surface)
            .map(|&i| &self.relations[i])
    }

    /// All facts in id order: the main facts first, then the distractors.
    pub fn all_facts(&self) -> impl Iterator<Item = (usize, &Fact)> {
        self.facts.iter().chain(&self.distractors).enumerate()
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len() + self.distractors.len()
    }

    pub fn fact_by_id(&self, id: usize) -> Option<&Fact> {
        if id < self.facts.len() {
            self.facts.get(id)
        } else {
            self.distractors.get(id - self.facts.len())
        }
    }

    pub fn is_distractor(&self, fact_id: usize) -> bool {
        fact_id >= self.facts.len() && fact_id < self.fact_count()
    }

    pub fn fact_id(&self, fact: &Fact) -> Option<usize> {
        self.all_facts().find(|(_, f)| *f == fact).map(|(i, _)| i)
    }

    /// Token rendering `head relation tail`.
    pub fn render_fact(&self, fact: &Fact) -> Vec<String> {
        vec![
            self.entity(fact.head).surface.clone(),
            self.relation(fact.relation).surface.clone(),
            self.entity(fact.tail).surface.clone(),
        ]
    }

    /// The unique tail for `(head, relation)` over main facts and distractors.
    pub fn follow(&self, head: usize, relation: usize) -> Option<usize> {
        self.index.tail_of.get(&(head, relation)).copied()
    }

    /// Follows a relation chain from `anchor`; `None` when a hop is missing.
    pub fn follow_chain(&self, anchor: usize, chain: &[usize]) -> Option<usize> {
        chain
            .iter()
            .try_fold(anchor, |entity, &rel| self.follow(entity, rel))
    }

    /// Pairs of distinct entities whose surfaces differ by a single edit.
    pub fn lookalike_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for a in &self.entities {
            for b in &self.entities {
                if a.id != b.id && strsim::levenshtein(&a.surface, &b.surface) == 1 {
                    pairs.push((a.id, b.id));
                }
            }
        }
        pairs
    }

    /// Hex SHA-256 of the canonical line-delimited serialization.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        io::write_world(self, &mut buf).expect("in-memory serialization");
        io::sha256_hex(&buf)
    }
}

fn is_reserved(token: &str) -> bool {
    TEMPLATE_WORDS.contains(&token) || EntityTag::is_tag_token(token)
}

fn random_word<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut word = String::with_capacity(syllables * 2);
    for _ in 0..syllables {
        word.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        word.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    word
}

/// Generates a world. Identical configs (including the seed) give identical worlds.
pub fn generate_world(config: &WorldConfig) -> Result<KnowledgeBase> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, &[rng::label::WORLD]);

    let mut taken: HashSet<String> = HashSet::new();
    let mut entities: Vec<Entity> = Vec::with_capacity(config.n_entities);
    for id in 0..config.n_entities {
        let twin_of = (id % TWIN_PERIOD == TWIN_PERIOD - 1).then(|| &entities[id - 1]);
        let (surface, tag) = match twin_of {
            Some(base) if !taken.contains(&format!("{}n", base.surface)) => {
                let others: Vec<EntityTag> = EntityTag::ALL
                    .into_iter()
                    .filter(|t| *t != base.tag)
                    .collect();
                (format!("{}n", base.surface), others[rng.gen_range(0..others.len())])
            }
            _ => {
                let mut word = random_word(&mut rng);
                while taken.contains(&word) || is_reserved(&word) {
                    word = random_word(&mut rng);
                }
                (word, EntityTag::ALL[rng.gen_range(0..4)])
            }
        };
        taken.insert(surface.clone());
        entities.push(Entity { id, surface, tag });
    }

    let relations: Vec<Relation> = (0..config.n_relations)
        .map(|id| Relation {
            id,
            surface: RELATION_SURFACES
                .get(id)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("related-to-{id}")),
        })
        .collect();

    let mut slots: Vec<(usize, usize)> = (0..config.n_entities)
        .flat_map(|h| (0..config.n_relations).map(move |r| (h, r)))
        .collect();
    slots.shuffle(&mut rng);
    let mut sampled = slots
        .into_iter()
        .take(config.n_facts + config.n_distractors)
        .map(|(head, relation)| {
            let mut tail = rng.gen_range(0..config.n_entities - 1);
            if tail >= head {
                tail += 1;
            }
            Fact {
                head,
                relation,
                tail,
            }
        });
    let facts: Vec<Fact> = sampled.by_ref().take(config.n_facts).collect();
    let distractors: Vec<Fact> = sampled.collect();

    KnowledgeBase::from_parts(entities, relations, facts, distractors, config.seed)
}

/// A rendered multi-hop question. The gold answer is only reachable through a
/// [`GoldAudit`], which counts every read by purpose.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: usize,
    pub tokens: Vec<String>,
    /// Relation ids, innermost hop first.
    pub chain: Vec<usize>,
    pub anchor: usize,
    answer: usize,
    pub hops: usize,
}

impl Question {
    /// Builds a question by following `chain` from `anchor` through the knowledge base.
    pub fn from_chain(kb: &KnowledgeBase, id: usize, anchor: usize, chain: Vec<usize>) -> Result<Self> {
        let answer = kb.follow_chain(anchor, &chain).ok_or_else(|| {
            Error::Generation(format!(
                "chain {chain:?} cannot be followed from entity {anchor}"
            ))
        })?;
        let relations: Vec<&str> = chain.iter().map(|&r| kb.relation(r).surface.as_str()).collect();
        let tokens = QuestionTemplate.render(&kb.entity(anchor).surface, &relations);
        Ok(Self {
            id,
            tokens,
            hops: chain.len(),
            chain,
            anchor,
            answer,
        })
    }

    /// Reads the gold answer, recording the access.
    pub fn gold_answer(&self, audit: &GoldAudit, purpose: GoldPurpose) -> usize {
        audit.record(purpose);
        self.answer
    }

    /// Relation surfaces in hop order.
    pub fn relation_surfaces<'a>(&self, kb: &'a KnowledgeBase) -> Vec<&'a str> {
        self.chain.iter().map(|&r| kb.relation(r).surface.as_str()).collect()
    }
}

/// Enumerates every simple relation chain of exactly `hops` over the main
/// facts (no repeated entity, no repeated relation).
pub fn enumerate_chains(kb: &KnowledgeBase, hops: usize) -> Vec<(usize, Vec<usize>)> {
    let mut out_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); kb.entities.len()];
    for f in &kb.facts {
        out_edges[f.head].push((f.relation, f.tail));
    }
    for edges in &mut out_edges {
        edges.sort_unstable();
    }

    fn extend(
        out_edges: &[Vec<(usize, usize)>],
        hops: usize,
        path_entities: &mut Vec<usize>,
        path_relations: &mut Vec<usize>,
        found: &mut Vec<(usize, Vec<usize>)>,
    ) {
        if path_relations.len() == hops {
            found.push((path_entities[0], path_relations.clone()));
            return;
        }
        let current = *path_entities.last().expect("path starts at the anchor");
        for &(rel, tail) in &out_edges[current] {
            if path_entities.contains(&tail) || path_relations.contains(&rel) {
                continue;
            }
            path_entities.push(tail);
            path_relations.push(rel);
            extend(out_edges, hops, path_entities, path_relations, found);
            path_entities.pop();
            path_relations.pop();
        }
    }

    let mut found = Vec::new();
    for anchor in 0..kb.entities.len() {
        extend(&out_edges, hops, &mut vec![anchor], &mut Vec::new(), &mut found);
    }
    found
}

/// Samples `config.n_questions` distinct questions with `config.hops` hops.
pub fn generate_questions(kb: &KnowledgeBase, config: &WorldConfig) -> Result<Vec<Question>> {
    config.validate()?;
    let mut chains = enumerate_chains(kb, config.hops);
    if chains.is_empty() {
        return Err(Error::Generation(format!(
            "no {}-hop chain exists in the fact base",
            config.hops
        )));
    }
    if chains.len() < config.n_questions {
        return Err(Error::Generation(format!(
            "{} questions requested but only {} distinct {}-hop chains exist",
            config.n_questions,
            chains.len(),
            config.hops
        )));
    }
    let mut rng = rng::stream(config.seed, &[rng::label::QUESTIONS]);
    chains.shuffle(&mut rng);
    chains
        .into_iter()
        .take(config.n_questions)
        .enumerate()
        .map(|(id, (anchor, chain))| Question::from_chain(kb, id, anchor, chain))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> WorldConfig {
        WorldConfig {
            n_entities: 2,
            n_relations: 1,
            n_facts: 1,
            n_distractors: 0,
            hops: 1,
            n_questions: 1,
            seed: 7,
        }
    }

    #[test]
    fn forced_counts_give_one_fact() {
        let kb = generate_world(&tiny_config()).unwrap();
        assert_eq!(kb.facts.len(), 1);
        assert!(kb.distractors.is_empty());
    }

    #[test]
    fn infeasible_counts_are_rejected() {
        let cfg = WorldConfig {
            n_facts: 3,
            ..tiny_config()
        };
        assert!(matches!(generate_world(&cfg), Err(Error::Config(_))));
        let cfg = WorldConfig {
            hops: 0,
            ..tiny_config()
        };
        assert!(matches!(generate_world(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn one_hop_question_uses_the_template() {
        let cfg = tiny_config();
        let kb = generate_world(&cfg).unwrap();
        let qs = generate_questions(&kb, &cfg).unwrap();
        let f = kb.facts[0];
        let a = &kb.entity(f.head).surface;
        let r = &kb.relation(f.relation).surface;
        assert_eq!(qs[0].tokens, vec!["what", "is", "the", r.as_str(), "of", a.as_str()]);
        let audit = GoldAudit::default();
        assert_eq!(qs[0].gold_answer(&audit, GoldPurpose::Diagnostics), f.tail);
    }

    #[test]
    fn missing_chain_length_is_a_generation_error() {
        let cfg = WorldConfig {
            hops: 3,
            ..tiny_config()
        };
        let kb = generate_world(&cfg).unwrap();
        assert!(matches!(generate_questions(&kb, &cfg), Err(Error::Generation(_))));
    }

    #[test]
    fn two_hop_question_answer_is_chain_end() {
        let e = |id, s: &str| Entity {
            id,
            surface: s.into(),
            tag: EntityTag::Loc,
        };
        let kb = KnowledgeBase::from_parts(
            vec![e(0, "kalo"), e(1, "mire"), e(2, "sudo")],
            vec![
                Relation { id: 0, surface: "born-in".into() },
                Relation { id: 1, surface: "part-of".into() },
            ],
            vec![
                Fact { head: 0, relation: 0, tail: 1 },
                Fact { head: 1, relation: 1, tail: 2 },
            ],
            vec![],
            0,
        )
        .unwrap();
        let q = Question::from_chain(&kb, 0, 0, vec![0, 1]).unwrap();
        assert_eq!(
            q.tokens.join(" "),
            "what is the part-of of the born-in of kalo"
        );
        assert_eq!(q.gold_answer(&GoldAudit::default(), GoldPurpose::Diagnostics), 2);
    }

    #[test]
    fn non_functional_facts_are_rejected() {
        let e = |id, s: &str| Entity {
            id,
            surface: s.into(),
            tag: EntityTag::Org,
        };
        let err = KnowledgeBase::from_parts(
            vec![e(0, "kalo"), e(1, "mire"), e(2, "sudo")],
            vec![Relation { id: 0, surface: "born-in".into() }],
            vec![
                Fact { head: 0, relation: 0, tail: 1 },
                Fact { head: 0, relation: 0, tail: 2 },
            ],
            vec![],
            0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn default_world_has_lookalikes_with_distinct_tags() {
        let kb = generate_world(&WorldConfig::default()).unwrap();
        let pairs = kb.lookalike_pairs();
        assert!(!pairs.is_empty());
        assert!(pairs
            .iter()
            .any(|&(a, b)| kb.entity(a).tag != kb.entity(b).tag));
    }
}
