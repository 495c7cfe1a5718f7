use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Fact, KnowledgeBase};

/// Snippets returned per search unless configured otherwise.
pub const DEFAULT_TOP_K: usize = 10;

/// A retrieved fact with its token rendering and retrieval score.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub fact_id: usize,
    pub fact: Fact,
    pub text: Vec<String>,
    pub score: u32,
}

/// Number of distinct query tokens that occur in `text`.
pub fn score_tokens(query: &[String], text: &[String]) -> u32 {
    let distinct: HashSet<&str> = query.iter().map(String::as_str).collect();
    distinct
        .into_iter()
        .filter(|q| text.iter().any(|t| t == q))
        .count() as u32
}

/// Ranks every fact by token overlap with `query` and returns at most `k`
/// snippets with positive score, best first, ties by ascending fact id.
pub fn retrieve(kb: &KnowledgeBase, query: &[String], k: usize) -> Vec<Snippet> {
    retrieve_from(kb, query, k, |_| true)
}

/// [`retrieve`] restricted to the fact ids accepted by `admit`.
pub fn retrieve_from(
    kb: &KnowledgeBase,
    query: &[String],
    k: usize,
    admit: impl Fn(usize) -> bool,
) -> Vec<Snippet> {
    let mut scored: Vec<Snippet> = kb
        .all_facts()
        .filter(|(id, _)| admit(*id))
        .filter_map(|(fact_id, fact)| {
            let text = kb.render_fact(fact);
            let score = score_tokens(query, &text);
            (score > 0).then(|| Snippet {
                fact_id,
                fact: *fact,
                text,
                score,
            })
        })
        .collect();
    scored.sort_by(|a, b| b.score.cmp(&a.score).then(a.fact_id.cmp(&b.fact_id)));
    scored.truncate(k);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Entity, EntityTag, Relation};

    fn kb() -> KnowledgeBase {
        let e = |id, s: &str| Entity {
            id,
            surface: s.into(),
            tag: EntityTag::Misc,
        };
        KnowledgeBase::from_parts(
            vec![e(0, "kalo"), e(1, "mire"), e(2, "sudo")],
            vec![
                Relation { id: 0, surface: "born-in".into() },
                Relation { id: 1, surface: "part-of".into() },
            ],
            vec![
                Fact { head: 1, relation: 1, tail: 2 },
                Fact { head: 0, relation: 0, tail: 1 },
                Fact { head: 2, relation: 0, tail: 0 },
            ],
            vec![],
            0,
        )
        .unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn exact_fact_text_ranks_first() {
        let kb = kb();
        let hits = retrieve(&kb, &toks("kalo born-in mire"), 10);
        assert_eq!(hits[0].fact_id, 1);
        assert_eq!(hits[0].score, 3);
    }

    #[test]
    fn zero_overlap_gives_nothing() {
        assert!(retrieve(&kb(), &toks("nothing here"), 10).is_empty());
    }

    #[test]
    fn k_truncates_and_ties_break_by_id() {
        let kb = kb();
        let hits = retrieve(&kb, &toks("mire"), 1);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].fact_id, 0);
    }

    #[test]
    fn repeated_query_tokens_count_once() {
        assert_eq!(score_tokens(&toks("kalo kalo"), &toks("kalo born-in mire")), 1);
    }
}
