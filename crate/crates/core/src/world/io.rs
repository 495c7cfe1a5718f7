//! Line-delimited JSON persistence for worlds and question sets.
//!
//! Each file starts with a header line carrying the schema version; every
//! following line holds one entity, relation, fact or question.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Entity, Fact, KnowledgeBase, Question, Relation};
use crate::error::{Error, Result};

pub const WORLD_SCHEMA: &str = "ccs.world.v1";
pub const QUESTIONS_SCHEMA: &str = "ccs.questions.v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum WorldLine {
    Header { schema: String, seed: u64 },
    Entity(Entity),
    Relation(Relation),
    Fact { id: usize, head: usize, relation: usize, tail: usize },
    Distractor { id: usize, head: usize, relation: usize, tail: usize },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum QuestionLine {
    Header { schema: String, count: usize },
    Question(Question),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_world<W: Write>(kb: &KnowledgeBase, mut w: W) -> Result<()> {
    write_line(
        &mut w,
        &WorldLine::Header {
            schema: WORLD_SCHEMA.into(),
            seed: kb.seed,
        },
    )?;
    for e in &kb.entities {
        write_line(&mut w, &WorldLine::Entity(e.clone()))?;
    }
    for r in &kb.relations {
        write_line(&mut w, &WorldLine::Relation(r.clone()))?;
    }
    for (id, f) in kb.all_facts() {
        let line = if kb.is_distractor(id) {
            WorldLine::Distractor {
                id,
                head: f.head,
                relation: f.relation,
                tail: f.tail,
            }
        } else {
            WorldLine::Fact {
                id,
                head: f.head,
                relation: f.relation,
                tail: f.tail,
            }
        };
        write_line(&mut w, &line)?;
    }
    Ok(())
}

fn parse_err(path: &Path, line: usize, detail: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.to_string(),
    }
}

/// Reads a world; `origin` is only used in error messages.
pub fn read_world<R: BufRead>(r: R, origin: &Path) -> Result<KnowledgeBase> {
    let mut seed = None;
    let (mut entities, mut relations, mut facts, mut distractors) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: WorldLine =
            serde_json::from_str(&line).map_err(|e| parse_err(origin, i + 1, e))?;
        match parsed {
            WorldLine::Header { schema, seed: s } => {
                if schema != WORLD_SCHEMA {
                    return Err(parse_err(origin, i + 1, format!("unsupported schema {schema}")));
                }
                seed = Some(s);
            }
            WorldLine::Entity(e) => entities.push(e),
            WorldLine::Relation(r) => relations.push(r),
            WorldLine::Fact { head, relation, tail, .. } => facts.push(Fact { head, relation, tail }),
            WorldLine::Distractor { head, relation, tail, .. } => {
                distractors.push(Fact { head, relation, tail })
            }
        }
    }
    let seed = seed.ok_or_else(|| parse_err(origin, 1, "missing header line"))?;
    KnowledgeBase::from_parts(entities, relations, facts, distractors, seed)
}

pub fn write_questions<W: Write>(questions: &[Question], mut w: W) -> Result<()> {
    write_line(
        &mut w,
        &QuestionLine::Header {
            schema: QUESTIONS_SCHEMA.into(),
            count: questions.len(),
        },
    )?;
    for q in questions {
        write_line(&mut w, &QuestionLine::Question(q.clone()))?;
    }
    Ok(())
}

pub fn read_questions<R: BufRead>(r: R, origin: &Path) -> Result<Vec<Question>> {
    let mut out = Vec::new();
    let mut header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|e| parse_err(origin, i + 1, e))? {
            QuestionLine::Header { schema, .. } => {
                if schema != QUESTIONS_SCHEMA {
                    return Err(parse_err(origin, i + 1, format!("unsupported schema {schema}")));
                }
                header = true;
            }
            QuestionLine::Question(q) => out.push(q),
        }
    }
    if !header {
        return Err(parse_err(origin, 1, "missing header line"));
    }
    Ok(out)
}
