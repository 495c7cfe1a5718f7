//! The information bottleneck applied before reconstruction.
//!
//! [`psi`] drops the final response ([`psi_trace`]) and replaces every entity
//! mention in the remaining search queries with its type tag
//! ([`mask_query`]). Observations pass through untouched. [`apply_mode`]
//! exposes the bottleneck and its three weaker variants behind one switch.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{Action, Observation, Step, Trajectory};
use crate::error::{Error, Result};
use crate::world::{EntityTag, KnowledgeBase};

/// What the reconstructor is shown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BottleneckMode {
    /// Raw actions, observations and the final response.
    FullWithResponse,
    /// Raw search actions and observations.
    ActionsObs,
    /// Observations only.
    ObsOnly,
    /// Masked search actions and observations (the default bottleneck).
    MaskedActionsObs,
}

impl BottleneckMode {
    pub const ALL: [BottleneckMode; 4] = [
        BottleneckMode::FullWithResponse,
        BottleneckMode::ActionsObs,
        BottleneckMode::ObsOnly,
        BottleneckMode::MaskedActionsObs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BottleneckMode::FullWithResponse => "full-with-response",
            BottleneckMode::ActionsObs => "actions-obs",
            BottleneckMode::ObsOnly => "obs-only",
            BottleneckMode::MaskedActionsObs => "masked-actions-obs",
        }
    }
}

impl Default for BottleneckMode {
    fn default() -> Self {
        BottleneckMode::MaskedActionsObs
    }
}

impl fmt::Display for BottleneckMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BottleneckMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown bottleneck mode {s:?}")))
    }
}

/// Entity surface → tag lookup used for masking.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskerVocab {
    tags: HashMap<String, EntityTag>,
}

impl MaskerVocab {
    /// Fails if a tag token is offered as an entity surface.
    pub fn new(entries: impl IntoIterator<Item = (String, EntityTag)>) -> Result<Self> {
        let mut tags = HashMap::new();
        for (surface, tag) in entries {
            if EntityTag::is_tag_token(&surface) {
                return Err(Error::Config(format!(
                    "tag token {surface} cannot be an entity surface"
                )));
            }
            tags.insert(surface, tag);
        }
        Ok(Self { tags })
    }

    pub fn from_kb(kb: &KnowledgeBase) -> Self {
        Self::new(kb.entities.iter().map(|e| (e.surface.clone(), e.tag)))
            .expect("world generation never produces tag-token surfaces")
    }

    pub fn tag_of(&self, surface: &str) -> Option<EntityTag> {
        self.tags.get(surface).copied()
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.tags.contains_key(surface)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedAction {
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BottleneckedStep {
    pub action: MaskedAction,
    pub observation: Observation,
}

/// `(ã_1, o_1, ..., ã_{T-1}, o_{T-1})`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BottleneckedTrajectory {
    pub question_id: usize,
    pub steps: Vec<BottleneckedStep>,
}

impl BottleneckedTrajectory {
    /// The masked steps as ordinary search steps, so the bottleneck can be re-applied.
    pub fn as_steps(&self) -> Vec<Step> {
        self.steps
            .iter()
            .map(|s| Step {
                action: Action::Search {
                    query: s.action.tokens.clone(),
                },
                observation: Some(s.observation.clone()),
            })
            .collect()
    }
}

/// Drops the final response, keeping `(a_1, o_1, ..., a_{T-1}, o_{T-1})`.
pub fn psi_trace(steps: &[Step]) -> Vec<Step> {
    steps
        .iter()
        .filter(|s| !s.action.is_final())
        .cloned()
        .collect()
}

/// Replaces each token that is a known entity surface with its tag token.
pub fn mask_query(tokens: &[String], vocab: &MaskerVocab) -> MaskedAction {
    MaskedAction {
        tokens: tokens
            .iter()
            .map(|t| match vocab.tag_of(t) {
                Some(tag) => tag.token().to_string(),
                None => t.clone(),
            })
            .collect(),
    }
}

fn psi_steps(question_id: usize, steps: &[Step], vocab: &MaskerVocab) -> BottleneckedTrajectory {
    BottleneckedTrajectory {
        question_id,
        steps: psi_trace(steps)
            .into_iter()
            .map(|s| BottleneckedStep {
                action: mask_query(s.action.tokens(), vocab),
                observation: s.observation.unwrap_or_default(),
            })
            .collect(),
    }
}

/// `ψ = ψ_mask ∘ ψ_trace`.
pub fn psi(traj: &Trajectory, vocab: &MaskerVocab) -> BottleneckedTrajectory {
    psi_steps(traj.question_id, &traj.steps, vocab)
}

/// Re-applies ψ to an already bottlenecked trajectory.
pub fn psi_again(traj: &BottleneckedTrajectory, vocab: &MaskerVocab) -> BottleneckedTrajectory {
    psi_steps(traj.question_id, &traj.as_steps(), vocab)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputStep {
    /// Absent when the mode hides actions.
    pub action: Option<Vec<String>>,
    pub observation: Observation,
}

/// Exactly what a reconstructor sees under one bottleneck mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructorInput {
    pub mode: BottleneckMode,
    pub question_id: usize,
    pub steps: Vec<InputStep>,
    /// Present only for [`BottleneckMode::FullWithResponse`].
    pub final_response: Option<Vec<String>>,
}

impl From<BottleneckedTrajectory> for ReconstructorInput {
    fn from(b: BottleneckedTrajectory) -> Self {
        Self {
            mode: BottleneckMode::MaskedActionsObs,
            question_id: b.question_id,
            steps: b
                .steps
                .into_iter()
                .map(|s| InputStep {
                    action: Some(s.action.tokens),
                    observation: s.observation,
                })
                .collect(),
            final_response: None,
        }
    }
}

#[derive(Serialize)]
struct WireSnippet<'a> {
    text: &'a [String],
}

#[derive(Serialize)]
struct WireStep<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    action: Option<&'a [String]>,
    observation: Vec<WireSnippet<'a>>,
}

#[derive(Serialize)]
struct WireInput<'a> {
    mode: BottleneckMode,
    question_id: usize,
    steps: Vec<WireStep<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_response: Option<&'a [String]>,
}

impl ReconstructorInput {
    /// Every token in the actions and final response, in order.
    pub fn action_tokens(&self) -> impl Iterator<Item = &String> {
        self.steps
            .iter()
            .filter_map(|s| s.action.as_deref())
            .flatten()
            .chain(self.final_response.iter().flatten())
    }

    /// The single-line JSON form handed to reconstructors. Snippets carry their
    /// text only; retrieval scores are withheld.
    pub fn to_json_line(&self) -> String {
        let wire = WireInput {
            mode: self.mode,
            question_id: self.question_id,
            steps: self
                .steps
                .iter()
                .map(|s| WireStep {
                    action: s.action.as_deref(),
                    observation: s
                        .observation
                        .snippets
                        .iter()
                        .map(|sn| WireSnippet { text: &sn.text })
                        .collect(),
                })
                .collect(),
            final_response: self.final_response.as_deref(),
        };
        serde_json::to_string(&wire).expect("plain data serializes")
    }
}

/// Builds the reconstructor input for `mode`.
pub fn apply_mode(traj: &Trajectory, mode: BottleneckMode, vocab: &MaskerVocab) -> ReconstructorInput {
    let raw_steps = |with_actions: bool| -> Vec<InputStep> {
        psi_trace(&traj.steps)
            .into_iter()
            .map(|s| InputStep {
                action: with_actions.then(|| s.action.tokens().to_vec()),
                observation: s.observation.unwrap_or_default(),
            })
            .collect()
    };
    match mode {
        BottleneckMode::MaskedActionsObs => psi(traj, vocab).into(),
        BottleneckMode::FullWithResponse => ReconstructorInput {
            mode,
            question_id: traj.question_id,
            steps: raw_steps(true),
            final_response: Some(traj.final_response().map(<[String]>::to_vec).unwrap_or_default()),
        },
        BottleneckMode::ActionsObs => ReconstructorInput {
            mode,
            question_id: traj.question_id,
            steps: raw_steps(true),
            final_response: None,
        },
        BottleneckMode::ObsOnly => ReconstructorInput {
            mode,
            question_id: traj.question_id,
            steps: raw_steps(false),
            final_response: None,
        },
    }
}
