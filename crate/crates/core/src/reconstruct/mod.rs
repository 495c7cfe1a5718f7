//! Reconstructors: map a bottlenecked trajectory back to a question, or to
//! "N/A" when the evidence does not pin one down.
//!
//! * [`reconstruct_oracle`] is deterministic and evidence-grounded: masked
//!   slots must be resolved from observed facts, uniquely.
//! * [`reconstruct_lexical`] copies action tokens and ignores observations. It
//!   exists to show what the bottleneck protects against.
//! * [`RemoteReconstructor`] sends the reconstruction prompt to an LLM endpoint.

mod lexical;
mod oracle;
mod remote;

use serde::{Deserialize, Serialize};

pub use lexical::reconstruct_lexical;
pub use oracle::{explains_observation, reconstruct_oracle, OracleContext};
pub use remote::{render_prompt, RemoteConfig, RemoteReconstructor, RECONSTRUCTION_PROMPT};

/// The response string that stands for "not reconstructible".
pub const NOT_RECONSTRUCTIBLE: &str = "N/A";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReconstructionResult {
    Question { tokens: Vec<String> },
    NotReconstructible,
}

impl ReconstructionResult {
    /// Maps free text to a result: `N/A` or blank means not reconstructible.
    pub fn from_text(text: &str) -> Self {
        let trimmed = text.trim();
        if trimmed == NOT_RECONSTRUCTIBLE || trimmed.is_empty() {
            return Self::NotReconstructible;
        }
        Self::Question {
            tokens: trimmed.split_whitespace().map(String::from).collect(),
        }
    }

    pub fn tokens(&self) -> Option<&[String]> {
        match self {
            Self::Question { tokens } => Some(tokens),
            Self::NotReconstructible => None,
        }
    }

    pub fn is_reconstructed(&self) -> bool {
        matches!(self, Self::Question { .. })
    }
}

/// Which reconstructor feeds a reward channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReconstructorKind {
    Oracle,
    Lexical,
    Remote(RemoteConfig),
}

impl Default for ReconstructorKind {
    fn default() -> Self {
        Self::Oracle
    }
}

impl ReconstructorKind {
    /// Parses `oracle`, `lexical` or `remote:<url>`.
    pub fn parse(spec: &str) -> crate::Result<Self> {
        match spec {
            "oracle" => Ok(Self::Oracle),
            "lexical" => Ok(Self::Lexical),
            _ => match spec.strip_prefix("remote:") {
                Some(url) if !url.is_empty() => Ok(Self::Remote(RemoteConfig::new(url))),
                _ => Err(crate::Error::Config(format!(
                    "unknown reconstructor {spec:?}; expected oracle, lexical or remote:<url>"
                ))),
            },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Lexical => "lexical",
            Self::Remote(_) => "remote",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_mapping() {
        assert_eq!(ReconstructionResult::from_text("N/A"), ReconstructionResult::NotReconstructible);
        assert_eq!(ReconstructionResult::from_text(" N/A\n"), ReconstructionResult::NotReconstructible);
        assert_eq!(
            ReconstructionResult::from_text("what is the capital of France").tokens().unwrap(),
            ["what", "is", "the", "capital", "of", "France"]
        );
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(ReconstructorKind::parse("oracle").unwrap(), ReconstructorKind::Oracle);
        assert!(matches!(
            ReconstructorKind::parse("remote:http://127.0.0.1:9/x").unwrap(),
            ReconstructorKind::Remote(c) if c.endpoint == "http://127.0.0.1:9/x"
        ));
        assert!(ReconstructorKind::parse("remote:").is_err());
        assert!(ReconstructorKind::parse("llm").is_err());
    }
}
