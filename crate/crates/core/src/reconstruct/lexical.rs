use super::ReconstructionResult;
use crate::bottleneck::ReconstructorInput;

/// Concatenates action (and final-response) tokens, first occurrence only.
/// Observations are never read.
pub fn reconstruct_lexical(input: &ReconstructorInput) -> ReconstructionResult {
    let mut tokens: Vec<String> = Vec::new();
    for t in input.action_tokens() {
        if !tokens.contains(t) {
            tokens.push(t.clone());
        }
    }
    if tokens.is_empty() {
        ReconstructionResult::NotReconstructible
    } else {
        ReconstructionResult::Question { tokens }
    }
}
