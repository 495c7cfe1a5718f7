//! Log-linear softmax policy over candidate actions.

use serde::{Deserialize, Serialize};

use super::{CandidateAction, Trajectory};
use crate::scalar::Scalar;

/// One weight per feature index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PolicyParams<T: Scalar> {
    pub theta: Vec<T>,
}

impl<T: Scalar> PolicyParams<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            theta: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    /// `theta += scale * delta`.
    pub fn add_scaled(&mut self, delta: &[T], scale: T) {
        for (w, d) in self.theta.iter_mut().zip(delta) {
            *w = *w + scale * *d;
        }
    }

    fn score(&self, features: &[usize]) -> T {
        features.iter().map(|&i| self.theta[i]).sum()
    }
}

/// Sparse vector as sorted `(index, value)` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector<T> {
    pub entries: Vec<(usize, T)>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn to_dense(&self, dim: usize) -> Vec<T> {
        let mut out = vec![T::zero(); dim];
        self.add_into(&mut out, T::one());
        out
    }

    /// `dense += scale * self`.
    pub fn add_into(&self, dense: &mut [T], scale: T) {
        for &(i, v) in &self.entries {
            dense[i] = dense[i] + scale * v;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|(_, v)| v.is_zero())
    }
}

fn logits<T: Scalar>(params: &PolicyParams<T>, candidates: &[CandidateAction]) -> Vec<T> {
    candidates.iter().map(|c| params.score(&c.features)).collect()
}

/// Log-softmax with max subtraction.
fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let log_norm = logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    logits.iter().map(|&l| l - max - log_norm).collect()
}

/// `p_i = exp(θ·φ_i) / Σ_j exp(θ·φ_j)`.
pub fn action_distribution<T: Scalar>(
    params: &PolicyParams<T>,
    candidates: &[CandidateAction],
) -> Vec<T> {
    assert!(!candidates.is_empty(), "candidate set must be non-empty");
    let l = logits(params, candidates);
    let max = l.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = l.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_prob<T: Scalar>(
    params: &PolicyParams<T>,
    candidates: &[CandidateAction],
    chosen: usize,
) -> T {
    assert!(chosen < candidates.len(), "chosen index out of range");
    log_softmax(&logits(params, candidates))[chosen]
}

/// `∇_θ log p_chosen = φ_chosen − Σ_i p_i φ_i`.
pub fn grad_log_prob<T: Scalar>(
    params: &PolicyParams<T>,
    candidates: &[CandidateAction],
    chosen: usize,
) -> SparseVector<T> {
    assert!(chosen < candidates.len(), "chosen index out of range");
    let probs = action_distribution(params, candidates);
    let mut dense = vec![T::zero(); params.dim()];
    for (c, &p) in candidates.iter().zip(&probs) {
        for &i in &c.features {
            dense[i] = dense[i] - p;
        }
    }
    for &i in &candidates[chosen].features {
        dense[i] = dense[i] + T::one();
    }
    let mut touched: Vec<usize> = candidates.iter().flat_map(|c| c.features.iter().copied()).collect();
    touched.sort_unstable();
    touched.dedup();
    SparseVector {
        entries: touched.into_iter().map(|i| (i, dense[i])).collect(),
    }
}

/// Sum of per-action log-probabilities over the recorded decisions.
/// Observations carry no likelihood.
pub fn trajectory_loglik<T: Scalar>(params: &PolicyParams<T>, traj: &Trajectory) -> T {
    traj.decisions
        .iter()
        .map(|d| log_prob(params, &d.candidates, d.chosen))
        .fold(T::zero(), |acc, x| acc + x)
}

/// Gradient of [`trajectory_loglik`] as a dense vector.
pub fn trajectory_grad<T: Scalar>(params: &PolicyParams<T>, traj: &Trajectory) -> Vec<T> {
    let mut out = vec![T::zero(); params.dim()];
    for d in &traj.decisions {
        grad_log_prob(params, &d.candidates, d.chosen).add_into(&mut out, T::one());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Action;
    use approx::assert_abs_diff_eq;

    fn cand(features: Vec<usize>) -> CandidateAction {
        CandidateAction {
            action: Action::Final { response: vec![] },
            features,
        }
    }

    #[test]
    fn zero_weights_are_uniform() {
        let params = PolicyParams::<f64>::zeros(4);
        let cands: Vec<_> = (0..4).map(|i| cand(vec![i])).collect();
        for p in action_distribution(&params, &cands) {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
        }
        let five: Vec<_> = (0..5).map(|_| cand(vec![])).collect();
        assert_abs_diff_eq!(log_prob(&params, &five, 2), -(5f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(log_prob(&params, &five, 2), -1.60944, epsilon = 1e-5);
    }

    #[test]
    fn unit_weight_on_one_feature() {
        let params = PolicyParams { theta: vec![1.0f64, 0.0] };
        let p = action_distribution(&params, &[cand(vec![0]), cand(vec![1])]);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(p[0], e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0 / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn shared_feature_is_a_logit_shift() {
        let base = PolicyParams { theta: vec![0.3f64, -1.2, 0.0] };
        let shifted = PolicyParams { theta: vec![0.3f64, -1.2, 7.5] };
        let plain = [cand(vec![0]), cand(vec![1]), cand(vec![])];
        let with_shift = [cand(vec![0, 2]), cand(vec![1, 2]), cand(vec![2])];
        let a = action_distribution(&base, &plain);
        let b = action_distribution(&shifted, &with_shift);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_candidate_has_zero_gradient() {
        let params = PolicyParams { theta: vec![0.4f64, 2.0] };
        assert!(grad_log_prob(&params, &[cand(vec![0, 1])], 0).is_zero());
    }

    #[test]
    fn large_logits_stay_finite() {
        let params = PolicyParams { theta: vec![800.0f64, -800.0] };
        let cands = [cand(vec![0]), cand(vec![1])];
        let p = action_distribution(&params, &cands);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!(log_prob(&params, &cands, 1).is_finite());
    }

    #[test]
    fn single_precision_matches_double() {
        let p64 = PolicyParams { theta: vec![0.5f64, -0.25] };
        let p32 = PolicyParams { theta: vec![0.5f32, -0.25] };
        let cands = [cand(vec![0]), cand(vec![1]), cand(vec![0, 1])];
        let a = action_distribution(&p64, &cands);
        let b = action_distribution(&p32, &cands);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(*x, *y as f64, epsilon = 1e-6);
        }
    }
}
