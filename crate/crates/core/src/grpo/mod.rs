//! Group Relative Policy Optimization.
//!
//! Per question, `G` trajectories are sampled from the behavior policy
//! `θ_old`, scored, and their rewards normalized within the group. The
//! objective for one group is
//!
//! ```text
//! J = mean_i min(ρ_i A_i, clip(ρ_i, 1 − ε, 1 + ε) A_i) − β · KL(π_θ ‖ π_ref)
//! ```
//!
//! with a trajectory-level ratio `ρ_i = π_θ(τ_i) / π_θ_old(τ_i)` and the exact
//! KL over the candidate sets of the group's visited states.

mod train;

use serde::{Deserialize, Serialize};

pub use train::{train_loop, StepMetrics, StepOutput, Trainer};

use crate::agent::{
    action_distribution, grad_log_prob, trajectory_grad, trajectory_loglik, CandidateAction, Decision,
    PolicyParams, Trajectory,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub eps_clip: f64,
    pub beta: f64,
    pub eps_std: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub questions_per_step: usize,
    /// Write a checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 5,
            eps_clip: 0.2,
            beta: 0.01,
            eps_std: 1e-8,
            learning_rate: 2.0,
            steps: 200,
            questions_per_step: 16,
            checkpoint_every: 50,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return bad("eps_clip must lie in (0, 1)");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and non-negative");
        }
        if !(self.eps_std > 0.0 && self.eps_std.is_finite()) {
            return bad("eps_std must be finite and positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.questions_per_step == 0 {
            return bad("questions_per_step must be positive");
        }
        Ok(())
    }
}

/// `A_i = (r_i − μ) / (σ + eps_std)` with the population standard deviation.
/// Constant rewards give all zeros.
pub fn compute_advantages<T: Scalar>(rewards: &[T], eps_std: T) -> Vec<T> {
    assert!(!rewards.is_empty(), "advantages need at least one reward");
    let n = T::from_usize(rewards.len()).expect("length fits");
    let mean = rewards.iter().copied().sum::<T>() / n;
    if rewards.iter().all(|&r| r == rewards[0]) {
        return vec![T::zero(); rewards.len()];
    }
    let var = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<T>() / n;
    let denom = var.sqrt() + eps_std;
    rewards.iter().map(|&r| (r - mean) / denom).collect()
}

/// G sampled trajectories for one question with their rewards and advantages.
#[derive(Clone, Debug, PartialEq)]
pub struct Group<T> {
    pub question_id: usize,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<T>,
    pub advantages: Vec<T>,
}

impl<T: Scalar> Group<T> {
    pub fn new(question_id: usize, trajectories: Vec<Trajectory>, rewards: Vec<T>, eps_std: T) -> Self {
        assert_eq!(trajectories.len(), rewards.len(), "one reward per trajectory");
        assert!(
            trajectories.iter().all(|t| t.question_id == question_id),
            "a group answers a single question"
        );
        let advantages = compute_advantages(&rewards, eps_std);
        Self {
            question_id,
            trajectories,
            rewards,
            advantages,
        }
    }

    /// Every decision state visited by the group, in trajectory order.
    pub fn visited_states(&self) -> impl Iterator<Item = &Decision> {
        self.trajectories.iter().flat_map(|t| t.decisions.iter())
    }
}

/// Behavior and reference policies, fixed for the duration of a step.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySnapshots<T: Scalar> {
    pub theta_old: PolicyParams<T>,
    pub theta_ref: PolicyParams<T>,
}

fn state_kl<T: Scalar>(theta: &PolicyParams<T>, theta_ref: &PolicyParams<T>, cands: &[CandidateAction]) -> (T, Vec<T>) {
    let p = action_distribution(theta, cands);
    let q = action_distribution(theta_ref, cands);
    let log_ratio: Vec<T> = p
        .iter()
        .zip(&q)
        .map(|(&pa, &qa)| if pa.is_zero() { T::zero() } else { pa.ln() - qa.ln() })
        .collect();
    let kl = p.iter().zip(&log_ratio).map(|(&pa, &lr)| pa * lr).sum::<T>();
    (kl, log_ratio)
}

/// Mean exact `KL(π_θ(·|s) ‖ π_ref(·|s))` over the visited states.
pub fn kl_term<'a, T: Scalar>(
    theta: &PolicyParams<T>,
    theta_ref: &PolicyParams<T>,
    states: impl IntoIterator<Item = &'a Decision>,
) -> T {
    let mut total = T::zero();
    let mut n = 0usize;
    for d in states {
        total = total + state_kl(theta, theta_ref, &d.candidates).0.max(T::zero());
        n += 1;
    }
    if n == 0 {
        T::zero()
    } else {
        total / T::from_usize(n).expect("count fits")
    }
}

/// [`kl_term`] and its gradient in `θ`. Per state the gradient is
/// `Σ_a p_a φ_a (log p_a − log q_a) − φ̄ · KL` with `φ̄ = Σ_a p_a φ_a`.
pub fn kl_and_gradient<'a, T: Scalar>(
    theta: &PolicyParams<T>,
    theta_ref: &PolicyParams<T>,
    states: impl IntoIterator<Item = &'a Decision>,
) -> (T, Vec<T>) {
    let mut grad = vec![T::zero(); theta.dim()];
    let mut total = T::zero();
    let mut n = 0usize;
    for d in states {
        n += 1;
        let (kl, log_ratio) = state_kl(theta, theta_ref, &d.candidates);
        total = total + kl;
        let p = action_distribution(theta, &d.candidates);
        for ((c, &pa), &lr) in d.candidates.iter().zip(&p).zip(&log_ratio) {
            let w = pa * (lr - kl);
            for &i in &c.features {
                grad[i] = grad[i] + w;
            }
        }
    }
    if n == 0 {
        return (T::zero(), grad);
    }
    let inv = T::one() / T::from_usize(n).expect("count fits");
    grad.iter_mut().for_each(|g| *g = *g * inv);
    (total * inv, grad)
}

/// Which branch of the clipped surrogate a trajectory lands on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClipBranch {
    Unclipped,
    Clipped,
}

/// `min(ρA, clip(ρ)A)` and the branch the min selects. When the clipped
/// branch strictly wins the term is flat in `θ`.
pub fn clipped_term<T: Scalar>(ratio: T, advantage: T, eps_clip: T) -> (T, ClipBranch) {
    let lo = T::one() - eps_clip;
    let hi = T::one() + eps_clip;
    let unclipped = ratio * advantage;
    let clipped = ratio.max(lo).min(hi) * advantage;
    if clipped < unclipped {
        (clipped, ClipBranch::Clipped)
    } else {
        (unclipped, ClipBranch::Unclipped)
    }
}

/// Per-trajectory surrogate terms, their branches and gradients.
pub fn trajectory_terms<T: Scalar>(
    theta: &PolicyParams<T>,
    snapshots: &PolicySnapshots<T>,
    group: &Group<T>,
    eps_clip: T,
) -> Result<Vec<(T, ClipBranch, Vec<T>)>> {
    group
        .trajectories
        .iter()
        .zip(&group.advantages)
        .enumerate()
        .map(|(i, (traj, &adv))| {
            let log_ratio = trajectory_loglik(theta, traj) - trajectory_loglik(&snapshots.theta_old, traj);
            let ratio = log_ratio.exp();
            if !ratio.is_finite() {
                return Err(Error::Numerical {
                    trajectory: format!("question {} sample {i}", group.question_id),
                    detail: format!("importance ratio is {ratio} (log ratio {log_ratio})"),
                });
            }
            let (term, branch) = clipped_term(ratio, adv, eps_clip);
            let grad = match branch {
                ClipBranch::Clipped => vec![T::zero(); theta.dim()],
                ClipBranch::Unclipped => {
                    let scale = ratio * adv;
                    trajectory_grad(theta, traj).into_iter().map(|g| g * scale).collect()
                }
            };
            Ok((term, branch, grad))
        })
        .collect()
}

/// Group objective and its exact gradient in `θ`.
pub fn surrogate_and_gradient<T: Scalar>(
    theta: &PolicyParams<T>,
    snapshots: &PolicySnapshots<T>,
    group: &Group<T>,
    eps_clip: T,
    beta: T,
) -> Result<(T, Vec<T>)> {
    let terms = trajectory_terms(theta, snapshots, group, eps_clip)?;
    let g = T::from_usize(terms.len()).expect("count fits");
    let mut grad = vec![T::zero(); theta.dim()];
    let mut objective = T::zero();
    for (term, _, tg) in &terms {
        objective = objective + *term / g;
        for (a, &b) in grad.iter_mut().zip(tg) {
            *a = *a + b / g;
        }
    }
    if beta > T::zero() {
        let (kl, kl_grad) = kl_and_gradient(theta, &snapshots.theta_ref, group.visited_states());
        objective = objective - beta * kl;
        for (a, &b) in grad.iter_mut().zip(&kl_grad) {
            *a = *a - beta * b;
        }
    }
    Ok((objective, grad))
}

/// Gradient of one decision's log-probability, exposed for diagnostics.
pub fn decision_grad<T: Scalar>(theta: &PolicyParams<T>, d: &Decision) -> Vec<T> {
    grad_log_prob(theta, &d.candidates, d.chosen).to_dense(theta.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_rewards_give_zero_advantages() {
        assert_eq!(compute_advantages(&[0.7f64; 5], 1e-8), vec![0.0; 5]);
    }

    #[test]
    fn hand_case() {
        let a = compute_advantages(&[1.0f64, 0.5, 0.0, 0.5, 0.5], 1e-8);
        let s = 0.1f64.sqrt();
        let oracle = [0.5 / s, 0.0, -0.5 / s, 0.0, 0.0];
        for (x, y) in a.iter().zip(oracle) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(a[0], 1.5811, epsilon = 1e-4);
    }

    #[test]
    fn clip_branches() {
        assert_eq!(clipped_term(1.5f64, 1.0, 0.2), (1.2, ClipBranch::Clipped));
        assert_eq!(clipped_term(0.5f64, -1.0, 0.2).1, ClipBranch::Clipped);
        assert_eq!(clipped_term(0.5f64, 1.0, 0.2), (0.5, ClipBranch::Unclipped));
        assert_eq!(clipped_term(1.5f64, -1.0, 0.2), (-1.5, ClipBranch::Unclipped));
    }

    #[test]
    fn config_validation() {
        assert!(GrpoConfig::default().validate().is_ok());
        let bad = GrpoConfig {
            group_size: 1,
            ..GrpoConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
