use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kl_term, surrogate_and_gradient, GrpoConfig, Group, PolicySnapshots};
use crate::agent::{rollout, PolicyParams, RolloutConfig, Trajectory};
use crate::error::{Error, Result};
use crate::reward::RewardPipeline;
use crate::rng::{self, label};
use crate::scalar::Scalar;
use crate::world::{GoldAudit, KnowledgeBase, Question};

/// Per-step training summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StepMetrics<T: Scalar> {
    pub step: usize,
    pub mean_reward: T,
    pub mean_abs_advantage: T,
    /// `KL(π_θ_old ‖ π_ref)` over the step's visited states, averaged over groups.
    pub mean_kl: T,
    pub avg_num_search: T,
    pub objective: T,
}

/// Everything one step produced.
#[derive(Clone, Debug)]
pub struct StepOutput<T: Scalar> {
    pub metrics: StepMetrics<T>,
    /// In sampled-question order.
    pub groups: Vec<Group<T>>,
}

/// Immutable training context shared by every step.
pub struct Trainer<'a> {
    pub kb: &'a KnowledgeBase,
    pub questions: &'a [Question],
    pub pipeline: &'a RewardPipeline,
    pub audit: &'a GoldAudit,
    pub rollout: RolloutConfig,
    pub grpo: GrpoConfig,
    pub seed: u64,
}

impl<'a> Trainer<'a> {
    /// Question indices used at `step`.
    pub fn batch(&self, step: usize) -> Vec<usize> {
        let n = self.questions.len();
        let k = self.grpo.questions_per_step.min(n);
        let mut rng = rng::stream(self.seed, &[label::BATCH, step as u64]);
        sample(&mut rng, n, k).into_vec()
    }

    /// Samples the step's groups under `theta_old`. Each rollout draws from
    /// its own stream keyed by (seed, step, question id, sample index), so the
    /// result does not depend on thread scheduling.
    pub fn sample_groups<T: Scalar>(&self, theta_old: &PolicyParams<T>, step: usize) -> Result<Vec<Group<T>>> {
        let batch = self.batch(step);
        let g = self.grpo.group_size;
        let jobs: Vec<(usize, usize)> = batch.iter().flat_map(|&qi| (0..g).map(move |i| (qi, i))).collect();
        let trajs: Vec<Trajectory> = jobs
            .par_iter()
            .map(|&(qi, i)| {
                let q = &self.questions[qi];
                let mut r = rng::stream(self.seed, &[label::ROLLOUT, step as u64, q.id as u64, i as u64]);
                rollout(theta_old, self.kb, q, &self.rollout, &mut r)
            })
            .collect();
        let eps_std = T::lit(self.grpo.eps_std);
        batch
            .par_iter()
            .zip(trajs.par_chunks(g))
            .map(|(&qi, chunk)| {
                let q = &self.questions[qi];
                let refs: Vec<&Trajectory> = chunk.iter().collect();
                let scored = self.pipeline.score_group::<T>(self.kb, q, &refs, self.audit)?;
                Ok(Group::new(q.id, chunk.to_vec(), scored.rewards, eps_std))
            })
            .collect()
    }

    /// One GRPO step: sample under `θ_old = θ`, then take one ascent step on the
    /// batch-mean objective. On error `theta` is left untouched.
    pub fn train_step<T: Scalar>(
        &self,
        theta: &mut PolicyParams<T>,
        theta_ref: &PolicyParams<T>,
        step: usize,
    ) -> Result<StepOutput<T>> {
        let snapshots = PolicySnapshots {
            theta_old: theta.clone(),
            theta_ref: theta_ref.clone(),
        };
        let groups = self.sample_groups(&snapshots.theta_old, step)?;
        let eps_clip = T::lit(self.grpo.eps_clip);
        let beta = T::lit(self.grpo.beta);

        let per_group: Vec<(T, Vec<T>)> = groups
            .par_iter()
            .map(|grp| surrogate_and_gradient(&snapshots.theta_old, &snapshots, grp, eps_clip, beta))
            .collect::<Result<_>>()?;

        let n = T::from_usize(groups.len().max(1)).expect("count fits");
        let mut grad = vec![T::zero(); theta.dim()];
        let mut objective = T::zero();
        for (obj, g) in &per_group {
            objective = objective + *obj / n;
            for (a, &b) in grad.iter_mut().zip(g) {
                *a = *a + b / n;
            }
        }

        let mut updated = theta.clone();
        updated.add_scaled(&grad, T::lit(self.grpo.learning_rate));
        if !updated.is_finite() {
            return Err(Error::Numerical {
                trajectory: format!("step {step}"),
                detail: "parameter update produced a non-finite weight".into(),
            });
        }

        let metrics = step_metrics(step, &groups, &snapshots, objective);
        *theta = updated;
        Ok(StepOutput { metrics, groups })
    }
}

fn step_metrics<T: Scalar>(
    step: usize,
    groups: &[Group<T>],
    snapshots: &PolicySnapshots<T>,
    objective: T,
) -> StepMetrics<T> {
    let mean = |xs: &mut dyn Iterator<Item = T>| {
        let (s, c) = xs.fold((T::zero(), 0usize), |(s, c), x| (s + x, c + 1));
        if c == 0 {
            T::zero()
        } else {
            s / T::from_usize(c).expect("count fits")
        }
    };
    StepMetrics {
        step,
        mean_reward: mean(&mut groups.iter().flat_map(|g| g.rewards.iter().copied())),
        mean_abs_advantage: mean(&mut groups.iter().flat_map(|g| g.advantages.iter().map(|a| a.abs()))),
        mean_kl: mean(
            &mut groups
                .iter()
                .map(|g| kl_term(&snapshots.theta_old, &snapshots.theta_ref, g.visited_states())),
        ),
        avg_num_search: mean(
            &mut groups
                .iter()
                .flat_map(|g| g.trajectories.iter().map(|t| T::from_usize(t.num_searches()).expect("fits"))),
        ),
        objective,
    }
}

/// Runs `config.steps` steps from `theta0`, which also serves as the frozen
/// reference policy. `on_step` sees every step's output and the updated weights.
pub fn train_loop<T: Scalar>(
    trainer: &Trainer<'_>,
    theta0: PolicyParams<T>,
    mut on_step: impl FnMut(&StepOutput<T>, &PolicyParams<T>) -> Result<()>,
) -> Result<(PolicyParams<T>, Vec<StepMetrics<T>>)> {
    let theta_ref = theta0.clone();
    let mut theta = theta0;
    let mut series = Vec::with_capacity(trainer.grpo.steps);
    for step in 0..trainer.grpo.steps {
        let out = trainer.train_step(&mut theta, &theta_ref, step)?;
        on_step(&out, &theta)?;
        series.push(out.metrics);
    }
    Ok((theta, series))
}
