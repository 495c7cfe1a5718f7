#![allow(dead_code)]

use ccs_core::agent::{rollout, PolicyParams, RolloutConfig, Trajectory};
use ccs_core::grpo::Group;
use ccs_core::world::{generate_questions, generate_world, KnowledgeBase, Question, WorldConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small random 2-hop world with at least one question.
pub fn small_world<R: Rng>(r: &mut R) -> (KnowledgeBase, Vec<Question>) {
    loop {
        let n_entities = r.gen_range(10..=18);
        let n_relations = r.gen_range(3..=5);
        let cfg = WorldConfig {
            n_entities,
            n_relations,
            n_facts: r.gen_range(n_entities..=2 * n_entities),
            n_distractors: r.gen_range(0..=4),
            hops: 2,
            n_questions: r.gen_range(3..=8),
            seed: r.gen(),
        };
        if let Ok(kb) = generate_world(&cfg) {
            if let Ok(qs) = generate_questions(&kb, &cfg) {
                if !qs.is_empty() {
                    return (kb, qs);
                }
            }
        }
    }
}

pub fn random_params<R: Rng>(r: &mut R, dim: usize, scale: f64) -> PolicyParams<f64> {
    PolicyParams {
        theta: (0..dim).map(|_| r.gen_range(-scale..=scale)).collect(),
    }
}

pub fn perturb<R: Rng>(r: &mut R, p: &PolicyParams<f64>, scale: f64) -> PolicyParams<f64> {
    PolicyParams {
        theta: p.theta.iter().map(|w| w + r.gen_range(-scale..=scale)).collect(),
    }
}

/// `g` rollouts of one question under `theta_old` with random rewards.
pub fn random_group<R: Rng>(
    r: &mut R,
    kb: &KnowledgeBase,
    q: &Question,
    theta_old: &PolicyParams<f64>,
    g: usize,
) -> Group<f64> {
    let cfg = RolloutConfig::default();
    let trajs: Vec<Trajectory> = (0..g).map(|_| rollout(theta_old, kb, q, &cfg, r)).collect();
    let rewards: Vec<f64> = (0..g).map(|_| r.gen_range(0.0..1.0)).collect();
    Group::new(q.id, trajs, rewards, 1e-8)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
