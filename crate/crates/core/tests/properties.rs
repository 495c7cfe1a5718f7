mod common;

use std::collections::HashSet;

use ccs_core::agent::{
    action_distribution, grad_log_prob, log_prob, rollout, trajectory_loglik, Action, PolicyParams, RolloutConfig,
    Trajectory,
};
use ccs_core::bottleneck::{apply_mode, psi, psi_again, BottleneckMode, MaskerVocab};
use ccs_core::grpo::{compute_advantages, kl_term, GrpoConfig, Trainer};
use ccs_core::reconstruct::{reconstruct_lexical, reconstruct_oracle, OracleContext, ReconstructionResult};
use ccs_core::reward::{cosine, cycle_reward, embed, majority_vote_reward, RewardConfig, RewardPipeline};
use ccs_core::world::scenario::perfect_plan;
use ccs_core::world::{generate_questions, generate_world, retrieve, GoldAudit, TEMPLATE_WORDS};
use common::{random_params, rng, small_world};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn dim() -> usize {
    RolloutConfig::default().feature_map().dim()
}

fn tokens() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-e]{1,3}", 0..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn world_generation_is_deterministic(seed in any::<u64>()) {
        let (kb, qs) = small_world(&mut rng(seed));
        let (kb2, qs2) = small_world(&mut rng(seed));
        prop_assert_eq!(kb.fingerprint(), kb2.fingerprint());
        prop_assert_eq!(qs, qs2);
    }

    #[test]
    fn retrieval_is_ranked_and_bounded(seed in any::<u64>(), k in 1usize..12) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let q = qs.choose(&mut r).unwrap();
        let hits = retrieve(&kb, &q.tokens, k);
        prop_assert!(hits.len() <= k);
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].fact_id < w[1].fact_id));
        }
        prop_assert!(hits.iter().all(|s| s.score > 0));
    }

    #[test]
    fn questions_name_only_their_anchor(seed in any::<u64>()) {
        let (kb, qs) = small_world(&mut rng(seed));
        for q in &qs {
            let anchor = &kb.entity(q.anchor).surface;
            for t in &q.tokens {
                if let Some(e) = kb.entity_by_surface(t) {
                    prop_assert_eq!(&e.surface, anchor);
                }
            }
        }
    }

    #[test]
    fn distribution_is_normalized_and_score_identity_holds(seed in any::<u64>(), scale in 0.0f64..4.0) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let theta = random_params(&mut r, dim(), scale);
        let t = rollout(&theta, &kb, &qs[0], &RolloutConfig::default(), &mut r);
        for d in &t.decisions {
            let p = action_distribution(&theta, &d.candidates);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            // E_p[∇ log p] = 0.
            let mut expected = vec![0.0; dim()];
            for (i, &pi) in p.iter().enumerate() {
                grad_log_prob(&theta, &d.candidates, i).add_into(&mut expected, pi);
            }
            prop_assert!(expected.iter().all(|x| x.abs() < 1e-10));
        }
    }

    #[test]
    fn grad_log_prob_matches_finite_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let theta = random_params(&mut r, dim(), 1.0);
        let t = rollout(&theta, &kb, &qs[0], &RolloutConfig::default(), &mut r);
        let h = 1e-6;
        for d in &t.decisions {
            let g = grad_log_prob(&theta, &d.candidates, d.chosen).to_dense(dim());
            for i in 0..dim() {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus.theta[i] += h;
                minus.theta[i] -= h;
                let fd = (log_prob(&plus, &d.candidates, d.chosen) - log_prob(&minus, &d.candidates, d.chosen)) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-6, "coordinate {}: {} vs {}", i, fd, g[i]);
            }
        }
    }

    #[test]
    fn rollout_shape_and_loglik(seed in any::<u64>(), budget in 1usize..6) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let cfg = RolloutConfig { budget, ..RolloutConfig::default() };
        let theta = random_params(&mut r, cfg.feature_map().dim(), 2.0);
        let t = rollout(&theta, &kb, qs.choose(&mut r).unwrap(), &cfg, &mut r);
        prop_assert!(t.validate().is_ok());
        prop_assert!(t.len() <= budget);
        prop_assert!(t.steps.last().unwrap().action.is_final());
        prop_assert_eq!(t.decisions.len(), t.steps.len());
        prop_assert!(t.steps[..t.len() - 1].iter().all(|s| !s.action.is_final() && s.observation.is_some()));
        let recomputed = trajectory_loglik(&theta, &t);
        prop_assert!((recomputed - t.behavior_loglik).abs() < 1e-9);
    }

    #[test]
    fn psi_masks_and_is_idempotent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let vocab = MaskerVocab::from_kb(&kb);
        let theta = random_params(&mut r, dim(), 2.0);
        let t = rollout(&theta, &kb, qs.choose(&mut r).unwrap(), &RolloutConfig::default(), &mut r);
        let b = psi(&t, &vocab);
        prop_assert_eq!(b.steps.len(), t.num_searches());
        prop_assert!(b.steps.iter().flat_map(|s| &s.action.tokens).all(|tok| !vocab.contains(tok)));
        prop_assert_eq!(psi_again(&b, &vocab), b);
    }

    #[test]
    fn oracle_reconstructs_perfect_plans(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let ctx = OracleContext::from_kb(&kb);
        let q = qs.choose(&mut r).unwrap();
        let t = Trajectory::scripted(q.id, &perfect_plan(&kb, q, 10));
        let rec = reconstruct_oracle(&psi(&t, &ctx.vocab).into(), &ctx);
        prop_assert_eq!(rec.tokens(), Some(&q.tokens[..]));
    }

    #[test]
    fn oracle_output_is_sound(seed in any::<u64>()) {
        // Whatever the oracle returns must be a question about a chain that
        // exists in the world.
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let ctx = OracleContext::from_kb(&kb);
        let theta = random_params(&mut r, dim(), 2.0);
        let t = rollout(&theta, &kb, qs.choose(&mut r).unwrap(), &RolloutConfig::default(), &mut r);
        if let ReconstructionResult::Question { tokens } = reconstruct_oracle(&psi(&t, &ctx.vocab).into(), &ctx) {
            let (anchor, relations) = ctx.template.parse(&tokens).expect("rendered from the template");
            let anchor = kb.entity_by_surface(&anchor).expect("known entity").id;
            let chain: Vec<usize> = relations.iter().map(|s| kb.relation_by_surface(s).unwrap().id).collect();
            prop_assert!(kb.follow_chain(anchor, &chain).is_some());
        }
    }

    #[test]
    fn lexical_ignores_observations(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let vocab = MaskerVocab::from_kb(&kb);
        let theta = random_params(&mut r, dim(), 2.0);
        let t = rollout(&theta, &kb, qs.choose(&mut r).unwrap(), &RolloutConfig::default(), &mut r);
        for mode in BottleneckMode::ALL {
            let input = apply_mode(&t, mode, &vocab);
            let mut blind = input.clone();
            blind.steps.iter_mut().for_each(|s| s.observation.snippets.clear());
            prop_assert_eq!(reconstruct_lexical(&input), reconstruct_lexical(&blind));
        }
    }

    #[test]
    fn reward_is_bounded(seed in any::<u64>(), rec in tokens()) {
        let (_, qs) = small_world(&mut rng(seed));
        let result = ReconstructionResult::Question { tokens: rec };
        let v: f64 = cycle_reward(&qs[0], &result, &RewardConfig::default());
        prop_assert!((0.0..=1.0).contains(&v));
        let own = ReconstructionResult::Question { tokens: qs[0].tokens.clone() };
        let self_reward: f64 = cycle_reward(&qs[0], &own, &RewardConfig::default());
        prop_assert!((self_reward - 1.0).abs() < 1e-12);
        let na: f64 = cycle_reward(&qs[0], &ReconstructionResult::NotReconstructible, &RewardConfig::default());
        prop_assert_eq!(na, 0.0);
    }

    #[test]
    fn cosine_is_symmetric_and_order_free(mut a in tokens(), b in tokens(), seed in any::<u64>()) {
        let ea = embed::<f64, _>(&a, 256);
        let eb = embed::<f64, _>(&b, 256);
        prop_assert_eq!(cosine(&ea, &eb), cosine(&eb, &ea));
        a.shuffle(&mut rng(seed));
        prop_assert_eq!(embed::<f64, _>(&a, 256), ea);
    }

    #[test]
    fn majority_vote_rewards_the_mode(finals in prop::collection::vec(prop::collection::vec("[ab]", 0..2), 1..8)) {
        let rewards: Vec<f64> = majority_vote_reward(&finals);
        let best = finals.iter().map(|f| finals.iter().filter(|g| *g == f).count()).max().unwrap();
        prop_assert_eq!(rewards.iter().sum::<f64>() as usize, best);
        let winners: HashSet<_> = finals.iter().zip(&rewards).filter(|(_, &r)| r == 1.0).map(|(f, _)| f).collect();
        prop_assert_eq!(winners.len(), 1);
    }

    #[test]
    fn advantages_are_centered_and_shift_invariant(
        rewards in prop::collection::vec(-5.0f64..5.0, 1..12),
        shift in -3.0f64..3.0,
    ) {
        let a = compute_advantages(&rewards, 1e-8);
        prop_assert!(a.iter().sum::<f64>().abs() < 1e-9);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let b = compute_advantages(&shifted, 1e-8);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        // Order is preserved.
        for i in 0..rewards.len() {
            for j in 0..rewards.len() {
                if rewards[i] < rewards[j] {
                    prop_assert!(a[i] <= a[j]);
                }
            }
        }
    }

    #[test]
    fn kl_is_nonnegative(seed in any::<u64>(), scale in 0.0f64..5.0) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let a = random_params(&mut r, dim(), scale);
        let b = random_params(&mut r, dim(), scale);
        let t = rollout(&a, &kb, &qs[0], &RolloutConfig::default(), &mut r);
        prop_assert!(kl_term(&a, &b, &t.decisions) >= 0.0);
        prop_assert_eq!(kl_term(&a, &a, &t.decisions), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn train_step_leaves_inputs_alone_and_zero_lr_is_a_no_op(seed in any::<u64>(), step in 0usize..50) {
        let mut r = rng(seed);
        let (kb, qs) = small_world(&mut r);
        let pipeline = RewardPipeline::new(&kb, RewardConfig::default()).unwrap();
        let audit = GoldAudit::default();
        let mut trainer = Trainer {
            kb: &kb,
            questions: &qs,
            pipeline: &pipeline,
            audit: &audit,
            rollout: RolloutConfig::default(),
            grpo: GrpoConfig { questions_per_step: 4, ..GrpoConfig::default() },
            seed,
        };
        let theta0 = random_params(&mut r, dim(), 1.0);
        let reference = theta0.clone();
        let qs_before = qs.clone();

        let mut theta = theta0.clone();
        let out = trainer.train_step(&mut theta, &reference, step).unwrap();
        prop_assert_eq!(&reference, &theta0);
        prop_assert_eq!(&qs, &qs_before);
        prop_assert!(theta.is_finite());
        prop_assert!(out.groups.iter().all(|g| g.rewards.iter().all(|x| (0.0..=1.0).contains(x))));

        trainer.grpo.learning_rate = 0.0;
        let mut frozen = theta0.clone();
        trainer.train_step(&mut frozen, &reference, step).unwrap();
        prop_assert_eq!(frozen, theta0);
    }

    #[test]
    fn tag_tokens_never_collide_with_vocabulary(seed in any::<u64>()) {
        let (kb, _) = small_world(&mut rng(seed));
        for e in &kb.entities {
            prop_assert!(!TEMPLATE_WORDS.contains(&e.surface.as_str()));
            prop_assert!(!ccs_core::world::EntityTag::is_tag_token(&e.surface));
        }
        let cfg = ccs_core::world::WorldConfig { seed, ..Default::default() };
        let kb = generate_world(&cfg).unwrap();
        prop_assert!(!generate_questions(&kb, &cfg).unwrap().is_empty());
    }
}

#[test]
fn final_actions_carry_no_observation() {
    let (kb, qs) = small_world(&mut rng(9));
    let theta = PolicyParams::<f64>::zeros(dim());
    let t = rollout(&theta, &kb, &qs[0], &RolloutConfig::default(), &mut rng(1));
    let last = t.steps.last().unwrap();
    assert!(matches!(last.action, Action::Final { .. }));
    assert!(last.observation.is_none());
}
