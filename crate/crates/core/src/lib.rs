//! Cycle-consistent search.
//!
//! Search agents are trained without gold answers: a trajectory is rewarded by
//! how well the originating question can be reconstructed from it after an
//! information bottleneck strips the final response and masks entities in the
//! search queries. Everything runs against a deterministic synthetic knowledge
//! graph so rewards, likelihoods and gradients are exactly checkable.
//!
//! The numeric core (policy, rewards, GRPO) is generic over [`Scalar`]; the
//! aliases below pin the `f64` instantiation the harness uses.

pub mod agent;
pub mod bottleneck;
pub mod error;
pub mod grpo;
pub mod harness;
pub mod reconstruct;
pub mod reward;
pub mod rng;
pub mod scalar;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Policy weights in double precision.
pub type Params = agent::PolicyParams<f64>;
/// Single-precision policy weights.
pub type ParamsF32 = agent::PolicyParams<f32>;
/// Hashed sentence embedding in double precision.
pub type Embedding = reward::EmbeddingVector<f64>;
/// Sampled group with double-precision rewards and advantages.
pub type Group = grpo::Group<f64>;
/// Step metrics emitted by the double-precision trainer.
pub type StepMetrics = grpo::StepMetrics<f64>;
