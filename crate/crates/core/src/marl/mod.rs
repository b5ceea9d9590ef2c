//! Hierarchical and flat multi-agent actor-critic learners.

pub mod gae;
pub mod nn;
pub mod policy;
pub mod train;

pub use gae::{gae, gae_semi_markov, standardize};
pub use nn::{masked_softmax, Adam, Head, Linear, LossCoefs, Mlp};
pub use policy::{ActMode, Algorithm, Decision, LearnedController, NetKind, NetworkShape, PolicySet};
pub use train::{evaluate_policy, rollout, train, Checkpoint, CurvePoint, TrainConfig, Trainer};
