//! Self-play training arena driven by Elo ratings.
//!
//! The crate simulates a single learning policy that repeatedly plays against
//! a frozen pool of opponents. Matchmaking is a softmax over rating distance,
//! verdicts come from configurable pairwise judges, the policy itself is a
//! scalar Gaussian surrogate trained with a clipped-ratio objective, and all
//! match outcomes feed a batched Elo update. A separate noise lab estimates
//! judge noise from absolute-rating and pairwise-comparison data and runs the
//! comparison-vs-absolute sample-efficiency experiment.
//!
//! Every random draw in the crate flows through seeds derived from a single
//! run seed, so whole simulations replay bit-identically.

pub mod cache;
pub mod config;
pub mod gateway;
pub mod judging;
pub mod matchmaking;
pub mod noise;
pub mod numerics;
pub mod orchestrator;
pub mod policy;
pub mod rating;
pub mod seed;
