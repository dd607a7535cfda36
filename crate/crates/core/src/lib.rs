//! Startup-delay aware ordering of short videos delivered through a
//! token-bucket shaped session.
//!
//! - [`model`]: domain types and the closed-form delay / token recursion
//! - [`fluid`]: event-driven fluid simulator used as an independent oracle
//! - [`order`]: RAND, INTL, GRDY and an exact branch-and-bound orderer
//! - [`neural`]: pointer-network actor-critic (PSAC / NSAC) trained from scratch
//! - [`hardness`]: hard instance families and their optimal-form delay
//! - [`data`]: trace CSV ingestion, synthetic traces, set sampling, noise
//! - [`sweep`]: parameter sweeps over the evaluation sets

pub mod data;
pub mod error;
pub mod fluid;
pub mod hardness;
pub mod model;
pub mod neural;
pub mod order;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{evaluate_list, gain_stats, next_tokens, startup_delay, BucketConfig, DelayReport, GainStats, Video, VideoList};
