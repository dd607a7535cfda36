//! Pointer-network actor with a learned critic baseline.
//!
//! Every video becomes a 4-feature row, is embedded into `m` dimensions and
//! encoded by an LSTM. An LSTM decoder, started from the encoder's final
//! state, points at one unplaced video per step through additive attention.
//! The critic mean-pools encoder states and regresses the achieved maximum
//! startup delay. With [`Sharing::Psac`] the critic reuses the actor's
//! embedding and encoder; with [`Sharing::Nsac`] it owns a copy.

mod adam;
mod gradcheck;
mod lstm;
mod net;
mod params;
mod train;

use std::time::Instant;

use rand_chacha::ChaCha8Rng;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, grad_check_where, relative_error, GradCheckReport};
pub use net::{critic_predict, critic_predict_encoded, decode, embed, encode, features, DecodeMode, Decoded, EmbeddedSeq, EncodedSeq};
pub use params::{Affine, CriticHead, LstmParams, NetParams, Pointer, Sharing, Trunk, FEATURES};
pub use train::{train, train_from, StepStats, TrainConfig, Trained};

use crate::error::{Error, Result};
use crate::model::{BucketConfig, Video};
use crate::order::{Algorithm, OrderResult};

/// Greedy decoding of a trained network.
pub fn order_neural(params: &NetParams, videos: &[Video], bucket: &BucketConfig) -> Result<OrderResult> {
    if videos.is_empty() {
        return Err(Error::domain("video set is empty"));
    }
    bucket.validate()?;
    for v in videos {
        v.validate()?;
    }
    let started = Instant::now();
    let d = decode::<ChaCha8Rng>(params, videos, DecodeMode::Greedy);
    let algorithm = match params.sharing {
        Sharing::Psac => Algorithm::Psac,
        Sharing::Nsac => Algorithm::Nsac,
    };
    OrderResult::build(videos, d.order, bucket, algorithm, started, false)
}
