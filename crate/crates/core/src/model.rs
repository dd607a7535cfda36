//! Token-bucket transmission model: domain types and the closed-form
//! startup delay / token recursion.
//!
//! All quantities are carried in bits and seconds (`f64`); 1 Mb = 10^6 bits.
//!
//! A session serves a list of videos one after the other. Each video starts
//! with a burst of its initial segment at the server's burst rate, the bucket
//! drains at `burst_rate - token_rate` until the segment is out or the tokens
//! run dry (after which the remainder trickles at the token rate). Playback
//! then lasts the viewing time, during which the rest of the video is sent at
//! its encoding rate and the bucket refills at the token rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MBIT: f64 = 1e6;

/// Relative tolerance used when choosing the full-burst branch of the delay.
const BRANCH_RTOL: f64 = 1e-12;

/// Extra delay below this is treated as none.
pub const EXTRA_DELAY_EPS: f64 = 1e-9;

/// One recommendable short video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Video {
    pub id: String,
    pub duration_s: f64,
    pub encoding_rate_bps: f64,
    pub initial_segment_bits: f64,
    /// Predicted (or actual) viewing time. May exceed the duration when the
    /// user loops the video.
    pub viewing_time_s: f64,
}

impl Video {
    /// Builds a video whose initial segment is one second of content.
    pub fn new(
        id: impl Into<String>,
        duration_s: f64,
        encoding_rate_bps: f64,
        viewing_time_s: f64,
    ) -> Result<Self> {
        let v = Video {
            id: id.into(),
            duration_s,
            encoding_rate_bps,
            initial_segment_bits: encoding_rate_bps,
            viewing_time_s,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn with_initial_segment(mut self, bits: f64) -> Result<Self> {
        self.initial_segment_bits = bits;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.duration_s,
            self.encoding_rate_bps,
            self.initial_segment_bits,
            self.viewing_time_s,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::domain(format!("video {}: non-finite field", self.id)));
        }
        if self.duration_s <= 0.0 || self.encoding_rate_bps <= 0.0 || self.initial_segment_bits <= 0.0 {
            return Err(Error::domain(format!(
                "video {}: duration, encoding rate and initial segment must be positive",
                self.id
            )));
        }
        if self.initial_segment_bits > self.duration_s * self.encoding_rate_bps * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "video {}: initial segment ({} bits) larger than the whole video",
                self.id, self.initial_segment_bits
            )));
        }
        if self.viewing_time_s <= 0.0 {
            return Err(Error::domain(format!("video {}: viewing time must be positive", self.id)));
        }
        Ok(())
    }

    /// Bits still to send after the initial segment.
    #[inline]
    pub fn remaining_bits(&self) -> f64 {
        (self.duration_s * self.encoding_rate_bps - self.initial_segment_bits).max(0.0)
    }

    /// Bits consumed from the network during playback: capped at the
    /// remaining data, looping consumes nothing more.
    #[inline]
    pub fn playback_bits(&self) -> f64 {
        (self.viewing_time_s * self.encoding_rate_bps).min(self.remaining_bits())
    }
}

/// Token bucket shaping the server-to-user session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketConfig {
    pub capacity_bits: f64,
    pub token_rate_bps: f64,
    pub burst_rate_bps: f64,
    /// Token level when the first video of a list starts.
    pub initial_tokens_bits: f64,
}

impl BucketConfig {
    pub fn new(capacity_bits: f64, token_rate_bps: f64, burst_rate_bps: f64, initial_tokens_bits: f64) -> Result<Self> {
        let b = BucketConfig {
            capacity_bits,
            token_rate_bps,
            burst_rate_bps,
            initial_tokens_bits,
        };
        b.validate()?;
        Ok(b)
    }

    /// Convenience constructor in Mb / Mbps.
    pub fn from_mbits(capacity_mb: f64, token_rate_mbps: f64, burst_rate_mbps: f64, initial_mb: f64) -> Result<Self> {
        Self::new(
            capacity_mb * MBIT,
            token_rate_mbps * MBIT,
            burst_rate_mbps * MBIT,
            initial_mb * MBIT,
        )
    }

    pub fn with_initial_tokens(mut self, bits: f64) -> Result<Self> {
        self.initial_tokens_bits = bits;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.capacity_bits,
            self.token_rate_bps,
            self.burst_rate_bps,
            self.initial_tokens_bits,
        ];
        if !all.iter().all(|x| x.is_finite()) {
            return Err(Error::config("bucket parameters must be finite"));
        }
        if self.token_rate_bps <= 0.0 {
            return Err(Error::config("token rate must be positive"));
        }
        if self.burst_rate_bps <= self.token_rate_bps {
            return Err(Error::config(format!(
                "burst rate ({} bps) must exceed token rate ({} bps)",
                self.burst_rate_bps, self.token_rate_bps
            )));
        }
        if self.capacity_bits < 0.0 || self.initial_tokens_bits < 0.0 || self.initial_tokens_bits > self.capacity_bits {
            return Err(Error::config(format!(
                "initial tokens {} must lie in [0, capacity {}]",
                self.initial_tokens_bits, self.capacity_bits
            )));
        }
        Ok(())
    }

    /// Tokens needed at burst start so the segment leaves entirely at the
    /// burst rate, the bucket hitting zero exactly as it completes.
    #[inline]
    pub fn min_required_tokens(&self, segment_bits: f64) -> f64 {
        segment_bits - self.token_rate_bps * segment_bits / self.burst_rate_bps
    }

    /// Delay floor: the segment sent entirely at the burst rate.
    #[inline]
    pub fn burst_time(&self, segment_bits: f64) -> f64 {
        segment_bits / self.burst_rate_bps
    }
}

/// A video list: a permutation of indices into a video set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VideoList(Vec<usize>);

impl VideoList {
    pub fn new(order: Vec<usize>, set_len: usize) -> Result<Self> {
        if order.len() != set_len {
            return Err(Error::domain(format!(
                "list has {} entries, set has {set_len}",
                order.len()
            )));
        }
        let mut seen = vec![false; set_len];
        for &i in &order {
            if i >= set_len || std::mem::replace(&mut seen[i], true) {
                return Err(Error::domain(format!("{order:?} is not a permutation of 0..{set_len}")));
            }
        }
        Ok(VideoList(order))
    }

    pub fn identity(n: usize) -> Self {
        VideoList((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDelay {
    pub position: usize,
    pub video_id: String,
    pub startup_delay_s: f64,
    pub tokens_at_start_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub per_video: Vec<VideoDelay>,
    pub max_delay_s: f64,
}

impl DelayReport {
    pub fn delays(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_video.iter().map(|d| d.startup_delay_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainStats {
    pub min_required_tokens_bits: f64,
    pub net_increment_bits: f64,
    pub is_positive_gain: bool,
}

fn full_burst(segment_bits: f64, tokens_bits: f64, bucket: &BucketConfig) -> bool {
    tokens_bits + bucket.token_rate_bps * segment_bits / bucket.burst_rate_bps >= segment_bits * (1.0 - BRANCH_RTOL)
}

#[inline]
fn delay_unchecked(segment_bits: f64, tokens_bits: f64, bucket: &BucketConfig) -> f64 {
    if full_burst(segment_bits, tokens_bits, bucket) {
        segment_bits / bucket.burst_rate_bps
    } else {
        (segment_bits - tokens_bits) / bucket.token_rate_bps
    }
}

/// Tokens left when the initial segment has been delivered.
#[inline]
fn after_burst(segment_bits: f64, tokens_bits: f64, delay_s: f64, bucket: &BucketConfig) -> f64 {
    if full_burst(segment_bits, tokens_bits, bucket) {
        (tokens_bits - (segment_bits - bucket.token_rate_bps * delay_s)).max(0.0)
    } else {
        // the bucket ran dry during the burst
        0.0
    }
}

#[inline]
fn next_tokens_unchecked(prev: &Video, tokens_bits: f64, delay_s: f64, bucket: &BucketConfig) -> f64 {
    let residual = after_burst(prev.initial_segment_bits, tokens_bits, delay_s, bucket);
    let gain = bucket.token_rate_bps * prev.viewing_time_s - prev.playback_bits();
    (residual + gain).clamp(0.0, bucket.capacity_bits)
}

/// Startup delay of a segment of `segment_bits` when the burst starts with
/// `tokens_bits` in the bucket.
pub fn startup_delay(segment_bits: f64, tokens_bits: f64, bucket: &BucketConfig) -> Result<f64> {
    bucket.validate()?;
    if !(segment_bits > 0.0) || !segment_bits.is_finite() {
        return Err(Error::domain(format!("segment size must be positive, got {segment_bits}")));
    }
    if !(0.0..=bucket.capacity_bits).contains(&tokens_bits) {
        return Err(Error::Range {
            value: tokens_bits,
            lo: 0.0,
            hi: bucket.capacity_bits,
        });
    }
    Ok(delay_unchecked(segment_bits, tokens_bits, bucket))
}

/// Token level when the video after `prev` starts, given the level and the
/// startup delay `prev` saw.
pub fn next_tokens(prev: &Video, prev_tokens_bits: f64, prev_delay_s: f64, bucket: &BucketConfig) -> f64 {
    next_tokens_unchecked(prev, prev_tokens_bits, prev_delay_s, bucket)
}

pub fn gain_stats(v: &Video, bucket: &BucketConfig) -> GainStats {
    let p = bucket.min_required_tokens(v.initial_segment_bits);
    let delta = bucket.token_rate_bps * v.viewing_time_s - v.playback_bits();
    GainStats {
        min_required_tokens_bits: p,
        net_increment_bits: delta,
        is_positive_gain: delta >= p,
    }
}

/// Evaluates a list with the forward recursion and reports every delay.
pub fn evaluate_list(videos: &[Video], list: &VideoList, bucket: &BucketConfig) -> Result<DelayReport> {
    if videos.is_empty() {
        return Err(Error::domain("cannot evaluate an empty video list"));
    }
    if list.len() != videos.len() {
        return Err(Error::domain(format!(
            "list of {} for a set of {}",
            list.len(),
            videos.len()
        )));
    }
    bucket.validate()?;
    for v in videos {
        v.validate()?;
    }
    let mut tokens = bucket.initial_tokens_bits;
    let mut max_delay = f64::NEG_INFINITY;
    let mut per_video = Vec::with_capacity(videos.len());
    for (position, &idx) in list.as_slice().iter().enumerate() {
        let v = &videos[idx];
        let d = delay_unchecked(v.initial_segment_bits, tokens, bucket);
        per_video.push(VideoDelay {
            position,
            video_id: v.id.clone(),
            startup_delay_s: d,
            tokens_at_start_bits: tokens,
        });
        max_delay = max_delay.max(d);
        tokens = next_tokens_unchecked(v, tokens, d, bucket);
    }
    Ok(DelayReport {
        per_video,
        max_delay_s: max_delay,
    })
}

/// Maximum startup delay of `order` without building a report. Inputs are
/// assumed valid; this is the hot path for search and training.
pub fn max_delay(videos: &[Video], order: &[usize], bucket: &BucketConfig) -> f64 {
    let mut tokens = bucket.initial_tokens_bits;
    let mut worst = f64::NEG_INFINITY;
    for &idx in order {
        let v = &videos[idx];
        let d = delay_unchecked(v.initial_segment_bits, tokens, bucket);
        worst = worst.max(d);
        tokens = next_tokens_unchecked(v, tokens, d, bucket);
    }
    worst
}

/// One step of the recursion: (delay, tokens for the next video).
#[inline]
pub(crate) fn step(v: &Video, tokens_bits: f64, bucket: &BucketConfig) -> (f64, f64) {
    let d = delay_unchecked(v.initial_segment_bits, tokens_bits, bucket);
    (d, next_tokens_unchecked(v, tokens_bits, d, bucket))
}

/// Eight equal-rate videos, four watched briefly and four watched long, with
/// a bucket small enough that the blocked order drains it. Returns the set,
/// the bucket, the blocked order and the interleaved order.
pub fn interleaving_demo() -> (Vec<Video>, BucketConfig, VideoList, VideoList) {
    let rate = 1.0 * MBIT;
    let videos: Vec<Video> = (0..8)
        .map(|i| {
            let viewing = if i < 4 { 0.1 } else { 10.0 };
            Video::new(format!("v{}", i + 1), 30.0, rate, viewing).expect("valid demo video")
        })
        .collect();
    let bucket = BucketConfig::from_mbits(2.0, 2.0, 10.0, 2.0).expect("valid demo bucket");
    let blocked = VideoList::identity(8);
    let interleaved = VideoList::new(vec![0, 4, 1, 5, 2, 6, 3, 7], 8).expect("permutation");
    (videos, bucket, blocked, interleaved)
}
