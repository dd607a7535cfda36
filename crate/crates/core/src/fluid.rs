//! Event-driven fluid simulation of a session through the token bucket.
//!
//! The bucket level is piecewise linear in time. The simulator walks from
//! event to event (burst start, token exhaustion, segment complete, rest of
//! the video sent, bucket full, viewing end) using only the instantaneous
//! rates, so it shares no arithmetic with the closed-form recursion in
//! [`crate::model`] and serves as its oracle.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BucketConfig, DelayReport, Video, VideoDelay, VideoList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Initial segment in flight at the burst rate.
    Burst,
    /// Rest of the video being sent at its encoding rate.
    Slow,
    /// Nothing to send; the user is still watching.
    Idle,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Burst => "burst",
            Phase::Slow => "slow",
            Phase::Idle => "idle",
        }
    }
}

/// Start of a linear piece of the token level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub time_s: f64,
    pub tokens_bits: f64,
    pub sender_rate_bps: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub breakpoints: Vec<Breakpoint>,
}

impl TokenTrace {
    pub fn horizon(&self) -> (f64, f64) {
        match (self.breakpoints.first(), self.breakpoints.last()) {
            (Some(a), Some(b)) => (a.time_s, b.time_s),
            _ => (0.0, 0.0),
        }
    }

    /// Token level at `t`, interpolating linearly between breakpoints.
    pub fn token_level_at(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.horizon();
        if self.breakpoints.is_empty() || !(lo..=hi).contains(&t) {
            return Err(Error::Range { value: t, lo, hi });
        }
        let idx = self.breakpoints.partition_point(|b| b.time_s <= t);
        let a = &self.breakpoints[idx - 1];
        if a.time_s == t || idx == self.breakpoints.len() {
            return Ok(a.tokens_bits);
        }
        let b = &self.breakpoints[idx];
        let frac = (t - a.time_s) / (b.time_s - a.time_s);
        Ok(a.tokens_bits + frac * (b.tokens_bits - a.tokens_bits))
    }

    /// Slopes of each linear piece, in bits per second.
    pub fn slopes(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].tokens_bits - w[0].tokens_bits) / (w[1].time_s - w[0].time_s))
            .collect()
    }

    pub fn min_tokens(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.tokens_bits).fold(f64::INFINITY, f64::min)
    }

    /// Writes `time_s,tokens_bits,phase` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_s", "tokens_bits", "phase"])?;
        for b in &self.breakpoints {
            out.write_record([b.time_s.to_string(), b.tokens_bits.to_string(), b.phase.as_str().to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub report: DelayReport,
    pub trace: TokenTrace,
    /// Bits received by the user for each list position.
    pub delivered_bits: Vec<f64>,
}

struct Engine<'a> {
    bucket: &'a BucketConfig,
    t: f64,
    tokens: f64,
    trace: Vec<Breakpoint>,
}

impl Engine<'_> {
    fn mark(&mut self, sender_rate_bps: f64, phase: Phase) {
        let bp = Breakpoint {
            time_s: self.t,
            tokens_bits: self.tokens,
            sender_rate_bps,
            phase,
        };
        match self.trace.last_mut() {
            Some(last) if last.time_s >= self.t => *last = bp,
            _ => self.trace.push(bp),
        }
    }

    /// Download rate and bucket slope for a sender rate at the current level.
    fn rates(&self, sender: f64) -> (f64, f64) {
        let mu = self.bucket.token_rate_bps;
        let download = if self.tokens > 0.0 { sender } else { sender.min(mu) };
        let mut slope = mu - download;
        if slope > 0.0 && self.tokens >= self.bucket.capacity_bits {
            slope = 0.0;
        }
        (download, slope)
    }

    /// Advances by `dt` at `slope`, snapping to the bucket limits that were
    /// the event for this step.
    fn advance(&mut self, dt: f64, slope: f64, hit_empty: bool, hit_full: bool) {
        self.t += dt;
        self.tokens = if hit_empty {
            0.0
        } else if hit_full {
            self.bucket.capacity_bits
        } else {
            (self.tokens + slope * dt).clamp(0.0, self.bucket.capacity_bits)
        };
    }

    /// Time until the level reaches 0 or C at `slope`, whichever applies.
    fn limit_times(&self, slope: f64) -> (f64, f64) {
        let to_empty = if slope < 0.0 { self.tokens / -slope } else { f64::INFINITY };
        let to_full = if slope > 0.0 {
            (self.bucket.capacity_bits - self.tokens) / slope
        } else {
            f64::INFINITY
        };
        (to_empty, to_full)
    }

    /// Delivers the initial segment. Returns the time it took.
    fn burst(&mut self, segment_bits: f64) -> f64 {
        let start = self.t;
        let sender = self.bucket.burst_rate_bps;
        let mut remaining = segment_bits;
        while remaining > 0.0 {
            let (download, slope) = self.rates(sender);
            self.mark(sender, Phase::Burst);
            let to_done = remaining / download;
            let (to_empty, _) = self.limit_times(slope);
            if to_empty < to_done {
                self.advance(to_empty, slope, true, false);
                remaining -= download * to_empty;
            } else {
                self.advance(to_done, slope, false, false);
                remaining = 0.0;
            }
        }
        self.t - start
    }

    /// Plays the video for its viewing time while the rest is sent.
    /// Returns bits delivered during playback.
    fn playback(&mut self, v: &Video) -> f64 {
        let end = self.t + v.viewing_time_s;
        let mut rest = v.remaining_bits();
        let mut delivered = 0.0;
        while self.t < end {
            let (sender, phase) = if rest > 0.0 {
                (v.encoding_rate_bps, Phase::Slow)
            } else {
                (0.0, Phase::Idle)
            };
            let (download, slope) = self.rates(sender);
            self.mark(sender, phase);
            let to_end = end - self.t;
            let to_done = if download > 0.0 { rest / download } else { f64::INFINITY };
            let (to_empty, to_full) = self.limit_times(slope);
            let dt = to_end.min(to_done).min(to_empty).min(to_full);
            if dt == to_end {
                delivered += download * dt;
                rest -= download * dt;
                self.advance(dt, slope, false, false);
                self.t = end;
            } else if dt == to_done {
                delivered += rest;
                rest = 0.0;
                self.advance(dt, slope, false, false);
            } else {
                delivered += download * dt;
                rest -= download * dt;
                self.advance(dt, slope, dt == to_empty, dt == to_full);
            }
        }
        delivered
    }
}

/// Simulates the session for `list` and reports delays and the token trace.
pub fn simulate(videos: &[Video], list: &VideoList, bucket: &BucketConfig) -> Result<Simulation> {
    if videos.is_empty() {
        return Err(Error::domain("cannot simulate an empty video list"));
    }
    if list.len() != videos.len() {
        return Err(Error::domain("list length does not match the set"));
    }
    bucket.validate()?;
    for v in videos {
        v.validate()?;
    }

    let mut engine = Engine {
        bucket,
        t: 0.0,
        tokens: bucket.initial_tokens_bits,
        trace: Vec::new(),
    };
    let mut per_video = Vec::with_capacity(videos.len());
    let mut delivered_bits = Vec::with_capacity(videos.len());
    let mut max_delay = f64::NEG_INFINITY;
    for (position, &idx) in list.as_slice().iter().enumerate() {
        let v = &videos[idx];
        let tokens_at_start = engine.tokens;
        let delay = engine.burst(v.initial_segment_bits);
        let played = engine.playback(v);
        max_delay = max_delay.max(delay);
        per_video.push(VideoDelay {
            position,
            video_id: v.id.clone(),
            startup_delay_s: delay,
            tokens_at_start_bits: tokens_at_start,
        });
        delivered_bits.push(v.initial_segment_bits + played);
    }
    engine.mark(0.0, Phase::Idle);

    Ok(Simulation {
        report: DelayReport {
            per_video,
            max_delay_s: max_delay,
        },
        trace: TokenTrace {
            breakpoints: engine.trace,
        },
        delivered_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{interleaving_demo, MBIT};

    fn single(b_mb: f64, k_mb: f64) -> (Vec<Video>, BucketConfig) {
        let v = Video::new("a", 30.0, 2.0 * MBIT, 5.0)
            .unwrap()
            .with_initial_segment(b_mb * MBIT)
            .unwrap();
        (vec![v], BucketConfig::from_mbits(4.0, 2.0, 10.0, k_mb).unwrap())
    }

    #[test]
    fn two_stage_burst() {
        let (v, b) = single(2.0, 1.0);
        let sim = simulate(&v, &VideoList::identity(1), &b).unwrap();
        assert!((sim.report.max_delay_s - 0.5).abs() < 1e-12);
        let exhaustion = sim
            .trace
            .breakpoints
            .iter()
            .find(|p| p.phase == Phase::Burst && p.tokens_bits == 0.0)
            .expect("exhaustion breakpoint");
        assert!((exhaustion.time_s - 0.125).abs() < 1e-12);
    }

    #[test]
    fn full_burst_has_no_exhaustion() {
        let (v, b) = single(2.0, 4.0);
        let sim = simulate(&v, &VideoList::identity(1), &b).unwrap();
        assert!((sim.report.max_delay_s - 0.2).abs() < 1e-12);
        assert!(sim
            .trace
            .breakpoints
            .iter()
            .filter(|p| p.phase == Phase::Burst)
            .all(|p| p.tokens_bits > 0.0));
    }

    #[test]
    fn level_interpolation() {
        let (v, b) = single(2.0, 1.0);
        let sim = simulate(&v, &VideoList::identity(1), &b).unwrap();
        let tr = &sim.trace;
        // burst slope mu - rhat = -8 Mbps from 1 Mb
        let k = tr.token_level_at(0.0625).unwrap();
        assert!((k - (1e6 - 8e6 * 0.0625)).abs() < 1e-6);
        for bp in &tr.breakpoints {
            assert_eq!(tr.token_level_at(bp.time_s).unwrap(), bp.tokens_bits);
        }
        assert!(tr.token_level_at(-1.0).is_err());
        assert!(tr.token_level_at(1e9).is_err());
    }

    #[test]
    fn refill_interpolation() {
        // r = mu/2 during playback: slope mu - r = +1 Mbps; then idle slope mu
        let v = Video::new("a", 2.0, 1.0 * MBIT, 20.0).unwrap();
        let b = BucketConfig::from_mbits(40.0, 2.0, 10.0, 10.0).unwrap();
        let sim = simulate(&[v], &VideoList::identity(1), &b).unwrap();
        let tr = &sim.trace;
        let idle = tr.breakpoints.iter().find(|p| p.phase == Phase::Idle).unwrap();
        let k = tr.token_level_at(idle.time_s + 2.0).unwrap();
        assert!((k - (idle.tokens_bits + 2.0 * 2e6)).abs() < 1e-6);
    }

    #[test]
    fn blocked_order_drains_bucket() {
        let (videos, bucket, blocked, interleaved) = interleaving_demo();
        let a = simulate(&videos, &blocked, &bucket).unwrap();
        let b = simulate(&videos, &interleaved, &bucket).unwrap();
        assert_eq!(a.trace.min_tokens(), 0.0);
        assert!(a.report.max_delay_s > b.report.max_delay_s);
        // videos 3 through 5 start their burst short of tokens
        for pos in 2..5 {
            assert!(a.report.per_video[pos].startup_delay_s > 0.1 + 1e-9);
        }
    }

    #[test]
    fn breakpoints_well_formed() {
        let (videos, bucket, blocked, _) = interleaving_demo();
        let sim = simulate(&videos, &blocked, &bucket).unwrap();
        let bps = &sim.trace.breakpoints;
        assert!(bps.windows(2).all(|w| w[0].time_s < w[1].time_s));
        assert!(bps.iter().all(|b| (0.0..=bucket.capacity_bits).contains(&b.tokens_bits)));
        let mut buf = Vec::new();
        sim.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_s,tokens_bits,phase\n"));
        assert_eq!(text.lines().count(), bps.len() + 1);
    }

    #[test]
    fn empty_is_rejected() {
        let b = BucketConfig::from_mbits(4.0, 2.0, 10.0, 4.0).unwrap();
        assert!(simulate(&[], &VideoList::identity(0), &b).is_err());
    }
}
