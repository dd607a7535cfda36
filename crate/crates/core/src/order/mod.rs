//! Non-neural orderers and the exact search.

mod exact;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate_list, gain_stats, BucketConfig, DelayReport, Video, VideoList, EXTRA_DELAY_EPS};

pub use exact::{order_exact, DEFAULT_NODE_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rand,
    Intl,
    Grdy,
    Exact,
    Psac,
    Nsac,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Rand => "rand",
            Algorithm::Intl => "intl",
            Algorithm::Grdy => "grdy",
            Algorithm::Exact => "exact",
            Algorithm::Psac => "psac",
            Algorithm::Nsac => "nsac",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, Algorithm::Psac | Algorithm::Nsac)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "rand" => Algorithm::Rand,
            "intl" => Algorithm::Intl,
            "grdy" => Algorithm::Grdy,
            "exact" => Algorithm::Exact,
            "psac" => Algorithm::Psac,
            "nsac" => Algorithm::Nsac,
            other => return Err(Error::config(format!("unknown algorithm {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderResult {
    pub list: VideoList,
    pub report: DelayReport,
    pub algorithm: Algorithm,
    pub wall_time_s: f64,
    /// Only meaningful for the exact search: whether the optimum was proven.
    pub optimal: bool,
}

impl OrderResult {
    pub(crate) fn build(
        videos: &[Video],
        order: Vec<usize>,
        bucket: &BucketConfig,
        algorithm: Algorithm,
        started: Instant,
        optimal: bool,
    ) -> Result<Self> {
        let list = VideoList::new(order, videos.len())?;
        let report = evaluate_list(videos, &list, bucket)?;
        Ok(OrderResult {
            list,
            report,
            algorithm,
            wall_time_s: started.elapsed().as_secs_f64(),
            optimal,
        })
    }

    pub fn max_delay_s(&self) -> f64 {
        self.report.max_delay_s
    }
}

fn non_empty(videos: &[Video]) -> Result<()> {
    if videos.is_empty() {
        Err(Error::domain("video set is empty"))
    } else {
        Ok(())
    }
}

/// Uniform random permutation, reproducible for a seed.
pub fn order_rand(videos: &[Video], bucket: &BucketConfig, seed: u64) -> Result<OrderResult> {
    non_empty(videos)?;
    let started = Instant::now();
    let order = rand_permutation(videos.len(), seed);
    OrderResult::build(videos, order, bucket, Algorithm::Rand, started, false)
}

pub(crate) fn rand_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Shortest viewing time, longest, next shortest, next longest, ...
pub fn order_intl(videos: &[Video], bucket: &BucketConfig) -> Result<OrderResult> {
    non_empty(videos)?;
    let started = Instant::now();
    OrderResult::build(videos, intl_permutation(videos), bucket, Algorithm::Intl, started, false)
}

pub(crate) fn intl_permutation(videos: &[Video]) -> Vec<usize> {
    let mut sorted: Vec<usize> = (0..videos.len()).collect();
    // stable sort keeps the original index order among ties
    sorted.sort_by(|&a, &b| videos[a].viewing_time_s.total_cmp(&videos[b].viewing_time_s));
    let mut order = Vec::with_capacity(sorted.len());
    let (mut lo, mut hi) = (0usize, sorted.len());
    while lo < hi {
        order.push(sorted[lo]);
        lo += 1;
        if lo < hi {
            hi -= 1;
            order.push(sorted[hi]);
        }
    }
    order
}

/// Greedy: start from the negative-gain videos in ascending net increment and
/// splice in positive-gain videos, smallest increment first, where the
/// bucket is about to run out.
pub fn order_grdy(videos: &[Video], bucket: &BucketConfig) -> Result<OrderResult> {
    non_empty(videos)?;
    bucket.validate()?;
    let started = Instant::now();
    let (order, _) = grdy_permutation(videos, bucket);
    OrderResult::build(videos, order, bucket, Algorithm::Grdy, started, false)
}

/// Returns the list and the number of insertions performed.
pub(crate) fn grdy_permutation(videos: &[Video], bucket: &BucketConfig) -> (Vec<usize>, usize) {
    let stats: Vec<_> = videos.iter().map(|v| gain_stats(v, bucket)).collect();
    let by_delta = |idx: &mut Vec<usize>| {
        idx.sort_by(|&a, &b| stats[a].net_increment_bits.total_cmp(&stats[b].net_increment_bits));
    };
    let (mut positive, mut list): (Vec<usize>, Vec<usize>) =
        (0..videos.len()).partition(|&i| stats[i].is_positive_gain);
    by_delta(&mut positive);
    by_delta(&mut list);
    let has_negative = !list.is_empty();

    let mut insertions = 0;
    for p in positive {
        let at = if has_negative {
            insertion_index(videos, &list, bucket)
        } else {
            list.len()
        };
        list.insert(at, p);
        insertions += 1;
    }
    (list, insertions)
}

/// Index just before the last video of the extra-delay-free prefix, or the
/// front when even the first video is delayed.
fn insertion_index(videos: &[Video], list: &[usize], bucket: &BucketConfig) -> usize {
    let mut tokens = bucket.initial_tokens_bits;
    let mut prefix = 0usize;
    for &idx in list {
        let v = &videos[idx];
        let (d, next) = crate::model::step(v, tokens, bucket);
        if d - bucket.burst_time(v.initial_segment_bits) > EXTRA_DELAY_EPS {
            break;
        }
        prefix += 1;
        tokens = next;
    }
    prefix.saturating_sub(1)
}

/// Runs one of the non-neural orderers. `seed` only affects RAND.
pub fn order_with(algorithm: Algorithm, videos: &[Video], bucket: &BucketConfig, seed: u64) -> Result<OrderResult> {
    match algorithm {
        Algorithm::Rand => order_rand(videos, bucket, seed),
        Algorithm::Intl => order_intl(videos, bucket),
        Algorithm::Grdy => order_grdy(videos, bucket),
        Algorithm::Exact => order_exact(videos, bucket, DEFAULT_NODE_BUDGET),
        Algorithm::Psac | Algorithm::Nsac => Err(Error::config(format!(
            "{algorithm} needs trained parameters, use neural::order_neural"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{interleaving_demo, MBIT};

    fn with_times(times: &[f64]) -> Vec<Video> {
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| Video::new(format!("{i}"), 60.0, 2.0 * MBIT, t).unwrap())
            .collect()
    }

    fn times_of(videos: &[Video], r: &OrderResult) -> Vec<f64> {
        r.list.as_slice().iter().map(|&i| videos[i].viewing_time_s).collect()
    }

    fn bucket() -> BucketConfig {
        BucketConfig::from_mbits(4.0, 2.0, 10.0, 4.0).unwrap()
    }

    #[test]
    fn intl_examples() {
        let v = with_times(&[4.0, 2.0, 8.0, 6.0]);
        assert_eq!(times_of(&v, &order_intl(&v, &bucket()).unwrap()), vec![2.0, 8.0, 4.0, 6.0]);
        let v = with_times(&[1.0, 9.0, 3.0, 7.0, 5.0]);
        assert_eq!(times_of(&v, &order_intl(&v, &bucket()).unwrap()), vec![1.0, 9.0, 3.0, 7.0, 5.0]);
    }

    #[test]
    fn intl_ties_alternate_front_and_back_of_index_order() {
        let v = with_times(&[5.0; 5]);
        let r = order_intl(&v, &bucket()).unwrap();
        // the sorted sequence is the original index order
        assert_eq!(r.list.as_slice(), &[0, 4, 1, 3, 2]);
        let v = with_times(&[5.0; 1]);
        assert_eq!(order_intl(&v, &bucket()).unwrap().list.as_slice(), &[0]);
    }

    #[test]
    fn rand_is_seeded() {
        let v = with_times(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let a = order_rand(&v, &bucket(), 7).unwrap();
        let b = order_rand(&v, &bucket(), 7).unwrap();
        assert_eq!(a.list, b.list);
        let one = with_times(&[1.0]);
        assert_eq!(order_rand(&one, &bucket(), 3).unwrap().list.as_slice(), &[0]);
    }

    #[test]
    fn rand_is_uniform_on_four() {
        let mut counts = std::collections::HashMap::new();
        let draws = 10_000;
        for seed in 0..draws {
            *counts.entry(rand_permutation(4, seed)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 24);
        let p = 1.0 / 24.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for &c in counts.values() {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma + 1.0, "count {c}");
            chi2 += (c as f64 - mean).powi(2) / mean;
        }
        // 23 dof, 0.999 quantile ~ 49.7
        assert!(chi2 < 49.7, "chi2 = {chi2}");
    }

    #[test]
    fn empty_sets_rejected() {
        let b = bucket();
        assert!(order_rand(&[], &b, 0).is_err());
        assert!(order_intl(&[], &b).is_err());
        assert!(order_grdy(&[], &b).is_err());
        assert!(order_exact(&[], &b, 10).is_err());
    }

    #[test]
    fn grdy_all_positive_is_ascending_delta() {
        // r = 1 < mu = 2: delta = tau (Mb), all above P = 1.6 Mb
        let videos: Vec<Video> = [9.0, 3.0, 5.0, 7.0]
            .iter()
            .enumerate()
            .map(|(i, &t)| Video::new(format!("{i}"), 60.0, MBIT, t).unwrap().with_initial_segment(2e6).unwrap())
            .collect();
        let r = order_grdy(&videos, &bucket()).unwrap();
        assert_eq!(r.list.as_slice(), &[1, 2, 3, 0]);
    }

    #[test]
    fn grdy_interleaves_demo_set() {
        let (videos, bucket, blocked, _) = interleaving_demo();
        let g = order_grdy(&videos, &bucket).unwrap();
        let blocked = evaluate_list(&videos, &blocked, &bucket).unwrap();
        assert!(g.max_delay_s() <= blocked.max_delay_s);
        let (_, insertions) = grdy_permutation(&videos, &bucket);
        assert_eq!(insertions, 4);
    }

    #[test]
    fn grdy_and_intl_are_deterministic() {
        let (videos, bucket, _, _) = interleaving_demo();
        assert_eq!(order_grdy(&videos, &bucket).unwrap().list, order_grdy(&videos, &bucket).unwrap().list);
        assert_eq!(order_intl(&videos, &bucket).unwrap().list, order_intl(&videos, &bucket).unwrap().list);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [
            Algorithm::Rand,
            Algorithm::Intl,
            Algorithm::Grdy,
            Algorithm::Exact,
            Algorithm::Psac,
            Algorithm::Nsac,
        ] {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("nope".parse::<Algorithm>().is_err());
    }
}
