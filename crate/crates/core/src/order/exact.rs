//! Branch-and-bound over list prefixes.
//!
//! A prefix is summarised by (set of placed videos, token level, worst delay
//! so far). A video's delay depends only on what precedes it, so a prefix
//! whose worst delay already reaches the incumbent can be dropped. Two
//! prefixes over the same set are compared by dominance: more tokens and a
//! smaller worst delay can only lead to better completions.

use std::collections::HashMap;
use std::time::Instant;

use super::{grdy_permutation, intl_permutation, Algorithm, OrderResult};
use crate::error::{Error, Result};
use crate::model::{max_delay, startup_delay, step, BucketConfig, Video};

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

const MAX_VIDEOS: usize = 64;
/// Pareto states kept per subset.
const FRONTIER_CAP: usize = 16;

struct Search<'a> {
    videos: &'a [Video],
    bucket: &'a BucketConfig,
    /// Delay of each video with a full bucket: no list can do better.
    floor: Vec<f64>,
    best: f64,
    best_order: Vec<usize>,
    nodes: u64,
    budget: u64,
    exhausted: bool,
    frontier: HashMap<u64, Vec<(f64, f64)>>,
}

impl Search<'_> {
    fn dominated(&mut self, mask: u64, tokens: f64, worst: f64) -> bool {
        let entry = self.frontier.entry(mask).or_default();
        if entry.iter().any(|&(t, w)| t >= tokens && w <= worst) {
            return true;
        }
        entry.retain(|&(t, w)| !(tokens >= t && worst <= w));
        if entry.len() < FRONTIER_CAP {
            entry.push((tokens, worst));
        }
        false
    }

    fn dfs(&mut self, mask: u64, tokens: f64, worst: f64, prefix: &mut Vec<usize>) {
        let n = self.videos.len();
        if prefix.len() == n {
            if worst < self.best {
                self.best = worst;
                self.best_order.clone_from(prefix);
            }
            return;
        }
        if self.nodes >= self.budget {
            self.exhausted = true;
            return;
        }
        self.nodes += 1;

        let remaining_floor = (0..n)
            .filter(|i| mask & (1 << i) == 0)
            .map(|i| self.floor[i])
            .fold(worst, f64::max);
        if remaining_floor >= self.best {
            return;
        }
        if prefix.len() > 1 && self.dominated(mask, tokens, worst) {
            return;
        }

        let mut children: Vec<(usize, f64, f64)> = (0..n)
            .filter(|i| mask & (1 << i) == 0)
            .map(|i| {
                let (d, next) = step(&self.videos[i], tokens, self.bucket);
                (i, d, next)
            })
            .collect();
        // cheapest delay first, then the child leaving the most tokens
        children.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
        for (i, d, next) in children {
            let w = worst.max(d);
            if w >= self.best {
                continue;
            }
            prefix.push(i);
            self.dfs(mask | (1 << i), next, w, prefix);
            prefix.pop();
        }
    }
}

/// Minimises the maximum startup delay by branch and bound. The result is
/// flagged optimal unless the node budget ran out first, in which case the
/// best list found is returned.
pub fn order_exact(videos: &[Video], bucket: &BucketConfig, budget: u64) -> Result<OrderResult> {
    if videos.is_empty() {
        return Err(Error::domain("video set is empty"));
    }
    if videos.len() > MAX_VIDEOS {
        return Err(Error::TooLarge {
            actual: videos.len(),
            limit: MAX_VIDEOS,
        });
    }
    bucket.validate()?;
    for v in videos {
        v.validate()?;
    }
    let started = Instant::now();

    // incumbent from the cheap heuristics
    let (grdy, _) = grdy_permutation(videos, bucket);
    let intl = intl_permutation(videos);
    let (g, i) = (max_delay(videos, &grdy, bucket), max_delay(videos, &intl, bucket));
    let (best, best_order) = if g <= i { (g, grdy) } else { (i, intl) };

    let floor = videos
        .iter()
        .map(|v| startup_delay(v.initial_segment_bits, bucket.capacity_bits, bucket))
        .collect::<Result<Vec<_>>>()?;
    let mut search = Search {
        videos,
        bucket,
        floor,
        best,
        best_order,
        nodes: 0,
        budget,
        exhausted: false,
        frontier: HashMap::new(),
    };
    let mut prefix = Vec::with_capacity(videos.len());
    search.dfs(0, bucket.initial_tokens_bits, f64::NEG_INFINITY, &mut prefix);

    let optimal = !search.exhausted;
    OrderResult::build(videos, search.best_order, bucket, Algorithm::Exact, started, optimal)
}
