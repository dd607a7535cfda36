//! Hard instance families for the ordering problem.
//!
//! An instance holds `M` positive-gain videos and `M*Y + Y + 1` negative-gain
//! ones, all with the same segment size and bit rate, so every video needs the
//! same `P` tokens to burst without extra delay. The bucket holds `C = Y*P`
//! and starts full. Each positive video refills it; negative ones add `delta`
//! with `P/(Y+1) < delta < P/Y`, so `Y` of them never fund a burst but always
//! beat a single one.
//!
//! Optimal lists then take the form
//!
//! ```text
//! [Y neg] pos [Y neg] pos ... [Y neg] pos [Y+1 neg]
//! ```
//!
//! and their worst extra delay is `(P - min_x s_x) / mu` where `s_x` sums the
//! first `Y` deltas of group `x`. Finding the best grouping is a number
//! partitioning problem.

use std::io::Write;
use std::path::Path;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{write_trace, TraceRecord};
use crate::error::{Error, Result};
use crate::model::{gain_stats, max_delay, BucketConfig, Video};

/// Exhaustive verification limit.
pub const MAX_VERIFY_VIDEOS: usize = 9;
/// Exhaustive grouping search limit (negative videos).
pub const MAX_PARTITION_NEGATIVES: usize = 20;

const TOL: f64 = 1e-9;

/// Token rate, burst rate and the shared encoding rate, all in bit/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub token_rate_bps: f64,
    pub burst_rate_bps: f64,
    pub encoding_rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub m: usize,
    pub y: usize,
    /// Positive videos first, then negatives in `delta_neg` order.
    pub videos: Vec<Video>,
    pub bucket: BucketConfig,
    pub p_bits: f64,
    pub delta_neg: Vec<f64>,
    /// Outside M > 1, Y > 2, where the hardness argument is stated.
    pub relaxed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCheck {
    /// Shared segment size and bit rate.
    pub same_segment: bool,
    /// Every positive video refills the bucket.
    pub positives_fill: bool,
    /// max single delta < min Y-subset sum < P.
    pub negatives_bounded: bool,
}

impl ConditionCheck {
    pub fn all(&self) -> bool {
        self.same_segment && self.positives_fill && self.negatives_bounded
    }
}

/// Negatives split into `M + 1` groups, each of the first `M` followed by a
/// positive video. Indices refer to `delta_neg`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrangement {
    pub groups: Vec<Vec<usize>>,
    /// Positive video placed after group `x`, indices `0..M`.
    pub positives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub optimum_s: f64,
    pub best_form_s: f64,
    pub optimal_lists: usize,
    /// Optimal lists not of the grouped form.
    pub form_violations: usize,
    pub relaxed: bool,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        (self.optimum_s - self.best_form_s).abs() <= TOL && self.form_violations == 0
    }
}

/// Builds a random instance. `m = 0` yields only the final `Y + 1` negatives.
pub fn construct_instance(m: usize, y: usize, p_bits: f64, rates: Rates, seed: u64) -> Result<HardInstance> {
    if y < 2 {
        return Err(Error::config(format!("Y must be at least 2, got {y}")));
    }
    let Rates {
        token_rate_bps: mu,
        burst_rate_bps: rhat,
        encoding_rate_bps: r,
    } = rates;
    if !(p_bits > 0.0 && p_bits.is_finite()) {
        return Err(Error::config(format!("P must be positive, got {p_bits}")));
    }
    if !(mu > r && r > 0.0) {
        return Err(Error::config(format!(
            "token rate {mu} must exceed the encoding rate {r} for tunable increments"
        )));
    }
    if !(rhat > mu) {
        return Err(Error::config(format!("burst rate {rhat} must exceed the token rate {mu}")));
    }
    let segment = p_bits / (1.0 - mu / rhat);
    let capacity = y as f64 * p_bits;
    let bucket = BucketConfig::new(capacity, mu, rhat, capacity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (p_bits / (y as f64 + 1.0), p_bits / y as f64);
    let n_neg = m * y + y + 1;
    let delta_neg: Vec<f64> = (0..n_neg)
        .map(|_| loop {
            let d = rng.random_range(lo..hi);
            if d > lo {
                break d;
            }
        })
        .collect();

    let make = |id: String, delta: f64| -> Result<Video> {
        let tau = delta / (mu - r);
        let duration = tau + segment / r + 1.0;
        Video::new(id, duration, r, tau)?.with_initial_segment(segment)
    };
    let mut videos = Vec::with_capacity(m + n_neg);
    for k in 0..m {
        // comfortably above C so rounding never leaves the bucket short
        videos.push(make(format!("pos{k}"), capacity * 1.05)?);
    }
    for (k, &d) in delta_neg.iter().enumerate() {
        videos.push(make(format!("neg{k}"), d)?);
    }
    Ok(HardInstance {
        m,
        y,
        videos,
        bucket,
        p_bits,
        delta_neg,
        relaxed: !(m > 1 && y > 2),
    })
}

impl HardInstance {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Video index of negative `k`.
    pub fn negative_video(&self, k: usize) -> usize {
        self.m + k
    }

    /// Replaces negative `k`'s increment, adjusting its viewing time.
    pub fn set_negative_delta(&mut self, k: usize, delta: f64) -> Result<()> {
        if k >= self.delta_neg.len() {
            return Err(Error::domain(format!("no negative video {k}")));
        }
        let mu = self.bucket.token_rate_bps;
        let idx = self.negative_video(k);
        let v = &self.videos[idx];
        let r = v.encoding_rate_bps;
        let tau = delta / (mu - r);
        let mut nv = v.clone();
        nv.viewing_time_s = tau;
        nv.duration_s = tau + v.initial_segment_bits / r + 1.0;
        nv.validate()?;
        self.videos[idx] = nv;
        self.delta_neg[k] = delta;
        Ok(())
    }

    pub fn check_conditions(&self) -> ConditionCheck {
        let first = &self.videos[0];
        let same_segment = self.videos.iter().all(|v| {
            v.initial_segment_bits == first.initial_segment_bits && v.encoding_rate_bps == first.encoding_rate_bps
        });
        let positives_fill = self.videos[..self.m]
            .iter()
            .all(|v| gain_stats(v, &self.bucket).net_increment_bits >= self.bucket.capacity_bits);
        let deltas: Vec<f64> = self.videos[self.m..]
            .iter()
            .map(|v| gain_stats(v, &self.bucket).net_increment_bits)
            .collect();
        let max_single = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sums = deltas.iter().combinations(self.y).map(|c| c.into_iter().sum::<f64>());
        let negatives_bounded = deltas.len() >= self.y && sums.all(|s| max_single < s && s < self.p_bits);
        ConditionCheck {
            same_segment,
            positives_fill,
            negatives_bounded,
        }
    }

    /// Burst-only startup delay shared by every video.
    pub fn burst_floor_s(&self) -> f64 {
        self.videos[0].initial_segment_bits / self.bucket.burst_rate_bps
    }

    fn validate_arrangement(&self, arr: &Arrangement) -> Result<()> {
        let bad = |msg: String| Err(Error::domain(format!("malformed arrangement: {msg}")));
        if arr.groups.len() != self.m + 1 {
            return bad(format!("{} groups, expected {}", arr.groups.len(), self.m + 1));
        }
        for (x, g) in arr.groups.iter().enumerate() {
            let want = if x < self.m { self.y } else { self.y + 1 };
            if g.len() != want {
                return bad(format!("group {x} has {} videos, expected {want}", g.len()));
            }
        }
        let mut negs: Vec<usize> = arr.groups.iter().flatten().copied().collect();
        negs.sort_unstable();
        if negs != (0..self.delta_neg.len()).collect::<Vec<_>>() {
            return bad("negatives are not used exactly once".into());
        }
        let mut pos = arr.positives.clone();
        pos.sort_unstable();
        if pos != (0..self.m).collect::<Vec<_>>() {
            return bad("positives are not used exactly once".into());
        }
        Ok(())
    }

    /// The list an arrangement stands for, as video indices.
    pub fn arrangement_list(&self, arr: &Arrangement) -> Result<Vec<usize>> {
        self.validate_arrangement(arr)?;
        let mut out = Vec::with_capacity(self.len());
        for (x, g) in arr.groups.iter().enumerate() {
            out.extend(g.iter().map(|&k| self.negative_video(k)));
            if x < self.m {
                out.push(arr.positives[x]);
            }
        }
        Ok(out)
    }

    /// Whether a list (video indices) has the grouped form: exactly `Y`
    /// negatives before each positive and `Y + 1` after the last.
    pub fn has_optimal_form(&self, list: &[usize]) -> bool {
        let mut run = 0;
        for &i in list {
            if i < self.m {
                if run != self.y {
                    return false;
                }
                run = 0;
            } else {
                run += 1;
            }
        }
        run == self.y + 1
    }
}

/// Maximum startup delay of a grouped list, from the group sums alone.
pub fn optimal_form_delay(inst: &HardInstance, arr: &Arrangement) -> Result<f64> {
    inst.validate_arrangement(arr)?;
    let min_sum = arr
        .groups
        .iter()
        .map(|g| g[..inst.y].iter().map(|&k| inst.delta_neg[k]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let extra = ((inst.p_bits - min_sum) / inst.bucket.token_rate_bps).max(0.0);
    Ok(inst.burst_floor_s() + extra)
}

/// Grouping that maximises the smallest group sum. The smallest increment
/// is left over as the last video; the rest is split exhaustively.
pub fn best_arrangement(inst: &HardInstance) -> Result<Arrangement> {
    let n = inst.delta_neg.len();
    if n > MAX_PARTITION_NEGATIVES {
        return Err(Error::TooLarge {
            actual: n,
            limit: MAX_PARTITION_NEGATIVES,
        });
    }
    let mut by_delta: Vec<usize> = (0..n).collect();
    by_delta.sort_by(|&a, &b| inst.delta_neg[a].total_cmp(&inst.delta_neg[b]).then(a.cmp(&b)));
    let leftover = by_delta[0];
    let items: Vec<usize> = by_delta[1..].iter().rev().copied().collect();

    struct Search<'a> {
        delta: &'a [f64],
        y: usize,
        groups: Vec<Vec<usize>>,
        best: f64,
        best_groups: Vec<Vec<usize>>,
    }
    impl Search<'_> {
        fn run(&mut self, remaining: &mut Vec<usize>, current_min: f64) {
            if current_min <= self.best {
                return;
            }
            let Some(&anchor) = remaining.first() else {
                self.best = current_min;
                self.best_groups = self.groups.clone();
                return;
            };
            // the first free item anchors the next group: no duplicate partitions
            remaining.remove(0);
            let pool = remaining.clone();
            for rest in pool.iter().copied().combinations(self.y - 1) {
                let sum = self.delta[anchor] + rest.iter().map(|&k| self.delta[k]).sum::<f64>();
                remaining.retain(|k| !rest.contains(k));
                let mut group = vec![anchor];
                group.extend(&rest);
                self.groups.push(group);
                self.run(remaining, current_min.min(sum));
                self.groups.pop();
                *remaining = pool.clone();
            }
            remaining.insert(0, anchor);
        }
    }

    let mut s = Search {
        delta: &inst.delta_neg,
        y: inst.y,
        groups: Vec::new(),
        best: f64::NEG_INFINITY,
        best_groups: Vec::new(),
    };
    let mut remaining = items;
    s.run(&mut remaining, f64::INFINITY);
    let mut groups = s.best_groups;
    groups.last_mut().expect("at least one group").push(leftover);
    Ok(Arrangement {
        groups,
        positives: (0..inst.m).collect(),
    })
}

/// Exhaustive check: the optimum over all lists equals the best grouped
/// list, and every optimal list is grouped.
pub fn verify_small(inst: &HardInstance) -> Result<Verdict> {
    let n = inst.len();
    if n > MAX_VERIFY_VIDEOS {
        return Err(Error::TooLarge {
            actual: n,
            limit: MAX_VERIFY_VIDEOS,
        });
    }
    let delays: Vec<(Vec<usize>, f64)> = (0..n)
        .permutations(n)
        .map(|p| {
            let d = max_delay(&inst.videos, &p, &inst.bucket);
            (p, d)
        })
        .collect();
    let optimum = delays.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);

    let mut best_form = f64::INFINITY;
    for (p, _) in delays.iter().filter(|(p, _)| inst.has_optimal_form(p)) {
        let arr = arrangement_of(inst, p);
        best_form = best_form.min(optimal_form_delay(inst, &arr)?);
    }

    let optimal: Vec<&Vec<usize>> = delays
        .iter()
        .filter(|(_, d)| *d <= optimum + TOL)
        .map(|(p, _)| p)
        .collect();
    let form_violations = optimal.iter().filter(|p| !inst.has_optimal_form(p)).count();
    Ok(Verdict {
        optimum_s: optimum,
        best_form_s: best_form,
        optimal_lists: optimal.len(),
        form_violations,
        relaxed: inst.relaxed,
    })
}

/// Reads the grouping back from a list already known to be grouped.
fn arrangement_of(inst: &HardInstance, list: &[usize]) -> Arrangement {
    let mut groups = vec![Vec::new()];
    let mut positives = Vec::new();
    for &i in list {
        if i < inst.m {
            positives.push(i);
            groups.push(Vec::new());
        } else {
            groups.last_mut().expect("open group").push(i - inst.m);
        }
    }
    Arrangement { groups, positives }
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    m: usize,
    y: usize,
    p_bits: f64,
    capacity_bits: f64,
    token_rate_bps: f64,
    burst_rate_bps: f64,
    encoding_rate_bps: f64,
    initial_segment_bits: f64,
    initial_tokens_bits: f64,
    delta_neg_bits: &'a [f64],
    relaxed: bool,
}

/// Writes the videos as a one-user trace CSV plus a JSON file with the
/// instance parameters. The CSV alone implies one-second segments, so the
/// actual segment size is recorded in the JSON.
pub fn export_instance(inst: &HardInstance, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
    let records: Vec<TraceRecord> = inst
        .videos
        .iter()
        .map(|v| TraceRecord {
            user_id: "hard".into(),
            video_id: v.id.clone(),
            duration_s: v.duration_s,
            bitrate_bps: v.encoding_rate_bps,
            viewing_time_s: v.viewing_time_s,
        })
        .collect();
    write_trace(std::fs::File::create(csv_path)?, &records)?;
    let side = Sidecar {
        m: inst.m,
        y: inst.y,
        p_bits: inst.p_bits,
        capacity_bits: inst.bucket.capacity_bits,
        token_rate_bps: inst.bucket.token_rate_bps,
        burst_rate_bps: inst.bucket.burst_rate_bps,
        encoding_rate_bps: inst.videos[0].encoding_rate_bps,
        initial_segment_bits: inst.videos[0].initial_segment_bits,
        initial_tokens_bits: inst.bucket.initial_tokens_bits,
        delta_neg_bits: &inst.delta_neg,
        relaxed: inst.relaxed,
    };
    let mut f = std::fs::File::create(json_path)?;
    serde_json::to_writer_pretty(&mut f, &side)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MBIT;

    fn rates() -> Rates {
        Rates {
            token_rate_bps: 2.0 * MBIT,
            burst_rate_bps: 10.0 * MBIT,
            encoding_rate_bps: 1.0 * MBIT,
        }
    }

    #[test]
    fn increments_fall_in_the_band() {
        let inst = construct_instance(2, 3, 1.6 * MBIT, rates(), 1).unwrap();
        for &d in &inst.delta_neg {
            assert!(d > 0.4 * MBIT && d < 1.6 * MBIT / 3.0);
        }
        for c in inst.delta_neg.iter().combinations(3) {
            let s: f64 = c.into_iter().sum();
            assert!(s > 1.2 * MBIT && s < 1.6 * MBIT);
        }
        assert!(inst.check_conditions().all());
        assert!(!inst.relaxed);
        // realised increments match the requested ones
        for k in 0..inst.delta_neg.len() {
            let g = gain_stats(&inst.videos[inst.negative_video(k)], &inst.bucket);
            assert!((g.net_increment_bits - inst.delta_neg[k]).abs() < 1e-6);
            assert!(!g.is_positive_gain);
        }
        for v in &inst.videos[..2] {
            assert!(gain_stats(v, &inst.bucket).is_positive_gain);
        }
    }

    #[test]
    fn video_counts() {
        let inst = construct_instance(1, 2, 1.6 * MBIT, rates(), 2).unwrap();
        assert_eq!(inst.len(), 6);
        assert_eq!(inst.delta_neg.len(), 5);
        assert!(inst.relaxed);
        assert!(inst.check_conditions().all());
        let inst = construct_instance(3, 4, 1.6 * MBIT, rates(), 2).unwrap();
        assert_eq!(inst.len(), 3 + 3 * 4 + 4 + 1);
    }

    #[test]
    fn infeasible_rates_rejected() {
        let mut r = rates();
        r.encoding_rate_bps = 2.0 * MBIT;
        assert!(matches!(construct_instance(1, 2, 1.6 * MBIT, r, 0), Err(Error::Config(_))));
        assert!(construct_instance(1, 1, 1.6 * MBIT, rates(), 0).is_err());
    }

    #[test]
    fn form_delay_matches_recursion() {
        for seed in 0..20 {
            let inst = construct_instance(1, 2, 1.6 * MBIT, rates(), seed).unwrap();
            for perm in (0..5).permutations(5) {
                let arr = Arrangement {
                    groups: vec![perm[..2].to_vec(), perm[2..].to_vec()],
                    positives: vec![0],
                };
                let list = inst.arrangement_list(&arr).unwrap();
                let want = max_delay(&inst.videos, &list, &inst.bucket);
                let got = optimal_form_delay(&inst, &arr).unwrap();
                assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn equal_group_sums() {
        let mut inst = construct_instance(1, 2, 1.6 * MBIT, rates(), 3).unwrap();
        for k in 0..5 {
            inst.set_negative_delta(k, 0.7 * MBIT).unwrap();
        }
        let arr = Arrangement {
            groups: vec![vec![0, 1], vec![2, 3, 4]],
            positives: vec![0],
        };
        let want = (1.6 - 1.4) / 2.0 + inst.burst_floor_s();
        assert!((optimal_form_delay(&inst, &arr).unwrap() - want).abs() < 1e-12);
        let swapped = Arrangement {
            groups: vec![vec![1, 0], vec![3, 2, 4]],
            positives: vec![0],
        };
        assert_eq!(optimal_form_delay(&inst, &arr).unwrap(), optimal_form_delay(&inst, &swapped).unwrap());
    }

    #[test]
    fn malformed_arrangements() {
        let inst = construct_instance(1, 2, 1.6 * MBIT, rates(), 4).unwrap();
        let cases = [
            Arrangement {
                groups: vec![vec![0, 1, 2, 3, 4]],
                positives: vec![0],
            },
            Arrangement {
                groups: vec![vec![0, 1, 2], vec![3, 4]],
                positives: vec![0],
            },
            Arrangement {
                groups: vec![vec![0, 0], vec![2, 3, 4]],
                positives: vec![0],
            },
            Arrangement {
                groups: vec![vec![0, 1], vec![2, 3, 4]],
                positives: vec![],
            },
        ];
        for arr in &cases {
            assert!(matches!(optimal_form_delay(&inst, arr), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn verification_holds_on_constructed_instances() {
        for seed in 0..5 {
            let inst = construct_instance(1, 2, 1.6 * MBIT, rates(), seed).unwrap();
            let v = verify_small(&inst).unwrap();
            assert!(v.holds(), "{v:?}");
            let best = optimal_form_delay(&inst, &best_arrangement(&inst).unwrap()).unwrap();
            assert!((best - v.optimum_s).abs() < 1e-9);
        }
    }

    #[test]
    fn negatives_only() {
        let inst = construct_instance(0, 2, 1.6 * MBIT, rates(), 7).unwrap();
        assert_eq!(inst.len(), 3);
        let v = verify_small(&inst).unwrap();
        assert!(v.holds());
        // best: the two largest increments first
        let mut d = inst.delta_neg.clone();
        d.sort_by(f64::total_cmp);
        let want = inst.burst_floor_s() + (inst.p_bits - d[1] - d[2]) / inst.bucket.token_rate_bps;
        assert!((v.optimum_s - want).abs() < 1e-9);
    }

    #[test]
    fn breaking_the_band_breaks_the_form() {
        for seed in 0..10 {
            let mut inst = construct_instance(1, 2, 1.6 * MBIT, rates(), seed).unwrap();
            inst.set_negative_delta(0, 0.99 * inst.p_bits).unwrap();
            assert!(!inst.check_conditions().negatives_bounded);
            let v = verify_small(&inst).unwrap();
            assert!(!v.holds(), "{v:?}");
            assert!(v.form_violations > 0);
        }
    }

    #[test]
    fn refuses_large_instances() {
        let inst = construct_instance(2, 3, 1.6 * MBIT, rates(), 0).unwrap();
        assert!(matches!(verify_small(&inst), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn partition_search_on_a_larger_instance() {
        let inst = construct_instance(2, 3, 1.6 * MBIT, rates(), 5).unwrap();
        let arr = best_arrangement(&inst).unwrap();
        let best = optimal_form_delay(&inst, &arr).unwrap();
        let list = inst.arrangement_list(&arr).unwrap();
        assert!(inst.has_optimal_form(&list));
        assert!((max_delay(&inst.videos, &list, &inst.bucket) - best).abs() < 1e-9);
        // no grouping from a sample of shuffles does better
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            let mut negs: Vec<usize> = (0..inst.delta_neg.len()).collect();
            rand::seq::SliceRandom::shuffle(negs.as_mut_slice(), &mut rng);
            let arr = Arrangement {
                groups: vec![negs[..3].to_vec(), negs[3..6].to_vec(), negs[6..].to_vec()],
                positives: vec![0, 1],
            };
            assert!(optimal_form_delay(&inst, &arr).unwrap() >= best - 1e-12);
        }
    }

    #[test]
    fn export_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let inst = construct_instance(1, 2, 1.6 * MBIT, rates(), 1).unwrap();
        let (csv, json) = (dir.path().join("h.csv"), dir.path().join("h.json"));
        export_instance(&inst, &csv, &json).unwrap();
        let back = crate::data::load_trace(&csv).unwrap();
        assert_eq!(back.len(), 6);
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(meta["y"], 2);
        assert_eq!(meta["capacity_bits"].as_f64().unwrap(), 2.0 * 1.6 * MBIT);
    }
}
