//! Viewing traces: CSV ingestion, summary statistics, a synthetic generator
//! matched to summary statistics, video-set sampling and viewing-time noise.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as Gaussian};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{Video, MBIT};

pub const TRACE_HEADER: [&str; 5] = ["user_id", "video_id", "duration_s", "bitrate_mbps", "viewing_time_s"];

/// Floor applied to noised viewing times (the smallest viewing time seen in
/// the reference dataset).
pub const MIN_VIEWING_TIME_S: f64 = 0.01;

pub const FIXED_BITRATE_BPS: f64 = 2.0 * MBIT;

/// Number of evaluation sets used for every reported average.
pub const DEFAULT_EVAL_SETS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub user_id: String,
    pub video_id: String,
    pub duration_s: f64,
    pub bitrate_bps: f64,
    pub viewing_time_s: f64,
}

/// How the encoding rate of a video is taken from its record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitrateMode {
    /// Every video at 2 Mbps.
    Fixed,
    /// The record's own bitrate.
    Actual,
}

impl std::str::FromStr for BitrateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(BitrateMode::Fixed),
            "actual" => Ok(BitrateMode::Actual),
            other => Err(Error::config(format!("unknown bitrate mode {other:?}"))),
        }
    }
}

impl TraceRecord {
    fn check(&self) -> std::result::Result<(), String> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.duration_s) {
            return Err(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !ok(self.bitrate_bps) {
            return Err(format!("bitrate must be positive, got {} bps", self.bitrate_bps));
        }
        if !ok(self.viewing_time_s) {
            return Err(format!("viewing_time_s must be positive, got {}", self.viewing_time_s));
        }
        Ok(())
    }

    /// Video with a one-second initial segment.
    pub fn to_video(&self, mode: BitrateMode) -> Result<Video> {
        let rate = match mode {
            BitrateMode::Fixed => FIXED_BITRATE_BPS,
            BitrateMode::Actual => self.bitrate_bps,
        };
        let segment = rate * self.duration_s.min(1.0);
        Video::new(self.video_id.clone(), self.duration_s, rate, self.viewing_time_s)?.with_initial_segment(segment)
    }
}

pub fn to_video_sets(sets: &[Vec<TraceRecord>], mode: BitrateMode) -> Result<Vec<Vec<Video>>> {
    sets.iter()
        .map(|s| s.iter().map(|r| r.to_video(mode)).collect())
        .collect()
}

/// Drops records whose bitrate exceeds `max_bps`.
pub fn filter_bitrate(records: &[TraceRecord], max_bps: f64) -> Vec<TraceRecord> {
    records.iter().filter(|r| r.bitrate_bps <= max_bps).cloned().collect()
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_trace(file, path)
}

pub fn read_trace<R: Read>(reader: R, path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != TRACE_HEADER {
        let missing: Vec<_> = TRACE_HEADER.iter().filter(|c| !got.contains(c)).collect();
        return Err(Error::Schema {
            path: path.to_path_buf(),
            reason: if missing.is_empty() {
                format!("expected header {}, got {}", TRACE_HEADER.join(","), got.join(","))
            } else {
                format!("missing column(s) {missing:?}")
            },
        });
    }

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        if row.len() != TRACE_HEADER.len() {
            return Err(parse_err(format!("expected {} fields, got {}", TRACE_HEADER.len(), row.len())));
        }
        let num = |i: usize| -> Result<f64> {
            row[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(format!("{}: {e} ({:?})", TRACE_HEADER[i], &row[i])))
        };
        let rec = TraceRecord {
            user_id: row[0].trim().to_string(),
            video_id: row[1].trim().to_string(),
            duration_s: num(2)?,
            bitrate_bps: num(3)? * MBIT,
            viewing_time_s: num(4)?,
        };
        rec.check().map_err(parse_err)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_trace<W: Write>(writer: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record([
            r.user_id.clone(),
            r.video_id.clone(),
            r.duration_s.to_string(),
            (r.bitrate_bps / MBIT).to_string(),
            r.viewing_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(path: impl AsRef<Path>, records: &[TraceRecord]) -> Result<()> {
    write_trace(std::io::BufWriter::new(std::fs::File::create(path)?), records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub max: f64,
}

impl ColumnStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("no values"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(ColumnStats {
            mean,
            std,
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            q2: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }

    fn anchors(&self) -> [f64; 5] {
        [self.min, self.q1, self.q2, self.q3, self.max]
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub duration_s: ColumnStats,
    pub viewing_time_s: ColumnStats,
    pub bitrate_mbps: ColumnStats,
}

impl TraceStats {
    /// Summary of the 200-user reference dataset.
    pub fn reference() -> Self {
        TraceStats {
            duration_s: ColumnStats {
                mean: 29.32,
                std: 19.24,
                min: 2.0,
                q1: 13.0,
                q2: 22.0,
                q3: 48.0,
                max: 62.0,
            },
            viewing_time_s: ColumnStats {
                mean: 24.3,
                std: 29.79,
                min: 0.01,
                q1: 3.32,
                q2: 14.7,
                q3: 33.12,
                max: 299.75,
            },
            bitrate_mbps: ColumnStats {
                mean: 1.86,
                std: 0.85,
                min: 0.12,
                q1: 1.23,
                q2: 1.72,
                q3: 2.44,
                max: 5.59,
            },
        }
    }

    /// Row-per-statistic layout: `{"Mean": {"duration_s": .., ...}, ...}`.
    pub fn to_table_json(&self) -> serde_json::Value {
        let cols = [
            ("duration_s", &self.duration_s),
            ("viewing_time_s", &self.viewing_time_s),
            ("bitrate_mbps", &self.bitrate_mbps),
        ];
        let row = |f: fn(&ColumnStats) -> f64| {
            let mut m = serde_json::Map::new();
            for (name, c) in &cols {
                m.insert((*name).to_string(), serde_json::json!(f(c)));
            }
            serde_json::Value::Object(m)
        };
        serde_json::json!({
            "Mean": row(|c| c.mean),
            "Std. deviation": row(|c| c.std),
            "Minimum": row(|c| c.min),
            "Quartile 1": row(|c| c.q1),
            "Quartile 2": row(|c| c.q2),
            "Quartile 3": row(|c| c.q3),
            "Maximum": row(|c| c.max),
        })
    }
}

pub fn table_stats(records: &[TraceRecord]) -> Result<TraceStats> {
    if records.is_empty() {
        return Err(Error::domain("cannot summarise an empty trace"));
    }
    let col = |f: fn(&TraceRecord) -> f64| ColumnStats::from_values(&records.iter().map(f).collect::<Vec<_>>());
    Ok(TraceStats {
        duration_s: col(|r| r.duration_s)?,
        viewing_time_s: col(|r| r.viewing_time_s)?,
        bitrate_mbps: col(|r| r.bitrate_bps / MBIT)?,
    })
}

/// Marginal sampler: a log-normal (median q2, spread from the IQR) truncated
/// separately to each quartile band, each band holding a quarter of the mass.
/// The quartiles are reproduced exactly and the log-normal shapes the mass
/// inside each band.
#[derive(Debug, Clone)]
struct BandedLogNormal {
    anchors: [f64; 5],
    log_median: f64,
    log_sigma: f64,
}

impl BandedLogNormal {
    fn fit(c: &ColumnStats, name: &str) -> Result<Self> {
        let a = c.anchors();
        if !a.iter().all(|x| x.is_finite()) || c.min <= 0.0 {
            return Err(Error::config(format!("{name}: statistics must be finite and positive")));
        }
        if c.max < c.min {
            return Err(Error::config(format!("{name}: max {} below min {}", c.max, c.min)));
        }
        if a.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config(format!("{name}: need min <= q1 <= q2 <= q3 <= max")));
        }
        let z75 = Normal::standard().inverse_cdf(0.75);
        Ok(BandedLogNormal {
            anchors: a,
            log_median: c.q2.ln(),
            log_sigma: (c.q3.ln() - c.q1.ln()) / (2.0 * z75),
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let band = ((u * 4.0) as usize).min(3);
        let w = u * 4.0 - band as f64;
        let (lo, hi) = (self.anchors[band], self.anchors[band + 1]);
        if hi <= lo {
            return lo;
        }
        let x = if self.log_sigma > 1e-12 {
            let std = Normal::standard();
            let (fl, fh) = (
                std.cdf((lo.ln() - self.log_median) / self.log_sigma),
                std.cdf((hi.ln() - self.log_median) / self.log_sigma),
            );
            if fh - fl > 1e-300 {
                (self.log_median + self.log_sigma * std.inverse_cdf(fl + w * (fh - fl))).exp()
            } else {
                (lo.ln() + w * (hi.ln() - lo.ln())).exp()
            }
        } else {
            (lo.ln() + w * (hi.ln() - lo.ln())).exp()
        };
        x.clamp(lo, hi)
    }
}

/// Synthetic trace with marginals matched to `stats`; columns independent.
pub fn synth_trace(stats: &TraceStats, n_users: usize, videos_per_user: usize, seed: u64) -> Result<Vec<TraceRecord>> {
    let dur = BandedLogNormal::fit(&stats.duration_s, "duration_s")?;
    let view = BandedLogNormal::fit(&stats.viewing_time_s, "viewing_time_s")?;
    let rate = BandedLogNormal::fit(&stats.bitrate_mbps, "bitrate_mbps")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_users * videos_per_user);
    for u in 0..n_users {
        for k in 0..videos_per_user {
            out.push(TraceRecord {
                user_id: format!("u{u}"),
                video_id: format!("u{u}-v{k}"),
                duration_s: dur.sample(&mut rng),
                bitrate_bps: rate.sample(&mut rng) * MBIT,
                viewing_time_s: view.sample(&mut rng),
            });
        }
    }
    Ok(out)
}

/// Groups records by user, in user-id order.
pub fn by_user(records: &[TraceRecord]) -> BTreeMap<&str, Vec<&TraceRecord>> {
    let mut m: BTreeMap<&str, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.user_id.as_str()).or_default().push(r);
    }
    m
}

/// Draws `count` sets of `n` distinct records, each from one uniformly chosen
/// user that has at least `n` records.
pub fn sample_sets(records: &[TraceRecord], n: usize, count: usize, seed: u64) -> Result<Vec<Vec<TraceRecord>>> {
    if n == 0 {
        return Err(Error::domain("set size must be positive"));
    }
    let users: Vec<Vec<&TraceRecord>> = by_user(records).into_values().filter(|v| v.len() >= n).collect();
    if users.is_empty() {
        return Err(Error::domain(format!("no user has at least {n} records")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let user = &users[rng.random_range(0..users.len())];
            index::sample(&mut rng, user.len(), n)
                .into_iter()
                .map(|i| user[i].clone())
                .collect()
        })
        .collect())
}

/// Users and records per user in the trace behind [`sample_synth_sets`].
pub const SYNTH_USERS: usize = 500;
pub const SYNTH_VIDEOS_PER_USER: usize = 40;

/// Synthetic trace matched to the reference statistics, sampled into
/// `count` sets of `n` videos.
pub fn sample_synth_sets(n: usize, count: usize, mode: BitrateMode, seed: u64) -> Result<Vec<Vec<Video>>> {
    let trace = synth_trace(&TraceStats::reference(), SYNTH_USERS, SYNTH_VIDEOS_PER_USER.max(n), seed)?;
    let sets = sample_sets(&trace, n, count, seed.wrapping_add(1))?;
    to_video_sets(&sets, mode)
}

/// Adds zero-mean Gaussian error to every viewing time, flooring at
/// [`MIN_VIEWING_TIME_S`]. Returns the noised sets and the realised mean
/// absolute error.
pub fn noise_viewing(sets: &[Vec<Video>], sigma: f64, seed: u64) -> Result<(Vec<Vec<Video>>, f64)> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config(format!("sigma must be a finite non-negative number, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok((sets.to_vec(), 0.0));
    }
    let gauss = Gaussian::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut abs_err = 0.0;
    let mut count = 0usize;
    let noised = sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|v| {
                    let predicted = (v.viewing_time_s + gauss.sample(&mut rng)).max(MIN_VIEWING_TIME_S);
                    abs_err += (predicted - v.viewing_time_s).abs();
                    count += 1;
                    Video {
                        viewing_time_s: predicted,
                        ..v.clone()
                    }
                })
                .collect()
        })
        .collect();
    let mae = if count > 0 { abs_err / count as f64 } else { 0.0 };
    Ok((noised, mae))
}
