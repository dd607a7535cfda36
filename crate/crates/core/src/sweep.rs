//! Parameter sweeps: every algorithm on the same sampled sets at each point.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{filter_bitrate, noise_viewing, sample_sets, to_video_sets, BitrateMode, TraceRecord, DEFAULT_EVAL_SETS};
use crate::error::{Error, Result};
use crate::model::{max_delay, BucketConfig, Video};
use crate::neural::{order_neural, NetParams, Sharing};
use crate::order::{order_exact, order_with, Algorithm, DEFAULT_NODE_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Bucket capacity, Mb.
    Capacity,
    /// Token rate, Mbps.
    TokenRate,
    SetSize,
    /// Initial tokens, Mb.
    InitialTokens,
    /// Viewing-time prediction error, seconds.
    NoiseSigma,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Capacity => "capacity",
            SweepAxis::TokenRate => "token_rate",
            SweepAxis::SetSize => "set_size",
            SweepAxis::InitialTokens => "initial_tokens",
            SweepAxis::NoiseSigma => "noise_sigma",
        }
    }

    fn label(self) -> &'static str {
        match self {
            SweepAxis::Capacity => "capacity (Mb)",
            SweepAxis::TokenRate => "token rate (Mbps)",
            SweepAxis::SetSize => "set size",
            SweepAxis::InitialTokens => "initial tokens (Mb)",
            SweepAxis::NoiseSigma => "viewing-time error sigma (s)",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "capacity" => Ok(SweepAxis::Capacity),
            "token_rate" => Ok(SweepAxis::TokenRate),
            "set_size" => Ok(SweepAxis::SetSize),
            "initial_tokens" => Ok(SweepAxis::InitialTokens),
            "noise_sigma" => Ok(SweepAxis::NoiseSigma),
            other => Err(Error::config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// Inclusive range `start, start + step, ...` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        let SweepRange { start, stop, step } = *self;
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
            return Err(Error::config(format!("empty or invalid range {start}..={stop} step {step}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // computed from the index to avoid drift
        Ok((0..count).map(|i| start + i as f64 * step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub range: SweepRange,
    pub capacity_mbits: f64,
    pub token_rate_mbps: f64,
    pub burst_rate_mbps: f64,
    pub set_size: usize,
    /// `None` starts every list with a full bucket.
    pub initial_tokens_mbits: Option<f64>,
    pub bitrate_mode: BitrateMode,
    pub sigma_s: f64,
    pub algorithms: Vec<Algorithm>,
    pub sets: usize,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            axis: SweepAxis::Capacity,
            range: SweepRange {
                start: 2.0,
                stop: 10.0,
                step: 1.0,
            },
            capacity_mbits: 4.0,
            token_rate_mbps: 2.0,
            burst_rate_mbps: 10.0,
            set_size: 15,
            initial_tokens_mbits: None,
            bitrate_mode: BitrateMode::Fixed,
            sigma_s: 0.0,
            algorithms: vec![Algorithm::Rand, Algorithm::Intl, Algorithm::Grdy],
            sets: DEFAULT_EVAL_SETS,
            seed: 0,
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    bucket: BucketConfig,
    set_size: usize,
    sigma_s: f64,
}

impl SweepSpec {
    fn point(&self, value: f64) -> Result<Point> {
        let (mut c, mut mu, mut k, mut n, mut sigma) = (
            self.capacity_mbits,
            self.token_rate_mbps,
            self.initial_tokens_mbits,
            self.set_size,
            self.sigma_s,
        );
        match self.axis {
            SweepAxis::Capacity => c = value,
            SweepAxis::TokenRate => mu = value,
            SweepAxis::InitialTokens => k = Some(value),
            SweepAxis::NoiseSigma => sigma = value,
            SweepAxis::SetSize => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config(format!("set size must be a positive integer, got {value}")));
                }
                n = value as usize;
            }
        }
        let k = k.unwrap_or(c);
        if k > c {
            return Err(Error::config(format!(
                "initial tokens {k} Mb exceed the capacity {c} Mb at {} = {value}",
                self.axis.as_str()
            )));
        }
        if !(sigma >= 0.0) {
            return Err(Error::config(format!("sigma must be non-negative, got {sigma}")));
        }
        Ok(Point {
            bucket: BucketConfig::from_mbits(c, mu, self.burst_rate_mbps, k)?,
            set_size: n,
            sigma_s: sigma,
        })
    }

    /// Checks every point before any work is done.
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::config("no algorithm selected"));
        }
        if self.sets == 0 {
            return Err(Error::config("set count must be positive"));
        }
        if self.set_size == 0 {
            return Err(Error::config("set size must be positive"));
        }
        for v in self.range.values()? {
            self.point(v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub algorithm: Algorithm,
    pub avg_max_delay_s: f64,
    pub std: f64,
}

/// Trained networks available to a sweep.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub psac: Option<NetParams>,
    pub nsac: Option<NetParams>,
}

impl Models {
    /// Files each network under the mode it was trained with.
    pub fn from_params(params: impl IntoIterator<Item = NetParams>) -> Self {
        let mut m = Models::default();
        for p in params {
            match p.sharing {
                Sharing::Psac => m.psac = Some(p),
                Sharing::Nsac => m.nsac = Some(p),
            }
        }
        m
    }

    fn get(&self, alg: Algorithm) -> Result<&NetParams> {
        let found = match alg {
            Algorithm::Psac => self.psac.as_ref(),
            Algorithm::Nsac => self.nsac.as_ref(),
            _ => None,
        };
        found.ok_or_else(|| Error::config(format!("{alg} needs a checkpoint trained in {alg} mode")))
    }
}

/// Max startup delay of every set under one algorithm. The orderer sees
/// `visible` (possibly noised viewing times); the list is scored on `truth`.
pub fn max_delays(
    algorithm: Algorithm,
    visible: &[Vec<Video>],
    truth: &[Vec<Video>],
    bucket: &BucketConfig,
    models: &Models,
    seed: u64,
) -> Result<Vec<f64>> {
    let model = if algorithm.is_neural() { Some(models.get(algorithm)?) } else { None };
    visible
        .par_iter()
        .zip(truth.par_iter())
        .enumerate()
        .map(|(i, (seen, real))| {
            let result = match (algorithm, model) {
                (Algorithm::Exact, _) => order_exact(seen, bucket, DEFAULT_NODE_BUDGET)?,
                (_, Some(params)) => order_neural(params, seen, bucket)?,
                _ => order_with(algorithm, seen, bucket, seed.wrapping_add(i as u64))?,
            };
            Ok(max_delay(real, result.list.as_slice(), bucket))
        })
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Evaluation sets for a bucket: actual-bitrate mode keeps only videos the
/// token rate can sustain.
pub fn eval_sets(records: &[TraceRecord], spec_mode: BitrateMode, bucket: &BucketConfig, n: usize, count: usize, seed: u64) -> Result<Vec<Vec<Video>>> {
    let sets = match spec_mode {
        BitrateMode::Fixed => sample_sets(records, n, count, seed)?,
        BitrateMode::Actual => sample_sets(&filter_bitrate(records, bucket.token_rate_bps), n, count, seed)?,
    };
    to_video_sets(&sets, spec_mode)
}

pub fn run_sweep(spec: &SweepSpec, records: &[TraceRecord], models: &Models) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    for &alg in spec.algorithms.iter().filter(|a| a.is_neural()) {
        models.get(alg)?;
    }
    let mut rows = Vec::new();
    for value in spec.range.values()? {
        let point = spec.point(value)?;
        let truth = eval_sets(records, spec.bitrate_mode, &point.bucket, point.set_size, spec.sets, spec.seed)?;
        let (visible, _) = noise_viewing(&truth, point.sigma_s, spec.seed.wrapping_add(1))?;
        for &alg in &spec.algorithms {
            let delays = max_delays(alg, &visible, &truth, &point.bucket, models, spec.seed)?;
            let (avg, std) = mean_std(&delays);
            rows.push(SweepRow {
                axis_value: value,
                algorithm: alg,
                avg_max_delay_s: avg,
                std,
            });
        }
    }
    Ok(rows)
}

pub fn write_rows_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["axis_value", "algorithm", "avg_max_delay_s", "std"])?;
    for r in rows {
        w.write_record([
            r.axis_value.to_string(),
            r.algorithm.to_string(),
            r.avg_max_delay_s.to_string(),
            r.std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Line chart of average max delay against the axis value.
pub fn rows_svg(rows: &[SweepRow], axis: SweepAxis) -> String {
    let (w, h, pad) = (640.0, 400.0, 60.0);
    let xs = rows.iter().map(|r| r.axis_value);
    let ys = rows.iter().map(|r| r.avg_max_delay_s);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let y1 = ys.fold(0.0, f64::max).max(1e-9) * 1.1;
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| pad + (x - x0) / span * (w - 2.0 * pad);
    let py = |y: f64| h - pad - y / y1 * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {top} V{bottom} H{right}" stroke="black" fill="none"/>"#,
        top = pad,
        bottom = h - pad,
        right = w - pad
    );
    for i in 0..=4 {
        let y = y1 * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#, pad - 6.0, py(y) + 4.0, y);
        let x = x0 + span * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#, px(x), h - pad + 18.0, x);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, axis.label());
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">average max startup delay (s)</text>"#,
        h / 2.0
    );

    let mut algorithms: Vec<Algorithm> = Vec::new();
    for r in rows {
        if !algorithms.contains(&r.algorithm) {
            algorithms.push(r.algorithm);
        }
    }
    for (k, alg) in algorithms.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = rows
            .iter()
            .filter(|r| r.algorithm == *alg)
            .map(|r| format!("{:.2},{:.2}", px(r.axis_value), py(r.avg_max_delay_s)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = pad + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{alg}</text>"#,
            w - pad - 70.0,
            w - pad - 50.0,
            w - pad - 45.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_rows_svg(path: impl AsRef<Path>, rows: &[SweepRow], axis: SweepAxis) -> Result<()> {
    std::fs::write(path, rows_svg(rows, axis))?;
    Ok(())
}
