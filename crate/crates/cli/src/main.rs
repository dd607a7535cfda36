//! Command-line front end: simulate, order, train, eval, sweep, hardness
//! and trace statistics.

mod plot;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use vidorder::data::{
    load_trace, save_trace, synth_trace, table_stats, BitrateMode, TraceRecord, TraceStats, DEFAULT_EVAL_SETS, SYNTH_USERS,
    SYNTH_VIDEOS_PER_USER,
};
use vidorder::fluid::simulate;
use vidorder::hardness::{best_arrangement, construct_instance, export_instance, optimal_form_delay, verify_small, Rates};
use vidorder::model::{interleaving_demo, MBIT};
use vidorder::neural::{order_neural, train, NetParams, Sharing, TrainConfig};
use vidorder::order::{order_exact, order_with, Algorithm, OrderResult};
use vidorder::sweep::{eval_sets, run_sweep, write_rows_csv, write_rows_svg, Models, SweepAxis, SweepRange, SweepSpec};
use vidorder::{BucketConfig, Video, VideoList};

#[derive(Parser)]
#[command(name = "vidorder", version, about = "Order short videos to keep startup delay low under a token bucket")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one list through the fluid simulator.
    Simulate(SimulateArgs),
    /// Order one set of videos.
    Order(OrderArgs),
    /// Train a pointer-network orderer and write a checkpoint.
    Train(TrainArgs),
    /// Average max startup delay over sampled sets.
    Eval(EvalArgs),
    /// Average max startup delay along one parameter axis.
    Sweep(SweepArgs),
    /// Build (and optionally verify) a hard instance.
    Hardness(HardnessArgs),
    /// Summary statistics of a trace.
    Stats(StatsArgs),
}

/// Bucket flags; unset values fall back to a base configuration.
#[derive(Args, Clone, Default)]
struct BucketArgs {
    #[arg(long)]
    capacity_mbits: Option<f64>,
    #[arg(long)]
    token_rate_mbps: Option<f64>,
    #[arg(long)]
    burst_rate_mbps: Option<f64>,
    /// Defaults to a full bucket.
    #[arg(long)]
    initial_tokens_mbits: Option<f64>,
}

impl BucketArgs {
    fn resolve(&self, base: &BucketConfig) -> anyhow::Result<BucketConfig> {
        let c = self.capacity_mbits.unwrap_or(base.capacity_bits / MBIT);
        let k = match (self.initial_tokens_mbits, self.capacity_mbits) {
            (Some(k), _) => k,
            (None, Some(c)) => c,
            (None, None) => base.initial_tokens_bits / MBIT,
        };
        Ok(BucketConfig::from_mbits(
            c,
            self.token_rate_mbps.unwrap_or(base.token_rate_bps / MBIT),
            self.burst_rate_mbps.unwrap_or(base.burst_rate_bps / MBIT),
            k,
        )?)
    }

    fn bucket(&self) -> anyhow::Result<BucketConfig> {
        self.resolve(&default_bucket())
    }
}

fn default_bucket() -> BucketConfig {
    BucketConfig::from_mbits(4.0, 2.0, 10.0, 4.0).expect("valid default bucket")
}

/// Where sets come from.
#[derive(Args, Clone)]
struct DataArgs {
    /// Trace CSV; a synthetic trace is generated when absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Fixed)]
    bitrate_mode: ModeArg,
}

impl DataArgs {
    fn records(&self) -> anyhow::Result<Vec<TraceRecord>> {
        match &self.trace {
            Some(p) => Ok(load_trace(p)?),
            None => Ok(synth_trace(&TraceStats::reference(), SYNTH_USERS, SYNTH_VIDEOS_PER_USER, self.seed)?),
        }
    }

    fn mode(&self) -> BitrateMode {
        self.bitrate_mode.into()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fixed,
    Actual,
}

impl From<ModeArg> for BitrateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fixed => BitrateMode::Fixed,
            ModeArg::Actual => BitrateMode::Actual,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    Blocked,
    Interleaved,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in eight-video set with its own bucket.
    #[arg(long, value_enum, conflicts_with = "set")]
    demo: Option<Demo>,
    /// Trace CSV whose rows form the set, in file order.
    #[arg(long, required_unless_present = "demo")]
    set: Option<PathBuf>,
    /// Comma-separated positions into the set; identity when absent.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = ModeArg::Fixed)]
    bitrate_mode: ModeArg,
    #[command(flatten)]
    bucket: BucketArgs,
    /// Token trace as CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Token trace as SVG.
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Args)]
struct OrderArgs {
    /// Trace CSV whose rows form the set; otherwise one set is sampled.
    #[arg(long)]
    set: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 15)]
    set_size: usize,
    #[arg(long, default_value = "grdy")]
    algo: Algorithm,
    /// Checkpoint for psac / nsac.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = vidorder::order::DEFAULT_NODE_BUDGET)]
    node_budget: u64,
    #[command(flatten)]
    bucket: BucketArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// m=32, N=8, Q=16, 2000 steps.
    Desk,
    /// m=128, N=15, Q=32, 20000 steps.
    Full,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    bucket: BucketArgs,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    #[arg(long, default_value = "psac")]
    sharing: Sharing,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    set_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Size of the training pool the batches are drawn from.
    #[arg(long, default_value_t = 4096)]
    train_sets: usize,
    #[arg(long)]
    out: PathBuf,
    /// Per-step statistics as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    bucket: BucketArgs,
    #[arg(long, default_value_t = 15)]
    set_size: usize,
    #[arg(long, default_value_t = DEFAULT_EVAL_SETS)]
    sets: usize,
    /// Repeatable; rand, intl and grdy when absent.
    #[arg(long)]
    algo: Vec<Algorithm>,
    /// Repeatable; each file is used for the mode it was trained in.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Noise on the viewing times the orderer sees.
    #[arg(long, default_value_t = 0.0)]
    sigma_seconds: f64,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    axis: SweepAxis,
    #[arg(long)]
    start: f64,
    #[arg(long)]
    stop: f64,
    #[arg(long)]
    step: f64,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Args)]
struct HardnessArgs {
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    y: usize,
    /// Minimum required tokens of every video.
    #[arg(long, default_value_t = 1.0)]
    p_mbits: f64,
    #[arg(long, default_value_t = 2.0)]
    token_rate_mbps: f64,
    #[arg(long, default_value_t = 10.0)]
    burst_rate_mbps: f64,
    #[arg(long, default_value_t = 1.0)]
    encoding_rate_mbps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enumerate every list (at most nine videos).
    #[arg(long)]
    verify: bool,
    #[arg(long, requires = "export_json")]
    export_csv: Option<PathBuf>,
    #[arg(long, requires = "export_csv")]
    export_json: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the synthetic trace used when no trace is given.
    #[arg(long, conflicts_with = "trace")]
    write_synth: Option<PathBuf>,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> anyhow::Result<()> {
    if let Ok(n) = std::env::var("VIDORDER_THREADS") {
        let n: usize = n.parse().context("VIDORDER_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match Cli::parse().command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Order(a) => cmd_order(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Hardness(a) => cmd_hardness(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn print_json(value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_set(path: &Path, mode: BitrateMode) -> anyhow::Result<Vec<Video>> {
    let videos = load_trace(path)?.iter().map(|r| r.to_video(mode)).collect::<Result<Vec<_>, _>>()?;
    if videos.is_empty() {
        bail!("{} holds no videos", path.display());
    }
    Ok(videos)
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let (videos, base, list) = match a.demo {
        Some(demo) => {
            let (videos, bucket, blocked, interleaved) = interleaving_demo();
            let list = match demo {
                Demo::Blocked => blocked,
                Demo::Interleaved => interleaved,
            };
            (videos, bucket, Some(list))
        }
        None => {
            let path = a.set.as_deref().expect("clap requires --set without --demo");
            (load_set(path, a.bitrate_mode.into())?, default_bucket(), None)
        }
    };
    let bucket = a.bucket.resolve(&base)?;
    let list = match (a.order, list) {
        (Some(order), _) => VideoList::new(order, videos.len())?,
        (None, Some(list)) => list,
        (None, None) => VideoList::identity(videos.len()),
    };
    let sim = simulate(&videos, &list, &bucket)?;
    if let Some(p) = &a.out_csv {
        sim.trace.write_csv(create(p)?)?;
    }
    if let Some(p) = &a.out_svg {
        std::fs::write(p, plot::trace_svg(&sim.trace)).with_context(|| format!("writing {}", p.display()))?;
    }
    print_json(&json!({
        "bucket": bucket,
        "list": list,
        "report": sim.report,
        "min_tokens_bits": sim.trace.min_tokens(),
        "delivered_bits": sim.delivered_bits,
    }))
}

fn load_models(paths: &[PathBuf]) -> anyhow::Result<Models> {
    let params = paths
        .iter()
        .map(|p| NetParams::load(p).with_context(|| format!("loading checkpoint {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Models::from_params(params))
}

fn cmd_order(a: OrderArgs) -> anyhow::Result<()> {
    let bucket = a.bucket.bucket()?;
    let videos = match &a.set {
        Some(p) => load_set(p, a.data.mode())?,
        None => {
            let mut sets = eval_sets(&a.data.records()?, a.data.mode(), &bucket, a.set_size, 1, a.data.seed)?;
            sets.pop().expect("one set requested")
        }
    };
    let result: OrderResult = match a.algo {
        Algorithm::Exact => order_exact(&videos, &bucket, a.node_budget)?,
        alg if alg.is_neural() => {
            let Some(path) = &a.checkpoint else { bail!("{alg} needs --checkpoint") };
            let params = NetParams::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
            order_neural(&params, &videos, &bucket)?
        }
        alg => order_with(alg, &videos, &bucket, a.data.seed)?,
    };
    let ids: Vec<&str> = result.list.as_slice().iter().map(|&i| videos[i].id.as_str()).collect();
    print_json(&json!({
        "algorithm": result.algorithm,
        "list": result.list,
        "video_ids": ids,
        "max_delay_s": result.max_delay_s(),
        "optimal": result.optimal,
        "wall_time_s": result.wall_time_s,
        "report": result.report,
    }))
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let bucket = a.bucket.bucket()?;
    let mut cfg = match a.profile {
        Profile::Desk => TrainConfig::desk(),
        Profile::Full => TrainConfig::default(),
    };
    cfg.sharing = a.sharing;
    cfg.seed = a.data.seed;
    cfg.steps = a.steps.unwrap_or(cfg.steps);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    cfg.set_size = a.set_size.unwrap_or(cfg.set_size);
    cfg.hidden = a.hidden.unwrap_or(cfg.hidden);
    cfg.adam.lr = a.lr.unwrap_or(cfg.adam.lr);
    cfg.validate()?;

    let sets = eval_sets(&a.data.records()?, a.data.mode(), &bucket, cfg.set_size, a.train_sets, a.data.seed)?;
    let trained = train(&sets, &bucket, &cfg)?;
    trained.params.save(&a.out)?;
    if let Some(p) = &a.history {
        let mut w = create(p)?;
        writeln!(w, "step,mean_delay_s,critic_mse,actor_loss")?;
        for s in &trained.history {
            writeln!(w, "{},{},{},{}", s.step, s.mean_delay_s, s.critic_mse, s.actor_loss)?;
        }
        w.flush()?;
    }
    let tail = &trained.history[trained.history.len().saturating_sub(50)..];
    let mean = |f: fn(&vidorder::neural::StepStats) -> f64| tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64;
    print_json(&json!({
        "checkpoint": a.out,
        "config": cfg,
        "parameters": trained.params.param_count(),
        "final_mean_delay_s": mean(|s| s.mean_delay_s),
        "final_critic_mse": mean(|s| s.critic_mse),
    }))
}

fn sweep_spec(e: &EvalArgs, axis: SweepAxis, range: SweepRange) -> anyhow::Result<SweepSpec> {
    let d = SweepSpec::default();
    let algorithms = if e.algo.is_empty() { d.algorithms.clone() } else { e.algo.clone() };
    let b = &e.bucket;
    Ok(SweepSpec {
        axis,
        range,
        capacity_mbits: b.capacity_mbits.unwrap_or(d.capacity_mbits),
        token_rate_mbps: b.token_rate_mbps.unwrap_or(d.token_rate_mbps),
        burst_rate_mbps: b.burst_rate_mbps.unwrap_or(d.burst_rate_mbps),
        set_size: e.set_size,
        initial_tokens_mbits: b.initial_tokens_mbits,
        bitrate_mode: e.data.mode(),
        sigma_s: e.sigma_seconds,
        algorithms,
        sets: e.sets,
        seed: e.data.seed,
    })
}

fn emit_rows(rows: &[vidorder::sweep::SweepRow], out_csv: Option<&Path>) -> anyhow::Result<()> {
    if let Some(p) = out_csv {
        write_rows_csv(create(p)?, rows)?;
    }
    write_rows_csv(io::stdout().lock(), rows)?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    // a single point on the capacity axis
    let c = a.bucket.capacity_mbits.unwrap_or(SweepSpec::default().capacity_mbits);
    let spec = sweep_spec(&a, SweepAxis::Capacity, SweepRange { start: c, stop: c, step: 1.0 })?;
    let rows = run_sweep(&spec, &a.data.records()?, &load_models(&a.checkpoint)?)?;
    emit_rows(&rows, a.out_csv.as_deref())
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<()> {
    let range = SweepRange {
        start: a.start,
        stop: a.stop,
        step: a.step,
    };
    let spec = sweep_spec(&a.eval, a.axis, range)?;
    let rows = run_sweep(&spec, &a.eval.data.records()?, &load_models(&a.eval.checkpoint)?)?;
    if let Some(p) = &a.out_svg {
        write_rows_svg(p, &rows, a.axis)?;
    }
    emit_rows(&rows, a.eval.out_csv.as_deref())
}

fn cmd_hardness(a: HardnessArgs) -> anyhow::Result<()> {
    let rates = Rates {
        token_rate_bps: a.token_rate_mbps * MBIT,
        burst_rate_bps: a.burst_rate_mbps * MBIT,
        encoding_rate_bps: a.encoding_rate_mbps * MBIT,
    };
    let inst = construct_instance(a.m, a.y, a.p_mbits * MBIT, rates, a.seed)?;
    let arr = best_arrangement(&inst)?;
    let form_delay = optimal_form_delay(&inst, &arr)?;
    let verdict = if a.verify { Some(verify_small(&inst)?) } else { None };
    if let (Some(csv), Some(json_path)) = (&a.export_csv, &a.export_json) {
        export_instance(&inst, csv, json_path)?;
    }
    print_json(&json!({
        "instance": inst,
        "conditions": inst.check_conditions(),
        "best_arrangement": arr,
        "best_list": inst.arrangement_list(&arr)?,
        "grouped_form_delay_s": form_delay,
        "verdict": verdict,
        "holds": verdict.as_ref().map(|v| v.holds()),
    }))
}

fn cmd_stats(a: StatsArgs) -> anyhow::Result<()> {
    let records = match &a.trace {
        Some(p) => load_trace(p)?,
        None => synth_trace(&TraceStats::reference(), SYNTH_USERS, SYNTH_VIDEOS_PER_USER, a.seed)?,
    };
    if let Some(p) = &a.write_synth {
        save_trace(p, &records)?;
    }
    print_json(&table_stats(&records)?.to_table_json())
}
