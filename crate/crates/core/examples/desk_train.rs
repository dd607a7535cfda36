//! Trains the desk profile on a synthetic trace and compares against the
//! baselines on held-out sets.
//!
//! cargo run --release -p vidorder --example desk_train [steps] [seed]

use std::time::Instant;

use vidorder::data::{sample_synth_sets, BitrateMode};
use vidorder::neural::{order_neural, train, TrainConfig};
use vidorder::order::{order_exact, order_intl, order_grdy, order_rand, DEFAULT_NODE_BUDGET};
use vidorder::BucketConfig;

fn main() -> vidorder::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(2_000, |s| s.parse().expect("steps"));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed"));
    let cfg = TrainConfig { steps, seed, ..TrainConfig::desk() };
    let bucket = BucketConfig::from_mbits(4.0, 2.0, 10.0, 4.0)?;

    let train_sets = sample_synth_sets(cfg.set_size, 4096, BitrateMode::Fixed, seed)?;
    let eval_sets = sample_synth_sets(cfg.set_size, 256, BitrateMode::Fixed, seed + 1)?;

    let t0 = Instant::now();
    let trained = train(&train_sets, &bucket, &cfg)?;
    println!("trained {steps} steps in {:.1}s", t0.elapsed().as_secs_f64());
    for s in trained.history.iter().step_by((steps / 10).max(1)) {
        println!("step {:5} delay {:.4} mse {:.5}", s.step, s.mean_delay_s, s.critic_mse);
    }

    let mut sums = [0.0; 5];
    for (i, set) in eval_sets.iter().enumerate() {
        sums[0] += order_rand(set, &bucket, i as u64)?.max_delay_s();
        sums[1] += order_intl(set, &bucket)?.max_delay_s();
        sums[2] += order_grdy(set, &bucket)?.max_delay_s();
        sums[3] += order_exact(set, &bucket, DEFAULT_NODE_BUDGET)?.max_delay_s();
        sums[4] += order_neural(&trained.params, set, &bucket)?.max_delay_s();
    }
    for (name, s) in ["rand", "intl", "grdy", "exact", "psac"].iter().zip(sums) {
        println!("{name:6} {:.4}", s / eval_sets.len() as f64);
    }
    Ok(())
}
