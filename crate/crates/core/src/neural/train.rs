//! Actor-critic training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::net::{actor_backward, critic_backward, critic_forward, rollout, DecodeMode};
use super::params::{NetParams, Sharing};
use crate::error::{Error, Result};
use crate::model::{max_delay, BucketConfig, Video};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub set_size: usize,
    pub hidden: usize,
    pub adam: AdamConfig,
    pub sharing: Sharing,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch: 32,
            set_size: 15,
            hidden: 128,
            adam: AdamConfig::default(),
            sharing: Sharing::Psac,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small profile that trains in minutes on a laptop.
    pub fn desk() -> Self {
        TrainConfig {
            steps: 2_000,
            batch: 16,
            set_size: 8,
            hidden: 32,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.set_size == 0 || self.hidden == 0 {
            return Err(Error::config("batch, set size and hidden size must be positive"));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.eps > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    /// Batch mean of the achieved maximum startup delay.
    pub mean_delay_s: f64,
    pub critic_mse: f64,
    /// mean((D - D~) * log pi)
    pub actor_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: NetParams,
    pub history: Vec<StepStats>,
}

struct Sample {
    delay: f64,
    estimate: f64,
    log_prob: f64,
    actor_grad: NetParams,
    critic_grad: NetParams,
}

fn rollout_rng(seed: u64, step: usize, index: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + (step * batch + index) as u64);
    rng
}

/// Trains from a fresh initialisation derived from `cfg.seed`.
pub fn train(dataset: &[Vec<Video>], bucket: &BucketConfig, cfg: &TrainConfig) -> Result<Trained> {
    let params = NetParams::init(cfg.hidden, cfg.sharing, cfg.seed);
    train_from(params, dataset, bucket, cfg)
}

/// Continues training `params`. Hidden size and sharing come from `params`.
pub fn train_from(mut params: NetParams, dataset: &[Vec<Video>], bucket: &BucketConfig, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    bucket.validate()?;
    if dataset.is_empty() {
        return Err(Error::domain("training dataset is empty"));
    }
    if let Some(bad) = dataset.iter().find(|s| s.len() != cfg.set_size) {
        return Err(Error::domain(format!(
            "training sets must hold {} videos, found one with {}",
            cfg.set_size,
            bad.len()
        )));
    }
    for v in dataset.iter().flatten() {
        v.validate()?;
    }

    let (actor_mask, critic_mask) = params.owner_masks();
    let mut actor_opt = Adam::new(cfg.adam, actor_mask);
    let mut critic_opt = Adam::new(cfg.adam, critic_mask);
    let mut picker = ChaCha8Rng::seed_from_u64(cfg.seed);
    let q = cfg.batch as f64;
    let mut history = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let picks: Vec<usize> = (0..cfg.batch).map(|_| picker.random_range(0..dataset.len())).collect();
        let samples: Vec<Sample> = picks
            .par_iter()
            .enumerate()
            .map(|(i, &set)| {
                let videos = &dataset[set];
                let mut rng = rollout_rng(cfg.seed, step, i, cfg.batch);
                let ro = rollout(&params, videos, DecodeMode::Sample(&mut rng));
                let delay = max_delay(videos, &ro.order, bucket);
                let cp = critic_forward(&params, &ro);
                let advantage = delay - cp.value;
                let mut actor_grad = params.zeros_like();
                actor_backward(&params, &ro, advantage / q, &mut actor_grad);
                let mut critic_grad = params.zeros_like();
                critic_backward(&params, &ro, &cp, -2.0 * advantage / q, &mut critic_grad);
                Sample {
                    delay,
                    estimate: cp.value,
                    log_prob: ro.log_prob,
                    actor_grad,
                    critic_grad,
                }
            })
            .collect();

        let mut actor_grad = params.zeros_like();
        let mut critic_grad = params.zeros_like();
        let (mut mean_delay, mut mse, mut actor_loss) = (0.0, 0.0, 0.0);
        for s in &samples {
            actor_grad.add_assign(&s.actor_grad);
            critic_grad.add_assign(&s.critic_grad);
            mean_delay += s.delay / q;
            mse += (s.delay - s.estimate).powi(2) / q;
            actor_loss += (s.delay - s.estimate) * s.log_prob / q;
        }
        if !(mse.is_finite() && actor_loss.is_finite()) {
            return Err(Error::Divergence {
                step,
                actor_loss,
                critic_loss: mse,
            });
        }

        let mut flat = params.to_flat();
        actor_opt.step(&mut flat, &actor_grad.to_flat());
        critic_opt.step(&mut flat, &critic_grad.to_flat());
        params.assign_flat(&flat);
        if !params.is_finite() {
            return Err(Error::Divergence {
                step,
                actor_loss,
                critic_loss: mse,
            });
        }
        history.push(StepStats {
            step,
            mean_delay_s: mean_delay,
            critic_mse: mse,
            actor_loss,
        });
    }
    Ok(Trained { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MBIT;

    fn dataset(n_sets: usize, n: usize, seed: u64) -> Vec<Vec<Video>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_sets)
            .map(|s| {
                (0..n)
                    .map(|i| {
                        let t = rng.random_range(5.0..60.0);
                        let tau = rng.random_range(0.5..t);
                        Video::new(format!("{s}-{i}"), t, 2.0 * MBIT, tau).unwrap()
                    })
                    .collect()
            })
            .collect()
    }

    fn small_cfg(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch: 4,
            set_size: 5,
            hidden: 6,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_initial_params() {
        let data = dataset(3, 5, 1);
        let b = BucketConfig::from_mbits(4.0, 2.0, 10.0, 4.0).unwrap();
        let cfg = small_cfg(0);
        let out = train(&data, &b, &cfg).unwrap();
        assert_eq!(out.params, NetParams::init(cfg.hidden, cfg.sharing, cfg.seed));
        assert!(out.history.is_empty());
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let data = dataset(10, 5, 2);
        let b = BucketConfig::from_mbits(3.0, 2.0, 10.0, 3.0).unwrap();
        for sharing in [Sharing::Psac, Sharing::Nsac] {
            let cfg = TrainConfig {
                sharing,
                ..small_cfg(15)
            };
            let a = train(&data, &b, &cfg).unwrap();
            let c = train(&data, &b, &cfg).unwrap();
            let bits = |p: &NetParams| p.to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.params), bits(&c.params));
            assert_eq!(a.history, c.history);
            assert_ne!(a.params, NetParams::init(cfg.hidden, sharing, cfg.seed));
        }
    }

    #[test]
    fn nsac_actor_and_critic_are_disjoint() {
        // the actor never moves critic-only weights and vice versa
        let data = dataset(4, 5, 3);
        let b = BucketConfig::from_mbits(3.0, 2.0, 10.0, 3.0).unwrap();
        let cfg = TrainConfig {
            sharing: Sharing::Nsac,
            ..small_cfg(3)
        };
        let init = NetParams::init(cfg.hidden, cfg.sharing, cfg.seed);
        let out = train(&data, &b, &cfg).unwrap();
        assert_ne!(out.params.trunk, init.trunk);
        assert_ne!(out.params.critic_trunk, init.critic_trunk);
        assert_ne!(out.params.critic_head, init.critic_head);
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = BucketConfig::from_mbits(3.0, 2.0, 10.0, 3.0).unwrap();
        assert!(train(&[], &b, &small_cfg(1)).is_err());
        let data = dataset(2, 4, 1);
        assert!(train(&data, &b, &small_cfg(1)).is_err());
        let cfg = TrainConfig {
            batch: 0,
            ..small_cfg(1)
        };
        assert!(train(&dataset(2, 5, 1), &b, &cfg).is_err());
    }

    #[test]
    fn huge_learning_rate_reports_divergence_or_stays_finite() {
        let data = dataset(4, 5, 4);
        let b = BucketConfig::from_mbits(3.0, 2.0, 10.0, 3.0).unwrap();
        let cfg = TrainConfig {
            adam: AdamConfig {
                lr: 1e300,
                ..AdamConfig::default()
            },
            ..small_cfg(5)
        };
        match train(&data, &b, &cfg) {
            Err(Error::Divergence { .. }) => {}
            Ok(t) => assert!(t.params.is_finite()),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
