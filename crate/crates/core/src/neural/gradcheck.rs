//! Finite-difference check of the hand-written backward passes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{actor_backward, critic_backward, critic_forward, rollout, DecodeMode};
use super::params::NetParams;
use crate::error::{Error, Result};
use crate::model::{max_delay, BucketConfig, Video};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest normwise relative error over (objective, tensor) pairs.
    pub max_rel_error: f64,
    /// Objective and tensor where it occurred.
    pub worst: String,
    /// Largest entrywise absolute difference, for diagnostics.
    pub max_abs_error: f64,
    /// Scalars compared per objective.
    pub checked: usize,
}

/// ||a - n|| / max(||a||, ||n||), zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn log_prob(params: &NetParams, videos: &[Video], order: &[usize]) -> f64 {
    rollout::<ChaCha8Rng>(params, videos, DecodeMode::Forced(order)).log_prob
}

fn critic_loss(params: &NetParams, videos: &[Video], order: &[usize], target: f64) -> f64 {
    let ro = rollout::<ChaCha8Rng>(params, videos, DecodeMode::Forced(order));
    (target - critic_forward(params, &ro).value).powi(2)
}

/// Checks the gradients of log pi (at one sampled list) and of the squared
/// critic error against central differences, on every parameter. Errors are
/// measured per tensor so that tiny entries, where truncation error dwarfs
/// the derivative, do not mask the comparison.
pub fn grad_check(params: &NetParams, videos: &[Video], bucket: &BucketConfig, eps: f64, seed: u64) -> Result<GradCheckReport> {
    grad_check_where(params, videos, bucket, eps, seed, |_| true)
}

/// As [`grad_check`], restricted to tensors whose name passes `select`.
pub fn grad_check_where(
    params: &NetParams,
    videos: &[Video],
    bucket: &BucketConfig,
    eps: f64,
    seed: u64,
    select: impl Fn(&str) -> bool,
) -> Result<GradCheckReport> {
    if params.hidden > 8 || videos.len() > 5 || videos.is_empty() {
        return Err(Error::config("gradient check expects hidden <= 8 and 1..=5 videos"));
    }
    if !(eps > 0.0) {
        return Err(Error::config("eps must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ro = rollout(params, videos, DecodeMode::Sample(&mut rng));
    let order = ro.order.clone();
    let target = max_delay(videos, &order, bucket);

    let mut actor = params.zeros_like();
    actor_backward(params, &ro, 1.0, &mut actor);
    let cp = critic_forward(params, &ro);
    let mut critic = params.zeros_like();
    critic_backward(params, &ro, &cp, -2.0 * (target - cp.value), &mut critic);
    let (actor, critic) = (actor.to_flat(), critic.to_flat());

    let mut tensors: Vec<(String, usize)> = Vec::new();
    params.visit(&mut |name, _, d| tensors.push((name.to_string(), d.len())));

    let base = params.to_flat();
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut offset = 0;
    for (name, len) in tensors {
        let range = offset..offset + len;
        offset += len;
        if !select(&name) {
            continue;
        }
        let mut numeric_actor = Vec::with_capacity(len);
        let mut numeric_critic = Vec::with_capacity(len);
        for k in range.clone() {
            let mut eval = |delta: f64| {
                flat[k] = base[k] + delta;
                probe.assign_flat(&flat);
                let out = (log_prob(&probe, videos, &order), critic_loss(&probe, videos, &order, target));
                flat[k] = base[k];
                out
            };
            let (ap, cp) = eval(eps);
            let (am, cm) = eval(-eps);
            numeric_actor.push((ap - am) / (2.0 * eps));
            numeric_critic.push((cp - cm) / (2.0 * eps));
        }
        for (what, analytic, numeric) in [
            ("log_prob", &actor[range.clone()], &numeric_actor),
            ("critic_loss", &critic[range.clone()], &numeric_critic),
        ] {
            let e = relative_error(analytic, numeric);
            if e > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = e;
                report.worst = format!("{what}:{name}");
            }
            for (a, n) in analytic.iter().zip(numeric.iter()) {
                report.max_abs_error = report.max_abs_error.max((a - n).abs());
            }
        }
        report.checked += len;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MBIT;
    use crate::neural::params::Sharing;

    fn instance() -> (Vec<Video>, BucketConfig) {
        let v = [(12.0, 1.5, 3.0), (40.0, 2.0, 35.0), (8.0, 1.0, 1.2), (25.0, 2.0, 6.0), (50.0, 1.8, 44.0)];
        let videos = v
            .iter()
            .enumerate()
            .map(|(i, &(t, r, tau))| Video::new(format!("{i}"), t, r * MBIT, tau).unwrap())
            .collect();
        (videos, BucketConfig::from_mbits(3.0, 2.0, 10.0, 1.0).unwrap())
    }

    #[test]
    fn full_network_within_tolerance() {
        let (videos, b) = instance();
        for sharing in [Sharing::Psac, Sharing::Nsac] {
            let p = NetParams::init(8, sharing, 21);
            let r = grad_check(&p, &videos, &b, 1e-3, 5).unwrap();
            assert_eq!(r.checked, p.param_count());
            assert!(r.max_rel_error < 1e-4, "{sharing:?}: {r:?}");
        }
    }

    #[test]
    fn linear_output_layer_is_exact() {
        // the squared error is quadratic in the output layer: central
        // differences carry no truncation error there
        let (videos, b) = instance();
        let p = NetParams::init(8, Sharing::Psac, 22);
        let r = grad_check_where(&p, &videos, &b, 1e-3, 5, |n| n == "critic.w2" || n == "critic.b2").unwrap();
        assert_eq!(r.checked, 9);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn error_shrinks_quadratically() {
        let (videos, b) = instance();
        let p = NetParams::init(6, Sharing::Psac, 23);
        // tensors with sizeable curvature, so truncation dominates rounding
        let pick = |n: &str| n.starts_with("pointer") || n.starts_with("decoder");
        let coarse = grad_check_where(&p, &videos, &b, 1e-2, 5, pick).unwrap();
        let fine = grad_check_where(&p, &videos, &b, 1e-3, 5, pick).unwrap();
        let ratio = coarse.max_rel_error / fine.max_rel_error;
        assert!(ratio > 30.0 && ratio < 300.0, "ratio {ratio}: {coarse:?} {fine:?}");
    }

    #[test]
    fn rejects_oversized_nets() {
        let (videos, b) = instance();
        let p = NetParams::init(9, Sharing::Psac, 1);
        assert!(grad_check(&p, &videos, &b, 1e-3, 0).is_err());
    }
}
