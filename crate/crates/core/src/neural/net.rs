//! Forward and backward passes of the pointer network and its critic.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::lstm::{outer_add, LstmPass};
use super::params::{NetParams, Sharing, Trunk, FEATURES};
use crate::model::{Video, MBIT};

/// N x m embedding of a video set.
pub type EmbeddedSeq = Array2<f64>;

#[derive(Debug, Clone)]
pub struct EncodedSeq {
    /// One row per input position.
    pub states: Array2<f64>,
    pub final_h: Array1<f64>,
    pub final_c: Array1<f64>,
}

/// How the decoder picks the next position.
pub enum DecodeMode<'a, R: Rng> {
    Sample(&'a mut R),
    /// Argmax, ties to the lowest index.
    Greedy,
    /// Replays a given permutation.
    Forced(&'a [usize]),
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub order: Vec<usize>,
    pub log_prob: f64,
    /// Distribution over all positions at each step (zero where masked).
    pub step_probs: Vec<Vec<f64>>,
}

/// Normalised per-video inputs.
pub fn features(videos: &[Video]) -> Array2<f64> {
    let mut x = Array2::zeros((videos.len(), FEATURES));
    for (mut row, v) in x.axis_iter_mut(Axis(0)).zip(videos) {
        row[0] = v.duration_s / 30.0;
        row[1] = v.encoding_rate_bps / (2.0 * MBIT);
        row[2] = v.initial_segment_bits / (2.0 * MBIT);
        row[3] = v.viewing_time_s / 30.0;
    }
    x
}

fn embed_with(trunk: &Trunk, x: &Array2<f64>) -> Array2<f64> {
    x.dot(&trunk.embed.w.t()) + &trunk.embed.b
}

fn encode_with(trunk: &Trunk, s: &Array2<f64>) -> LstmPass {
    let m = trunk.encoder.hidden();
    let zero = Array1::zeros(m);
    trunk.encoder.run(s.view(), zero.view(), zero.view())
}

pub fn embed(videos: &[Video], params: &NetParams) -> EmbeddedSeq {
    embed_with(&params.trunk, &features(videos))
}

/// Runs the actor's encoder from zero initial state.
pub fn encode(s: &EmbeddedSeq, params: &NetParams) -> EncodedSeq {
    let pass = encode_with(&params.trunk, s);
    let (final_h, final_c) = pass.final_state();
    EncodedSeq {
        states: pass.hs,
        final_h,
        final_c,
    }
}

/// Forward state kept for backpropagation.
pub(crate) struct Rollout {
    x: Array2<f64>,
    enc: LstmPass,
    dec: LstmPass,
    /// tanh(W_ref enc_j + W_q h_t) per step, rows for masked positions unused.
    tanh_a: Vec<Array2<f64>>,
    probs: Vec<Array1<f64>>,
    pub order: Vec<usize>,
    pub log_prob: f64,
}

pub(crate) fn rollout<R: Rng>(params: &NetParams, videos: &[Video], mut mode: DecodeMode<'_, R>) -> Rollout {
    let n = videos.len();
    let m = params.hidden;
    assert!(n > 0, "empty video set");
    let x = features(videos);
    let s = embed_with(&params.trunk, &x);
    let enc = encode_with(&params.trunk, &s);
    let refs = enc.hs.dot(&params.pointer.w_ref.t());

    let (mut h, mut c) = enc.final_state();
    let mut input = params.start.clone();
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    let mut hs = Array2::zeros((n, m));
    let mut tanh_a = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n);
    let mut log_prob = 0.0;

    for t in 0..n {
        let cache = params.decoder.step(input.view(), h.view(), c.view());
        let q = params.pointer.w_q.dot(&cache.h);
        let mut ta = Array2::zeros((n, m));
        let mut scores = vec![f64::NEG_INFINITY; n];
        for j in (0..n).filter(|&j| !taken[j]) {
            let mut row = ta.row_mut(j);
            row.assign(&(&refs.row(j) + &q));
            row.mapv_inplace(f64::tanh);
            scores[j] = params.pointer.v.dot(&row);
        }
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + scores.iter().map(|u| (u - top).exp()).sum::<f64>().ln();
        let p = Array1::from_iter(scores.iter().map(|u| (u - lse).exp()));

        let choice = match &mut mode {
            DecodeMode::Greedy => {
                let mut best = None;
                for j in (0..n).filter(|&j| !taken[j]) {
                    if best.is_none_or(|b: usize| scores[j] > scores[b]) {
                        best = Some(j);
                    }
                }
                best.expect("an unmasked position")
            }
            DecodeMode::Sample(rng) => {
                let r: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = None;
                for j in (0..n).filter(|&j| !taken[j]) {
                    acc += p[j];
                    pick = Some(j);
                    if r < acc {
                        break;
                    }
                }
                pick.expect("an unmasked position")
            }
            DecodeMode::Forced(list) => {
                let j = list[t];
                assert!(j < n && !taken[j], "forced list is not a permutation");
                j
            }
        };
        log_prob += scores[choice] - lse;
        taken[choice] = true;
        order.push(choice);

        hs.row_mut(t).assign(&cache.h);
        h = cache.h.clone();
        c = cache.c.clone();
        input = s.row(choice).to_owned();
        steps.push(cache);
        tanh_a.push(ta);
        probs.push(p);
    }

    Rollout {
        x,
        enc,
        dec: LstmPass { steps, hs },
        tanh_a,
        probs,
        order,
        log_prob,
    }
}

/// Decodes a permutation. The log probability is the sum over steps of the
/// chosen entry's log softmax.
pub fn decode<R: Rng>(params: &NetParams, videos: &[Video], mode: DecodeMode<'_, R>) -> Decoded {
    let r = rollout(params, videos, mode);
    Decoded {
        order: r.order,
        log_prob: r.log_prob,
        step_probs: r.probs.into_iter().map(|p| p.to_vec()).collect(),
    }
}

/// Accumulates `coef * d(log pi)/d(params)` into `grad`.
pub(crate) fn actor_backward(params: &NetParams, ro: &Rollout, coef: f64, grad: &mut NetParams) {
    let n = ro.order.len();
    let m = params.hidden;
    let v = &params.pointer.v;
    let mut d_refs = Array2::<f64>::zeros((n, m));
    let mut d_dec_h = Array2::<f64>::zeros((n, m));

    for t in 0..n {
        let chosen = ro.order[t];
        let p = &ro.probs[t];
        let ta = &ro.tanh_a[t];
        let mut dq = Array1::<f64>::zeros(m);
        for j in 0..n {
            let indicator = if j == chosen { 1.0 } else { 0.0 };
            let du = coef * (indicator - p[j]);
            if du == 0.0 {
                continue;
            }
            let tj = ta.row(j);
            grad.pointer.v.scaled_add(du, &tj);
            let da = tj.mapv(|x| 1.0 - x * x) * v * du;
            d_refs.row_mut(j).scaled_add(1.0, &da);
            dq += &da;
        }
        outer_add(&mut grad.pointer.w_q, &dq, &ro.dec.steps[t].h);
        d_dec_h.row_mut(t).assign(&params.pointer.w_q.t().dot(&dq));
    }
    grad.pointer.w_ref += &d_refs.t().dot(&ro.enc.hs);
    let mut d_enc = d_refs.dot(&params.pointer.w_ref);

    let zero = Array1::zeros(m);
    let (d_inputs, dh0, dc0) = params
        .decoder
        .run_backward(&ro.dec, &d_dec_h, zero.clone(), zero, &mut grad.decoder);
    grad.start += &d_inputs.row(0);
    let mut d_s = Array2::<f64>::zeros((n, m));
    for t in 1..n {
        d_s.row_mut(ro.order[t - 1]).scaled_add(1.0, &d_inputs.row(t));
    }

    // decoder initial state is the encoder final state
    d_enc.row_mut(n - 1).scaled_add(1.0, &dh0);
    let (d_s_enc, _, _) = params.trunk.encoder.run_backward(
        &ro.enc,
        &d_enc,
        Array1::zeros(m),
        dc0,
        &mut grad.trunk.encoder,
    );
    d_s += &d_s_enc;
    grad.trunk.embed.w += &d_s.t().dot(&ro.x);
    grad.trunk.embed.b += &d_s.sum_axis(Axis(0));
}

pub(crate) struct CriticPass {
    /// Own trunk forward pass, absent under sharing.
    own: Option<LstmPass>,
    pooled: Array1<f64>,
    pre: Array1<f64>,
    hidden: Array1<f64>,
    pub value: f64,
}

fn critic_head(params: &NetParams, states: &Array2<f64>) -> (Array1<f64>, Array1<f64>, Array1<f64>, f64) {
    let head = &params.critic_head;
    let pooled = states.mean_axis(Axis(0)).expect("non-empty sequence");
    let pre = head.w1.dot(&pooled) + &head.b1;
    let hidden = pre.mapv(|x| x.max(0.0));
    let value = head.w2.dot(&hidden) + head.b2[0];
    (pooled, pre, hidden, value)
}

/// Critic forward pass reusing the rollout's encoding when the trunk is shared.
pub(crate) fn critic_forward(params: &NetParams, ro: &Rollout) -> CriticPass {
    let own = params.critic_trunk.as_ref().map(|trunk| {
        let s = embed_with(trunk, &ro.x);
        encode_with(trunk, &s)
    });
    let states = match &own {
        Some(pass) => &pass.hs,
        None => &ro.enc.hs,
    };
    let (pooled, pre, hidden, value) = critic_head(params, states);
    CriticPass {
        own,
        pooled,
        pre,
        hidden,
        value,
    }
}

/// Accumulates `d_value * d(value)/d(params)` into `grad`.
pub(crate) fn critic_backward(params: &NetParams, ro: &Rollout, cp: &CriticPass, d_value: f64, grad: &mut NetParams) {
    let head = &params.critic_head;
    let m = params.hidden;
    grad.critic_head.w2.scaled_add(d_value, &cp.hidden);
    grad.critic_head.b2[0] += d_value;
    let d_pre = Array1::from_iter(
        cp.pre
            .iter()
            .zip(head.w2.iter())
            .map(|(&z, &w)| if z > 0.0 { d_value * w } else { 0.0 }),
    );
    outer_add(&mut grad.critic_head.w1, &d_pre, &cp.pooled);
    grad.critic_head.b1 += &d_pre;
    let d_pooled = head.w1.t().dot(&d_pre);

    let (trunk, pass, grad_trunk) = match (&params.sharing, &cp.own) {
        (Sharing::Nsac, Some(pass)) => (
            params.critic_trunk.as_ref().expect("nsac critic trunk"),
            pass,
            grad.critic_trunk.as_mut().expect("nsac critic trunk gradient"),
        ),
        _ => (&params.trunk, &ro.enc, &mut grad.trunk),
    };
    let n = pass.hs.nrows();
    let mut d_states = Array2::<f64>::zeros((n, m));
    for mut row in d_states.axis_iter_mut(Axis(0)) {
        row.scaled_add(1.0 / n as f64, &d_pooled);
    }
    let (d_s, _, _) = trunk
        .encoder
        .run_backward(pass, &d_states, Array1::zeros(m), Array1::zeros(m), &mut grad_trunk.encoder);
    grad_trunk.embed.w += &d_s.t().dot(&ro.x);
    grad_trunk.embed.b += &d_s.sum_axis(Axis(0));
}

/// Estimated maximum startup delay for a set.
pub fn critic_predict(params: &NetParams, videos: &[Video]) -> f64 {
    let x = features(videos);
    let trunk = params.critic_trunk.as_ref().unwrap_or(&params.trunk);
    let s = embed_with(trunk, &x);
    let pass = encode_with(trunk, &s);
    critic_head(params, &pass.hs).3
}

/// Critic output on an already encoded sequence (actor trunk).
pub fn critic_predict_encoded(enc: &EncodedSeq, params: &NetParams) -> f64 {
    critic_head(params, &enc.states).3
}
