//! Network parameters, flat views for the optimizer, and the checkpoint
//! format.
//!
//! Checkpoint layout (little endian):
//!
//! ```text
//! magic    8 bytes  "VIDORDCK"
//! version  u32      1
//! hidden   u32      m
//! sharing  u8       0 = psac, 1 = nsac
//! count    u32      number of tensors
//! per tensor:
//!   name   u16 length + utf-8 bytes
//!   ndim   u8, then ndim x u32 dims
//!   data   f64 x product(dims)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-video input features.
pub const FEATURES: usize = 4;

const MAGIC: &[u8; 8] = b"VIDORDCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharing {
    /// Critic reuses the actor's embedding and encoder.
    Psac,
    /// Critic has its own embedding and encoder.
    Nsac,
}

impl std::str::FromStr for Sharing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psac" => Ok(Sharing::Psac),
            "nsac" => Ok(Sharing::Nsac),
            other => Err(Error::config(format!("unknown sharing mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// (4m, input) stacked input, forget, candidate, output gates.
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

/// Embedding followed by the LSTM encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Trunk {
    pub embed: Affine,
    pub encoder: LstmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pointer {
    pub w_ref: Array2<f64>,
    pub w_q: Array2<f64>,
    pub v: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticHead {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub sharing: Sharing,
    pub hidden: usize,
    pub trunk: Trunk,
    pub decoder: LstmParams,
    pub pointer: Pointer,
    /// Decoder input at the first step.
    pub start: Array1<f64>,
    pub critic_head: CriticHead,
    /// Present only without sharing.
    pub critic_trunk: Option<Trunk>,
}

/// Which optimizer updates a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Owner {
    pub actor: bool,
    pub critic: bool,
}

fn uniform2(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

fn uniform1(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.random_range(-bound..bound))
}

impl LstmParams {
    fn init(rng: &mut ChaCha8Rng, input: usize, m: usize, bound: f64) -> Self {
        LstmParams {
            w_x: uniform2(rng, 4 * m, input, bound),
            w_h: uniform2(rng, 4 * m, m, bound),
            b: uniform1(rng, 4 * m, bound),
        }
    }
}

impl Trunk {
    fn init(rng: &mut ChaCha8Rng, m: usize, bound: f64) -> Self {
        Trunk {
            embed: Affine {
                w: uniform2(rng, m, FEATURES, bound),
                b: uniform1(rng, m, bound),
            },
            encoder: LstmParams::init(rng, m, m, bound),
        }
    }
}

impl NetParams {
    /// Uniform initialisation in [-1/sqrt(m), 1/sqrt(m)].
    pub fn init(hidden: usize, sharing: Sharing, seed: u64) -> Self {
        assert!(hidden > 0, "hidden size must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = hidden;
        let bound = 1.0 / (m as f64).sqrt();
        let trunk = Trunk::init(&mut rng, m, bound);
        let decoder = LstmParams::init(&mut rng, m, m, bound);
        let pointer = Pointer {
            w_ref: uniform2(&mut rng, m, m, bound),
            w_q: uniform2(&mut rng, m, m, bound),
            v: uniform1(&mut rng, m, bound),
        };
        let start = uniform1(&mut rng, m, bound);
        let critic_head = CriticHead {
            w1: uniform2(&mut rng, m, m, bound),
            b1: uniform1(&mut rng, m, bound),
            w2: uniform1(&mut rng, m, bound),
            b2: uniform1(&mut rng, 1, bound),
        };
        let critic_trunk = match sharing {
            Sharing::Psac => None,
            Sharing::Nsac => Some(Trunk::init(&mut rng, m, bound)),
        };
        NetParams {
            sharing,
            hidden,
            trunk,
            decoder,
            pointer,
            start,
            critic_head,
            critic_trunk,
        }
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, _, data| data.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    /// Visits every tensor in a fixed order: (name, shape, data).
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.visit_owned(&mut |name, shape, _, data| f(name, shape, data));
    }

    pub(crate) fn visit_owned<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], Owner, &'a [f64])) {
        let shared = Owner {
            actor: true,
            critic: self.sharing == Sharing::Psac,
        };
        let actor = Owner {
            actor: true,
            critic: false,
        };
        let critic = Owner {
            actor: false,
            critic: true,
        };
        let mut two = |name: &str, a: &'a Array2<f64>, o: Owner| f(name, a.shape(), o, a.as_slice().expect("standard layout"));
        two("embed.w", &self.trunk.embed.w, shared);
        two("encoder.w_x", &self.trunk.encoder.w_x, shared);
        two("encoder.w_h", &self.trunk.encoder.w_h, shared);
        two("decoder.w_x", &self.decoder.w_x, actor);
        two("decoder.w_h", &self.decoder.w_h, actor);
        two("pointer.w_ref", &self.pointer.w_ref, actor);
        two("pointer.w_q", &self.pointer.w_q, actor);
        two("critic.w1", &self.critic_head.w1, critic);
        if let Some(t) = &self.critic_trunk {
            two("critic_embed.w", &t.embed.w, critic);
            two("critic_encoder.w_x", &t.encoder.w_x, critic);
            two("critic_encoder.w_h", &t.encoder.w_h, critic);
        }
        let mut one = |name: &str, a: &'a Array1<f64>, o: Owner| f(name, a.shape(), o, a.as_slice().expect("standard layout"));
        one("embed.b", &self.trunk.embed.b, shared);
        one("encoder.b", &self.trunk.encoder.b, shared);
        one("decoder.b", &self.decoder.b, actor);
        one("pointer.v", &self.pointer.v, actor);
        one("start", &self.start, actor);
        one("critic.b1", &self.critic_head.b1, critic);
        one("critic.w2", &self.critic_head.w2, critic);
        one("critic.b2", &self.critic_head.b2, critic);
        if let Some(t) = &self.critic_trunk {
            one("critic_embed.b", &t.embed.b, critic);
            one("critic_encoder.b", &t.encoder.b, critic);
        }
    }

    /// Mutable counterpart of [`visit`](Self::visit), same order.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let mut two = |name: &str, a: &mut Array2<f64>| {
            let shape = a.shape().to_vec();
            f(name, &shape, a.as_slice_mut().expect("standard layout"))
        };
        two("embed.w", &mut self.trunk.embed.w);
        two("encoder.w_x", &mut self.trunk.encoder.w_x);
        two("encoder.w_h", &mut self.trunk.encoder.w_h);
        two("decoder.w_x", &mut self.decoder.w_x);
        two("decoder.w_h", &mut self.decoder.w_h);
        two("pointer.w_ref", &mut self.pointer.w_ref);
        two("pointer.w_q", &mut self.pointer.w_q);
        two("critic.w1", &mut self.critic_head.w1);
        if let Some(t) = &mut self.critic_trunk {
            two("critic_embed.w", &mut t.embed.w);
            two("critic_encoder.w_x", &mut t.encoder.w_x);
            two("critic_encoder.w_h", &mut t.encoder.w_h);
        }
        let mut one = |name: &str, a: &mut Array1<f64>| {
            let shape = a.shape().to_vec();
            f(name, &shape, a.as_slice_mut().expect("standard layout"))
        };
        one("embed.b", &mut self.trunk.embed.b);
        one("encoder.b", &mut self.trunk.encoder.b);
        one("decoder.b", &mut self.decoder.b);
        one("pointer.v", &mut self.pointer.v);
        one("start", &mut self.start);
        one("critic.b1", &mut self.critic_head.b1);
        one("critic.w2", &mut self.critic_head.w2);
        one("critic.b2", &mut self.critic_head.b2);
        if let Some(t) = &mut self.critic_trunk {
            one("critic_embed.b", &mut t.embed.b);
            one("critic_encoder.b", &mut t.encoder.b);
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, d| n += d.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, d| ok &= d.iter().all(|x| x.is_finite()));
        ok
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, _, d| out.extend_from_slice(d));
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |_, _, d| {
            d.copy_from_slice(&flat[at..at + d.len()]);
            at += d.len();
        });
        assert_eq!(at, flat.len(), "flat vector length mismatch");
    }

    /// Per-scalar ownership masks (actor, critic), aligned with [`to_flat`](Self::to_flat).
    pub(crate) fn owner_masks(&self) -> (Vec<bool>, Vec<bool>) {
        let (mut a, mut c) = (Vec::new(), Vec::new());
        self.visit_owned(&mut |_, _, o, d| {
            a.extend(std::iter::repeat_n(o.actor, d.len()));
            c.extend(std::iter::repeat_n(o.critic, d.len()));
        });
        (a, c)
    }

    pub fn add_assign(&mut self, other: &NetParams) {
        let flat = other.to_flat();
        let mut at = 0;
        self.visit_mut(&mut |_, _, d| {
            for x in d.iter_mut() {
                *x += flat[at];
                at += 1;
            }
        });
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.hidden as u32)?;
        w.write_u8(match self.sharing {
            Sharing::Psac => 0,
            Sharing::Nsac => 1,
        })?;
        let mut tensors: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        self.visit(&mut |name, shape, d| tensors.push((name.to_string(), shape.to_vec(), d)));
        w.write_u32::<LittleEndian>(tensors.len() as u32)?;
        for (name, shape, data) in tensors {
            w.write_u16::<LittleEndian>(name.len() as u16)?;
            w.write_all(name.as_bytes())?;
            w.write_u8(shape.len() as u8)?;
            for d in &shape {
                w.write_u32::<LittleEndian>(*d as u32)?;
            }
            for x in data {
                w.write_f64::<LittleEndian>(*x)?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let hidden = r.read_u32::<LittleEndian>()? as usize;
        if hidden == 0 {
            return Err(bad("hidden size 0".into()));
        }
        let sharing = match r.read_u8()? {
            0 => Sharing::Psac,
            1 => Sharing::Nsac,
            other => return Err(bad(format!("unknown sharing tag {other}"))),
        };
        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut stored = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.read_u16::<LittleEndian>()? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| bad(e.to_string()))?;
            let ndim = r.read_u8()? as usize;
            let shape = (0..ndim)
                .map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize))
                .collect::<std::io::Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut data = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            stored.push((name, shape, data));
        }

        let mut params = NetParams::init(hidden, sharing, 0);
        let mut idx = 0;
        let mut err = None;
        params.visit_mut(&mut |name, shape, d| {
            if err.is_some() {
                return;
            }
            match stored.get(idx) {
                Some((n, s, data)) if n == name && s == shape => d.copy_from_slice(data),
                Some((n, s, _)) => {
                    err = Some(format!("tensor {idx}: expected {name} {shape:?}, found {n} {s:?}"));
                }
                None => err = Some(format!("missing tensor {name}")),
            }
            idx += 1;
        });
        if let Some(e) = err {
            return Err(bad(e));
        }
        if idx != stored.len() {
            return Err(bad(format!("{} unexpected trailing tensors", stored.len() - idx)));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psac_has_fewer_parameters() {
        let m = 16;
        let p = NetParams::init(m, Sharing::Psac, 1).param_count();
        let n = NetParams::init(m, Sharing::Nsac, 1).param_count();
        let trunk = m * FEATURES + m + 4 * m * m * 2 + 4 * m;
        assert_eq!(n - p, trunk);
        // embed + encoder + decoder + pointer + start + critic head
        let expect = trunk + (8 * m * m + 4 * m) + (2 * m * m + m) + m + (m * m + m + m + 1);
        assert_eq!(p, expect);
    }

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        for sharing in [Sharing::Psac, Sharing::Nsac] {
            let p = NetParams::init(5, sharing, 9);
            let mut buf = Vec::new();
            p.write_checkpoint(&mut buf).unwrap();
            let q = NetParams::read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(p, q);
            let bits = |x: &NetParams| x.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&p), bits(&q));
            let mut again = Vec::new();
            q.write_checkpoint(&mut again).unwrap();
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let p = NetParams::init(3, Sharing::Psac, 1);
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(NetParams::read_checkpoint(bad.as_slice()).is_err());
        assert!(NetParams::read_checkpoint(&buf[..buf.len() - 3]).is_err());
        // flip sharing tag: tensor list no longer matches
        let mut flipped = buf.clone();
        flipped[16] = 1;
        assert!(NetParams::read_checkpoint(flipped.as_slice()).is_err());
    }

    #[test]
    fn flat_round_trip_and_masks() {
        let p = NetParams::init(4, Sharing::Psac, 2);
        let mut q = p.zeros_like();
        q.assign_flat(&p.to_flat());
        assert_eq!(p, q);
        let (a, c) = p.owner_masks();
        assert_eq!(a.len(), p.param_count());
        // the shared trunk is owned by both
        assert!(a[0] && c[0]);
        let n = NetParams::init(4, Sharing::Nsac, 2);
        let (a, c) = n.owner_masks();
        assert!(a[0] && !c[0]);
        assert!(a.iter().zip(&c).all(|(x, y)| x ^ y));
    }
}
