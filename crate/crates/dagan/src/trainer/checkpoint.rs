//! The `DGCK` checkpoint: everything needed to resume training exactly —
//! parameters, renorm buffers, Adam moments, the RNG stream position, and
//! a TOML echo of the run configuration. Little-endian, f32 payload;
//! round-trips are bitwise.
//!
//! ```text
//! magic    "DGCK"             config   u64 len + TOML bytes
//! version  u32                manifest u64 count, then per tensor:
//! global_step, epoch  u64       name (u64 len + utf8), dtype ("f32"),
//! rng      seed[32] +           ndim u64, dims u64×ndim, byte offset u64
//!          word_pos u128 +    payload  u64 byte length + f32 data
//!          stream u64
//! gen/critic Adam steps  u64 each
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::ArrayD;
use rand_chacha::ChaCha8Rng;

use dagan_nn::rng::RngState;
use dagan_nn::{Adam, Scalar, Tensor};

use crate::critic::Critic;
use crate::error::{train_err, Result};
use crate::generator::Generator;

const MAGIC: &[u8; 4] = b"DGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Critic steps taken so far.
    pub global_step: u64,
    /// Completed epochs.
    pub epoch: u64,
    pub rng: RngState,
    pub gen_adam_step: u64,
    pub critic_adam_step: u64,
    /// TOML echo of the full run configuration.
    pub config_echo: String,
    pub tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&TensorEntry> {
        self.tensors.iter().find(|t| t.name == name)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(train_err!("checkpoint manifest repeats tensor {}", t.name));
            }
            if t.dims.iter().product::<usize>() != t.data.len() {
                return Err(train_err!(
                    "checkpoint tensor {}: dims {:?} but {} values",
                    t.name,
                    t.dims,
                    t.data.len()
                ));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LE>(self.format_version).unwrap();
        out.write_u64::<LE>(self.global_step).unwrap();
        out.write_u64::<LE>(self.epoch).unwrap();
        out.extend_from_slice(&self.rng.seed);
        out.write_u128::<LE>(self.rng.word_pos).unwrap();
        out.write_u64::<LE>(self.rng.stream).unwrap();
        out.write_u64::<LE>(self.gen_adam_step).unwrap();
        out.write_u64::<LE>(self.critic_adam_step).unwrap();
        write_str(&mut out, &self.config_echo);
        out.write_u64::<LE>(self.tensors.len() as u64).unwrap();
        let mut offset = 0u64;
        for t in &self.tensors {
            write_str(&mut out, &t.name);
            write_str(&mut out, "f32");
            out.write_u64::<LE>(t.dims.len() as u64).unwrap();
            for &d in &t.dims {
                out.write_u64::<LE>(d as u64).unwrap();
            }
            out.write_u64::<LE>(offset).unwrap();
            offset += 4 * t.data.len() as u64;
        }
        out.write_u64::<LE>(offset).unwrap();
        for t in &self.tensors {
            for &v in &t.data {
                out.write_f32::<LE>(v).unwrap();
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(|_| truncated())?;
        if &magic != MAGIC {
            return Err(train_err!("bad magic {magic:?}, not a DGCK checkpoint"));
        }
        let format_version = cur.read_u32::<LE>().map_err(|_| truncated())?;
        if format_version != CHECKPOINT_VERSION {
            return Err(train_err!("unsupported checkpoint version {format_version}"));
        }
        let global_step = cur.read_u64::<LE>().map_err(|_| truncated())?;
        let epoch = cur.read_u64::<LE>().map_err(|_| truncated())?;
        let mut seed = [0u8; 32];
        cur.read_exact(&mut seed).map_err(|_| truncated())?;
        let word_pos = cur.read_u128::<LE>().map_err(|_| truncated())?;
        let stream = cur.read_u64::<LE>().map_err(|_| truncated())?;
        let gen_adam_step = cur.read_u64::<LE>().map_err(|_| truncated())?;
        let critic_adam_step = cur.read_u64::<LE>().map_err(|_| truncated())?;
        let config_echo = read_str(&mut cur)?;
        let count = cur.read_u64::<LE>().map_err(|_| truncated())? as usize;
        let mut manifest = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_str(&mut cur)?;
            let dtype = read_str(&mut cur)?;
            if dtype != "f32" {
                return Err(train_err!("tensor {name}: unsupported dtype {dtype}"));
            }
            let ndim = cur.read_u64::<LE>().map_err(|_| truncated())? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(cur.read_u64::<LE>().map_err(|_| truncated())? as usize);
            }
            let offset = cur.read_u64::<LE>().map_err(|_| truncated())? as usize;
            manifest.push((name, dims, offset));
        }
        let payload_len = cur.read_u64::<LE>().map_err(|_| truncated())? as usize;
        let mut payload = vec![0f32; payload_len / 4];
        cur.read_f32_into::<LE>(&mut payload).map_err(|_| truncated())?;
        let mut tensors = Vec::with_capacity(count);
        for (name, dims, offset) in manifest {
            let len: usize = dims.iter().product();
            let start = offset / 4;
            let data = payload
                .get(start..start + len)
                .ok_or_else(|| train_err!("tensor {name}: payload overrun"))?
                .to_vec();
            tensors.push(TensorEntry { name, dims, data });
        }
        let ckpt = Checkpoint {
            format_version,
            global_step,
            epoch,
            rng: RngState { seed, word_pos, stream },
            gen_adam_step,
            critic_adam_step,
            config_echo,
            tensors,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
            .map_err(|e| train_err!("{}: {e}", path.display()))
    }
}

fn truncated() -> crate::error::Error {
    train_err!("truncated checkpoint")
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.write_u64::<LE>(s.len() as u64).unwrap();
    out.extend_from_slice(s.as_bytes());
}

fn read_str(cur: &mut Cursor<&[u8]>) -> Result<String> {
    let len = cur.read_u64::<LE>().map_err(|_| truncated())? as usize;
    let mut buf = vec![0u8; len];
    cur.read_exact(&mut buf).map_err(|_| truncated())?;
    String::from_utf8(buf).map_err(|_| train_err!("checkpoint string is not utf-8"))
}

fn entry_from<T: Scalar>(name: String, t: &Tensor<T>) -> TensorEntry {
    TensorEntry {
        name,
        dims: t.shape().to_vec(),
        data: t.to_vec().iter().map(|v| v.as_f64() as f32).collect(),
    }
}

fn load_into<T: Scalar>(entry: &TensorEntry, t: &Tensor<T>) -> Result<()> {
    if entry.dims != t.shape() {
        return Err(train_err!(
            "checkpoint tensor {} has dims {:?}, model wants {:?}",
            entry.name,
            entry.dims,
            t.shape()
        ));
    }
    let mut data = t.data_mut();
    for (dst, src) in data.iter_mut().zip(&entry.data) {
        *dst = T::cast(*src as f64);
    }
    Ok(())
}

/// Collects the full training state into a checkpoint.
pub fn snapshot<T: Scalar>(
    config_echo: String,
    global_step: u64,
    epoch: u64,
    rng: &ChaCha8Rng,
    generator: &Generator<T>,
    critic: &Critic<T>,
    opt_gen: &Adam<T>,
    opt_critic: &Adam<T>,
) -> Checkpoint {
    let mut tensors = Vec::new();
    for (name, t) in generator.named_params() {
        tensors.push(entry_from(format!("gen.{name}"), &t));
    }
    for (name, t) in generator.named_buffers() {
        tensors.push(entry_from(format!("gen_buf.{name}"), &t));
    }
    for (name, t) in critic.named_params() {
        tensors.push(entry_from(format!("critic.{name}"), &t));
    }
    for (prefix, opt) in [("opt_gen", opt_gen), ("opt_critic", opt_critic)] {
        for (name, m, v) in opt.moments() {
            tensors.push(TensorEntry {
                name: format!("{prefix}.{name}.m"),
                dims: m.shape().to_vec(),
                data: m.iter().map(|x| x.as_f64() as f32).collect(),
            });
            tensors.push(TensorEntry {
                name: format!("{prefix}.{name}.v"),
                dims: v.shape().to_vec(),
                data: v.iter().map(|x| x.as_f64() as f32).collect(),
            });
        }
    }
    Checkpoint {
        format_version: CHECKPOINT_VERSION,
        global_step,
        epoch,
        rng: RngState::capture(rng),
        gen_adam_step: opt_gen.step_count(),
        critic_adam_step: opt_critic.step_count(),
        config_echo,
        tensors,
    }
}

/// Writes a checkpoint back into live models and optimizers; returns the
/// restored RNG. Every model tensor must be present with matching shape.
pub fn restore<T: Scalar>(
    ckpt: &Checkpoint,
    generator: &mut Generator<T>,
    critic: &mut Critic<T>,
    opt_gen: &mut Adam<T>,
    opt_critic: &mut Adam<T>,
) -> Result<ChaCha8Rng> {
    let missing = |name: &str| train_err!("checkpoint lacks tensor {name}");
    for (name, t) in generator.named_params() {
        let key = format!("gen.{name}");
        load_into(ckpt.tensor(&key).ok_or_else(|| missing(&key))?, &t)?;
    }
    for (name, t) in generator.named_buffers() {
        let key = format!("gen_buf.{name}");
        load_into(ckpt.tensor(&key).ok_or_else(|| missing(&key))?, &t)?;
    }
    for (name, t) in critic.named_params() {
        let key = format!("critic.{name}");
        load_into(ckpt.tensor(&key).ok_or_else(|| missing(&key))?, &t)?;
    }
    for (prefix, opt, step) in [
        ("opt_gen", &mut *opt_gen, ckpt.gen_adam_step),
        ("opt_critic", &mut *opt_critic, ckpt.critic_adam_step),
    ] {
        opt.restore(step, |name| {
            let m = ckpt.tensor(&format!("{prefix}.{name}.m"))?;
            let v = ckpt.tensor(&format!("{prefix}.{name}.v"))?;
            Some((to_array::<T>(m), to_array::<T>(v)))
        })?;
    }
    Ok(ckpt.rng.restore())
}

fn to_array<T: Scalar>(entry: &TensorEntry) -> ArrayD<T> {
    ArrayD::from_shape_vec(
        ndarray::IxDyn(&entry.dims),
        entry.data.iter().map(|&v| T::cast(v as f64)).collect(),
    )
    .expect("manifest dims validated against payload length")
}
