//! Binary checkpoint files.
//!
//! Little-endian layout:
//!
//! ```text
//! "DICP"                      magic
//! u32                         format version
//! u32 × 5                     generator: K, depth, in, out, channel cap
//! u32 × 3                     discriminator: k, encoders, in
//! u32                         tensor count
//! per tensor:
//!   u16, [u8]                 name length, UTF-8 name
//!   u8, u32 × rank            rank, dims
//!   f32 × product(dims)       payload
//! u64 × 5                     epoch, global step, seed, generator and
//!                             discriminator optimizer step counts
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::error::{Error, Result};
use crate::tensor::AdamState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DICP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: String, shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        NamedTensor { name, shape, data }
    }
}

/// Training progress stored alongside the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainingMeta {
    /// Completed epochs.
    pub epoch: u64,
    pub global_step: u64,
    pub seed: u64,
    pub gen_adam_steps: u64,
    pub disc_adam_steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub tensors: Vec<NamedTensor>,
    pub meta: TrainingMeta,
}

fn adam_tensors(names: &[String], shapes: &[Vec<usize>], state: &AdamState) -> Vec<NamedTensor> {
    let mut out = Vec::with_capacity(names.len() * 2);
    for (i, name) in names.iter().enumerate() {
        out.push(NamedTensor::new(format!("adam.{name}.m"), shapes[i].clone(), state.first_moment[i].clone()));
        out.push(NamedTensor::new(format!("adam.{name}.v"), shapes[i].clone(), state.second_moment[i].clone()));
    }
    out
}

impl Checkpoint {
    /// Snapshot both networks, plus optimizer moments when given as
    /// `(generator, discriminator)` states.
    pub fn capture(
        generator: &Generator,
        discriminator: &Discriminator,
        optimizers: Option<(&AdamState, &AdamState)>,
        meta: TrainingMeta,
    ) -> Self {
        let mut tensors = generator.state_tensors();
        tensors.extend(discriminator.state_tensors());
        let mut meta = meta;
        if let Some((g_opt, d_opt)) = optimizers {
            for (params, state) in [(generator.params(), g_opt), (discriminator.params(), d_opt)] {
                let shapes: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
                tensors.extend(adam_tensors(params.names(), &shapes, state));
            }
            meta.gen_adam_steps = g_opt.step_count;
            meta.disc_adam_steps = d_opt.step_count;
        }
        Checkpoint {
            generator: *generator.config(),
            discriminator: *discriminator.config(),
            tensors,
            meta,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn has_optimizer_state(&self) -> bool {
        self.tensors.iter().any(|t| t.name.starts_with("adam."))
    }

    /// Rebuild the generator stored in this checkpoint.
    pub fn generator(&self) -> Result<Generator> {
        let mut g = Generator::new(self.generator, 0)?;
        g.load_state(&self.tensors)?;
        Ok(g)
    }

    pub fn discriminator(&self) -> Result<Discriminator> {
        let mut d = Discriminator::new(self.discriminator, 0)?;
        d.load_state(&self.tensors)?;
        Ok(d)
    }

    /// Load weights into existing networks. Shapes must match the networks'
    /// own configuration; nothing is modified on error.
    pub fn restore_into(&self, generator: &mut Generator, discriminator: &mut Discriminator) -> Result<()> {
        let mut g = generator.clone();
        let mut d = discriminator.clone();
        g.load_state(&self.tensors)?;
        d.load_state(&self.tensors)?;
        *generator = g;
        *discriminator = d;
        Ok(())
    }

    /// Optimizer state for the parameters `names`, in order.
    pub fn adam_state(&self, names: &[String], step_count: u64) -> Result<AdamState> {
        let mut first = Vec::with_capacity(names.len());
        let mut second = Vec::with_capacity(names.len());
        for name in names {
            for (suffix, dst) in [("m", &mut first), ("v", &mut second)] {
                let key = format!("adam.{name}.{suffix}");
                let t = self
                    .tensor(&key)
                    .ok_or_else(|| Error::shape(format!("checkpoint is missing tensor {key}")))?;
                dst.push(t.data.clone());
            }
        }
        Ok(AdamState {
            first_moment: first,
            second_moment: second,
            step_count,
        })
    }

    /// Reject tensors that neither network nor optimizer would consume.
    fn check_names(&self, path: &Path) -> Result<()> {
        let g = Generator::new(self.generator, 0)?;
        let d = Discriminator::new(self.discriminator, 0)?;
        let mut known: HashSet<String> = HashSet::new();
        for t in g.state_tensors().into_iter().chain(d.state_tensors()) {
            known.insert(t.name);
        }
        for name in g.params().names().iter().chain(d.params().names()) {
            known.insert(format!("adam.{name}.m"));
            known.insert(format!("adam.{name}.v"));
        }
        let mut seen = HashSet::new();
        for t in &self.tensors {
            if !known.contains(&t.name) {
                return Err(Error::corrupt(path, format!("unknown tensor name {}", t.name)));
            }
            if !seen.insert(t.name.as_str()) {
                return Err(Error::corrupt(path, format!("duplicate tensor name {}", t.name)));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        let put32 = |buf: &mut Vec<u8>, v: u32| buf.extend_from_slice(&v.to_le_bytes());
        put32(&mut buf, CHECKPOINT_VERSION);
        let g = &self.generator;
        for v in [g.base_layer_k, g.depth, g.in_channels, g.out_channels, g.channel_cap] {
            put32(&mut buf, v as u32);
        }
        let d = &self.discriminator;
        for v in [d.base_layer_k, d.num_encoders, d.in_channels] {
            put32(&mut buf, v as u32);
        }
        put32(&mut buf, self.tensors.len() as u32);
        for t in &self.tensors {
            buf.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            buf.extend_from_slice(t.name.as_bytes());
            buf.push(t.shape.len() as u8);
            for &dim in &t.shape {
                put32(&mut buf, dim as u32);
            }
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let m = &self.meta;
        for v in [m.epoch, m.global_step, m.seed, m.gen_adam_steps, m.disc_adam_steps] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::corrupt(path, "bad magic, not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let generator = GeneratorConfig {
            base_layer_k: r.u32()? as usize,
            depth: r.u32()? as usize,
            in_channels: r.u32()? as usize,
            out_channels: r.u32()? as usize,
            channel_cap: r.u32()? as usize,
        };
        let discriminator = DiscriminatorConfig {
            base_layer_k: r.u32()? as usize,
            num_encoders: r.u32()? as usize,
            in_channels: r.u32()? as usize,
        };
        generator
            .validate()
            .and_then(|_| discriminator.validate())
            .map_err(|e| Error::corrupt(path, format!("invalid network configuration: {e}")))?;

        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::corrupt(path, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| Error::corrupt(path, format!("tensor {name} has an implausible shape {shape:?}")))?;
            let payload = r.take(numel * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        let meta = TrainingMeta {
            epoch: r.u64()?,
            global_step: r.u64()?,
            seed: r.u64()?,
            gen_adam_steps: r.u64()?,
            disc_adam_steps: r.u64()?,
        };
        if r.pos != bytes.len() {
            return Err(Error::corrupt(path, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ckpt = Checkpoint {
            generator,
            discriminator,
            tensors,
            meta,
        };
        ckpt.check_names(path)?;
        Ok(ckpt)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::corrupt(
                self.path,
                format!("truncated: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Write atomically: a sibling temp file is renamed over `path`.
pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &checkpoint.to_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
