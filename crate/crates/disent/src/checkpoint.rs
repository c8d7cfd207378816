//! Versioned single-file checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "DSNTCKPT"
//! version    u32
//! config     u32 length + UTF-8 `key = value` lines
//! step       u64
//! rng        u32 length + stream state bytes
//! params     table
//! ema        table
//! adam_m     table
//! adam_v     table
//! adam_t     u32 count + u64 per parameter
//! digest     32 bytes, SHA-256 of everything above
//!
//! table      u32 count, then per tensor:
//!            u16 name length, name, u8 dtype (1 = f64), u8 ndim,
//!            u64 per dim, raw f64 data
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use disent_core::params::ParamStore;
use disent_core::rng::RngStreams;
use disent_core::training::TrainState;
use disent_core::{Tensor, TrainConfig};

use crate::config_file::{parse_config, render_config};
use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"DSNTCKPT";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: u64,
    pub params: ParamStore,
    pub ema: ParamStore,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
    pub adam_t: Vec<u64>,
    pub rng_state: Vec<u8>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState) -> Self {
        let (m, v, t) = state.optimizer.state();
        Self {
            config: state.config().clone(),
            step: state.step,
            params: state.model.params.clone(),
            ema: state.ema.clone(),
            adam_m: m.into_iter().cloned().collect(),
            adam_v: v.into_iter().cloned().collect(),
            adam_t: t.to_vec(),
            rng_state: state.rngs.to_bytes(),
        }
    }

    /// Rebuilds the full training state.
    pub fn to_state(&self) -> Result<TrainState> {
        let mut state = TrainState::new(&self.config)?;
        let layout = |what: &str| Error::Integrity(format!("{what} do not match the configured networks"));
        if !self.params.same_layout(&state.model.params) {
            return Err(layout("parameters"));
        }
        if !self.ema.same_layout(&state.model.params) {
            return Err(layout("EMA parameters"));
        }
        state.model.params = self.params.clone();
        state.ema = self.ema.clone();
        if !state
            .optimizer
            .restore(self.adam_m.clone(), self.adam_v.clone(), self.adam_t.clone())
        {
            return Err(layout("optimizer moments"));
        }
        state.rngs = RngStreams::from_bytes(&self.rng_state).ok_or_else(|| layout("RNG state"))?;
        state.step = self.step;
        Ok(state)
    }

    /// Inference model with EMA parameters.
    pub fn ema_model(&self) -> Result<disent_core::Model> {
        let mut rngs = RngStreams::new(self.config.seed);
        let model = disent_core::Model::new(&self.config, &mut rngs)?;
        Ok(model.with_params(self.ema.clone())?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_blob(&mut out, render_config(&self.config).as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        put_blob(&mut out, &self.rng_state);
        let named = |store: &ParamStore| {
            store
                .iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect::<Vec<_>>()
        };
        let with_names = |ts: &[Tensor]| {
            self.params
                .iter()
                .zip(ts)
                .map(|((n, _), t)| (n.to_string(), t.clone()))
                .collect::<Vec<_>>()
        };
        put_table(&mut out, &named(&self.params))?;
        put_table(&mut out, &named(&self.ema))?;
        put_table(&mut out, &with_names(&self.adam_m))?;
        put_table(&mut out, &with_names(&self.adam_v))?;
        out.extend_from_slice(&(self.adam_t.len() as u32).to_le_bytes());
        for t in &self.adam_t {
            out.extend_from_slice(&t.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(Error::Integrity("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Integrity("digest mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 12 };
        let config_text =
            String::from_utf8(r.blob()?.to_vec()).map_err(|_| Error::Integrity("config blob is not UTF-8".into()))?;
        let config = parse_config(&config_text)?;
        let step = r.u64()?;
        let rng_state = r.blob()?.to_vec();
        let params = r.store()?;
        let ema = r.store()?;
        let adam_m = r.table()?.into_iter().map(|(_, t)| t).collect();
        let adam_v = r.table()?.into_iter().map(|(_, t)| t).collect();
        let n = r.u32()? as usize;
        let adam_t = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        if r.pos != body.len() {
            return Err(Error::Integrity("trailing bytes".into()));
        }
        Ok(Self {
            config,
            step,
            params,
            ema,
            adam_m,
            adam_v,
            adam_t,
            rng_state,
        })
    }
}

fn put_blob(out: &mut Vec<u8>, blob: &[u8]) {
    out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
    out.extend_from_slice(blob);
}

fn put_table(out: &mut Vec<u8>, entries: &[(String, Tensor)]) -> Result<()> {
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        if !t.is_finite() {
            return Err(Error::Core(disent_core::Error::NonFinite {
                context: "checkpoint tensor",
            }));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F64);
        out.push(t.ndim() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Integrity("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn table(&mut self) -> Result<Vec<(String, Tensor)>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let len = self.u16()? as usize;
            let name = String::from_utf8(self.take(len)?.to_vec())
                .map_err(|_| Error::Integrity("tensor name is not UTF-8".into()))?;
            if self.u8()? != DTYPE_F64 {
                return Err(Error::Integrity(format!("`{name}`: unknown dtype")));
            }
            let ndim = self.u8()? as usize;
            let shape = (0..ndim)
                .map(|_| self.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let raw = self.take(count * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            out.push((name, Tensor::new(&shape, data)));
        }
        Ok(out)
    }

    fn store(&mut self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, t) in self.table()? {
            if store.id(&name).is_some() {
                return Err(Error::Integrity(format!("duplicate tensor `{name}`")));
            }
            store.insert(name, t);
        }
        Ok(store)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, &bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Checkpoint::from_bytes(&bytes)
}
