//! Versioned binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic            8 bytes  "TXRKCKPT"
//! version          u32      1
//! run config       u32 length + UTF-8 key=value text
//! encoder kind     u8       index into EncoderKind::ALL
//! input_dim        u32
//! hidden_dim       u32
//! rcnn_order       u32
//! filter widths    u32 count + u32 each
//! seed             u64
//! best_epoch       u64
//! epochs_trained   u64
//! best_mrr         f64
//! tensors          u32 count, then per tensor:
//!                    u32 length + UTF-8 name
//!                    u32 ndim + u32 per dimension
//!                    f64 per value
//! ```

use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::encoders::{Encoder, EncoderConfig, EncoderKind, EncoderParams};
use crate::error::{Error, Result};
use crate::nn::ParamSet;

const MAGIC: &[u8; 8] = b"TXRKCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub run: RunConfig,
    pub encoder: Encoder,
    pub seed: u64,
    pub best_epoch: u64,
    pub epochs_trained: u64,
    /// Validation MRR as a fraction.
    pub best_mrr: f64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("checkpoint field exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        w.str(&self.run.to_text());

        let c = &self.encoder.config;
        let kind = EncoderKind::ALL.iter().position(|&k| k == c.kind).unwrap();
        w.u8(kind as u8);
        w.u32(c.input_dim);
        w.u32(c.hidden_dim);
        w.u32(c.rcnn_order);
        w.u32(c.cnn_filter_widths.len());
        for &width in &c.cnn_filter_widths {
            w.u32(width);
        }

        w.u64(self.seed);
        w.u64(self.best_epoch);
        w.u64(self.epochs_trained);
        w.f64(self.best_mrr);

        let tensors = self.encoder.params.tensors();
        w.u32(tensors.len());
        for t in tensors {
            w.str(t.name());
            w.u32(t.shape().len());
            for &d in t.shape() {
                w.u32(d);
            }
            for &v in t.values() {
                w.f64(v);
            }
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let run = RunConfig::parse(&r.str()?)?;

        let kind = *EncoderKind::ALL
            .get(r.u8()? as usize)
            .ok_or_else(|| Error::Checkpoint("unknown encoder kind".into()))?;
        let input_dim = r.u32()?;
        let hidden_dim = r.u32()?;
        let rcnn_order = r.u32()?;
        let n_widths = r.u32()?;
        let cnn_filter_widths = (0..n_widths).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let config = EncoderConfig {
            kind,
            input_dim,
            hidden_dim,
            cnn_filter_widths,
            rcnn_order,
        };

        let seed = r.u64()?;
        let best_epoch = r.u64()?;
        let epochs_trained = r.u64()?;
        let best_mrr = r.f64()?;

        let mut params = EncoderParams::zeros(&config)?;
        let count = r.u32()?;
        let mut tensors = params.tensors_mut();
        if count != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                tensors.len()
            )));
        }
        for t in tensors.iter_mut() {
            let name = r.str()?;
            let ndim = r.u32()?;
            let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            if name != t.name() || shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} {shape:?} does not match {} {:?}",
                    t.name(),
                    t.shape()
                )));
            }
            for v in t.values_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }

        Ok(Checkpoint {
            run,
            encoder: Encoder::from_parts(config, params)?,
            seed,
            best_epoch,
            epochs_trained,
            best_mrr,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
