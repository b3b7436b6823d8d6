//! Binary model checkpoints: encoder, decoder, optional pool and centroids,
//! stored as little-endian f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Activation, Autoencoder, Layer, MlpNetwork};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;
use crate::statpool::{Spread, StatPool};

const MAGIC: &[u8; 4] = b"SDCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub autoencoder: Autoencoder<T>,
    pub centroids: Option<Matrix<T>>,
}

/// JSON sidecar written next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub encoder_topology: Vec<usize>,
    pub decoder_topology: Vec<usize>,
    pub stat_pooling: bool,
    pub k: Option<usize>,
    pub seed: u64,
    pub iterations: usize,
}

impl CheckpointMeta {
    pub fn describe<T: Scalar>(ckpt: &Checkpoint<T>, seed: u64, iterations: usize) -> Self {
        Self {
            encoder_topology: ckpt.autoencoder.encoder.topology(),
            decoder_topology: ckpt.autoencoder.decoder.topology(),
            stat_pooling: ckpt.autoencoder.pool.is_some(),
            k: ckpt.centroids.as_ref().map(Matrix::rows),
            seed,
            iterations,
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn floats<T: Scalar>(&mut self, vs: &[T]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }

    fn matrix<T: Scalar>(&mut self, m: &Matrix<T>) {
        self.u32(m.rows());
        self.u32(m.cols());
        self.floats(m.data());
    }

    fn network<T: Scalar>(&mut self, net: &MlpNetwork<T>) {
        self.u32(net.depth());
        for layer in net.layers() {
            self.u8(match layer.activation {
                Activation::Relu => 0,
                Activation::Identity => 1,
            });
            self.matrix(&layer.weight);
            self.floats(&layer.bias);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Format {
            offset: self.bytes.len() as u64,
            msg: format!("truncated checkpoint: wanted {n} bytes at {}", self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn fail<X>(&self, msg: impl Into<String>) -> Result<X> {
        Err(Error::Format {
            offset: self.pos as u64,
            msg: msg.into(),
        })
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn floats<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let b = self.take(n.checked_mul(8).unwrap_or(usize::MAX))?;
        Ok(b.chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }

    fn matrix<T: Scalar>(&mut self) -> Result<Matrix<T>> {
        let at = self.pos;
        let (r, c) = (self.u32()?, self.u32()?);
        let data = self.floats(r.checked_mul(c).unwrap_or(usize::MAX))?;
        Matrix::new(r, c, data).map_err(|e| Error::Format {
            offset: at as u64,
            msg: e.to_string(),
        })
    }

    fn network<T: Scalar>(&mut self) -> Result<MlpNetwork<T>> {
        let depth = self.u32()?;
        let mut layers = Vec::with_capacity(depth.min(64));
        for _ in 0..depth {
            let activation = match self.u8()? {
                0 => Activation::Relu,
                1 => Activation::Identity,
                other => return self.fail(format!("unknown activation tag {other}")),
            };
            let weight = self.matrix()?;
            let bias = self.floats(weight.cols())?;
            layers.push(Layer::new(weight, bias, activation)?);
        }
        MlpNetwork::new(layers)
    }
}

pub fn encode_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.network(&ckpt.autoencoder.encoder);
    w.network(&ckpt.autoencoder.decoder);
    match &ckpt.autoencoder.pool {
        Some(pool) => {
            w.u8(match pool.spread {
                Spread::Std => 1,
                Spread::Variance => 2,
            });
            w.matrix(&pool.proj);
            w.floats(&pool.bias);
        }
        None => w.u8(0),
    }
    match &ckpt.centroids {
        Some(c) => {
            w.u8(1);
            w.matrix(c);
        }
        None => w.u8(0),
    }
    w.0
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "not a checkpoint file".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let encoder = r.network()?;
    let decoder = r.network()?;
    let pool = match r.u8()? {
        0 => None,
        tag @ (1 | 2) => {
            let proj = r.matrix()?;
            let bias = r.floats(proj.cols())?;
            let spread = if tag == 1 { Spread::Std } else { Spread::Variance };
            Some(StatPool { proj, bias, spread })
        }
        other => return r.fail(format!("unknown pool tag {other}")),
    };
    let centroids = match r.u8()? {
        0 => None,
        1 => Some(r.matrix()?),
        other => return r.fail(format!("unknown centroid tag {other}")),
    };
    if r.pos != bytes.len() {
        return r.fail("trailing bytes after checkpoint");
    }
    Ok(Checkpoint {
        autoencoder: Autoencoder::new(encoder, decoder, pool)?,
        centroids,
    })
}

pub fn save_checkpoint<T: Scalar>(path: &Path, ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let bytes = encode_checkpoint(ckpt);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
