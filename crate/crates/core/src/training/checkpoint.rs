//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "GVRNNCKP"
//! version    u32
//! config     7 × u64  nodes, channels, cheb_order, graph_features,
//!                     latent_dim, hidden_dim, external_dim
//!            f64      sigma_floor
//! count      u32      number of arrays
//! array      u32 name length, UTF-8 name,
//!            u32 rank, rank × u64 dims,
//!            product(dims) × f64 values
//! ```
//!
//! The model weights are stored under their canonical names, followed by
//! `graph.weights` (dense `n × n`) and any extra named arrays.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::model::{ModelConfig, ModelParams, PARAM_NAMES};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GVRNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

const GRAPH_KEY: &str = "graph.weights";

/// Everything needed to rebuild a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub graph: WeightedGraph,
    pub params: ModelParams,
    /// Auxiliary arrays such as scaler bounds or a calibrated threshold.
    pub extras: BTreeMap<String, Tensor>,
}

fn put_u32(out: &mut impl Write, v: u32) -> Result<()> {
    Ok(out.write_all(&v.to_le_bytes())?)
}

fn put_u64(out: &mut impl Write, v: u64) -> Result<()> {
    Ok(out.write_all(&v.to_le_bytes())?)
}

fn put_array(out: &mut impl Write, name: &str, t: &Tensor) -> Result<()> {
    put_u32(out, name.len() as u32)?;
    out.write_all(name.as_bytes())?;
    put_u32(out, t.shape().len() as u32)?;
    for &d in t.shape() {
        put_u64(out, d as u64)?;
    }
    for v in t.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Source<R> {
    inner: R,
}

impl<R: Read> Source<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated checkpoint while reading {what}")),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in memory")))
    }

    fn array(&mut self) -> Result<(String, Tensor)> {
        let len = self.u32("array name length")? as usize;
        if len > 4096 {
            return Err(Error::Format(format!("implausible array name length {len}")));
        }
        let mut name = vec![0u8; len];
        self.inner.read_exact(&mut name).map_err(|_| Error::Format("truncated array name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("array name is not UTF-8".into()))?;
        let rank = self.u32("array rank")? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("{name}: implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.dim("dimension")).collect::<Result<Vec<_>>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&c| c <= 1 << 32)
            .ok_or_else(|| Error::Format(format!("{name}: implausible shape {shape:?}")))?;
        let data = (0..count).map(|_| self.f64(&name)).collect::<Result<Vec<_>>>()?;
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("{name}: {e}")))?;
        Ok((name, t))
    }
}

impl Checkpoint {
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        out.write_all(CHECKPOINT_MAGIC)?;
        put_u32(&mut out, CHECKPOINT_VERSION)?;
        let c = &self.config;
        for v in [c.nodes, c.channels, c.cheb_order, c.graph_features, c.latent_dim, c.hidden_dim, c.external_dim] {
            put_u64(&mut out, v as u64)?;
        }
        out.write_all(&c.sigma_floor.to_le_bytes())?;
        put_u32(&mut out, (PARAM_NAMES.len() + 1 + self.extras.len()) as u32)?;
        for (name, t) in PARAM_NAMES.iter().zip(self.params.fields()) {
            put_array(&mut out, name, t)?;
        }
        let n = self.graph.node_count();
        put_array(&mut out, GRAPH_KEY, &Tensor::new(vec![n, n], self.graph.weights().to_vec())?)?;
        for (name, t) in &self.extras {
            put_array(&mut out, name, t)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut src = Source { inner: BufReader::new(input) };
        let magic: [u8; 8] = src.bytes("magic")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = src.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = src.dim("config")?;
        }
        let config = ModelConfig {
            nodes: dims[0],
            channels: dims[1],
            cheb_order: dims[2],
            graph_features: dims[3],
            latent_dim: dims[4],
            hidden_dim: dims[5],
            external_dim: dims[6],
            sigma_floor: src.f64("sigma floor")?,
        };
        config.validate()?;
        let count = src.u32("array count")? as usize;
        let mut arrays = BTreeMap::new();
        for _ in 0..count {
            let (name, t) = src.array()?;
            if arrays.insert(name.clone(), t).is_some() {
                return Err(Error::Format(format!("duplicate array {name}")));
            }
        }
        let mut trailing = [0u8; 1];
        if src.inner.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after the last array".into()));
        }

        let mut params = ModelParams::init(&config, 0)?;
        for (name, slot) in PARAM_NAMES.iter().zip(params.fields_mut()) {
            *slot = arrays
                .remove(*name)
                .ok_or_else(|| Error::Format(format!("missing array {name}")))?;
        }
        params.check_shapes(&config)?;
        let g = arrays
            .remove(GRAPH_KEY)
            .ok_or_else(|| Error::Format(format!("missing array {GRAPH_KEY}")))?;
        if g.shape() != [config.nodes, config.nodes] {
            return Err(Error::Format(format!("{GRAPH_KEY} has shape {:?}", g.shape())));
        }
        let graph = WeightedGraph::new(config.nodes, g.into_vec())?;
        Ok(Self {
            config,
            graph,
            params,
            extras: arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = ModelConfig {
            channels: 1,
            cheb_order: 2,
            graph_features: 2,
            latent_dim: 2,
            hidden_dim: 8,
            ..ModelConfig::new(4)
        };
        let mut extras = BTreeMap::new();
        extras.insert("scaler.min".to_string(), Tensor::vector(vec![-0.0, 1e-300]));
        Checkpoint {
            config,
            graph: WeightedGraph::grid(2, 2).unwrap(),
            params: ModelParams::init(&config, 11).unwrap(),
            extras,
        }
    }

    fn bytes(c: &Checkpoint) -> Vec<u8> {
        let mut out = Vec::new();
        c.write(&mut out).unwrap();
        out
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let back = Checkpoint::read(bytes(&c).as_slice()).unwrap();
        for (a, b) in c.params.fields().iter().zip(back.params.fields()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.extras["scaler.min"].data()[0].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back, c);
    }

    #[test]
    fn version_and_truncation_errors() {
        let mut b = bytes(&sample());
        b[8] = 9;
        assert!(matches!(Checkpoint::read(b.as_slice()), Err(Error::Version { found: 9, expected: 1 })));
        let b = bytes(&sample());
        for cut in [3, 20, b.len() / 2, b.len() - 1] {
            assert!(matches!(Checkpoint::read(&b[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut b = bytes(&sample());
        b[0] = b'X';
        assert!(matches!(Checkpoint::read(b.as_slice()), Err(Error::Format(_))));
    }
}
