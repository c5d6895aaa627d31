//! Versioned binary checkpoint format.
//!
//! Layout: magic bytes `SGLB`, format version (u32 LE), a length-prefixed
//! UTF-8 JSON blob holding the network and training configs, then one record
//! per parameter: length-prefixed name, rank (u32 LE), each dim (u32 LE),
//! and the raw little-endian f64 data. Readers reject unknown versions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetConfig, Network};
use crate::tensor::Tensor;
use crate::train::TrainConfig;

pub const MAGIC: [u8; 4] = *b"SGLB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    net: NetConfig,
    train: TrainConfig,
}

/// A serialized named-weight collection plus the configs that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_network(network: &Network, train: &TrainConfig) -> Self {
        Checkpoint {
            net: network.config.clone(),
            train: train.clone(),
            params: network
                .params
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Rebuilds a network with this checkpoint's config and weights.
    pub fn to_network(&self) -> Result<Network> {
        let mut network = Network::new(self.net.clone(), 0)?;
        if network.params.len() != self.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, config implies {}",
                self.params.len(),
                network.params.len()
            )));
        }
        for (param, (name, value)) in network.params.iter_mut().zip(&self.params) {
            if &param.name != name {
                return Err(Error::Format(format!(
                    "checkpoint parameter {name} does not match expected {}",
                    param.name
                )));
            }
            if param.value.shape() != value.shape() {
                return Err(Error::Format(format!(
                    "checkpoint parameter {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    param.value.shape()
                )));
            }
            param.value = value.clone();
        }
        Ok(network)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let meta = serde_json::to_vec(&Meta {
            net: self.net.clone(),
            train: self.train.clone(),
        })?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        for (name, tensor) in &self.params {
            let name_bytes = name.as_bytes();
            w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
            w.write_all(name_bytes)?;
            w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
            for &dim in tensor.shape() {
                w.write_all(&(dim as u32).to_le_bytes())?;
            }
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        r.read_exact(&mut meta_bytes)?;
        let meta: Meta = serde_json::from_slice(&meta_bytes)?;

        let mut params = Vec::new();
        loop {
            let mut len_buf = [0u8; 4];
            match r.read(&mut len_buf)? {
                0 => break,
                4 => {}
                n => {
                    r.read_exact(&mut len_buf[n..])
                        .map_err(|_| Error::Format("truncated parameter record".into()))?;
                }
            }
            let name_len = u32::from_le_bytes(len_buf) as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = vec![0.0f64; n];
            let mut buf = [0u8; 8];
            for v in data.iter_mut() {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::Format("truncated parameter data".into()))?;
                *v = f64::from_le_bytes(buf);
            }
            params.push((name, Tensor::from_vec(&shape, data)?));
        }
        Ok(Checkpoint {
            net: meta.net,
            train: meta.train,
            params,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated checkpoint header".into()))?;
    Ok(u32::from_le_bytes(buf))
}
