//! `checkpoint.bin`: magic, format version, a JSON header, then raw
//! little-endian f64 blobs for the parameters, both Adam moments and `z_g`.
//!
//! Node features are data, not state, and are not stored; pass them back in
//! when loading.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::global::GlobalState;
use crate::linalg::Matrix;
use crate::params::{ModelParams, ParamTensors};
use crate::train::{RunConfig, TrainState};

const MAGIC: &[u8; 8] = b"S2TCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: RunConfig,
    num_nodes: usize,
    dim: usize,
    layers: usize,
    has_features: bool,
    tensors: Vec<(String, usize)>,
    step: u64,
    adam: AdamConfig,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: TrainState,
}

fn write_blob<W: Write>(w: &mut W, p: &ModelParams) -> Result<()> {
    for (_, t) in p.tensors() {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in out {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated tensor data: {e}")))?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

fn read_blob<R: Read>(r: &mut R, p: &mut ModelParams) -> Result<()> {
    for (_, t) in p.tensors_mut() {
        read_f64s(r, t)?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.state.params;
        let header = Header {
            config: self.config,
            num_nodes: p.num_nodes,
            dim: p.dim,
            layers: p.layers(),
            has_features: p.features.is_some(),
            tensors: p
                .tensors()
                .iter()
                .map(|(n, t)| (n.clone(), t.len()))
                .collect(),
            step: self.state.optimizer.step,
            adam: self.state.optimizer.config,
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        write_blob(&mut w, p)?;
        write_blob(&mut w, &self.state.optimizer.m)?;
        write_blob(&mut w, &self.state.optimizer.v)?;
        for v in &self.state.global.z_g {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, features: Option<Arc<Matrix>>) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        if len > 1 << 24 {
            return Err(Error::Checkpoint("header too large".into()));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        let h: Header = serde_json::from_slice(&json)?;
        if h.has_features != features.is_some() {
            return Err(Error::Checkpoint(if h.has_features {
                "checkpoint was trained with node features; supply them".into()
            } else {
                "checkpoint has an embedding table; features must not be supplied".into()
            }));
        }
        let mut params = ModelParams::init(
            h.num_nodes,
            features,
            h.dim,
            h.layers,
            h.config.objective.learn_etas,
            0,
        )?;
        let shapes: Vec<(String, usize)> = params
            .tensors()
            .iter()
            .map(|(n, t)| (n.clone(), t.len()))
            .collect();
        if shapes != h.tensors {
            return Err(Error::Checkpoint("tensor layout does not match".into()));
        }
        read_blob(&mut r, &mut params)?;
        let mut optimizer = OptimizerState::new(&params, h.adam);
        optimizer.step = h.step;
        read_blob(&mut r, &mut optimizer.m)?;
        read_blob(&mut r, &mut optimizer.v)?;
        let mut global = GlobalState::new(h.dim);
        read_f64s(&mut r, &mut global.z_g)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
        }
        Ok(Self {
            config: h.config,
            state: TrainState {
                params,
                optimizer,
                global,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path, features: Option<Arc<Matrix>>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f), features)
    }
}
