//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `SITNNCKP`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header, then every tensor
//! listed in the header as little-endian `f32` values in header order.
//! Nothing time-dependent is stored, so identical runs give identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::NeuronKind;
use crate::error::{Error, Result};
use crate::network::{Network, NeuronBank};
use crate::neuron::NeuronParams;
use crate::provenance::Provenance;
use crate::tensor::Tensor;

use super::optim::AdamState;

pub const MAGIC: &[u8; 8] = b"SITNNCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorRole {
    Param,
    Buffer,
    AdamM,
    AdamV,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub role: TensorRole,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub provenance: Provenance,
    pub architecture: String,
    pub input_shape: Vec<usize>,
    pub dropout_rate: f64,
    pub neurons: BTreeMap<NeuronKind, NeuronParams>,
    pub adam_step: Option<u64>,
    pub tensors: Vec<TensorEntry>,
}

/// A network with its optional optimizer state.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub provenance: Provenance,
    pub network: Network<f32>,
    pub optimizer: Option<AdamState<f32>>,
}

fn format_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        format: "checkpoint",
        offset: offset as u64,
        message: message.into(),
    }
}

fn buffer_names(net: &Network<f32>) -> Vec<String> {
    // running mean and variance of every batch-norm layer, in layer order
    let mut names = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        if matches!(layer, crate::network::Layer::BatchNorm(_)) {
            names.push(format!("{i}.running_mean"));
            names.push(format!("{i}.running_var"));
        }
    }
    names
}

pub fn encode_checkpoint(
    net: &Network<f32>,
    optimizer: Option<&AdamState<f32>>,
    provenance: &Provenance,
) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut tensors: Vec<&Tensor<f32>> = Vec::new();
    let params = net.params();
    for (name, t) in net.param_names().into_iter().zip(&params) {
        entries.push(TensorEntry { name, role: TensorRole::Param, shape: t.shape().to_vec() });
        tensors.push(t);
    }
    let buffers = net.buffers();
    for (name, t) in buffer_names(net).into_iter().zip(&buffers) {
        entries.push(TensorEntry { name, role: TensorRole::Buffer, shape: t.shape().to_vec() });
        tensors.push(t);
    }
    if let Some(opt) = optimizer {
        if opt.m.len() != params.len() {
            return Err(Error::InvalidParameter(format!(
                "optimizer holds {} tensors for {} parameters",
                opt.m.len(),
                params.len()
            )));
        }
        for (role, moments) in [(TensorRole::AdamM, &opt.m), (TensorRole::AdamV, &opt.v)] {
            for (name, t) in net.param_names().into_iter().zip(moments) {
                entries.push(TensorEntry { name, role, shape: t.shape().to_vec() });
                tensors.push(t);
            }
        }
    }
    let header = CheckpointHeader {
        provenance: provenance.clone(),
        architecture: net.architecture(),
        input_shape: net.input_shape().to_vec(),
        dropout_rate: net.dropout_rate(),
        neurons: net.neurons().params(),
        adam_step: optimizer.map(|o| o.step),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + 4 * tensors.iter().map(|t| t.len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(format_error(0, "not a checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format_error(8, format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(20..20usize.saturating_add(len))
        .ok_or_else(|| format_error(12, "header length exceeds file"))?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    let bank = NeuronBank::from_params(&header.neurons)?;
    let mut net = Network::from_architecture(
        &header.architecture,
        &header.input_shape,
        &bank,
        header.dropout_rate,
        0,
    )?;
    let mut offset = 20 + len;
    let mut read = |entry: &TensorEntry| -> Result<Tensor<f32>> {
        let n: usize = entry.shape.iter().product();
        let raw = bytes
            .get(offset..offset + 4 * n)
            .ok_or_else(|| format_error(bytes.len(), format!("truncated tensor {}", entry.name)))?;
        offset += 4 * n;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::new(entry.shape.clone(), data)
    };
    let mut groups: BTreeMap<&str, Vec<Tensor<f32>>> = BTreeMap::new();
    for entry in &header.tensors {
        let key = match entry.role {
            TensorRole::Param => "param",
            TensorRole::Buffer => "buffer",
            TensorRole::AdamM => "m",
            TensorRole::AdamV => "v",
        };
        groups.entry(key).or_default().push(read(entry)?);
    }
    if offset != bytes.len() {
        return Err(format_error(offset, "trailing bytes after tensors"));
    }
    let mut take = |key: &str| groups.remove(key).unwrap_or_default();
    let fill = |targets: Vec<&mut Tensor<f32>>, source: Vec<Tensor<f32>>, what: &str| -> Result<()> {
        if targets.len() != source.len() {
            return Err(format_error(20, format!("expected {} {what} tensors, found {}", targets.len(), source.len())));
        }
        for (t, s) in targets.into_iter().zip(source) {
            if t.shape() != s.shape() {
                return Err(format_error(20, format!("{what} shape {:?} != {:?}", s.shape(), t.shape())));
            }
            *t = s;
        }
        Ok(())
    };
    fill(net.params_mut(), take("param"), "parameter")?;
    fill(net.buffers_mut(), take("buffer"), "buffer")?;
    let optimizer = match header.adam_step {
        Some(step) => {
            let (m, v) = (take("m"), take("v"));
            if m.len() != net.params().len() || v.len() != m.len() {
                return Err(format_error(20, "incomplete optimizer state"));
            }
            Some(AdamState { m, v, step })
        }
        None => None,
    };
    Ok(Checkpoint {
        provenance: header.provenance,
        network: net,
        optimizer,
    })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    net: &Network<f32>,
    optimizer: Option<&AdamState<f32>>,
    provenance: &Provenance,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(net, optimizer, provenance)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
