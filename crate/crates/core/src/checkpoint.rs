//! Binary checkpoints of a network, its optimizer state, and the epoch.
//!
//! ```text
//! "STCK"              4 bytes
//! version             u32 LE (currently 1)
//! header length       u64 LE
//! header              UTF-8 JSON (see `Header`)
//! tensor data         f32 LE, tensors in header order, each row-major
//! ```
//!
//! The header holds the network spec, per-ternary-layer `eta` and `lambda`,
//! the epoch counter, the optional training config, and the name and shape
//! of every stored tensor. Ternary layers store `shadow`, `quantized`, and
//! `mask`; full-precision layers store `weights`; batch norm stores
//! `gamma`, `beta`, `running_mean`, and `running_var`; optimizer
//! velocities follow the network tensors.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BuildOptions, InitScheme, Layer, Network, NetworkSpec, Weights};
use crate::tensor::Tensor;
use crate::train::{OptimizerState, TrainConfig};

pub const MAGIC: &[u8; 4] = b"STCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TernaryParams {
    eta: f64,
    lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    epoch: usize,
    /// One entry per weight layer; `None` for full-precision layers.
    ternary: Vec<Option<TernaryParams>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<TrainConfig>,
    tensors: Vec<TensorEntry>,
    optimizer_tensors: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub optimizer: Option<OptimizerState>,
    /// Completed epochs.
    pub epoch: usize,
    pub config: Option<TrainConfig>,
}

fn visit(net: &mut Network<f32>, f: &mut dyn FnMut(String, &mut Tensor<f32>) -> Result<()>) -> Result<()> {
    for (i, layer) in net.layers.iter_mut().enumerate() {
        match layer {
            Layer::Weight(w) => {
                match &mut w.weights {
                    Weights::Full(t) => f(format!("layer{i}.weights"), t)?,
                    Weights::Ternary(s) => {
                        f(format!("layer{i}.shadow"), &mut s.shadow)?;
                        f(format!("layer{i}.quantized"), &mut s.quantized)?;
                        f(format!("layer{i}.mask"), &mut s.mask)?;
                    }
                }
                if let Some(b) = &mut w.bias {
                    f(format!("layer{i}.bias"), b)?;
                }
            }
            Layer::BatchNorm(bn) => {
                f(format!("layer{i}.gamma"), &mut bn.gamma)?;
                f(format!("layer{i}.beta"), &mut bn.beta)?;
                f(format!("layer{i}.running_mean"), &mut bn.running_mean)?;
                f(format!("layer{i}.running_var"), &mut bn.running_var)?;
            }
            _ => {}
        }
    }
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut net = self.network.clone();
        let mut entries = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        let mut push = |name: String, t: &mut Tensor<f32>| {
            entries.push(TensorEntry { name, shape: t.shape().to_vec() });
            for v in t.data() {
                data.extend_from_slice(&v.to_le_bytes());
            }
            Ok(())
        };
        visit(&mut net, &mut push)?;
        let velocities = self.optimizer.as_ref().map_or(&[][..], |o| &o.velocities[..]);
        for (i, v) in velocities.iter().enumerate() {
            push(format!("velocity{i}"), &mut v.clone())?;
        }
        let header = Header {
            spec: self.network.spec.clone(),
            epoch: self.epoch,
            ternary: self
                .network
                .weight_layers()
                .map(|w| w.weights.ternary().map(|s| TernaryParams { eta: s.eta, lambda: s.lambda }))
                .collect(),
            config: self.config.clone(),
            tensors: entries,
            optimizer_tensors: velocities.len(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing STCK magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let hend = 16usize
            .checked_add(usize::try_from(hlen).map_err(|_| bad("header too large"))?)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[16..hend]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;

        let weight_layers = header.spec.weight_layer_count();
        if header.ternary.len() != weight_layers {
            return Err(bad("ternary parameter list does not match the network"));
        }
        let thresholds = header.ternary.iter().map(|t| t.as_ref().map_or(0.5, |p| p.eta)).collect();
        let lambda = header.ternary.iter().flatten().map(|p| p.lambda).next().unwrap_or(0.0);
        let opts = BuildOptions { init: InitScheme::Unit, thresholds, lambda };
        let mut network = Network::new(header.spec.clone(), &opts, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::Checkpoint(format!("spec: {e}")))?;
        for (w, p) in network.weight_layers_mut().zip(&header.ternary) {
            match (w.weights.ternary_mut(), p) {
                (Some(s), Some(p)) => s.lambda = p.lambda,
                (None, None) => {}
                _ => return Err(bad("ternary flags do not match the network spec")),
            }
        }

        let mut body = &bytes[hend..];
        let mut entries = header.tensors.iter();
        let mut read_next = |name: String, t: &mut Tensor<f32>| -> Result<()> {
            let e = entries.next().ok_or_else(|| bad("header lists too few tensors"))?;
            if e.name != name || e.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "expected tensor {name} {:?}, header has {} {:?}",
                    t.shape(),
                    e.name,
                    e.shape
                )));
            }
            let nbytes = t.len() * 4;
            if body.len() < nbytes {
                return Err(Error::Checkpoint(format!("tensor data truncated at {name}")));
            }
            for (v, c) in t.data_mut().iter_mut().zip(body[..nbytes].chunks_exact(4)) {
                *v = f32::from_le_bytes(c.try_into().unwrap());
            }
            body = &body[nbytes..];
            Ok(())
        };
        visit(&mut network, &mut read_next)?;
        let optimizer = if header.optimizer_tensors > 0 {
            let mut state = OptimizerState::zeros_for(&network)?;
            if state.velocities.len() != header.optimizer_tensors {
                return Err(bad("optimizer state does not match the network"));
            }
            for (i, v) in state.velocities.iter_mut().enumerate() {
                read_next(format!("velocity{i}"), v)?;
            }
            Some(state)
        } else {
            None
        };
        if entries.next().is_some() {
            return Err(bad("header lists extra tensors"));
        }
        if !body.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len())));
        }
        for s in network.ternary_layers() {
            s.check_invariants().map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(Checkpoint { network, optimizer, epoch: header.epoch, config: header.config })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Checkpoint::from_bytes(&bytes)
    }
}
