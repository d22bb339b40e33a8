//! Browser bindings. Each export takes plain values or JSON and returns a
//! JSON string; the `*_json` functions hold the logic and run natively too.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use stnn::codec::{self, stw1, CodecHeader, CodecTag, EncodedLayerBlob};
use stnn::cost::{peak_throughput, sweep_curves, CostScenario, MacType, Reuse, SweepGrid};
use stnn::prune::{apply_mask, compute_mask};
use stnn::report::histogram;
use stnn::ternary::quantize;
use stnn::{Error, Result, Tensor};

pub const HISTOGRAM_BINS: usize = 64;
/// Largest layer the explorer will synthesize.
pub const MAX_EXPLORER_WEIGHTS: usize = 4_000_000;
/// Largest vector the codec inspector will print bit by bit.
pub const MAX_INSPECTOR_WEIGHTS: usize = 4096;

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Debug, Deserialize)]
pub struct CurveRequest {
    #[serde(default)]
    pub scenario: CostScenario,
    pub gammas: Vec<f64>,
    /// `null` means unbounded reuse.
    pub reuse: Vec<Option<u64>>,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    #[serde(rename = "type")]
    pub mac_type: &'static str,
    /// `None` for unbounded reuse.
    pub reuse: Option<u64>,
    /// Ops per second, one per gamma; `None` where `gamma == 0`.
    pub t_e: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
pub struct CurveResponse {
    pub gammas: Vec<f64>,
    pub peaks: Vec<(&'static str, f64)>,
    pub curves: Vec<Curve>,
}

/// `T_e` against `gamma`, one curve per MAC type and reuse factor.
pub fn te_curves_json(request: &str) -> Result<String> {
    let req: CurveRequest = serde_json::from_str(request).map_err(|e| config(format!("request: {e}")))?;
    let reuse: Vec<Reuse> = req.reuse.iter().map(|r| r.map_or(Reuse::Unbounded, Reuse::Finite)).collect();
    let grid = SweepGrid { gammas: req.gammas.clone(), reuse: reuse.clone(), types: MacType::ALL.to_vec() };
    let table = sweep_curves(&req.scenario, &grid, &[])?;
    let mut curves = Vec::new();
    for ty in MacType::ALL {
        for (ri, r) in req.reuse.iter().enumerate() {
            let t_e = table
                .rows
                .iter()
                .filter(|row| row.mac_type == ty && row.reuse == reuse[ri])
                .map(|row| Some(row.t_e.ops_per_second()).filter(|v| v.is_finite()))
                .collect();
            curves.push(Curve { mac_type: ty.name(), reuse: *r, t_e });
        }
    }
    let peaks = MacType::ALL
        .into_iter()
        .map(|ty| Ok((ty.name(), peak_throughput(&req.scenario, ty)?)))
        .collect::<Result<_>>()?;
    json(&CurveResponse { gammas: req.gammas, peaks, curves })
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum WeightDistribution {
    /// Shadow weights at initialization.
    Uniform,
    /// Bell-shaped, clipped to `[-1, 1]`.
    Normal,
}

#[derive(Debug, Deserialize)]
pub struct ExplorerRequest {
    pub weights: usize,
    pub eta: f64,
    pub sigma: f64,
    pub seed: u64,
    pub distribution: WeightDistribution,
    #[serde(default = "half")]
    pub std_dev: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ExplorerResponse {
    pub weights: usize,
    pub minus_one: usize,
    pub zeros: usize,
    pub plus_one: usize,
    pub pruned: usize,
    pub histogram: Vec<u64>,
    pub histogram_lo: f64,
    pub histogram_hi: f64,
    pub dense_1bit_bytes: u64,
    pub dense_2bit_bytes: u64,
    pub rle_bytes: u64,
    pub hc_bytes: u64,
    pub rle_width: u8,
    pub hc_symbols: usize,
}

/// Synthesizes one layer of shadow weights, prunes at `sigma`, quantizes at
/// `eta`, and encodes the result with both codecs.
pub fn explore_layer_json(request: &str) -> Result<String> {
    let req: ExplorerRequest = serde_json::from_str(request).map_err(|e| config(format!("request: {e}")))?;
    json(&explore_layer(&req)?)
}

pub fn explore_layer(req: &ExplorerRequest) -> Result<ExplorerResponse> {
    if req.weights == 0 || req.weights > MAX_EXPLORER_WEIGHTS {
        return Err(config(format!("weights must be in 1..={MAX_EXPLORER_WEIGHTS}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let data: Vec<f32> = match req.distribution {
        WeightDistribution::Uniform => (0..req.weights).map(|_| rng.gen_range(-1.0f32..=1.0)).collect(),
        WeightDistribution::Normal => {
            let d = Normal::new(0.0, req.std_dev).map_err(|e| config(format!("std_dev: {e}")))?;
            (0..req.weights).map(|_| (d.sample(&mut rng) as f32).clamp(-1.0, 1.0)).collect()
        }
    };
    let w_r = Tensor::from_vec(&[req.weights], data)?;
    let mask = compute_mask(&w_r, req.sigma, req.eta)?;
    let w_q = quantize(&apply_mask(&w_r, &mask)?, req.eta)?;

    let rle = codec::encode(CodecTag::Rle, &w_q)?;
    let hc = codec::encode(CodecTag::Hc, &w_q)?;
    let sizes = codec::size_report(std::slice::from_ref(&rle), std::slice::from_ref(&hc))?.total;
    let count = |v: f32| w_q.data().iter().filter(|&&x| x == v).count();
    Ok(ExplorerResponse {
        weights: req.weights,
        minus_one: count(-1.0),
        zeros: count(0.0),
        plus_one: count(1.0),
        pruned: mask.data().iter().filter(|&&m| m == 0.0).count(),
        histogram: histogram(w_r.data().iter().map(|&v| v as f64), HISTOGRAM_BINS, -1.0, 1.0),
        histogram_lo: -1.0,
        histogram_hi: 1.0,
        dense_1bit_bytes: sizes.dense_1bit_bytes,
        dense_2bit_bytes: sizes.dense_2bit_bytes,
        rle_bytes: sizes.rle_bytes,
        hc_bytes: sizes.hc_bytes,
        rle_width: match rle.header {
            CodecHeader::Rle { width } => width,
            _ => 0,
        },
        hc_symbols: match &hc.header {
            CodecHeader::Hc { codebook } => codebook.len(),
            _ => 0,
        },
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CodecView {
    pub codec: &'static str,
    pub k: u64,
    pub header: String,
    pub payload_bits: String,
    pub file_hex: String,
    pub file_bytes: usize,
    pub round_trip: bool,
}

/// Parses whitespace- or comma-separated ternary values and shows both
/// encodings as bit strings and STW1 file bytes.
pub fn inspect_codec_json(values: &str) -> Result<String> {
    json(&inspect_codec(values)?)
}

pub fn inspect_codec(values: &str) -> Result<Vec<CodecView>> {
    let parsed = values
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "0" | "-0" => Ok(0.0f32),
            "1" | "+1" => Ok(1.0),
            "-1" => Ok(-1.0),
            other => Err(config(format!("not a ternary value: {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if parsed.is_empty() || parsed.len() > MAX_INSPECTOR_WEIGHTS {
        return Err(config(format!("enter 1..={MAX_INSPECTOR_WEIGHTS} values")));
    }
    let x = Tensor::from_vec(&[parsed.len()], parsed)?;
    CodecTag::ALL
        .into_iter()
        .map(|tag| {
            let blob = codec::encode(tag, &x)?;
            let file = stw1::write(std::slice::from_ref(&blob))?;
            let back: Tensor<f32> = codec::decode(&stw1::read(&file)?[0])?;
            Ok(CodecView {
                codec: tag.name(),
                k: blob.k,
                header: header_text(&blob),
                payload_bits: bit_string(&blob),
                file_hex: file.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" "),
                file_bytes: file.len(),
                round_trip: back == x,
            })
        })
        .collect()
}

fn header_text(blob: &EncodedLayerBlob) -> String {
    match &blob.header {
        CodecHeader::Rle { width } => format!("delta width d = {width}"),
        CodecHeader::Hc { codebook } => {
            let entries: Vec<String> = codebook.iter().map(|(sym, len)| format!("delta {sym}: {len} bits")).collect();
            format!("codebook [{}]", entries.join(", "))
        }
    }
}

fn bit_string(blob: &EncodedLayerBlob) -> String {
    let mut r = blob.reader();
    (0..blob.payload_bits).filter_map(|_| r.read_bit()).map(|b| if b { '1' } else { '0' }).collect()
}

fn config(msg: String) -> Error {
    Error::Config(msg)
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

#[wasm_bindgen]
pub fn te_curves(request: &str) -> std::result::Result<String, JsError> {
    js(te_curves_json(request))
}

#[wasm_bindgen]
pub fn explore(request: &str) -> std::result::Result<String, JsError> {
    js(explore_layer_json(request))
}

#[wasm_bindgen]
pub fn inspect(values: &str) -> std::result::Result<String, JsError> {
    js(inspect_codec_json(values))
}
