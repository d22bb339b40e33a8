//! Resource-fraction cost model for a sparse ternary accelerator.
//!
//! One operation costs `C_op`, its MAC's resource cost per operation as a
//! fraction of the usable budget of that resource. A weight decoder costs
//! `C_d` of the usable LUT budget and is shared by the `R` MACs that reuse
//! each decoded weight. Only the fraction `gamma` of nonzero weights does
//! any work, so the effective cost per dense-equivalent operation is
//!
//! ```text
//! C_e = gamma * (C_op + C_d / R)        T_e = clock / C_e
//! ```
//!
//! `C_op` and `C_d` may refer to different resources (DSPs and LUTs for
//! full-precision MACs); they are added as plain fractions.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, NetworkType, WeightKind};
use crate::tensor::Scalar;

/// Operations per multiply-accumulate.
pub const OPS_PER_MAC: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MacType {
    /// Binary activations: XNOR-popcount MACs in LUTs.
    #[serde(rename = "type1")]
    Type1,
    /// Full-precision activations: floating-point MACs in DSPs.
    #[serde(rename = "type2")]
    Type2,
}

impl MacType {
    pub const ALL: [MacType; 2] = [MacType::Type1, MacType::Type2];

    pub fn name(self) -> &'static str {
        match self {
            MacType::Type1 => "type1",
            MacType::Type2 => "type2",
        }
    }
}

impl From<NetworkType> for MacType {
    fn from(t: NetworkType) -> Self {
        match t {
            NetworkType::BinaryActivations => MacType::Type1,
            NetworkType::FloatActivations => MacType::Type2,
        }
    }
}

fn d_lut_budget() -> f64 {
    663_000.0
}
fn d_lut_fraction() -> f64 {
    0.7
}
fn d_dsp_budget() -> f64 {
    5_520.0
}
fn d_dsp_fraction() -> f64 {
    1.0
}
fn d_clock() -> f64 {
    250e6
}
fn d_mac1() -> f64 {
    5.0
}
fn d_mac2() -> f64 {
    2.0
}
fn d_decoder() -> f64 {
    112.0
}

/// Device budgets and unit costs. Defaults describe a KU115 at 250 MHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostScenario {
    #[serde(default = "d_lut_budget")]
    pub lut_budget: f64,
    #[serde(default = "d_lut_fraction")]
    pub lut_usable_fraction: f64,
    #[serde(default = "d_dsp_budget")]
    pub dsp_budget: f64,
    #[serde(default = "d_dsp_fraction")]
    pub dsp_usable_fraction: f64,
    #[serde(default = "d_clock")]
    pub clock_hz: f64,
    /// LUTs per binary MAC.
    #[serde(default = "d_mac1")]
    pub mac_cost_type1: f64,
    /// DSPs per full-precision MAC.
    #[serde(default = "d_mac2")]
    pub mac_cost_type2: f64,
    /// LUTs per weight decoder.
    #[serde(default = "d_decoder")]
    pub decoder_cost: f64,
}

impl Default for CostScenario {
    fn default() -> Self {
        CostScenario {
            lut_budget: d_lut_budget(),
            lut_usable_fraction: d_lut_fraction(),
            dsp_budget: d_dsp_budget(),
            dsp_usable_fraction: d_dsp_fraction(),
            clock_hz: d_clock(),
            mac_cost_type1: d_mac1(),
            mac_cost_type2: d_mac2(),
            decoder_cost: d_decoder(),
        }
    }
}

impl CostScenario {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lut_budget", self.lut_budget),
            ("dsp_budget", self.dsp_budget),
            ("clock_hz", self.clock_hz),
            ("mac_cost_type1", self.mac_cost_type1),
            ("mac_cost_type2", self.mac_cost_type2),
            ("decoder_cost", self.decoder_cost),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in
            [("lut_usable_fraction", self.lut_usable_fraction), ("dsp_usable_fraction", self.dsp_usable_fraction)]
        {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn usable_luts(&self) -> f64 {
        self.lut_usable_fraction * self.lut_budget
    }

    pub fn usable_dsps(&self) -> f64 {
        self.dsp_usable_fraction * self.dsp_budget
    }

    /// Resource fraction per operation.
    pub fn c_op(&self, ty: MacType) -> f64 {
        match ty {
            MacType::Type1 => self.mac_cost_type1 / OPS_PER_MAC / self.usable_luts(),
            MacType::Type2 => self.mac_cost_type2 / OPS_PER_MAC / self.usable_dsps(),
        }
    }

    /// LUT fraction per decoder.
    pub fn c_d(&self) -> f64 {
        self.decoder_cost / self.usable_luts()
    }
}

/// Data-reuse factor: MACs fed by one decoded weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ReuseRepr", into = "ReuseRepr")]
pub enum Reuse {
    Finite(u64),
    /// Decoder cost fully amortized.
    Unbounded,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ReuseRepr {
    Count(u64),
    Word(String),
}

impl TryFrom<ReuseRepr> for Reuse {
    type Error = String;

    fn try_from(r: ReuseRepr) -> std::result::Result<Self, String> {
        match r {
            ReuseRepr::Count(0) => Err("reuse factor must be at least 1".into()),
            ReuseRepr::Count(n) => Ok(Reuse::Finite(n)),
            ReuseRepr::Word(w) if w == "unbounded" => Ok(Reuse::Unbounded),
            ReuseRepr::Word(w) => Err(format!("reuse factor must be a positive integer or \"unbounded\", got {w:?}")),
        }
    }
}

impl From<Reuse> for ReuseRepr {
    fn from(r: Reuse) -> Self {
        match r {
            Reuse::Finite(n) => ReuseRepr::Count(n),
            Reuse::Unbounded => ReuseRepr::Word("unbounded".into()),
        }
    }
}

impl fmt::Display for Reuse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reuse::Finite(n) => write!(f, "{n}"),
            Reuse::Unbounded => f.write_str("unbounded"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadKind {
    Fc,
    Conv { output_pixels: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWorkload {
    pub kind: WorkloadKind,
    pub batch: u64,
    /// Nonzero weight fraction.
    pub gamma: f64,
}

impl LayerWorkload {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch must be at least 1"));
        }
        if let WorkloadKind::Conv { output_pixels: 0 } = self.kind {
            return Err(Error::config("conv output pixels must be at least 1"));
        }
        check_gamma(self.gamma)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::config(format!("nonzero fraction must lie in [0, 1], got {gamma}")))
    }
}

/// `B` for FC layers, `B * P` for conv layers.
pub fn reuse_factor(w: &LayerWorkload) -> u64 {
    match w.kind {
        WorkloadKind::Fc => w.batch,
        WorkloadKind::Conv { output_pixels } => w.batch * output_pixels,
    }
}

/// `C_e`, or `None` when `gamma == 0` (no work, unbounded throughput).
pub fn effective_cost(gamma: f64, s: &CostScenario, ty: MacType, r: Reuse) -> Result<Option<f64>> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(None);
    }
    let decoder = match r {
        Reuse::Finite(0) => return Err(Error::config("reuse factor must be at least 1")),
        Reuse::Finite(n) => s.c_d() / n as f64,
        Reuse::Unbounded => 0.0,
    };
    Ok(Some(gamma * (s.c_op(ty) + decoder)))
}

/// `T_e = clock / C_e` in operations per second.
pub fn effective_throughput(c_e: f64, s: &CostScenario) -> Result<f64> {
    if !(c_e > 0.0 && c_e.is_finite()) {
        return Err(Error::config(format!("effective cost must be positive, got {c_e}")));
    }
    Ok(s.clock_hz / c_e)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Throughput {
    OpsPerSecond(f64),
    /// `gamma == 0`.
    Unbounded,
}

impl Throughput {
    pub fn ops_per_second(self) -> f64 {
        match self {
            Throughput::OpsPerSecond(v) => v,
            Throughput::Unbounded => f64::INFINITY,
        }
    }
}

impl fmt::Display for Throughput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Throughput::OpsPerSecond(v) => write!(f, "{v}"),
            Throughput::Unbounded => f.write_str("inf"),
        }
    }
}

pub fn throughput(gamma: f64, s: &CostScenario, ty: MacType, r: Reuse) -> Result<(Option<f64>, Throughput)> {
    let c = effective_cost(gamma, s, ty, r)?;
    let t = match c {
        None => Throughput::Unbounded,
        Some(c) => Throughput::OpsPerSecond(effective_throughput(c, s)?),
    };
    Ok((c, t))
}

/// Dense peak throughput of a MAC type: `gamma = 1`, unbounded reuse.
pub fn peak_throughput(s: &CostScenario, ty: MacType) -> Result<f64> {
    Ok(throughput(1.0, s, ty, Reuse::Unbounded)?.1.ops_per_second())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub gammas: Vec<f64>,
    pub reuse: Vec<Reuse>,
    #[serde(default = "all_types")]
    pub types: Vec<MacType>,
}

fn all_types() -> Vec<MacType> {
    MacType::ALL.to_vec()
}

impl Default for SweepGrid {
    fn default() -> Self {
        let mut reuse: Vec<Reuse> =
            [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 4096, 16384].map(Reuse::Finite).to_vec();
        reuse.push(Reuse::Unbounded);
        SweepGrid { gammas: vec![0.01, 0.024, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0], reuse, types: all_types() }
    }
}

/// A horizontal reference line: a dense (or given-sparsity) network at
/// unbounded reuse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    #[serde(rename = "type")]
    pub mac_type: MacType,
    #[serde(default = "unit")]
    pub gamma: f64,
}

fn unit() -> f64 {
    1.0
}

/// Scenario file: device parameters plus optional sweep grid and
/// benchmark lines.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenario: CostScenario,
    #[serde(default)]
    pub sweep: SweepGrid,
    #[serde(default)]
    pub benchmarks: Vec<Benchmark>,
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::config(format!("scenario: {e}")))?;
        f.scenario.validate()?;
        Ok(f)
    }

    /// Benchmarks, or one dense peak line per swept type if none are given.
    pub fn benchmark_lines(&self) -> Vec<Benchmark> {
        if !self.benchmarks.is_empty() {
            return self.benchmarks.clone();
        }
        self.sweep
            .types
            .iter()
            .map(|&t| Benchmark { name: format!("dense-{}", t.name()), mac_type: t, gamma: 1.0 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "type")]
    pub mac_type: MacType,
    pub gamma: f64,
    pub reuse: Reuse,
    pub c_e: Option<f64>,
    pub t_e: Throughput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkLine {
    pub name: String,
    #[serde(rename = "type")]
    pub mac_type: MacType,
    pub gamma: f64,
    pub t_e: Throughput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub benchmarks: Vec<BenchmarkLine>,
}

/// `T_e` over the grid for each type, in (type, gamma, R) order.
pub fn sweep_curves(s: &CostScenario, grid: &SweepGrid, benchmarks: &[Benchmark]) -> Result<SweepTable> {
    s.validate()?;
    if grid.gammas.is_empty() || grid.reuse.is_empty() || grid.types.is_empty() {
        return Err(Error::config("sweep grids must be nonempty"));
    }
    let mut rows = Vec::with_capacity(grid.types.len() * grid.gammas.len() * grid.reuse.len());
    for &ty in &grid.types {
        for &gamma in &grid.gammas {
            for &r in &grid.reuse {
                let (c_e, t_e) = throughput(gamma, s, ty, r)?;
                rows.push(SweepRow { mac_type: ty, gamma, reuse: r, c_e, t_e });
            }
        }
    }
    let benchmarks = benchmarks
        .iter()
        .map(|b| {
            let (_, t_e) = throughput(b.gamma, s, b.mac_type, Reuse::Unbounded)?;
            Ok(BenchmarkLine { name: b.name.clone(), mac_type: b.mac_type, gamma: b.gamma, t_e })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { rows, benchmarks })
}

impl SweepTable {
    /// `type,gamma,R,C_e,T_e_ops_per_s`; `C_e` is empty and `T_e` is `inf`
    /// for `gamma = 0`.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("type,gamma,R,C_e,T_e_ops_per_s\n");
        for r in &self.rows {
            let c = r.c_e.map_or(String::new(), |c| c.to_string());
            let _ = writeln!(out, "{},{},{},{},{}", r.mac_type.name(), r.gamma, r.reuse, c, r.t_e);
        }
        out
    }

    pub fn benchmarks_csv(&self) -> String {
        let mut out = String::from("name,type,gamma,T_e_ops_per_s\n");
        for b in &self.benchmarks {
            let _ = writeln!(out, "{},{},{},{}", b.name, b.mac_type.name(), b.gamma, b.t_e);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: usize,
    /// Weight count.
    pub weights: u64,
    pub gamma: f64,
    pub reuse: u64,
    pub c_e: Option<f64>,
    pub t_e: Throughput,
    /// Dense-equivalent operations per inference batch.
    pub ops: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    #[serde(rename = "type")]
    pub mac_type: MacType,
    pub batch: u64,
    pub layers: Vec<LayerCost>,
    /// `sum(ops) / sum(ops / T_e)`.
    pub aggregate: Throughput,
    pub peak: f64,
}

/// Per-layer cost for explicit workloads; `weights[i]` is layer `i`'s
/// weight count.
pub fn summarize(workloads: &[LayerWorkload], weights: &[u64], s: &CostScenario, ty: MacType) -> Result<ModelSummary> {
    s.validate()?;
    if workloads.len() != weights.len() || workloads.is_empty() {
        return Err(Error::config("need one weight count per workload"));
    }
    let mut layers = Vec::with_capacity(workloads.len());
    let (mut ops_sum, mut time_sum) = (0.0, 0.0);
    for (i, (w, &n)) in workloads.iter().zip(weights).enumerate() {
        w.validate()?;
        let r = reuse_factor(w);
        let (c_e, t_e) = throughput(w.gamma, s, ty, Reuse::Finite(r))?;
        let ops = OPS_PER_MAC * n as f64 * r as f64;
        ops_sum += ops;
        if let Throughput::OpsPerSecond(t) = t_e {
            time_sum += ops / t;
        }
        layers.push(LayerCost { layer: i, weights: n, gamma: w.gamma, reuse: r, c_e, t_e, ops });
    }
    let aggregate = if time_sum > 0.0 { Throughput::OpsPerSecond(ops_sum / time_sum) } else { Throughput::Unbounded };
    Ok(ModelSummary { mac_type: ty, batch: workloads[0].batch, layers, aggregate, peak: peak_throughput(s, ty)? })
}

/// Applies the model to every ternary weight layer of a network, using its
/// `w_q` nonzero fraction and the reuse implied by `batch`.
pub fn model_summary<T: Scalar>(net: &Network<T>, s: &CostScenario, batch: u64) -> Result<ModelSummary> {
    let shapes = net.spec.shapes()?;
    let mut workloads = Vec::new();
    let mut weights = Vec::new();
    let mut wi = 0;
    for (li, spec) in net.spec.layers.iter().enumerate() {
        if !spec.is_weight_layer() {
            continue;
        }
        let layer = net.weight_layers().nth(wi).ok_or_else(|| Error::dim("network layers do not match spec"))?;
        wi += 1;
        let Some(state) = layer.weights.ternary() else { continue };
        let kind = match layer.kind {
            WeightKind::Fc => WorkloadKind::Fc,
            WeightKind::Conv(_) => {
                let out = &shapes[li + 1];
                WorkloadKind::Conv { output_pixels: (out[1] * out[2]) as u64 }
            }
        };
        workloads.push(LayerWorkload { kind, batch, gamma: 1.0 - state.zero_fraction() });
        weights.push(state.quantized.len() as u64);
    }
    if workloads.is_empty() {
        return Err(Error::config("network has no ternary layers"));
    }
    summarize(&workloads, &weights, s, net.spec.network_type().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s() -> CostScenario {
        CostScenario::default()
    }

    #[test]
    fn reuse_factors() {
        let fc = LayerWorkload { kind: WorkloadKind::Fc, batch: 100, gamma: 1.0 };
        assert_eq!(reuse_factor(&fc), 100);
        let conv = |b, p| LayerWorkload { kind: WorkloadKind::Conv { output_pixels: p }, batch: b, gamma: 1.0 };
        assert_eq!(reuse_factor(&conv(1, 900)), 900);
        assert_eq!(reuse_factor(&conv(4, 64)), 256);
    }

    #[test]
    fn type1_cost_constants() {
        let c = effective_cost(1.0, &s(), MacType::Type1, Reuse::Unbounded).unwrap().unwrap();
        assert!((c - 2.5 / 464_100.0).abs() < 1e-18);
        assert!((c - 5.386e-6).abs() < 1e-9);
        let c = effective_cost(0.1, &s(), MacType::Type1, Reuse::Finite(1000)).unwrap().unwrap();
        assert!((c - 5.628e-7).abs() < 1e-10, "{c}");
        let t = effective_throughput(c, &s()).unwrap();
        assert!((t / 1e12 - 444.2).abs() < 0.5, "{t}");
    }

    #[test]
    fn unit_reuse_adds_full_decoder() {
        let sc = s();
        for ty in MacType::ALL {
            let c = effective_cost(1.0, &sc, ty, Reuse::Finite(1)).unwrap().unwrap();
            assert!((c - (sc.c_op(ty) + sc.c_d())).abs() < 1e-18);
        }
    }

    #[test]
    fn zero_gamma_is_unbounded() {
        let (c, t) = throughput(0.0, &s(), MacType::Type1, Reuse::Finite(3)).unwrap();
        assert_eq!(c, None);
        assert_eq!(t, Throughput::Unbounded);
        assert_eq!(t.to_string(), "inf");
        assert!(effective_cost(1.5, &s(), MacType::Type1, Reuse::Unbounded).is_err());
    }

    #[test]
    fn peaks() {
        let t1 = peak_throughput(&s(), MacType::Type1).unwrap();
        let t2 = peak_throughput(&s(), MacType::Type2).unwrap();
        assert!((t1 - 46.41e12).abs() < 1e9);
        assert!((t2 - 1.38e12).abs() < 1e9);
    }

    #[test]
    fn reuse_serde() {
        let g: SweepGrid = toml::from_str("gammas = [1.0]\nreuse = [1, 10, \"unbounded\"]").unwrap();
        assert_eq!(g.reuse, vec![Reuse::Finite(1), Reuse::Finite(10), Reuse::Unbounded]);
        assert!(toml::from_str::<SweepGrid>("gammas = [1.0]\nreuse = [0]").is_err());
        assert!(toml::from_str::<SweepGrid>("gammas = [1.0]\nreuse = [\"lots\"]").is_err());
    }

    #[test]
    fn uniform_sparsity_scales_inverse() {
        let w = [LayerWorkload { kind: WorkloadKind::Fc, batch: 1 << 40, gamma: 0.024 }; 2];
        let m = summarize(&w, &[1000, 10], &s(), MacType::Type1).unwrap();
        let ratio = m.aggregate.ops_per_second() / m.peak;
        assert!((ratio - 1.0 / 0.024).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn hand_two_layer_summary() {
        let sc = s();
        let w = [
            LayerWorkload { kind: WorkloadKind::Fc, batch: 10, gamma: 0.5 },
            LayerWorkload { kind: WorkloadKind::Conv { output_pixels: 4 }, batch: 10, gamma: 0.25 },
        ];
        let m = summarize(&w, &[100, 50], &sc, MacType::Type2).unwrap();
        let c1 = 0.5 * (1.0 / 5520.0 + 112.0 / 464_100.0 / 10.0);
        let c2 = 0.25 * (1.0 / 5520.0 + 112.0 / 464_100.0 / 40.0);
        let (t1, t2) = (250e6 / c1, 250e6 / c2);
        let (o1, o2) = (2.0 * 100.0 * 10.0, 2.0 * 50.0 * 40.0);
        let agg = (o1 + o2) / (o1 / t1 + o2 / t2);
        assert!((m.layers[0].t_e.ops_per_second() / t1 - 1.0).abs() < 1e-12);
        assert!((m.layers[1].t_e.ops_per_second() / t2 - 1.0).abs() < 1e-12);
        assert!((m.aggregate.ops_per_second() / agg - 1.0).abs() < 1e-12);
    }
}
