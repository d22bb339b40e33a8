//! Run manifests and the plot-data / metrics files regenerated from them.
//!
//! A manifest (`manifest.json`) records the config snapshot, seed, stage
//! timings, artifact paths relative to the manifest directory, and the
//! metric tables collected during the run. [`emit_report`] reads only the
//! manifest and the artifacts it names, so reports can be rebuilt without
//! retraining and are byte-identical across regenerations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::codec::{self, stw1, SizeReport, BYTES_PER_MB};
use crate::config::RunConfig;
use crate::cost::{model_summary, sweep_curves, CostScenario, ModelSummary, ScenarioFile, SweepGrid};
use crate::error::{Error, Result};
use crate::network::{Network, Weights};
use crate::prune::{sparsity_report, SparsityReport, StageReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;
pub const HISTOGRAM_BINS: usize = 64;

/// Artifact roles understood by [`emit_report`].
pub mod artifact {
    /// Final model checkpoint.
    pub const CHECKPOINT: &str = "checkpoint";
    /// Checkpoint selected by training, before pruning.
    pub const TRAINED: &str = "trained_checkpoint";
    pub const RLE: &str = "rle";
    pub const HC: &str = "hc";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac_count: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioFile>,
    #[serde(default)]
    pub timings: Vec<StageTiming>,
    /// Role to path, relative to the manifest directory.
    #[serde(default)]
    pub artifacts: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub metrics: Metrics,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA,
            command: command.to_string(),
            seed: None,
            config: None,
            scenario: None,
            timings: Vec::new(),
            artifacts: BTreeMap::new(),
            metrics: Metrics::default(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_json()?)?;
        Ok(path)
    }

    /// Accepts a manifest file or the directory holding one.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|_| Error::MissingArtifacts(vec![file.display().to_string()]))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Config(format!("manifest schema {} is not supported", m.schema)));
        }
        let dir = file.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok((m, dir))
    }

    /// Paths named by the manifest that do not exist under `base`.
    pub fn missing_artifacts(&self, base: &Path) -> Vec<String> {
        self.artifacts.values().map(|p| base.join(p)).filter(|p| !p.exists()).map(|p| p.display().to_string()).collect()
    }

    fn scenario(&self) -> Option<(CostScenario, SweepGrid, ScenarioFile)> {
        if let Some(f) = &self.scenario {
            return Some((f.scenario.clone(), f.sweep.clone(), f.clone()));
        }
        self.config.as_ref().map(|c| {
            let f = ScenarioFile { scenario: c.cost.scenario.clone(), ..Default::default() };
            (f.scenario.clone(), f.sweep.clone(), f)
        })
    }
}

/// Counts of `values` in `bins` equal-width bins spanning `[lo, hi]`.
/// Out-of-range values land in the edge bins, so counts sum to `values.len()`.
pub fn histogram(values: impl IntoIterator<Item = f64>, bins: usize, lo: f64, hi: f64) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for v in values {
        let i = ((v - lo) / width).floor();
        let i = if i.is_nan() { 0 } else { (i.max(0.0) as usize).min(bins - 1) };
        counts[i] += 1;
    }
    counts
}

pub fn bin_edges(bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..=bins).map(|i| if i == bins { hi } else { lo + (hi - lo) * i as f64 / bins as f64 }).collect()
}

fn push_histograms(out: &mut String, model: &str, net: &Network<f32>) {
    let edges = bin_edges(HISTOGRAM_BINS, -1.0, 1.0);
    for (li, w) in net.weight_layers().enumerate() {
        let source = match &w.weights {
            Weights::Ternary(s) => &s.shadow,
            Weights::Full(t) => t,
        };
        let counts = histogram(source.data().iter().map(|&v| v as f64), HISTOGRAM_BINS, -1.0, 1.0);
        for (b, c) in counts.iter().enumerate() {
            let _ = writeln!(out, "{model},{li},{b},{},{},{c}", edges[b], edges[b + 1]);
        }
    }
}

pub fn validation_csv(stages: &[StageReport]) -> String {
    let mut out = String::from("stage,iteration,epoch,learning_rate,train_loss,train_cost,train_error,val_error\n");
    for s in stages {
        for r in &s.history {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.stage.name(),
                s.iteration,
                r.epoch,
                r.learning_rate,
                r.train_loss,
                r.train_cost,
                r.train_error,
                r.val_error
            );
        }
    }
    out
}

pub fn accuracy_sparsity_csv(stages: &[StageReport]) -> String {
    let mut out = String::from("stage,iteration,zero_fraction,val_error,test_error,conforming\n");
    for s in stages {
        let test = s.test_error.map_or(String::new(), |t| t.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.stage.name(),
            s.iteration,
            s.sparsity.zero_fraction(),
            s.val_error,
            test,
            s.conforming
        );
    }
    out
}

/// Per-layer sizes in MB plus a `total` row.
pub fn size_table_csv(sizes: &SizeReport) -> String {
    let mut out = String::from("layer,params,nonzeros,dense_1bit_mb,dense_2bit_mb,rle_mb,hc_mb\n");
    let mb = |b: u64| b as f64 / BYTES_PER_MB;
    let rows = sizes.layers.iter().enumerate().map(|(i, l)| (i.to_string(), l));
    for (name, l) in rows.chain(std::iter::once(("total".to_string(), &sizes.total))) {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{}",
            l.params,
            l.nonzeros,
            mb(l.dense_1bit_bytes),
            mb(l.dense_2bit_bytes),
            mb(l.rle_bytes),
            mb(l.hc_bytes)
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub timings: Vec<StageTiming>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<SparsityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<SizeReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<ModelSummary>,
}

fn load_blobs(path: &Path) -> Result<Vec<codec::EncodedLayerBlob>> {
    stw1::read(&fs::read(path)?)
}

/// Writes the report files for `manifest` into `out_dir` and returns their
/// paths. Artifact paths resolve against `base`.
///
/// Files: `metrics.json` always; `validation_error.csv` and
/// `accuracy_sparsity.csv` with stage metrics; `weight_histograms.csv` with
/// a checkpoint; `size_table.csv` with both encodings; `te_curves.csv` and
/// `te_benchmarks.csv` with a cost scenario.
pub fn emit_report(manifest: &RunManifest, base: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let missing = manifest.missing_artifacts(base);
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    fs::create_dir_all(out_dir)?;
    let mut files: Vec<(&str, String)> = Vec::new();
    let artifact = |role: &str| manifest.artifacts.get(role).map(|p| base.join(p));

    let mut metrics = ReportMetrics {
        command: manifest.command.clone(),
        seed: manifest.seed,
        timings: manifest.timings.clone(),
        stages: manifest.metrics.stages.clone(),
        test_error: manifest.metrics.test_error,
        mac_count: manifest.metrics.mac_count,
        sparsity: None,
        sizes: None,
        cost: None,
    };

    if !manifest.metrics.stages.is_empty() {
        files.push(("validation_error.csv", validation_csv(&manifest.metrics.stages)));
        files.push(("accuracy_sparsity.csv", accuracy_sparsity_csv(&manifest.metrics.stages)));
    }

    if let Some(p) = artifact(artifact::CHECKPOINT) {
        let ck = Checkpoint::load(&p)?;
        let mut hist = String::from("model,layer,bin,lo,hi,count\n");
        if let Some(t) = artifact(artifact::TRAINED) {
            push_histograms(&mut hist, "trained", &Checkpoint::load(&t)?.network);
        }
        push_histograms(&mut hist, "final", &ck.network);
        files.push(("weight_histograms.csv", hist));
        metrics.sparsity = Some(sparsity_report(&ck.network));
        if let Some(cfg) = &manifest.config {
            if ck.network.ternary_layers().next().is_some() {
                metrics.cost = Some(model_summary(&ck.network, &cfg.cost.scenario, cfg.cost_batch())?);
            }
        }
    }

    if let (Some(r), Some(h)) = (artifact(artifact::RLE), artifact(artifact::HC)) {
        let sizes = codec::size_report(&load_blobs(&r)?, &load_blobs(&h)?)?;
        files.push(("size_table.csv", size_table_csv(&sizes)));
        metrics.sizes = Some(sizes);
    }

    if let Some((scenario, grid, file)) = manifest.scenario() {
        let table = sweep_curves(&scenario, &grid, &file.benchmark_lines())?;
        files.push(("te_curves.csv", table.curves_csv()));
        files.push(("te_benchmarks.csv", table.benchmarks_csv()));
    }

    files.insert(0, ("metrics.json", serde_json::to_string_pretty(&metrics)? + "\n"));
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = out_dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
