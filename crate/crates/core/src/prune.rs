//! Quantization pruning and the train / prune / retrain / encode pipeline.
//!
//! With `sigma == eta` the mask removes exactly the shadow weights the
//! quantizer already sends to zero, so pruning leaves `w_q` and therefore
//! every inference output unchanged at the moment it is applied.

use serde::{Deserialize, Serialize};

use crate::codec::{self, size_report, CodecTag, EncodedLayerBlob, SizeReport};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Scalar, Tensor};
use crate::train::{EpochRecord, OptimizerState, TrainConfig, TrainData, Trainer};

/// How the pruning threshold is chosen per ternary layer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaChoice {
    /// `sigma = eta` for every layer.
    #[default]
    EqualEta,
    Fixed {
        sigma: f64,
    },
    PerLayer {
        sigma: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    #[serde(default)]
    pub sigma: SigmaChoice,
    /// Prune and retrain rounds.
    #[serde(default = "one")]
    pub iterations: usize,
    pub retrain_epochs: usize,
    /// Accepts `sigma > eta`; such runs are reported as non-conforming.
    #[serde(default)]
    pub allow_sigma_above_eta: bool,
}

fn one() -> usize {
    1
}

impl PruneConfig {
    pub fn new(retrain_epochs: usize) -> Self {
        PruneConfig { sigma: SigmaChoice::EqualEta, iterations: 1, retrain_epochs, allow_sigma_above_eta: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("prune iterations must be at least 1"));
        }
        if self.retrain_epochs == 0 {
            return Err(Error::config("retrain epochs must be at least 1"));
        }
        Ok(())
    }

    /// `(sigma, conforming)` per ternary layer, given the layers' thresholds.
    pub fn resolve(&self, etas: &[f64]) -> Result<Vec<(f64, bool)>> {
        self.validate()?;
        let sigmas: Vec<f64> = match &self.sigma {
            SigmaChoice::EqualEta => etas.to_vec(),
            SigmaChoice::Fixed { sigma } => vec![*sigma; etas.len()],
            SigmaChoice::PerLayer { sigma } => {
                if sigma.len() != etas.len() {
                    return Err(Error::config(format!(
                        "{} pruning thresholds for {} ternary layers",
                        sigma.len(),
                        etas.len()
                    )));
                }
                sigma.clone()
            }
        };
        sigmas
            .iter()
            .zip(etas)
            .map(|(&s, &eta)| {
                check_sigma(s)?;
                if s > eta && !self.allow_sigma_above_eta {
                    return Err(Error::config(format!(
                        "pruning threshold {s} exceeds quantization threshold {eta}; \
                         set allow_sigma_above_eta to run it as a non-conforming sweep point"
                    )));
                }
                Ok((s, s <= eta))
            })
            .collect()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("pruning threshold must lie in (0, 1], got {sigma}")))
    }
}

/// Mask with `0` on the closed band `[-sigma, sigma]`, `1` elsewhere.
/// Requires `sigma <= eta`.
pub fn compute_mask<T: Scalar>(w_r: &Tensor<T>, sigma: f64, eta: f64) -> Result<Tensor<T>> {
    if sigma > eta {
        return Err(Error::config(format!("pruning threshold {sigma} exceeds quantization threshold {eta}")));
    }
    band_mask(w_r, sigma)
}

/// [`compute_mask`] without the `sigma <= eta` constraint.
pub fn band_mask<T: Scalar>(w_r: &Tensor<T>, sigma: f64) -> Result<Tensor<T>> {
    check_sigma(sigma)?;
    let s = T::from_f64(sigma);
    Ok(w_r.map(|w| if w.abs() <= s { T::zero() } else { T::one() }))
}

/// `w_r * w_m` elementwise; the mask must be binary.
pub fn apply_mask<T: Scalar>(w_r: &Tensor<T>, w_m: &Tensor<T>) -> Result<Tensor<T>> {
    w_r.ensure_same_shape(w_m, "apply_mask")?;
    let mut out = w_r.clone();
    for (i, (w, &m)) in out.data_mut().iter_mut().zip(w_m.data()).enumerate() {
        if m.is_zero() {
            *w = T::zero();
        } else if m != T::one() {
            return Err(Error::config(format!("mask entry {i} = {m:?} is not binary")));
        }
    }
    Ok(out)
}

/// Prunes every ternary layer: the new mask is intersected with the
/// existing one, masked shadow weights are zeroed, and `w_q` recomputed.
pub fn prune_network<T: Scalar>(net: &mut Network<T>, sigmas: &[f64]) -> Result<()> {
    let layers: Vec<_> = net.ternary_layers_mut().collect();
    if layers.len() != sigmas.len() {
        return Err(Error::config(format!("{} thresholds for {} ternary layers", sigmas.len(), layers.len())));
    }
    for (s, &sigma) in layers.into_iter().zip(sigmas) {
        let fresh = band_mask(&s.shadow, sigma)?;
        for (m, &f) in s.mask.data_mut().iter_mut().zip(fresh.data()) {
            *m = *m * f;
        }
        s.shadow = apply_mask(&s.shadow, &s.mask)?;
        s.requantize()?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsity {
    pub layer: usize,
    pub ternary: bool,
    pub total: u64,
    pub nonzeros: u64,
    pub nonzero_fraction: f64,
    /// Fraction of weights under the prune mask (0 for full-precision layers).
    pub pruned_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub layers: Vec<LayerSparsity>,
    pub total: u64,
    pub nonzeros: u64,
    pub nonzero_fraction: f64,
}

impl SparsityReport {
    pub fn from_layers(layers: Vec<LayerSparsity>) -> Self {
        let total: u64 = layers.iter().map(|l| l.total).sum();
        let nonzeros: u64 = layers.iter().map(|l| l.nonzeros).sum();
        let nonzero_fraction = if total == 0 { 0.0 } else { nonzeros as f64 / total as f64 };
        SparsityReport { layers, total, nonzeros, nonzero_fraction }
    }

    pub fn zero_fraction(&self) -> f64 {
        1.0 - self.nonzero_fraction
    }
}

/// Nonzero counts of the effective weights of every weight layer.
pub fn sparsity_report<T: Scalar>(net: &Network<T>) -> SparsityReport {
    let layers = net
        .weight_layers()
        .enumerate()
        .map(|(i, w)| {
            let eff = w.weights.effective();
            let total = eff.len() as u64;
            let nonzeros = eff.count_nonzero() as u64;
            LayerSparsity {
                layer: i,
                ternary: w.weights.ternary().is_some(),
                total,
                nonzeros,
                nonzero_fraction: nonzeros as f64 / total as f64,
                pruned_fraction: w.weights.ternary().map_or(0.0, |s| s.pruned_fraction()),
            }
        })
        .collect();
    SparsityReport::from_layers(layers)
}

/// Canonically flattened `w_q` of every ternary layer, encoded with `codec`.
pub fn encode_network<T: Scalar>(net: &Network<T>, codec: CodecTag) -> Result<Vec<EncodedLayerBlob>> {
    net.weight_layers()
        .filter(|w| w.weights.ternary().is_some())
        .map(|w| codec::encode(codec, &w.canonical_effective()?))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Train,
    Prune,
    Retrain,
    Encode,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Prune => "prune",
            Stage::Retrain => "retrain",
            Stage::Encode => "encode",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    /// Prune/retrain round, starting at 1; 0 for train and encode.
    pub iteration: usize,
    pub val_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
    pub sparsity: SparsityReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma: Vec<f64>,
    /// False when some layer was pruned with `sigma > eta`.
    pub conforming: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<SizeReport>,
}

/// Splits for a pipeline run; the test split is optional.
#[derive(Clone, Copy)]
pub struct PipelineData<'a> {
    pub train: TrainData<'a>,
    pub test: Option<(&'a Tensor<f32>, &'a [usize])>,
}

pub struct PipelineArtifacts {
    pub model: Network<f32>,
    pub optimizer: OptimizerState,
    /// Model selected by the training stage, before any pruning.
    pub trained: Network<f32>,
    pub stages: Vec<StageReport>,
    pub rle: Vec<EncodedLayerBlob>,
    pub hc: Vec<EncodedLayerBlob>,
    pub sizes: SizeReport,
}

impl PipelineArtifacts {
    pub fn report(&self, stage: Stage) -> impl Iterator<Item = &StageReport> {
        self.stages.iter().filter(move |r| r.stage == stage)
    }
}

/// Progress notifications from [`run_pipeline`].
pub enum PipelineEvent<'a> {
    Epoch { stage: Stage, iteration: usize, record: &'a EpochRecord },
    StageDone(&'a StageReport),
}

fn evaluate(net: &Network<f32>, data: &PipelineData) -> Result<(f64, Option<f64>)> {
    let val = net.error_rate(data.train.val_x, data.train.val_y)?;
    let test = data.test.map(|(x, y)| net.error_rate(x, y)).transpose()?;
    Ok((val, test))
}

/// Train, then `iterations` rounds of prune and retrain, then encode the
/// final `w_q` with both codecs. Errors carry the failing stage name.
pub fn run_pipeline(
    train_cfg: &TrainConfig,
    prune_cfg: &PruneConfig,
    data: &PipelineData,
    on_event: &mut dyn FnMut(PipelineEvent),
) -> Result<PipelineArtifacts> {
    train_cfg.validate().map_err(|e| e.in_stage("train"))?;
    prune_cfg.validate().map_err(|e| e.in_stage("prune"))?;
    let mut stages = Vec::new();

    let trainer = Trainer::new(train_cfg.clone()).map_err(|e| e.in_stage("train"))?;
    let outcome = trainer
        .fit_with(&data.train, train_cfg.epochs, &mut |r| {
            on_event(PipelineEvent::Epoch { stage: Stage::Train, iteration: 0, record: r })
        })
        .map_err(|e| e.in_stage("train"))?;
    let mut model = outcome.model;
    let mut optimizer = outcome.optimizer;
    let trained = model.clone();
    let (val_error, test_error) = evaluate(&model, data).map_err(|e| e.in_stage("train"))?;
    stages.push(StageReport {
        stage: Stage::Train,
        iteration: 0,
        val_error,
        test_error,
        sparsity: sparsity_report(&model),
        sigma: Vec::new(),
        conforming: true,
        history: outcome.history,
        sizes: None,
    });
    on_event(PipelineEvent::StageDone(stages.last().unwrap()));

    let etas: Vec<f64> = model.ternary_layers().map(|s| s.eta).collect();
    let resolved = prune_cfg.resolve(&etas).map_err(|e| e.in_stage("prune"))?;
    let sigmas: Vec<f64> = resolved.iter().map(|r| r.0).collect();
    let conforming = resolved.iter().all(|r| r.1);

    for iteration in 1..=prune_cfg.iterations {
        prune_network(&mut model, &sigmas).map_err(|e| e.in_stage("prune"))?;
        let (val_error, test_error) = evaluate(&model, data).map_err(|e| e.in_stage("prune"))?;
        stages.push(StageReport {
            stage: Stage::Prune,
            iteration,
            val_error,
            test_error,
            sparsity: sparsity_report(&model),
            sigma: sigmas.clone(),
            conforming,
            history: Vec::new(),
            sizes: None,
        });
        on_event(PipelineEvent::StageDone(stages.last().unwrap()));

        let mut retrain_cfg = train_cfg.clone();
        retrain_cfg.epochs = prune_cfg.retrain_epochs;
        let out = Trainer::from_network(retrain_cfg, model)
            .and_then(|t| {
                t.fit_with(&data.train, prune_cfg.retrain_epochs, &mut |r| {
                    on_event(PipelineEvent::Epoch { stage: Stage::Retrain, iteration, record: r })
                })
            })
            .map_err(|e| e.in_stage("retrain"))?;
        model = out.model;
        optimizer = out.optimizer;
        let (val_error, test_error) = evaluate(&model, data).map_err(|e| e.in_stage("retrain"))?;
        stages.push(StageReport {
            stage: Stage::Retrain,
            iteration,
            val_error,
            test_error,
            sparsity: sparsity_report(&model),
            sigma: sigmas.clone(),
            conforming,
            history: out.history,
            sizes: None,
        });
        on_event(PipelineEvent::StageDone(stages.last().unwrap()));
    }

    let encode = || -> Result<_> {
        let rle = encode_network(&model, CodecTag::Rle)?;
        let hc = encode_network(&model, CodecTag::Hc)?;
        let sizes = size_report(&rle, &hc)?;
        Ok((rle, hc, sizes))
    };
    let (rle, hc, sizes) = encode().map_err(|e| e.in_stage("encode"))?;
    let (val_error, test_error) = evaluate(&model, data).map_err(|e| e.in_stage("encode"))?;
    stages.push(StageReport {
        stage: Stage::Encode,
        iteration: 0,
        val_error,
        test_error,
        sparsity: sparsity_report(&model),
        sigma: Vec::new(),
        conforming,
        history: Vec::new(),
        sizes: Some(sizes.clone()),
    });
    on_event(PipelineEvent::StageDone(stages.last().unwrap()));

    Ok(PipelineArtifacts { model, optimizer, trained, stages, rle, hc, sizes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;
    use crate::engine::Sgd;
    use crate::network::{InitScheme, NetworkSpec};
    use crate::ternary::quantize;
    use crate::train::{LrSchedule, ThresholdConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn mask_cases() {
        assert_eq!(compute_mask(&t(&[0.95, 0.5, -0.91]), 0.9, 0.9).unwrap().data(), &[1.0, 0.0, 1.0]);
        assert_eq!(compute_mask(&t(&[0.9, -0.9, 0.90001]), 0.9, 0.9).unwrap().data(), &[0.0, 0.0, 1.0]);
        assert!(matches!(compute_mask(&t(&[0.1]), 0.9, 0.5), Err(Error::Config(_))));
        assert!(band_mask(&t(&[0.1]), 0.0).is_err());
    }

    #[test]
    fn apply_cases() {
        let w = t(&[0.95, 0.5, -0.91]);
        assert_eq!(apply_mask(&w, &t(&[1.0, 0.0, 1.0])).unwrap().data(), &[0.95, 0.0, -0.91]);
        assert_eq!(apply_mask(&w, &t(&[1.0; 3])).unwrap(), w);
        assert!(apply_mask(&w, &t(&[1.0, 0.5, 1.0])).is_err());
    }

    #[test]
    fn masked_fraction_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let w: Vec<f64> = (0..1_000_000).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let m = band_mask(&Tensor::from_vec(&[w.len()], w).unwrap(), 0.65).unwrap();
        let frac = 1.0 - m.count_nonzero() as f64 / m.len() as f64;
        assert!((frac - 0.65).abs() < 0.01, "{frac}");
    }

    #[test]
    fn sigma_resolution() {
        let cfg = PruneConfig::new(1);
        assert_eq!(cfg.resolve(&[0.8, 0.9]).unwrap(), vec![(0.8, true), (0.9, true)]);
        let mut fixed = PruneConfig { sigma: SigmaChoice::Fixed { sigma: 0.9 }, ..cfg.clone() };
        assert!(fixed.resolve(&[0.5]).is_err());
        fixed.allow_sigma_above_eta = true;
        assert_eq!(fixed.resolve(&[0.5, 0.9]).unwrap(), vec![(0.9, false), (0.9, true)]);
        let per = PruneConfig { sigma: SigmaChoice::PerLayer { sigma: vec![0.5] }, ..cfg };
        assert!(per.resolve(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn sparsity_counts() {
        let spec = NetworkSpec::mlp(&[5], &[], 2, false, true);
        let cfg = toy_train(spec, 0.5, 1);
        let mut net = cfg.build_network().unwrap();
        let s = net.ternary_layers_mut().next().unwrap();
        s.shadow = Tensor::from_vec(&[5, 2], vec![0.0, 0.9, 0.0, -0.8, 0.0, 0.0, 0.7, 0.0, 0.0, 0.0]).unwrap();
        s.requantize().unwrap();
        let r = sparsity_report(&net);
        assert_eq!(r.layers[0].nonzeros, 3);
        assert!((r.layers[0].nonzero_fraction - 0.3).abs() < 1e-12);
        let s = net.ternary_layers_mut().next().unwrap();
        s.shadow = Tensor::zeros(&[5, 2]).unwrap();
        s.requantize().unwrap();
        assert_eq!(sparsity_report(&net).nonzero_fraction, 0.0);
    }

    fn toy_train(network: NetworkSpec, eta: f64, epochs: usize) -> TrainConfig {
        TrainConfig {
            network,
            thresholds: ThresholdConfig::uniform(eta),
            lambda: 1e-6,
            optimizer: Sgd { learning_rate: 0.1, momentum: 0.9 },
            schedule: LrSchedule::Constant,
            epochs,
            batch_size: 20,
            seed: 5,
            init: InitScheme::Unit,
        }
    }

    #[test]
    fn pruning_at_eta_leaves_network_unchanged() {
        let cfg = toy_train(NetworkSpec::mlp(&[1, 4, 4], &[12, 12], 3, true, true), 0.7, 1);
        let mut net = cfg.build_network().unwrap();
        let d = synthetic(30, [1, 4, 4], 3, 0.3, 1).unwrap();
        let before = net.forward_infer(&d.images).unwrap();
        let wq: Vec<_> = net.ternary_layers().map(|s| s.quantized.clone()).collect();
        let etas: Vec<f64> = net.ternary_layers().map(|s| s.eta).collect();
        prune_network(&mut net, &etas).unwrap();
        let after: Vec<_> = net.ternary_layers().map(|s| s.quantized.clone()).collect();
        assert_eq!(wq, after);
        assert_eq!(before, net.forward_infer(&d.images).unwrap());
        for s in net.ternary_layers() {
            s.check_invariants().unwrap();
        }
    }

    #[test]
    fn masks_persist_through_retraining() {
        let d = synthetic(120, [1, 4, 4], 3, 0.4, 2).unwrap();
        let cfg = toy_train(NetworkSpec::mlp(&[1, 4, 4], &[16], 3, true, true), 0.5, 2);
        let data = TrainData { train_x: &d.images, train_y: &d.labels, val_x: &d.images, val_y: &d.labels };
        let out = crate::train::train(&cfg, &data).unwrap();
        let mut net = out.model;
        prune_network(&mut net, &[0.5, 0.5]).unwrap();
        let masks: Vec<_> = net.ternary_layers().map(|s| s.mask.clone()).collect();
        let mut tr = Trainer::from_network(cfg, net).unwrap();
        tr.config.batch_size = 12;
        // 120 / 12 = 10 steps.
        tr.run_epoch(&data).unwrap();
        for (s, m) in tr.net.ternary_layers().zip(&masks) {
            assert_eq!(&s.mask, m);
            s.check_invariants().unwrap();
            let pruned = m.len() - m.count_nonzero();
            assert!(s.quantized.len() - s.quantized.count_nonzero() >= pruned);
        }
    }

    #[test]
    fn second_iteration_intersects_masks() {
        let cfg = toy_train(NetworkSpec::mlp(&[4], &[], 2, false, true), 0.5, 1);
        let mut net = cfg.build_network().unwrap();
        prune_network(&mut net, &[0.5]).unwrap();
        let first = net.ternary_layers().next().unwrap().mask.clone();
        // Regrow every shadow weight; the second round must keep prior zeros.
        for s in net.ternary_layers_mut() {
            s.shadow = s.shadow.map(|w| if w == 0.0 { 0.9 } else { w });
        }
        prune_network(&mut net, &[0.5]).unwrap();
        assert_eq!(net.ternary_layers().next().unwrap().mask, first);
    }

    #[test]
    fn pipeline_runs_and_round_trips() {
        let d = synthetic(200, [1, 6, 6], 4, 0.5, 3).unwrap();
        let (train, val) = d.split_tail(50).unwrap();
        let cfg = toy_train(NetworkSpec::mlp(&[1, 6, 6], &[24, 24], 4, true, true), 0.6, 3);
        let data = PipelineData {
            train: TrainData { train_x: &train.images, train_y: &train.labels, val_x: &val.images, val_y: &val.labels },
            test: Some((&val.images, &val.labels)),
        };
        let mut prune = PruneConfig::new(2);
        prune.iterations = 2;
        let mut epochs = 0;
        let art = run_pipeline(&cfg, &prune, &data, &mut |e| {
            if let PipelineEvent::Epoch { .. } = e {
                epochs += 1
            }
        })
        .unwrap();
        assert_eq!(epochs, 3 + 2 * 2);
        let names: Vec<_> = art.stages.iter().map(|s| s.stage).collect();
        use Stage::*;
        assert_eq!(names, vec![Train, Prune, Retrain, Prune, Retrain, Encode]);
        let wq: Vec<_> = art.model.weight_layers().map(|w| w.canonical_effective().unwrap()).collect();
        for blobs in [&art.rle, &art.hc] {
            let decoded: Vec<Tensor<f32>> = blobs.iter().map(|b| codec::decode(b).unwrap()).collect();
            assert_eq!(decoded, wq);
        }
        assert_eq!(art.sizes.layers.len(), 3);
    }

    #[test]
    fn stage_failure_names_stage() {
        let d = synthetic(40, [1, 2, 2], 2, 0.1, 3).unwrap();
        let cfg = toy_train(NetworkSpec::mlp(&[1, 2, 2], &[4], 2, true, true), 0.5, 1);
        let data = PipelineData {
            train: TrainData { train_x: &d.images, train_y: &d.labels, val_x: &d.images, val_y: &d.labels },
            test: None,
        };
        let prune = PruneConfig { sigma: SigmaChoice::Fixed { sigma: 0.8 }, ..PruneConfig::new(1) };
        let err = run_pipeline(&cfg, &prune, &data, &mut |_| {}).err().unwrap();
        assert!(matches!(err, Error::Stage { stage: "prune", .. }), "{err}");
    }

    proptest! {
        #[test]
        fn quantization_pruning_equivalence(
            w in proptest::collection::vec(-1.0f64..=1.0, 1..128),
            eta in 0.01f64..0.99,
        ) {
            let w = t(&w);
            let m = compute_mask(&w, eta, eta).unwrap();
            prop_assert_eq!(quantize(&apply_mask(&w, &m).unwrap(), eta).unwrap(), quantize(&w, eta).unwrap());
        }

        #[test]
        fn mask_zero_set_is_monotone(
            w in proptest::collection::vec(-1.0f64..=1.0, 1..128),
            a in 0.01f64..=1.0,
            b in 0.01f64..=1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ml = band_mask(&t(&w), lo).unwrap();
            let mh = band_mask(&t(&w), hi).unwrap();
            for (l, h) in ml.data().iter().zip(mh.data()) {
                if *l == 0.0 {
                    prop_assert_eq!(*h, 0.0);
                }
            }
        }
    }
}
