//! Quantized training loop.
//!
//! Each step quantizes every ternary layer, runs the forward pass with the
//! quantized weights, and backpropagates. The gradient with respect to `w_q`
//! plus `lambda * w_q` is passed straight through to the shadow weights
//! (zeroed under the prune mask) and applied with SGD, after which shadow
//! weights are clipped to `[-1, 1]`. Biases and batch-norm parameters are
//! full precision.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{sgd_step, softmax_xent, Clip, Sgd};
use crate::error::{Error, Result};
use crate::network::{
    argmax_rows, BuildOptions, InitScheme, Layer, LayerGrads, LayerSpec, Network, NetworkSpec, Weights,
};
use crate::tensor::Tensor;
use crate::ternary::{check_threshold, reg_gradient, regularized_cost, ste_backward};

pub const DEFAULT_LAMBDA: f64 = 1e-6;

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_batch() -> usize {
    100
}

/// Quantization thresholds: a default plus optional per-kind and per-layer
/// overrides (weight-layer index, in order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub default: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer: Option<Vec<f64>>,
}

impl ThresholdConfig {
    pub fn uniform(eta: f64) -> Self {
        ThresholdConfig { default: eta, conv: None, fc: None, per_layer: None }
    }

    pub fn resolve(&self, spec: &NetworkSpec) -> Result<Vec<f64>> {
        let n = spec.weight_layer_count();
        let out: Vec<f64> = if let Some(per) = &self.per_layer {
            if per.len() != n {
                return Err(Error::config(format!("per_layer lists {} thresholds for {n} weight layers", per.len())));
            }
            per.clone()
        } else {
            spec.layers
                .iter()
                .filter(|l| l.is_weight_layer())
                .map(|l| match l {
                    LayerSpec::Conv { .. } => self.conv.unwrap_or(self.default),
                    _ => self.fc.unwrap_or(self.default),
                })
                .collect()
        };
        for &eta in &out {
            check_threshold(eta)?;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// `lr * gamma^epoch`.
    Exponential {
        gamma: f64,
    },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Exponential { gamma } => base * gamma.powi(epoch as i32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub network: NetworkSpec,
    pub thresholds: ThresholdConfig,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub optimizer: Sgd,
    #[serde(default = "constant")]
    pub schedule: LrSchedule,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "unit_init")]
    pub init: InitScheme,
}

fn constant() -> LrSchedule {
    LrSchedule::Constant
}

fn unit_init() -> InitScheme {
    InitScheme::Unit
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.thresholds.resolve(&self.network)?;
        self.optimizer.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch size must be at least 2 for batch norm"));
        }
        if let LrSchedule::Exponential { gamma } = self.schedule {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::config(format!("decay gamma must be in (0, 1], got {gamma}")));
            }
        }
        Ok(())
    }

    pub fn build_network(&self) -> Result<Network<f32>> {
        self.validate()?;
        let opts =
            BuildOptions { init: self.init, thresholds: self.thresholds.resolve(&self.network)?, lambda: self.lambda };
        let mut rng = init_rng(self.seed);
        Network::new(self.network.clone(), &opts, &mut rng)
    }
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Borrowed training and validation splits with class-index labels.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub train_x: &'a Tensor<f32>,
    pub train_y: &'a [usize],
    pub val_x: &'a Tensor<f32>,
    pub val_y: &'a [usize],
}

/// Momentum buffers, one per parameter tensor in layer order
/// (weights then bias, or gamma then beta).
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub velocities: Vec<Tensor<f32>>,
}

impl OptimizerState {
    pub fn zeros_for(net: &Network<f32>) -> Result<Self> {
        let mut velocities = Vec::new();
        for layer in &net.layers {
            match layer {
                Layer::Weight(w) => {
                    velocities.push(Tensor::zeros(w.weights.effective().shape())?);
                    if let Some(b) = &w.bias {
                        velocities.push(Tensor::zeros(b.shape())?);
                    }
                }
                Layer::BatchNorm(bn) => {
                    velocities.push(Tensor::zeros(bn.gamma.shape())?);
                    velocities.push(Tensor::zeros(bn.beta.shape())?);
                }
                _ => {}
            }
        }
        Ok(OptimizerState { velocities })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    /// Data loss plus the quantized-weight L2 penalty, averaged over batches.
    pub train_cost: f64,
    pub train_error: f64,
    pub val_error: f64,
    /// `w_q` zero fraction per ternary layer after the epoch.
    pub zero_fraction: Vec<f64>,
}

pub struct TrainOutcome {
    /// Network state at the epoch with the lowest validation error.
    pub model: Network<f32>,
    pub optimizer: OptimizerState,
    pub best_epoch: usize,
    pub best_val_error: f64,
    /// `w_q` zero fraction per ternary layer before the first update.
    pub initial_zero_fraction: Vec<f64>,
    pub history: Vec<EpochRecord>,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub net: Network<f32>,
    pub state: OptimizerState,
    /// Epochs completed so far.
    pub epoch: usize,
    rng: ChaCha8Rng,
}

struct StepStats {
    loss: f64,
    cost: f64,
    wrong: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        let net = config.build_network()?;
        Trainer::from_network(config, net)
    }

    /// Continues training an existing network (retraining after pruning)
    /// with fresh momentum buffers.
    pub fn from_network(config: TrainConfig, mut net: Network<f32>) -> Result<Self> {
        config.validate()?;
        if net.spec != config.network {
            return Err(Error::config("network does not match the configured topology"));
        }
        net.requantize()?;
        let state = OptimizerState::zeros_for(&net)?;
        let rng = shuffle_rng(config.seed);
        Ok(Trainer { config, net, state, epoch: 0, rng })
    }

    fn step(&mut self, x: &Tensor<f32>, labels: &[usize], lr: f64, batch_index: usize) -> Result<StepStats> {
        self.net.requantize()?;
        let (logits, cache) = self.net.forward_train(x)?;
        let (loss, grad) = softmax_xent(&logits, labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: self.epoch, batch: batch_index, loss });
        }
        let cost = regularized_cost(loss, self.net.ternary_layers());
        let wrong = argmax_rows(&logits).iter().zip(labels).filter(|(p, l)| p != l).count();
        let grads = self.net.backward(&cache, grad)?;
        let opt = Sgd { learning_rate: lr, momentum: self.config.optimizer.momentum };
        apply_updates(&mut self.net, grads, &mut self.state, &opt)?;
        Ok(StepStats { loss, cost, wrong })
    }

    /// One pass over the shuffled training split.
    pub fn run_epoch(&mut self, data: &TrainData) -> Result<EpochRecord> {
        let n = data.train_x.rows();
        if n != data.train_y.len() {
            return Err(Error::dim("training image and label counts differ"));
        }
        let bs = self.config.batch_size;
        if n < 2 {
            return Err(Error::config("training split needs at least 2 examples"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let lr = self.config.schedule.rate(self.config.optimizer.learning_rate, self.epoch);

        let (mut loss_sum, mut cost_sum, mut wrong, mut batches) = (0.0, 0.0, 0usize, 0usize);
        for (bi, idx) in order.chunks(bs).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let x = data.train_x.gather_rows(idx)?;
            let y: Vec<usize> = idx.iter().map(|&i| data.train_y[i]).collect();
            let s = self.step(&x, &y, lr, bi)?;
            loss_sum += s.loss;
            cost_sum += s.cost;
            wrong += s.wrong;
            batches += 1;
        }
        self.net.requantize()?;
        self.epoch += 1;
        let val_error = self.net.error_rate(data.val_x, data.val_y)?;
        Ok(EpochRecord {
            epoch: self.epoch,
            learning_rate: lr,
            train_loss: loss_sum / batches as f64,
            train_cost: cost_sum / batches as f64,
            train_error: wrong as f64 / n as f64,
            val_error,
            zero_fraction: self.net.ternary_layers().map(|s| s.zero_fraction()).collect(),
        })
    }

    /// Trains for `epochs` epochs, keeping the state with the best
    /// validation error (earliest on ties).
    pub fn fit(self, data: &TrainData, epochs: usize) -> Result<TrainOutcome> {
        self.fit_with(data, epochs, &mut |_| {})
    }

    /// [`Trainer::fit`] with a callback after every epoch.
    pub fn fit_with(
        mut self,
        data: &TrainData,
        epochs: usize,
        on_epoch: &mut dyn FnMut(&EpochRecord),
    ) -> Result<TrainOutcome> {
        let initial_zero_fraction = self.net.ternary_layers().map(|s| s.zero_fraction()).collect();
        let mut history = Vec::with_capacity(epochs);
        let mut best: Option<(usize, f64, Network<f32>, OptimizerState)> = None;
        for _ in 0..epochs {
            let rec = self.run_epoch(data)?;
            on_epoch(&rec);
            let better = best.as_ref().is_none_or(|(_, e, _, _)| rec.val_error < *e);
            if better {
                best = Some((rec.epoch, rec.val_error, self.net.clone(), self.state.clone()));
            }
            history.push(rec);
        }
        let (best_epoch, best_val_error, model, optimizer) =
            best.ok_or_else(|| Error::config("epochs must be at least 1"))?;
        Ok(TrainOutcome { model, optimizer, best_epoch, best_val_error, initial_zero_fraction, history })
    }
}

/// Full training run from a fresh network.
pub fn train(config: &TrainConfig, data: &TrainData) -> Result<TrainOutcome> {
    let trainer = Trainer::new(config.clone())?;
    trainer.fit(data, config.epochs)
}

fn apply_updates(
    net: &mut Network<f32>,
    grads: Vec<LayerGrads<f32>>,
    state: &mut OptimizerState,
    opt: &Sgd,
) -> Result<()> {
    let mut v = state.velocities.iter_mut();
    let mut next_velocity = || v.next().ok_or_else(|| Error::dim("optimizer state does not match network"));
    for (layer, g) in net.layers.iter_mut().zip(grads) {
        match (layer, g) {
            (Layer::Weight(w), LayerGrads::Weight { weights: gw, bias: gb }) => {
                match &mut w.weights {
                    Weights::Ternary(s) => {
                        let mut g1 = gw;
                        let reg = reg_gradient(&s.quantized, s.lambda);
                        for (a, &r) in g1.data_mut().iter_mut().zip(reg.data()) {
                            *a += r;
                        }
                        let g_shadow = ste_backward(&g1, &s.mask)?;
                        sgd_step(&mut s.shadow, &g_shadow, next_velocity()?, opt, Clip::UnitInterval)?;
                    }
                    Weights::Full(t) => sgd_step(t, &gw, next_velocity()?, opt, Clip::None)?,
                }
                if let (Some(b), Some(gb)) = (w.bias.as_mut(), gb) {
                    sgd_step(b, &gb, next_velocity()?, opt, Clip::None)?;
                }
            }
            (Layer::BatchNorm(bn), LayerGrads::BatchNorm { gamma, beta }) => {
                sgd_step(&mut bn.gamma, &gamma, next_velocity()?, opt, Clip::None)?;
                sgd_step(&mut bn.beta, &beta, next_velocity()?, opt, Clip::None)?;
            }
            (_, LayerGrads::None) => {}
            _ => return Err(Error::dim("gradient list does not match layers")),
        }
    }
    Ok(())
}
