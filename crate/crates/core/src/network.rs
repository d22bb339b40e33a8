//! Layer-stack networks built from a [`NetworkSpec`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::conv::{conv2d_backward, conv2d_forward, output_extent, ConvParams};
use crate::engine::dense::{fc_backward, fc_forward};
use crate::engine::norm::BatchNormCache;
use crate::engine::{binary_activation, binary_activation_backward, relu, relu_backward, BatchNorm};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::ternary::TernaryLayerState;

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Fc {
        out: usize,
        #[serde(default = "yes")]
        bias: bool,
        #[serde(default)]
        ternary: bool,
    },
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
        #[serde(default = "yes")]
        bias: bool,
        #[serde(default)]
        ternary: bool,
    },
    BatchNorm,
    BinaryActivation,
    Relu,
    SoftmaxXent,
}

impl LayerSpec {
    pub fn is_weight_layer(&self) -> bool {
        matches!(self, LayerSpec::Fc { .. } | LayerSpec::Conv { .. })
    }

    pub fn is_ternary(&self) -> bool {
        matches!(self, LayerSpec::Fc { ternary: true, .. } | LayerSpec::Conv { ternary: true, .. })
    }
}

/// Activation arithmetic of the network, which decides the MAC type of the
/// cost model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkType {
    /// Binary activations; MACs are XNOR-popcount.
    BinaryActivations,
    /// Full-precision activations; MACs are floating-point accumulates.
    FloatActivations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-example input shape: `[features]` or `[channels, height, width]`.
    pub input: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// `inputs -> hidden... -> classes` fully-connected stack.
    ///
    /// Every hidden layer is FC, batch norm, then the activation; the output
    /// layer is FC and batch norm followed by softmax cross-entropy.
    pub fn mlp(input: &[usize], hidden: &[usize], classes: usize, binary: bool, ternary: bool) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::Fc { out: h, bias: true, ternary });
            layers.push(LayerSpec::BatchNorm);
            layers.push(if binary { LayerSpec::BinaryActivation } else { LayerSpec::Relu });
        }
        layers.push(LayerSpec::Fc { out: classes, bias: true, ternary });
        layers.push(LayerSpec::BatchNorm);
        layers.push(LayerSpec::SoftmaxXent);
        NetworkSpec { input: input.to_vec(), classes, layers }
    }

    pub fn network_type(&self) -> NetworkType {
        if self.layers.contains(&LayerSpec::BinaryActivation) {
            NetworkType::BinaryActivations
        } else {
            NetworkType::FloatActivations
        }
    }

    /// Per-example input shape of every layer, followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input.is_empty() || self.input.contains(&0) {
            return Err(Error::config(format!("invalid input shape {:?}", self.input)));
        }
        let mut shapes = vec![self.input.clone()];
        let mut cur = self.input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                LayerSpec::Fc { out, .. } => {
                    if out == 0 {
                        return Err(Error::config(format!("layer {i}: fc with zero outputs")));
                    }
                    vec![out]
                }
                LayerSpec::Conv { filters, kernel, stride, pad, .. } => {
                    if cur.len() != 3 {
                        return Err(Error::config(format!("layer {i}: conv needs [C, H, W] input, got {cur:?}")));
                    }
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::config(format!("layer {i}: conv parameters must be positive")));
                    }
                    if pad >= kernel {
                        return Err(Error::config(format!("layer {i}: padding {pad} >= kernel {kernel}")));
                    }
                    let h = output_extent(cur[1], kernel, stride, pad)
                        .map_err(|e| Error::config(format!("layer {i}: {e}")))?;
                    let w = output_extent(cur[2], kernel, stride, pad)
                        .map_err(|e| Error::config(format!("layer {i}: {e}")))?;
                    vec![filters, h, w]
                }
                LayerSpec::SoftmaxXent => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::config("softmax_xent must be the last layer"));
                    }
                    cur.clone()
                }
                _ => cur.clone(),
            };
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.shapes()?;
        if self.layers.last() != Some(&LayerSpec::SoftmaxXent) {
            return Err(Error::config("network must end with softmax_xent"));
        }
        let out = shapes.last().expect("nonempty");
        if out.iter().product::<usize>() != self.classes || self.classes < 2 {
            return Err(Error::config(format!("network output {out:?} does not match {} classes", self.classes)));
        }
        Ok(())
    }

    pub fn weight_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_weight_layer()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Shadow weights uniform on `[-1, 1]`: Glorot-uniform expressed in
    /// units of the Glorot bound, so thresholds partition the weight range.
    Unit,
    /// Literal Glorot-uniform, `U(-sqrt(6/(fan_in+fan_out)), +...)`.
    Glorot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    Fc,
    Conv(ConvParams),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weights<T> {
    Full(Tensor<T>),
    Ternary(TernaryLayerState<T>),
}

impl<T: Scalar> Weights<T> {
    /// The tensor used in the forward pass: `w_q` for ternary layers.
    pub fn effective(&self) -> &Tensor<T> {
        match self {
            Weights::Full(w) => w,
            Weights::Ternary(s) => &s.quantized,
        }
    }

    pub fn ternary(&self) -> Option<&TernaryLayerState<T>> {
        match self {
            Weights::Ternary(s) => Some(s),
            Weights::Full(_) => None,
        }
    }

    pub fn ternary_mut(&mut self) -> Option<&mut TernaryLayerState<T>> {
        match self {
            Weights::Ternary(s) => Some(s),
            Weights::Full(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightLayer<T> {
    pub kind: WeightKind,
    /// FC: `[in, out]`; conv: `[F, C, kh, kw]`.
    pub weights: Weights<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> WeightLayer<T> {
    /// `w_q` flattened in canonical order: `[out, in]` for FC (row-major
    /// over output then input) and `[F, C, kh, kw]` for conv.
    pub fn canonical_effective(&self) -> Result<Tensor<T>> {
        match self.kind {
            WeightKind::Fc => self.weights.effective().transpose2(),
            WeightKind::Conv(_) => Ok(self.weights.effective().clone()),
        }
    }

    /// Shape of the canonical weight tensor.
    pub fn canonical_shape(&self) -> Vec<usize> {
        let s = self.weights.effective().shape();
        match self.kind {
            WeightKind::Fc => vec![s[1], s[0]],
            WeightKind::Conv(_) => s.to_vec(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let w = self.weights.effective();
        match self.kind {
            WeightKind::Fc => fc_forward(x, w, self.bias.as_ref()),
            WeightKind::Conv(p) => conv2d_forward(x, w, self.bias.as_ref(), p),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Weight(WeightLayer<T>),
    BatchNorm(BatchNorm<T>),
    BinaryActivation,
    Relu,
    SoftmaxXent,
}

/// Per-layer hyperparameters for building a network.
#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub init: InitScheme,
    /// One threshold per weight layer, in order.
    pub thresholds: Vec<f64>,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer<T>>,
}

/// Activations kept by a training forward pass.
pub struct ForwardCache<T> {
    inputs: Vec<Tensor<T>>,
    bn: Vec<Option<BatchNormCache<T>>>,
}

/// Gradients for one layer's parameters, in the order
/// weights/bias (weight layers) or gamma/beta (batch norm).
#[derive(Debug)]
pub enum LayerGrads<T> {
    Weight { weights: Tensor<T>, bias: Option<Tensor<T>> },
    BatchNorm { gamma: Tensor<T>, beta: Tensor<T> },
    None,
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl<T: Scalar> Network<T> {
    pub fn new<R: Rng>(spec: NetworkSpec, opts: &BuildOptions, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        if opts.thresholds.len() != spec.weight_layer_count() {
            return Err(Error::config(format!(
                "{} thresholds for {} weight layers",
                opts.thresholds.len(),
                spec.weight_layer_count()
            )));
        }
        let shapes = spec.shapes()?;
        let mut thresholds = opts.thresholds.iter();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, ls) in spec.layers.iter().enumerate() {
            let in_shape = &shapes[i];
            let layer = match *ls {
                LayerSpec::Fc { out, bias, ternary } => {
                    let inp: usize = in_shape.iter().product();
                    let eta = *thresholds.next().expect("counted");
                    let w = init_tensor(&[inp, out], inp, out, ternary, opts.init, rng)?;
                    Layer::Weight(WeightLayer {
                        kind: WeightKind::Fc,
                        weights: make_weights(w, ternary, eta, opts.lambda)?,
                        bias: if bias { Some(Tensor::zeros(&[out])?) } else { None },
                    })
                }
                LayerSpec::Conv { filters, kernel, stride, pad, bias, ternary } => {
                    let c = in_shape[0];
                    let eta = *thresholds.next().expect("counted");
                    let area = kernel * kernel;
                    let w =
                        init_tensor(&[filters, c, kernel, kernel], c * area, filters * area, ternary, opts.init, rng)?;
                    Layer::Weight(WeightLayer {
                        kind: WeightKind::Conv(ConvParams { stride, pad }),
                        weights: make_weights(w, ternary, eta, opts.lambda)?,
                        bias: if bias { Some(Tensor::zeros(&[filters])?) } else { None },
                    })
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(in_shape[0])?),
                LayerSpec::BinaryActivation => Layer::BinaryActivation,
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::SoftmaxXent => Layer::SoftmaxXent,
            };
            layers.push(layer);
        }
        Ok(Network { spec, layers })
    }

    pub fn weight_layers(&self) -> impl Iterator<Item = &WeightLayer<T>> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Weight(w) => Some(w),
            _ => None,
        })
    }

    pub fn weight_layers_mut(&mut self) -> impl Iterator<Item = &mut WeightLayer<T>> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Weight(w) => Some(w),
            _ => None,
        })
    }

    pub fn ternary_layers(&self) -> impl Iterator<Item = &TernaryLayerState<T>> {
        self.weight_layers().filter_map(|w| w.weights.ternary())
    }

    pub fn ternary_layers_mut(&mut self) -> impl Iterator<Item = &mut TernaryLayerState<T>> {
        self.weight_layers_mut().filter_map(|w| w.weights.ternary_mut())
    }

    /// Recomputes `w_q` for every ternary layer.
    pub fn requantize(&mut self) -> Result<()> {
        for s in self.ternary_layers_mut() {
            s.requantize()?;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.ndim() < 2 || x.shape()[1..] != self.spec.input[..] {
            return Err(Error::dim(format!(
                "network input {:?} does not match [batch, {:?}]",
                x.shape(),
                self.spec.input
            )));
        }
        x.check_finite("network input")
    }

    /// Inference-mode forward pass returning logits.
    pub fn forward_infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Weight(w) => w.forward(&cur)?,
                Layer::BatchNorm(bn) => bn.forward_infer(&cur)?,
                Layer::BinaryActivation => binary_activation(&cur),
                Layer::Relu => relu(&cur),
                Layer::SoftmaxXent => cur,
            };
        }
        Ok(cur)
    }

    /// Training-mode forward pass with the current effective weights.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut bn_caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in self.layers.iter_mut() {
            let (next, bc) = match layer {
                Layer::Weight(w) => (w.forward(&cur)?, None),
                Layer::BatchNorm(bn) => {
                    let (y, c) = bn.forward_train(&cur)?;
                    (y, Some(c))
                }
                Layer::BinaryActivation => (binary_activation(&cur), None),
                Layer::Relu => (relu(&cur), None),
                Layer::SoftmaxXent => (cur.clone(), None),
            };
            inputs.push(std::mem::replace(&mut cur, next));
            bn_caches.push(bc);
        }
        Ok((cur, ForwardCache { inputs, bn: bn_caches }))
    }

    /// Backpropagates the logit gradient; one entry per layer. Weight
    /// gradients are taken with respect to the effective (quantized)
    /// weights.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: Tensor<T>) -> Result<Vec<LayerGrads<T>>> {
        let mut grads: Vec<LayerGrads<T>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let need_input = i > 0;
            let lg = match layer {
                Layer::Weight(w) => {
                    let (gi, gw, gb) = match w.kind {
                        WeightKind::Fc => {
                            let r = fc_backward(x, w.weights.effective(), &g, need_input)?;
                            (r.input, r.weight, r.bias)
                        }
                        WeightKind::Conv(p) => {
                            let r = conv2d_backward(x, w.weights.effective(), &g, p, need_input)?;
                            (r.input, r.kernel, r.bias)
                        }
                    };
                    if let Some(gi) = gi {
                        g = gi;
                    }
                    LayerGrads::Weight { weights: gw, bias: w.bias.as_ref().map(|_| gb) }
                }
                Layer::BatchNorm(bn) => {
                    let c = cache.bn[i].as_ref().ok_or_else(|| Error::dim("missing batch norm cache"))?;
                    let r = bn.backward(c, &g)?;
                    g = r.input;
                    LayerGrads::BatchNorm { gamma: r.gamma, beta: r.beta }
                }
                Layer::BinaryActivation => {
                    g = binary_activation_backward(x, &g)?;
                    LayerGrads::None
                }
                Layer::Relu => {
                    g = relu_backward(x, &g)?;
                    LayerGrads::None
                }
                Layer::SoftmaxXent => LayerGrads::None,
            };
            grads.push(lg);
        }
        grads.reverse();
        Ok(grads)
    }

    /// Predicted class per row, evaluated in inference mode in chunks.
    pub fn predict(&self, x: &Tensor<T>, chunk: usize) -> Result<Vec<usize>> {
        let mut preds = Vec::with_capacity(x.rows());
        let chunk = chunk.max(1);
        let mut start = 0;
        while start < x.rows() {
            let end = (start + chunk).min(x.rows());
            let logits = self.forward_infer(&x.slice_rows(start, end)?)?;
            preds.extend(argmax_rows(&logits));
            start = end;
        }
        Ok(preds)
    }

    /// Fraction of misclassified examples.
    pub fn error_rate(&self, x: &Tensor<T>, labels: &[usize]) -> Result<f64> {
        if x.rows() != labels.len() {
            return Err(Error::dim("image and label counts differ"));
        }
        let preds = self.predict(x, 1000)?;
        let wrong = preds.iter().zip(labels).filter(|(p, l)| p != l).count();
        Ok(wrong as f64 / labels.len() as f64)
    }

    /// Total weights in all weight layers, excluding biases.
    pub fn weight_count(&self) -> usize {
        self.weight_layers().map(|w| w.weights.effective().len()).sum()
    }
}

pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let k = logits.row_len();
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn init_tensor<T: Scalar, R: Rng>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    ternary: bool,
    scheme: InitScheme,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let bound = match (ternary, scheme) {
        (true, InitScheme::Unit) => 1.0,
        _ => glorot_bound(fan_in, fan_out),
    };
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.gen_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data)
}

fn make_weights<T: Scalar>(w: Tensor<T>, ternary: bool, eta: f64, lambda: f64) -> Result<Weights<T>> {
    Ok(if ternary { Weights::Ternary(TernaryLayerState::new(w, eta, lambda)?) } else { Weights::Full(w) })
}
