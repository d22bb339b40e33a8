//! Central-difference gradient checking in 64-bit arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{relu, relu_backward};
use super::conv::{conv2d_backward, conv2d_forward, ConvParams};
use super::dense::{fc_backward, fc_forward};
use super::loss::softmax_xent;
use super::norm::BatchNorm;
use crate::error::Result;
use crate::tensor::Tensor;
use crate::ternary::quantize;

pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

/// Absolute floor on the relative-error denominator, so that gradients that
/// are zero up to round-off are not reported as relative failures.
const DENOMINATOR_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamBlock {
    pub fn new(name: &str, shape: &[usize], values: Vec<f64>) -> Self {
        ParamBlock { name: name.to_string(), shape: shape.to_vec(), values }
    }

    fn random(name: &str, shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Self {
        let n = shape.iter().product();
        ParamBlock::new(name, shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect())
    }

    pub fn tensor(&self) -> Result<Tensor<f64>> {
        Tensor::from_vec(&self.shape, self.values.clone())
    }
}

/// A scalar function of several parameter blocks with an analytic gradient.
pub trait Objective {
    fn loss(&self, params: &[ParamBlock]) -> Result<f64>;

    fn gradient(&self, params: &[ParamBlock]) -> Result<Vec<Vec<f64>>>;

    /// False when the function contains a hard quantizer or another step
    /// function, for which finite differences are meaningless.
    fn is_smooth(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GradCheckReport {
    Checked { tolerance: f64, blocks: Vec<BlockCheck> },
    NotCheckable { reason: String },
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        match self {
            GradCheckReport::Checked { blocks, .. } => blocks.iter().all(|b| b.passed),
            GradCheckReport::NotCheckable { .. } => false,
        }
    }

    pub fn max_rel_error(&self) -> Option<f64> {
        match self {
            GradCheckReport::Checked { blocks, .. } => Some(blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)),
            GradCheckReport::NotCheckable { .. } => None,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

/// Compares the analytic gradient with central differences (step `1e-5`) and
/// reports the maximum relative error per parameter block.
pub fn grad_check<F: Objective + ?Sized>(f: &F, params: &[ParamBlock], tolerance: f64) -> Result<GradCheckReport> {
    if !f.is_smooth() {
        return Ok(GradCheckReport::NotCheckable { reason: "function contains a hard quantizer".to_string() });
    }
    let analytic = f.gradient(params)?;
    let mut work = params.to_vec();
    let mut blocks = Vec::with_capacity(params.len());
    for (bi, block) in params.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..block.values.len() {
            let orig = block.values[i];
            work[bi].values[i] = orig + FINITE_DIFFERENCE_STEP;
            let plus = f.loss(&work)?;
            work[bi].values[i] = orig - FINITE_DIFFERENCE_STEP;
            let minus = f.loss(&work)?;
            work[bi].values[i] = orig;
            let numeric = (plus - minus) / (2.0 * FINITE_DIFFERENCE_STEP);
            worst = worst.max(relative_error(analytic[bi][i], numeric));
        }
        blocks.push(BlockCheck { name: block.name.clone(), max_rel_error: worst, passed: worst < tolerance });
    }
    Ok(GradCheckReport::Checked { tolerance, blocks })
}

/// `sum(readout * layer(x))`: turns a vector-valued layer into a scalar
/// objective with a non-degenerate gradient.
fn readout_loss(y: &Tensor<f64>, readout: &[f64]) -> f64 {
    y.data().iter().zip(readout).map(|(a, b)| a * b).sum()
}

pub struct FcObjective {
    pub readout: Vec<f64>,
}

impl Objective for FcObjective {
    fn loss(&self, p: &[ParamBlock]) -> Result<f64> {
        let y = fc_forward(&p[0].tensor()?, &p[1].tensor()?, Some(&p[2].tensor()?))?;
        Ok(readout_loss(&y, &self.readout))
    }

    fn gradient(&self, p: &[ParamBlock]) -> Result<Vec<Vec<f64>>> {
        let (x, w) = (p[0].tensor()?, p[1].tensor()?);
        let gy = Tensor::from_vec(&[x.rows(), w.shape()[1]], self.readout.clone())?;
        let g = fc_backward(&x, &w, &gy, true)?;
        Ok(vec![g.input.expect("requested").into_vec(), g.weight.into_vec(), g.bias.into_vec()])
    }
}

pub struct ConvObjective {
    pub params: ConvParams,
    pub readout: Vec<f64>,
}

impl Objective for ConvObjective {
    fn loss(&self, p: &[ParamBlock]) -> Result<f64> {
        let y = conv2d_forward(&p[0].tensor()?, &p[1].tensor()?, Some(&p[2].tensor()?), self.params)?;
        Ok(readout_loss(&y, &self.readout))
    }

    fn gradient(&self, p: &[ParamBlock]) -> Result<Vec<Vec<f64>>> {
        let (x, k) = (p[0].tensor()?, p[1].tensor()?);
        let y = conv2d_forward(&x, &k, None, self.params)?;
        let gy = Tensor::from_vec(y.shape(), self.readout.clone())?;
        let g = conv2d_backward(&x, &k, &gy, self.params, true)?;
        Ok(vec![g.input.expect("requested").into_vec(), g.kernel.into_vec(), g.bias.into_vec()])
    }
}

/// Training-mode batch norm; parameter blocks are `[x, gamma, beta]`.
pub struct BatchNormObjective {
    pub readout: Vec<f64>,
}

impl BatchNormObjective {
    fn layer(p: &[ParamBlock]) -> Result<BatchNorm<f64>> {
        let mut bn = BatchNorm::new(p[1].values.len())?;
        bn.gamma = p[1].tensor()?;
        bn.beta = p[2].tensor()?;
        Ok(bn)
    }
}

impl Objective for BatchNormObjective {
    fn loss(&self, p: &[ParamBlock]) -> Result<f64> {
        let (y, _) = Self::layer(p)?.forward_train(&p[0].tensor()?)?;
        Ok(readout_loss(&y, &self.readout))
    }

    fn gradient(&self, p: &[ParamBlock]) -> Result<Vec<Vec<f64>>> {
        let mut bn = Self::layer(p)?;
        let x = p[0].tensor()?;
        let (_, cache) = bn.forward_train(&x)?;
        let gy = Tensor::from_vec(x.shape(), self.readout.clone())?;
        let g = bn.backward(&cache, &gy)?;
        Ok(vec![g.input.into_vec(), g.gamma.into_vec(), g.beta.into_vec()])
    }
}

pub struct ReluObjective {
    pub readout: Vec<f64>,
}

impl Objective for ReluObjective {
    fn loss(&self, p: &[ParamBlock]) -> Result<f64> {
        Ok(readout_loss(&relu(&p[0].tensor()?), &self.readout))
    }

    fn gradient(&self, p: &[ParamBlock]) -> Result<Vec<Vec<f64>>> {
        let x = p[0].tensor()?;
        let gy = Tensor::from_vec(x.shape(), self.readout.clone())?;
        Ok(vec![relu_backward(&x, &gy)?.into_vec()])
    }
}

pub struct SoftmaxXentObjective {
    pub labels: Vec<usize>,
}

impl Objective for SoftmaxXentObjective {
    fn loss(&self, p: &[ParamBlock]) -> Result<f64> {
        Ok(softmax_xent(&p[0].tensor()?, &self.labels)?.0)
    }

    fn gradient(&self, p: &[ParamBlock]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![softmax_xent(&p[0].tensor()?, &self.labels)?.1.into_vec()])
    }
}

/// `softmax_xent(relu(x W1 + b1) W2 + b2)`; blocks `[x, W1, b1, W2, b2]`.
pub struct MlpObjective {
    pub labels: Vec<usize>,
}

impl Objective for MlpObjective {
    fn loss(&self, p: &[ParamBlock]) -> Result<f64> {
        let h = fc_forward(&p[0].tensor()?, &p[1].tensor()?, Some(&p[2].tensor()?))?;
        let y = fc_forward(&relu(&h), &p[3].tensor()?, Some(&p[4].tensor()?))?;
        Ok(softmax_xent(&y, &self.labels)?.0)
    }

    fn gradient(&self, p: &[ParamBlock]) -> Result<Vec<Vec<f64>>> {
        let (x, w1, w2) = (p[0].tensor()?, p[1].tensor()?, p[3].tensor()?);
        let h = fc_forward(&x, &w1, Some(&p[2].tensor()?))?;
        let a = relu(&h);
        let y = fc_forward(&a, &w2, Some(&p[4].tensor()?))?;
        let (_, gy) = softmax_xent(&y, &self.labels)?;
        let g2 = fc_backward(&a, &w2, &gy, true)?;
        let gh = relu_backward(&h, &g2.input.expect("requested"))?;
        let g1 = fc_backward(&x, &w1, &gh, true)?;
        Ok(vec![
            g1.input.expect("requested").into_vec(),
            g1.weight.into_vec(),
            g1.bias.into_vec(),
            g2.weight.into_vec(),
            g2.bias.into_vec(),
        ])
    }
}

/// A fully-connected layer applied with ternary-quantized weights.
pub struct QuantizedFcObjective {
    pub eta: f64,
    pub readout: Vec<f64>,
}

impl Objective for QuantizedFcObjective {
    fn loss(&self, p: &[ParamBlock]) -> Result<f64> {
        let wq = quantize(&p[1].tensor()?, self.eta)?;
        Ok(readout_loss(&fc_forward(&p[0].tensor()?, &wq, None)?, &self.readout))
    }

    fn gradient(&self, p: &[ParamBlock]) -> Result<Vec<Vec<f64>>> {
        let (x, w) = (p[0].tensor()?, p[1].tensor()?);
        let gy = Tensor::from_vec(&[x.rows(), w.shape()[1]], self.readout.clone())?;
        let g = fc_backward(&x, &quantize(&w, self.eta)?, &gy, true)?;
        Ok(vec![g.input.expect("requested").into_vec(), g.weight.into_vec()])
    }

    fn is_smooth(&self) -> bool {
        false
    }
}

pub struct Probe {
    pub name: &'static str,
    pub objective: Box<dyn Objective>,
    pub params: Vec<ParamBlock>,
}

fn readout(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// One randomly shaped probe per differentiable layer kind, plus a
/// two-layer ReLU MLP.
pub fn layer_probes(seed: u64) -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::new();

    let (batch, inp, out) = (rng.gen_range(1..5), rng.gen_range(1..9), rng.gen_range(1..7));
    probes.push(Probe {
        name: "fully-connected",
        objective: Box::new(FcObjective { readout: readout(batch * out, &mut rng) }),
        params: vec![
            ParamBlock::random("x", &[batch, inp], &mut rng, 1.0),
            ParamBlock::random("W", &[inp, out], &mut rng, 1.0),
            ParamBlock::random("b", &[out], &mut rng, 1.0),
        ],
    });

    let kernel = rng.gen_range(1..4);
    let mut pad = rng.gen_range(0..kernel);
    let stride = rng.gen_range(1..3);
    let (c, f, b) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..3));
    // input size chosen so the output extent is integral
    let out_hw = rng.gen_range(1..4);
    let span = (out_hw - 1) * stride + kernel;
    if span <= 2 * pad {
        pad = 0;
    }
    let hw = span - 2 * pad;
    let params = ConvParams { stride, pad };
    let y_len = b * f * out_hw * out_hw;
    probes.push(Probe {
        name: "conv2d",
        objective: Box::new(ConvObjective { params, readout: readout(y_len, &mut rng) }),
        params: vec![
            ParamBlock::random("x", &[b, c, hw, hw], &mut rng, 1.0),
            ParamBlock::random("K", &[f, c, kernel, kernel], &mut rng, 1.0),
            ParamBlock::random("bias", &[f], &mut rng, 1.0),
        ],
    });

    let (batch, feats) = (rng.gen_range(2..7), rng.gen_range(1..5));
    probes.push(Probe {
        name: "batch-norm",
        objective: Box::new(BatchNormObjective { readout: readout(batch * feats, &mut rng) }),
        params: vec![
            ParamBlock::random("x", &[batch, feats], &mut rng, 2.0),
            ParamBlock::random("gamma", &[feats], &mut rng, 1.5),
            ParamBlock::random("beta", &[feats], &mut rng, 1.0),
        ],
    });

    let (batch, ch, hw) = (rng.gen_range(2..4), rng.gen_range(1..4), rng.gen_range(1..4));
    probes.push(Probe {
        name: "batch-norm-spatial",
        objective: Box::new(BatchNormObjective { readout: readout(batch * ch * hw * hw, &mut rng) }),
        params: vec![
            ParamBlock::random("x", &[batch, ch, hw, hw], &mut rng, 2.0),
            ParamBlock::random("gamma", &[ch], &mut rng, 1.5),
            ParamBlock::random("beta", &[ch], &mut rng, 1.0),
        ],
    });

    let n = rng.gen_range(1..20);
    let x: Vec<f64> = (0..n)
        .map(|_| {
            // keep inputs away from the kink so the step never crosses it
            let v: f64 = rng.gen_range(0.01..2.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    probes.push(Probe {
        name: "relu",
        objective: Box::new(ReluObjective { readout: readout(n, &mut rng) }),
        params: vec![ParamBlock::new("x", &[1, n], x)],
    });

    let (batch, k) = (rng.gen_range(1..6), rng.gen_range(2..11));
    let labels = (0..batch).map(|_| rng.gen_range(0..k)).collect();
    probes.push(Probe {
        name: "softmax-xent",
        objective: Box::new(SoftmaxXentObjective { labels }),
        params: vec![ParamBlock::random("logits", &[batch, k], &mut rng, 3.0)],
    });

    let (batch, inp, hidden, k) = (rng.gen_range(1..5), rng.gen_range(2..8), rng.gen_range(2..8), rng.gen_range(2..5));
    let labels = (0..batch).map(|_| rng.gen_range(0..k)).collect();
    probes.push(Probe {
        name: "mlp-relu",
        objective: Box::new(MlpObjective { labels }),
        params: vec![
            ParamBlock::random("x", &[batch, inp], &mut rng, 1.0),
            ParamBlock::random("W1", &[inp, hidden], &mut rng, 1.0),
            ParamBlock::random("b1", &[hidden], &mut rng, 1.0),
            ParamBlock::random("W2", &[hidden, k], &mut rng, 1.0),
            ParamBlock::random("b2", &[k], &mut rng, 1.0),
        ],
    });

    probes
}
