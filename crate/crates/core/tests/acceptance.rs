//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release -p stnn-core --test acceptance`;
//! pass criterion numbers as arguments to run a subset.
//!
//! Criteria 7 and 8 need the MNIST IDX files in `$STNN_MNIST_DIR` or
//! `data/mnist` at the workspace root; they fail when the files are absent.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stnn::codec::{self, dense_size_bytes, stw1, CodecTag, BYTES_PER_MB};
use stnn::cost::{peak_throughput, sweep_curves, CostScenario, MacType, Reuse, ScenarioFile, SweepGrid, Throughput};
use stnn::data::{load_mnist, SplitOptions, Splits};
use stnn::engine::gradcheck::{layer_probes, Objective, ParamBlock, FINITE_DIFFERENCE_STEP};
use stnn::engine::{softmax_xent, ConvParams, Sgd};
use stnn::infer::{
    dense_ternary_infer, dense_ternary_infer_binary, sparse_conv_infer, sparse_conv_infer_binary, sparse_fc_infer,
    sparse_fc_infer_binary, sparse_forward,
};
use stnn::network::{BuildOptions, InitScheme, Layer, LayerGrads, LayerSpec, Network, NetworkSpec, Weights};
use stnn::prune::{
    apply_mask, compute_mask, run_pipeline, sparsity_report, PipelineData, PipelineEvent, PruneConfig, Stage,
};
use stnn::report::{emit_report, RunManifest};
use stnn::ternary::quantize;
use stnn::train::{train, LrSchedule, ThresholdConfig, TrainConfig, TrainData};
use stnn::Tensor;

use common::*;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1 ---------------------------------------------------------------------

fn quantization_pruning_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let etas = [0.5, 0.7, 0.9];
    let mut elements = 0usize;
    for t in 0..10_000 {
        let n = rng.gen_range(1..=2048);
        let v: Vec<f32> = (0..n)
            .map(|_| match rng.gen_range(0..20) {
                // thresholds and their f32 neighbours
                0 => {
                    let e = etas[rng.gen_range(0..3)] as f32;
                    let e = match rng.gen_range(0..3) {
                        0 => e,
                        1 => f32::from_bits(e.to_bits() + 1),
                        _ => f32::from_bits(e.to_bits() - 1),
                    };
                    if rng.gen_bool(0.5) {
                        e
                    } else {
                        -e
                    }
                }
                1 => 0.0,
                _ => rng.gen_range(-1.0f32..=1.0),
            })
            .collect();
        elements += n;
        let w = Tensor::from_vec(&[n], v).map_err(e2s)?;
        for &eta in &etas {
            let mask = compute_mask(&w, eta, eta).map_err(e2s)?;
            let masked = apply_mask(&w, &mask).map_err(e2s)?;
            let a = quantize(&masked, eta).map_err(e2s)?;
            let b = quantize(&w, eta).map_err(e2s)?;
            ensure(a == b, || format!("tensor {t}, eta {eta}: quantize(w_r * w_m) != quantize(w_r)"))?;
            for (i, (&q, &x)) in b.data().iter().zip(w.data()).enumerate() {
                ensure(q as f64 == quantize_ref(x as f64, eta), || {
                    format!("tensor {t}, eta {eta}, index {i}: quantize({x}) = {q}")
                })?;
            }
        }
    }
    Ok(format!("10000 tensors, {elements} weights, eta = sigma in {{0.5, 0.7, 0.9}}: identical"))
}

// 2 ---------------------------------------------------------------------

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn codec_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut total, mut min_n, mut max_n) = (0usize, usize::MAX, 0usize);
    for t in 0..10_000 {
        let n = match t {
            0 => 1,
            1 => 1_000_000,
            _ => (10f64.powf(rng.gen_range(0.0..=6.0))).round() as usize,
        };
        let density = match t % 20 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..=1.0),
        };
        let v: Vec<f32> = random_ternary(n, density, &mut rng).into_iter().map(f32::from).collect();
        let x = Tensor::from_vec(&[n], v).map_err(e2s)?;
        for tag in CodecTag::ALL {
            let blob = codec::encode(tag, &x).map_err(e2s)?;
            let bytes = stw1::write(std::slice::from_ref(&blob)).map_err(e2s)?;
            let back = stw1::read(&bytes).map_err(e2s)?;
            let y: Tensor<f32> = codec::decode(&back[0]).map_err(e2s)?;
            ensure(y == x, || {
                format!("tensor {t} (n = {n}, density {density:.3}): {} round trip differs", tag.name())
            })?;
        }
        total += n;
        min_n = min_n.min(n);
        max_n = max_n.max(n);
    }

    let t = |shape: &[usize], v: &[f32]| Tensor::from_vec(shape, v.to_vec()).unwrap();
    let a = t(&[5], &[0.0, 0.0, 1.0, 0.0, -1.0]);
    let b = t(&[2, 3], &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0]);
    let z = t(&[3], &[0.0; 3]);
    let enc = |tag, x: &Tensor<f32>| codec::encode(tag, x).unwrap();
    let goldens = [
        ("rle_single.stw1", vec![enc(CodecTag::Rle, &a)]),
        ("hc_single.stw1", vec![enc(CodecTag::Hc, &a)]),
        (
            "mixed.stw1",
            vec![enc(CodecTag::Rle, &b), enc(CodecTag::Hc, &b), enc(CodecTag::Rle, &z), enc(CodecTag::Hc, &z)],
        ),
    ];
    for (name, blobs) in &goldens {
        let want = std::fs::read(golden_dir().join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(stw1::write(blobs).map_err(e2s)? == want, || format!("{name}: encoder bytes differ from golden file"))?;
        ensure(stw1::read(&want).map_err(e2s)? == *blobs, || format!("{name}: parsed golden file differs"))?;
    }
    Ok(format!(
        "10000 tensors x 2 codecs, lengths {min_n}..{max_n}, {total} weights; {} golden files byte-identical",
        goldens.len()
    ))
}

// 3 ---------------------------------------------------------------------

fn peak_constants() -> Check {
    let s = CostScenario::default();
    let t1 = peak_throughput(&s, MacType::Type1).map_err(e2s)?;
    let t2 = peak_throughput(&s, MacType::Type2).map_err(e2s)?;
    let r1 = (t1 - 46.4e12).abs() / 46.4e12;
    let r2 = (t2 - 1.38e12).abs() / 1.38e12;
    let r2p = (t2 - 1.3e12).abs() / 1.3e12;
    ensure(r1 <= 0.01, || format!("type 1 peak {:.4} TOPs is {:.2}% from 46.4", t1 / 1e12, r1 * 100.0))?;
    ensure(r2 <= 0.01, || format!("type 2 peak {:.4} TOPs is {:.2}% from 1.38", t2 / 1e12, r2 * 100.0))?;
    ensure(r2p <= 0.10, || format!("type 2 peak {:.4} TOPs is {:.2}% from printed 1.3", t2 / 1e12, r2p * 100.0))?;
    Ok(format!(
        "type 1 {:.4} TOPs ({:.3}% from 46.4), type 2 {:.4} TOPs ({:.2}% from printed 1.3)",
        t1 / 1e12,
        r1 * 100.0,
        t2 / 1e12,
        r2p * 100.0
    ))
}

// 4 ---------------------------------------------------------------------

fn dense_size_rows() -> Check {
    let rows = [
        (36.4e6, 1, 4.56),
        (36.4e6, 2, 9.12),
        (2.91e6, 1, 0.36),
        (2.91e6, 2, 0.72),
        (14.02e6, 1, 1.76),
        (14.02e6, 2, 3.52),
    ];
    let mut parts = Vec::new();
    let mut failed = Vec::new();
    for (params, bits, printed) in rows {
        let mb = dense_size_bytes(params as u64, bits) as f64 / BYTES_PER_MB;
        let rel = (mb - printed).abs() / printed;
        let row = format!("({}M, {bits}b) {mb:.5} vs {printed} ({:.2}%)", params / 1e6, rel * 100.0);
        if rel > 0.01 {
            failed.push(row.clone());
        }
        parts.push(row);
    }
    if failed.is_empty() {
        Ok(parts.join("; "))
    } else {
        Err(format!("outside 1%: {}", failed.join("; ")))
    }
}

// 5 ---------------------------------------------------------------------

/// Central differences against the analytic gradient, in f64.
fn check_objective(f: &dyn Objective, params: &[ParamBlock]) -> Result<f64, String> {
    let analytic = f.gradient(params).map_err(e2s)?;
    let mut work = params.to_vec();
    let h = FINITE_DIFFERENCE_STEP;
    let mut worst = 0.0f64;
    for bi in 0..params.len() {
        for i in 0..params[bi].values.len() {
            let orig = params[bi].values[i];
            work[bi].values[i] = orig + h;
            let plus = f.loss(&work).map_err(e2s)?;
            work[bi].values[i] = orig - h;
            let minus = f.loss(&work).map_err(e2s)?;
            work[bi].values[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[bi][i];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7));
        }
    }
    Ok(worst)
}

/// Mutable views of every trainable tensor, in layer order.
fn params_mut(net: &mut Network<f64>) -> Vec<&mut Tensor<f64>> {
    let mut out = Vec::new();
    for layer in net.layers.iter_mut() {
        match layer {
            Layer::Weight(w) => {
                if let Weights::Full(t) = &mut w.weights {
                    out.push(t);
                }
                if let Some(b) = &mut w.bias {
                    out.push(b);
                }
            }
            Layer::BatchNorm(bn) => {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
            _ => {}
        }
    }
    out
}

fn network_loss(net: &Network<f64>, x: &Tensor<f64>, y: &[usize]) -> Result<f64, String> {
    let mut n = net.clone();
    let (logits, _) = n.forward_train(x).map_err(e2s)?;
    Ok(softmax_xent(&logits, y).map_err(e2s)?.0)
}

/// Whole-network check: conv, spatial batch norm, ReLU, FC, softmax. Nothing
/// upstream of a second batch norm, where shifts have exactly zero gradient.
fn check_network(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let spec = NetworkSpec {
        input: vec![2, 4, 4],
        classes: 3,
        layers: vec![
            LayerSpec::Conv { filters: 3, kernel: 3, stride: 1, pad: 1, bias: false, ternary: false },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::Fc { out: 5, bias: true, ternary: false },
            LayerSpec::Relu,
            LayerSpec::Fc { out: 3, bias: true, ternary: false },
            LayerSpec::SoftmaxXent,
        ],
    };
    let opts = BuildOptions { init: InitScheme::Unit, thresholds: vec![0.5; 3], lambda: 0.0 };
    let mut net: Network<f64> = Network::new(spec, &opts, &mut rng).map_err(e2s)?;
    for p in params_mut(&mut net) {
        for v in p.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let batch = 4;
    let x = Tensor::from_vec(&[batch, 2, 4, 4], (0..batch * 32).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .map_err(e2s)?;
    let y: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..3)).collect();

    let mut probe = net.clone();
    let (logits, cache) = probe.forward_train(&x).map_err(e2s)?;
    let (_, grad_logits) = softmax_xent(&logits, &y).map_err(e2s)?;
    let grads = probe.backward(&cache, grad_logits).map_err(e2s)?;
    let mut analytic: Vec<Vec<f64>> = Vec::new();
    for g in grads {
        match g {
            LayerGrads::Weight { weights, bias } => {
                analytic.push(weights.into_vec());
                if let Some(b) = bias {
                    analytic.push(b.into_vec());
                }
            }
            LayerGrads::BatchNorm { gamma, beta } => {
                analytic.push(gamma.into_vec());
                analytic.push(beta.into_vec());
            }
            LayerGrads::None => {}
        }
    }

    let h = FINITE_DIFFERENCE_STEP;
    let mut worst = 0.0f64;
    let count = params_mut(&mut net).len();
    if count != analytic.len() {
        return Err(format!("{count} parameter tensors but {} gradients", analytic.len()));
    }
    for pi in 0..count {
        let len = params_mut(&mut net)[pi].len();
        for i in 0..len {
            let orig = params_mut(&mut net)[pi].data()[i];
            params_mut(&mut net)[pi].data_mut()[i] = orig + h;
            let plus = network_loss(&net, &x, &y)?;
            params_mut(&mut net)[pi].data_mut()[i] = orig - h;
            let minus = network_loss(&net, &x, &y)?;
            params_mut(&mut net)[pi].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][i];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7));
        }
    }
    Ok(worst)
}

fn gradient_checks() -> Check {
    let seeds = 24u64;
    let mut worst = 0.0f64;
    let mut kinds = std::collections::BTreeSet::new();
    for seed in 0..seeds {
        for p in layer_probes(seed) {
            let e = check_objective(p.objective.as_ref(), &p.params)?;
            ensure(e < 1e-4, || format!("{} seed {seed}: relative error {e:.3e}", p.name))?;
            worst = worst.max(e);
            kinds.insert(p.name);
        }
        let e = check_network(seed)?;
        ensure(e < 1e-4, || format!("network seed {seed}: relative error {e:.3e}"))?;
        worst = worst.max(e);
    }
    kinds.insert("network");
    Ok(format!(
        "{} checks x {seeds} seeds ({}), worst relative error {worst:.2e}",
        kinds.len(),
        kinds.into_iter().collect::<Vec<_>>().join(", ")
    ))
}

// 6 ---------------------------------------------------------------------

fn sparse_dense_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut fc_layers, mut conv_layers) = (0, 0);
    let mut worst_rel = 0.0f64;
    for t in 0..150 {
        let density = rng.gen_range(0.0..=1.0);
        let tag = if t % 2 == 0 { CodecTag::Rle } else { CodecTag::Hc };

        // FC: weights canonical [out, in]
        let (batch, inp, out) = (rng.gen_range(1..9), rng.gen_range(1..200), rng.gen_range(1..60));
        let w = random_ternary(out * inp, density, &mut rng);
        let wt = Tensor::from_vec(&[out, inp], w.iter().map(|&v| f32::from(v)).collect()).map_err(e2s)?;
        let blob = codec::encode(tag, &wt).map_err(e2s)?;
        let k = wt.count_nonzero() as u64;

        let xi = random_ternary(batch * inp, 0.8, &mut rng);
        let x8 = Tensor::from_vec(&[batch, inp], xi.clone()).map_err(e2s)?;
        let (ys, macs) = sparse_fc_infer_binary(&x8, &blob).map_err(e2s)?;
        ensure(ys.data() == fc_ref_i32(&xi, &w, batch, inp, out).as_slice(), || {
            format!("fc {t}: integer path differs")
        })?;
        let w8 = Tensor::from_vec(&[out, inp], w.clone()).map_err(e2s)?;
        ensure(dense_ternary_infer_binary(&x8, &w8).map_err(e2s)?.0 == ys, || {
            format!("fc {t}: dense integer differs")
        })?;
        ensure(macs.0 == k * batch as u64, || format!("fc {t}: {} MACs, expected k*R = {}", macs.0, k * batch as u64))?;

        let xf: Vec<f32> = (0..batch * inp).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let xt = Tensor::from_vec(&[batch, inp], xf.clone()).map_err(e2s)?;
        let (yf, macs) = sparse_fc_infer(&xt, &blob, None).map_err(e2s)?;
        let (r, s) = fc_ref_f64(&xf, &w, batch, inp, out);
        let yd: Vec<f64> = yf.data().iter().map(|&v| v as f64).collect();
        let rel = max_rel_err(&yd, &r, &s);
        ensure(rel < 1e-5, || format!("fc {t}: float path relative error {rel:.3e}"))?;
        ensure(dense_ternary_infer(&xt, &wt, None).map_err(e2s)?.0 == yf, || format!("fc {t}: dense float differs"))?;
        ensure(macs.0 == k * batch as u64, || format!("fc {t}: float MAC count {}", macs.0))?;
        worst_rel = worst_rel.max(rel);
        fc_layers += 1;

        // Conv: kernel [F, C, kh, kw]
        let s = ConvShape::random(&mut rng);
        let kn = s.filters * s.channels * s.kernel * s.kernel;
        let kw = random_ternary(kn, density, &mut rng);
        let kt =
            Tensor::from_vec(&[s.filters, s.channels, s.kernel, s.kernel], kw.iter().map(|&v| f32::from(v)).collect())
                .map_err(e2s)?;
        let blob = codec::encode(tag, &kt).map_err(e2s)?;
        let k = kt.count_nonzero() as u64;
        let r_factor = (s.batch * s.out_h() * s.out_w()) as u64;
        let params = ConvParams { stride: s.stride, pad: s.pad };
        let xn = s.batch * s.channels * s.height * s.width;
        let xshape = [s.batch, s.channels, s.height, s.width];

        let xi = random_ternary(xn, 0.8, &mut rng);
        let x8 = Tensor::from_vec(&xshape, xi.clone()).map_err(e2s)?;
        let (ys, macs) = sparse_conv_infer_binary(&x8, &blob, params).map_err(e2s)?;
        let (r, _) = conv_ref(&xi.iter().map(|&v| v as f64).collect::<Vec<_>>(), &kw, s);
        let exact: Vec<i32> = r.iter().map(|&v| v as i32).collect();
        ensure(ys.data() == exact.as_slice(), || format!("conv {t} {s:?}: integer path differs"))?;
        ensure(macs.0 == k * r_factor, || format!("conv {t}: {} MACs, expected k*R = {}", macs.0, k * r_factor))?;

        let xf: Vec<f32> = (0..xn).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let xt = Tensor::from_vec(&xshape, xf.clone()).map_err(e2s)?;
        let (yf, macs) = sparse_conv_infer(&xt, &blob, None, params).map_err(e2s)?;
        let (r, sc) = conv_ref(&xf.iter().map(|&v| v as f64).collect::<Vec<_>>(), &kw, s);
        let yd: Vec<f64> = yf.data().iter().map(|&v| v as f64).collect();
        let rel = max_rel_err(&yd, &r, &sc);
        ensure(rel < 1e-5, || format!("conv {t} {s:?}: float relative error {rel:.3e}"))?;
        ensure(macs.0 == k * r_factor, || format!("conv {t}: float MAC count {}", macs.0))?;
        worst_rel = worst_rel.max(rel);
        conv_layers += 1;
    }
    Ok(format!(
        "{fc_layers} FC + {conv_layers} conv layers: integer paths bit-exact, float worst relative error {worst_rel:.2e}, MACs = k*R"
    ))
}

// 7, 8 ------------------------------------------------------------------

fn mnist_dir() -> PathBuf {
    std::env::var_os("STNN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn load(opts: &SplitOptions) -> Result<Splits, String> {
    let dir = mnist_dir();
    load_mnist(&dir, opts).map_err(|e| format!("MNIST not available at {} ({e})", dir.display()))
}

fn ternary_config(eta: f64, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        network: NetworkSpec::mlp(&[1, 28, 28], &[256, 256, 256], 10, true, true),
        thresholds: ThresholdConfig::uniform(eta),
        lambda: 1e-6,
        optimizer: Sgd { learning_rate: 0.2, momentum: 0.9 },
        schedule: LrSchedule::Exponential { gamma: 0.9 },
        epochs,
        batch_size: 100,
        seed,
        init: InitScheme::Unit,
    }
}

fn train_data(s: &Splits) -> TrainData<'_> {
    TrainData {
        train_x: &s.train.images,
        train_y: &s.train.labels,
        val_x: &s.validation.images,
        val_y: &s.validation.labels,
    }
}

fn mnist_trend() -> Check {
    let splits = load(&SplitOptions::MNIST)?;
    let (train_epochs, retrain_epochs) = (20, 5);
    let cfg = ternary_config(0.9, train_epochs, 1);
    let prune = PruneConfig::new(retrain_epochs);
    let data = PipelineData { train: train_data(&splits), test: Some((&splits.test.images, &splits.test.labels)) };
    let arts = run_pipeline(&cfg, &prune, &data, &mut |ev| match ev {
        PipelineEvent::Epoch { stage, record, .. } => {
            eprintln!("  [7] {} epoch {:>2} val {:.4}", stage.name(), record.epoch, record.val_error)
        }
        PipelineEvent::StageDone(r) => eprintln!(
            "  [7] {} done: val {:.4} test {:.4} zeros {:.4}",
            r.stage.name(),
            r.val_error,
            r.test_error.unwrap_or(f64::NAN),
            r.sparsity.zero_fraction()
        ),
    })
    .map_err(e2s)?;
    let trained = arts.report(Stage::Train).next().ok_or("no train report")?;
    let pruned = arts.report(Stage::Prune).next().ok_or("no prune report")?;
    let retrained = arts.report(Stage::Retrain).last().ok_or("no retrain report")?;
    let pre = trained.test_error.ok_or("no test error")?;
    let post = retrained.test_error.ok_or("no test error")?;
    let zeros = trained.sparsity.zero_fraction();

    let sparse_check = {
        let x = splits.test.images.slice_rows(0, 1000).map_err(e2s)?;
        let (sparse, _) = sparse_forward(&arts.model, &arts.rle, &x).map_err(e2s)?;
        sparse == arts.model.forward_infer(&x).map_err(e2s)?
    };

    let dense_epochs = 10;
    let mut dense_cfg = ternary_config(0.5, dense_epochs, 1);
    dense_cfg.network = NetworkSpec::mlp(&[1, 28, 28], &[256, 256, 256], 10, false, false);
    dense_cfg.optimizer = Sgd { learning_rate: 0.05, momentum: 0.9 };
    let dense = train(&dense_cfg, &train_data(&splits)).map_err(e2s)?;
    let dense_err = dense.model.error_rate(&splits.test.images, &splits.test.labels).map_err(e2s)?;
    eprintln!("  [7] dense baseline: best epoch {} test {:.4}", dense.best_epoch, dense_err);

    let summary = format!(
        "ternary test {:.2}% after {train_epochs} epochs, w_q zeros {:.1}%, prune test {:.2}%, retrain test {:.2}% \
         (+{retrain_epochs} epochs, delta {:+.2} pp), dense baseline {:.2}% in {dense_epochs} epochs",
        pre * 100.0,
        zeros * 100.0,
        pruned.test_error.unwrap_or(f64::NAN) * 100.0,
        post * 100.0,
        (post - pre) * 100.0,
        dense_err * 100.0
    );
    ensure(train_epochs + retrain_epochs <= 50, || format!("{summary}: over 50 epochs"))?;
    ensure(pre <= 0.08, || format!("{summary}: ternary error above 8%"))?;
    ensure(zeros >= 0.80, || format!("{summary}: fewer than 80% zeros"))?;
    ensure((post - pre).abs() <= 0.005, || format!("{summary}: retrained error not within 0.5 pp"))?;
    ensure(pruned.test_error == trained.test_error, || format!("{summary}: sigma = eta pruning changed the error"))?;
    ensure(sparse_check, || format!("{summary}: sparse inference differs from dense"))?;
    ensure(dense_err <= 0.03, || format!("{summary}: dense baseline above 3%"))?;
    Ok(summary)
}

fn threshold_trend() -> Check {
    let opts = SplitOptions { train_limit: Some(10_000), ..SplitOptions::MNIST };
    let splits = load(&opts)?;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut zeros = [0.0; 2];
        let mut val5 = [0.0; 2];
        for (j, eta) in [0.33, 0.9].into_iter().enumerate() {
            let cfg = ternary_config(eta, 5, seed);
            let init = cfg.build_network().map_err(e2s)?;
            zeros[j] = sparsity_report(&init).zero_fraction();
            let out = train(&cfg, &train_data(&splits)).map_err(e2s)?;
            val5[j] = out.history.get(4).ok_or("fewer than 5 epochs recorded")?.val_error;
        }
        let line = format!(
            "seed {seed}: zeros {:.3} vs {:.3}, epoch-5 val {:.2}% vs {:.2}%",
            zeros[1],
            zeros[0],
            val5[1] * 100.0,
            val5[0] * 100.0
        );
        eprintln!("  [8] {line} (eta 0.9 vs 0.33)");
        if !(zeros[1] > zeros[0] && val5[1] >= val5[0]) {
            failures.push(line.clone());
        }
        lines.push(line);
    }
    if failures.is_empty() {
        Ok(format!("eta 0.9 vs 0.33, 10k-example subset: {}", lines.join("; ")))
    } else {
        Err(format!("trend violated: {}", failures.join("; ")))
    }
}

// 9 ---------------------------------------------------------------------

fn sweep_properties() -> Check {
    let s = CostScenario::default();
    let mut reuse: Vec<Reuse> = (0..=20).map(|p| Reuse::Finite(1u64 << p)).collect();
    reuse.extend([3, 5, 7, 100, 1000, 12345].map(Reuse::Finite));
    reuse.sort();
    reuse.push(Reuse::Unbounded);
    let gammas: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let grid = SweepGrid { gammas: gammas.clone(), reuse: reuse.clone(), types: MacType::ALL.to_vec() };
    let file = ScenarioFile { scenario: s.clone(), sweep: grid.clone(), benchmarks: Vec::new() };
    let table = sweep_curves(&s, &grid, &file.benchmark_lines()).map_err(e2s)?;
    let te = |t: Throughput| t.ops_per_second();
    let (ng, nr) = (gammas.len(), reuse.len());
    for (ti, ty) in MacType::ALL.into_iter().enumerate() {
        let at = |g: usize, r: usize| &table.rows[(ti * ng + g) * nr + r];
        for g in 0..ng {
            for r in 0..nr {
                let row = at(g, r);
                ensure(row.mac_type == ty && row.gamma == gammas[g] && row.reuse == reuse[r], || "row order".into())?;
                if g + 1 < ng {
                    ensure(te(row.t_e) >= te(at(g + 1, r).t_e), || {
                        format!("{ty:?}: T_e increases in gamma at {row:?}")
                    })?;
                }
                if r + 1 < nr {
                    ensure(te(row.t_e) <= te(at(g, r + 1).t_e), || format!("{ty:?}: T_e decreases in R at {row:?}"))?;
                }
            }
        }
        let peak = peak_throughput(&s, ty).map_err(e2s)?;
        let corner = te(at(ng - 1, nr - 1).t_e);
        ensure(corner == peak, || format!("{ty:?}: T_e(1, inf) = {corner} but peak is {peak}"))?;
        let bench = table.benchmarks.iter().find(|b| b.mac_type == ty).ok_or("missing benchmark")?;
        ensure(te(bench.t_e) == peak, || format!("{ty:?}: benchmark line {} != peak {peak}", te(bench.t_e)))?;
    }

    let dir = std::env::temp_dir().join(format!("stnn-acceptance-{}", std::process::id()));
    let mut m = RunManifest::new("costmodel");
    m.scenario = Some(file);
    std::fs::create_dir_all(&dir).map_err(e2s)?;
    let manifest = m.save(&dir).map_err(e2s)?;
    let mut csvs = Vec::new();
    for sub in ["a", "b"] {
        let (loaded, base) = RunManifest::load(&manifest).map_err(e2s)?;
        emit_report(&loaded, &base, &dir.join(sub)).map_err(e2s)?;
        csvs.push(std::fs::read(dir.join(sub).join("te_curves.csv")).map_err(e2s)?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    ensure(csvs[0] == csvs[1], || "regenerated CSVs differ".into())?;
    ensure(csvs[0] == table.curves_csv().into_bytes(), || "regenerated CSV differs from the direct sweep".into())?;
    Ok(format!(
        "{} rows: nonincreasing in gamma, nondecreasing in R, T_e(1, inf) equals both peaks; CSV regenerated byte-identically",
        table.rows.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Check); 9] = [
        (1, "quantization-pruning equivalence", quantization_pruning_equivalence),
        (2, "codec round trip + golden STW1", codec_round_trip),
        (3, "peak-throughput constants", peak_constants),
        (4, "dense size rows within 1%", dense_size_rows),
        (5, "gradient checks", gradient_checks),
        (6, "sparse/dense inference equivalence", sparse_dense_equivalence),
        (7, "MNIST trend run", mnist_trend),
        (8, "threshold-sparsity trend", threshold_trend),
        (9, "cost-model sweep properties", sweep_properties),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let result = check();
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{id}] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all criteria passed");
        ExitCode::SUCCESS
    }
}
