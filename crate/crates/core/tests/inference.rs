mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stnn::codec::{self, CodecTag};
use stnn::engine::gradcheck::{grad_check, layer_probes};
use stnn::engine::ConvParams;
use stnn::infer::{sparse_conv_infer, sparse_conv_infer_binary, sparse_fc_infer_binary, sparse_forward};
use stnn::network::{BuildOptions, InitScheme, Network, NetworkSpec};
use stnn::prune::encode_network;
use stnn::Tensor;

use common::*;

#[test]
fn fc_binary_matches_integer_oracle_over_many_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..120 {
        let (batch, inp, out) = (rng.gen_range(1..6), rng.gen_range(1..90), rng.gen_range(1..40));
        let density = rng.gen_range(0.0..=1.0);
        let w = random_ternary(out * inp, density, &mut rng);
        let x = random_ternary(batch * inp, 0.9, &mut rng);
        let wt = Tensor::from_vec(&[out, inp], w.iter().map(|&v| f32::from(v)).collect()).unwrap();
        let blob = codec::encode(CodecTag::Hc, &wt).unwrap();
        let (y, macs) = sparse_fc_infer_binary(&Tensor::from_vec(&[batch, inp], x.clone()).unwrap(), &blob).unwrap();
        assert_eq!(y.data(), fc_ref_i32(&x, &w, batch, inp, out).as_slice());
        assert_eq!(macs.0, wt.count_nonzero() as u64 * batch as u64);
    }
}

#[test]
fn conv_matches_direct_reference_over_many_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for t in 0..120 {
        let s = ConvShape::random(&mut rng);
        let k = random_ternary(s.filters * s.channels * s.kernel * s.kernel, rng.gen_range(0.0..=1.0), &mut rng);
        let kt =
            Tensor::from_vec(&[s.filters, s.channels, s.kernel, s.kernel], k.iter().map(|&v| f32::from(v)).collect())
                .unwrap();
        let blob = codec::encode(if t % 2 == 0 { CodecTag::Rle } else { CodecTag::Hc }, &kt).unwrap();
        let shape = [s.batch, s.channels, s.height, s.width];
        let params = ConvParams { stride: s.stride, pad: s.pad };

        let xi = random_ternary(shape.iter().product(), 0.7, &mut rng);
        let (yi, _) = sparse_conv_infer_binary(&Tensor::from_vec(&shape, xi.clone()).unwrap(), &blob, params).unwrap();
        let (r, _) = conv_ref(&xi.iter().map(|&v| v as f64).collect::<Vec<_>>(), &k, s);
        assert_eq!(yi.data().iter().map(|&v| v as f64).collect::<Vec<_>>(), r, "{s:?}");

        let xf: Vec<f32> = (0..xi.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (yf, macs) =
            sparse_conv_infer(&Tensor::from_vec(&shape, xf.clone()).unwrap(), &blob, None, params).unwrap();
        let (r, scale) = conv_ref(&xf.iter().map(|&v| v as f64).collect::<Vec<_>>(), &k, s);
        let got: Vec<f64> = yf.data().iter().map(|&v| v as f64).collect();
        assert!(max_rel_err(&got, &r, &scale) < 1e-6, "{s:?}");
        assert_eq!(macs.0, kt.count_nonzero() as u64 * (s.batch * s.out_h() * s.out_w()) as u64);
    }
}

fn random_network(seed: u64, binary: bool) -> Network<f32> {
    let spec = NetworkSpec::mlp(&[1, 6, 6], &[24, 16], 5, binary, true);
    let opts = BuildOptions { init: InitScheme::Unit, thresholds: vec![0.6; 3], lambda: 0.0 };
    Network::new(spec, &opts, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn sparse_forward_equals_dense_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for seed in 0..20 {
        for binary in [true, false] {
            let net = random_network(seed, binary);
            let x = Tensor::from_vec(&[7, 1, 6, 6], (0..7 * 36).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            let dense = net.forward_infer(&x).unwrap();
            for tag in CodecTag::ALL {
                let blobs = encode_network(&net, tag).unwrap();
                let (sparse, stats) = sparse_forward(&net, &blobs, &x).unwrap();
                assert_eq!(sparse, dense, "seed {seed}, binary {binary}, {}", tag.name());
                let k: u64 = net.weight_layers().map(|w| w.canonical_effective().unwrap().count_nonzero() as u64).sum();
                assert_eq!(stats.macs.0, k * 7);
            }
        }
    }
}

#[test]
fn library_gradient_check_passes_on_every_probe_for_twenty_seeds() {
    for seed in 100..120 {
        for p in layer_probes(seed) {
            let report = grad_check(p.objective.as_ref(), &p.params, 1e-4).unwrap();
            let worst = report.max_rel_error().unwrap();
            assert!(worst < 1e-4, "{} seed {seed}: {worst:e}", p.name);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fc_binary_matches_oracle(
        batch in 1usize..5, inp in 1usize..40, out in 1usize..20, density in 0.0f64..=1.0, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_ternary(out * inp, density, &mut rng);
        let x = random_ternary(batch * inp, 0.8, &mut rng);
        let wt = Tensor::from_vec(&[out, inp], w.iter().map(|&v| f32::from(v)).collect()).unwrap();
        let want = fc_ref_i32(&x, &w, batch, inp, out);
        for tag in CodecTag::ALL {
            let blob = codec::encode(tag, &wt).unwrap();
            let (y, _) = sparse_fc_infer_binary(&Tensor::from_vec(&[batch, inp], x.clone()).unwrap(), &blob).unwrap();
            prop_assert_eq!(y.data(), want.as_slice());
        }
    }
}
