use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

fn rand_tensor(rng: &mut ChaCha8Rng, batch: usize, features: usize) -> ComplexTensor {
    ComplexTensor::new(batch, features, (0..batch * features).map(|_| rand_c(rng)).collect()).unwrap()
}

/// `L = Σ Re(c* · y)`, whose steepest-descent gradient with respect to `y` is `c`.
fn probe_loss(net: &Network, x: &ComplexTensor, c: &ComplexTensor) -> f64 {
    let mut n = net.clone();
    let (y, _) = n.forward(x, Mode::Train).unwrap();
    y.data().iter().zip(c.data()).map(|(y, c)| (c.conj() * y).re).sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn check_gradients(specs: &[LayerSpec], features: usize, batch: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new(specs, features, &mut rng).unwrap();
    // move batch-norm affine away from identity so every term is exercised
    for layer in net.layers_mut() {
        if let LayerSpec::ComplexBatchNorm { channels } = *layer.spec() {
            for k in 0..channels {
                layer.params_mut()[k] = C64::new(0.8 + 0.1 * k as f64, 1.3);
                layer.params_mut()[channels + k] = C64::new(0.25, 0.0);
                layer.params_mut()[2 * channels + k] = C64::new(0.1, -0.2);
            }
        }
    }
    let x = rand_tensor(&mut rng, batch, features);
    let out_features = net.output_features(features).unwrap();
    let c = rand_tensor(&mut rng, batch, out_features);

    let mut trained = net.clone();
    let (_, tape) = trained.forward(&x, Mode::Train).unwrap();
    let gx = trained.backward(tape, &c).unwrap();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for li in 0..net.layers().len() {
        for pi in 0..net.layers()[li].params().len() {
            // the imaginary slot of a batch-norm off-diagonal entry is unused
            let skip_im = matches!(net.layers()[li].spec(), LayerSpec::ComplexBatchNorm { channels }
                if (*channels..2 * *channels).contains(&pi));
            for (part, unit) in [(0, C64::new(h, 0.0)), (1, C64::new(0.0, h))] {
                if part == 1 && skip_im {
                    continue;
                }
                let mut plus = net.clone();
                plus.layers_mut()[li].params_mut()[pi] += unit;
                let mut minus = net.clone();
                minus.layers_mut()[li].params_mut()[pi] -= unit;
                let fd = (probe_loss(&plus, &x, &c) - probe_loss(&minus, &x, &c)) / (2.0 * h);
                let g = trained.layers()[li].grads()[pi];
                let an = if part == 0 { g.re } else { g.im };
                worst = worst.max(rel_err(fd, an));
            }
        }
    }
    for i in 0..x.data().len() {
        for (part, unit) in [(0, C64::new(h, 0.0)), (1, C64::new(0.0, h))] {
            let mut xp = x.clone();
            xp.data_mut()[i] += unit;
            let mut xm = x.clone();
            xm.data_mut()[i] -= unit;
            let fd = (probe_loss(&net, &xp, &c) - probe_loss(&net, &xm, &c)) / (2.0 * h);
            let an = if part == 0 { gx.data()[i].re } else { gx.data()[i].im };
            worst = worst.max(rel_err(fd, an));
        }
    }
    assert!(worst < 1e-5, "worst relative gradient error {worst:e} for {specs:?}");
}

#[test]
fn gradient_dense() {
    check_gradients(
        &[LayerSpec::ComplexDense { inputs: 5, outputs: 4 }, LayerSpec::ComplexDense { inputs: 4, outputs: 3 }],
        5,
        3,
        1,
    );
}

#[test]
fn gradient_conv1d() {
    check_gradients(
        &[
            LayerSpec::ComplexConv1d { in_channels: 1, out_channels: 2, kernel: 3, stride: 2 },
            LayerSpec::ComplexConv1d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1 },
        ],
        8,
        2,
        2,
    );
}

#[test]
fn gradient_conv1d_transposed() {
    check_gradients(
        &[
            LayerSpec::ComplexConv1dTransposed { in_channels: 2, out_channels: 2, kernel: 3, stride: 2 },
            LayerSpec::ComplexConv1dTransposed { in_channels: 2, out_channels: 1, kernel: 5, stride: 1 },
        ],
        6,
        2,
        3,
    );
}

#[test]
fn gradient_batch_norm() {
    check_gradients(
        &[LayerSpec::ComplexBatchNorm { channels: 2 }, LayerSpec::ComplexDense { inputs: 6, outputs: 2 }],
        6,
        5,
        4,
    );
}

#[test]
fn gradient_crelu() {
    check_gradients(&[LayerSpec::ComplexDense { inputs: 4, outputs: 6 }, LayerSpec::Crelu], 4, 3, 5);
}

#[test]
fn gradient_encoder_like_stack() {
    check_gradients(
        &[
            LayerSpec::ComplexConv1d { in_channels: 1, out_channels: 2, kernel: 3, stride: 2 },
            LayerSpec::ComplexBatchNorm { channels: 2 },
            LayerSpec::Crelu,
            LayerSpec::ComplexConv1dTransposed { in_channels: 2, out_channels: 1, kernel: 3, stride: 2 },
        ],
        8,
        4,
        6,
    );
}

#[test]
fn squared_modulus_gradient() {
    // L = |θ|² at θ = 3 + 4i has steepest-descent gradient 2θ = 6 + 8i.
    let spec = LayerSpec::ComplexDense { inputs: 1, outputs: 1 };
    let mut net = Network::from_layers(vec![Layer::with_params(spec, vec![C64::new(3.0, 4.0), C64::new(0.0, 0.0)]).unwrap()]);
    let x = ComplexTensor::new(1, 1, vec![C64::new(1.0, 0.0)]).unwrap();
    let (y, tape) = net.forward(&x, Mode::Train).unwrap();
    let g = ComplexTensor::new(1, 1, vec![y.data()[0] * 2.0]).unwrap();
    net.backward(tape, &g).unwrap();
    assert_eq!(net.layers()[0].grads()[0], C64::new(6.0, 8.0));
}

#[test]
fn crelu_examples() {
    assert_eq!(crelu(C64::new(1.0, -2.0)), C64::new(1.0, 0.0));
    assert_eq!(crelu(C64::new(-1.0, 2.5)), C64::new(0.0, 2.5));
}

#[test]
fn identity_dense_and_unit_kernel_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut rng, 3, 4);
    let mut eye = vec![C64::new(0.0, 0.0); 20];
    for i in 0..4 {
        eye[i * 4 + i] = C64::new(1.0, 0.0);
    }
    let dense = Layer::with_params(LayerSpec::ComplexDense { inputs: 4, outputs: 4 }, eye).unwrap();
    assert_eq!(dense.eval(&x).unwrap(), x);
    let conv = Layer::with_params(
        LayerSpec::ComplexConv1d { in_channels: 1, out_channels: 1, kernel: 1, stride: 1 },
        vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    )
    .unwrap();
    assert_eq!(conv.eval(&x).unwrap(), x);
}

#[test]
fn conv_output_lengths() {
    let down = LayerSpec::ComplexConv1d { in_channels: 1, out_channels: 8, kernel: 3, stride: 2 };
    assert_eq!(down.output_features(16).unwrap(), 8 * 8);
    let up = LayerSpec::ComplexConv1dTransposed { in_channels: 16, out_channels: 8, kernel: 3, stride: 2 };
    assert_eq!(up.output_features(16 * 4).unwrap(), 8 * 8);
    assert!(LayerSpec::ComplexConv1d { in_channels: 1, out_channels: 1, kernel: 2, stride: 1 }.validate().is_err());
}

#[test]
fn batch_norm_whitens_training_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 4000;
    // correlated, improper, shifted input
    let data: Vec<C64> = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            C64::new(3.0 * a + 2.0, 0.5 * a + 0.2 * b - 1.0)
        })
        .collect();
    let x = ComplexTensor::new(n, 1, data).unwrap();
    let mut layer = Layer::new(LayerSpec::ComplexBatchNorm { channels: 1 }, &mut rng).unwrap();
    let (y, _) = layer.forward(&x, Mode::Train).unwrap();
    let nf = n as f64;
    let mean = y.data().iter().sum::<C64>() / nf;
    assert!(mean.norm() <= 1e-6);
    let (mut rr, mut ri, mut ii) = (0.0, 0.0, 0.0);
    for z in y.data() {
        rr += z.re * z.re / nf;
        ri += z.re * z.im / nf;
        ii += z.im * z.im / nf;
    }
    // the diagonal load shrinks the variance by roughly eps / smallest eigenvalue
    assert!((rr - 1.0).abs() < 1e-3 && ri.abs() < 1e-3 && (ii - 1.0).abs() < 1e-3, "{rr} {ri} {ii}");
}

#[test]
fn batch_norm_constant_batch_maps_to_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = ComplexTensor::new(8, 2, vec![C64::new(0.7, -0.3); 16]).unwrap();
    let mut layer = Layer::new(LayerSpec::ComplexBatchNorm { channels: 2 }, &mut rng).unwrap();
    let (y, _) = layer.forward(&x, Mode::Train).unwrap();
    assert!(y.data().iter().all(|z| z.norm() < 1e-12));
}

#[test]
fn batch_norm_running_statistics_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = ComplexTensor::new(4, 1, vec![C64::new(1.0, 0.0), C64::new(3.0, 0.0), C64::new(1.0, 2.0), C64::new(3.0, 2.0)])
        .unwrap();
    let mut layer = Layer::new(LayerSpec::ComplexBatchNorm { channels: 1 }, &mut rng).unwrap();
    layer.forward(&x, Mode::Train).unwrap();
    let r = layer.running()[0];
    // batch mean (2, 1), covariance diag(1, 1)
    assert!((r.mean[0] - 0.2).abs() < 1e-15 && (r.mean[1] - 0.1).abs() < 1e-15);
    assert!((r.cov[0] - 1.0).abs() < 1e-15 && r.cov[1].abs() < 1e-15 && (r.cov[2] - 1.0).abs() < 1e-15);
    let before = layer.clone();
    layer.eval(&x).unwrap();
    assert_eq!(layer, before);
}

#[test]
fn training_batch_norm_rejects_single_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut layer = Layer::new(LayerSpec::ComplexBatchNorm { channels: 1 }, &mut rng).unwrap();
    let x = ComplexTensor::new(1, 3, vec![C64::new(1.0, 0.0); 3]).unwrap();
    assert!(layer.forward(&x, Mode::Train).is_err());
    assert!(layer.eval(&x).is_ok());
}

#[test]
fn backward_rejects_foreign_tape() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut a = Network::new(&[LayerSpec::Crelu], 2, &mut rng).unwrap();
    let mut b = Network::new(&[LayerSpec::Crelu, LayerSpec::Crelu], 2, &mut rng).unwrap();
    let x = rand_tensor(&mut rng, 2, 2);
    let (_, tape) = a.forward(&x, Mode::Train).unwrap();
    assert!(b.backward(tape, &x).is_err());
}
