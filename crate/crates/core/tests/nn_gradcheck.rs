mod common;

use cervifuse_core::nn::{
    adam_step, softmax, softmax_ce_grad, Activation, AdamConfig, AdamState, BatchNormParams,
    DenseParams, Layer, Mode, Network,
};
use cervifuse_core::rng::rng_for;
use cervifuse_core::{Element, Tensor};
use common::gradcheck::{check, check_input, loss_of};
use rand::Rng;

const SEEDS: u64 = 20;
const H_F64: f64 = 1e-5;
const TOL_F64: f64 = 1e-5;
const H_F32: f64 = 3e-3;
const TOL_F32: f64 = 1e-2;
/// Denominator floor for the relative error. Below it gradients are
/// compared on an absolute scale; 1e-5 sits above the f64 round-off of the
/// difference quotient (about eps · |loss| / h ≈ 5e-11 absolute).
const FLOOR_F64: f64 = 1e-5;
const FLOOR_F32: f64 = 1e-2;

fn random_input<T: Element>(seed: u64, rows: usize, cols: usize) -> Tensor<T> {
    let mut rng = rng_for(seed, &[1]);
    let v: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::from_f64_slice(&[rows, cols], &v).unwrap()
}

fn random_labels(seed: u64, rows: usize, classes: usize) -> Vec<usize> {
    let mut rng = rng_for(seed, &[2]);
    (0..rows).map(|_| rng.random_range(0..classes)).collect()
}

fn randomize_bn<T: Element>(p: &mut BatchNormParams<T>, seed: u64) {
    let mut rng = rng_for(seed, &[3]);
    for v in p.gamma.data_mut() {
        *v = T::from_f64(rng.random_range(0.5..1.5));
    }
    for v in p.beta.data_mut() {
        *v = T::from_f64(rng.random_range(-0.5..0.5));
    }
}

#[derive(Clone, Copy, Debug)]
enum Stack {
    DenseLinear,
    DenseRelu,
    BatchNorm,
    Dropout,
    Composite,
}

fn build<T: Element>(stack: Stack, seed: u64, d_in: usize, classes: usize) -> Network<T> {
    let mut rng = rng_for(seed, &[0]);
    let dense = |i, o, a, rng: &mut _| Layer::Dense(DenseParams::glorot(i, o, a, rng).unwrap());
    let layers = match stack {
        Stack::DenseLinear => vec![dense(d_in, classes, Activation::None, &mut rng)],
        Stack::DenseRelu => vec![dense(d_in, classes, Activation::Relu, &mut rng)],
        Stack::BatchNorm => {
            let mut bn = BatchNormParams::new(classes);
            randomize_bn(&mut bn, seed);
            vec![Layer::BatchNorm(bn)]
        }
        Stack::Dropout => vec![
            Layer::Dropout { rate: 0.3 },
            dense(d_in, classes, Activation::None, &mut rng),
        ],
        Stack::Composite => {
            let mut bn = BatchNormParams::new(8);
            randomize_bn(&mut bn, seed);
            vec![
                dense(d_in, 8, Activation::Relu, &mut rng),
                Layer::BatchNorm(bn),
                Layer::Dropout { rate: 0.25 },
                dense(8, 6, Activation::Relu, &mut rng),
                dense(6, classes, Activation::None, &mut rng),
            ]
        }
    };
    Network::new(layers).unwrap()
}

fn run<T: Element>(stack: Stack, h: f64, tol: f64, floor: f64) {
    let (rows, classes) = (6, 3);
    let d_in = match stack {
        Stack::BatchNorm => classes,
        _ => 5,
    };
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut net = build::<T>(stack, seed, d_in, classes);
        let x = random_input::<T>(seed, rows, d_in);
        let labels = random_labels(seed, rows, classes);
        let drop_seed = 1000 + seed;

        let logits = net.forward(&x, Mode::Train, drop_seed).unwrap();
        let probs = softmax(&logits).unwrap();
        let (grads, dx) = net
            .backward_with_input(&softmax_ce_grad(&probs, &labels).unwrap())
            .unwrap();

        let p = check(&net, &x, &labels, drop_seed, &grads, h, floor);
        let i = check_input(&net, &x, &labels, drop_seed, &dx, h, floor);
        let total = p.checked + p.kinks + i.checked + i.kinks;
        assert!(
            (p.kinks + i.kinks) * 10 <= total,
            "{stack:?} seed {seed}: too many ReLU kinks ({} of {total})",
            p.kinks + i.kinks
        );
        worst = worst.max(p.max_rel_error).max(i.max_rel_error);
        assert!(
            p.max_rel_error < tol && i.max_rel_error < tol,
            "{stack:?} seed {seed}: params {:.3e}, input {:.3e}",
            p.max_rel_error,
            i.max_rel_error
        );
    }
    eprintln!("{stack:?} ({}) worst relative error {worst:.3e}", std::any::type_name::<T>());
}

#[test]
fn dense_linear_gradients_f64() {
    run::<f64>(Stack::DenseLinear, H_F64, TOL_F64, FLOOR_F64);
}

#[test]
fn dense_relu_gradients_f64() {
    run::<f64>(Stack::DenseRelu, H_F64, TOL_F64, FLOOR_F64);
}

#[test]
fn batchnorm_train_gradients_f64() {
    run::<f64>(Stack::BatchNorm, H_F64, TOL_F64, FLOOR_F64);
}

#[test]
fn dropout_gradients_f64() {
    run::<f64>(Stack::Dropout, H_F64, TOL_F64, FLOOR_F64);
}

#[test]
fn composite_gradients_f64() {
    run::<f64>(Stack::Composite, H_F64, TOL_F64, FLOOR_F64);
}

#[test]
fn dense_gradients_f32() {
    run::<f32>(Stack::DenseLinear, H_F32, TOL_F32, FLOOR_F32);
    run::<f32>(Stack::DenseRelu, H_F32, TOL_F32, FLOOR_F32);
}

#[test]
fn batchnorm_and_dropout_gradients_f32() {
    run::<f32>(Stack::BatchNorm, H_F32, TOL_F32, FLOOR_F32);
    run::<f32>(Stack::Dropout, H_F32, TOL_F32, FLOOR_F32);
}

#[test]
fn composite_gradients_f32() {
    run::<f32>(Stack::Composite, H_F32, TOL_F32, FLOOR_F32);
}

#[test]
fn fused_softmax_ce_gradient_matches_finite_differences() {
    // Identity-like stack: a single linear layer with W = I lets the input
    // gradient equal the logit gradient.
    let classes = 4;
    let mut eye = Tensor::<f64>::zeros(&[classes, classes]);
    for i in 0..classes {
        eye.row_mut(i)[i] = 1.0;
    }
    let net = Network::new(vec![Layer::Dense(
        DenseParams::new(eye, Tensor::zeros(&[classes]), Activation::None).unwrap(),
    )])
    .unwrap();
    for seed in 0..SEEDS {
        let x = random_input::<f64>(seed, 3, classes);
        let labels = random_labels(seed, 3, classes);
        let probs = softmax(&x).unwrap();
        let g = softmax_ce_grad(&probs, &labels).unwrap();
        let r = check_input(&net, &x, &labels, 0, &g, H_F64, FLOOR_F64);
        assert!(r.max_rel_error < TOL_F64, "seed {seed}: {:.3e}", r.max_rel_error);
    }
}

fn train_steps(seed: u64, steps: usize) -> Vec<Tensor<f32>> {
    let mut net = build::<f32>(Stack::Composite, seed, 5, 3);
    let shapes = net.param_shapes();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut adam = AdamState::new(&shape_refs, AdamConfig::default()).unwrap();
    let x = random_input::<f32>(seed, 8, 5);
    let labels = random_labels(seed, 8, 3);
    for step in 0..steps {
        let logits = net.forward(&x, Mode::Train, step as u64).unwrap();
        let probs = softmax(&logits).unwrap();
        let grads = net.backward(&softmax_ce_grad(&probs, &labels).unwrap()).unwrap();
        adam_step(&mut net.params_mut(), &grads, &mut adam).unwrap();
    }
    net.params().into_iter().cloned().collect()
}

#[test]
fn identical_seeds_give_bit_identical_parameters() {
    let a = train_steps(4, 25);
    let b = train_steps(4, 25);
    for (x, y) in a.iter().zip(&b) {
        assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert_ne!(train_steps(5, 25), a);
}

#[test]
fn training_reduces_loss() {
    let mut net = build::<f64>(Stack::Composite, 9, 5, 3);
    let shapes = net.param_shapes();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut adam = AdamState::new(&shape_refs, AdamConfig::with_lr(1e-2)).unwrap();
    let x = random_input::<f64>(9, 12, 5);
    let labels = random_labels(9, 12, 3);
    let mut probe = net.clone();
    let initial = loss_of(&mut probe, &x, &labels, 0);
    for step in 0..200 {
        let logits = net.forward(&x, Mode::Train, step).unwrap();
        let probs = softmax(&logits).unwrap();
        let grads = net.backward(&softmax_ce_grad(&probs, &labels).unwrap()).unwrap();
        adam_step(&mut net.params_mut(), &grads, &mut adam).unwrap();
    }
    let mut probe = net.clone();
    assert!(loss_of(&mut probe, &x, &labels, 0) < initial);
}
