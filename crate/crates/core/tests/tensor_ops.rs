mod common;

use common::naive_conv2d;
use proptest::prelude::*;
use rand::Rng;
use shiftlab::rng::Streams;
use shiftlab::tensor::{ParamSet, Tape, Tensor};

fn uniform(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = Streams::new(seed).stream("uniform");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()).unwrap()
}

fn conv(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone()).unwrap();
    let kv = tape.input(k.clone()).unwrap();
    let y = tape.conv2d(xv, kv, stride, pad).unwrap();
    tape.value(y).clone()
}

#[test]
fn conv_scalar_and_identity() {
    let y = conv(&Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap(), &Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap(), 1, 0);
    assert_eq!(y.data(), &[6.0]);
    let x = uniform(vec![1, 1, 3, 3], 1);
    let mut delta = vec![0.0; 9];
    delta[4] = 1.0;
    let y = conv(&x, &Tensor::new(vec![1, 1, 3, 3], delta).unwrap(), 1, 1);
    assert_eq!(y, x);
}

#[test]
fn conv_matches_naive_loops() {
    let x = uniform(vec![1, 1, 5, 5], 2);
    let k = uniform(vec![1, 1, 3, 3], 3);
    let (a, b) = (conv(&x, &k, 1, 0), naive_conv2d(&x, &k, 1, 0));
    assert_eq!(a.shape(), b.shape());
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_matches_naive_loops_any_geometry(
        n in 1usize..3, c in 1usize..4, o in 1usize..4, h in 3usize..9, w in 3usize..9,
        k in 1usize..4, stride in 1usize..3, pad in 0usize..2, seed in any::<u64>(),
    ) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let x = uniform(vec![n, c, h, w], seed);
        let kern = uniform(vec![o, c, k, k], seed ^ 1);
        let (a, b) = (conv(&x, &kern, stride, pad), naive_conv2d(&x, &kern, stride, pad));
        prop_assert_eq!(a.shape(), b.shape());
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn xent_is_shift_invariant(rows in prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 4), 1..6), c in -100.0f64..100.0) {
        let n = rows.len();
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let logits = Tensor::new(vec![n, 4], rows.concat()).unwrap();
        let shifted = Tensor::new(vec![n, 4], rows.concat().iter().map(|v| v + c).collect()).unwrap();
        let eval = |t: Tensor| {
            let mut tape = Tape::new();
            let v = tape.input(t).unwrap();
            let l = tape.softmax_cross_entropy(v, &labels).unwrap();
            tape.value(l).item().unwrap()
        };
        prop_assert!((eval(logits) - eval(shifted)).abs() <= 1e-10);
    }
}

#[test]
fn xent_examples() {
    let eval = |shape: Vec<usize>, data: Vec<f64>, labels: &[usize]| {
        let mut tape = Tape::new();
        let v = tape.input(Tensor::new(shape, data).unwrap()).unwrap();
        let l = tape.softmax_cross_entropy(v, labels).unwrap();
        tape.value(l).item().unwrap()
    };
    assert!((eval(vec![1, 10], vec![0.3; 10], &[4]) - 10f64.ln()).abs() < 1e-12);
    assert!(eval(vec![1, 2], vec![1000.0, 0.0], &[0]) <= 1e-10);
    let direct = (1.0 + (-1f64).exp() + (-2f64).exp()).ln();
    assert!((eval(vec![1, 3], vec![1.0, 2.0, 3.0], &[2]) - direct).abs() < 1e-12);
    assert!((direct - 0.407606).abs() < 1e-6);
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut ps = ParamSet::new();
        ps.push("k", uniform(vec![3, 2, 3, 3], 9)).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(uniform(vec![4, 2, 8, 8], 10)).unwrap();
        let k = tape.param(&ps, 0);
        let y = tape.conv2d(x, k, 2, 1).unwrap();
        let y = tape.relu(y).unwrap();
        let z = tape.mean_pool(y).unwrap();
        let l = tape.softmax_cross_entropy(z, &[0, 1, 2, 0]).unwrap();
        tape.backward(l, &mut ps).unwrap();
        (tape.value(l).item().unwrap().to_bits(), ps.get(0).tensor.grad.clone().unwrap())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a, b);
    assert!(ga.iter().zip(&gb).all(|(u, v)| u.to_bits() == v.to_bits()));
}
