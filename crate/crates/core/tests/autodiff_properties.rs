use std::rc::Rc;

use corridor::autodiff::check::{max_relative_error, numeric_gradient, FD_FLOOR};
use corridor::autodiff::{clip_global_norm, global_norm, Tape, Tensor};
use proptest::prelude::*;

fn scaled(t: &Tensor, s: f64) -> Tensor {
    Tensor::new(t.rows, t.cols, t.data.iter().map(|x| x * s).collect()).unwrap()
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.5..1.5f64, rows * cols).prop_map(move |d| Tensor::new(rows, cols, d).unwrap())
}

/// Edge list over `n` nodes where every node receives at least its self loop.
fn edges(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    prop::collection::vec((0..n, 0..n), 0..2 * n).prop_map(move |extra| {
        let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).chain(extra).collect();
        pairs.sort();
        pairs.into_iter().unzip()
    })
}

/// A graph-attention-shaped expression touching most primitives.
fn attention_loss(inputs: &[Tensor], src: &Rc<[usize]>, dst: &Rc<[usize]>, n: usize) -> (f64, Vec<Tensor>) {
    let tape = Tape::new();
    let x = tape.leaf(inputs[0].clone(), true);
    let w = tape.leaf(inputs[1].clone(), true);
    let a = tape.leaf(inputs[2].clone(), true);
    let h = tape.layer_norm(tape.matmul(x, w).unwrap(), 1e-5);
    let score = tape.row_sum(tape.mul_row(h, a).unwrap());
    let score = tape
        .add(
            tape.gather_rows(score, dst.clone()).unwrap(),
            tape.gather_rows(score, src.clone()).unwrap(),
        )
        .unwrap();
    let alpha = tape
        .segment_softmax(tape.leaky_relu(score, 0.2), dst.clone(), n)
        .unwrap();
    let m = tape.attend(tape.tanh(h), alpha, src.clone(), dst.clone(), n).unwrap();
    let pooled = tape.add(tape.mean_rows(m), tape.max_rows(m).unwrap()).unwrap();
    let out = tape.sum_all(tape.mul(tape.log_softmax_rows(pooled), pooled).unwrap());
    tape.backward(out).unwrap();
    let grads = [x, w, a].iter().map(|&v| tape.grad(v).unwrap()).collect();
    (tape.scalar(out), grads)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_gradients_match_finite_differences(
        (n, x, (src, dst)) in (2usize..6).prop_flat_map(|n| (Just(n), matrix(n, 3), edges(n))),
        w in matrix(3, 4),
        a in matrix(1, 4),
    ) {
        let (src, dst): (Rc<[usize]>, Rc<[usize]>) = (src.into(), dst.into());
        let inputs = [x, w, a];
        let (_, analytic) = attention_loss(&inputs, &src, &dst, n);
        let numeric = numeric_gradient(&inputs, 1e-5, |t| attention_loss(t, &src, &dst, n).0);
        let err = max_relative_error(&analytic, &numeric, FD_FLOOR);
        prop_assert!(err < 1e-4, "relative error {}", err);
    }

    #[test]
    fn segment_softmax_sums_to_one(
        (n, scores, (_, dst)) in (1usize..8).prop_flat_map(|n| (Just(n), Just(()), edges(n)))
            .prop_flat_map(|(n, _, e)| (Just(n), matrix(e.1.len(), 3), Just(e))),
    ) {
        let tape = Tape::new();
        let s = tape.leaf(scaled(&scores, 20.0), false);
        let p = tape.value(tape.segment_softmax(s, dst.clone().into(), n).unwrap());
        for seg in 0..n {
            for k in 0..3 {
                let total: f64 = dst.iter().enumerate().filter(|(_, &d)| d == seg).map(|(i, _)| p.data[i * 3 + k]).sum();
                prop_assert!((total - 1.0).abs() < 1e-12, "segment {} head {}: {}", seg, k, total);
            }
        }
    }

    #[test]
    fn backward_is_linear(x in matrix(3, 3), alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let grad_of = |ca: f64, cb: f64| {
            let tape = Tape::new();
            let v = tape.leaf(x.clone(), true);
            let f = tape.sum_all(tape.tanh(tape.matmul(v, v).unwrap()));
            let g = tape.sum_all(tape.square(tape.exp(tape.scale(v, 0.3))));
            let out = tape.add(tape.scale(f, ca), tape.scale(g, cb)).unwrap();
            tape.backward(out).unwrap();
            tape.grad(v).unwrap()
        };
        let combined = grad_of(alpha, beta);
        let (gf, gg) = (grad_of(1.0, 0.0), grad_of(0.0, 1.0));
        for i in 0..9 {
            let expect = alpha * gf.data[i] + beta * gg.data[i];
            prop_assert!((combined.data[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn clipped_norm_never_exceeds_the_limit(a in matrix(4, 5), b in matrix(1, 7), scale in 0.0..1e3f64, max_norm in 1e-3..10.0f64) {
        let mut grads = vec![scaled(&a, scale), scaled(&b, scale)];
        let before = global_norm(&grads);
        let reported = clip_global_norm(&mut grads, max_norm).unwrap();
        prop_assert_eq!(reported, before);
        prop_assert!(global_norm(&grads) <= max_norm + 1e-12);
    }
}
