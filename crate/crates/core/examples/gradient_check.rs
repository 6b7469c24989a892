//! Checks reverse-mode gradients against central finite differences, first
//! on a small tape expression and then on every critic parameter tensor.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use corridor::autodiff::check::{max_relative_error, numeric_gradient, FD_FLOOR};
use corridor::autodiff::{Tape, Tensor};
use corridor::graph::build_graph;
use corridor::policy::params::sampled_gradient_check;
use corridor::policy::{Policy, PolicyConfig};
use corridor::sim::{init_episode, EpisodeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // f(a, b) = sum(tanh(a·b) ⊙ a·b)
    let a = Tensor::new(2, 3, vec![0.3, -1.2, 0.5, 0.8, 0.1, -0.4])?;
    let b = Tensor::new(3, 2, vec![1.0, -0.5, 0.25, 0.7, -1.1, 0.2])?;
    let eval = |inputs: &[Tensor]| {
        let tape = Tape::new();
        let a = tape.leaf(inputs[0].clone(), true);
        let b = tape.leaf(inputs[1].clone(), true);
        let ab = tape.matmul(a, b).unwrap();
        let y = tape.sum_all(tape.mul(tape.tanh(ab), ab).unwrap());
        tape.backward(y).unwrap();
        (tape.scalar(y), vec![tape.grad(a).unwrap(), tape.grad(b).unwrap()])
    };
    let inputs = [a, b];
    let (value, analytic) = eval(&inputs);
    let numeric = numeric_gradient(&inputs, 1e-5, |x| eval(x).0);
    println!(
        "toy expression: f = {value:.6}, max relative error {:.2e}",
        max_relative_error(&analytic, &numeric, FD_FLOOR)
    );

    let policy = Policy::new(PolicyConfig::default(), 11);
    let world = init_episode(&EpisodeConfig {
        n_vehicles: 6,
        seed: 2,
        ..Default::default()
    })?;
    let graph = build_graph(&world, &policy.config.graph);
    let batch = policy.batch(&[&graph])?;
    let value = |store: &corridor::policy::ParamStore| {
        let tape = Tape::new();
        let p = store.bind(&tape);
        let v = policy.critic_forward(&tape, &p, &batch).unwrap();
        tape.scalar(v)
    };
    let tape = Tape::new();
    let p = policy.params.bind(&tape);
    let v = policy.critic_forward(&tape, &p, &batch)?;
    tape.backward(v)?;
    let ids = policy.critic_ids();
    let grads = p.grads(&tape, &policy.params, ids);
    let err = sampled_gradient_check(&policy.params, ids, &grads, 8, 1e-5, value);
    println!(
        "critic: V = {:.6}, {} tensors, max relative error {err:.2e}",
        tape.scalar(v),
        ids.len()
    );
    Ok(())
}
