//! Diagonal Gaussian and categorical helpers, in plain `f64` for acting and
//! on the tape for the training loss.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Result, Tape, Tensor, Var};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - HALF_LN_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (1.0 + (2.0 * PI).ln())).sum()
}

pub fn sample_gaussian<R: Rng + ?Sized>(rng: &mut R, mean: &[f64], log_std: &[f64]) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(rng);
            m + s.exp() * z
        })
        .collect()
}

/// Inverse-CDF draw from `probs` (assumed normalised).
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// First index of the largest probability.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn categorical_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `B×1` log-densities of `actions` (a `B×d` constant) under `N(means, exp(log_std)²)`.
pub fn gaussian_log_prob_tape(tape: &Tape<'_>, means: Var, log_std: Var, actions: Tensor) -> Result<Var> {
    let (_, d) = tape.shape(means);
    let diff = tape.sub(tape.constant(actions), means)?;
    let z = tape.mul_row(diff, tape.exp(tape.scale(log_std, -1.0)))?;
    let quad = tape.scale(tape.row_sum(tape.square(z)), -0.5);
    let norm = tape.add_scalar(tape.sum_all(log_std), d as f64 * HALF_LN_2PI);
    tape.add_row(quad, tape.scale(norm, -1.0))
}

/// Scalar Gaussian entropy as a tape value.
pub fn gaussian_entropy_tape(tape: &Tape<'_>, log_std: Var) -> Var {
    let (_, d) = tape.shape(log_std);
    tape.add_scalar(tape.sum_all(log_std), d as f64 * 0.5 * (1.0 + (2.0 * PI).ln()))
}

/// `B×1` entropies of the rows of a log-probability matrix.
pub fn categorical_entropy_tape(tape: &Tape<'_>, log_probs: Var) -> Result<Var> {
    let p = tape.exp(log_probs);
    Ok(tape.scale(tape.row_sum(tape.mul(p, log_probs)?), -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_density_at_mean() {
        let lp = gaussian_log_prob(&[0.0], &[0.0], &[0.0]);
        assert!((lp - (-HALF_LN_2PI)).abs() < 1e-15);
        assert!((HALF_LN_2PI - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn tape_log_prob_matches_plain() {
        let tape = Tape::new();
        let means = tape.constant(Tensor::from_rows(&[[0.5, -0.2], [1.0, 0.3]]).unwrap());
        let log_std = tape.constant(Tensor::row(vec![-0.4, 0.1]));
        let actions = Tensor::from_rows(&[[0.1, 0.0], [2.0, -1.0]]).unwrap();
        let lp = tape.value(gaussian_log_prob_tape(&tape, means, log_std, actions).unwrap());
        let a = gaussian_log_prob(&[0.5, -0.2], &[-0.4, 0.1], &[0.1, 0.0]);
        let b = gaussian_log_prob(&[1.0, 0.3], &[-0.4, 0.1], &[2.0, -1.0]);
        assert!((lp.data[0] - a).abs() < 1e-14 && (lp.data[1] - b).abs() < 1e-14);
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probs = [0.1, 0.2, 0.3, 0.4];
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[sample_categorical(&mut rng, &probs)] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / 40_000.0 - p).abs() < 0.01);
        }
    }

    #[test]
    fn entropy_bounds() {
        assert!((categorical_entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(categorical_entropy(&[1.0, 0.0, 0.0, 0.0]), 0.0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
