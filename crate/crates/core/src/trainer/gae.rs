//! Generalised advantage estimation over one episode.

use super::{Result, TrainError};

/// Advantages and value targets for one episode.
///
/// `values` carries one bootstrap entry past the last reward: the critic's
/// estimate of the final state for a truncated episode, or 0 when the episode
/// ended in a terminal state. `dones[t]` marks a terminal transition, which
/// cuts both the bootstrap and the recursion.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 {
        return Err(TrainError::LengthMismatch {
            what: "gae values",
            expected: n + 1,
            got: values.len(),
        });
    }
    if dones.len() != n {
        return Err(TrainError::LengthMismatch {
            what: "gae dones",
            expected: n,
            got: dones.len(),
        });
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Shifts and scales `xs` to zero mean and unit (population) standard
/// deviation. Leaves single-element or constant slices centred only.
pub fn normalize(xs: &mut [f64]) {
    let n = xs.len();
    if n == 0 {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter_mut().for_each(|x| *x -= mean);
    let std = (xs.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    if std > 1e-12 {
        xs.iter_mut().for_each(|x| *x /= std);
    }
}
