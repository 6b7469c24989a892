//! Clipped PPO surrogate and clipped value regression, both as plain
//! arithmetic over slices and as per-entry tape expressions.

use crate::autodiff::{Tape, Tensor, Var};

use super::{Result, TrainError};

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(TrainError::LengthMismatch { what, expected, got })
    }
}

/// `−mean[min(r·Â, clip(r, 1−ε, 1+ε)·Â)] − β·mean(entropy)` with
/// `r = exp(lp_new − lp_old)`.
pub fn ppo_actor_loss(
    lp_new: &[f64],
    lp_old: &[f64],
    advantages: &[f64],
    eps: f64,
    entropy_coef: f64,
    entropies: &[f64],
) -> Result<f64> {
    let n = lp_new.len();
    check_len("actor lp_old", n, lp_old.len())?;
    check_len("actor advantages", n, advantages.len())?;
    if n == 0 {
        return Ok(0.0);
    }
    let surrogate: f64 = lp_new
        .iter()
        .zip(lp_old)
        .zip(advantages)
        .map(|((new, old), a)| {
            let r = (new - old).exp();
            (r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a)
        })
        .sum::<f64>()
        / n as f64;
    let entropy = if entropies.is_empty() {
        0.0
    } else {
        entropies.iter().sum::<f64>() / entropies.len() as f64
    };
    Ok(-surrogate - entropy_coef * entropy)
}

/// Mean of `max((V − target)², (V_old + clip(V − V_old, ±c) − target)²)`.
pub fn critic_loss(v_new: &[f64], v_old: &[f64], targets: &[f64], value_clip: f64) -> Result<f64> {
    let n = v_new.len();
    check_len("critic v_old", n, v_old.len())?;
    check_len("critic targets", n, targets.len())?;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(v_new
        .iter()
        .zip(v_old)
        .zip(targets)
        .map(|((v, o), t)| {
            let clipped = o + (v - o).clamp(-value_clip, value_clip);
            (v - t).powi(2).max((clipped - t).powi(2))
        })
        .sum::<f64>()
        / n as f64)
}

/// Per-entry clipped surrogate `min(r·Â, clip(r)·Â)` as an `M×1` column.
pub fn surrogate_tape(tape: &Tape<'_>, lp_new: Var, lp_old: &[f64], advantages: &[f64], eps: f64) -> Result<Var> {
    let (m, _) = tape.shape(lp_new);
    check_len("surrogate lp_old", m, lp_old.len())?;
    check_len("surrogate advantages", m, advantages.len())?;
    let old = tape.constant(Tensor::column(lp_old.to_vec()));
    let adv = tape.constant(Tensor::column(advantages.to_vec()));
    let ratio = tape.exp(tape.sub(lp_new, old)?);
    let plain = tape.mul(ratio, adv)?;
    let clipped = tape.mul(tape.clamp(ratio, 1.0 - eps, 1.0 + eps), adv)?;
    Ok(tape.minimum(plain, clipped)?)
}

/// Per-entry clipped value loss as an `M×1` column.
pub fn value_loss_tape(tape: &Tape<'_>, v_new: Var, v_old: &[f64], targets: &[f64], value_clip: f64) -> Result<Var> {
    let (m, _) = tape.shape(v_new);
    check_len("value v_old", m, v_old.len())?;
    check_len("value targets", m, targets.len())?;
    let old = tape.constant(Tensor::column(v_old.to_vec()));
    let target = tape.constant(Tensor::column(targets.to_vec()));
    let delta = tape.clamp(tape.sub(v_new, old)?, -value_clip, value_clip);
    let clipped = tape.add(old, delta)?;
    let plain = tape.square(tape.sub(v_new, target)?);
    let clipped = tape.square(tape.sub(clipped, target)?);
    Ok(tape.maximum(plain, clipped)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check::{max_relative_error, numeric_gradient, FD_FLOOR};
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_ratio_contributes_minus_advantage() {
        let l = ppo_actor_loss(&[-1.3], &[-1.3], &[2.0], 0.2, 0.0, &[]).unwrap();
        assert_eq!(l, -2.0);
    }

    #[test]
    fn ratio_two_is_clipped() {
        let l = ppo_actor_loss(&[2f64.ln()], &[0.0], &[1.0], 0.2, 0.0, &[]).unwrap();
        assert_abs_diff_eq!(l, -1.2, epsilon = 1e-12);
        // Negative advantage keeps the pessimistic unclipped term.
        let l = ppo_actor_loss(&[2f64.ln()], &[0.0], &[-1.0], 0.2, 0.0, &[]).unwrap();
        assert_abs_diff_eq!(l, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_bonus_lowers_loss() {
        let h = 4f64.ln();
        let l = ppo_actor_loss(&[0.0], &[0.0], &[0.0], 0.2, 0.01, &[h]).unwrap();
        assert_abs_diff_eq!(l, -0.01 * 1.3862943611198906, epsilon = 1e-15);
    }

    #[test]
    fn critic_examples() {
        assert_eq!(critic_loss(&[1.0, 2.0], &[0.0, 0.0], &[1.0, 2.0], 10.0).unwrap(), 0.0);
        assert_eq!(critic_loss(&[4.0, 2.0], &[4.0, 2.0], &[1.0, 2.0], 10.0).unwrap(), 4.5);
        // Clipping can only raise the loss.
        let clipped = critic_loss(&[30.0], &[0.0], &[25.0], 10.0).unwrap();
        assert_eq!(clipped, 225.0);
    }

    #[test]
    fn tape_losses_match_scalar_versions_and_gradients() {
        let lp_old = [-1.0, -0.5, -2.0, -0.1];
        let adv = [1.0, -0.7, 0.3, -1.5];
        let lp_new = Tensor::column(vec![-0.7, -0.55, -2.4, 0.3]);
        let f = |inputs: &[Tensor]| {
            let tape = Tape::new();
            let x = tape.leaf(inputs[0].clone(), true);
            let s = surrogate_tape(&tape, x, &lp_old, &adv, 0.2).unwrap();
            let loss = tape.scale(tape.mean_all(s), -1.0);
            tape.backward(loss).unwrap();
            (tape.scalar(loss), tape.grad(x).unwrap())
        };
        let (value, grad) = f(std::slice::from_ref(&lp_new));
        let scalar = ppo_actor_loss(&lp_new.data, &lp_old, &adv, 0.2, 0.0, &[]).unwrap();
        assert_abs_diff_eq!(value, scalar, epsilon = 1e-14);
        let numeric = numeric_gradient(std::slice::from_ref(&lp_new), 1e-6, |x| f(x).0);
        assert!(max_relative_error(&[grad], &numeric, FD_FLOOR) < 1e-6);

        let v_old = [0.0, 1.0, -2.0];
        let targets = [0.5, 30.0, -1.0];
        let v_new = Tensor::column(vec![0.3, 13.0, -2.2]);
        let tape = Tape::new();
        let x = tape.leaf(v_new.clone(), true);
        let l = tape.mean_all(value_loss_tape(&tape, x, &v_old, &targets, 10.0).unwrap());
        assert_abs_diff_eq!(
            tape.scalar(l),
            critic_loss(&v_new.data, &v_old, &targets, 10.0).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(ppo_actor_loss(&[0.0], &[], &[1.0], 0.2, 0.0, &[]).is_err());
        assert!(critic_loss(&[0.0], &[0.0], &[], 10.0).is_err());
    }
}
