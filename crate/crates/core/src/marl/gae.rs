//! Advantage estimation.

use crate::error::{Error, Result};

/// Generalized advantage estimation over one trajectory.
///
/// `values` has one more entry than `rewards`: the last is the bootstrap value.
/// Returns `(advantages, returns)` with `returns = advantages + values[..T]`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let durations = vec![1u32; rewards.len()];
    gae_semi_markov(rewards, &durations, values, dones, gamma, lambda)
}

/// Advantage estimation for decisions that last a variable number of ticks.
///
/// `rewards[j]` is the discounted reward collected between decision `j` and the
/// next one, `durations[j]` the number of ticks in between.
/// `delta_j = R_j + gamma^d_j * V_{j+1} * (1 - done_j) - V_j` and
/// `A_j = delta_j + gamma^d_j * lambda * (1 - done_j) * A_{j+1}`.
pub fn gae_semi_markov(
    rewards: &[f64],
    durations: &[u32],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = rewards.len();
    if values.len() != t + 1 || dones.len() != t || durations.len() != t {
        return Err(Error::LengthMismatch(format!(
            "{} rewards, {} durations, {} values, {} dones",
            t,
            durations.len(),
            values.len(),
            dones.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} / lambda {lambda} outside [0, 1]")));
    }
    let mut adv = vec![0.0; t];
    let mut next = 0.0;
    for j in (0..t).rev() {
        let cont = if dones[j] { 0.0 } else { 1.0 };
        let disc = gamma.powi(durations[j] as i32);
        let delta = rewards[j] + disc * values[j + 1] * cont - values[j];
        next = delta + disc * lambda * cont * next;
        adv[j] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Zero mean, unit (population) standard deviation; a constant batch maps to
/// zeros and a single value is left alone.
pub fn standardize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        xs.iter_mut().for_each(|x| *x = 0.0);
    } else {
        xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
    }
}
