//! Reversible instance normalization over channel-flattened rows.
//!
//! Row `r` of a `[R, L]` batch belongs to channel `r % M`; the affine pair is
//! shared per channel while mean and deviation are captured per row.

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Statistics captured when a batch is normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RevInState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub eps: f64,
}

impl RevInState {
    /// Per-row population mean and `sqrt(var + eps)`.
    pub fn capture(x: &Tensor, eps: f64) -> Result<Self> {
        let (rows, len) = rows_and_len(x)?;
        if len < 2 {
            return Err(Error::Dimension(format!(
                "instance normalization needs at least 2 steps per row, got {len}"
            )));
        }
        let mut mean = Vec::with_capacity(rows);
        let mut std = Vec::with_capacity(rows);
        for row in x.data().chunks_exact(len) {
            let m = row.iter().sum::<f64>() / len as f64;
            let v = row.iter().map(|a| (a - m).powi(2)).sum::<f64>() / len as f64;
            mean.push(m);
            std.push((v + eps).sqrt());
        }
        Ok(Self { mean, std, eps })
    }

    fn standardize(&self, x: &Tensor) -> Vec<f64> {
        let len = x.shape()[1];
        x.data()
            .chunks_exact(len)
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |v| (v - self.mean[r]) / self.std[r]))
            .collect()
    }

    fn broadcast(values: &[f64], len: usize) -> Vec<f64> {
        values.iter().flat_map(|&v| std::iter::repeat_n(v, len)).collect()
    }
}

fn rows_and_len(x: &Tensor) -> Result<(usize, usize)> {
    match x.shape() {
        [r, l] => Ok((*r, *l)),
        s => Err(Error::Dimension(format!("expected a [rows, length] tensor, got {s:?}"))),
    }
}

fn channel_index(rows: usize, len: usize, channels: usize) -> Vec<usize> {
    (0..rows).flat_map(|r| std::iter::repeat_n(r % channels, len)).collect()
}

/// Normalizes each row and applies the per-channel affine `(gamma, beta)`.
pub fn revin_normalize(x: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> Result<(Tensor, RevInState)> {
    let (rows, len) = rows_and_len(x)?;
    let m = gamma.len();
    if m == 0 || beta.len() != m || rows % m != 0 {
        return Err(Error::Dimension(format!(
            "{rows} rows cannot be split across {m} channels"
        )));
    }
    let state = RevInState::capture(x, eps)?;
    let z = state.standardize(x);
    let out = z
        .chunks_exact(len)
        .enumerate()
        .flat_map(|(r, row)| {
            let (g, b) = (gamma[r % m], beta[r % m]);
            row.iter().map(move |v| v * g + b)
        })
        .collect();
    Ok((Tensor::new(vec![rows, len], out)?, state))
}

/// Undoes [`revin_normalize`] on an output of possibly different length.
pub fn revin_denormalize(y: &Tensor, gamma: &[f64], beta: &[f64], state: &RevInState) -> Result<Tensor> {
    let (rows, len) = rows_and_len(y)?;
    let m = gamma.len();
    if rows != state.mean.len() || m == 0 || rows % m != 0 {
        return Err(Error::Dimension(format!(
            "denormalizing {rows} rows with statistics for {} rows",
            state.mean.len()
        )));
    }
    let eps2 = state.eps * state.eps;
    let out = y
        .data()
        .chunks_exact(len)
        .enumerate()
        .flat_map(|(r, row)| {
            let (g, b) = (gamma[r % m], beta[r % m]);
            let (mu, sd) = (state.mean[r], state.std[r]);
            row.iter().map(move |v| (v - b) / (g + eps2) * sd + mu)
        })
        .collect();
    Tensor::new(vec![rows, len], out)
}

/// Tape version of [`revin_normalize`]; gradients reach `gamma` and `beta`.
pub(crate) fn normalize_on_tape(
    tape: &mut Tape,
    x: &Tensor,
    gamma: Var,
    beta: Var,
    channels: usize,
    eps: f64,
) -> Result<(Var, RevInState)> {
    let (rows, len) = rows_and_len(x)?;
    let state = RevInState::capture(x, eps)?;
    let z = tape.constant(vec![rows, len], state.standardize(x))?;
    let idx = channel_index(rows, len, channels);
    let g = tape.gather(gamma, idx.clone(), vec![rows, len])?;
    let b = tape.gather(beta, idx, vec![rows, len])?;
    let scaled = tape.mul(z, g)?;
    Ok((tape.add(scaled, b)?, state))
}

pub(crate) fn denormalize_on_tape(
    tape: &mut Tape,
    y: Var,
    gamma: Var,
    beta: Var,
    channels: usize,
    state: &RevInState,
) -> Result<Var> {
    let (rows, len) = match tape.shape(y) {
        [r, l] => (*r, *l),
        s => return Err(Error::Dimension(format!("expected [rows, horizon], got {s:?}"))),
    };
    let idx = channel_index(rows, len, channels);
    let g = tape.gather(gamma, idx.clone(), vec![rows, len])?;
    let b = tape.gather(beta, idx, vec![rows, len])?;
    let eps2 = tape.constant(vec![rows, len], vec![state.eps * state.eps; rows * len])?;
    let denom = tape.add(g, eps2)?;
    let shifted = tape.sub(y, b)?;
    let unscaled = tape.div(shifted, denom)?;
    let sd = tape.constant(vec![rows, len], RevInState::broadcast(&state.std, len))?;
    let mu = tape.constant(vec![rows, len], RevInState::broadcast(&state.mean, len))?;
    let spread = tape.mul(unscaled, sd)?;
    tape.add(spread, mu)
}
