//! Seasonal-trend decomposition by moving averages.
//!
//! Every decomposition defines the trend by smoothing and the seasonal part as
//! the residual `x - trend`, so `trend + seasonal` reproduces the input.

use crate::error::{Error, Result};

/// Smoothing factor used when decomposing model inputs.
pub const DEFAULT_ALPHA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Ema { alpha: f64 },
    Sma { kernel: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedPair {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub smoothing: Smoothing,
}

impl DecomposedPair {
    fn from_trend(x: &[f64], trend: Vec<f64>, smoothing: Smoothing) -> Self {
        let seasonal = x.iter().zip(&trend).map(|(v, t)| v - t).collect();
        Self {
            trend,
            seasonal,
            smoothing,
        }
    }

    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }
}

/// Coefficients that produce EMA point `t` as a dot product with `x[0..=t]`:
/// `[(1-α)^t, (1-α)^(t-1)·α, ..., (1-α)·α, α]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaWeights {
    pub alpha: f64,
    pub weights: Vec<f64>,
}

impl EmaWeights {
    pub fn for_point(alpha: f64, t: usize) -> Result<Self> {
        check_alpha(alpha)?;
        let keep = 1.0 - alpha;
        let weights = (0..=t)
            .map(|j| {
                let decay = keep.powi((t - j) as i32);
                if j == 0 {
                    decay
                } else {
                    decay * alpha
                }
            })
            .collect();
        Ok(Self { alpha, weights })
    }

    pub fn apply(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!(
            "EMA smoothing factor must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

fn check_series(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Parameter("cannot decompose an empty series".into()));
    }
    Ok(())
}

/// `s_0 = x_0`, `s_t = α·x_t + (1-α)·s_{t-1}`.
pub fn ema_recursive(x: &[f64], alpha: f64) -> Result<DecomposedPair> {
    check_alpha(alpha)?;
    check_series(x)?;
    let mut trend = Vec::with_capacity(x.len());
    let mut s = x[0];
    trend.push(s);
    for &v in &x[1..] {
        // s + α(x - s) keeps constant runs exact; α = 1 copies the input
        s = if alpha == 1.0 { v } else { s + alpha * (v - s) };
        trend.push(s);
    }
    Ok(DecomposedPair::from_trend(x, trend, Smoothing::Ema { alpha }))
}

/// Geometric decay powers `(1-α)^k` for `k < len`.
fn decay_powers(alpha: f64, len: usize) -> Vec<f64> {
    let keep = 1.0 - alpha;
    (0..len).map(|k| keep.powi(k as i32)).collect()
}

/// EMA trend as a weighted sum per point, sharing one decay vector across points.
///
/// Point `t` uses `(1-α)^t` for the boundary term `x_0` and `α·(1-α)^(t-j)` for
/// `x_j`. Powers that underflow are exactly zero and drop out.
pub fn ema_closed_form(x: &[f64], alpha: f64) -> Result<DecomposedPair> {
    check_alpha(alpha)?;
    check_series(x)?;
    let powers = decay_powers(alpha, x.len());
    let scaled: Vec<f64> = powers.iter().map(|p| p * alpha).collect();
    let trend = (0..x.len())
        .map(|t| {
            let tail: f64 = x[1..=t]
                .iter()
                .zip(scaled[..t].iter().rev())
                .map(|(v, w)| v * w)
                .sum();
            powers[t] * x[0] + tail
        })
        .collect();
    Ok(DecomposedPair::from_trend(x, trend, Smoothing::Ema { alpha }))
}

/// Row-major `len x len` matrix `W` with `trend = W · x` for the EMA above.
pub fn ema_matrix(len: usize, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let powers = decay_powers(alpha, len);
    let mut m = vec![0.0; len * len];
    for t in 0..len {
        m[t * len] = powers[t];
        for j in 1..=t {
            m[t * len + j] = alpha * powers[t - j];
        }
    }
    Ok(m)
}

/// Centered moving average with edge replication; `kernel` must be odd.
pub fn sma(x: &[f64], kernel: usize) -> Result<DecomposedPair> {
    check_series(x)?;
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "moving-average kernel must be odd and positive, got {kernel}"
        )));
    }
    let half = (kernel - 1) / 2;
    let n = x.len();
    let padded: Vec<f64> = std::iter::repeat_n(x[0], half)
        .chain(x.iter().copied())
        .chain(std::iter::repeat_n(x[n - 1], half))
        .collect();
    let inv = 1.0 / kernel as f64;
    let trend = padded.windows(kernel).map(|w| w.iter().sum::<f64>() * inv).collect();
    Ok(DecomposedPair::from_trend(x, trend, Smoothing::Sma { kernel }))
}
