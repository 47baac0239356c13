use std::fmt::Write as _;

use crate::autograd::Tensor;
use crate::datasets::{Scaler, WindowBatch};
use crate::error::{Error, Result};
use crate::model::XPatch;

/// Anything that maps `[R, L]` lookback rows to `[R, T]` forecasts.
pub trait Forecaster {
    fn forecast_rows(&self, x: &Tensor) -> Result<Tensor>;
}

impl Forecaster for XPatch {
    fn forecast_rows(&self, x: &Tensor) -> Result<Tensor> {
        self.predict(x)
    }
}

/// Space in which errors are measured.
#[derive(Debug, Clone, Copy)]
pub enum Scale<'a> {
    Normalized,
    Raw(&'a Scaler),
}

/// Recursive pairwise summation.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub per_horizon_mse: Vec<f64>,
    pub per_horizon_mae: Vec<f64>,
    pub n_windows: usize,
}

/// Mean squared and absolute error over every window, channel and horizon step.
pub fn evaluate<F: Forecaster + ?Sized>(f: &F, batches: &[WindowBatch], scale: Scale) -> Result<Metrics> {
    let first = batches
        .first()
        .ok_or_else(|| Error::Data("evaluation stream is empty".into()))?;
    let horizon = first.targets.shape()[1];
    let mut sq: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut ab: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut n_windows = 0;
    for batch in batches {
        let pred = f.forecast_rows(&batch.inputs)?;
        if pred.shape() != batch.targets.shape() {
            return Err(Error::Dimension(format!(
                "forecast shape {:?} does not match targets {:?}",
                pred.shape(),
                batch.targets.shape()
            )));
        }
        let m = batch.channels;
        let rows = pred.data().chunks_exact(horizon).zip(batch.targets.data().chunks_exact(horizon));
        for (r, (p, y)) in rows.enumerate() {
            for i in 0..horizon {
                let (p, y) = match scale {
                    Scale::Normalized => (p[i], y[i]),
                    Scale::Raw(s) => (s.inverse_value(r % m, p[i]), s.inverse_value(r % m, y[i])),
                };
                let e = p - y;
                sq[i].push(e * e);
                ab[i].push(e.abs());
            }
        }
        n_windows += batch.n_windows();
    }
    let count = sq[0].len() as f64;
    let per_horizon_mse: Vec<f64> = sq.iter().map(|v| pairwise_sum(v) / count).collect();
    let per_horizon_mae: Vec<f64> = ab.iter().map(|v| pairwise_sum(v) / count).collect();
    let mse = pairwise_sum(&per_horizon_mse) / horizon as f64;
    let mae = pairwise_sum(&per_horizon_mae) / horizon as f64;
    if !(mse.is_finite() && mae.is_finite()) {
        return Err(Error::Numerical("evaluation produced non-finite errors".into()));
    }
    Ok(Metrics {
        mse,
        mae,
        per_horizon_mse,
        per_horizon_mae,
        n_windows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub lookback: usize,
    pub horizon: usize,
    pub seed: u64,
    pub metrics: Metrics,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "dataset,L,T,seed,mse,mae,n_windows";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.dataset, self.lookback, self.horizon, self.seed, self.metrics.mse, self.metrics.mae, self.metrics.n_windows
        )
    }

    /// Report CSV preceded by `# key=value` provenance lines.
    pub fn to_csv(&self, provenance: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "{}", Self::CSV_HEADER);
        let _ = writeln!(out, "{}", self.csv_row());
        out
    }

    /// `step,mse,mae` for every horizon step (1-based).
    pub fn per_horizon_csv(&self) -> String {
        let mut out = String::from("step,mse,mae\n");
        for (i, (a, b)) in self.metrics.per_horizon_mse.iter().zip(&self.metrics.per_horizon_mae).enumerate() {
            let _ = writeln!(out, "{},{a},{b}", i + 1);
        }
        out
    }
}
