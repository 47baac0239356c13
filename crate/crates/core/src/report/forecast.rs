use std::fmt::Write as _;

use crate::autograd::Tensor;
use crate::datasets::{flatten_channels, unflatten_channels, Scaler, SeriesView};
use crate::error::{Error, Result};
use crate::report::Forecaster;

/// Forecast of the `horizon` steps after a view, time-major `[T, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub values: Vec<f64>,
    pub horizon: usize,
    pub channels: usize,
}

impl Forecast {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    /// CSV with `# key=value` provenance lines, a `step` column and one column
    /// per variable.
    pub fn to_csv(&self, columns: &[String], provenance: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "step,{}", columns.join(","));
        for t in 0..self.horizon {
            let cells: Vec<String> = self.row(t).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{},{}", t + 1, cells.join(","));
        }
        out
    }
}

/// Channel rows `[M, L]` of the last `lookback` rows of an already
/// standardized view.
pub fn lookback_rows(view: &SeriesView, lookback: usize) -> Result<Tensor> {
    let n = view.n_rows();
    if n < lookback {
        return Err(Error::Data(format!(
            "forecast needs at least {lookback} input rows (the lookback), got {n}"
        )));
    }
    let tail = &view.values[(n - lookback) * view.n_cols..];
    Tensor::new(
        vec![view.n_cols, lookback],
        flatten_channels(tail, 1, lookback, view.n_cols),
    )
}

/// Forecast in standardized space, `[M, T]` channel rows.
pub fn forecast_normalized<F: Forecaster + ?Sized>(f: &F, standardized: &SeriesView, lookback: usize) -> Result<Tensor> {
    f.forecast_rows(&lookback_rows(standardized, lookback)?)
}

/// Standardizes `raw`, forecasts from its last `lookback` rows and maps the
/// result back to raw scale.
pub fn forecast<F: Forecaster + ?Sized>(f: &F, scaler: &Scaler, raw: &SeriesView, lookback: usize) -> Result<Forecast> {
    if scaler.mean.len() != raw.n_cols {
        return Err(Error::Dimension(format!(
            "scaler covers {} variables, input has {}",
            scaler.mean.len(),
            raw.n_cols
        )));
    }
    let pred = forecast_normalized(f, &scaler.transform(raw), lookback)?;
    let (m, t) = (raw.n_cols, pred.shape()[1]);
    let mut values = unflatten_channels(pred.data(), 1, t, m);
    for row in values.chunks_exact_mut(m) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = scaler.inverse_value(c, *v);
        }
    }
    Ok(Forecast {
        values,
        horizon: t,
        channels: m,
    })
}
