//! Evaluation metrics, forecasts and charts.

mod eval;
mod forecast;
pub mod plot;

pub use eval::{evaluate, pairwise_sum, EvalReport, Forecaster, Metrics, Scale};
pub use forecast::{forecast, forecast_normalized, lookback_rows, Forecast};
