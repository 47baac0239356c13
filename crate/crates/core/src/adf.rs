//! Augmented Dickey-Fuller unit-root test with a constant term.
//!
//! `Δy_t = c + γ·y_{t−1} + Σᵢ φᵢ·Δy_{t−i} + ε`; the statistic is the OLS
//! t-ratio of `γ`. P-values follow MacKinnon's (1994) approximate response
//! surface and critical values his (2010) finite-sample tables, both for the
//! constant-only case with a single series.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::autograd::std_normal_cdf;
use crate::decompose::{ema_recursive, DEFAULT_ALPHA};
use crate::error::{Error, Result};

// MacKinnon (1994), Table 3/4 coefficients for the "c" regression, N = 1,
// as distributed with statsmodels (adfvalues.py).
const TAU_MAX: f64 = 2.74;
const TAU_MIN: f64 = -18.83;
const TAU_STAR: f64 = -1.61;
const TAU_SMALLP: [f64; 3] = [2.1659, 1.4412, 3.8269e-2];
const TAU_LARGEP: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];

// MacKinnon (2010), Table 2, constant-only, N = 1: rows 1 %, 5 %, 10 %.
const CRIT_2010: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.040],
    [-2.56677, -1.5384, -2.809, 0.0],
];

const MAX_CONDITION: f64 = 1e12;

fn polyval_ascending(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Approximate p-value of an ADF t-statistic.
pub fn mackinnon_p(t_stat: f64) -> f64 {
    if t_stat > TAU_MAX {
        return 1.0;
    }
    if t_stat < TAU_MIN {
        return 0.0;
    }
    let coef: &[f64] = if t_stat <= TAU_STAR { &TAU_SMALLP } else { &TAU_LARGEP };
    std_normal_cdf(polyval_ascending(coef, t_stat))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValues {
    pub one: f64,
    pub five: f64,
    pub ten: f64,
}

/// Finite-sample critical values for a regression with `nobs` observations.
pub fn critical_values(nobs: usize) -> CriticalValues {
    let n = nobs as f64;
    let cv = |c: &[f64; 4]| c[0] + c[1] / n + c[2] / (n * n) + c[3] / (n * n * n);
    CriticalValues {
        one: cv(&CRIT_2010[0]),
        five: cv(&CRIT_2010[1]),
        ten: cv(&CRIT_2010[2]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PBucket {
    Below1,
    Below5,
    Below10,
    AtLeast10,
}

impl PBucket {
    pub fn of(p: f64) -> Self {
        if p < 0.01 {
            PBucket::Below1
        } else if p < 0.05 {
            PBucket::Below5
        } else if p < 0.10 {
            PBucket::Below10
        } else {
            PBucket::AtLeast10
        }
    }
}

impl fmt::Display for PBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PBucket::Below1 => "<0.01",
            PBucket::Below5 => "<0.05",
            PBucket::Below10 => "<0.10",
            PBucket::AtLeast10 => ">=0.10",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdfResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub p_bucket: PBucket,
    pub lags_used: usize,
    /// Observations in the regression, `n − 1 − lags`.
    pub n: usize,
    pub critical: CriticalValues,
    pub stationary_at_5pct: bool,
}

/// `floor(12·(n/100)^(1/4))`.
pub fn schwert_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

pub fn adf_test(x: &[f64], max_lags: Option<usize>) -> Result<AdfResult> {
    let n = x.len();
    let p = max_lags.unwrap_or_else(|| schwert_lags(n));
    if n < 20 + p {
        return Err(Error::Data(format!(
            "ADF with {p} lags needs at least {} observations, got {n}",
            20 + p
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("ADF input has a non-finite value at index {i}")));
    }
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let nobs = dx.len() - p;
    let k = p + 2;
    let critical = critical_values(nobs);
    // Exactly linear input: Δy is the constant alone and γ̂ = 0.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if dx.iter().all(|d| (d - dx[0]).abs() <= 8.0 * f64::EPSILON * scale) {
        let p_value = mackinnon_p(0.0);
        return Ok(AdfResult {
            t_stat: 0.0,
            p_value,
            p_bucket: PBucket::of(p_value),
            lags_used: p,
            n: nobs,
            critical,
            stationary_at_5pct: false,
        });
    }
    // Row r regresses dx[p + r] on x[p + r], dx[p + r − 1 ..= r] and a constant.
    let design = DMatrix::from_fn(nobs, k, |r, c| match c {
        0 => x[p + r],
        c if c <= p => dx[p + r - c],
        _ => 1.0,
    });
    let y = DVector::from_iterator(nobs, dx[p..].iter().copied());

    let norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    if let Some(c) = norms.iter().position(|v| *v == 0.0) {
        return Err(Error::Numerical(format!("ADF regressor {c} is identically zero")));
    }
    let mut scaled = design.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= norms[j];
    }
    let svd = scaled.svd(true, true);
    let sv = &svd.singular_values;
    let condition = sv.max() / sv.min();
    if !(condition < MAX_CONDITION) {
        return Err(Error::Numerical(format!(
            "ADF regression matrix is near-singular (condition number {condition:.3e})"
        )));
    }
    let beta_scaled = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Numerical(format!("ADF least squares failed: {e}")))?;
    let gamma = beta_scaled[0] / norms[0];
    let resid = &y - &design * DVector::from_iterator(k, beta_scaled.iter().zip(&norms).map(|(b, s)| b / s));
    let rss = resid.norm_squared();
    let v_t = svd.v_t.as_ref().expect("SVD computed with V");
    let var_scaled: f64 = (0..k).map(|j| (v_t[(j, 0)] / sv[j]).powi(2)).sum();

    let perfect_fit = rss <= (f64::EPSILON * y.norm()).powi(2);
    let t_stat = if perfect_fit {
        if gamma.abs() < 1e-10 {
            0.0
        } else {
            gamma.signum() * f64::INFINITY
        }
    } else {
        let sigma2 = rss / (nobs - k) as f64;
        beta_scaled[0] / (sigma2 * var_scaled).sqrt()
    };
    let p_value = mackinnon_p(t_stat);
    Ok(AdfResult {
        t_stat,
        p_value,
        p_bucket: PBucket::of(p_value),
        lags_used: p,
        n: nobs,
        critical,
        stationary_at_5pct: t_stat < critical.five,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Component {
    Raw,
    Trend,
    Seasonal,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Raw, Component::Trend, Component::Seasonal];

    pub fn name(&self) -> &'static str {
        match self {
            Component::Raw => "raw",
            Component::Trend => "trend",
            Component::Seasonal => "seasonal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRow {
    pub chunk_index: usize,
    pub component: Component,
    pub result: AdfResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSummary {
    pub component: Component,
    pub mean_p: f64,
    pub stationary: usize,
    pub chunks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedAdf {
    pub chunk_len: usize,
    pub alpha: f64,
    pub rows: Vec<ChunkRow>,
}

impl ChunkedAdf {
    pub const CSV_HEADER: &'static str = "chunk_index,component,t_stat,p_bucket,stationary";

    pub fn chunk_count(&self) -> usize {
        self.rows.len() / Component::ALL.len()
    }

    pub fn summary(&self, component: Component) -> ComponentSummary {
        let rows: Vec<&ChunkRow> = self.rows.iter().filter(|r| r.component == component).collect();
        let ps: Vec<f64> = rows.iter().map(|r| r.result.p_value).collect();
        ComponentSummary {
            component,
            mean_p: crate::report::pairwise_sum(&ps) / ps.len() as f64,
            stationary: rows.iter().filter(|r| r.result.stationary_at_5pct).count(),
            chunks: rows.len(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.chunk_index,
                r.component.name(),
                r.result.t_stat,
                r.result.p_bucket,
                r.result.stationary_at_5pct
            ));
        }
        out
    }
}

pub const DEFAULT_CHUNK_LEN: usize = 720;

/// Splits `x` into non-overlapping `chunk_len` chunks, EMA-decomposes each
/// chunk and runs the ADF test on the raw chunk, its trend and its seasonal part.
pub fn chunked_adf(x: &[f64], chunk_len: usize, alpha: f64, max_lags: Option<usize>) -> Result<ChunkedAdf> {
    if chunk_len == 0 || x.len() < chunk_len {
        return Err(Error::Data(format!(
            "series of {} points is shorter than one chunk of {chunk_len}",
            x.len()
        )));
    }
    let mut rows = Vec::new();
    for (i, chunk) in x.chunks_exact(chunk_len).enumerate() {
        let parts = ema_recursive(chunk, alpha)?;
        for component in Component::ALL {
            let series = match component {
                Component::Raw => chunk,
                Component::Trend => &parts.trend[..],
                Component::Seasonal => &parts.seasonal[..],
            };
            rows.push(ChunkRow {
                chunk_index: i,
                component,
                result: adf_test(series, max_lags)?,
            });
        }
    }
    Ok(ChunkedAdf {
        chunk_len,
        alpha,
        rows,
    })
}

/// [`chunked_adf`] with length-720 chunks and the default smoothing factor.
pub fn chunked_adf_default(x: &[f64]) -> Result<ChunkedAdf> {
    chunked_adf(x, DEFAULT_CHUNK_LEN, DEFAULT_ALPHA, None)
}
