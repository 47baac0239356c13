use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `α₀·0.5^(t−1)`; epochs count from 1.
pub fn lr_standard(t: usize, alpha0: f64) -> f64 {
    alpha0 * 0.5f64.powi(t.saturating_sub(1) as i32)
}

/// `α₀` for `t < 3`, then `α₀·0.9^(t−3)`.
pub fn lr_patch_tst(t: usize, alpha0: f64) -> f64 {
    if t < 3 {
        alpha0
    } else {
        alpha0 * 0.9f64.powi((t - 3) as i32)
    }
}

/// Linear warm-up `α₀·t/w` followed by a half cosine reaching 0 at `total`.
pub fn lr_cosine_warmup(t: usize, alpha0: f64, w: usize, total: usize) -> f64 {
    if t < w {
        return alpha0 * t as f64 / w as f64;
    }
    if t >= total {
        return 0.0;
    }
    0.5 * alpha0 * (1.0 + (PI * (t - w) as f64 / (total - w) as f64).cos())
}

/// Difference of two logistic curves:
/// `α₀/(1+e^{−k(t−w)}) − α₀/(1+e^{−(k/s)(t−s·w)})`.
pub fn lr_sigmoid(t: usize, alpha0: f64, k: f64, s: f64, w: f64) -> f64 {
    let t = t as f64;
    // (k/s)(t − s·w) evaluated as k(t/s − w); exact zero at t = 0.
    let rise = alpha0 / (1.0 + (-k * (t - w)).exp());
    let fall = alpha0 / (1.0 + (-k * (t / s - w)).exp());
    rise - fall
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Standard,
    PatchTst,
    CosineWarmup,
    Sigmoid,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(ScheduleKind::Standard),
            "patch_tst" | "patchtst" => Ok(ScheduleKind::PatchTst),
            "cosine_warmup" | "cosine" => Ok(ScheduleKind::CosineWarmup),
            "sigmoid" => Ok(ScheduleKind::Sigmoid),
            other => Err(Error::Parameter(format!(
                "unknown schedule '{other}' (expected standard, patch_tst, cosine_warmup or sigmoid)"
            ))),
        }
    }
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::Standard => "standard",
            ScheduleKind::PatchTst => "patch_tst",
            ScheduleKind::CosineWarmup => "cosine_warmup",
            ScheduleKind::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerSpec {
    pub kind: ScheduleKind,
    pub alpha0: f64,
    /// Logistic growth rate.
    pub k: f64,
    /// Smoothing rate of the decaying curve.
    pub s: f64,
    /// Warm-up coefficient.
    pub w: f64,
    pub total_epochs: usize,
}

impl Default for SchedulerSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Sigmoid,
            alpha0: 1e-4,
            k: 0.5,
            s: 10.0,
            w: 10.0,
            total_epochs: 100,
        }
    }
}

impl SchedulerSpec {
    pub fn lr(&self, t: usize) -> f64 {
        match self.kind {
            ScheduleKind::Standard => lr_standard(t, self.alpha0),
            ScheduleKind::PatchTst => lr_patch_tst(t, self.alpha0),
            ScheduleKind::CosineWarmup => lr_cosine_warmup(t, self.alpha0, self.w as usize, self.total_epochs),
            ScheduleKind::Sigmoid => lr_sigmoid(t, self.alpha0, self.k, self.s, self.w),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Config(format!("initial learning rate must be positive, got {}", self.alpha0)));
        }
        match self.kind {
            ScheduleKind::Sigmoid if !(self.k > 0.0 && self.s > 1.0 && self.w >= 1.0) => Err(Error::Config(format!(
                "sigmoid schedule needs k > 0, s > 1, w >= 1 (got k={}, s={}, w={})",
                self.k, self.s, self.w
            ))),
            ScheduleKind::CosineWarmup if self.w < 1.0 || self.w as usize >= self.total_epochs => Err(Error::Config(
                format!("cosine warm-up needs 1 <= w < total epochs (got w={}, total={})", self.w, self.total_epochs),
            )),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        let a = 1e-3;
        assert_eq!(lr_standard(1, a), a);
        assert_eq!(lr_standard(2, a), a / 2.0);
        assert_eq!(lr_standard(4, a), a / 8.0);
        assert_eq!(lr_patch_tst(2, a), a);
        assert_eq!(lr_patch_tst(3, a), a);
        assert_eq!(lr_patch_tst(13, a), a * 0.9f64.powi(10));
        assert_eq!(lr_cosine_warmup(10, a, 10, 100), a);
        assert_eq!(lr_cosine_warmup(100, a, 10, 100), 0.0);
        assert_eq!(lr_cosine_warmup(5, a, 10, 100), a / 2.0);
    }

    #[test]
    fn sigmoid_anchors() {
        assert_eq!(lr_sigmoid(0, 1e-4, 0.5, 10.0, 10.0), 0.0);
        let expected = 1e-4 / 2.0 - 1e-4 / (1.0 + 4.5f64.exp());
        assert!((lr_sigmoid(10, 1e-4, 0.5, 10.0, 10.0) - 4.890e-5).abs() < 1e-8);
        assert!((lr_sigmoid(10, 1e-4, 0.5, 10.0, 10.0) - expected).abs() < 1e-18);
        assert!(lr_sigmoid(2000, 1e-4, 0.5, 10.0, 10.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_unimodal_and_non_negative() {
        let lr: Vec<f64> = (0..=100).map(|t| lr_sigmoid(t, 1e-4, 0.5, 10.0, 10.0)).collect();
        assert!(lr.iter().all(|v| *v >= 0.0));
        let signs: Vec<bool> = lr.windows(2).map(|w| w[1] >= w[0]).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn spec_validation() {
        assert!(SchedulerSpec::default().validate().is_ok());
        let bad = SchedulerSpec {
            s: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!("cosine".parse::<ScheduleKind>().is_ok());
        assert!("step".parse::<ScheduleKind>().is_err());
    }
}
