use serde::{Deserialize, Serialize};

use crate::decompose::{check_alpha, DEFAULT_ALPHA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub patch_len: usize,
    pub stride: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch_len: 16,
            stride: 8,
        }
    }
}

impl PatchConfig {
    /// Patch count after replicating the last value `stride` times:
    /// `floor((L - P) / S) + 2`.
    pub fn num_patches(&self, lookback: usize) -> Result<usize> {
        if self.patch_len == 0 || self.stride == 0 {
            return Err(Error::Config("patch length and stride must be positive".into()));
        }
        if lookback < self.patch_len {
            return Err(Error::Config(format!(
                "lookback {lookback} is shorter than patch length {}",
                self.patch_len
            )));
        }
        Ok((lookback - self.patch_len) / self.stride + 2)
    }
}

/// Which decomposed component feeds which stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    /// Trend through the linear stream, seasonal through the patched CNN stream.
    #[default]
    Original,
    Reversed,
    LinearOnly,
    NonlinearOnly,
}

impl std::str::FromStr for Routing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "original" => Ok(Routing::Original),
            "reversed" => Ok(Routing::Reversed),
            "linear_only" | "linear" => Ok(Routing::LinearOnly),
            "nonlinear_only" | "nonlinear" => Ok(Routing::NonlinearOnly),
            other => Err(Error::Parameter(format!("unknown stream routing '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    /// Number of variables M; RevIN keeps one affine pair per variable.
    pub channels: usize,
    pub patch: PatchConfig,
    /// EMA smoothing factor of the internal decomposition.
    pub alpha: f64,
    pub routing: Routing,
    pub revin: bool,
    pub revin_eps: f64,
    pub norm_eps: f64,
}

impl ModelConfig {
    pub fn new(lookback: usize, horizon: usize, channels: usize) -> Self {
        Self {
            lookback,
            horizon,
            channels,
            patch: PatchConfig::default(),
            alpha: DEFAULT_ALPHA,
            routing: Routing::Original,
            revin: true,
            revin_eps: 1e-5,
            norm_eps: 1e-5,
        }
    }

    pub fn with_patch(mut self, patch_len: usize, stride: usize) -> Self {
        self.patch = PatchConfig { patch_len, stride };
        self
    }

    pub fn num_patches(&self) -> Result<usize> {
        self.patch.num_patches(self.lookback)
    }

    pub fn validate(&self) -> Result<()> {
        check_lookback(self.lookback)?;
        if self.horizon == 0 || self.channels == 0 {
            return Err(Error::Config("horizon and channel count must be positive".into()));
        }
        self.num_patches()?;
        check_alpha(self.alpha)?;
        if !(self.revin_eps > 0.0 && self.norm_eps > 0.0) {
            return Err(Error::Config("normalization eps must be positive".into()));
        }
        Ok(())
    }
}

/// The linear stream halves the length twice, so lookbacks must be multiples of 4.
pub fn check_lookback(lookback: usize) -> Result<()> {
    if lookback == 0 || !lookback.is_multiple_of(4) {
        let down = lookback / 4 * 4;
        let up = down + 4;
        let nearest = if down > 0 && lookback - down <= up - lookback { down } else { up };
        return Err(Error::Config(format!(
            "lookback {lookback} must be a positive multiple of 4 (nearest valid: {nearest})"
        )));
    }
    Ok(())
}
