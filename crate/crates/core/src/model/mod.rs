//! The dual-stream patch network.
//!
//! Rows are univariate series (channel-independent). Each row is instance
//! normalized, split by EMA into trend and seasonal parts, passed through a
//! linear MLP stream and a patched depthwise-separable CNN stream, fused by a
//! linear layer and denormalized.

pub mod checkpoint;
mod config;
mod params;
mod revin;

pub use config::{check_lookback, ModelConfig, PatchConfig, Routing};
pub use params::XPatchParams;
pub use revin::{revin_denormalize, revin_normalize, RevInState};

use crate::autograd::{BatchNormStats, Tape, Tensor, Var};
use crate::decompose::ema_matrix;
use crate::error::{Error, Result};

/// Tape handles of every parameter, index-aligned with [`XPatchParams`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn bind(tape: &mut Tape, params: &XPatchParams) -> Self {
        Self {
            vars: params.iter().map(|(_, t)| tape.leaf(t)).collect(),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn get(&self, params: &XPatchParams, name: &str) -> Var {
        let i = params
            .index_of(name)
            .unwrap_or_else(|| panic!("parameter '{name}' missing from the layout"));
        self.vars[i]
    }
}

/// Flat gather indices that unfold `[rows, len]` into `[rows, N, P]` after
/// replicating the last value `stride` times.
fn patch_index(rows: usize, len: usize, cfg: PatchConfig) -> Result<(Vec<usize>, usize)> {
    let n = cfg.num_patches(len)?;
    let p = cfg.patch_len;
    let mut idx = Vec::with_capacity(rows * n * p);
    for r in 0..rows {
        for k in 0..n {
            for j in 0..p {
                let pos = (k * cfg.stride + j).min(len - 1);
                idx.push(r * len + pos);
            }
        }
    }
    Ok((idx, n))
}

/// Unfolds `x: [R, L]` into `[R, N, P]` patches.
pub fn make_patches(x: &Tensor, cfg: PatchConfig) -> Result<Tensor> {
    let (rows, len) = match x.shape() {
        [r, l] => (*r, *l),
        s => return Err(Error::Dimension(format!("make_patches expects [rows, length], got {s:?}"))),
    };
    let (idx, n) = patch_index(rows, len, cfg)?;
    let data = idx.iter().map(|&i| x.data()[i]).collect();
    Tensor::new(vec![rows, n, cfg.patch_len], data)
}

pub(crate) fn patches_on_tape(tape: &mut Tape, x: Var, cfg: PatchConfig) -> Result<Var> {
    let (rows, len) = match tape.shape(x) {
        [r, l] => (*r, *l),
        s => return Err(Error::Dimension(format!("make_patches expects [rows, length], got {s:?}"))),
    };
    let (idx, n) = patch_index(rows, len, cfg)?;
    tape.gather(x, idx, vec![rows, n, cfg.patch_len])
}

/// Two `linear → avg_pool(2) → layer_norm` blocks followed by an expansion to
/// the horizon; no activations.
pub fn linear_stream(tape: &mut Tape, x: Var, params: &XPatchParams, bound: &Bound, eps: f64) -> Result<Var> {
    let p = |name: &str| bound.get(params, name);
    let h = tape.linear(x, p("linear.fc1.weight"), Some(p("linear.fc1.bias")))?;
    let h = tape.avg_pool1d(h, 2, 2)?;
    let h = tape.layer_norm(h, p("linear.ln1.gamma"), p("linear.ln1.beta"), eps)?;
    let h = tape.linear(h, p("linear.fc2.weight"), Some(p("linear.fc2.bias")))?;
    let h = tape.avg_pool1d(h, 2, 2)?;
    let h = tape.layer_norm(h, p("linear.ln2.gamma"), p("linear.ln2.beta"), eps)?;
    tape.linear(h, p("linear.expand.weight"), Some(p("linear.expand.bias")))
}

/// Patch embedding, depthwise conv with a linear residual, pointwise conv and
/// a two-layer flatten head.
pub fn nonlinear_stream(
    tape: &mut Tape,
    x: Var,
    params: &XPatchParams,
    bound: &Bound,
    patch: PatchConfig,
    stats: &mut [BatchNormStats; 3],
    training: bool,
) -> Result<Var> {
    let p = |name: &str| bound.get(params, name);
    let rows = tape.shape(x)[0];
    let patches = patches_on_tape(tape, x, patch)?;
    let n = tape.shape(patches)[1];

    let e = tape.linear(patches, p("nonlinear.embed.weight"), Some(p("nonlinear.embed.bias")))?;
    let e = tape.gelu(e);
    let embedded = tape.batch_norm(e, p("nonlinear.bn1.gamma"), p("nonlinear.bn1.beta"), &mut stats[0], training)?;

    let d = tape.grouped_conv1d(
        embedded,
        p("nonlinear.depthwise.weight"),
        p("nonlinear.depthwise.bias"),
        patch.patch_len,
        n,
    )?;
    let d = tape.gelu(d);
    let d = tape.batch_norm(d, p("nonlinear.bn2.gamma"), p("nonlinear.bn2.beta"), &mut stats[1], training)?;
    let residual = tape.linear(embedded, p("nonlinear.residual.weight"), Some(p("nonlinear.residual.bias")))?;
    let d = tape.add(d, residual)?;

    let c = tape.grouped_conv1d(d, p("nonlinear.pointwise.weight"), p("nonlinear.pointwise.bias"), 1, 1)?;
    let c = tape.gelu(c);
    let c = tape.batch_norm(c, p("nonlinear.bn3.gamma"), p("nonlinear.bn3.beta"), &mut stats[2], training)?;

    let flat = tape.reshape(c, vec![rows, n * patch.patch_len])?;
    let h = tape.linear(flat, p("nonlinear.head1.weight"), Some(p("nonlinear.head1.bias")))?;
    let h = tape.gelu(h);
    tape.linear(h, p("nonlinear.head2.weight"), Some(p("nonlinear.head2.bias")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct XPatch {
    pub config: ModelConfig,
    pub params: XPatchParams,
    /// Running statistics of the three batch-norm layers of the CNN stream.
    pub bn_stats: [BatchNormStats; 3],
}

impl XPatch {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = XPatchParams::init(&config, seed)?;
        let n = config.num_patches()?;
        Ok(Self {
            config,
            params,
            bn_stats: std::array::from_fn(|_| BatchNormStats::new(n)),
        })
    }

    pub fn from_parts(config: ModelConfig, params: XPatchParams, bn_stats: [BatchNormStats; 3]) -> Result<Self> {
        let n = config.num_patches()?;
        if bn_stats.iter().any(|s| s.channels() != n) {
            return Err(Error::Config(format!("batch-norm statistics must cover {n} patches")));
        }
        Ok(Self {
            config,
            params,
            bn_stats,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        match x.shape() {
            [r, l] if *l == self.config.lookback && *r > 0 && r % self.config.channels == 0 => Ok(()),
            s => Err(Error::Dimension(format!(
                "model expects [k·{}, {}] inputs, got {s:?}",
                self.config.channels, self.config.lookback
            ))),
        }
    }

    /// Records the full forward pass. In training mode the batch-norm running
    /// statistics are updated in place.
    pub fn forward(&mut self, tape: &mut Tape, x: &Tensor, training: bool) -> Result<(Var, Bound)> {
        if training {
            let mut stats = std::mem::replace(&mut self.bn_stats, std::array::from_fn(|_| BatchNormStats::new(0)));
            let out = self.forward_with(tape, x, &mut stats, true);
            self.bn_stats = stats;
            out
        } else {
            let mut stats = self.bn_stats.clone();
            self.forward_with(tape, x, &mut stats, false)
        }
    }

    fn forward_with(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        stats: &mut [BatchNormStats; 3],
        training: bool,
    ) -> Result<(Var, Bound)> {
        self.check_input(x)?;
        let cfg = &self.config;
        let params = &self.params;
        let bound = Bound::bind(tape, params);
        let p = |name: &str| bound.get(params, name);

        let (normed, state) = if cfg.revin {
            let (v, s) = revin::normalize_on_tape(tape, x, p("revin.gamma"), p("revin.beta"), cfg.channels, cfg.revin_eps)?;
            (v, Some(s))
        } else {
            (tape.leaf(&Tensor::new(x.shape().to_vec(), x.data().to_vec())?), None)
        };
        let trend = tape.row_map(normed, ema_matrix(cfg.lookback, cfg.alpha)?)?;
        let seasonal = tape.sub(normed, trend)?;

        let eps = cfg.norm_eps;
        let lin = |tape: &mut Tape, v: Var| linear_stream(tape, v, params, &bound, eps);
        let (first, second) = match cfg.routing {
            Routing::Original => {
                let a = lin(tape, trend)?;
                (a, nonlinear_stream(tape, seasonal, params, &bound, cfg.patch, stats, training)?)
            }
            Routing::Reversed => {
                let a = lin(tape, seasonal)?;
                (a, nonlinear_stream(tape, trend, params, &bound, cfg.patch, stats, training)?)
            }
            Routing::LinearOnly => (lin(tape, trend)?, lin(tape, seasonal)?),
            Routing::NonlinearOnly => (
                nonlinear_stream(tape, trend, params, &bound, cfg.patch, stats, training)?,
                nonlinear_stream(tape, seasonal, params, &bound, cfg.patch, stats, training)?,
            ),
        };
        let joined = tape.concat(&[first, second], 1)?;
        let fused = tape.linear(joined, p("fusion.weight"), Some(p("fusion.bias")))?;
        let out = match state {
            Some(s) => revin::denormalize_on_tape(tape, fused, p("revin.gamma"), p("revin.beta"), cfg.channels, &s)?,
            None => fused,
        };
        Ok((out, bound))
    }

    /// Eval-mode prediction `[R, L] -> [R, T]`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let mut stats = self.bn_stats.clone();
        let (out, _) = self.forward_with(&mut tape, x, &mut stats, false)?;
        Ok(tape.to_tensor(out))
    }

    /// Adds the tape gradients of every bound parameter into `self.params`.
    pub fn accumulate_grads(&mut self, tape: &Tape, bound: &Bound) -> Result<()> {
        for (i, v) in bound.vars.iter().enumerate() {
            if let Some(g) = tape.grad(*v) {
                self.params.tensor_mut(i).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}
