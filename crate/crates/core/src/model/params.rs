use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform on `±1/sqrt(fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
}

/// Expected name, shape and initializer of every learnable tensor.
fn layout(cfg: &ModelConfig) -> Result<Vec<(&'static str, Vec<usize>, Init)>> {
    cfg.validate()?;
    let l = cfg.lookback;
    let t = cfg.horizon;
    let p = cfg.patch.patch_len;
    let n = cfg.num_patches()?;
    let m = cfg.channels;
    let (h1, h2) = (l / 2, l / 4);
    let np = n * p;
    use Init::*;
    Ok(vec![
        ("revin.gamma", vec![m], Ones),
        ("revin.beta", vec![m], Zeros),
        ("linear.fc1.weight", vec![l, l], FanIn(l)),
        ("linear.fc1.bias", vec![l], FanIn(l)),
        ("linear.ln1.gamma", vec![h1], Ones),
        ("linear.ln1.beta", vec![h1], Zeros),
        ("linear.fc2.weight", vec![h1, h1], FanIn(h1)),
        ("linear.fc2.bias", vec![h1], FanIn(h1)),
        ("linear.ln2.gamma", vec![h2], Ones),
        ("linear.ln2.beta", vec![h2], Zeros),
        ("linear.expand.weight", vec![h2, t], FanIn(h2)),
        ("linear.expand.bias", vec![t], FanIn(h2)),
        ("nonlinear.embed.weight", vec![p, p * p], FanIn(p)),
        ("nonlinear.embed.bias", vec![p * p], FanIn(p)),
        ("nonlinear.bn1.gamma", vec![n], Ones),
        ("nonlinear.bn1.beta", vec![n], Zeros),
        ("nonlinear.depthwise.weight", vec![n, 1, p], FanIn(p)),
        ("nonlinear.depthwise.bias", vec![n], FanIn(p)),
        ("nonlinear.bn2.gamma", vec![n], Ones),
        ("nonlinear.bn2.beta", vec![n], Zeros),
        ("nonlinear.residual.weight", vec![p * p, p], FanIn(p * p)),
        ("nonlinear.residual.bias", vec![p], FanIn(p * p)),
        ("nonlinear.pointwise.weight", vec![n, n, 1], FanIn(n)),
        ("nonlinear.pointwise.bias", vec![n], FanIn(n)),
        ("nonlinear.bn3.gamma", vec![n], Ones),
        ("nonlinear.bn3.beta", vec![n], Zeros),
        ("nonlinear.head1.weight", vec![np, 2 * np], FanIn(np)),
        ("nonlinear.head1.bias", vec![2 * np], FanIn(np)),
        ("nonlinear.head2.weight", vec![2 * np, t], FanIn(2 * np)),
        ("nonlinear.head2.bias", vec![t], FanIn(2 * np)),
        ("fusion.weight", vec![2 * t, t], FanIn(2 * t)),
        ("fusion.bias", vec![t], FanIn(2 * t)),
    ])
}

/// Every learnable tensor of the network, in a fixed order keyed by layer role.
#[derive(Debug, Clone, PartialEq)]
pub struct XPatchParams {
    entries: Vec<(String, Tensor)>,
}

impl XPatchParams {
    /// Seeded initialization; identical seeds give identical parameters.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = layout(cfg)?
            .into_iter()
            .map(|(name, shape, init)| {
                let n: usize = shape.iter().product();
                let data = match init {
                    Init::Ones => vec![1.0; n],
                    Init::Zeros => vec![0.0; n],
                    Init::FanIn(fan) => {
                        let bound = 1.0 / (fan as f64).sqrt();
                        (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                    }
                };
                let t = Tensor::new(shape, data).expect("layout shapes are consistent").with_grad();
                (name.to_string(), t)
            })
            .collect();
        Ok(Self { entries })
    }

    /// Shapes every tensor must have under `cfg`.
    pub fn expected_shapes(cfg: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>> {
        Ok(layout(cfg)?.into_iter().map(|(n, s, _)| (n.to_string(), s)).collect())
    }

    /// Builds a parameter set from named tensors, validating names and shapes.
    pub fn from_tensors(cfg: &ModelConfig, mut tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut entries = Vec::new();
        for (name, shape) in Self::expected_shapes(cfg)? {
            let pos = tensors
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter '{name}'")))?;
            let (_, t) = tensors.swap_remove(pos);
            if t.shape() != shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter '{name}' has shape {:?}, configuration requires {shape:?}",
                    t.shape()
                )));
            }
            let mut t = t;
            t.set_requires_grad(true);
            entries.push((name, t));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.entries[i].1)
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.zero_grad());
    }

    /// `(name, shape)` for every tensor, in order.
    pub fn shape_audit(&self) -> Vec<(String, Vec<usize>)> {
        self.entries.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect()
    }
}
