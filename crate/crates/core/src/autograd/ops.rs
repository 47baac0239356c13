use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::autograd::gemm::{gemm, Layout};
use crate::autograd::tape::{slot, Op, Tape, Var};
use crate::autograd::tensor::numel;
use crate::error::{Error, Result};

/// Running per-channel statistics of a batch-normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    /// Number of training batches folded into the running statistics.
    pub batches_seen: u64,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            batches_seen: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn dim_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension(format!("{what}: shapes {a:?} and {b:?} are incompatible"))
}

fn last(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

impl Tape {
    fn any_grad(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// `x·w + b` over the trailing axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || xs.is_empty() || last(&xs) != ws[0] {
            return Err(dim_err("linear input vs weight", &xs, &ws));
        }
        let (fan_in, fan_out) = (ws[0], ws[1]);
        if let Some(b) = b {
            let bs = self.shape(b);
            if bs != [fan_out] {
                return Err(dim_err("linear weight vs bias", &ws, bs));
            }
        }
        let rows = numel(&xs) / fan_in;
        let mut out = vec![0.0; rows * fan_out];
        if let Some(b) = b {
            let bv = self.value(b);
            for row in out.chunks_exact_mut(fan_out) {
                row.copy_from_slice(bv);
            }
        }
        gemm(
            rows,
            fan_in,
            fan_out,
            self.value(x),
            Layout::row_major(fan_in),
            self.value(w),
            Layout::row_major(fan_out),
            if b.is_some() { 1.0 } else { 0.0 },
            &mut out,
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = fan_out;
        let rg = self.any_grad(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(shape, out, Op::Linear { x, w, b }, rg))
    }

    /// Mean over windows of the trailing axis; a trailing remainder is dropped.
    pub fn avg_pool1d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let n = last(&xs);
        if kernel == 0 || stride == 0 || kernel > n || xs.is_empty() {
            return Err(Error::Dimension(format!(
                "avg_pool1d kernel {kernel} / stride {stride} does not fit trailing extent of {xs:?}"
            )));
        }
        let m = (n - kernel) / stride + 1;
        let rows = numel(&xs) / n;
        let xv = self.value(x);
        let inv = 1.0 / kernel as f64;
        let mut out = Vec::with_capacity(rows * m);
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            for j in 0..m {
                out.push(row[j * stride..j * stride + kernel].iter().sum::<f64>() * inv);
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = m;
        let rg = self.requires_grad(x);
        Ok(self.push(shape, out, Op::AvgPool { x, kernel, stride }, rg))
    }

    /// Per-instance normalization over the trailing axis (population variance), then affine.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let n = last(&xs);
        if xs.is_empty() || self.shape(gamma) != [n] || self.shape(beta) != [n] {
            return Err(dim_err("layer_norm input vs affine", &xs, self.shape(gamma)));
        }
        let rows = numel(&xs) / n;
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            xs,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Batch normalization of `x: [B, C, n]` per channel over `(B, n)`.
    ///
    /// In training mode the batch statistics normalize the input and are folded
    /// into `stats` with its momentum; otherwise the running statistics are used.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BatchNormStats,
        training: bool,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::Dimension(format!(
                "batch_norm expects [batch, channels, length], got {xs:?}"
            )));
        }
        let (bsz, c, n) = (xs[0], xs[1], xs[2]);
        if stats.channels() != c || self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(dim_err("batch_norm input vs channel parameters", &xs, self.shape(gamma)));
        }
        if !training && stats.batches_seen == 0 {
            log::warn!("batch_norm evaluated before any training batch; using initial statistics");
        }
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let m = (bsz * n) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        if training {
            for bi in 0..bsz {
                for ci in 0..c {
                    let base = (bi * c + ci) * n;
                    mean[ci] += xv[base..base + n].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            for bi in 0..bsz {
                for ci in 0..c {
                    let base = (bi * c + ci) * n;
                    var[ci] += xv[base..base + n].iter().map(|v| (v - mean[ci]).powi(2)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
        } else {
            mean.copy_from_slice(&stats.mean);
            var.copy_from_slice(&stats.var);
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for bi in 0..bsz {
            for ci in 0..c {
                let base = (bi * c + ci) * n;
                for j in base..base + n {
                    let h = (xv[j] - mean[ci]) * inv_std[ci];
                    xhat[j] = h;
                    out[j] = h * g[ci] + b[ci];
                }
            }
        }
        if training {
            let mom = stats.momentum;
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            for ci in 0..c {
                stats.mean[ci] = (1.0 - mom) * stats.mean[ci] + mom * mean[ci];
                stats.var[ci] = (1.0 - mom) * stats.var[ci] + mom * var[ci] * unbias;
            }
            stats.batches_seen += 1;
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            xs,
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: training,
            },
            rg,
        ))
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| v * std_normal_cdf(v)).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.requires_grad(x));
        self.push(shape, out, Op::Gelu { x }, rg)
    }

    /// Grouped 1-D cross-correlation without padding.
    ///
    /// `x: [B, C, n]`, `w: [C_out, C/groups, k]`, `b: [C_out]`.
    pub fn grouped_conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, groups: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 {
            return Err(dim_err("grouped_conv1d input vs kernel", &xs, &ws));
        }
        let (bsz, c_in, n) = (xs[0], xs[1], xs[2]);
        let (c_out, c_per, k) = (ws[0], ws[1], ws[2]);
        if groups == 0 || stride == 0 || c_in % groups != 0 || c_out % groups != 0 {
            return Err(Error::Config(format!(
                "grouped_conv1d: {c_in} input and {c_out} output channels are not divisible into {groups} groups"
            )));
        }
        if c_per != c_in / groups || k > n || self.shape(b) != [c_out] {
            return Err(dim_err("grouped_conv1d input vs kernel", &xs, &ws));
        }
        let len_out = (n - k) / stride + 1;
        let out_per = c_out / groups;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = vec![0.0; bsz * c_out * len_out];
        for bi in 0..bsz {
            for o in 0..c_out {
                let g0 = (o / out_per) * c_per;
                let dst = &mut out[(bi * c_out + o) * len_out..(bi * c_out + o + 1) * len_out];
                dst.iter_mut().for_each(|v| *v = bv[o]);
                for ci in 0..c_per {
                    let src = &xv[(bi * c_in + g0 + ci) * n..(bi * c_in + g0 + ci + 1) * n];
                    let ker = &wv[(o * c_per + ci) * k..(o * c_per + ci + 1) * k];
                    for (t, d) in dst.iter_mut().enumerate() {
                        let win = &src[t * stride..t * stride + k];
                        *d += win.iter().zip(ker).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(
            vec![bsz, c_out, len_out],
            out,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                groups,
            },
            rg,
        ))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*xs.first().ok_or_else(|| Error::Usage("concat of no tensors".into()))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::Dimension(format!("concat axis {axis} out of range for {first:?}")));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let same_rank = s.len() == first.len();
            if !same_rank || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(dim_err("concat", &first, s));
            }
            total += s[axis];
        }
        let outer = numel(&first[..axis]);
        let inner = numel(&first[axis + 1..]);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let block = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = self.any_grad(xs);
        Ok(self.push(shape, out, Op::Concat { xs: xs.to_vec(), axis }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != self.value(x).len() {
            return Err(dim_err("reshape", self.shape(x), &shape));
        }
        let (out, rg) = (self.value(x).to_vec(), self.requires_grad(x));
        Ok(self.push(shape, out, Op::Reshape { x }, rg))
    }

    /// Collapses all but the first `keep` axes into one trailing axis.
    pub fn flatten(&mut self, x: Var, keep: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if keep > s.len() {
            return Err(Error::Dimension(format!("cannot keep {keep} axes of {s:?}")));
        }
        let mut shape = s[..keep].to_vec();
        shape.push(numel(&s[keep..]));
        self.reshape(x, shape)
    }

    /// `out[i] = x[index[i]]` laid out with `shape`; backward scatter-adds.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let n = self.value(x).len();
        if numel(&shape) != index.len() {
            return Err(Error::Dimension(format!(
                "gather of {} indices cannot fill shape {shape:?}",
                index.len()
            )));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(Error::Dimension(format!("gather index {bad} out of range {n}")));
        }
        let xv = self.value(x);
        let out = index.iter().map(|&i| xv[i]).collect();
        let rg = self.requires_grad(x);
        Ok(self.push(shape, out, Op::Gather { x, index }, rg))
    }

    fn elementwise(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Vec<usize>, Vec<f64>, bool)> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(name, self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok((self.shape(a).to_vec(), out, self.any_grad(&[a, b])))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v, rg) = self.elementwise(a, b, "add", |x, y| x + y)?;
        Ok(self.push(s, v, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v, rg) = self.elementwise(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(s, v, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v, rg) = self.elementwise(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(s, v, Op::Mul { a, b }, rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (s, v, rg) = self.elementwise(a, b, "div", |x, y| x / y)?;
        Ok(self.push(s, v, Op::Div { a, b }, rg))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.abs()).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.requires_grad(x));
        self.push(shape, out, Op::Abs { x }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.requires_grad(x);
        self.push(Vec::new(), vec![s], Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.requires_grad(x);
        self.push(Vec::new(), vec![s], Op::Mean { x }, rg)
    }

    /// Mean absolute value of all elements.
    pub fn abs_mean(&mut self, x: Var) -> Var {
        let a = self.abs(x);
        self.mean(a)
    }

    /// Multiplies position `i` of the trailing axis by the constant `weights[i]`.
    pub fn scale_last_axis(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if last(&s) != weights.len() || s.is_empty() {
            return Err(dim_err("scale_last_axis", &s, &[weights.len()]));
        }
        let out = self
            .value(x)
            .chunks_exact(weights.len())
            .flat_map(|row| row.iter().zip(&weights).map(|(a, w)| a * w))
            .collect();
        let rg = self.requires_grad(x);
        Ok(self.push(s, out, Op::ScaleLastAxis { x, weights }, rg))
    }

    /// `out[r, :] = matrix · x[r, :]` for a constant row-major `n x n` matrix.
    pub fn row_map(&mut self, x: Var, matrix: Vec<f64>) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = last(&s);
        if s.is_empty() || matrix.len() != n * n {
            return Err(Error::Dimension(format!(
                "row_map matrix of {} entries does not match trailing extent of {s:?}",
                matrix.len()
            )));
        }
        let rows = numel(&s) / n;
        let mut out = vec![0.0; rows * n];
        gemm(
            rows,
            n,
            n,
            self.value(x),
            Layout::row_major(n),
            &matrix,
            Layout::transposed(n),
            0.0,
            &mut out,
        );
        let rg = self.requires_grad(x);
        Ok(self.push(s, out, Op::RowMap { x, matrix }, rg))
    }

    pub(crate) fn backprop(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let fan_in = nodes[w.0].shape[0];
                let fan_out = nodes[w.0].shape[1];
                let rows = nodes[x.0].value.len() / fan_in;
                if let Some(gx) = slot(nodes, grads, *x) {
                    gemm(
                        rows,
                        fan_out,
                        fan_in,
                        g,
                        Layout::row_major(fan_out),
                        &nodes[w.0].value,
                        Layout::transposed(fan_out),
                        1.0,
                        gx,
                    );
                }
                if let Some(gw) = slot(nodes, grads, *w) {
                    gemm(
                        fan_in,
                        rows,
                        fan_out,
                        &nodes[x.0].value,
                        Layout::transposed(fan_in),
                        g,
                        Layout::row_major(fan_out),
                        1.0,
                        gw,
                    );
                }
                if let Some(b) = b {
                    if let Some(gb) = slot(nodes, grads, *b) {
                        for row in g.chunks_exact(fan_out) {
                            gb.iter_mut().zip(row).for_each(|(a, d)| *a += d);
                        }
                    }
                }
            }
            Op::AvgPool { x, kernel, stride } => {
                let n = last(&nodes[x.0].shape);
                let m = last(&node.shape);
                if let Some(gx) = slot(nodes, grads, *x) {
                    let inv = 1.0 / *kernel as f64;
                    for (r, grow) in g.chunks_exact(m).enumerate() {
                        for (j, d) in grow.iter().enumerate() {
                            let base = r * n + j * stride;
                            gx[base..base + kernel].iter_mut().for_each(|a| *a += d * inv);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = last(&node.shape);
                let gam = &nodes[gamma.0].value;
                if let Some(gg) = slot(nodes, grads, *gamma) {
                    for (grow, hrow) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for j in 0..n {
                            gg[j] += grow[j] * hrow[j];
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *beta) {
                    for grow in g.chunks_exact(n) {
                        gb.iter_mut().zip(grow).for_each(|(a, d)| *a += d);
                    }
                }
                if let Some(gx) = slot(nodes, grads, *x) {
                    let nf = n as f64;
                    for (r, (grow, hrow)) in g.chunks_exact(n).zip(xhat.chunks_exact(n)).enumerate() {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..n {
                            let dh = grow[j] * gam[j];
                            s1 += dh;
                            s2 += dh * hrow[j];
                        }
                        let k = inv_std[r] / nf;
                        for j in 0..n {
                            let dh = grow[j] * gam[j];
                            gx[r * n + j] += k * (nf * dh - s1 - hrow[j] * s2);
                        }
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (bsz, c, n) = (node.shape[0], node.shape[1], node.shape[2]);
                let gam = &nodes[gamma.0].value;
                let mut sum_g = vec![0.0; c];
                let mut sum_gh = vec![0.0; c];
                for bi in 0..bsz {
                    for ci in 0..c {
                        let base = (bi * c + ci) * n;
                        for j in base..base + n {
                            sum_g[ci] += g[j];
                            sum_gh[ci] += g[j] * xhat[j];
                        }
                    }
                }
                if let Some(gg) = slot(nodes, grads, *gamma) {
                    gg.iter_mut().zip(&sum_gh).for_each(|(a, d)| *a += d);
                }
                if let Some(gb) = slot(nodes, grads, *beta) {
                    gb.iter_mut().zip(&sum_g).for_each(|(a, d)| *a += d);
                }
                if let Some(gx) = slot(nodes, grads, *x) {
                    let m = (bsz * n) as f64;
                    for bi in 0..bsz {
                        for ci in 0..c {
                            let base = (bi * c + ci) * n;
                            let scale = gam[ci] * inv_std[ci];
                            for j in base..base + n {
                                gx[j] += if *batch_stats {
                                    scale / m * (m * g[j] - sum_g[ci] - xhat[j] * sum_gh[ci])
                                } else {
                                    scale * g[j]
                                };
                            }
                        }
                    }
                }
            }
            Op::Gelu { x } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((a, &v), d) in gx.iter_mut().zip(&nodes[x.0].value).zip(g) {
                        *a += d * (std_normal_cdf(v) + v * std_normal_pdf(v));
                    }
                }
            }
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                groups,
            } => {
                let (bsz, c_in, n) = {
                    let s = &nodes[x.0].shape;
                    (s[0], s[1], s[2])
                };
                let (c_out, c_per, k) = {
                    let s = &nodes[w.0].shape;
                    (s[0], s[1], s[2])
                };
                let len_out = node.shape[2];
                let out_per = c_out / groups;
                if let Some(gb) = slot(nodes, grads, *b) {
                    for bi in 0..bsz {
                        for o in 0..c_out {
                            let base = (bi * c_out + o) * len_out;
                            gb[o] += g[base..base + len_out].iter().sum::<f64>();
                        }
                    }
                }
                let xv = &nodes[x.0].value;
                let wv = &nodes[w.0].value;
                if let Some(gw) = slot(nodes, grads, *w) {
                    for bi in 0..bsz {
                        for o in 0..c_out {
                            let g0 = (o / out_per) * c_per;
                            let grow = &g[(bi * c_out + o) * len_out..(bi * c_out + o + 1) * len_out];
                            for ci in 0..c_per {
                                let src = &xv[(bi * c_in + g0 + ci) * n..(bi * c_in + g0 + ci + 1) * n];
                                let ker = &mut gw[(o * c_per + ci) * k..(o * c_per + ci + 1) * k];
                                for (t, d) in grow.iter().enumerate() {
                                    let win = &src[t * stride..t * stride + k];
                                    ker.iter_mut().zip(win).for_each(|(a, v)| *a += d * v);
                                }
                            }
                        }
                    }
                }
                if let Some(gx) = slot(nodes, grads, *x) {
                    for bi in 0..bsz {
                        for o in 0..c_out {
                            let g0 = (o / out_per) * c_per;
                            let grow = &g[(bi * c_out + o) * len_out..(bi * c_out + o + 1) * len_out];
                            for ci in 0..c_per {
                                let base = (bi * c_in + g0 + ci) * n;
                                let ker = &wv[(o * c_per + ci) * k..(o * c_per + ci + 1) * k];
                                for (t, d) in grow.iter().enumerate() {
                                    let dst = &mut gx[base + t * stride..base + t * stride + k];
                                    dst.iter_mut().zip(ker).for_each(|(a, w)| *a += d * w);
                                }
                            }
                        }
                    }
                }
            }
            Op::Concat { xs, axis } => {
                let inner = numel(&node.shape[axis + 1..]);
                let outer = numel(&node.shape[..*axis]);
                let total = node.shape[*axis] * inner;
                let mut offset = 0;
                for v in xs {
                    let block = nodes[v.0].shape[*axis] * inner;
                    if let Some(gx) = slot(nodes, grads, *v) {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + block];
                            gx[o * block..(o + 1) * block]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(a, d)| *a += d);
                        }
                    }
                    offset += block;
                }
            }
            Op::Reshape { x } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, d)| *a += d);
                }
            }
            Op::Gather { x, index } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (&ix, d) in index.iter().zip(g) {
                        gx[ix] += d;
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if let Some(gv) = slot(nodes, grads, *v) {
                        gv.iter_mut().zip(g).for_each(|(s, d)| *s += d);
                    }
                }
            }
            Op::Sub { a, b } => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(s, d)| *s += d);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(s, d)| *s -= d);
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((s, d), y) in ga.iter_mut().zip(g).zip(bv) {
                        *s += d * y;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((s, d), x) in gb.iter_mut().zip(g).zip(av) {
                        *s += d * x;
                    }
                }
            }
            Op::Div { a, b } => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((s, d), y) in ga.iter_mut().zip(g).zip(bv) {
                        *s += d / y;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for (((s, d), x), y) in gb.iter_mut().zip(g).zip(av).zip(bv) {
                        *s -= d * x / (y * y);
                    }
                }
            }
            Op::Abs { x } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((s, d), v) in gx.iter_mut().zip(g).zip(&nodes[x.0].value) {
                        *s += if *v > 0.0 {
                            *d
                        } else if *v < 0.0 {
                            -d
                        } else {
                            0.0
                        };
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().for_each(|s| *s += g[0]);
                }
            }
            Op::Mean { x } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    let d = g[0] / gx.len() as f64;
                    gx.iter_mut().for_each(|s| *s += d);
                }
            }
            Op::ScaleLastAxis { x, weights } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (srow, grow) in gx.chunks_exact_mut(weights.len()).zip(g.chunks_exact(weights.len())) {
                        for ((s, d), w) in srow.iter_mut().zip(grow).zip(weights) {
                            *s += d * w;
                        }
                    }
                }
            }
            Op::RowMap { x, matrix } => {
                let n = last(&node.shape);
                let rows = g.len() / n;
                if let Some(gx) = slot(nodes, grads, *x) {
                    gemm(
                        rows,
                        n,
                        n,
                        g,
                        Layout::row_major(n),
                        matrix,
                        Layout::row_major(n),
                        1.0,
                        gx,
                    );
                }
            }
        }
    }
}
