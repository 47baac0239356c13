#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xpatch::autograd::gradcheck::{self, relative_error};
use xpatch::autograd::{BatchNormStats, Tape, Tensor, Var};
use xpatch::decompose::ema_matrix;
use xpatch::model::{linear_stream, nonlinear_stream, Bound, ModelConfig, XPatch, XPatchParams};
use xpatch::Result;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), uniform(rng, n, -1.0, 1.0)).unwrap().with_grad()
}

/// Tensor whose entries stay at least `0.2` away from zero.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.2..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap().with_grad()
}

/// Reduces `out` to a scalar through fixed random weights so every output
/// element contributes a distinct gradient.
pub fn readout(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let mut r = rng(seed ^ 0xA5A5);
    let w = uniform(&mut r, n, -1.0, 1.0).into_iter().map(|v| v / (n as f64).sqrt()).collect();
    let w = tape.constant(shape, w)?;
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

pub struct Case {
    pub name: &'static str,
    pub max_rel_err: f64,
}

fn op(name: &'static str, inputs: &[Tensor], seed: u64, f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> Case {
    let report = gradcheck::check(inputs, H, |tape, v| {
        let out = f(tape, v)?;
        readout(tape, out, seed)
    })
    .unwrap_or_else(|e| panic!("{name}: {e}"));
    assert!(report.checked > 0, "{name} checked nothing");
    Case {
        name,
        max_rel_err: report.max_rel_err,
    }
}

/// Finite-difference checks of every differentiable tape operation.
pub fn op_cases(seed: u64) -> Vec<Case> {
    let mut r = rng(seed);
    let mut out = Vec::new();

    let (x, w, b) = (rand_tensor(&mut r, &[3, 5]), rand_tensor(&mut r, &[5, 4]), rand_tensor(&mut r, &[4]));
    out.push(op("linear", &[x, w, b], seed, |t, v| t.linear(v[0], v[1], Some(v[2]))));
    let (x, w) = (rand_tensor(&mut r, &[2, 3, 4]), rand_tensor(&mut r, &[4, 6]));
    out.push(op("linear_3d_no_bias", &[x, w], seed, |t, v| t.linear(v[0], v[1], None)));

    let x = rand_tensor(&mut r, &[3, 9]);
    out.push(op("avg_pool1d", &[x], seed, |t, v| t.avg_pool1d(v[0], 2, 2)));
    let x = rand_tensor(&mut r, &[2, 7]);
    out.push(op("avg_pool1d_overlap", &[x], seed, |t, v| t.avg_pool1d(v[0], 3, 1)));

    let (x, g, b) = (rand_tensor(&mut r, &[3, 6]), rand_tensor(&mut r, &[6]), rand_tensor(&mut r, &[6]));
    out.push(op("layer_norm", &[x, g, b], seed, |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)));

    let (x, g, b) = (rand_tensor(&mut r, &[4, 3, 5]), rand_tensor(&mut r, &[3]), rand_tensor(&mut r, &[3]));
    out.push(op("batch_norm_train", &[x.clone(), g.clone(), b.clone()], seed, |t, v| {
        t.batch_norm(v[0], v[1], v[2], &mut BatchNormStats::new(3), true)
    }));
    let mut running = BatchNormStats::new(3);
    running.mean = uniform(&mut r, 3, -0.5, 0.5);
    running.var = uniform(&mut r, 3, 0.5, 2.0);
    running.batches_seen = 1;
    out.push(op("batch_norm_eval", &[x, g, b], seed, move |t, v| {
        t.batch_norm(v[0], v[1], v[2], &mut running.clone(), false)
    }));

    let x = Tensor::new(vec![12], uniform(&mut r, 12, -3.0, 3.0)).unwrap().with_grad();
    out.push(op("gelu", &[x], seed, |t, v| Ok(t.gelu(v[0]))));

    let (n, p) = (3, 4);
    let (x, w, b) = (
        rand_tensor(&mut r, &[2, n, p * p]),
        rand_tensor(&mut r, &[n, 1, p]),
        rand_tensor(&mut r, &[n]),
    );
    out.push(op("conv1d_depthwise", &[x, w, b], seed, move |t, v| t.grouped_conv1d(v[0], v[1], v[2], p, n)));
    let (x, w, b) = (rand_tensor(&mut r, &[2, n, p]), rand_tensor(&mut r, &[n, n, 1]), rand_tensor(&mut r, &[n]));
    out.push(op("conv1d_pointwise", &[x, w, b], seed, |t, v| t.grouped_conv1d(v[0], v[1], v[2], 1, 1)));
    let (x, w, b) = (rand_tensor(&mut r, &[1, 4, 7]), rand_tensor(&mut r, &[4, 2, 3]), rand_tensor(&mut r, &[4]));
    out.push(op("conv1d_grouped_strided", &[x, w, b], seed, |t, v| t.grouped_conv1d(v[0], v[1], v[2], 2, 2)));

    let (a, b) = (rand_tensor(&mut r, &[2, 3]), rand_tensor(&mut r, &[2, 5]));
    out.push(op("concat_axis1", &[a, b], seed, |t, v| t.concat(&[v[0], v[1]], 1)));
    let (a, b) = (rand_tensor(&mut r, &[1, 3]), rand_tensor(&mut r, &[2, 3]));
    out.push(op("concat_axis0", &[a, b], seed, |t, v| t.concat(&[v[0], v[1]], 0)));

    let x = rand_tensor(&mut r, &[2, 3, 4]);
    out.push(op("reshape_flatten", &[x], seed, |t, v| {
        let y = t.flatten(v[0], 1)?;
        let y = t.gelu(y);
        t.reshape(y, vec![4, 6])
    }));
    let x = rand_tensor(&mut r, &[6]);
    out.push(op("gather", &[x], seed, |t, v| t.gather(v[0], vec![0, 5, 5, 2, 1, 1, 3, 0], vec![2, 4])));

    let (a, b) = (rand_tensor(&mut r, &[7]), rand_tensor(&mut r, &[7]));
    out.push(op("add", &[a.clone(), b.clone()], seed, |t, v| t.add(v[0], v[1])));
    out.push(op("sub", &[a.clone(), b.clone()], seed, |t, v| t.sub(v[0], v[1])));
    out.push(op("mul", &[a.clone(), b], seed, |t, v| t.mul(v[0], v[1])));
    let d = away_from_zero(&mut r, &[7]);
    out.push(op("div", &[a, d.clone()], seed, |t, v| t.div(v[0], v[1])));
    out.push(op("abs", std::slice::from_ref(&d), seed, |t, v| Ok(t.abs(v[0]))));

    let x = rand_tensor(&mut r, &[3, 4]);
    out.push(op("sum", std::slice::from_ref(&x), seed, |t, v| Ok(t.sum(v[0]))));
    out.push(op("mean", &[x], seed, |t, v| Ok(t.mean(v[0]))));
    out.push(op("abs_mean", &[d], seed, |t, v| Ok(t.abs_mean(v[0]))));

    let x = rand_tensor(&mut r, &[3, 5]);
    let weights = uniform(&mut r, 5, 0.1, 2.0);
    out.push(op("scale_last_axis", std::slice::from_ref(&x), seed, move |t, v| t.scale_last_axis(v[0], weights.clone())));
    let matrix = ema_matrix(5, 0.3).unwrap();
    out.push(op("row_map", &[x], seed, move |t, v| t.row_map(v[0], matrix.clone())));
    out
}

/// Tiny model configuration shared by stream and network checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig::new(16, 8, 2).with_patch(4, 2)
}

fn params_for(seed: u64) -> XPatchParams {
    let cfg = tiny_config();
    let mut params = XPatchParams::init(&cfg, seed).unwrap();
    // break the identity initialization of the normalization affines
    let mut r = rng(seed ^ 0x5EED);
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += 0.1 * r.random_range(-1.0..1.0);
        }
    }
    params
}

/// Central differences over every parameter and input element of a scalar
/// function built on a freshly bound tape.
fn check_params<F>(params: &XPatchParams, x: &Tensor, f: F) -> f64
where
    F: Fn(&mut Tape, &Bound, &XPatchParams, Var) -> Result<Var>,
{
    let eval = |params: &XPatchParams, x: &Tensor| -> (f64, Tape, Bound, Var, Var) {
        let mut tape = Tape::new();
        let bound = Bound::bind(&mut tape, params);
        let xv = tape.leaf(x);
        let out = f(&mut tape, &bound, params, xv).unwrap();
        (tape.value(out)[0], tape, bound, xv, out)
    };
    let (_, mut tape, bound, xv, out) = eval(params, x);
    tape.backward(out).unwrap();

    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for i in 0..params.len() {
        let analytic = tape.grad(bound.vars()[i]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; params.tensor(i).len()]);
        for j in 0..params.tensor(i).len() {
            let orig = params.tensor(i).data()[j];
            probe.tensor_mut(i).data_mut()[j] = orig + H;
            let up = eval(&probe, x).0;
            probe.tensor_mut(i).data_mut()[j] = orig - H;
            let down = eval(&probe, x).0;
            probe.tensor_mut(i).data_mut()[j] = orig;
            worst = worst.max(relative_error(analytic[j], (up - down) / (2.0 * H)));
        }
    }
    let analytic = tape.grad(xv).map(<[f64]>::to_vec).unwrap();
    let mut xp = x.clone();
    for j in 0..x.len() {
        let orig = x.data()[j];
        xp.data_mut()[j] = orig + H;
        let up = eval(params, &xp).0;
        xp.data_mut()[j] = orig - H;
        let down = eval(params, &xp).0;
        xp.data_mut()[j] = orig;
        worst = worst.max(relative_error(analytic[j], (up - down) / (2.0 * H)));
    }
    worst
}

/// Finite-difference checks of the linear stream, the nonlinear stream (in
/// training mode) and the whole network.
pub fn stream_cases(seed: u64) -> Vec<Case> {
    let cfg = tiny_config();
    let params = params_for(seed);
    let mut r = rng(seed);
    let x = rand_tensor(&mut r, &[4, cfg.lookback]);
    let lin = check_params(&params, &x, |tape, bound, params, xv| {
        let y = linear_stream(tape, xv, params, bound, cfg.norm_eps)?;
        readout(tape, y, seed)
    });
    let nonlin = check_params(&params, &x, |tape, bound, params, xv| {
        let mut stats: [BatchNormStats; 3] = std::array::from_fn(|_| BatchNormStats::new(cfg.num_patches().unwrap()));
        let y = nonlinear_stream(tape, xv, params, bound, cfg.patch, &mut stats, true)?;
        readout(tape, y, seed)
    });
    vec![
        Case {
            name: "linear_stream",
            max_rel_err: lin,
        },
        Case {
            name: "nonlinear_stream",
            max_rel_err: nonlin,
        },
    ]
}

/// Finite differences of the full network with respect to every parameter.
pub fn network_case(seed: u64) -> Case {
    let cfg = tiny_config();
    let base = XPatch::from_parts(cfg.clone(), params_for(seed), std::array::from_fn(|_| BatchNormStats::new(cfg.num_patches().unwrap()))).unwrap();
    let mut r = rng(seed);
    let x = Tensor::new(vec![4, cfg.lookback], uniform(&mut r, 4 * cfg.lookback, -2.0, 2.0)).unwrap();
    let value = |model: &XPatch| {
        let mut m = model.clone();
        let mut tape = Tape::new();
        let (out, _) = m.forward(&mut tape, &x, true).unwrap();
        let l = readout(&mut tape, out, seed).unwrap();
        tape.value(l)[0]
    };
    let mut graded = base.clone();
    let mut tape = Tape::new();
    let (out, bound) = graded.forward(&mut tape, &x, true).unwrap();
    let l = readout(&mut tape, out, seed).unwrap();
    tape.backward(l).unwrap();
    graded.params.zero_grads();
    graded.accumulate_grads(&tape, &bound).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = base.clone();
    for i in 0..base.params.len() {
        let analytic = graded.params.tensor(i).grad().unwrap().to_vec();
        for j in 0..base.params.tensor(i).len() {
            let orig = base.params.tensor(i).data()[j];
            probe.params.tensor_mut(i).data_mut()[j] = orig + H;
            let up = value(&probe);
            probe.params.tensor_mut(i).data_mut()[j] = orig - H;
            let down = value(&probe);
            probe.params.tensor_mut(i).data_mut()[j] = orig;
            worst = worst.max(relative_error(analytic[j], (up - down) / (2.0 * H)));
        }
    }
    Case {
        name: "network",
        max_rel_err: worst,
    }
}

/// Multichannel daily-seasonal series with drift and noise, `date` column first.
pub fn write_synthetic_csv(path: &Path, rows: usize, channels: usize, seed: u64) {
    let mut r = rng(seed);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    let names: Vec<String> = (0..channels)
        .map(|c| if c + 1 == channels { "OT".to_string() } else { format!("v{c}") })
        .collect();
    writeln!(f, "date,{}", names.join(",")).unwrap();
    let phases = uniform(&mut r, channels, 0.0, 6.0);
    for t in 0..rows {
        let tt = t as f64;
        let vals: Vec<String> = (0..channels)
            .map(|c| {
                let v = (2.0 * std::f64::consts::PI * tt / 24.0 + phases[c]).sin()
                    + 0.5 * (2.0 * std::f64::consts::PI * tt / 168.0).sin()
                    + 0.002 * tt * (c as f64 + 1.0)
                    + 0.1 * r.random_range(-1.0..1.0)
                    + 5.0 * c as f64;
                format!("{v:.6}")
            })
            .collect();
        writeln!(f, "2020-01-01 {:02}:{:02},{}", t / 60 % 24, t % 60, vals.join(",")).unwrap();
    }
}
