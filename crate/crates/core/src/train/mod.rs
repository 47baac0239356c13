//! Losses, learning-rate schedules, Adam and the training loop.

mod adam;
mod loss;
mod schedule;

pub use adam::Adam;
pub use loss::{loss_mae, loss_mse, loss_scalable, rho_arctan, rho_card, LossSpec, Rho};
pub use schedule::{lr_cosine_warmup, lr_patch_tst, lr_sigmoid, lr_standard, ScheduleKind, SchedulerSpec};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::autograd::Tape;
use crate::datasets::{windows, Order, Scaler, SeriesView};
use crate::decompose::DEFAULT_ALPHA;
use crate::error::{Error, Result};
use crate::model::{check_lookback, checkpoint, ModelConfig, PatchConfig, Routing, XPatch};
use crate::report::{evaluate, pairwise_sum, Scale};

const EVAL_BATCH: usize = 128;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lookback: usize,
    pub horizon: usize,
    /// EMA smoothing factor of the decomposition.
    pub alpha: f64,
    pub patch: PatchConfig,
    pub routing: Routing,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossSpec,
    pub scheduler: SchedulerSpec,
    pub seed: u64,
    /// Epochs without a validation-MSE improvement before stopping.
    pub patience: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl TrainConfig {
    pub fn new(lookback: usize, horizon: usize) -> Self {
        Self {
            lookback,
            horizon,
            alpha: DEFAULT_ALPHA,
            patch: PatchConfig::default(),
            routing: Routing::Original,
            batch_size: 32,
            epochs: 100,
            loss: LossSpec::default(),
            scheduler: SchedulerSpec::default(),
            seed: 0,
            patience: 10,
            max_steps: None,
        }
    }

    pub fn model_config(&self, channels: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(self.lookback, self.horizon, channels);
        cfg.patch = self.patch;
        cfg.alpha = self.alpha;
        cfg.routing = self.routing;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        check_lookback(self.lookback)?;
        if self.horizon == 0 || self.batch_size == 0 || self.epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "horizon, batch size, epochs and patience must be positive".into(),
            ));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be positive when set".into()));
        }
        self.model_config(1).validate()?;
        self.loss.coefficients(self.horizon)?;
        self.scheduler.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,val_mse,val_mae";

    pub fn csv_line(r: &EpochRecord) -> String {
        format!("{},{},{},{},{}", r.epoch, r.lr, r.train_loss, r.val_mse, r.val_mae)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.records {
            let _ = writeln!(out, "{}", Self::csv_line(r));
        }
        out
    }
}

/// Tracks validation MSE and signals a stop after `patience` epochs without
/// strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Stale,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val: f64) -> Verdict {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Stale
        }
    }
}

/// Files written while training.
#[derive(Debug, Clone, Default)]
pub struct Artifacts<'a> {
    /// Best-validation checkpoint, rewritten on every improvement.
    pub checkpoint: Option<PathBuf>,
    /// History CSV, rewritten after every epoch.
    pub history: Option<PathBuf>,
    pub scaler: Option<&'a Scaler>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: XPatch,
    pub history: History,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub steps: usize,
    pub stopped_early: bool,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    checkpoint::write_atomic(path, text.as_bytes())
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

/// Trains `model` on standardized `train` windows, selecting the epoch with
/// the lowest validation MSE. Epochs are numbered from 1 and epoch `t` uses
/// the scheduler's rate at `t`.
pub fn fit(mut model: XPatch, train: &SeriesView, val: &SeriesView, cfg: &TrainConfig, out: &Artifacts) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mc = &model.config;
    if mc.lookback != cfg.lookback || mc.horizon != cfg.horizon || mc.channels != train.n_cols {
        return Err(Error::Config(format!(
            "model expects L={}, T={}, M={} but training uses L={}, T={}, M={}",
            mc.lookback, mc.horizon, mc.channels, cfg.lookback, cfg.horizon, train.n_cols
        )));
    }
    let val_batches = windows(val, cfg.lookback, cfg.horizon, EVAL_BATCH, Order::Chronological)?;
    let mut adam = Adam::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = History::default();
    let mut best = model.clone();
    let mut steps = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let lr = cfg.scheduler.lr(epoch);
        let batches = windows(
            train,
            cfg.lookback,
            cfg.horizon,
            cfg.batch_size,
            Order::Shuffled {
                seed: epoch_seed(cfg.seed, epoch),
            },
        )?;
        let mut losses = Vec::with_capacity(batches.len());
        for batch in &batches {
            let mut tape = Tape::new();
            let (pred, bound) = model.forward(&mut tape, &batch.inputs, true)?;
            let target = tape.constant(batch.targets.shape().to_vec(), batch.targets.data().to_vec())?;
            let loss = cfg.loss.on_tape(&mut tape, pred, target)?;
            let value = tape.value(loss)[0];
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "training loss became {value} at epoch {epoch}, step {}; the best checkpoint (epoch {}) is retained",
                    steps + 1,
                    stopper.best_epoch
                )));
            }
            tape.backward(loss)?;
            model.params.zero_grads();
            model.accumulate_grads(&tape, &bound)?;
            adam.step(model.params.iter_mut(), lr)?;
            losses.push(value);
            steps += 1;
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
        }
        let metrics = evaluate(&model, &val_batches, Scale::Normalized)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: pairwise_sum(&losses) / losses.len() as f64,
            val_mse: metrics.mse,
            val_mae: metrics.mae,
        };
        log::info!(
            "epoch {epoch}: lr={lr:.3e} train_loss={:.6} val_mse={:.6} val_mae={:.6}",
            record.train_loss,
            record.val_mse,
            record.val_mae
        );
        history.records.push(record);
        if let Some(p) = &out.history {
            write_text(p, &history.to_csv())?;
        }
        let verdict = stopper.observe(epoch, metrics.mse);
        if verdict == Verdict::Improved {
            best = model.clone();
            if let Some(stem) = &out.checkpoint {
                let mut meta = out.metadata.clone();
                meta.insert("epoch".into(), epoch.to_string());
                meta.insert("val_mse".into(), metrics.mse.to_string());
                checkpoint::save(stem, &best, out.scaler, meta)?;
            }
        }
        if verdict == Verdict::Stop {
            stopped_early = true;
            break;
        }
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
    }
    best.params.zero_grads();
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch: stopper.best_epoch,
        best_val_mse: stopper.best,
        steps,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_view(n: usize, m: usize, phase: f64) -> SeriesView {
        let values = (0..n * m)
            .map(|i| {
                let (t, c) = ((i / m) as f64, (i % m) as f64);
                (2.0 * std::f64::consts::PI * t / 12.0 + c + phase).sin()
            })
            .collect();
        SeriesView {
            values,
            n_cols: m,
            first_row: 0,
        }
    }

    fn quick_config() -> TrainConfig {
        let mut cfg = TrainConfig::new(16, 8);
        cfg.patch = PatchConfig { patch_len: 4, stride: 2 };
        cfg.batch_size = 8;
        cfg.epochs = 3;
        cfg.scheduler.alpha0 = 1e-3;
        cfg
    }

    #[test]
    fn early_stopping_counts_stale_epochs() {
        let mut s = EarlyStopping::new(3);
        assert_eq!(s.observe(1, 1.0), Verdict::Improved);
        assert_eq!(s.observe(2, 1.0), Verdict::Stale);
        assert_eq!(s.observe(3, 1.0), Verdict::Stale);
        assert_eq!(s.observe(4, 1.0), Verdict::Stop);
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn history_follows_schedule() {
        let cfg = quick_config();
        let model = XPatch::new(cfg.model_config(2), 1).unwrap();
        let out = fit(model, &sine_view(120, 2, 0.0), &sine_view(60, 2, 0.3), &cfg, &Artifacts::default()).unwrap();
        assert_eq!(out.history.records.len(), 3);
        for r in &out.history.records {
            assert_eq!(r.lr, cfg.scheduler.lr(r.epoch));
            assert!(r.train_loss.is_finite() && r.val_mse.is_finite());
        }
    }

    #[test]
    fn one_step_updates_every_parameter() {
        let mut cfg = quick_config();
        cfg.max_steps = Some(1);
        let model = XPatch::new(cfg.model_config(2), 5).unwrap();
        let before = model.params.clone();
        let out = fit(model, &sine_view(80, 2, 0.0), &sine_view(40, 2, 0.1), &cfg, &Artifacts::default()).unwrap();
        assert_eq!(out.steps, 1);
        for ((name, a), (_, b)) in before.iter().zip(out.model.params.iter()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x != y), "{name} was not fully updated");
        }
    }

    #[test]
    fn rejects_mismatched_model() {
        let cfg = quick_config();
        let model = XPatch::new(cfg.model_config(3), 0).unwrap();
        let r = fit(model, &sine_view(80, 2, 0.0), &sine_view(40, 2, 0.0), &cfg, &Artifacts::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
