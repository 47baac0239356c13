use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::sync::Arc;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};

/// `ρ(i) = −m·(arctan(i) − π/4) + 1`, with `i` the 1-based horizon step.
pub fn rho_arctan(i: usize, m: f64) -> f64 {
    -m * ((i as f64).atan() - FRAC_PI_4) + 1.0
}

/// `ρ(i) = i^(−1/2)`.
pub fn rho_card(i: usize) -> f64 {
    1.0 / (i as f64).sqrt()
}

/// User-supplied horizon coefficient function.
#[derive(Clone)]
pub struct Rho(pub Arc<dyn Fn(usize) -> f64 + Send + Sync>);

impl fmt::Debug for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Rho(..)")
    }
}

#[derive(Debug, Clone)]
pub enum LossSpec {
    Mse,
    Mae,
    /// Scalable loss with `ρ(i) = i^(−1/2)`.
    Card,
    /// Scalable loss with the arctangent coefficients.
    Arctan { m: f64 },
    Scalable(Rho),
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::Arctan { m: 1.0 }
    }
}

impl LossSpec {
    /// Parses a loss name; `m` only matters for `arctan`.
    pub fn parse(kind: &str, m: f64) -> Result<Self> {
        match kind.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossSpec::Mse),
            "mae" => Ok(LossSpec::Mae),
            "card" => Ok(LossSpec::Card),
            "arctan" => Ok(LossSpec::Arctan { m }),
            other => Err(Error::Parameter(format!(
                "unknown loss '{other}' (expected mse, mae, card or arctan)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Mse => "mse",
            LossSpec::Mae => "mae",
            LossSpec::Card => "card",
            LossSpec::Arctan { .. } => "arctan",
            LossSpec::Scalable(_) => "scalable",
        }
    }

    /// Horizon coefficients `ρ(1..=T)`; `None` for the unweighted losses.
    pub fn coefficients(&self, horizon: usize) -> Result<Option<Vec<f64>>> {
        let rho: Vec<f64> = match self {
            LossSpec::Mse | LossSpec::Mae => return Ok(None),
            LossSpec::Card => (1..=horizon).map(rho_card).collect(),
            LossSpec::Arctan { m } => {
                if !(*m >= 0.0 && m.is_finite()) {
                    return Err(Error::Config(format!("arctangent scale m must be non-negative, got {m}")));
                }
                (1..=horizon).map(|i| rho_arctan(i, *m)).collect()
            }
            LossSpec::Scalable(f) => (1..=horizon).map(|i| (f.0)(i)).collect(),
        };
        if let Some(i) = rho.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!(
                "loss coefficient ρ({}) = {} is not positive",
                i + 1,
                rho[i]
            )));
        }
        Ok(Some(rho))
    }

    /// Records the loss of `pred` against `target`, both `[R, T]`.
    pub fn on_tape(&self, tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
        let horizon = *tape.shape(pred).last().unwrap_or(&0);
        match self {
            LossSpec::Mse => loss_mse(tape, pred, target),
            LossSpec::Mae => loss_mae(tape, pred, target),
            _ => {
                let rho = self.coefficients(horizon)?.expect("weighted loss has coefficients");
                loss_scalable(tape, pred, target, rho)
            }
        }
    }
}

fn check_shapes(tape: &Tape, pred: Var, target: Var) -> Result<()> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::Dimension(format!(
            "prediction shape {:?} does not match target {:?}",
            tape.shape(pred),
            tape.shape(target)
        )));
    }
    Ok(())
}

pub fn loss_mse(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    check_shapes(tape, pred, target)?;
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

pub fn loss_mae(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    check_shapes(tape, pred, target)?;
    let d = tape.sub(pred, target)?;
    let a = tape.abs(d);
    Ok(tape.mean(a))
}

/// `(1/T)·Σᵢ ρ(i)·mean_rows|pred[:, i] − target[:, i]|`.
pub fn loss_scalable(tape: &mut Tape, pred: Var, target: Var, rho: Vec<f64>) -> Result<Var> {
    check_shapes(tape, pred, target)?;
    if let Some(r) = rho.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::Config(format!("loss coefficients must be positive, got {r}")));
    }
    let d = tape.sub(pred, target)?;
    let a = tape.abs(d);
    let w = tape.scale_last_axis(a, rho)?;
    Ok(tape.mean(w))
}
