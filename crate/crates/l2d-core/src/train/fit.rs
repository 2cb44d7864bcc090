use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::model::{Model, Scratch};
use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Gd { lr: f64, epochs: usize },
    GdMomentum { lr: f64, momentum: f64, epochs: usize },
}

impl Optimizer {
    pub fn epochs(&self) -> usize {
        match *self {
            Optimizer::Gd { epochs, .. } | Optimizer::GdMomentum { epochs, .. } => epochs,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lr, m) = match *self {
            Optimizer::Gd { lr, .. } => (lr, 0.0),
            Optimizer::GdMomentum { lr, momentum, .. } => (lr, momentum),
        };
        if !(lr > 0.0 && lr.is_finite()) || !(0.0..1.0).contains(&m) {
            bail!(InvalidConfig, "need lr > 0 and momentum in [0, 1)");
        }
        Ok(())
    }
}

/// Mean losses after `epoch` parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: u8,
    pub epoch: usize,
    pub surrogate_loss: f64,
    pub target_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub model: Model,
    pub trace: Vec<TraceRow>,
    /// Final surrogate loss is at most the initial one.
    pub converged: bool,
}

/// Per-sample loss: `(sample index, model output, d loss / d output)`.
pub type SampleLoss<'a> = dyn Fn(usize, &[f64], Option<&mut [f64]>) -> Result<f64> + 'a;
/// Per-sample target loss of a model output.
pub type SampleTarget<'a> = dyn Fn(usize, &[f64]) -> f64 + 'a;

fn pass(model: &Model, inputs: &[Vec<f64>], loss: &SampleLoss<'_>, target: &SampleTarget<'_>, grad: Option<&mut [f64]>) -> Result<(f64, f64)> {
    let o = model.spec.output_dim;
    let mut out = vec![0.0; o];
    let mut dout = vec![0.0; o];
    let mut scratch = Scratch::default();
    let (mut total, mut tgt) = (0.0, 0.0);
    match grad {
        Some(g) => {
            g.fill(0.0);
            for (i, x) in inputs.iter().enumerate() {
                model.forward(x, &mut out, &mut scratch);
                total += loss(i, &out, Some(&mut dout))?;
                tgt += target(i, &out);
                model.backward(x, &dout, &scratch, g);
            }
            let m = inputs.len().max(1) as f64;
            for v in g.iter_mut() {
                *v /= m;
            }
        }
        None => {
            for (i, x) in inputs.iter().enumerate() {
                model.forward(x, &mut out, &mut scratch);
                total += loss(i, &out, None)?;
                tgt += target(i, &out);
            }
        }
    }
    let m = inputs.len().max(1) as f64;
    Ok((total / m, tgt / m))
}

/// Full-batch gradient descent on the mean of `loss`. The trace has one row
/// per epoch plus a final row; any non-finite loss, gradient or parameter
/// aborts with [`Error::Diverged`].
pub fn fit(
    mut model: Model,
    stage: u8,
    inputs: &[Vec<f64>],
    loss: &SampleLoss<'_>,
    target: &SampleTarget<'_>,
    opt: &Optimizer,
) -> Result<Fitted> {
    opt.validate()?;
    if let Some(x) = inputs.iter().find(|x| x.len() != model.spec.input_dim) {
        bail!(InvalidInput, "input has dimension {}, model expects {}", x.len(), model.spec.input_dim);
    }
    let np = model.params.len();
    let mut grad = vec![0.0; np];
    let mut vel = vec![0.0; np];
    let (lr, mom) = match *opt {
        Optimizer::Gd { lr, .. } => (lr, 0.0),
        Optimizer::GdMomentum { lr, momentum, .. } => (lr, momentum),
    };
    let mut trace = Vec::with_capacity(opt.epochs() + 1);
    let diverged = |epoch: usize, what: &str| Error::Diverged { epoch, detail: format!("non-finite {what}") };
    for epoch in 0..opt.epochs() {
        let (s, t) = pass(&model, inputs, loss, target, Some(&mut grad))?;
        if !s.is_finite() {
            return Err(diverged(epoch, "surrogate loss"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(diverged(epoch, "gradient"));
        }
        trace.push(TraceRow { stage, epoch, surrogate_loss: s, target_loss: t });
        for ((p, v), g) in model.params.iter_mut().zip(&mut vel).zip(&grad) {
            *v = mom * *v + g;
            *p -= lr * *v;
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(diverged(epoch, "parameters"));
        }
    }
    let (s, t) = pass(&model, inputs, loss, target, None)?;
    if !s.is_finite() {
        return Err(diverged(opt.epochs(), "surrogate loss"));
    }
    trace.push(TraceRow { stage, epoch: opt.epochs(), surrogate_loss: s, target_loss: t });
    let converged = s <= trace[0].surrogate_loss;
    Ok(Fitted { model, trace, converged })
}
