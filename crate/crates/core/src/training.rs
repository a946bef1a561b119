//! Joint optimisation of every network in a model: reconstruction loss,
//! cross-entropy on the learned segmentation, a hinge penalty keeping the
//! activation parameters non-negative, Adam, and a step-decay schedule.

use std::io::Write;
use std::sync::mpsc::Sender;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ClassField, ImageField};
use crate::metrics::{psnr_from_rmse, Psnr};
use crate::models::{ActivationVars, Model};
use crate::sampling::make_grid;
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Added inside the logarithm of the cross-entropy term.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the cross-entropy term.
    pub beta: f64,
    /// Weight of the non-negativity penalty on p, q, r, s.
    pub lambda_neg: f64,
    pub epochs: usize,
    pub lr0: f64,
    /// Multiplicative decay applied every `step_interval` epochs.
    pub gamma: f64,
    /// Epochs per decay step; `None` means `ceil(epochs / 3)`.
    pub step_interval: Option<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            lambda_neg: 1.0,
            epochs: 1000,
            lr0: 1e-4,
            gamma: 0.1,
            step_interval: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Validation(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.lambda_neg >= 0.0 && self.lambda_neg.is_finite()) {
            return Err(Error::Validation(format!(
                "lambda_neg must be non-negative, got {}",
                self.lambda_neg
            )));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Validation(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Validation(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.step_interval == Some(0) {
            return Err(Error::Validation("step_interval must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved_step_interval(&self) -> usize {
        self.step_interval.unwrap_or_else(|| self.epochs.div_ceil(3)).max(1)
    }
}

/// Learning rate for `epoch`: `lr0 · γ^⌊epoch / step⌋`.
pub fn lr_at(epoch: usize, cfg: &LossConfig) -> f64 {
    let steps = epoch / cfg.resolved_step_interval();
    cfg.lr0 * cfg.gamma.powi(steps as i32)
}

/// A recorded loss plus the scalar value of each term.
#[derive(Copy, Clone, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub mse: f64,
    pub ce: f64,
    pub penalty: f64,
}

/// Class predictions and their ground truth, both n×h.
#[derive(Copy, Clone, Debug)]
pub struct ClassTerms {
    pub predicted: Var,
    pub truth: Var,
}

/// `mean‖Î − I‖² + β·mean CE + λ·mean(relu(−p) + relu(−q) + relu(−r) + relu(−s))`
/// with `CE(v) = −Σ_i S_i log(Ŝ_i + ε)`.
pub fn compute_loss(
    tape: &mut Tape,
    pred: Var,
    target: Var,
    classes: Option<ClassTerms>,
    params: Option<&ActivationVars>,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    let n = tape.value(pred).rows();
    if tape.value(target).rows() != n {
        return Err(Error::contract(format!(
            "prediction has {n} rows, target has {}",
            tape.value(target).rows()
        )));
    }
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff)?;
    let mse = tape.mean(sq)?;
    let mse_value = tape.value(mse).get(0, 0);
    let mut total = mse;

    let mut ce_value = 0.0;
    if let Some(c) = classes {
        let (pn, tn) = (tape.value(c.predicted).shape(), tape.value(c.truth).shape());
        if pn != tn || pn.0 != n {
            return Err(Error::contract(format!(
                "class prediction {pn:?} and truth {tn:?} must both have {n} rows and equal widths"
            )));
        }
        let shifted = tape.add_const(c.predicted, LOG_EPSILON)?;
        let log = tape.log(shifted)?;
        let weighted = tape.mul(c.truth, log)?;
        let sum = tape.sum(weighted)?;
        let ce = tape.scale(sum, -1.0 / n as f64)?;
        ce_value = tape.value(ce).get(0, 0);
        let term = tape.scale(ce, cfg.beta)?;
        total = tape.add(total, term)?;
    }

    let mut penalty_value = 0.0;
    if let Some(a) = params {
        let mut penalty = None;
        for component in a.components() {
            if tape.value(component).rows() != n {
                return Err(Error::contract(format!(
                    "activation parameters have {} rows, expected {n}",
                    tape.value(component).rows()
                )));
            }
            let neg = tape.neg(component)?;
            let hinge = tape.relu(neg)?;
            let mean = tape.mean(hinge)?;
            penalty = Some(match penalty {
                None => mean,
                Some(acc) => tape.add(acc, mean)?,
            });
        }
        if let Some(p) = penalty {
            penalty_value = tape.value(p).get(0, 0);
            let term = tape.scale(p, cfg.lambda_neg)?;
            total = tape.add(total, term)?;
        }
    }

    Ok(LossTerms {
        total,
        mse: mse_value,
        ce: ce_value,
        penalty: penalty_value,
    })
}

/// Bias-corrected Adam over a fixed list of tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (first, second) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.rows(), p.cols()), Tensor::zeros(p.rows(), p.cols())))
            .unzip();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first,
            second,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.ok_or_else(|| Error::contract(format!("parameter {i} has no gradient")))?;
            if g.shape() != p.shape() || self.first[i].shape() != p.shape() {
                return Err(Error::contract(format!(
                    "parameter {i} is {:?} but its gradient is {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].expect("checked above").data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    /// Coordinates per step; `None` trains on the full grid every epoch.
    pub batch_size: Option<usize>,
    /// Seeds minibatch sampling.
    pub seed: u64,
    /// Stop once the training PSNR reaches this value. Used for
    /// time-to-threshold measurements only.
    pub halt_at_psnr: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            batch_size: None,
            seed: 0,
            halt_at_psnr: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub mse: f64,
    pub ce: f64,
    pub penalty: f64,
    /// Training PSNR of this epoch's prediction, before the update.
    pub psnr: Psnr,
    pub lr: f64,
    /// Wall-clock since training started, measured after the update.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,loss,mse,ce,penalty,psnr,lr,seconds";

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// First record whose PSNR reaches `threshold`.
    pub fn first_reaching(&self, threshold: f64) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.psnr.as_f64() >= threshold)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6}",
                r.epoch, r.loss, r.mse, r.ce, r.penalty, r.psnr, r.lr, r.seconds
            )?;
        }
        Ok(())
    }
}

fn diverged(epoch: usize, lr: f64, term: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Tensor(TensorError::NonFinite { op }) => Error::Diverged {
            epoch,
            lr,
            term: if term == "forward" { op } else { term },
        },
        other => other,
    }
}

/// Fits `model` to `image` (and `mask`, for semantic models) on the image's
/// own pixel grid. Optionally streams one record per epoch to `observer`;
/// a disconnected observer is ignored.
pub fn train(
    model: &mut Model,
    image: &ImageField,
    mask: Option<&ClassField>,
    cfg: &TrainConfig,
    observer: Option<&Sender<EpochRecord>>,
) -> Result<TrainLog> {
    cfg.loss.validate()?;
    let semantic = matches!(model, Model::Seco(m) if m.semantic);
    let mask = if semantic {
        let mask = mask.ok_or_else(|| Error::contract("semantic model needs a segmentation mask"))?;
        if mask.dims() != image.dims() {
            return Err(Error::contract(format!(
                "mask is {:?} but image is {:?}",
                mask.dims(),
                image.dims()
            )));
        }
        if !mask.is_distribution(1e-9) {
            return Err(Error::contract("mask rows must be probability distributions"));
        }
        if let Model::Seco(m) = model {
            if m.classes.classes() != mask.classes() {
                return Err(Error::contract(format!(
                    "model predicts {} classes, mask has {}",
                    m.classes.classes(),
                    mask.classes()
                )));
            }
        }
        Some(mask)
    } else {
        None
    };

    let n = image.len();
    let batch = cfg.batch_size.filter(|&b| b > 0 && b < n);
    let coords = make_grid(image.height(), image.width())?.into_tensor();
    let targets = image.to_tensor();
    let truth = mask.map(ClassField::to_tensor);
    let data_range = image.max();
    let mut sampler = ChaCha8Rng::seed_from_u64(cfg.seed);
    sampler.set_stream(10);

    let mut adam = AdamState::new(model.trainable_mut().into_iter().map(|t| &*t));
    let mut tape = Tape::new();
    let mut log = TrainLog::default();
    let start = Instant::now();

    for epoch in 0..cfg.loss.epochs {
        let lr = lr_at(epoch, &cfg.loss);
        tape.reset();
        let (c, t, s) = match batch {
            None => (coords.clone(), targets.clone(), truth.clone()),
            Some(b) => {
                let mut idx = index::sample(&mut sampler, n, b).into_vec();
                idx.sort_unstable();
                (
                    coords.gather_rows(&idx),
                    targets.gather_rows(&idx),
                    truth.as_ref().map(|s| s.gather_rows(&idx)),
                )
            }
        };
        let x = tape.constant(c);
        let target = tape.constant(t);
        let pass = model.forward(&mut tape, x, true).map_err(diverged(epoch, lr, "forward"))?;
        let class_terms = match (pass.classes, s) {
            (Some(predicted), Some(s)) => Some(ClassTerms {
                predicted,
                truth: tape.constant(s),
            }),
            _ => None,
        };
        let terms = compute_loss(
            &mut tape,
            pass.intensity,
            target,
            class_terms,
            pass.activation.as_ref(),
            &cfg.loss,
        )
        .map_err(diverged(epoch, lr, "loss"))?;
        for (name, v) in [("mse", terms.mse), ("ce", terms.ce), ("penalty", terms.penalty)] {
            if !v.is_finite() {
                return Err(Error::Diverged { epoch, lr, term: name });
            }
        }
        let loss = tape.value(terms.total).get(0, 0);
        tape.backward(terms.total).map_err(|e| diverged(epoch, lr, "gradient")(e.into()))?;

        let grads: Vec<Option<&Tensor>> = pass.trainable.iter().map(|&v| tape.grad(v)).collect();
        let mut params = model.trainable_mut();
        adam.step(&mut params, &grads, lr)?;

        let record = EpochRecord {
            epoch,
            loss,
            mse: terms.mse,
            ce: terms.ce,
            penalty: terms.penalty,
            psnr: psnr_from_rmse(terms.mse.sqrt(), data_range),
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(tx) = observer {
            let _ = tx.send(record.clone());
        }
        let reached = cfg.halt_at_psnr.is_some_and(|t| record.psnr.as_f64() >= t);
        log.records.push(record);
        if reached {
            break;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests;
