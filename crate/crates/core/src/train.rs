//! Classifier pre-training and the HSIC-regularized reconstructor loop.
//!
//! Both loops use SGD with classic momentum and a step learning-rate
//! schedule. Batches are drawn with [`batch_indices`], reshuffled every epoch
//! from a seed derived from `Hyperparams::seed` and the epoch number, so a run
//! is fully determined by its dataset and hyperparameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, Dataset, LabelColumn};
use crate::hsic::{Bandwidth, HsicResult};
use crate::nets::{classifier_forward, split_heads, unet_forward, ClassifierParams, ParamSet, UNetParams};
use crate::tensor::{Real, Tape, Tensor, Var};
use crate::{Error, Result};

/// Optimizer schedule and loss weighting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the independence term.
    pub lambda: f64,
    /// Seeds parameter initialization and batch shuffling.
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 1e-3,
            momentum: 0.9,
            lr_step: 7,
            lr_gamma: 0.1,
            epochs: 5,
            batch_size: 64,
            lambda: 0.07,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("lr_gamma", self.lr_gamma)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.lr_step == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("lr_step and epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Shuffle seed for `epoch`; distinct epochs get unrelated orders.
    fn shuffle_seed(&self, epoch: usize) -> u64 {
        self.seed
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(epoch as u64 + 1))
    }
}

/// `base_lr · gamma^⌊epoch / step⌋`.
pub fn step_lr(epoch: usize, base_lr: f64, step: usize, gamma: f64) -> f64 {
    base_lr * gamma.powi((epoch / step.max(1)) as i32)
}

/// Momentum buffers, one per parameter, created lazily at zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimState<T: Real = f32> {
    velocity: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> OptimState<T> {
    pub fn new() -> Self {
        OptimState { velocity: BTreeMap::new() }
    }

    pub fn velocity(&self, name: &str) -> Option<&Tensor<T>> {
        self.velocity.get(name)
    }
}

/// One SGD step with classic momentum: `v ← μv + g`, `p ← p − lr·v`.
///
/// Every parameter must have a gradient of its own shape; gradients for
/// names that are not parameters are rejected.
pub fn sgd_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &BTreeMap<String, Tensor<T>>,
    state: &mut OptimState<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if let Some(extra) = grads.keys().find(|k| params.get(k).is_none()) {
        return Err(Error::UnknownParam(extra.clone()));
    }
    let (lr, mu) = (T::of(lr), T::of(momentum));
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if g.shape() != p.shape() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let v = state
            .velocity
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        if v.shape() != p.shape() {
            return Err(Error::Shape(format!("velocity for `{name}` has shape {:?}", v.shape())));
        }
        for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vv = mu * *vv + gv;
            *pv = *pv - lr * *vv;
        }
    }
    Ok(())
}

/// Composite loss recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct CompositeLoss {
    pub total: Var,
    pub mse: Var,
    pub hsic: Var,
    pub hsic_result: HsicResult,
}

/// `mse(recon, batch) + lambda · HSIC(h1, h2)` with per-batch median bandwidths.
pub fn composite_loss<T: Real>(
    tape: &mut Tape<T>,
    batch: Var,
    recon: Var,
    h1: Var,
    h2: Var,
    lambda: f64,
) -> Result<CompositeLoss> {
    composite_loss_with(tape, batch, recon, h1, h2, lambda, Bandwidth::Median, Bandwidth::Median)
}

/// [`composite_loss`] with explicit bandwidth choices.
#[allow(clippy::too_many_arguments)]
pub fn composite_loss_with<T: Real>(
    tape: &mut Tape<T>,
    batch: Var,
    recon: Var,
    h1: Var,
    h2: Var,
    lambda: f64,
    bw1: Bandwidth,
    bw2: Bandwidth,
) -> Result<CompositeLoss> {
    let n = tape.value(h1)?.shape().first().copied().unwrap_or(0);
    if n < 2 {
        return Err(Error::InvalidArgument(format!("composite loss needs N >= 2, got {n}")));
    }
    let mse = tape.mse_loss(recon, batch)?;
    let (hsic, hsic_result) = tape.hsic(h1, h2, bw1, bw2)?;
    let weighted = tape.scale(hsic, lambda)?;
    let total = tape.add(mse, weighted)?;
    Ok(CompositeLoss {
        total,
        mse,
        hsic,
        hsic_result,
    })
}

/// One logged optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub batch: usize,
    pub mse: f64,
    pub hsic: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub lambda: f64,
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    /// `epoch,batch,mse,hsic,total,lr`, nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,batch,mse,hsic,total,lr\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{:.8e},{:.8e},{:.8e},{:.8e}",
                r.epoch, r.batch, r.mse, r.hsic, r.total, r.lr
            )
            .expect("string write");
        }
        out
    }

    /// Mean of `field` over the records of `epoch`.
    pub fn epoch_mean(&self, epoch: usize, field: impl Fn(&TrainRecord) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self.records.iter().filter(|r| r.epoch == epoch).map(field).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn last_epoch(&self) -> Option<usize> {
        self.records.last().map(|r| r.epoch)
    }
}

fn check_two_classes(labels: &[u8], name: &str) -> Result<()> {
    let ones = labels.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::Degenerate(format!(
            "label `{name}` is constant over the training set"
        )));
    }
    Ok(())
}

/// Trains the two-headed classifier on `bce(h1, y) + bce(h2, s)` and returns
/// it frozen.
pub fn pretrain_classifier(train: &Dataset, hyper: &Hyperparams) -> Result<ClassifierParams> {
    pretrain_heads(train, &[LabelColumn::Target, LabelColumn::Protected], hyper)
}

/// Trains a classifier with one sigmoid head per entry of `columns`; the
/// loss is the sum of the per-head cross-entropies. The result is frozen.
pub fn pretrain_heads(train: &Dataset, columns: &[LabelColumn], hyper: &Hyperparams) -> Result<ClassifierParams> {
    hyper.validate()?;
    if columns.is_empty() {
        return Err(Error::InvalidArgument("at least one label column is required".into()));
    }
    if train.len() < 2 {
        return Err(Error::InvalidArgument("training set needs at least 2 examples".into()));
    }
    for &c in columns {
        check_two_classes(&train.labels(c), train.column_name(c))?;
    }
    let mut model = ClassifierParams::init_with_heads(hyper.seed, columns.len());
    let mut state = OptimState::new();
    for epoch in 0..hyper.epochs {
        let lr = step_lr(epoch, hyper.learning_rate, hyper.lr_step, hyper.lr_gamma);
        for idx in batch_indices(train.len(), hyper.batch_size, hyper.shuffle_seed(epoch))? {
            let mut tape = Tape::<f32>::new();
            let bound = model.params().bind(&mut tape, true);
            let x = tape.constant(train.images(&idx));
            let probs = classifier_forward(&mut tape, &bound, x)?;
            let mut loss: Option<Var> = None;
            for (h, &c) in columns.iter().enumerate() {
                let p = tape.column(probs, h)?;
                let y = tape.constant(train.label_tensor(c, &idx));
                let l = tape.bce_loss(p, y)?;
                loss = Some(match loss {
                    None => l,
                    Some(acc) => tape.add(acc, l)?,
                });
            }
            let grads = tape.backward(loss.expect("non-empty columns"))?.into_named();
            sgd_step(model.params_mut()?, &grads, &mut state, lr, hyper.momentum)?;
        }
    }
    Ok(model.freeze())
}

/// Trains a freshly initialized U-net (seed `hyper.seed`) against the frozen
/// `classifier`.
pub fn train_debiaser(train: &Dataset, classifier: &ClassifierParams, hyper: &Hyperparams) -> Result<(UNetParams, TrainLog)> {
    train_debiaser_from(train, classifier, hyper, UNetParams::init(hyper.seed))
}

/// As [`train_debiaser`], starting from the given reconstructor parameters.
pub fn train_debiaser_from(
    train: &Dataset,
    classifier: &ClassifierParams,
    hyper: &Hyperparams,
    init: UNetParams,
) -> Result<(UNetParams, TrainLog)> {
    hyper.validate()?;
    if !classifier.is_frozen() {
        return Err(Error::InvalidArgument("the classifier must be frozen before de-biaser training".into()));
    }
    if classifier.heads() != 2 {
        return Err(Error::Shape(format!(
            "de-biasing needs a two-headed classifier, got {} heads",
            classifier.heads()
        )));
    }
    let mut unet = init;
    let mut state = OptimState::new();
    let mut log = TrainLog {
        lambda: hyper.lambda,
        records: Vec::new(),
    };
    for epoch in 0..hyper.epochs {
        let lr = step_lr(epoch, hyper.learning_rate, hyper.lr_step, hyper.lr_gamma);
        for (b, idx) in batch_indices(train.len(), hyper.batch_size, hyper.shuffle_seed(epoch))?
            .into_iter()
            .enumerate()
        {
            let mut tape = Tape::<f32>::new();
            let u = unet.params().bind(&mut tape, true);
            let h = classifier.params().bind(&mut tape, false);
            let x = tape.constant(train.images(&idx));
            let recon = unet_forward(&mut tape, &u, x)?;
            let probs = classifier_forward(&mut tape, &h, recon)?;
            let (h1, h2) = split_heads(&mut tape, probs)?;
            let loss = composite_loss(&mut tape, x, recon, h1, h2, hyper.lambda)?;
            let grads = tape.backward(loss.total)?.into_named();
            log.records.push(TrainRecord {
                epoch,
                batch: b,
                mse: tape.value(loss.mse)?.item()?.as_f64(),
                hsic: tape.value(loss.hsic)?.item()?.as_f64(),
                total: tape.value(loss.total)?.item()?.as_f64(),
                lr,
            });
            sgd_step(unet.params_mut(), &grads, &mut state, lr, hyper.momentum)?;
        }
    }
    Ok((unet, log))
}
