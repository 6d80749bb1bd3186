//! Supervised training: input normalization, MAE loss, Adam and the
//! reduce-on-plateau learning-rate schedule.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::UnoModel;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensorcore::{DiffTensor, Operation, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Fraction of the samples used for training; the rest validates.
    pub split_fraction: f64,
    pub lr_initial: f64,
    pub lr_factor: f64,
    pub plateau_patience_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub input_norm_std_target: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            split_fraction: 0.9,
            lr_initial: 1e-3,
            lr_factor: 0.5,
            plateau_patience_epochs: 20,
            epochs: 110,
            batch_size: 8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            input_norm_std_target: 0.25,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must lie in (0, 1)");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad("lr_factor must lie in (0, 1)");
        }
        if self.plateau_patience_epochs == 0 {
            return bad("plateau_patience_epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr_initial > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("learning rate must be positive and Adam betas in [0, 1)");
        }
        if !(self.epsilon > 0.0) || !(self.input_norm_std_target > 0.0) {
            return bad("epsilon and input_norm_std_target must be positive");
        }
        Ok(())
    }
}

/// Global statistics of the training inputs `a = V_S²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    /// Standard deviation of the normalized field.
    pub target_std: f64,
}

impl NormStats {
    /// Mean and population standard deviation over every voxel of every field.
    pub fn from_fields<T: Scalar>(fields: &[&Tensor<T>], target_std: f64) -> Result<Self> {
        let count: usize = fields.iter().map(|f| f.len()).sum();
        if count == 0 {
            return Err(Error::ZeroVariance);
        }
        let n = count as f64;
        let mean = fields.iter().flat_map(|f| f.data()).map(|v| v.to_f64_lossy()).sum::<f64>() / n;
        let var = fields
            .iter()
            .flat_map(|f| f.data())
            .map(|v| (v.to_f64_lossy() - mean).powi(2))
            .sum::<f64>()
            / n;
        let stats = Self { mean, std: var.sqrt(), target_std };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        // relative floor: a constant field in f64 leaves only rounding noise
        if !(self.std > 1e-12 * self.mean.abs().max(f64::MIN_POSITIVE)) || !self.std.is_finite() {
            return Err(Error::ZeroVariance);
        }
        Ok(())
    }

    /// `target_std · (a − mean)/std`.
    pub fn apply<T: Scalar>(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        normalize_inputs(a, self)
    }
}

pub fn normalize_inputs<T: Scalar>(a: &Tensor<T>, stats: &NormStats) -> Result<Tensor<T>> {
    stats.validate()?;
    let k = stats.target_std / stats.std;
    Ok(a.map(|v| T::lit(k * (v.to_f64_lossy() - stats.mean))))
}

/// Sum over the three components of the per-component mean absolute error.
pub fn mae_value<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    check_components(pred, target)?;
    let per = pred.len() / 3;
    let mut total = T::zero();
    for c in 0..3 {
        let s: T = pred.outer(c).iter().zip(target.outer(c)).map(|(&p, &t)| (p - t).abs()).sum();
        total += s / T::from_usize_lossy(per);
    }
    Ok(total)
}

fn check_components<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if pred.shape() != target.shape() || pred.rank() < 1 || pred.shape()[0] != 3 || pred.is_empty() {
        return Err(Error::ShapeMismatch {
            context: "mae_loss",
            expected: target.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    Ok(())
}

struct MaeOp;

impl<T: Scalar> Operation<T> for MaeOp {
    fn name(&self) -> &'static str {
        "mae"
    }

    fn backward(&self, grad: &Tensor<T>, inputs: &[&Tensor<T>], _: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let (p, t) = (inputs[0], inputs[1]);
        let k = grad.data()[0] / T::from_usize_lossy(p.len() / 3);
        // subgradient 0 at ties
        let dp = p.zip_map(t, |a, b| {
            if a > b {
                k
            } else if a < b {
                -k
            } else {
                T::zero()
            }
        })?;
        let dt = needs[1].then(|| dp.scale(-T::one()));
        Ok(vec![needs[0].then_some(dp), dt])
    }
}

/// Differentiable [`mae_value`]; `pred` and `target` are `(3, ...)`.
pub fn mae_loss<T: Scalar>(tape: &mut Tape<T>, pred: DiffTensor, target: DiffTensor) -> Result<DiffTensor> {
    let v = mae_value(tape.value(pred), tape.value(target))?;
    Ok(tape.record(Tensor::scalar(v), &[pred, target], Box::new(MaeOp)))
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &[Tensor<T>], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { beta1, beta2, epsilon, step: 0, m: zeros(), v: zeros() }
    }

    /// One update. Non-finite gradients abort before anything is modified.
    pub fn update(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::ShapeMismatch {
                context: "adam parameter list",
                expected: vec![self.m.len()],
                got: vec![grads.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            g.expect_shape("adam gradient", p.shape())?;
            if !g.all_finite() {
                return Err(Error::NonFinite { context: format!("gradient of parameter {i} at Adam step {}", self.step + 1) });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one, eps) = (T::one(), T::lit(self.epsilon));
        let (lr_t, c1, c2) = (T::lit(lr), T::lit(c1), T::lit(c2));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((p, &g), (m, v)) in it {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once the best validation loss has
/// not strictly decreased for `patience` consecutive epochs. The first epoch
/// only sets the best value; the counter restarts after each reduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self { lr, factor, patience, best: None, bad_epochs: 0 }
    }

    /// Records one epoch's validation loss; returns the learning rate for the next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        match self.best {
            Some(best) if !(loss < best) => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    self.lr *= self.factor;
                    self.bad_epochs = 0;
                }
            }
            _ => {
                self.best = Some(loss);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

/// Learning rate after replaying a validation-loss history.
pub fn lr_from_history(history: &[f64], lr: f64, factor: f64, patience: usize) -> f64 {
    let mut s = PlateauScheduler::new(lr, factor, patience);
    history.iter().fold(lr, |_, &l| s.observe(l))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// One seeded shuffle of `0..n`; the first part trains, the last
/// `ceil((1 − fraction)·n)` samples validate.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, 1));
    // guard against 0.1·10 = 1.0000000000000009
    let n_val = (((1.0 - fraction) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let validation = idx.split_off(n - n_val.min(n));
    Split { train: idx, validation }
}

/// One (input, target) pair: `V_S²` of shape `(N1, N2, N3)` and the record `(3, X, Y, T)`.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub input: Tensor<T>,
    pub target: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingReport<T> {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub best_params: Vec<Tensor<T>>,
}

impl<T> TrainingReport<T> {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mae,val_mae,lr\n");
        for r in &self.history {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.epoch, r.train_mae, r.val_mae, r.lr));
        }
        s
    }
}

/// Loss and parameter gradients for one sample.
pub fn loss_and_gradients<T: Scalar>(model: &UnoModel<T>, input: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let params: Vec<DiffTensor> = model.params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let x = tape.constant(input.clone());
    let y = model.forward_on_tape(&mut tape, &params, x)?;
    let t = tape.constant(target.clone());
    let loss = mae_loss(&mut tape, y, t)?;
    let value = tape.value(loss).data()[0];
    let mut grads = tape.backward(loss)?;
    let grads = params
        .iter()
        .zip(&model.params)
        .map(|(&h, p)| grads.take(h).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, grads))
}

/// Mean loss of the model over `indices`.
pub fn evaluate_mae<T: Scalar>(model: &UnoModel<T>, samples: &[Sample<T>], indices: &[usize]) -> Result<f64> {
    let losses = indices
        .par_iter()
        .map(|&i| {
            let pred = model.forward(&samples[i].input)?;
            Ok(mae_value(&pred, &samples[i].target)?.to_f64_lossy())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains `model` in place on `split.train`, validating on `split.validation`
/// after every epoch. Normalization statistics are fitted on the training
/// inputs only and stored on the model.
///
/// `on_epoch` sees every epoch's record together with the current model and
/// whether it is the best so far, which is where checkpoints get written. A
/// non-finite loss aborts the run; the last reported best stays valid.
pub fn train<T: Scalar>(
    model: &mut UnoModel<T>,
    samples: &[Sample<T>],
    split: &Split,
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &UnoModel<T>, bool) -> Result<()>,
) -> Result<TrainingReport<T>> {
    config.validate()?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(Error::InvalidConfig("training and validation splits must both be non-empty".into()));
    }
    let train_inputs: Vec<&Tensor<T>> = split.train.iter().map(|&i| &samples[i].input).collect();
    model.norm = Some(NormStats::from_fields(&train_inputs, config.input_norm_std_target)?);
    let prepared: Vec<Tensor<T>> = samples.iter().map(|s| model.prepare_input(&s.input)).collect::<Result<_>>()?;

    let mut adam = Adam::new(&model.params, config.beta1, config.beta2, config.epsilon);
    let mut scheduler = PlateauScheduler::new(config.lr_initial, config.lr_factor, config.plateau_patience_epochs);
    let mut report = TrainingReport { history: Vec::new(), best_epoch: 0, best_val_mae: f64::INFINITY, best_params: model.params.clone() };
    let mut order = split.train.clone();

    for epoch in 1..=config.epochs {
        let lr = scheduler.lr;
        order.copy_from_slice(&split.train);
        order.shuffle(&mut rng::stream(rng::derive_seed(config.seed, epoch as u64), 2));
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let items = batch
                .par_iter()
                .map(|&i| loss_and_gradients(model, &prepared[i], &samples[i].target))
                .collect::<Result<Vec<_>>>()?;
            // fixed summation order keeps runs bitwise reproducible
            let mut iter = items.into_iter();
            let (first_loss, mut acc) = iter.next().expect("non-empty batch");
            loss_sum += first_loss.to_f64_lossy();
            for (l, g) in iter {
                loss_sum += l.to_f64_lossy();
                for (a, g) in acc.iter_mut().zip(&g) {
                    a.add_assign(g)?;
                }
            }
            let k = T::one() / T::from_usize_lossy(batch.len());
            acc.iter_mut().for_each(|a| a.data_mut().iter_mut().for_each(|x| *x *= k));
            adam.update(&mut model.params, &acc, lr)?;
        }
        let train_mae = loss_sum / split.train.len() as f64;
        if !train_mae.is_finite() {
            return Err(Error::NonFinite { context: format!("training loss at epoch {epoch}") });
        }
        let val_mae = evaluate_mae(model, samples, &split.validation)?;
        if !val_mae.is_finite() {
            return Err(Error::NonFinite { context: format!("validation loss at epoch {epoch}") });
        }
        let record = EpochRecord { epoch, train_mae, val_mae, lr };
        let is_best = val_mae < report.best_val_mae;
        if is_best {
            report.best_epoch = epoch;
            report.best_val_mae = val_mae;
            report.best_params = model.params.clone();
        }
        on_epoch(&record, model, is_best)?;
        report.history.push(record);
        scheduler.observe(val_mae);
    }
    Ok(report)
}
