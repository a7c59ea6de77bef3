use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, cross_entropy_labels, softmax, softmax_ce_grad, AdamConfig, AdamState, Mode, Network};
use crate::rng::{derive_seed, rng_for};
use crate::{Element, Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub epochs: usize,
    pub lr: f64,
}

/// Consecutive constant-learning-rate phases sharing one Adam state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub phases: Vec<Phase>,
    pub batch_size: usize,
}

impl Schedule {
    /// 50 epochs at 1e-3, then 50 at 1e-5, batches of 32.
    pub fn head_default() -> Self {
        Self {
            phases: vec![Phase { epochs: 50, lr: 1e-3 }, Phase { epochs: 50, lr: 1e-5 }],
            batch_size: 32,
        }
    }

    /// 50 epochs at 1e-3, batches of 32.
    pub fn fusion_default() -> Self {
        Self {
            phases: vec![Phase { epochs: 50, lr: 1e-3 }],
            batch_size: 32,
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|p| p.epochs).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidParameter("batch size must be at least 2".into()));
        }
        if let Some(p) = self.phases.iter().find(|p| !(p.lr > 0.0 && p.lr.is_finite())) {
            return Err(Error::InvalidParameter(format!("learning rate {} must be positive", p.lr)));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let mut end = 0;
        for p in &self.phases {
            end += p.epochs;
            if epoch < end {
                return p.lr;
            }
        }
        self.phases.last().map_or(0.0, |p| p.lr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Shuffled minibatch index lists; a trailing batch of one row joins the
/// previous batch because batch norm needs two rows.
pub(crate) fn batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[epoch as u64]));
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("at least one batch").extend(tail);
    }
    out
}

/// Minibatch Adam on softmax cross-entropy. `data(epoch)` supplies the
/// training inputs for each epoch (fixed features, or freshly augmented
/// ones); row `i` must carry `labels[i]`.
pub fn train_network<T: Element>(
    net: &mut Network<T>,
    data: &mut dyn FnMut(usize) -> Result<Tensor<T>>,
    labels: &[usize],
    schedule: &Schedule,
    seed: u64,
) -> Result<TrainHistory> {
    schedule.validate()?;
    let mut history = TrainHistory::default();
    let total = schedule.total_epochs();
    if total == 0 {
        return Ok(history);
    }
    let shapes = net.param_shapes();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut adam = AdamState::new(&shape_refs, AdamConfig::with_lr(schedule.lr_at(0)))?;
    for epoch in 0..total {
        let lr = schedule.lr_at(epoch);
        adam.set_lr(lr)?;
        let x = data(epoch)?;
        let (n, _) = x.dims2()?;
        if n != labels.len() {
            return Err(Error::Dimension(format!("{n} training rows vs {} labels", labels.len())));
        }
        x.check_finite("training inputs")?;
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in batches(n, schedule.batch_size, seed, epoch).into_iter().enumerate() {
            let xb = x.select_rows(&idx)?;
            let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let logits = net.forward(&xb, Mode::Train, derive_seed(seed, &[epoch as u64, b as u64]))?;
            if !logits.is_finite() {
                return Err(Error::Divergence { epoch, loss: f64::NAN });
            }
            let probs = softmax(&logits)?;
            let loss = cross_entropy_labels(&probs, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss * idx.len() as f64;
            correct += argmax_rows(&probs).iter().zip(&yb).filter(|(p, y)| p == y).count();
            let grads = net.backward(&softmax_ce_grad(&probs, &yb)?)?;
            adam_step(&mut net.params_mut(), &grads, &mut adam)?;
        }
        if net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
        let stats = EpochStats {
            epoch,
            lr,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        };
        log::debug!("epoch {epoch}: loss {:.5} acc {:.4}", stats.loss, stats.accuracy);
        history.epochs.push(stats);
    }
    net.clear_cache();
    Ok(history)
}

/// Index of the largest entry per row; ties resolve to the lowest index.
pub fn argmax_rows<T: Element>(probs: &Tensor<T>) -> Vec<usize> {
    let cols = probs.shape().get(1).copied().unwrap_or(0);
    probs
        .data()
        .chunks(cols.max(1))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}
