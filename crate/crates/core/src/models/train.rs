//! Mini-batch training loop shared by both model families.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;

use crate::container::Split;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::sparse::SparseBinary;
use crate::tasks::PairDataset;

use super::ae::{AeBatch, TiedAutoencoder};
use super::mlp::MlpClassifier;
use super::optim::{Adam, OptimizerKind, Schedule};
use super::{Gradients, Parametric};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub schedule: Schedule,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 1024,
            base_lr: 1e-3,
            schedule: Schedule::Cosine,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch size must be positive".into()));
        }
        if !(self.base_lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive and weight decay non-negative".into()));
        }
        Ok(())
    }

    /// The optimizer actually run: any positive decay implies AdamW.
    pub fn effective_optimizer(&self) -> OptimizerKind {
        if self.weight_decay > 0.0 {
            OptimizerKind::AdamW
        } else {
            self.optimizer
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss of every completed epoch.
    pub history: Vec<f64>,
    pub steps: usize,
    /// `(epoch, step)` of the first non-finite loss or gradient; the model
    /// is left at the last finite parameters.
    pub diverged: Option<(usize, usize)>,
}

impl TrainReport {
    pub fn into_result(self) -> Result<Vec<f64>> {
        match self.diverged {
            Some((epoch, step)) => Err(Error::Diverged { epoch, step }),
            None => Ok(self.history),
        }
    }
}

fn all_finite(slices: &[&[f64]]) -> bool {
    slices.iter().all(|s| s.iter().all(|x| x.is_finite()))
}

/// Runs `cfg.epochs` passes over `n` samples. `grad` returns the batch loss
/// and gradient for a list of sample indices.
pub fn fit<M, G, F>(model: &mut M, n: usize, cfg: &TrainConfig, mut grad: F) -> Result<TrainReport>
where
    M: Parametric,
    G: Gradients,
    F: FnMut(&M, &[usize]) -> Result<(f64, G)>,
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut opt = Adam::new(cfg.effective_optimizer(), cfg.weight_decay, &sizes);
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = cfg.epochs * per_epoch;
    let mut rng = rng::stream(cfg.seed, Purpose::Shuffle);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, g) = grad(model, batch)?;
            let slices = g.slices();
            if !loss.is_finite() || !all_finite(&slices) {
                return Ok(TrainReport { history, steps: step, diverged: Some((epoch, step)) });
            }
            let lr = cfg.schedule.lr(cfg.base_lr, step, total);
            opt.step(model.params_mut(), slices, lr);
            sum += loss;
            step += 1;
        }
        history.push(sum / per_epoch as f64);
    }
    Ok(TrainReport { history, steps: step, diverged: None })
}

pub fn train_ae(model: &mut TiedAutoencoder, data: &SparseBinary, cfg: &TrainConfig) -> Result<TrainReport> {
    if data.cols() != model.input_dim() {
        return Err(Error::Dimension(format!("data has {} features, model {}", data.cols(), model.input_dim())));
    }
    fit(model, data.rows(), cfg, |m, idx| m.backward(&AeBatch::sparse(data, idx)))
}

pub fn train_ae_dense(model: &mut TiedAutoencoder, x: ArrayView2<f64>, cfg: &TrainConfig) -> Result<TrainReport> {
    if x.ncols() != model.input_dim() {
        return Err(Error::Dimension(format!("data has {} features, model {}", x.ncols(), model.input_dim())));
    }
    fit(model, x.nrows(), cfg, |m, idx| m.backward(&AeBatch::dense(x.select(ndarray::Axis(0), idx).view())))
}

/// Trains on the pairs tagged [`Split::Train`].
pub fn train_mlp(model: &mut MlpClassifier, data: &PairDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let train = data.indices(Split::Train);
    let pairs: Vec<(u32, u32)> = train.iter().map(|&i| data.pairs[i]).collect();
    let labels: Vec<u32> = train.iter().map(|&i| data.labels[i]).collect();
    fit(model, pairs.len(), cfg, |m, idx| {
        let p: Vec<_> = idx.iter().map(|&i| pairs[i]).collect();
        let l: Vec<_> = idx.iter().map(|&i| labels[i]).collect();
        m.backward(&p, &l)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ae::Activation;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, d: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Array2::from_shape_simple_fn((n, d), || rng.random::<f64>())
    }

    #[test]
    fn linear_ae_with_full_width_converges() {
        let x = toy(100, 5);
        let mut ae = TiedAutoencoder::init(5, 5, Activation::Identity, 3).unwrap();
        let cfg = TrainConfig { epochs: 600, batch_size: 20, base_lr: 1e-2, ..Default::default() };
        train_ae_dense(&mut ae, x.view(), &cfg).unwrap();
        let loss = ae.loss(&AeBatch::dense(x.view())).unwrap();
        assert!(loss < 1e-4, "{loss}");
    }

    #[test]
    fn training_is_deterministic() {
        let x = toy(64, 6);
        let cfg = TrainConfig { epochs: 5, batch_size: 16, seed: 9, ..Default::default() };
        let run = || {
            let mut ae = TiedAutoencoder::init(3, 6, Activation::Rectifier, 9).unwrap();
            let r = train_ae_dense(&mut ae, x.view(), &cfg).unwrap();
            (ae, r)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn small_lr_linear_loss_is_nearly_monotone() {
        let x = toy(200, 8);
        let mut ae = TiedAutoencoder::init(3, 8, Activation::Identity, 4).unwrap();
        let cfg = TrainConfig { epochs: 30, batch_size: 50, base_lr: 1e-3, ..Default::default() };
        let h = train_ae_dense(&mut ae, x.view(), &cfg).unwrap().into_result().unwrap();
        for w in h.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "{h:?}");
        }
    }

    #[test]
    fn divergence_stops_at_last_finite_model() {
        let x = toy(10, 3);
        let mut ae = TiedAutoencoder::init(2, 3, Activation::Identity, 1).unwrap();
        ae.w[[0, 0]] = 1e200;
        let before = ae.clone();
        let cfg = TrainConfig { epochs: 2, batch_size: 5, ..Default::default() };
        let report = train_ae_dense(&mut ae, x.view(), &cfg).unwrap();
        assert_eq!(report.diverged, Some((0, 0)));
        assert_eq!(ae, before);
        assert!(matches!(report.into_result(), Err(Error::Diverged { .. })));
    }
}
