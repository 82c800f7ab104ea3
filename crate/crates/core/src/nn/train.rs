//! Mini-batch ADAM training with seeded shuffling and early stopping on
//! validation accuracy.
//!
//! Per-sample gradients are computed in fixed-size chunks (in parallel when
//! threads are available) and summed in chunk order, so results do not depend
//! on the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use super::optim::{adam_step, OptimizerState, TrainConfig};
use super::{argmax, NnError, Tensor};

/// Indexed labeled samples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;
    fn get(&self, index: usize) -> (Tensor, usize);
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [(Tensor, usize)] {
    fn len(&self) -> usize {
        <[(Tensor, usize)]>::len(self)
    }
    fn get(&self, index: usize) -> (Tensor, usize) {
        self[index].clone()
    }
}

impl SampleSource for Vec<(Tensor, usize)> {
    fn len(&self) -> usize {
        Vec::len(self)
    }
    fn get(&self, index: usize) -> (Tensor, usize) {
        self[index].clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Samples per gradient chunk; fixed so the summation order never changes.
const CHUNK: usize = 4;

/// Mean loss and accuracy over `indices`, summed in index order.
pub fn evaluate_loss<S: SampleSource + ?Sized>(
    net: &Network,
    source: &S,
    indices: &[usize],
) -> Result<(f64, f64), NnError> {
    let per: Vec<(f64, bool)> = indices
        .par_iter()
        .map(|&i| {
            let (x, label) = source.get(i);
            let (loss, probs) = net.loss(&x, label)?;
            Ok((loss, argmax(&probs) == label))
        })
        .collect::<Result<_, NnError>>()?;
    let n = per.len().max(1) as f64;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    Ok((loss, acc))
}

fn batch_gradients<S: SampleSource + ?Sized>(
    net: &Network,
    source: &S,
    batch: &[usize],
) -> Result<(Gradients, Vec<(usize, f64, bool)>), NnError> {
    let chunks: Vec<(Gradients, Vec<(usize, f64, bool)>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = net.zero_grads();
            let mut stats = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (x, label) = source.get(i);
                let (loss, probs) = net.loss_and_grad(&x, label, &mut grads)?;
                stats.push((i, loss, argmax(&probs) == label));
            }
            Ok((grads, stats))
        })
        .collect::<Result<_, NnError>>()?;
    let mut iter = chunks.into_iter();
    let (mut total, mut stats) = iter.next().expect("non-empty batch");
    for (g, s) in iter {
        total.add(&g);
        stats.extend(s);
    }
    total.scale(1.0 / batch.len() as f64);
    Ok((total, stats))
}

pub fn train<S: SampleSource + ?Sized>(
    net: Network,
    source: &S,
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
) -> Result<(Network, TrainReport), NnError> {
    train_with_progress(net, source, train_idx, val_idx, config, |_| {})
}

/// As [`train`], calling `on_epoch` after each epoch.
pub fn train_with_progress<S: SampleSource + ?Sized>(
    mut net: Network,
    source: &S,
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(Network, TrainReport), NnError> {
    config.validate()?;
    if train_idx.is_empty() {
        return Err(NnError::EmptySplit("train"));
    }
    if val_idx.is_empty() {
        return Err(NnError::EmptySplit("validation"));
    }
    let mut state = OptimizerState::new(net.blocks().iter().map(|b| b.len()));
    let mut order = train_idx.to_vec();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut seen: Vec<(usize, f64, bool)> = Vec::with_capacity(order.len());
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (grads, stats) = batch_gradients(&net, source, batch)?;
            if let Some(&(i, loss, _)) = stats.iter().find(|s| !s.1.is_finite()) {
                return Err(NnError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    sample: i,
                    loss,
                });
            }
            seen.extend(stats);
            adam_step(&mut net.blocks_mut(), &grads, &mut state, config)?;
        }
        // Sum in sample-index order so equal weights give equal metrics.
        seen.sort_by_key(|s| s.0);
        let n = seen.len() as f64;
        let train_loss = seen.iter().map(|s| s.1).sum::<f64>() / n;
        let train_accuracy = seen.iter().filter(|s| s.2).count() as f64 / n;
        let (val_loss, val_accuracy) = evaluate_loss(&net, source, val_idx)?;
        let m = EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        on_epoch(&m);
        epochs.push(m);

        let improved = best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc);
        if improved {
            best = Some((val_accuracy, epoch, net.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    let (net, best_epoch) = match best {
        Some((_, e, n)) => (n, e),
        None => (net, 0),
    };
    Ok((
        net,
        TrainReport {
            epochs,
            best_epoch,
            stopped_early,
        },
    ))
}
