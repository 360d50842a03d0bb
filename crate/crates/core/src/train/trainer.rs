use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ensemble::predict_series;
use super::optimizer::{AdamW, AdamWConfig};
use super::scheduler::{PlateauConfig, PlateauScheduler};
use crate::data::{
    draw_sample_budget, enumerate_samples, fill_window, filter_training_catalog, Catalog,
    ExclusionPolicy, SampleRef, WindowSpec,
};
use crate::error::{Error, Result};
use crate::folds::FoldAssignment;
use crate::metrics::{score_classes, AveragePrecision, MeanAp, UndefinedPolicy};
use crate::model::{CheckpointMeta, Network, NetworkSpec};
use crate::nn::{bce_with_logits, Mode};
use crate::tensor::{Matrix, Tensor3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Cap on training windows drawn per fold.
    pub sample_budget: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub scheduler: PlateauConfig,
    pub window: WindowSpec,
    pub exclusion: ExclusionPolicy,
    /// Anchor spacing for validation inference.
    pub eval_stride: usize,
    pub undefined_policy: UndefinedPolicy,
    pub network: NetworkSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            epochs: 1,
            sample_budget: 5_000_000,
            initial_lr: 1e-3,
            seed: 0,
            optimizer: AdamWConfig::default(),
            scheduler: PlateauConfig::default(),
            window: WindowSpec::default(),
            exclusion: ExclusionPolicy::default(),
            eval_stride: 1,
            undefined_policy: UndefinedPolicy::default(),
            network: NetworkSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.epochs == 0
            || self.sample_budget == 0
            || self.eval_stride == 0
        {
            return Err(Error::InvalidArgument(
                "batch_size, epochs, sample_budget and eval_stride must be positive".into(),
            ));
        }
        if self.initial_lr.is_nan() || self.initial_lr <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "initial_lr must be positive, got {}",
                self.initial_lr
            )));
        }
        WindowSpec::new(self.window.total, self.window.future)?;
        self.optimizer.validate()?;
        self.scheduler.validate()?;
        self.network.validate()?;
        if self.network.input_channels != 3
            || self.network.num_outputs != 3
            || self.network.window_length != self.window.total
        {
            return Err(Error::SpecMismatch(format!(
                "network must map [3, {}] windows to 3 outputs",
                self.window.total
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_BUDGET: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// Independent per-fold seed for one purpose.
pub fn derive_seed(seed: u64, stream: u64, fold: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream << 32 | fold as u64);
    rng.next_u64()
}

/// Training and validation series of one fold.
#[derive(Debug, Clone)]
pub struct FoldPartition {
    /// Series outside the fold, after the training-catalog filter.
    pub train: Catalog,
    /// All series assigned to the fold.
    pub validation: Catalog,
}

pub fn fold_partition(
    catalog: &Catalog,
    folds: &FoldAssignment,
    fold: usize,
) -> Result<FoldPartition> {
    if fold >= folds.k() {
        return Err(Error::InvalidArgument(format!(
            "fold {fold} out of range for k = {}",
            folds.k()
        )));
    }
    if let Some(e) = folds
        .entries()
        .find(|e| catalog.get(&e.series_id).is_none())
    {
        return Err(Error::InvalidArgument(format!(
            "fold assignment names series `{}`, which is not in the catalog",
            e.series_id
        )));
    }
    let train = filter_training_catalog(catalog)
        .filter(|s| folds.fold_of(&s.series_id).is_some_and(|f| f != fold));
    let validation = catalog.filter(|s| folds.fold_of(&s.series_id) == Some(fold));
    if train.is_empty() {
        return Err(Error::EmptyPartition {
            fold,
            partition: "training",
        });
    }
    if validation.is_empty() {
        return Err(Error::EmptyPartition {
            fold,
            partition: "validation",
        });
    }
    Ok(FoldPartition { train, validation })
}

/// One row of the cross-validation table plus training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub ap: [AveragePrecision; 3],
    pub map: MeanAp,
    pub train_series: usize,
    pub validation_series: usize,
    pub train_windows: usize,
    pub batches: usize,
    /// Mean loss over the first and the last few batches.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_lr: f64,
}

pub struct FoldOutcome {
    pub network: Network<f32>,
    pub meta: CheckpointMeta,
    pub report: FoldReport,
}

/// Training references of a partition after the budget draw, in batch
/// order.
pub fn training_schedule(
    config: &TrainConfig,
    train: &Catalog,
    fold: usize,
    epoch: usize,
) -> Result<Vec<SampleRef>> {
    let all = enumerate_samples(train, config.exclusion);
    let mut refs = draw_sample_budget(
        &all,
        config.sample_budget,
        derive_seed(config.seed, STREAM_BUDGET, fold),
    )?;
    let shuffle_seed = derive_seed(config.seed, STREAM_SHUFFLE, fold) ^ epoch as u64;
    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    Ok(refs)
}

fn materialize(
    catalog: &Catalog,
    refs: &[SampleRef],
    window: WindowSpec,
) -> Result<(Tensor3<f32>, Matrix<f32>)> {
    let w = 3 * window.total;
    let mut x = vec![0f32; refs.len() * w];
    x.par_chunks_mut(w)
        .zip(refs.par_iter())
        .for_each(|(dst, r)| {
            fill_window(
                &catalog.series()[r.series as usize],
                r.t as usize,
                window,
                dst,
            );
        });
    let mut y = Vec::with_capacity(refs.len() * 3);
    for r in refs {
        let s = &catalog.series()[r.series as usize];
        y.extend(s.labels.iter().map(|l| l[r.t as usize] as f32));
    }
    Ok((
        Tensor3::from_vec(x, refs.len(), 3, window.total)?,
        Matrix::from_vec(y, refs.len(), 3)?,
    ))
}

/// Trains one fold from scratch and scores it on its validation series.
pub fn train_fold(
    config: &TrainConfig,
    catalog: &Catalog,
    folds: &FoldAssignment,
    fold: usize,
) -> Result<FoldOutcome> {
    config.validate()?;
    let part = fold_partition(catalog, folds, fold)?;
    let mut net =
        Network::<f32>::init(&config.network, derive_seed(config.seed, STREAM_INIT, fold))?;
    let mut opt = AdamW::<f32>::for_params(
        config.optimizer,
        config.initial_lr,
        net.named_params().into_iter().map(|(_, p)| p),
    )?;
    let mut sched = PlateauScheduler::new(config.scheduler, config.initial_lr)?;

    let mut losses = Vec::new();
    let mut segment = Vec::with_capacity(config.scheduler.segment_batches);
    let mut train_windows = 0;
    for epoch in 0..config.epochs {
        let refs = training_schedule(config, &part.train, fold, epoch)?;
        for (b, batch) in refs.chunks(config.batch_size).enumerate() {
            let (x, y) = materialize(&part.train, batch, config.window)?;
            let (logits, cache) = net.forward(&x, Mode::Train)?;
            let (loss, grad) = bce_with_logits(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss in fold {fold}, epoch {epoch}, batch {b}"
                )));
            }
            net.zero_grad();
            net.backward(&cache, &grad)?;
            let mut params: Vec<_> = net.named_params_mut().into_iter().map(|(_, p)| p).collect();
            opt.step(&mut params)?;
            train_windows += batch.len();
            losses.push(loss as f64);
            segment.push(loss as f64);
            if segment.len() == config.scheduler.segment_batches {
                opt.lr = sched.observe(segment.iter().sum::<f64>() / segment.len() as f64);
                log::debug!(
                    "fold {fold}: segment loss {:.5}, lr {:e}",
                    segment.iter().sum::<f64>() / segment.len() as f64,
                    opt.lr
                );
                segment.clear();
            }
        }
    }
    net.zero_grad();

    let probe = config
        .scheduler
        .segment_batches
        .min((losses.len() / 4).max(1))
        .min(losses.len());
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let (initial_loss, final_loss) = (
        mean(&losses[..probe]),
        mean(&losses[losses.len() - probe..]),
    );

    let mut scores: [Vec<f64>; 3] = Default::default();
    let mut labels: [Vec<u8>; 3] = Default::default();
    for s in part.validation.series() {
        let probs = predict_series(&[&net], s, config.window, config.eval_stride)?;
        for c in 0..3 {
            scores[c].extend(probs.iter().map(|p| p[c] as f64));
            labels[c].extend_from_slice(&s.labels[c]);
        }
    }
    let scored = score_classes(scores, labels, config.undefined_policy)?;

    Ok(FoldOutcome {
        meta: CheckpointMeta {
            fold: Some(fold as u32),
            seed: config.seed,
            config_digest: config.digest(),
        },
        report: FoldReport {
            fold,
            ap: scored.ap,
            map: scored.map,
            train_series: part.train.len(),
            validation_series: part.validation.len(),
            train_windows,
            batches: losses.len(),
            initial_loss,
            final_loss,
            final_lr: opt.lr,
        },
        network: net,
    })
}
