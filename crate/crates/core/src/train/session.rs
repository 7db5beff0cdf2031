//! Mini-batch training with early stopping.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::audio::{self, AudioClip};
use crate::models::{ArchName, Network, NUM_CLASSES};
use crate::seeds::{derive_rng, derive_seed};
use crate::tensor::{ops, Adam, AdamConfig, Mode, Tape, Tensor};
use crate::Scalar;

/// Training hyperparameters. Epoch and batch defaults follow the
/// protocol; patience and the monitored metric are this artifact's
/// choices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchName,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Consecutive epochs without validation improvement before stopping.
    pub patience: usize,
    pub augment: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(arch: ArchName) -> Self {
        TrainConfig {
            arch,
            max_epochs: 100,
            batch_size: 80,
            patience: 10,
            augment: false,
            seed: 0,
        }
    }
}

/// One labeled training example.
#[derive(Debug, Clone)]
pub struct SegmentSample {
    pub samples: Vec<f32>,
    pub label: usize,
    pub track_id: String,
}

/// An in-memory pool of segments.
#[derive(Debug, Clone, Default)]
pub struct SegmentSet {
    pub segments: Vec<SegmentSample>,
}

impl SegmentSet {
    /// Segments every clip, inheriting its label. Unlabeled clips are
    /// rejected; a mislabeled pool would train silently on garbage.
    pub fn from_clips<'a>(
        clips: impl IntoIterator<Item = &'a AudioClip>,
    ) -> Result<SegmentSet, TrainError> {
        let mut segments = Vec::new();
        for clip in clips {
            let label = clip.genre_label.ok_or_else(|| TrainError::MissingLabel {
                track_id: clip.track_id.clone(),
            })?;
            if label >= NUM_CLASSES {
                return Err(TrainError::Protocol {
                    detail: format!("track {} label {label} out of range", clip.track_id),
                });
            }
            for seg in audio::segment(clip)? {
                segments.push(SegmentSample {
                    samples: seg.samples,
                    label,
                    track_id: seg.track_id,
                });
            }
        }
        Ok(SegmentSet { segments })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn track_ids(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.track_id.as_str())
    }
}

/// Early-stopping bookkeeping: tracks the best observed validation loss
/// and counts consecutive non-improving epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best_epoch: usize,
    best_loss: f64,
    bad_streak: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best_epoch: 0,
            best_loss: f64::INFINITY,
            bad_streak: 0,
        }
    }

    /// Records one epoch's validation loss; returns true when this is a
    /// new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.bad_streak = 0;
            true
        } else {
            self.bad_streak += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience > 0 && self.bad_streak >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// Per-epoch metrics.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Final result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub epochs_run: usize,
    /// 1-based epoch whose weights the network now carries (best
    /// validation epoch, or the last epoch without validation).
    pub best_epoch: usize,
}

/// One round's training state: network, optimizer, data, and stopper.
pub struct TrainSession<F: Scalar> {
    net: Network<F>,
    adam: Adam<F>,
    train_set: SegmentSet,
    val_set: Option<SegmentSet>,
    config: TrainConfig,
    round: usize,
    epoch: usize,
    stopper: EarlyStopper,
    best_params: Option<crate::models::ParamSet<F>>,
    history: Vec<EpochStats>,
}

impl<F: Scalar> TrainSession<F> {
    pub fn new(
        config: TrainConfig,
        round: usize,
        train_set: SegmentSet,
        val_set: Option<SegmentSet>,
    ) -> Result<Self, TrainError> {
        if train_set.is_empty() {
            return Err(TrainError::Protocol {
                detail: "training set holds no segments".to_string(),
            });
        }
        if config.batch_size == 0 {
            return Err(TrainError::Protocol {
                detail: "batch size must be at least 1".to_string(),
            });
        }
        let init_seed = derive_seed(
            config.seed,
            &["init", config.arch.cli_name(), &round.to_string()],
        );
        let net = Network::build(config.arch, init_seed)?;
        let adam = Adam::new(AdamConfig::default(), net.adam_slots());
        Ok(TrainSession {
            net,
            adam,
            train_set,
            val_set,
            stopper: EarlyStopper::new(config.patience),
            config,
            round,
            epoch: 0,
            best_params: None,
            history: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network<F> {
        &self.net
    }

    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    fn batch_tensors(&self, indices: &[usize]) -> (Tensor<F>, Vec<usize>) {
        let b = indices.len();
        let l = audio::SEGMENT_LEN;
        let mut data = Vec::with_capacity(b * l);
        let mut labels = Vec::with_capacity(b);
        for &i in indices {
            let seg = &self.train_set.segments[i];
            data.extend(seg.samples.iter().map(|&v| F::from_config(v as f64)));
            labels.push(seg.label);
        }
        (
            Tensor::new(vec![b, 1, l], data).expect("segment length is fixed"),
            labels,
        )
    }

    /// Runs one training epoch (and a validation pass when a validation
    /// set is present), returning its metrics.
    pub fn run_epoch(&mut self) -> Result<EpochStats, TrainError> {
        self.epoch += 1;
        let epoch = self.epoch;

        let mut order: Vec<usize> = (0..self.train_set.len()).collect();
        let mut shuffle_rng = derive_rng(
            self.config.seed,
            &["shuffle", &self.round.to_string(), &epoch.to_string()],
        );
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle_rng);
        let mut dropout_rng = derive_rng(
            self.config.seed,
            &["dropout", &self.round.to_string(), &epoch.to_string()],
        );

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let (input, labels) = self.batch_tensors(chunk);
            let mut tape = Tape::new();
            let (logits, binds) =
                self.net
                    .forward_tape(&mut tape, input, Mode::Training, &mut dropout_rng)?;
            correct += count_correct(tape.value(logits), &labels);
            let loss = tape.cross_entropy(logits, &labels)?;
            let loss_value = tape.value(loss).item().to_f64().unwrap();
            if !loss_value.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: batch_idx,
                    steps: self.adam.steps_taken(),
                });
            }
            loss_sum += loss_value * chunk.len() as f64;
            tape.backward(loss)?;
            self.net.accumulate_grads(&tape, &binds);
            self.net.adam_step(&mut self.adam);
        }
        let n = self.train_set.len() as f64;
        let train_loss = loss_sum / n;
        let train_accuracy = correct as f64 / n;

        let (val_loss, val_accuracy) = match &self.val_set {
            Some(val) => {
                let (l, a) = evaluate_segments(&self.net, val, self.config.batch_size)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };

        if let Some(l) = val_loss {
            if self.stopper.observe(epoch, l) {
                self.best_params = Some(self.net.snapshot());
            }
        }

        let stats = EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        self.history.push(stats.clone());
        Ok(stats)
    }

    /// True once the epoch budget is spent or patience has run out.
    pub fn should_stop(&self) -> bool {
        self.epoch >= self.config.max_epochs
            || (self.val_set.is_some() && self.stopper.should_stop())
    }

    /// Runs epochs until [`Self::should_stop`], restores the best
    /// validation snapshot, and returns the trained network with its
    /// history.
    pub fn run_to_completion(mut self) -> Result<(Network<F>, TrainOutcome), TrainError> {
        while !self.should_stop() {
            self.run_epoch()?;
        }
        Ok(self.finish())
    }

    /// Restores the best validation snapshot (when validating) and
    /// dissolves the session.
    pub fn finish(mut self) -> (Network<F>, TrainOutcome) {
        let best_epoch = match &self.best_params {
            Some(snap) => {
                self.net.restore(snap);
                self.stopper.best_epoch()
            }
            None => self.epoch,
        };
        let outcome = TrainOutcome {
            history: self.history,
            epochs_run: self.epoch,
            best_epoch,
        };
        (self.net, outcome)
    }
}

fn count_correct<F: Scalar>(logits: &Tensor<F>, labels: &[usize]) -> usize {
    let classes = logits.shape()[1];
    logits
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &label)| argmax(row) == label)
        .count()
}

pub(crate) fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode mean cross-entropy and accuracy over a segment pool.
pub fn evaluate_segments<F: Scalar>(
    net: &Network<F>,
    set: &SegmentSet,
    batch_size: usize,
) -> Result<(f64, f64), TrainError> {
    let l = audio::SEGMENT_LEN;
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    for chunk in set.segments.chunks(batch_size.max(1)) {
        let mut data = Vec::with_capacity(chunk.len() * l);
        let mut labels = Vec::with_capacity(chunk.len());
        for seg in chunk {
            data.extend(seg.samples.iter().map(|&v| F::from_config(v as f64)));
            labels.push(seg.label);
        }
        let input = Tensor::new(vec![chunk.len(), 1, l], data)?;
        let logits = net.forward_infer(&input)?;
        correct += count_correct(&logits, &labels);
        let out = ops::cross_entropy(&logits, &labels)?;
        loss_sum += out.loss.to_f64().unwrap() * chunk.len() as f64;
    }
    let n = set.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strictly_rising_loss_stops_at_patience_with_first_best() {
        let mut stopper = EarlyStopper::new(10);
        let mut stopped_at = None;
        for epoch in 1..=100 {
            stopper.observe(epoch, epoch as f64);
            if stopper.should_stop() {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(11));
        assert_eq!(stopper.best_epoch(), 1);
    }

    #[test]
    fn improvement_resets_the_streak() {
        let mut stopper = EarlyStopper::new(3);
        for (epoch, loss) in [(1, 5.0), (2, 6.0), (3, 6.0), (4, 4.0), (5, 6.0), (6, 6.0)] {
            stopper.observe(epoch, loss);
            assert!(!stopper.should_stop(), "epoch {epoch}");
        }
        stopper.observe(7, 6.0);
        assert!(stopper.should_stop());
        assert_eq!(stopper.best_epoch(), 4);
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        let mut stopper = EarlyStopper::new(2);
        stopper.observe(1, 3.0);
        stopper.observe(2, 3.0);
        stopper.observe(3, 3.0);
        assert!(stopper.should_stop());
        assert_eq!(stopper.best_epoch(), 1);
    }

    #[test]
    fn argmax_takes_first_on_ties() {
        assert_eq!(argmax(&[0.1f32, 0.9, 0.9]), 1);
        assert_eq!(argmax(&[0.5f32, 0.2, 0.5]), 0);
    }
}
