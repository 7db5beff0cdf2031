//! The three-round rotation: train, validate, test on rotating folds,
//! then mean and standard deviation over the rounds.

use std::collections::BTreeMap;

use serde::Serialize;

use super::aggregate::{predict_track, AggregationRule, PredictionRecord};
use super::folds::{FoldPlan, TrackRef};
use super::session::{argmax, EpochStats, SegmentSet, TrainConfig, TrainSession};
use super::TrainError;
use crate::audio::AudioClip;
use crate::models::Network;
use crate::Scalar;

/// One track's clips: the original plus its augmented variants. Augments
/// ride inside their origin's entry, so they can only ever enter a round
/// through that track's fold.
#[derive(Debug, Clone)]
pub struct TrackClips {
    pub original: AudioClip,
    pub augments: Vec<AudioClip>,
}

impl TrackClips {
    pub fn original_only(original: AudioClip) -> Self {
        TrackClips {
            original,
            augments: Vec::new(),
        }
    }

    pub fn track_id(&self) -> &str {
        &self.original.track_id
    }

    /// The (id, genre) reference used for fold assignment.
    pub fn track_ref(&self) -> Result<TrackRef, TrainError> {
        let genre = self
            .original
            .genre_label
            .ok_or_else(|| TrainError::MissingLabel {
                track_id: self.original.track_id.clone(),
            })?;
        Ok(TrackRef {
            track_id: self.original.track_id.clone(),
            genre,
        })
    }
}

/// Fold references across one round by id.
pub fn track_refs(tracks: &[TrackClips]) -> Result<Vec<TrackRef>, TrainError> {
    tracks.iter().map(TrackClips::track_ref).collect()
}

/// Per-round metrics.
#[derive(Debug, Clone, Serialize)]
pub struct RoundResult {
    pub round: usize,
    pub segment_accuracy: f64,
    pub track_accuracy_majority: f64,
    pub track_accuracy_sum: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

/// Everything a round produces: metrics, the trained network, the raw
/// per-track prediction records, and the epoch history.
pub struct RoundOutput<F: Scalar> {
    pub result: RoundResult,
    pub network: Network<F>,
    pub records: Vec<PredictionRecord>,
    pub history: Vec<EpochStats>,
}

/// Mean and sample standard deviation of each metric over the rounds.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary {
    pub segment_mean: f64,
    pub segment_std: f64,
    pub majority_mean: f64,
    pub majority_std: f64,
    pub sum_mean: f64,
    pub sum_std: f64,
}

/// Metrics document written by the command-line driver.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub architecture: String,
    pub augmentation: bool,
    pub seed: u64,
    pub rounds: Vec<RoundResult>,
    pub summary: EvaluationSummary,
}

/// The clips one round consumes, by role.
#[derive(Debug)]
pub struct RoundSets<'a> {
    pub train: Vec<&'a AudioClip>,
    pub val: Vec<&'a AudioClip>,
    pub test: Vec<&'a TrackClips>,
}

/// Collects the clips for one round. Training gets the train fold's
/// originals plus, when enabled, their augments; validation and test get
/// originals only.
pub fn assemble_round<'a>(
    plan: &FoldPlan,
    tracks: &'a [TrackClips],
    round: usize,
    augment: bool,
) -> Result<RoundSets<'a>, TrainError> {
    let by_id: BTreeMap<&str, &TrackClips> =
        tracks.iter().map(|t| (t.track_id(), t)).collect();
    if by_id.len() != tracks.len() {
        return Err(TrainError::Protocol {
            detail: "duplicate track ids in the evaluation set".to_string(),
        });
    }
    let rounds = plan.rounds();
    let &(train_fold, val_fold, test_fold) =
        rounds.get(round).ok_or_else(|| TrainError::Protocol {
            detail: format!("round {round} out of range (0..{})", rounds.len()),
        })?;
    let fold_tracks = |fold: usize| -> Result<Vec<&'a TrackClips>, TrainError> {
        plan.fold(fold)
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| TrainError::Protocol {
                        detail: format!("fold plan names track {id} but no clip was supplied"),
                    })
            })
            .collect()
    };
    let mut train = Vec::new();
    for t in fold_tracks(train_fold)? {
        train.push(&t.original);
        if augment {
            train.extend(t.augments.iter());
        }
    }
    let val = fold_tracks(val_fold)?.into_iter().map(|t| &t.original).collect();
    let test = fold_tracks(test_fold)?;
    Ok(RoundSets { train, val, test })
}

/// Segment accuracy plus track accuracy under both rules, from the test
/// fold's prediction records.
pub fn score_records(records: &[PredictionRecord]) -> Result<(f64, f64, f64), TrainError> {
    if records.is_empty() {
        return Err(TrainError::Protocol {
            detail: "no test-fold records to score".to_string(),
        });
    }
    let mut seg_total = 0usize;
    let mut seg_correct = 0usize;
    let mut maj_correct = 0usize;
    let mut sum_correct = 0usize;
    for rec in records {
        seg_total += rec.probabilities.len();
        seg_correct += rec
            .probabilities
            .iter()
            .filter(|row| argmax(row) == rec.genre_label)
            .count();
        maj_correct += rec.correct(AggregationRule::Majority)? as usize;
        sum_correct += rec.correct(AggregationRule::Sum)? as usize;
    }
    Ok((
        seg_correct as f64 / seg_total as f64,
        maj_correct as f64 / records.len() as f64,
        sum_correct as f64 / records.len() as f64,
    ))
}

/// Trains and tests one round of the rotation.
pub fn run_round<F: Scalar>(
    plan: &FoldPlan,
    tracks: &[TrackClips],
    round: usize,
    config: &TrainConfig,
) -> Result<RoundOutput<F>, TrainError> {
    run_round_with(plan, tracks, round, config, |_| {})
}

/// [`run_round`] with a per-epoch observer for progress reporting.
pub fn run_round_with<F: Scalar>(
    plan: &FoldPlan,
    tracks: &[TrackClips],
    round: usize,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<RoundOutput<F>, TrainError> {
    let sets = assemble_round(plan, tracks, round, config.augment)?;
    let train_set = SegmentSet::from_clips(sets.train.iter().copied())?;
    let val_set = SegmentSet::from_clips(sets.val.iter().copied())?;
    let mut session = TrainSession::<F>::new(config.clone(), round, train_set, Some(val_set))?;
    while !session.should_stop() {
        let stats = session.run_epoch()?;
        on_epoch(&stats);
    }
    let (network, outcome) = session.finish();
    let mut records = Vec::with_capacity(sets.test.len());
    for track in &sets.test {
        records.push(predict_track(&network, &track.original)?);
    }
    let (segment_accuracy, track_accuracy_majority, track_accuracy_sum) =
        score_records(&records)?;
    Ok(RoundOutput {
        result: RoundResult {
            round,
            segment_accuracy,
            track_accuracy_majority,
            track_accuracy_sum,
            epochs_run: outcome.epochs_run,
            best_epoch: outcome.best_epoch,
        },
        network,
        records,
        history: outcome.history,
    })
}

/// Runs all three rounds and summarizes. A failing round fails the whole
/// evaluation; callers wanting partial artifacts drive [`run_round`]
/// themselves.
pub fn evaluate_rounds<F: Scalar>(
    plan: &FoldPlan,
    tracks: &[TrackClips],
    config: &TrainConfig,
) -> Result<(Vec<RoundOutput<F>>, EvaluationSummary), TrainError> {
    let mut outputs = Vec::with_capacity(plan.rounds().len());
    for round in 0..plan.rounds().len() {
        outputs.push(run_round(plan, tracks, round, config)?);
    }
    let results: Vec<RoundResult> = outputs.iter().map(|o| o.result.clone()).collect();
    let summary = summarize(&results)?;
    Ok((outputs, summary))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Mean and sample (n-1) standard deviation per metric.
pub fn summarize(rounds: &[RoundResult]) -> Result<EvaluationSummary, TrainError> {
    if rounds.is_empty() {
        return Err(TrainError::Protocol {
            detail: "no rounds to summarize".to_string(),
        });
    }
    let col = |f: fn(&RoundResult) -> f64| -> Vec<f64> { rounds.iter().map(f).collect() };
    let (segment_mean, segment_std) = mean_std(&col(|r| r.segment_accuracy));
    let (majority_mean, majority_std) = mean_std(&col(|r| r.track_accuracy_majority));
    let (sum_mean, sum_std) = mean_std(&col(|r| r.track_accuracy_sum));
    Ok(EvaluationSummary {
        segment_mean,
        segment_std,
        majority_mean,
        majority_std,
        sum_mean,
        sum_std,
    })
}

/// Per-round metrics as CSV, one row per round.
pub fn metrics_csv(architecture: &str, augmentation: bool, rounds: &[RoundResult]) -> String {
    let mut out = String::from(
        "architecture,augmentation,round,segment_acc,track_acc_majority,track_acc_sum,epochs,best_epoch\n",
    );
    for r in rounds {
        out.push_str(&format!(
            "{architecture},{augmentation},{},{:.6},{:.6},{:.6},{},{}\n",
            r.round,
            r.segment_accuracy,
            r.track_accuracy_majority,
            r.track_accuracy_sum,
            r.epochs_run,
            r.best_epoch
        ));
    }
    out
}
