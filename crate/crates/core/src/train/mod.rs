//! The 3-fold training and evaluation protocol.
//!
//! Tracks are stratified into three folds. Each of three rounds trains on
//! one fold, monitors validation loss on the next, and tests on the last,
//! rotating the roles. Per-segment predictions on the test fold are
//! aggregated into per-track decisions by majority vote or sum rule, and
//! the rounds are summarized as mean and sample standard deviation.

pub mod aggregate;
pub mod folds;
pub mod protocol;
pub mod session;

use thiserror::Error;

pub use aggregate::{
    aggregate_probabilities, predict_probabilities, predict_track, AggregationRule,
    PredictionRecord,
};
pub use folds::{make_folds, make_folds_flexible, FoldPlan, TrackRef};
pub use protocol::{
    assemble_round, evaluate_rounds, metrics_csv, run_round, run_round_with, score_records,
    summarize, track_refs, EvaluationSummary, MetricsReport, RoundOutput, RoundResult,
    RoundSets, TrackClips,
};
pub use session::{
    evaluate_segments, EarlyStopper, EpochStats, SegmentSample, SegmentSet, TrainConfig,
    TrainOutcome, TrainSession,
};

use crate::audio::AudioError;
use crate::models::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("protocol violation: {detail}")]
    Protocol { detail: String },
    #[error("track {track_id} has no genre label; training requires labeled clips")]
    MissingLabel { track_id: String },
    #[error(
        "non-finite training loss at epoch {epoch}, batch {batch} (optimizer steps taken: {steps})"
    )]
    NonFinite {
        epoch: usize,
        batch: usize,
        steps: u64,
    },
    #[error("prediction record holds no segment probabilities")]
    EmptyRecord,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}
