//! Track-level decisions from per-segment class probabilities.

use serde::{Deserialize, Serialize};

use super::session::argmax;
use super::TrainError;
use crate::audio::{self, AudioClip};
use crate::models::{Network, NUM_CLASSES};
use crate::tensor::Tensor;
use crate::Scalar;

/// How segment votes combine into one track label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregationRule {
    /// Most frequent per-segment argmax; ties fall back to [`Self::Sum`].
    Majority,
    /// Argmax of the element-wise sum of probability vectors.
    Sum,
}

/// One track's per-segment probabilities plus its ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub track_id: String,
    pub genre_label: usize,
    /// One row per segment, each a distribution over classes.
    pub probabilities: Vec<Vec<f64>>,
}

/// The track-level class of a segment probability table under `rule`.
pub fn aggregate_probabilities(
    rows: &[Vec<f64>],
    rule: AggregationRule,
) -> Result<usize, TrainError> {
    if rows.is_empty() {
        return Err(TrainError::EmptyRecord);
    }
    let classes = rows[0].len();
    let summed = {
        let mut total = vec![0.0f64; classes];
        for row in rows {
            for (t, &p) in total.iter_mut().zip(row) {
                *t += p;
            }
        }
        argmax(&total)
    };
    match rule {
        AggregationRule::Sum => Ok(summed),
        AggregationRule::Majority => {
            let mut votes = vec![0usize; classes];
            for row in rows {
                votes[argmax(row)] += 1;
            }
            let top = *votes.iter().max().unwrap();
            let leaders: Vec<usize> = (0..classes).filter(|&c| votes[c] == top).collect();
            if leaders.len() == 1 {
                Ok(leaders[0])
            } else {
                Ok(summed)
            }
        }
    }
}

impl PredictionRecord {
    /// The track-level class under `rule`.
    pub fn aggregate(&self, rule: AggregationRule) -> Result<usize, TrainError> {
        aggregate_probabilities(&self.probabilities, rule)
    }

    pub fn correct(&self, rule: AggregationRule) -> Result<bool, TrainError> {
        Ok(self.aggregate(rule)? == self.genre_label)
    }
}

/// Segments a clip and runs inference, returning one probability row per
/// segment. Works on unlabeled clips.
pub fn predict_probabilities<F: Scalar>(
    net: &Network<F>,
    clip: &AudioClip,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let segments = audio::segment(clip)?;
    let l = audio::SEGMENT_LEN;
    let mut probabilities = Vec::with_capacity(segments.len());
    // Chunked batches keep the inference workspace small.
    for chunk in segments.chunks(7) {
        let mut data = Vec::with_capacity(chunk.len() * l);
        for seg in chunk {
            data.extend(seg.samples.iter().map(|&v| F::from_config(v as f64)));
        }
        let input = Tensor::new(vec![chunk.len(), 1, l], data)?;
        let probs = net.predict_probs(&input)?;
        for row in probs.data().chunks_exact(NUM_CLASSES) {
            probabilities.push(row.iter().map(|v| v.to_f64().unwrap()).collect());
        }
    }
    Ok(probabilities)
}

/// [`predict_probabilities`] bundled with the clip's ground truth.
pub fn predict_track<F: Scalar>(
    net: &Network<F>,
    clip: &AudioClip,
) -> Result<PredictionRecord, TrainError> {
    let label = clip.genre_label.ok_or_else(|| TrainError::MissingLabel {
        track_id: clip.track_id.clone(),
    })?;
    Ok(PredictionRecord {
        track_id: clip.track_id.clone(),
        genre_label: label,
        probabilities: predict_probabilities(net, clip)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(rows: Vec<Vec<f64>>) -> PredictionRecord {
        PredictionRecord {
            track_id: "t".to_string(),
            genre_label: 0,
            probabilities: rows,
        }
    }

    #[test]
    fn majority_and_sum_can_disagree() {
        // Two weak votes for class 0, one confident vote for class 1:
        // majority picks 0, the summed distribution picks 1.
        let rec = record(vec![
            vec![0.4, 0.35, 0.25],
            vec![0.4, 0.35, 0.25],
            vec![0.05, 0.9, 0.05],
        ]);
        assert_eq!(rec.aggregate(AggregationRule::Majority).unwrap(), 0);
        assert_eq!(rec.aggregate(AggregationRule::Sum).unwrap(), 1);
    }

    #[test]
    fn unanimous_segments_agree_under_both_rules() {
        let rec = record(vec![vec![0.1, 0.8, 0.1]; 21]);
        assert_eq!(rec.aggregate(AggregationRule::Majority).unwrap(), 1);
        assert_eq!(rec.aggregate(AggregationRule::Sum).unwrap(), 1);
    }

    #[test]
    fn vote_tie_falls_back_to_summed_probabilities() {
        // One vote each; the second is more confident, so the sum rule
        // breaks the tie toward class 1.
        let rec = record(vec![vec![0.6, 0.4], vec![0.1, 0.9]]);
        assert_eq!(rec.aggregate(AggregationRule::Majority).unwrap(), 1);
    }

    #[test]
    fn single_segment_is_its_own_aggregate() {
        let rec = record(vec![vec![0.2, 0.1, 0.7]]);
        assert_eq!(rec.aggregate(AggregationRule::Majority).unwrap(), 2);
        assert_eq!(rec.aggregate(AggregationRule::Sum).unwrap(), 2);
    }

    #[test]
    fn empty_record_is_rejected() {
        let rec = record(vec![]);
        assert!(matches!(
            rec.aggregate(AggregationRule::Sum),
            Err(TrainError::EmptyRecord)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sum_rule_is_argmax_of_elementwise_sum(
            rows in prop::collection::vec(
                prop::collection::vec(0.0f64..1.0, 4),
                1..12,
            )
        ) {
            let rec = record(rows.clone());
            let mut total = [0.0f64; 4];
            for row in &rows {
                for (t, &p) in total.iter_mut().zip(row) {
                    *t += p;
                }
            }
            let expect = total
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            prop_assert_eq!(rec.aggregate(AggregationRule::Sum).unwrap(), expect);
        }
    }
}
