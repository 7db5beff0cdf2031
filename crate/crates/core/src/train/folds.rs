//! Stratified fold assignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::TrainError;
use crate::models::NUM_CLASSES;
use crate::seeds::derive_rng;

/// Tracks expected per genre in the full protocol.
pub const TRACKS_PER_GENRE: usize = 100;
/// Per-genre fold sizes in the full protocol.
pub const GENRE_SPLIT: [usize; 3] = [34, 33, 33];

/// A track's identity and label, the only inputs folding needs.
#[derive(Debug, Clone)]
pub struct TrackRef {
    pub track_id: String,
    pub genre: usize,
}

/// Assignment of every track to one of three folds.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    folds: [Vec<String>; 3],
    pub seed: u64,
}

impl FoldPlan {
    /// Track ids in a fold, in assignment order.
    pub fn fold(&self, index: usize) -> &[String] {
        &self.folds[index]
    }

    /// The fold containing a track, if any.
    pub fn fold_of(&self, track_id: &str) -> Option<usize> {
        self.folds
            .iter()
            .position(|f| f.iter().any(|t| t == track_id))
    }

    /// The three rounds as (train, validation, test) fold indices; each
    /// fold serves each role exactly once.
    pub fn rounds(&self) -> [(usize, usize, usize); 3] {
        [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    }
}

fn group_by_genre(tracks: &[TrackRef]) -> Result<BTreeMap<usize, Vec<&TrackRef>>, TrainError> {
    let mut by_genre: BTreeMap<usize, Vec<&TrackRef>> = BTreeMap::new();
    for t in tracks {
        if t.genre >= NUM_CLASSES {
            return Err(TrainError::Protocol {
                detail: format!("track {} has genre index {} out of range", t.track_id, t.genre),
            });
        }
        by_genre.entry(t.genre).or_default().push(t);
    }
    Ok(by_genre)
}

fn split_genre(plan: &mut [Vec<String>; 3], members: &[&TrackRef], sizes: [usize; 3], seed: u64, genre: usize) {
    let mut ids: Vec<&str> = members.iter().map(|t| t.track_id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = derive_rng(seed, &["folds", &genre.to_string()]);
    ids.shuffle(&mut rng);
    let mut at = 0;
    for (fold, &size) in sizes.iter().enumerate() {
        for id in &ids[at..at + size] {
            plan[fold].push(id.to_string());
        }
        at += size;
    }
}

/// The full-protocol fold assignment: 10 genres of exactly 100 tracks,
/// per-genre seeded shuffle, then 34/33/33 into the three folds.
pub fn make_folds(tracks: &[TrackRef], seed: u64) -> Result<FoldPlan, TrainError> {
    let by_genre = group_by_genre(tracks)?;
    let mut offending = Vec::new();
    for genre in 0..NUM_CLASSES {
        let n = by_genre.get(&genre).map_or(0, |v| v.len());
        if n != TRACKS_PER_GENRE {
            offending.push(format!("genre {genre}: {n} tracks"));
        }
    }
    if !offending.is_empty() {
        return Err(TrainError::Protocol {
            detail: format!(
                "need exactly {TRACKS_PER_GENRE} tracks in each of {NUM_CLASSES} genres; {}",
                offending.join(", ")
            ),
        });
    }
    let mut folds: [Vec<String>; 3] = Default::default();
    for (genre, members) in &by_genre {
        split_genre(&mut folds, members, GENRE_SPLIT, seed, *genre);
    }
    Ok(FoldPlan { folds, seed })
}

/// Fold assignment for datasets of any size: per-genre seeded shuffle,
/// then as even a 3-way split as the count allows (larger shares first,
/// mirroring the full protocol's 34/33/33). Every genre needs at least 3
/// tracks so each fold keeps all classes.
pub fn make_folds_flexible(tracks: &[TrackRef], seed: u64) -> Result<FoldPlan, TrainError> {
    let by_genre = group_by_genre(tracks)?;
    if by_genre.is_empty() {
        return Err(TrainError::Protocol {
            detail: "no tracks to fold".to_string(),
        });
    }
    let mut folds: [Vec<String>; 3] = Default::default();
    for (genre, members) in &by_genre {
        let n = members.len();
        if n < 3 {
            return Err(TrainError::Protocol {
                detail: format!("genre {genre} has {n} tracks, need at least 3 for 3 folds"),
            });
        }
        let base = n / 3;
        let extra = n % 3;
        let sizes = [
            base + usize::from(extra > 0),
            base + usize::from(extra > 1),
            base,
        ];
        split_genre(&mut folds, members, sizes, seed, *genre);
    }
    Ok(FoldPlan { folds, seed })
}
