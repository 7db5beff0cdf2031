//! Audio ingestion, segmentation, loudness measurement, and augmentation.
//!
//! The pipeline is fixed at 22,050 Hz mono. A 30-second clip is cut into
//! 21 windows of 110,250 samples (5 s) with 75% overlap, and each window
//! becomes one training example carrying the clip's genre label.

pub mod augment;
pub mod loudness;
pub mod resample;
pub mod vocoder;
pub mod wav;

use thiserror::Error;

pub use augment::{augment, augment_clip, AugmentOutcome, AugmentationConfig, AugmentedClip, Transform};
pub use loudness::measure_loudness;
pub use resample::resample;

/// Samples per segment: 5 s at 22,050 Hz.
pub const SEGMENT_LEN: usize = 110_250;
/// Hop between segment starts: floor(0.25 * SEGMENT_LEN), giving 75%
/// overlap and exactly 21 windows in a 30 s clip.
pub const SEGMENT_HOP: usize = 27_562;
/// Segments cut from every clip.
pub const SEGMENTS_PER_CLIP: usize = 21;
/// Canonical clip length: exactly 30 s.
pub const CLIP_LEN: usize = 661_500;
/// Shortest clip that still covers all 21 windows
/// (20 * SEGMENT_HOP + SEGMENT_LEN).
pub const MIN_CLIP_LEN: usize = 661_490;

/// A mono clip at the working sample rate.
#[derive(Debug, Clone)]
pub struct AudioClip {
    /// Samples in [-1, 1].
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub track_id: String,
    /// Class index 0-9, absent for unlabeled audio.
    pub genre_label: Option<usize>,
}

/// One 5-second training window of a clip.
#[derive(Debug, Clone)]
pub struct Segment {
    /// Exactly [`SEGMENT_LEN`] samples.
    pub samples: Vec<f32>,
    pub track_id: String,
    /// 0 to 20.
    pub segment_index: usize,
    /// Inherited from the parent clip.
    pub genre_label: Option<usize>,
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed WAV file {path}: {detail}")]
    MalformedWav { path: String, detail: String },
    #[error("unsupported WAV format in {path}: {detail}")]
    UnsupportedFormat { path: String, detail: String },
    #[error("{path} contains no audio samples")]
    EmptyAudio { path: String },
    #[error(
        "track {track_id} has {length} samples, need at least {minimum} (about 30 s at 22,050 Hz)"
    )]
    TooShort {
        track_id: String,
        length: usize,
        minimum: usize,
    },
    #[error("clip of {length} samples is shorter than one 400 ms loudness block ({minimum})")]
    LoudnessWindow { length: usize, minimum: usize },
}

/// Reads a WAV file into a mono clip at the working sample rate,
/// resampling when the source rate differs.
pub fn ingest(
    path: &std::path::Path,
    track_id: String,
    genre_label: Option<usize>,
) -> Result<AudioClip, AudioError> {
    let (samples, rate) = wav::read_wav_mono(path)?;
    let samples = if rate == crate::SAMPLE_RATE {
        samples
    } else {
        resample::resample(&samples, rate, crate::SAMPLE_RATE)
    };
    Ok(AudioClip {
        samples,
        sample_rate: crate::SAMPLE_RATE,
        track_id,
        genre_label,
    })
}

/// Truncates or zero-pads to the canonical 30 s clip length. Clips shorter
/// than [`MIN_CLIP_LEN`] are rejected rather than padded.
pub fn canonicalize(samples: &mut Vec<f32>, track_id: &str) -> Result<(), AudioError> {
    if samples.len() < MIN_CLIP_LEN {
        return Err(AudioError::TooShort {
            track_id: track_id.to_string(),
            length: samples.len(),
            minimum: MIN_CLIP_LEN,
        });
    }
    samples.resize(CLIP_LEN, 0.0);
    Ok(())
}

/// Cuts a clip into exactly [`SEGMENTS_PER_CLIP`] windows of
/// [`SEGMENT_LEN`] samples spaced [`SEGMENT_HOP`] apart.
pub fn segment(clip: &AudioClip) -> Result<Vec<Segment>, AudioError> {
    if clip.samples.len() < MIN_CLIP_LEN {
        return Err(AudioError::TooShort {
            track_id: clip.track_id.clone(),
            length: clip.samples.len(),
            minimum: MIN_CLIP_LEN,
        });
    }
    Ok((0..SEGMENTS_PER_CLIP)
        .map(|k| {
            let start = k * SEGMENT_HOP;
            Segment {
                samples: clip.samples[start..start + SEGMENT_LEN].to_vec(),
                track_id: clip.track_id.clone(),
                segment_index: k,
                genre_label: clip.genre_label,
            }
        })
        .collect())
}
