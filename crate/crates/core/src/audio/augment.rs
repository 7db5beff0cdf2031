//! The five waveform augmentations: additive noise, gain, loudness
//! normalization, pitch shift, and time stretch.
//!
//! Each transform draws its parameter from a supplied RNG; corpus-level
//! code derives that RNG from (corpus seed, track id, transform name) so
//! any clip's augmentations are reproducible in isolation. All outputs are
//! hard-clipped to [-1, 1] and keep the input's label.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loudness::{measure_loudness, SILENCE_LUFS};
use super::resample::resample_len;
use super::vocoder::time_stretch;
use super::{AudioClip, AudioError};

/// One of the five augmentation transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Noise,
    Gain,
    Loudness,
    Pitch,
    Stretch,
}

impl Transform {
    pub const ALL: [Transform; 5] = [
        Transform::Noise,
        Transform::Gain,
        Transform::Loudness,
        Transform::Pitch,
        Transform::Stretch,
    ];

    /// Stable tag used in manifests, file names, and seed derivation.
    pub fn tag(self) -> &'static str {
        match self {
            Transform::Noise => "noise",
            Transform::Gain => "gain",
            Transform::Loudness => "loudness",
            Transform::Pitch => "pitch",
            Transform::Stretch => "stretch",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Transform> {
        Transform::ALL.into_iter().find(|t| t.tag() == tag)
    }
}

/// Parameter ranges for the transforms. The ranges are fixed by the
/// protocol; only the loudness target and seed are judgment calls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Noise standard deviation range.
    pub noise_amplitude_range: (f64, f64),
    pub gain_db_range: (f64, f64),
    /// Loudness normalization target in LUFS.
    pub loudness_target: f64,
    pub pitch_semitone_range: (f64, f64),
    pub stretch_rate_range: (f64, f64),
    /// Corpus seed driving every per-clip parameter draw.
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            noise_amplitude_range: (0.005, 0.02),
            gain_db_range: (-12.0, 12.0),
            loudness_target: -23.0,
            pitch_semitone_range: (-8.0, 8.0),
            stretch_rate_range: (0.5, 1.5),
            seed: 0,
        }
    }
}

/// An augmented clip plus the parameter that produced it.
#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub clip: AudioClip,
    /// The drawn parameter: noise sigma, gain dB, applied loudness gain in
    /// dB, pitch semitones, or stretch rate.
    pub parameter: f64,
    /// Set when a transform degenerates to a copy (loudness on silence).
    pub warning: Option<String>,
}

fn clipped(samples: impl IntoIterator<Item = f32>) -> Vec<f32> {
    samples.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

fn with_samples(clip: &AudioClip, samples: Vec<f32>) -> AudioClip {
    AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        track_id: clip.track_id.clone(),
        genre_label: clip.genre_label,
    }
}

/// Adds i.i.d. zero-mean Gaussian noise of the given standard deviation.
pub fn add_noise<R: Rng>(clip: &AudioClip, sigma: f64, rng: &mut R) -> AudioClip {
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and positive");
    let samples = clipped(
        clip.samples
            .iter()
            .map(|&v| v + normal.sample(rng) as f32),
    );
    with_samples(clip, samples)
}

/// Scales by `10^(db/20)`.
pub fn apply_gain(clip: &AudioClip, db: f64) -> AudioClip {
    let g = 10f64.powf(db / 20.0) as f32;
    let samples = clipped(clip.samples.iter().map(|&v| v * g));
    with_samples(clip, samples)
}

/// Shifts pitch by the given semitones at unchanged duration: vocoder
/// stretch to length times 2^(s/12), then sinc resampling back.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> AudioClip {
    let factor = 2f64.powf(semitones / 12.0);
    let stretched = time_stretch(&clip.samples, 1.0 / factor);
    let samples = clipped(resample_len(&stretched, clip.samples.len()));
    with_samples(clip, samples)
}

/// Stretches duration by `1/rate` at unchanged pitch.
pub fn stretch(clip: &AudioClip, rate: f64) -> AudioClip {
    let samples = clipped(time_stretch(&clip.samples, rate));
    with_samples(clip, samples)
}

/// Applies one transform with a freshly drawn parameter.
pub fn augment<R: Rng>(
    clip: &AudioClip,
    transform: Transform,
    config: &AugmentationConfig,
    rng: &mut R,
) -> Result<AugmentOutcome, AudioError> {
    let outcome = match transform {
        Transform::Noise => {
            let (lo, hi) = config.noise_amplitude_range;
            let sigma = rng.random_range(lo..=hi);
            AugmentOutcome {
                clip: add_noise(clip, sigma, rng),
                parameter: sigma,
                warning: None,
            }
        }
        Transform::Gain => {
            let (lo, hi) = config.gain_db_range;
            let db = rng.random_range(lo..=hi);
            AugmentOutcome {
                clip: apply_gain(clip, db),
                parameter: db,
                warning: None,
            }
        }
        Transform::Loudness => {
            let measured = measure_loudness(&clip.samples, clip.sample_rate)?;
            if measured == SILENCE_LUFS {
                AugmentOutcome {
                    clip: clip.clone(),
                    parameter: 0.0,
                    warning: Some(format!(
                        "track {}: silent under the loudness gate, copied unchanged",
                        clip.track_id
                    )),
                }
            } else {
                let db = config.loudness_target - measured;
                AugmentOutcome {
                    clip: apply_gain(clip, db),
                    parameter: db,
                    warning: None,
                }
            }
        }
        Transform::Pitch => {
            let (lo, hi) = config.pitch_semitone_range;
            let semitones = rng.random_range(lo..=hi);
            AugmentOutcome {
                clip: pitch_shift(clip, semitones),
                parameter: semitones,
                warning: None,
            }
        }
        Transform::Stretch => {
            let (lo, hi) = config.stretch_rate_range;
            let rate = rng.random_range(lo..=hi);
            AugmentOutcome {
                clip: stretch(clip, rate),
                parameter: rate,
                warning: None,
            }
        }
    };
    Ok(outcome)
}

/// RNG for one (clip, transform) pair, independent of processing order.
pub fn transform_rng(seed: u64, track_id: &str, transform: Transform) -> rand_chacha::ChaCha8Rng {
    crate::seeds::derive_rng(seed, &["augment", track_id, transform.tag()])
}

/// One member of an augmented corpus, tagged with its provenance.
#[derive(Debug, Clone)]
pub struct AugmentedClip {
    /// Track id is `"{origin}.{transform tag}"`.
    pub clip: AudioClip,
    pub origin: String,
    pub transform: Transform,
    pub parameter: f64,
    pub warning: Option<String>,
}

/// Produces the five augmented variants of one clip, each from its own
/// `(seed, track, transform)` RNG so results are independent of
/// processing order. Pitch and stretch outputs, whose lengths drift, are
/// re-fitted to the canonical clip length by truncation or zero-padding
/// so every variant segments like an original.
pub fn augment_clip(
    clip: &AudioClip,
    config: &AugmentationConfig,
) -> Result<Vec<AugmentedClip>, AudioError> {
    let mut out = Vec::with_capacity(Transform::ALL.len());
    for transform in Transform::ALL {
        let mut rng = transform_rng(config.seed, &clip.track_id, transform);
        let mut outcome = augment(clip, transform, config, &mut rng)?;
        if matches!(transform, Transform::Pitch | Transform::Stretch) {
            outcome.clip.samples.resize(super::CLIP_LEN, 0.0);
        }
        outcome.clip.track_id = format!("{}.{}", clip.track_id, transform.tag());
        out.push(AugmentedClip {
            clip: outcome.clip,
            origin: clip.track_id.clone(),
            transform,
            parameter: outcome.parameter,
            warning: outcome.warning,
        });
    }
    Ok(out)
}
