//! Deterministic synthetic fixtures: two trivially separable genres for
//! smoke tests, demos, and learning-sanity checks.
//!
//! The `tonal` genre is a three-harmonic stack on a per-track fundamental;
//! the `textural` genre is bounded uniform noise. A network that can learn
//! anything at all separates them quickly, which makes the pair a useful
//! end-to-end fixture that needs no external data.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;

use crate::audio::{wav, AudioClip, AudioError, CLIP_LEN};
use crate::seeds::derive_rng;

/// Fixture genre names, in class-index order (alphabetical, matching
/// directory-derived indexing).
pub const FIXTURE_GENRES: [&str; 2] = ["textural", "tonal"];

fn tonal_samples<R: Rng>(rng: &mut R) -> Vec<f32> {
    let f0 = rng.random_range(180.0..400.0);
    let phases: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
    let amps = [0.45, 0.25, 0.15];
    let dt = 1.0 / crate::SAMPLE_RATE as f64;
    (0..CLIP_LEN)
        .map(|n| {
            let t = n as f64 * dt;
            let mut v = 0.0;
            for (h, (&a, &p)) in amps.iter().zip(&phases).enumerate() {
                v += a * (TAU * f0 * (h + 1) as f64 * t + p).sin();
            }
            v as f32
        })
        .collect()
}

fn textural_samples<R: Rng>(rng: &mut R) -> Vec<f32> {
    (0..CLIP_LEN)
        .map(|_| rng.random_range(-0.35..0.35))
        .collect()
}

/// One synthetic clip. Identical `(genre, index, seed)` triples produce
/// identical samples regardless of generation order.
pub fn fixture_clip(genre: usize, index: usize, seed: u64) -> AudioClip {
    let name = FIXTURE_GENRES[genre];
    let mut rng = derive_rng(seed, &["synth", name, &index.to_string()]);
    let samples = match name {
        "tonal" => tonal_samples(&mut rng),
        _ => textural_samples(&mut rng),
    };
    AudioClip {
        samples,
        sample_rate: crate::SAMPLE_RATE,
        track_id: format!("{name}.{index:05}"),
        genre_label: Some(genre),
    }
}

/// `per_genre` clips of each fixture genre.
pub fn fixture_corpus(per_genre: usize, seed: u64) -> Vec<AudioClip> {
    let mut clips = Vec::with_capacity(2 * per_genre);
    for genre in 0..FIXTURE_GENRES.len() {
        for index in 0..per_genre {
            clips.push(fixture_clip(genre, index, seed));
        }
    }
    clips
}

/// Writes the corpus as a genre-per-directory WAV tree
/// (`dir/tonal/tonal.00000.wav`, ...), the layout the `prepare` command
/// ingests.
pub fn write_fixture_tree(dir: &Path, per_genre: usize, seed: u64) -> Result<(), AudioError> {
    for genre in 0..FIXTURE_GENRES.len() {
        let sub = dir.join(FIXTURE_GENRES[genre]);
        std::fs::create_dir_all(&sub).map_err(|source| AudioError::Io {
            path: sub.display().to_string(),
            source,
        })?;
        for index in 0..per_genre {
            let clip = fixture_clip(genre, index, seed);
            let path = sub.join(format!("{}.wav", clip.track_id));
            wav::write_wav_16bit(&path, &clip.samples, clip.sample_rate)?;
        }
    }
    Ok(())
}
