//! WAV decoding and encoding.
//!
//! Reads RIFF/WAV with integer PCM at 8, 16, 24, or 32 bits or 32-bit
//! float, one or two channels, any sample rate. Stereo is averaged to
//! mono and integer formats are scaled to [-1, 1] by their full scale.

use std::path::Path;

use super::AudioError;

fn wav_error(path: &Path, err: hound::Error) -> AudioError {
    let path = path.display().to_string();
    match err {
        hound::Error::IoError(source) => AudioError::Io { path, source },
        hound::Error::Unsupported => AudioError::UnsupportedFormat {
            path,
            detail: "codec not in WAV PCM/float repertoire".to_string(),
        },
        other => AudioError::MalformedWav {
            path,
            detail: other.to_string(),
        },
    }
}

/// Decodes a WAV file to mono samples plus the file's sample rate.
pub fn read_wav_mono(path: &Path) -> Result<(Vec<f32>, u32), AudioError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let display = path.display().to_string();

    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedFormat {
            path: display,
            detail: format!("{} channels, only mono and stereo are handled", spec.channels),
        });
    }

    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(AudioError::UnsupportedFormat {
                    path: display,
                    detail: format!("{}-bit float", spec.bits_per_sample),
                });
            }
            reader
                .samples::<f32>()
                .collect::<Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if !matches!(bits, 8 | 16 | 24 | 32) {
                return Err(AudioError::UnsupportedFormat {
                    path: display,
                    detail: format!("{bits}-bit integer PCM"),
                });
            }
            let full_scale = (1i64 << (bits - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / full_scale))
                .collect::<Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
    };

    if interleaved.is_empty() {
        return Err(AudioError::EmptyAudio { path: display });
    }

    let mono = if spec.channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|lr| (lr[0] + lr[1]) / 2.0)
            .collect()
    };
    Ok((mono, spec.sample_rate))
}

/// Writes mono samples as 16-bit PCM. Samples are clamped to [-1, 1].
pub fn write_wav_16bit(path: &Path, samples: &[f32], sample_rate: u32) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in samples {
        // Symmetric with the reader's full-scale 32,768; +1.0 saturates to
        // the largest representable positive code.
        let v = (s.clamp(-1.0, 1.0) * 32_768.0).round().min(32_767.0) as i16;
        writer.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}
