//! JSON configuration files: a flat schema mirroring the training and
//! augmentation settings. Command-line flags override file values.

use std::path::Path;

use serde::Deserialize;

use crate::commands::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub arch: Option<String>,
    pub seed: Option<u64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub augment: Option<bool>,
    pub noise_amplitude_range: Option<(f64, f64)>,
    pub gain_db_range: Option<(f64, f64)>,
    pub loudness_target: Option<f64>,
    pub pitch_semitone_range: Option<(f64, f64)>,
    pub stretch_rate_range: Option<(f64, f64)>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Usage(format!("invalid config {}: {e}", path.display()))
        })
    }

    /// Applies the file's augmentation fields over the defaults.
    pub fn augmentation(&self, seed: u64) -> genre1d::audio::AugmentationConfig {
        let mut cfg = genre1d::audio::AugmentationConfig::default();
        if let Some(r) = self.noise_amplitude_range {
            cfg.noise_amplitude_range = r;
        }
        if let Some(r) = self.gain_db_range {
            cfg.gain_db_range = r;
        }
        if let Some(t) = self.loudness_target {
            cfg.loudness_target = t;
        }
        if let Some(r) = self.pitch_semitone_range {
            cfg.pitch_semitone_range = r;
        }
        if let Some(r) = self.stretch_rate_range {
            cfg.stretch_rate_range = r;
        }
        cfg.seed = seed;
        cfg
    }
}
