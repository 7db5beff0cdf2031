//! Integrated loudness measurement (ITU-R BS.1770-4).
//!
//! K-weighting is a high-shelf ("head") stage followed by a high-pass
//! (RLB) stage. The standard tabulates coefficients for 48 kHz only; here
//! both biquads are redesigned for the working rate by bilinear transform
//! from the analog prototypes behind those tables, so the frequency
//! response matches the standard at any rate. Integrated loudness is the
//! gated mean square over 400 ms blocks with 75% overlap: an absolute
//! gate at -70 LUFS, then a relative gate 10 LU below the intermediate
//! level, then -0.691 + 10*log10(mean).

use super::AudioError;

/// Loudness reported for material that never crosses the absolute gate.
pub const SILENCE_LUFS: f64 = f64::NEG_INFINITY;

struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Shelving stage: +4 dB high shelf around 1,681.97 Hz.
    fn high_shelf(sample_rate: f64) -> Biquad {
        let f0 = 1_681.974450955533;
        let gain_db = 3.999843853973347;
        let q = 0.7071752369554196;
        let k = (std::f64::consts::PI * f0 / sample_rate).tan();
        let vh = 10f64.powf(gain_db / 20.0);
        let vb = vh.powf(0.4996667741545416);
        let a0 = 1.0 + k / q + k * k;
        Biquad {
            b0: (vh + vb * k / q + k * k) / a0,
            b1: 2.0 * (k * k - vh) / a0,
            b2: (vh - vb * k / q + k * k) / a0,
            a1: 2.0 * (k * k - 1.0) / a0,
            a2: (1.0 - k / q + k * k) / a0,
        }
    }

    /// RLB stage: high-pass around 38.14 Hz.
    fn high_pass(sample_rate: f64) -> Biquad {
        let f0 = 38.13547087602444;
        let q = 0.5003270373238773;
        let k = (std::f64::consts::PI * f0 / sample_rate).tan();
        let a0 = 1.0 + k / q + k * k;
        Biquad {
            b0: 1.0,
            b1: -2.0,
            b2: 1.0,
            a1: 2.0 * (k * k - 1.0) / a0,
            a2: (1.0 - k / q + k * k) / a0,
        }
    }

    fn run(&self, input: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        input
            .iter()
            .map(|&x| {
                let y = self.b0 * x + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
                x2 = x1;
                x1 = x;
                y2 = y1;
                y1 = y;
                y
            })
            .collect()
    }
}

fn block_to_lufs(mean_square: f64) -> f64 {
    if mean_square <= 0.0 {
        SILENCE_LUFS
    } else {
        -0.691 + 10.0 * mean_square.log10()
    }
}

/// Integrated loudness of a mono clip in LUFS, or [`SILENCE_LUFS`] when
/// nothing passes the absolute gate.
pub fn measure_loudness(samples: &[f32], sample_rate: u32) -> Result<f64, AudioError> {
    let rate = sample_rate as f64;
    let block = (0.4 * rate).round() as usize;
    let hop = block / 4;
    if samples.len() < block {
        return Err(AudioError::LoudnessWindow {
            length: samples.len(),
            minimum: block,
        });
    }

    let x: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
    let weighted = Biquad::high_pass(rate).run(&Biquad::high_shelf(rate).run(&x));

    let mut block_power = Vec::new();
    let mut start = 0;
    while start + block <= weighted.len() {
        let w = &weighted[start..start + block];
        let ms = w.iter().map(|v| v * v).sum::<f64>() / block as f64;
        block_power.push(ms);
        start += hop;
    }

    // Absolute gate at -70 LUFS.
    let above_abs: Vec<f64> = block_power
        .iter()
        .copied()
        .filter(|&p| block_to_lufs(p) > -70.0)
        .collect();
    if above_abs.is_empty() {
        return Ok(SILENCE_LUFS);
    }

    // Relative gate 10 LU below the level of the absolutely-gated mean.
    let interim = above_abs.iter().sum::<f64>() / above_abs.len() as f64;
    let threshold = block_to_lufs(interim) - 10.0;
    let gated: Vec<f64> = above_abs
        .into_iter()
        .filter(|&p| block_to_lufs(p) > threshold)
        .collect();
    if gated.is_empty() {
        return Ok(SILENCE_LUFS);
    }
    Ok(block_to_lufs(gated.iter().sum::<f64>() / gated.len() as f64))
}
