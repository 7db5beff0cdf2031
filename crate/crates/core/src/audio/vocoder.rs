//! Phase-vocoder time stretching.
//!
//! STFT with a 2,048-sample Hann window and analysis hop 512. Synthesis
//! frames are laid out at hop/rate spacing; per-bin instantaneous
//! frequency is estimated from the analysis phase increment and integrated
//! over the actual synthesis spacing, the standard propagation scheme with
//! no phase locking. Overlap-add output is normalized by the accumulated
//! squared window, so any hop ratio reconstructs at unit gain.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const FRAME: usize = 2_048;
const HOP: usize = 512;

fn hann() -> Vec<f64> {
    (0..FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / FRAME as f64).cos())
        .collect()
}

/// Wraps a phase to (-pi, pi].
fn princarg(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    x - two_pi * (x / two_pi).round()
}

/// Stretches duration by `1/rate`: rate 0.5 doubles the length, rate 2
/// halves it. Pitch is preserved. Output length is `round(len/rate)`.
pub fn time_stretch(input: &[f32], rate: f64) -> Vec<f32> {
    assert!(rate.is_finite() && rate > 0.0, "stretch rate must be positive");
    let target_len = (input.len() as f64 / rate).round() as usize;
    if input.is_empty() || target_len == 0 {
        return Vec::new();
    }

    // Padding flushes the tail through complete analysis frames.
    let mut padded: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    padded.resize(input.len().max(FRAME) + FRAME, 0.0);
    let frames = (padded.len() - FRAME) / HOP + 1;

    let window = hann();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(FRAME);
    let inverse = planner.plan_fft_inverse(FRAME);

    let out_len = ((frames - 1) as f64 * HOP as f64 / rate).round() as usize + FRAME;
    let mut acc = vec![0.0f64; out_len];
    let mut wsum = vec![0.0f64; out_len];

    let mut prev_phase = vec![0.0f64; FRAME];
    let mut synth_phase = vec![0.0f64; FRAME];
    let mut prev_place = 0usize;

    for m in 0..frames {
        let start = m * HOP;
        let mut buf: Vec<Complex<f64>> = (0..FRAME)
            .map(|i| Complex::new(padded[start + i] * window[i], 0.0))
            .collect();
        forward.process(&mut buf);

        let place = (m as f64 * HOP as f64 / rate).round() as usize;
        if m == 0 {
            for (k, c) in buf.iter().enumerate() {
                synth_phase[k] = c.arg();
                prev_phase[k] = c.arg();
            }
        } else {
            let spacing = (place - prev_place) as f64;
            for (k, c) in buf.iter().enumerate() {
                let phase = c.arg();
                let omega = 2.0 * std::f64::consts::PI * k as f64 / FRAME as f64;
                let deviation = princarg(phase - prev_phase[k] - omega * HOP as f64);
                let instantaneous = omega + deviation / HOP as f64;
                synth_phase[k] = princarg(synth_phase[k] + spacing * instantaneous);
                prev_phase[k] = phase;
            }
        }

        let mut synth: Vec<Complex<f64>> = buf
            .iter()
            .zip(&synth_phase)
            .map(|(c, &p)| Complex::from_polar(c.norm(), p))
            .collect();
        inverse.process(&mut synth);

        for i in 0..FRAME {
            let w = window[i];
            acc[place + i] += synth[i].re / FRAME as f64 * w;
            wsum[place + i] += w * w;
        }
        prev_place = place;
    }

    // The floor only guards true zero coverage (sample 0, where the Hann
    // window itself is zero); even the tiniest real weights divide out
    // exactly in f64.
    (0..target_len)
        .map(|i| {
            if i < acc.len() && wsum[i] > 1e-12 {
                (acc[i] / wsum[i]) as f32
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn chord(n: usize, rate: f64, amp: f64) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let tone = (2.0 * std::f64::consts::PI * 220.0 * t).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * 554.37 * t).sin()
                + 0.3 * (2.0 * std::f64::consts::PI * 1_318.5 * t).sin();
            (amp * tone / 1.8) as f32
        })
        .collect()
}
