//! Gammatone auditory filterbank initialization.
//!
//! A fourth-order gammatone impulse response is
//! `g(t) = t^3 * exp(-2*pi*b(f)*t) * cos(2*pi*f*t)` with bandwidth
//! `b(f) = 1.019 * ERB(f)` and `ERB(f) = 24.7 * (4.37 * f / 1000 + 1)`.
//! Center frequencies are spaced uniformly on the ERB-rate scale. Each
//! filter is normalized to unit maximum absolute amplitude.

use crate::tensor::{Tensor, TensorError};
use crate::Scalar;

/// Ratio of gammatone 3 dB-equivalent bandwidth to the ERB.
pub const BANDWIDTH_SCALE: f64 = 1.019;

/// Equivalent rectangular bandwidth at frequency `f` in Hz.
pub fn erb(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

/// ERB-rate (number of ERBs below `f`).
pub fn erb_rate(f: f64) -> f64 {
    21.4 * (4.37 * f / 1000.0 + 1.0).log10()
}

/// Inverse of [`erb_rate`].
pub fn erb_rate_inverse(rate: f64) -> f64 {
    (10f64.powf(rate / 21.4) - 1.0) * 1000.0 / 4.37
}

/// Center frequencies spaced uniformly on the ERB-rate scale from 50 Hz to
/// 100 Hz below Nyquist, endpoints included.
pub fn center_frequencies(num_filters: usize, sample_rate: u32) -> Vec<f64> {
    assert!(num_filters > 0, "filterbank needs at least one filter");
    let lo = erb_rate(50.0);
    let hi = erb_rate(sample_rate as f64 / 2.0 - 100.0);
    if num_filters == 1 {
        return vec![erb_rate_inverse((lo + hi) / 2.0)];
    }
    (0..num_filters)
        .map(|i| {
            let r = lo + (hi - lo) * i as f64 / (num_filters - 1) as f64;
            erb_rate_inverse(r)
        })
        .collect()
}

/// Builds a `num_filters x 1 x kernel_len` convolution weight tensor whose
/// rows are unit-peak gammatone impulse responses.
///
/// The construction is deterministic; the weights stay trainable and only
/// their starting point comes from auditory modeling.
pub fn gammatone_filterbank<F: Scalar>(
    num_filters: usize,
    kernel_len: usize,
    sample_rate: u32,
) -> Result<Tensor<F>, TensorError> {
    let centers = center_frequencies(num_filters, sample_rate);
    let mut data = Vec::with_capacity(num_filters * kernel_len);
    for &f in &centers {
        let b = BANDWIDTH_SCALE * erb(f);
        let mut row = Vec::with_capacity(kernel_len);
        for n in 0..kernel_len {
            let t = n as f64 / sample_rate as f64;
            let v = t.powi(3)
                * (-2.0 * std::f64::consts::PI * b * t).exp()
                * (2.0 * std::f64::consts::PI * f * t).cos();
            row.push(v);
        }
        let peak = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        debug_assert!(peak > 0.0, "degenerate gammatone filter at {f} Hz");
        for v in &mut row {
            data.push(F::from_config(*v / peak));
        }
    }
    Tensor::new(vec![num_filters, 1, kernel_len], data)
}
