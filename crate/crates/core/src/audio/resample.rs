//! Windowed-sinc sample-rate conversion.
//!
//! Each output sample is a 64-tap Kaiser-windowed (beta 8.6) sinc
//! interpolation of the input at the exact fractional position. When
//! downsampling, the sinc cutoff drops to the output Nyquist so the kernel
//! doubles as the anti-alias filter. Tap weights are renormalized per
//! output sample, which pins DC gain to exactly 1 and keeps the edges from
//! fading.

const HALF_TAPS: usize = 32;
const KAISER_BETA: f64 = 8.6;
/// Resolution of the tabulated Kaiser window (points per unit of x).
const TABLE_STEP: usize = 256;

/// Zeroth-order modified Bessel function of the first kind, by power
/// series; converges quickly for the argument range the window needs.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-14 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Kaiser window tabulated over x in [0, HALF_TAPS], for linear
/// interpolation at arbitrary tap offsets.
fn kaiser_table() -> Vec<f64> {
    let n = HALF_TAPS * TABLE_STEP + 1;
    let denom = bessel_i0(KAISER_BETA);
    (0..n)
        .map(|i| {
            let x = i as f64 / TABLE_STEP as f64 / HALF_TAPS as f64;
            bessel_i0(KAISER_BETA * (1.0 - x * x).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn window_at(table: &[f64], x: f64) -> f64 {
    let pos = x.abs() * TABLE_STEP as f64;
    let idx = pos as usize;
    if idx + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - idx as f64;
    table[idx] * (1.0 - frac) + table[idx + 1] * frac
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn resample_core(input: &[f32], step: f64, out_len: usize, cutoff: f64) -> Vec<f32> {
    let table = kaiser_table();
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let t = i as f64 * step;
        let center = t.floor() as isize;
        let mut acc = 0.0f64;
        let mut wsum = 0.0f64;
        for j in (center - HALF_TAPS as isize + 1)..=(center + HALF_TAPS as isize) {
            let x = t - j as f64;
            let w = cutoff * sinc(cutoff * x) * window_at(&table, x / HALF_TAPS as f64);
            if j >= 0 && (j as usize) < input.len() {
                acc += w * input[j as usize] as f64;
                wsum += w;
            }
        }
        out.push(if wsum.abs() > 1e-12 { (acc / wsum) as f32 } else { 0.0 });
    }
    out
}

/// Converts between sample rates. Equal rates return the input unchanged.
pub fn resample(input: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    assert!(from_rate > 0 && to_rate > 0, "sample rates must be positive");
    if from_rate == to_rate {
        return input.to_vec();
    }
    let out_len =
        ((input.len() as u64 * to_rate as u64 + from_rate as u64 / 2) / from_rate as u64) as usize;
    let step = from_rate as f64 / to_rate as f64;
    let cutoff = (to_rate as f64 / from_rate as f64).min(1.0);
    resample_core(input, step, out_len, cutoff)
}

/// Resamples to an exact output length (the pitch-shift path), scaling
/// frequencies by `input.len() / out_len`.
pub fn resample_len(input: &[f32], out_len: usize) -> Vec<f32> {
    assert!(out_len > 0, "output length must be positive");
    if out_len == input.len() {
        return input.to_vec();
    }
    let step = input.len() as f64 / out_len as f64;
    let cutoff = (out_len as f64 / input.len() as f64).min(1.0);
    resample_core(input, step, out_len, cutoff)
}

/// Dominant FFT frequency of a Hann-windowed excerpt, in Hz. Test oracle
/// shared by the resampling and augmentation checks.
#[cfg(test)]
pub(crate) fn fft_peak_hz(samples: &[f32], rate: f64) -> f64 {
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    let n = 16_384.min(samples.len());
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = samples[..n]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            Complex::new(v as f64 * hann, 0.0)
        })
        .collect();
    fft.process(&mut buf);
    let peak = buf[..n / 2]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    peak as f64 * rate / n as f64
}
