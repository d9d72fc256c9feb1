//! Synthetic source signals standing in for speech and noise recordings.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Voiced, syllable-like harmonic signal: bursts of 120–320 ms with a
/// gliding fundamental in 100–250 Hz, harmonics up to 4 kHz with `1/k`
/// roll-off, separated by short pauses. Peak amplitude is about 0.5.
pub fn harmonic_speech(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut t = 0usize;
    while t < len {
        let dur = (rng.random_range(0.12..0.32) * sample_rate) as usize;
        let f_start: f64 = rng.random_range(100.0..250.0);
        let f_end = (f_start * rng.random_range(0.8..1.25)).clamp(80.0, 300.0);
        let harmonics = ((4000.0 / f_start.max(f_end)) as usize).max(1);
        let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let gains: Vec<f64> = (1..=harmonics)
            .map(|k| rng.random_range(0.5..1.0) / k as f64)
            .collect();
        let mut phase = 0.0;
        for i in 0..dur.min(len - t) {
            let frac = i as f64 / dur as f64;
            let f0 = f_start + (f_end - f_start) * frac;
            phase += 2.0 * PI * f0 / sample_rate;
            let env = (PI * frac).sin().powi(2);
            let v: f64 = gains
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(k, (g, p))| g * ((k + 1) as f64 * phase + p).sin())
                .sum();
            out[t + i] = 0.25 * env * v;
        }
        t += dur + (rng.random_range(0.02..0.12) * sample_rate) as usize;
    }
    out
}

/// Gaussian noise restricted to `[low_hz, high_hz]` by zeroing FFT bins,
/// scaled to unit RMS.
pub fn bandlimited_noise(len: usize, sample_rate: f64, low_hz: f64, high_hz: f64, seed: u64) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let bin = k.min(len - k) as f64 * sample_rate / len as f64;
        if bin < low_hz || bin > high_hz {
            *b = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        out.iter().map(|x| x / rms).collect()
    } else {
        out
    }
}

/// Linear convolution of `x` with `h`, truncated to `x.len()` samples.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let size = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let pad = |v: &[f64]| {
        let mut b: Vec<Complex<f64>> = v.iter().map(|&r| Complex::new(r, 0.0)).collect();
        b.resize(size, Complex::new(0.0, 0.0));
        b
    };
    let (mut a, mut b) = (pad(x), pad(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    planner.plan_fft_inverse(size).process(&mut a);
    a.iter().take(x.len()).map(|c| c.re / size as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_direct() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let h = [0.5, -0.25, 0.0, 0.125];
        let y = fft_convolve(&x, &h);
        for n in 0..x.len() {
            let d: f64 = (0..h.len()).filter(|&k| k <= n).map(|k| h[k] * x[n - k]).sum();
            assert!((y[n] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_unit_rms_and_deterministic() {
        let a = bandlimited_noise(4000, 16000.0, 100.0, 7000.0, 3);
        let rms = (a.iter().map(|x| x * x).sum::<f64>() / 4000.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
        assert_eq!(a, bandlimited_noise(4000, 16000.0, 100.0, 7000.0, 3));
    }

    #[test]
    fn speech_is_nonzero_and_bounded() {
        let s = harmonic_speech(16000, 16000.0, 1);
        assert!(s.iter().any(|x| x.abs() > 0.05));
        assert!(s.iter().all(|x| x.abs() < 1.0));
    }
}
