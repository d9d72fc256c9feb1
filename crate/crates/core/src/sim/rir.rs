//! Shoebox image-source room impulse responses.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Vec3};

/// Taps of the windowed-sinc kernel that places each image at its exact
/// fractional delay.
pub const PLACEMENT_TAPS: usize = 8;

/// Upper bound on the automatically chosen reflection order per axis.
pub const MAX_AUTO_ORDER: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: f64,
    /// `distance · f / s` of the direct path, unrounded.
    pub direct_path_delay: f64,
}

impl RoomImpulseResponse {
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }
}

/// Uniform wall reflection coefficient `β = sqrt(1 − α)` with Sabine's
/// `α = 0.161·V / (S·T60)`.
pub fn t60_to_reflection_coeff(room: &Vec3, t60: f64) -> Result<f64> {
    if !(t60 > 0.0 && t60.is_finite()) {
        return Err(Error::InvalidScene("T60 must be positive".into()));
    }
    if room.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidScene("room dimensions must be positive".into()));
    }
    let [x, y, z] = *room;
    let volume = x * y * z;
    let surface = 2.0 * (x * y + x * z + y * z);
    let alpha = 0.161 * volume / (surface * t60);
    if alpha >= 1.0 {
        return Err(Error::InvalidScene(format!(
            "T60 of {t60} s is too short for a {x}×{y}×{z} m room"
        )));
    }
    Ok((1.0 - alpha).sqrt())
}

/// Smallest order whose images are 60 dB below the direct path by wall
/// losses alone, capped at [`MAX_AUTO_ORDER`].
pub fn default_max_order(reflection_coeff: f64) -> usize {
    if reflection_coeff <= 0.0 {
        return 0;
    }
    if reflection_coeff >= 1.0 {
        return MAX_AUTO_ORDER;
    }
    let n = (1e-3f64.ln() / reflection_coeff.ln()).ceil();
    (n.max(0.0) as usize).min(MAX_AUTO_ORDER)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Adds `amplitude` at fractional position `delay` using a unit-sum,
/// Hann-windowed sinc kernel. Integer delays produce a single tap.
fn place(taps: &mut [f64], delay: f64, amplitude: f64) {
    let half = (PLACEMENT_TAPS / 2) as f64;
    let base = delay.floor() as i64;
    let first = base - PLACEMENT_TAPS as i64 / 2 + 1;
    let mut kernel = [0.0; PLACEMENT_TAPS];
    for (j, k) in kernel.iter_mut().enumerate() {
        let x = (first + j as i64) as f64 - delay;
        *k = if x.abs() < half {
            sinc(x) * 0.5 * (1.0 + (PI * x / half).cos())
        } else {
            0.0
        };
    }
    let sum: f64 = kernel.iter().sum();
    for (j, k) in kernel.iter().enumerate() {
        let idx = first + j as i64;
        if idx >= 0 && (idx as usize) < taps.len() {
            taps[idx as usize] += amplitude * k / sum;
        }
    }
}

/// Image offsets along one axis: `(position, reflections)` for every image
/// with at most `max_order` reflections on that axis.
fn axis_images(len: f64, src: f64, max_order: usize) -> Vec<(f64, usize)> {
    let n = max_order as i64;
    let mut out = Vec::new();
    for m in -n..=n {
        for q in 0..2i64 {
            let refl = ((m - q).abs() + m.abs()) as usize;
            if refl <= max_order {
                let pos = (1 - 2 * q) as f64 * src + 2.0 * m as f64 * len;
                out.push((pos, refl));
            }
        }
    }
    out
}

/// Image-method impulse response from `src` to `mic`.
///
/// Each image contributes `β^reflections / (4π·d)` at delay `d·f/s`. Orders
/// are limited per axis.
pub fn image_method_rir(
    room: &Vec3,
    src: &Vec3,
    mic: &Vec3,
    reflection_coeff: f64,
    max_order: usize,
    sample_rate: f64,
    speed: f64,
) -> Result<RoomImpulseResponse> {
    if !(0.0..1.0).contains(&reflection_coeff) {
        return Err(Error::InvalidScene("reflection coefficient must lie in [0, 1)".into()));
    }
    if !(sample_rate > 0.0 && speed > 0.0) {
        return Err(Error::InvalidScene("sample rate and speed must be positive".into()));
    }
    for axis in 0..3 {
        let inside = |p: &Vec3| (0.0..=room[axis]).contains(&p[axis]);
        if !(room[axis] > 0.0) || !inside(src) || !inside(mic) {
            return Err(Error::InvalidScene("source and microphone must lie inside the room".into()));
        }
    }
    let direct = distance(src, mic);
    if direct < 1e-3 {
        return Err(Error::InvalidScene("source coincides with microphone".into()));
    }
    let order = if reflection_coeff == 0.0 { 0 } else { max_order };
    let scale = sample_rate / speed;
    let axes: Vec<Vec<(f64, usize)>> = (0..3).map(|a| axis_images(room[a], src[a], order)).collect();

    let far = (0..3)
        .map(|a| {
            axes[a]
                .iter()
                .map(|(p, _)| (p - mic[a]).abs())
                .fold(0.0, f64::max)
                .powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let len = (far * scale).ceil() as usize + PLACEMENT_TAPS + 1;
    let mut taps = vec![0.0; len];
    let powers: Vec<f64> = (0..=3 * order).map(|k| reflection_coeff.powi(k as i32)).collect();
    for &(x, rx) in &axes[0] {
        let dx = (x - mic[0]).powi(2);
        for &(y, ry) in &axes[1] {
            let dxy = dx + (y - mic[1]).powi(2);
            for &(z, rz) in &axes[2] {
                let d = (dxy + (z - mic[2]).powi(2)).sqrt();
                place(&mut taps, d * scale, powers[rx + ry + rz] / (4.0 * PI * d));
            }
        }
    }
    while taps.len() > 1 && taps.last() == Some(&0.0) {
        taps.pop();
    }
    Ok(RoomImpulseResponse {
        taps,
        sample_rate,
        direct_path_delay: direct * scale,
    })
}

/// Schroeder backward-integrated energy decay curve in dB, normalized to
/// 0 dB at the first sample.
pub fn schroeder_decay_db(taps: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = taps
        .iter()
        .rev()
        .map(|t| {
            acc += t * t;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter()
        .map(|e| if total > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY })
        .collect()
}

/// Seconds from the direct-path arrival until the decay curve first falls
/// to `level_db` (negative).
pub fn decay_time(rir: &RoomImpulseResponse, level_db: f64) -> Option<f64> {
    let start = rir.direct_path_delay.floor() as usize;
    let edc = schroeder_decay_db(&rir.taps[start.min(rir.taps.len())..]);
    edc.iter()
        .position(|&e| e <= level_db)
        .map(|i| i as f64 / rir.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROOM: Vec3 = [5.0, 6.0, 3.0];

    #[test]
    fn sabine_hand_value() {
        let beta = t60_to_reflection_coeff(&ROOM, 0.3).unwrap();
        let alpha: f64 = 0.161 * 90.0 / (126.0 * 0.3);
        assert!((alpha - 0.3833).abs() < 1e-3);
        assert!((beta - (1.0f64 - alpha).sqrt()).abs() < 1e-12);
        assert!((beta - 0.785).abs() < 1e-3);
    }

    #[test]
    fn sabine_limits() {
        let a = |t| 1.0 - t60_to_reflection_coeff(&ROOM, t).unwrap().powi(2);
        assert!((a(0.3) / a(0.6) - 2.0).abs() < 1e-12);
        let mut prev = 0.0;
        for t in [0.2, 0.5, 1.0, 5.0, 50.0] {
            let b = t60_to_reflection_coeff(&ROOM, t).unwrap();
            assert!(b > prev && b < 1.0);
            prev = b;
        }
        assert!(t60_to_reflection_coeff(&[10.0, 10.0, 4.0], 0.1).is_err());
        assert!(t60_to_reflection_coeff(&ROOM, 0.0).is_err());
    }

    #[test]
    fn free_field_impulse() {
        // 3.43 m at 16 kHz / 343 m/s is exactly 160 samples
        let src = [1.0, 1.0, 1.5];
        let mic = [4.43, 1.0, 1.5];
        let rir = image_method_rir(&ROOM, &src, &mic, 0.7, 0, 16000.0, 343.0).unwrap();
        assert!((rir.direct_path_delay - 160.0).abs() < 1e-9);
        let peak = rir.taps.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 1.0 / (4.0 * PI * 3.43)).abs() < 1e-9);
        assert_eq!(rir.taps[160], peak);
        let rest: f64 = rir.taps.iter().map(|t| t.abs()).sum::<f64>() - peak;
        assert!(rest < 1e-9 * peak);
    }

    #[test]
    fn zero_reflection_equals_order_zero() {
        let src = [1.2, 2.1, 1.1];
        let mic = [2.5, 3.0, 1.4];
        let a = image_method_rir(&ROOM, &src, &mic, 0.0, 6, 16000.0, 343.0).unwrap();
        let b = image_method_rir(&ROOM, &src, &mic, 0.0, 0, 16000.0, 343.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = [1.0, 1.0, 1.0];
        assert!(image_method_rir(&ROOM, &p, &p, 0.5, 2, 16000.0, 343.0).is_err());
        assert!(image_method_rir(&ROOM, &p, &[2.0, 1.0, 1.0], 1.0, 2, 16000.0, 343.0).is_err());
        assert!(image_method_rir(&ROOM, &p, &[7.0, 1.0, 1.0], 0.5, 2, 16000.0, 343.0).is_err());
    }

    #[test]
    fn default_order_is_capped() {
        assert_eq!(default_max_order(0.0), 0);
        assert_eq!(default_max_order(0.2), 5);
        assert_eq!(default_max_order(0.9), MAX_AUTO_ORDER);
    }
}
