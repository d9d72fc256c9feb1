//! Random shoebox scenes and their rendering into microphone signals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rir::{default_max_order, image_method_rir, t60_to_reflection_coeff};
use super::signals::{bandlimited_noise, fft_convolve, harmonic_speech};
use crate::audio::MultichannelBuffer;
use crate::error::{Error, Result};
use crate::geometry::{distance, ScenePose, Vec3, SPEED_OF_SOUND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub room: Vec3,
    pub t60: f64,
    pub source: Vec3,
    pub noise_sources: Vec<Vec3>,
    pub mics: Vec<Vec3>,
    pub snr_db: f64,
    pub sample_rate: u32,
    /// Reflection order per axis; derived from the wall coefficient when absent.
    pub max_order: Option<usize>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.room.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidScene("room dimensions must be positive".into()));
        }
        if !(self.t60 > 0.0 && self.t60 < 2.0) {
            return Err(Error::InvalidScene("T60 must lie in (0, 2) s".into()));
        }
        if self.mics.is_empty() {
            return Err(Error::InvalidScene("no microphones".into()));
        }
        if self.sample_rate == 0 || !self.snr_db.is_finite() {
            return Err(Error::InvalidScene("invalid sample rate or SNR".into()));
        }
        let inside = |p: &Vec3| (0..3).all(|a| p[a] >= 0.0 && p[a] <= self.room[a]);
        if !inside(&self.source)
            || !self.noise_sources.iter().all(inside)
            || !self.mics.iter().all(inside)
        {
            return Err(Error::InvalidScene("position outside the room".into()));
        }
        Ok(())
    }

    pub fn reflection_coeff(&self) -> Result<f64> {
        t60_to_reflection_coeff(&self.room, self.t60)
    }

    pub fn pose(&self) -> ScenePose {
        ScenePose {
            source: self.source,
            mics: self.mics.clone(),
            sample_rate: self.sample_rate as f64,
            speed: SPEED_OF_SOUND,
        }
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }
}

/// Ranges for [`SceneSampler::sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSampler {
    /// Fixed microphone count; uniform in 2..=6 when absent.
    pub num_mics: Option<usize>,
    pub mic_radius: f64,
    pub wall_margin: f64,
    pub length_range: (f64, f64),
    pub height_range: (f64, f64),
    pub t60_range: (f64, f64),
    pub snr_range: (f64, f64),
    pub max_noise_sources: usize,
    pub sample_rate: u32,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            num_mics: None,
            mic_radius: 0.15,
            wall_margin: 0.5,
            length_range: (5.0, 10.0),
            height_range: (2.0, 4.0),
            t60_range: (0.1, 0.5),
            snr_range: (-5.0, 15.0),
            max_noise_sources: 4,
            sample_rate: 16000,
        }
    }
}

const MAX_TRIES: usize = 1000;
const MIN_SOURCE_TO_MIC: f64 = 0.3;
const MIN_MIC_SPACING: f64 = 0.01;

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 >= range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

impl SceneSampler {
    /// Deterministic in `seed`. Constraint violations are resampled; after
    /// a bounded number of attempts a conforming fallback is used.
    pub fn sample(&self, seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (room, t60) = (0..MAX_TRIES)
            .map(|_| {
                let room = [
                    uniform(&mut rng, self.length_range),
                    uniform(&mut rng, self.length_range),
                    uniform(&mut rng, self.height_range),
                ];
                (room, uniform(&mut rng, self.t60_range))
            })
            .find(|(room, t60)| t60_to_reflection_coeff(room, *t60).is_ok())
            .unwrap_or(([self.length_range.0, self.length_range.0, self.height_range.1], self.t60_range.1));
        let center = room.map(|d| d / 2.0);

        let c = self.num_mics.unwrap_or_else(|| rng.random_range(2..=6));
        let mut mics: Vec<Vec3> = Vec::with_capacity(c);
        while mics.len() < c {
            let mut placed = None;
            for _ in 0..MAX_TRIES {
                let off: Vec3 = std::array::from_fn(|_| rng.random_range(-self.mic_radius..=self.mic_radius));
                if off.iter().map(|v| v * v).sum::<f64>().sqrt() > self.mic_radius {
                    continue;
                }
                let p = [center[0] + off[0], center[1] + off[1], center[2] + off[2]];
                if mics.iter().all(|m| distance(m, &p) >= MIN_MIC_SPACING) {
                    placed = Some(p);
                    break;
                }
            }
            let k = mics.len() as f64;
            mics.push(placed.unwrap_or([center[0] + self.mic_radius * (0.1 + 0.1 * k).min(1.0), center[1], center[2]]));
        }

        let margin = self.wall_margin;
        let source_point = |rng: &mut ChaCha8Rng| {
            for _ in 0..MAX_TRIES {
                let p: Vec3 = std::array::from_fn(|a| uniform(rng, (margin, room[a] - margin)));
                if mics.iter().all(|m| distance(m, &p) >= MIN_SOURCE_TO_MIC) {
                    return p;
                }
            }
            [margin, margin, margin]
        };
        let source = source_point(&mut rng);
        let n_noise = rng.random_range(1..=self.max_noise_sources.max(1));
        let noise_sources = (0..n_noise).map(|_| source_point(&mut rng)).collect();
        let snr_db = uniform(&mut rng, self.snr_range);

        SceneSpec {
            room,
            t60,
            source,
            noise_sources,
            mics,
            snr_db,
            sample_rate: self.sample_rate,
            max_order: None,
            seed,
        }
    }
}

/// [`SceneSampler::default`] applied to `seed`.
pub fn sample_random_scene(seed: u64) -> SceneSpec {
    SceneSampler::default().sample(seed)
}

/// Microphone signals of a rendered scene; `mix = clean + noise` sample by
/// sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub mix: MultichannelBuffer,
    pub clean: MultichannelBuffer,
    pub noise: MultichannelBuffer,
}

fn convolve_source(spec: &SceneSpec, beta: f64, order: usize, src: &Vec3, signal: &[f64]) -> Result<Vec<Vec<f64>>> {
    spec.mics
        .iter()
        .map(|m| {
            let rir = image_method_rir(&spec.room, src, m, beta, order, spec.sample_rate as f64, SPEED_OF_SOUND)?;
            Ok(fft_convolve(signal, &rir.taps))
        })
        .collect()
}

/// Convolves the speech and noise signals with their impulse responses and
/// scales the noise to `spec.snr_db` over all channels.
pub fn render_scene(spec: &SceneSpec, speech: &[f64], noises: &[Vec<f64>]) -> Result<RenderedScene> {
    spec.validate()?;
    if noises.len() != spec.noise_sources.len() {
        return Err(Error::DimensionMismatch {
            context: "noise signals",
            expected: spec.noise_sources.len(),
            actual: noises.len(),
        });
    }
    if noises.iter().any(|n| n.len() != speech.len()) {
        return Err(Error::invalid("noise signals must match the speech length"));
    }
    if speech.iter().all(|s| *s == 0.0) {
        return Err(Error::InvalidScene("speech signal is silent".into()));
    }
    let beta = spec.reflection_coeff()?;
    let order = spec.max_order.unwrap_or_else(|| default_max_order(beta));
    let clean = convolve_source(spec, beta, order, &spec.source, speech)?;

    let c = spec.num_mics();
    let mut noise = vec![vec![0.0; speech.len()]; c];
    for (pos, sig) in spec.noise_sources.iter().zip(noises) {
        for (acc, ch) in noise.iter_mut().zip(convolve_source(spec, beta, order, pos, sig)?) {
            acc.iter_mut().zip(ch).for_each(|(a, b)| *a += b);
        }
    }
    let energy = |x: &[Vec<f64>]| x.iter().flatten().map(|v| v * v).sum::<f64>();
    let (e_clean, e_noise) = (energy(&clean), energy(&noise));
    if e_clean == 0.0 {
        return Err(Error::InvalidScene("speech does not reach the microphones".into()));
    }
    if e_noise > 0.0 {
        let gain = (e_clean / (e_noise * 10f64.powf(spec.snr_db / 10.0))).sqrt();
        noise.iter_mut().flatten().for_each(|v| *v *= gain);
    } else if !spec.noise_sources.is_empty() {
        return Err(Error::InvalidScene("noise signals are silent".into()));
    }
    let mix = clean
        .iter()
        .zip(&noise)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let fs = spec.sample_rate;
    Ok(RenderedScene {
        mix: MultichannelBuffer::new(mix, fs)?,
        clean: MultichannelBuffer::new(clean, fs)?,
        noise: MultichannelBuffer::new(noise, fs)?,
    })
}

/// Renders `spec` with synthetic harmonic speech and band-limited noise
/// derived from `spec.seed`.
pub fn synthesize_scene(spec: &SceneSpec, len: usize) -> Result<RenderedScene> {
    let fs = spec.sample_rate as f64;
    let speech = harmonic_speech(len, fs, spec.seed.wrapping_mul(2).wrapping_add(1));
    let noises: Vec<Vec<f64>> = (0..spec.noise_sources.len())
        .map(|k| {
            let seed = spec.seed.wrapping_mul(31).wrapping_add(k as u64 + 7);
            bandlimited_noise(len, fs, 50.0, 0.45 * fs, seed)
        })
        .collect();
    render_scene(spec, &speech, &noises)
}
