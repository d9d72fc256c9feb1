//! Array geometry: reference selection, time differences of arrival, and
//! simulated direction-of-arrival errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Speed of sound used throughout the simulator, in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Source-to-microphone distances below this are treated as coincident.
const MIN_DISTANCE: f64 = 1e-3;

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Source and microphone positions plus the constants needed to express
/// propagation delays in samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePose {
    pub source: Vec3,
    pub mics: Vec<Vec3>,
    pub sample_rate: f64,
    pub speed: f64,
}

impl ScenePose {
    pub fn new(source: Vec3, mics: Vec<Vec3>, sample_rate: f64, speed: f64) -> Result<Self> {
        let pose = Self {
            source,
            mics,
            sample_rate,
            speed,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mics.is_empty() {
            return Err(Error::InvalidScene("no microphones".into()));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidScene("speed must be positive".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidScene("sample rate must be positive".into()));
        }
        let finite = |p: &Vec3| p.iter().all(|x| x.is_finite());
        if !finite(&self.source) || !self.mics.iter().all(finite) {
            return Err(Error::InvalidScene("non-finite position".into()));
        }
        Ok(())
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.mics.iter().map(|m| distance(&self.source, m)).collect()
    }

    /// Returns the pose with microphones reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            mics: perm.iter().map(|&i| self.mics[i]).collect(),
            ..self.clone()
        }
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.mics.len() as f64;
        let mut c = [0.0; 3];
        for m in &self.mics {
            for (acc, x) in c.iter_mut().zip(m) {
                *acc += x;
            }
        }
        c.map(|x| x / n)
    }
}

/// Permutation that moves the microphone farthest from the source to the
/// front, keeping the others in their original order. Ties go to the lowest
/// index.
pub fn choose_reference(scene: &ScenePose) -> Result<Vec<usize>> {
    scene.validate()?;
    let dists = scene.distances();
    let mut best = 0;
    for (i, &d) in dists.iter().enumerate().skip(1) {
        if d > dists[best] {
            best = i;
        }
    }
    let mut perm = Vec::with_capacity(dists.len());
    perm.push(best);
    perm.extend((0..dists.len()).filter(|&i| i != best));
    Ok(perm)
}

/// TDOAs in samples of every microphone relative to microphone 0, i.e.
/// `f/s · (|u − m_0| − |u − m_i|)` for `i = 1..C`.
pub fn compute_tdoa(scene: &ScenePose) -> Result<Vec<f64>> {
    scene.validate()?;
    if scene.num_mics() < 2 {
        return Err(Error::InvalidScene("TDOAs need at least two microphones".into()));
    }
    tdoa_from(&scene.source, scene)
}

fn tdoa_from(source: &Vec3, scene: &ScenePose) -> Result<Vec<f64>> {
    let dists: Vec<f64> = scene.mics.iter().map(|m| distance(source, m)).collect();
    if dists.iter().any(|&d| d < MIN_DISTANCE) {
        return Err(Error::InvalidScene(
            "source coincides with a microphone".into(),
        ));
    }
    let scale = scene.sample_rate / scene.speed;
    Ok(dists[1..].iter().map(|d| scale * (dists[0] - d)).collect())
}

/// Recomputes the TDOAs after rotating the apparent source direction about
/// the array centroid.
///
/// Azimuth and elevation errors are drawn independently, each with magnitude
/// uniform in `[0, max_angle_deg]` and a random sign. The source distance to
/// the centroid is preserved. Negative results are clamped to zero.
pub fn perturb_tdoa(scene: &ScenePose, max_angle_deg: f64, seed: u64) -> Result<Vec<f64>> {
    if !(max_angle_deg >= 0.0) {
        return Err(Error::invalid("max angle must be nonnegative"));
    }
    let exact = compute_tdoa(scene)?;
    if max_angle_deg == 0.0 {
        return Ok(exact);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let mag = rng.random_range(0.0..=max_angle_deg);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        (sign * mag).to_radians()
    };
    let d_az = draw(&mut rng);
    let d_el = draw(&mut rng);

    let c = scene.centroid();
    let rel = [
        scene.source[0] - c[0],
        scene.source[1] - c[1],
        scene.source[2] - c[2],
    ];
    let r = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
    let az = rel[1].atan2(rel[0]) + d_az;
    let el = (rel[2] / r).clamp(-1.0, 1.0).asin() + d_el;
    let apparent = [
        c[0] + r * el.cos() * az.cos(),
        c[1] + r * el.cos() * az.sin(),
        c[2] + r * el.sin(),
    ];
    Ok(tdoa_from(&apparent, scene)?
        .into_iter()
        .map(|t| t.max(0.0))
        .collect())
}
