//! JSON description of a rendered scene, sufficient to rebuild its steering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_bytes_atomic;
use crate::error::Result;
use crate::geometry::{choose_reference, compute_tdoa, perturb_tdoa};
use crate::sim::SceneSpec;
use crate::steering::{build_steering_plan, SteeringPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub spec: SceneSpec,
    /// Channel `i` of the reference-first order is file channel `permutation[i]`.
    pub permutation: Vec<usize>,
    /// TDOAs of the reference-first array, in samples.
    pub true_tdoas: Vec<f64>,
    pub perturbed_tdoas: Vec<f64>,
    pub max_angle_deg: f64,
    pub perturbation_seed: u64,
    pub num_taps: usize,
}

impl SceneMetadata {
    pub fn from_spec(spec: SceneSpec, max_angle_deg: f64, perturbation_seed: u64, num_taps: usize) -> Result<Self> {
        spec.validate()?;
        let pose = spec.pose();
        let permutation = choose_reference(&pose)?;
        let ordered = pose.permuted(&permutation);
        let (true_tdoas, perturbed_tdoas) = if ordered.num_mics() < 2 {
            (Vec::new(), Vec::new())
        } else {
            (
                compute_tdoa(&ordered)?,
                perturb_tdoa(&ordered, max_angle_deg, perturbation_seed)?,
            )
        };
        build_steering_plan(&perturbed_tdoas, num_taps)?;
        Ok(Self {
            spec,
            permutation,
            true_tdoas,
            perturbed_tdoas,
            max_angle_deg,
            perturbation_seed,
            num_taps,
        })
    }

    /// Steering from the perturbed TDOAs, or the exact ones when `exact`.
    pub fn steering_plan(&self, exact: bool) -> Result<SteeringPlan> {
        let tdoas = if exact { &self.true_tdoas } else { &self.perturbed_tdoas };
        build_steering_plan(tdoas, self.num_taps)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let meta: Self = serde_json::from_str(text)?;
        meta.spec.validate()?;
        Ok(meta)
    }
}

pub fn save_scene_metadata(path: impl AsRef<Path>, meta: &SceneMetadata) -> Result<()> {
    write_bytes_atomic(path.as_ref(), meta.to_json()?.as_bytes())
}

pub fn load_scene_metadata(path: impl AsRef<Path>) -> Result<SceneMetadata> {
    SceneMetadata::from_json(&std::fs::read_to_string(path)?)
}
