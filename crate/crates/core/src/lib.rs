//! Causal streaming delay-filter-and-sum neural beamformer.
//!
//! Microphone signals are first steered toward the source with integer and
//! fractional delay filters, then a channel-count-agnostic network estimates
//! per-channel masks in a learned latent space, and the masked latents are
//! averaged and decoded back to the time domain. The training target is the
//! delay-and-sum of the clean reverberant components.

pub mod accounting;
pub mod audio;
pub mod error;
pub mod framing;
pub mod geometry;
pub mod io;
pub mod model;
pub mod steering;
pub mod sim;
pub mod streaming;
pub mod train;

pub use accounting::{count_macs, count_params, latency_report, LatencyReport, MacReport};
pub use audio::MultichannelBuffer;
pub use error::{Error, Result};
pub use geometry::{choose_reference, compute_tdoa, perturb_tdoa, ScenePose, Vec3};
pub use model::{ModelConfig, ModelParams};
pub use steering::{
    apply_steering, build_steering_plan, delay_and_sum, design_fractional_filter, make_target,
    SteeringPlan,
};
pub use streaming::{create_stream, enhance_offline, enhance_streaming, Stream};
pub use train::{si_sdr, train_loop, ParamGrads, TrainConfig, TrainingItem};
pub use sim::{render_scene, sample_random_scene, SceneSpec};
pub use io::{read_wav, write_wav, SceneMetadata, WeightFile};
