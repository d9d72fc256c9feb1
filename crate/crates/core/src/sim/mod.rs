//! Acoustic scene simulation: image-method room responses, random scene
//! sampling, and synthetic source signals.

pub mod rir;
pub mod scene;
pub mod signals;

pub use rir::{
    decay_time, default_max_order, image_method_rir, schroeder_decay_db, t60_to_reflection_coeff,
    RoomImpulseResponse,
};
pub use scene::{
    render_scene, sample_random_scene, synthesize_scene, RenderedScene, SceneSampler, SceneSpec,
};
pub use signals::{bandlimited_noise, fft_convolve, harmonic_speech};
