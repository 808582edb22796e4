//! Neural components: the audio-conditioned generator with motion transition
//! infusion, the emotion mixture head, the keyframe CVAE sampler, the frozen
//! pose emotion classifier, the velocity discriminator and the adversarial
//! training loop.
//!
//! All tensors are float64 on the CPU. Parameters live in a [`ParamStore`]
//! whose initialization is derived from a seed and each parameter's name.

pub mod audio_encoder;
pub mod classifier;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod mixture;
pub mod nn;
pub mod optim;
pub mod params;
pub mod sampler;
pub mod training;

pub use error::{ModelError, Result};
pub use generator::{Generator, GeneratorInput, GeneratorOutput};
pub use params::{ParamBuilder, ParamStore};
