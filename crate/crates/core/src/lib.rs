//! Cross-lingual, multi-stage acoustic model adaptation at desk scale.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the `f64` instantiation used by the pipeline and the CLI.

pub mod cli;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod nnet;
pub mod pipeline;
pub mod rng;
mod scalar;
pub mod synthbench;
pub mod util;

pub use error::{Error, Result};
pub use scalar::Real;

pub type AudioSignal = corpus::AudioSignal<f64>;
pub type RoomImpulseResponse = dsp::RoomImpulseResponse<f64>;
pub type NoiseClip = dsp::NoiseClip<f64>;
pub type AcousticModel = nnet::AcousticModel<f64>;
pub type FeatureMatrix = features::FeatureMatrix<f64>;
pub type SpeakerEmbeddingExtractor = features::SpeakerEmbeddingExtractor<f64>;
