//! Augmentation signal processing: reverberation, SNR-controlled noise mixing,
//! speed perturbation and per-stage corpus expansion recipes.

mod convolve;
mod mix;
mod pools;
mod recipe;
mod speed;

pub use convolve::{convolve, convolve_direct, convolve_overlap_add, DIRECT_MAX_LEN};
pub use mix::{augment_eq1, augment_eq2, fit_noise, measure_snr_db, mix_at_snr, rms_dbfs, Mixture};
pub use pools::{
    load_noise_pool, load_rir_pool, save_noise_pool, save_rir_pool, synthesize_noise_pool,
    synthesize_rir_pool, AugmentationPools, RirPoolSpec,
};
pub use recipe::{apply_recipe, remap_labels, AugmentationRecipe, CopySpec, SnrRange};
pub use speed::{perturbed_len, speed_perturb};

use crate::error::{Error, Result};
use crate::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct RoomImpulseResponse<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
    pub room_id: String,
    pub position_id: String,
}

impl<T: Real> RoomImpulseResponse<T> {
    pub fn new(
        samples: Vec<T>,
        sample_rate: u32,
        room_id: impl Into<String>,
        position_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("impulse response"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidAudio("non-finite impulse response".into()));
        }
        if !(samples.iter().map(|&x| x * x).sum::<T>() > T::zero()) {
            return Err(Error::ZeroEnergy("impulse response"));
        }
        Ok(Self {
            samples,
            sample_rate,
            room_id: room_id.into(),
            position_id: position_id.into(),
        })
    }

    pub fn unit_impulse(sample_rate: u32) -> Self {
        Self {
            samples: vec![T::one()],
            sample_rate,
            room_id: "dirac".into(),
            position_id: "0".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseClip<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
    pub label: String,
}

impl<T: Real> NoiseClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32, label: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("noise clip"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidAudio("non-finite noise sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            label: label.into(),
        })
    }
}
