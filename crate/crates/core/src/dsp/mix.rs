use num_traits::Float;

use crate::corpus::AudioSignal;
use crate::dsp::{convolve, NoiseClip, RoomImpulseResponse};
use crate::error::{Error, Result};
use crate::Real;

/// `10 log10(P_speech / P_noise)` with mean power taken over the entire signals.
pub fn measure_snr_db<T: Real>(speech: &AudioSignal<T>, noise: &AudioSignal<T>) -> Result<T> {
    if speech.len() != noise.len() {
        return Err(Error::DimensionMismatch(format!(
            "speech has {} samples, noise {}",
            speech.len(),
            noise.len()
        )));
    }
    let pn = noise.power();
    if !(pn > T::zero()) {
        return Err(Error::ZeroEnergy("noise"));
    }
    Ok(T::lit(10.0) * (speech.power() / pn).log10())
}

/// Result of mixing speech and noise at a prescribed SNR.
#[derive(Clone, Debug)]
pub struct Mixture<T> {
    pub signal: AudioSignal<T>,
    /// Gain applied to the noise before summation (before any peak limiting).
    pub gain: T,
}

/// Adds `noise` scaled so the speech-to-noise ratio is `target_snr_db`. The sum is
/// peak-limited to 1, which scales both components and leaves the ratio intact.
pub fn mix_at_snr<T: Real>(
    speech: &AudioSignal<T>,
    noise: &AudioSignal<T>,
    target_snr_db: T,
) -> Result<Mixture<T>> {
    if speech.len() != noise.len() {
        return Err(Error::DimensionMismatch(
            "speech and noise lengths differ".into(),
        ));
    }
    if speech.sample_rate() != noise.sample_rate() {
        return Err(Error::RateMismatch {
            expected: speech.sample_rate(),
            got: noise.sample_rate(),
        });
    }
    let pn = noise.power();
    if !(pn > T::zero()) {
        return Err(Error::ZeroEnergy("convolved noise"));
    }
    let ps = speech.power();
    if !(ps > T::zero()) {
        return Err(Error::ZeroEnergy("speech"));
    }
    let gain = (ps / (pn * T::lit(10.0).powf(target_snr_db / T::lit(10.0)))).sqrt();
    let samples = speech
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(&s, &w)| s + gain * w)
        .collect();
    let signal = AudioSignal::new(samples, speech.sample_rate())?.peak_limited();
    Ok(Mixture { signal, gain })
}

/// Tiles or crops `w` to `len` samples starting at `offset` (wrapping).
pub fn fit_noise<T: Real>(w: &[T], len: usize, offset: usize) -> Vec<T> {
    if w.is_empty() {
        return vec![T::zero(); len];
    }
    (0..len).map(|i| w[(offset + i) % w.len()]).collect()
}

/// Reverberant speech plus reverberant noise: `x = s*h + g (w*h~)` with `g` set
/// so that the two terms are `target_snr_db` apart. `w` is looped or cropped from
/// its start to the speech length.
pub fn augment_eq1<T: Real>(
    s: &AudioSignal<T>,
    h: &RoomImpulseResponse<T>,
    w: &NoiseClip<T>,
    h_tilde: &RoomImpulseResponse<T>,
    target_snr_db: T,
) -> Result<AudioSignal<T>> {
    Ok(reverberant_mixture(s, h, w, h_tilde, 0, target_snr_db)?.signal)
}

pub(crate) fn reverberant_mixture<T: Real>(
    s: &AudioSignal<T>,
    h: &RoomImpulseResponse<T>,
    w: &NoiseClip<T>,
    h_tilde: &RoomImpulseResponse<T>,
    noise_offset: usize,
    target_snr_db: T,
) -> Result<Mixture<T>> {
    if w.sample_rate != s.sample_rate() {
        return Err(Error::RateMismatch {
            expected: s.sample_rate(),
            got: w.sample_rate,
        });
    }
    let w_fit = AudioSignal::new(fit_noise(&w.samples, s.len(), noise_offset), w.sample_rate)?;
    let speech = convolve(s, h)?;
    let noise = convolve(&w_fit, h_tilde)?;
    mix_at_snr(&speech, &noise, target_snr_db)
}

/// Reverberation only: `x = s*h`, peak-limited.
pub fn augment_eq2<T: Real>(
    s: &AudioSignal<T>,
    h: &RoomImpulseResponse<T>,
) -> Result<AudioSignal<T>> {
    Ok(convolve(s, h)?.peak_limited())
}

/// Root-mean-square level in dB full scale; `-inf` for silence.
pub fn rms_dbfs<T: Real>(x: &AudioSignal<T>) -> T {
    T::lit(20.0) * Float::log10(x.rms())
}
