use crate::corpus::AudioSignal;
use crate::error::{Error, Result};
use crate::Real;

/// Number of output samples for speed factor `factor`: `ceil(len / factor)`.
///
/// A 1e-9 slack absorbs representation error, so 9000 / 0.9 gives 10000.
pub fn perturbed_len(len: usize, factor: f64) -> usize {
    ((len as f64 / factor) - 1e-9).ceil().max(0.0) as usize
}

/// Resample-style speed perturbation: output sample `n` linearly interpolates the
/// input at position `factor * n`, so tempo and pitch both scale by `factor`.
pub fn speed_perturb<T: Real>(x: &AudioSignal<T>, factor: f64) -> Result<AudioSignal<T>> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "speed factor must be positive, got {factor}"
        )));
    }
    let src = x.samples();
    let out_len = perturbed_len(src.len(), factor);
    let last = src.len().saturating_sub(1);
    let out = (0..out_len)
        .map(|n| {
            let pos = factor * n as f64;
            let i = pos.floor() as usize;
            if i >= last {
                return src[last];
            }
            let frac = T::lit(pos - i as f64);
            src[i] + (src[i + 1] - src[i]) * frac
        })
        .collect();
    AudioSignal::new(out, x.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let x = AudioSignal::new(vec![0.1f64, 0.4, -0.3, 0.2], 16000).unwrap();
        assert_eq!(speed_perturb(&x, 1.0).unwrap(), x);
    }

    #[test]
    fn length_formula() {
        let x = AudioSignal::<f64>::zeros(9000, 16000);
        assert_eq!(speed_perturb(&x, 0.9).unwrap().len(), 10000);
        assert_eq!(speed_perturb(&x, 1.1).unwrap().len(), 8182);
    }

    #[test]
    fn rejects_bad_factor() {
        let x = AudioSignal::<f64>::zeros(10, 16000);
        assert!(speed_perturb(&x, 0.0).is_err());
        assert!(speed_perturb(&x, -1.0).is_err());
    }
}
