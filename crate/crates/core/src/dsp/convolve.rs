use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::corpus::AudioSignal;
use crate::dsp::RoomImpulseResponse;
use crate::error::{Error, Result};
use crate::Real;

/// Input length above which [`convolve`] switches to FFT overlap-add.
pub const DIRECT_MAX_LEN: usize = 8192;

/// Convolves `x` with the impulse response and truncates the result to `x.len()`,
/// keeping the output time-aligned with the input.
pub fn convolve<T: Real>(x: &AudioSignal<T>, h: &RoomImpulseResponse<T>) -> Result<AudioSignal<T>> {
    if x.sample_rate() != h.sample_rate {
        return Err(Error::RateMismatch {
            expected: x.sample_rate(),
            got: h.sample_rate,
        });
    }
    if x.is_empty() || h.samples.is_empty() {
        return Err(Error::EmptyInput("convolution operand"));
    }
    let y = if x.len() > DIRECT_MAX_LEN {
        convolve_overlap_add(x.samples(), &h.samples, x.len())
    } else {
        convolve_direct(x.samples(), &h.samples, x.len())
    };
    AudioSignal::new(y, x.sample_rate())
}

/// Direct-form convolution, first `out_len` samples of `x * h`.
pub fn convolve_direct<T: Real>(x: &[T], h: &[T], out_len: usize) -> Vec<T> {
    let mut y = vec![T::zero(); out_len];
    for (k, &hk) in h.iter().enumerate().take(out_len) {
        if hk == T::zero() {
            continue;
        }
        let n = (out_len - k).min(x.len());
        for (yi, &xi) in y[k..k + n].iter_mut().zip(&x[..n]) {
            *yi += hk * xi;
        }
    }
    y
}

/// FFT overlap-add convolution, first `out_len` samples of `x * h`.
pub fn convolve_overlap_add<T: Real>(x: &[T], h: &[T], out_len: usize) -> Vec<T> {
    let mut y = vec![T::zero(); out_len];
    if x.is_empty() || h.is_empty() || out_len == 0 {
        return y;
    }
    // Taps past out_len never reach the retained prefix.
    let h = &h[..h.len().min(out_len)];
    let m = h.len();
    let fft_len = (2 * m).max(1024).next_power_of_two();
    let block = fft_len - m + 1;

    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let mut spec_h: Vec<Complex<T>> = h.iter().map(|&v| Complex::new(v, T::zero())).collect();
    spec_h.resize(fft_len, Complex::new(T::zero(), T::zero()));
    fwd.process(&mut spec_h);

    let scale = T::one() / T::lit(fft_len as f64);
    let x = &x[..x.len().min(out_len)];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); fft_len];
    let mut start = 0;
    while start < x.len() {
        let end = (start + block).min(x.len());
        for (b, &v) in buf.iter_mut().zip(&x[start..end]) {
            *b = Complex::new(v, T::zero());
        }
        for b in buf[end - start..].iter_mut() {
            *b = Complex::new(T::zero(), T::zero());
        }
        fwd.process(&mut buf);
        for (b, hk) in buf.iter_mut().zip(&spec_h) {
            *b = *b * *hk;
        }
        inv.process(&mut buf);
        let n = fft_len.min(out_len - start);
        for (yi, b) in y[start..start + n].iter_mut().zip(&buf) {
            *yi += b.re * scale;
        }
        start = end;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn naive(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
        (0..out_len)
            .map(|n| {
                (0..h.len())
                    .filter(|&k| k <= n && n - k < x.len())
                    .map(|k| h[k] * x[n - k])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn direct_matches_textbook_sum() {
        let mut r = crate::rng::stream(1, &["conv"]);
        let x: Vec<f64> = (0..300).map(|_| r.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = convolve_direct(&x, &h, 300);
        let b = naive(&x, &h, 300);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_add_handles_long_kernel() {
        let mut r = crate::rng::stream(2, &["conv"]);
        let x: Vec<f64> = (0..500).map(|_| r.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..2000).map(|_| r.random_range(-0.1..0.1)).collect();
        let a = convolve_overlap_add(&x, &h, 500);
        let b = naive(&x, &h, 500);
        let err = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn delayed_impulse_shifts() {
        let x = AudioSignal::new((1..=20).map(|v| v as f64).collect(), 16000).unwrap();
        let mut h = vec![0.0; 4];
        h[3] = 1.0;
        let h = RoomImpulseResponse::new(h, 16000, "r", "p").unwrap();
        let y = convolve(&x, &h).unwrap();
        assert_eq!(&y.samples()[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&y.samples()[3..], &x.samples()[..17]);
    }

    #[test]
    fn rejects_rate_mismatch() {
        let x = AudioSignal::new(vec![1.0f64], 16000).unwrap();
        let h = RoomImpulseResponse::new(vec![1.0], 8000, "r", "p").unwrap();
        assert!(matches!(convolve(&x, &h), Err(Error::RateMismatch { .. })));
    }
}
