use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::corpus::{AudioSignal, FrameGeometry};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureMatrix};
use crate::Real;

fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

/// Reusable MFCC pipeline: FFT plan, window, mel filterbank and DCT basis are
/// built once per configuration.
///
/// Per frame: pre-emphasis (`y[0] = (1 - a) x[0]`, `y[i] = x[i] - a x[i-1]`),
/// Hamming window, magnitude spectrum, triangular mel filterbank from
/// `low_freq_hz` to Nyquist, natural log floored at `log_floor`, orthonormal
/// DCT-II truncated to `mfcc_dim`.
pub struct MfccComputer<T: Real> {
    cfg: FeatureConfig,
    geom: FrameGeometry,
    fft_len: usize,
    fft: Arc<dyn Fft<T>>,
    window: Vec<T>,
    /// (first bin, weights) per mel band
    filters: Vec<(usize, Vec<T>)>,
    dct: Array2<T>,
}

impl<T: Real> MfccComputer<T> {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let geom = cfg.geometry();
        let n = geom.window;
        let fft_len = n.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let window = (0..n)
            .map(|i| T::lit(0.54 - 0.46 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos()))
            .collect();
        let fs = cfg.sample_rate as f64;
        let nyquist = fs / 2.0;
        let (mlo, mhi) = (hz_to_mel(cfg.low_freq_hz), hz_to_mel(nyquist));
        let step = (mhi - mlo) / (cfg.mel_filters + 1) as f64;
        let n_bins = fft_len / 2 + 1;
        let filters = (0..cfg.mel_filters)
            .map(|m| {
                let (left, center, right) = (
                    mlo + m as f64 * step,
                    mlo + (m + 1) as f64 * step,
                    mlo + (m + 2) as f64 * step,
                );
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let mel = hz_to_mel(k as f64 * fs / fft_len as f64);
                        let w = if mel > left && mel <= center {
                            (mel - left) / (center - left)
                        } else if mel > center && mel < right {
                            (right - mel) / (right - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |&(k, _)| k);
                (first, weights.iter().map(|&(_, w)| T::lit(w)).collect())
            })
            .collect();
        let m = cfg.mel_filters as f64;
        let dct = Array2::from_shape_fn((cfg.mfcc_dim, cfg.mel_filters), |(k, j)| {
            let s = if k == 0 {
                (1.0 / m).sqrt()
            } else {
                (2.0 / m).sqrt()
            };
            T::lit(s * (PI * k as f64 * (j as f64 + 0.5) / m).cos())
        });
        Ok(Self {
            cfg: cfg.clone(),
            geom,
            fft_len,
            fft,
            window,
            filters,
            dct,
        })
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geom
    }

    pub fn compute(&self, x: &AudioSignal<T>) -> Result<FeatureMatrix<T>> {
        if x.sample_rate() != self.cfg.sample_rate {
            return Err(Error::RateMismatch {
                expected: self.cfg.sample_rate,
                got: x.sample_rate(),
            });
        }
        let n_frames = self.geom.frame_count(x.len()).ok_or(Error::TooShort {
            len: x.len(),
            window: self.geom.window,
        })?;
        let a = T::lit(self.cfg.pre_emphasis);
        let floor = T::lit(self.cfg.log_floor);
        let zero = Complex::new(T::zero(), T::zero());
        let mut buf = vec![zero; self.fft_len];
        let mut mag = vec![T::zero(); self.fft_len / 2 + 1];
        let mut logmel = vec![T::zero(); self.cfg.mel_filters];
        let mut out = Array2::zeros((n_frames, self.cfg.mfcc_dim));
        let s = x.samples();
        for t in 0..n_frames {
            let frame = &s[t * self.geom.shift..t * self.geom.shift + self.geom.window];
            for (i, b) in buf.iter_mut().enumerate().take(frame.len()) {
                let prev = if i == 0 { frame[0] } else { frame[i - 1] };
                *b = Complex::new((frame[i] - a * prev) * self.window[i], T::zero());
            }
            for b in buf[frame.len()..].iter_mut() {
                *b = zero;
            }
            self.fft.process(&mut buf);
            for (m, b) in mag.iter_mut().zip(&buf) {
                *m = b.norm();
            }
            for ((first, w), lm) in self.filters.iter().zip(logmel.iter_mut()) {
                let e: T = w.iter().zip(&mag[*first..]).map(|(&wi, &mi)| wi * mi).sum();
                *lm = e.max(floor).ln();
            }
            for (k, o) in out.row_mut(t).iter_mut().enumerate() {
                *o = self
                    .dct
                    .row(k)
                    .iter()
                    .zip(&logmel)
                    .map(|(&c, &l)| c * l)
                    .sum();
            }
        }
        FeatureMatrix::new(out, self.cfg.frame_shift_ms)
    }
}

pub fn compute_mfcc<T: Real>(x: &AudioSignal<T>, cfg: &FeatureConfig) -> Result<FeatureMatrix<T>> {
    MfccComputer::new(cfg)?.compute(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg() -> FeatureConfig {
        FeatureConfig::default()
    }

    /// Plain re-derivation: O(N^2) DFT and filter weights evaluated from scratch.
    fn reference_mfcc(x: &[f64], cfg: &FeatureConfig) -> Vec<Vec<f64>> {
        let fs = cfg.sample_rate as f64;
        let win = (cfg.frame_length_ms * fs / 1000.0).round() as usize;
        let hop = (cfg.frame_shift_ms * fs / 1000.0).round() as usize;
        let nfft = win.next_power_of_two();
        let mel = |f: f64| 1127.0 * (1.0 + f / 700.0).ln();
        let lo = mel(cfg.low_freq_hz);
        let hi = mel(fs / 2.0);
        let nb = cfg.mel_filters;
        let pts: Vec<f64> = (0..nb + 2)
            .map(|i| lo + (hi - lo) * i as f64 / (nb + 1) as f64)
            .collect();
        let mut frames = vec![];
        let mut start = 0;
        while start + win <= x.len() {
            let fr = &x[start..start + win];
            let mut y = vec![0.0; win];
            for i in 0..win {
                let pe = if i == 0 {
                    fr[0] - cfg.pre_emphasis * fr[0]
                } else {
                    fr[i] - cfg.pre_emphasis * fr[i - 1]
                };
                y[i] = pe * (0.54 - 0.46 * (2.0 * PI * i as f64 / (win - 1) as f64).cos());
            }
            let spec: Vec<f64> = (0..=nfft / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, v) in y.iter().enumerate() {
                        let ang = -2.0 * PI * (k * n) as f64 / nfft as f64;
                        re += v * ang.cos();
                        im += v * ang.sin();
                    }
                    (re * re + im * im).sqrt()
                })
                .collect();
            let logs: Vec<f64> = (0..nb)
                .map(|b| {
                    let e: f64 = spec
                        .iter()
                        .enumerate()
                        .map(|(k, m)| {
                            let f = mel(k as f64 * fs / nfft as f64);
                            let w = if f > pts[b] && f <= pts[b + 1] {
                                (f - pts[b]) / (pts[b + 1] - pts[b])
                            } else if f > pts[b + 1] && f < pts[b + 2] {
                                (pts[b + 2] - f) / (pts[b + 2] - pts[b + 1])
                            } else {
                                0.0
                            };
                            w * m
                        })
                        .sum();
                    e.max(cfg.log_floor).ln()
                })
                .collect();
            let c: Vec<f64> = (0..cfg.mfcc_dim)
                .map(|k| {
                    let s = if k == 0 {
                        (1.0 / nb as f64).sqrt()
                    } else {
                        (2.0 / nb as f64).sqrt()
                    };
                    s * logs
                        .iter()
                        .enumerate()
                        .map(|(j, l)| l * (PI * k as f64 * (j as f64 + 0.5) / nb as f64).cos())
                        .sum::<f64>()
                })
                .collect();
            frames.push(c);
            start += hop;
        }
        frames
    }

    #[test]
    fn one_second_gives_98_frames() {
        let x = AudioSignal::<f64>::zeros(16000, 16000);
        assert_eq!(compute_mfcc(&x, &cfg()).unwrap().frames(), 98);
    }

    #[test]
    fn silence_is_dct_of_floor() {
        let c = cfg();
        let x = AudioSignal::<f64>::zeros(1000, 16000);
        let f = compute_mfcc(&x, &c).unwrap();
        let l = c.log_floor.ln();
        let m = c.mel_filters as f64;
        for row in f.data.rows() {
            assert!((row[0] - l * m * (1.0 / m).sqrt()).abs() < 1e-9);
            for k in 1..c.mfcc_dim {
                assert!(row[k].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn matches_reference_implementation() {
        let c = cfg();
        let mut r = crate::rng::stream(11, &["mfcc"]);
        let x: Vec<f64> = (0..2400).map(|_| r.random_range(-0.5..0.5)).collect();
        let got = compute_mfcc(&AudioSignal::new(x.clone(), 16000).unwrap(), &c).unwrap();
        let want = reference_mfcc(&x, &c);
        assert_eq!(got.frames(), want.len());
        for (t, row) in want.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert!((got.data[[t, k]] - v).abs() < 1e-6, "frame {t} coef {k}");
            }
        }
    }

    #[test]
    fn short_signal_rejected() {
        let x = AudioSignal::<f64>::zeros(399, 16000);
        assert!(matches!(
            compute_mfcc(&x, &cfg()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn gain_moves_only_c0() {
        let c = cfg();
        let mut r = crate::rng::stream(12, &["mfcc"]);
        let x = AudioSignal::new(
            (0..4000)
                .map(|_| r.random_range(-0.3..0.3))
                .collect::<Vec<f64>>(),
            16000,
        )
        .unwrap();
        let a = compute_mfcc(&x, &c).unwrap();
        let b = compute_mfcc(&x.scaled(0.25), &c).unwrap();
        let shift = 0.25f64.ln() * (c.mel_filters as f64).sqrt();
        for t in 0..a.frames() {
            assert!((b.data[[t, 0]] - a.data[[t, 0]] - shift).abs() < 1e-4);
            for k in 1..c.mfcc_dim {
                assert!((b.data[[t, k]] - a.data[[t, k]]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn single_precision_tracks_double() {
        let c = cfg();
        let mut r = crate::rng::stream(13, &["mfcc"]);
        let x = AudioSignal::new(
            (0..2000)
                .map(|_| r.random_range(-0.5..0.5))
                .collect::<Vec<f64>>(),
            16000,
        )
        .unwrap();
        let d = compute_mfcc(&x, &c).unwrap();
        let s = compute_mfcc(&x.convert::<f32>(), &c).unwrap();
        for (a, b) in d.data.iter().zip(s.data.iter()) {
            assert!((a - *b as f64).abs() < 1e-3);
        }
    }
}
