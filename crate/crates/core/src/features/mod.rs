//! Acoustic front-end: MFCCs, frame splicing and the utterance-level speaker
//! embedding appended to every frame of the network input.

mod extractor;
mod io;
mod mfcc;

pub use extractor::{
    extract_embedding, train_embedding_extractor, train_extractor_from_features, utterance_stats,
    Fingerprint, SpeakerEmbedding, SpeakerEmbeddingExtractor,
};
pub use io::{load_extractor, load_features, save_extractor, save_features};
pub use mfcc::{compute_mfcc, MfccComputer};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{FrameGeometry, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub mfcc_dim: usize,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub mel_filters: usize,
    pub pre_emphasis: f64,
    pub splice_width: usize,
    pub log_floor: f64,
    pub low_freq_hz: f64,
    pub embedding_dim: usize,
    pub sample_rate: u32,
}

impl Default for FeatureConfig {
    /// Desk-scale front-end: 20 cepstra over 40 mel bands, 5-frame splice, 16-dim embedding.
    fn default() -> Self {
        Self {
            mfcc_dim: 20,
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            mel_filters: 40,
            pre_emphasis: 0.97,
            splice_width: 5,
            log_floor: 1e-10,
            low_freq_hz: 20.0,
            embedding_dim: 16,
            sample_rate: SAMPLE_RATE,
        }
    }
}

impl FeatureConfig {
    /// 40 cepstra, 5-frame splice and a 100-dim embedding: 300 inputs per frame.
    pub fn paper_scale() -> Self {
        Self {
            mfcc_dim: 40,
            mel_filters: 40,
            embedding_dim: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mfcc_dim == 0 || self.mfcc_dim > self.mel_filters {
            return Err(Error::InvalidArgument(
                "need 0 < mfcc_dim <= mel_filters".into(),
            ));
        }
        if self.splice_width % 2 == 0 {
            return Err(Error::InvalidArgument("splice width must be odd".into()));
        }
        if !(self.log_floor > 0.0) || !(self.frame_shift_ms > 0.0) || !(self.frame_length_ms > 0.0)
        {
            return Err(Error::InvalidArgument(
                "framing and log floor must be positive".into(),
            ));
        }
        if !(self.low_freq_hz >= 0.0 && self.low_freq_hz < self.sample_rate as f64 / 2.0) {
            return Err(Error::InvalidArgument(
                "low frequency must lie below Nyquist".into(),
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry::from_ms(self.sample_rate, self.frame_length_ms, self.frame_shift_ms)
    }

    /// Network input dimension: spliced cepstra plus the embedding.
    pub fn input_dim(&self) -> usize {
        self.splice_width * self.mfcc_dim + self.embedding_dim
    }

    pub fn stat_dim(&self) -> usize {
        2 * self.mfcc_dim
    }
}

/// Frames x dims matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T> {
    pub data: Array2<T>,
    pub frame_shift_ms: f64,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(data: Array2<T>, frame_shift_ms: f64) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self {
            data,
            frame_shift_ms,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }
}

/// Whether an embedding from a foreign extractor may be fed to a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FingerprintPolicy {
    #[default]
    Enforce,
    Override,
}

/// Fails unless the fingerprints agree or the policy overrides the check.
pub fn check_fingerprint(
    model: Fingerprint,
    embedding: Fingerprint,
    policy: FingerprintPolicy,
) -> Result<()> {
    if model != embedding && policy == FingerprintPolicy::Enforce {
        return Err(Error::FingerprintMismatch {
            model: model.to_string(),
            embedding: embedding.to_string(),
        });
    }
    Ok(())
}

/// Splices `splice_width` frames around each frame (edges replicated) and appends
/// the utterance embedding: `splice_width * mfcc_dim + embedding_dim` columns.
pub fn assemble_input<T: Real>(
    f: &FeatureMatrix<T>,
    emb: &SpeakerEmbedding<T>,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix<T>> {
    if cfg.splice_width % 2 == 0 {
        return Err(Error::InvalidArgument("splice width must be odd".into()));
    }
    if f.dims() != cfg.mfcc_dim {
        return Err(Error::DimensionMismatch(format!(
            "features have {} dims, config {}",
            f.dims(),
            cfg.mfcc_dim
        )));
    }
    if emb.values.len() != cfg.embedding_dim {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} dims, config {}",
            emb.values.len(),
            cfg.embedding_dim
        )));
    }
    let n = f.frames();
    let k = cfg.splice_width / 2;
    let d = cfg.mfcc_dim;
    let mut out = Array2::zeros((n, cfg.input_dim()));
    for t in 0..n {
        let mut row = out.row_mut(t);
        for (j, off) in (-(k as isize)..=k as isize).enumerate() {
            let src = (t as isize + off).clamp(0, n as isize - 1) as usize;
            for c in 0..d {
                row[j * d + c] = f.data[[src, c]];
            }
        }
        for (c, &v) in emb.values.iter().enumerate() {
            row[cfg.splice_width * d + c] = v;
        }
    }
    FeatureMatrix::new(out, f.frame_shift_ms)
}

/// [`assemble_input`] behind a fingerprint check against the model's extractor.
pub fn assemble_for_model<T: Real>(
    f: &FeatureMatrix<T>,
    emb: &SpeakerEmbedding<T>,
    cfg: &FeatureConfig,
    model_fingerprint: Fingerprint,
    policy: FingerprintPolicy,
) -> Result<FeatureMatrix<T>> {
    check_fingerprint(model_fingerprint, emb.fingerprint, policy)?;
    assemble_input(f, emb, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn emb(values: Vec<f64>) -> SpeakerEmbedding<f64> {
        SpeakerEmbedding {
            values,
            fingerprint: Fingerprint(1),
        }
    }

    #[test]
    fn paper_scale_is_300_dims() {
        assert_eq!(FeatureConfig::paper_scale().input_dim(), 300);
    }

    #[test]
    fn unit_splice_without_embedding_is_identity() {
        let cfg = FeatureConfig {
            mfcc_dim: 3,
            splice_width: 1,
            embedding_dim: 0,
            ..Default::default()
        };
        let f = FeatureMatrix::new(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], 10.0).unwrap();
        assert_eq!(assemble_input(&f, &emb(vec![]), &cfg).unwrap(), f);
    }

    #[test]
    fn edges_are_replicated() {
        let cfg = FeatureConfig {
            mfcc_dim: 2,
            splice_width: 5,
            embedding_dim: 1,
            ..Default::default()
        };
        let f = FeatureMatrix::new(array![[1.0, 2.0], [3.0, 4.0]], 10.0).unwrap();
        let out = assemble_input(&f, &emb(vec![9.0]), &cfg).unwrap();
        assert_eq!(
            out.data.row(0).to_vec(),
            vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 9.0]
        );
        assert_eq!(
            out.data.row(1).to_vec(),
            vec![1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0, 9.0]
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cfg = FeatureConfig {
            mfcc_dim: 3,
            splice_width: 1,
            embedding_dim: 0,
            ..Default::default()
        };
        let f = FeatureMatrix::new(array![[1.0, 2.0]], 10.0).unwrap();
        assert!(matches!(
            assemble_input(&f, &emb(vec![]), &cfg),
            Err(Error::DimensionMismatch(_))
        ));
        let even = FeatureConfig {
            splice_width: 4,
            ..cfg
        };
        assert!(assemble_input(&f, &emb(vec![]), &even).is_err());
    }

    #[test]
    fn foreign_fingerprint_needs_override() {
        let cfg = FeatureConfig {
            mfcc_dim: 1,
            splice_width: 1,
            embedding_dim: 1,
            ..Default::default()
        };
        let f = FeatureMatrix::new(array![[1.0]], 10.0).unwrap();
        let e = emb(vec![0.5]);
        assert!(
            assemble_for_model(&f, &e, &cfg, Fingerprint(2), FingerprintPolicy::Enforce).is_err()
        );
        assert!(
            assemble_for_model(&f, &e, &cfg, Fingerprint(2), FingerprintPolicy::Override).is_ok()
        );
        assert!(
            assemble_for_model(&f, &e, &cfg, Fingerprint(1), FingerprintPolicy::Enforce).is_ok()
        );
    }
}
