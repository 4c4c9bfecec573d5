use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Manifest, Utterance};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureMatrix, MfccComputer};
use crate::{rng, Real};

/// Utterances beyond this count are subsampled (seeded) before fitting.
const MAX_TRAINING_UTTERANCES: usize = 8192;

/// Identity of a trained extractor; embeddings and models carry it.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub struct Fingerprint(pub u64);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEmbedding<T> {
    pub values: Vec<T>,
    pub fingerprint: Fingerprint,
}

/// Utterance statistics (per-dimension MFCC mean and standard deviation) are
/// standardized, then projected onto the leading principal directions of the
/// training set. Each extractor therefore defines its own coordinate system.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEmbeddingExtractor<T> {
    pub mean: Vec<T>,
    /// Reciprocal standard deviation per stat dimension.
    pub scale: Vec<T>,
    /// `embedding_dim x stat_dim`, orthonormal rows.
    pub projection: Array2<T>,
    pub fingerprint: Fingerprint,
}

/// Concatenated mean and (population) standard deviation of the feature rows.
pub fn utterance_stats<T: Real>(f: &FeatureMatrix<T>) -> Vec<T> {
    let n = T::lit(f.frames() as f64);
    let mut out = Vec::with_capacity(2 * f.dims());
    let means: Vec<T> = f.data.columns().into_iter().map(|c| c.sum() / n).collect();
    let stds: Vec<T> = f
        .data
        .columns()
        .into_iter()
        .zip(&means)
        .map(|(c, &m)| (c.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n).sqrt())
        .collect();
    out.extend(means);
    out.extend(stds);
    out
}

impl<T: Real> SpeakerEmbeddingExtractor<T> {
    pub fn stat_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.projection.nrows()
    }

    /// Fits whitening and the principal basis from per-utterance stat vectors.
    pub fn fit(stats: &[Vec<T>], embedding_dim: usize, fingerprint: Fingerprint) -> Result<Self> {
        let Some(first) = stats.first() else {
            return Err(Error::TooFewUtterances {
                need: embedding_dim.max(1),
                got: 0,
            });
        };
        let d = first.len();
        if stats.len() < embedding_dim || stats.len() < 2 {
            return Err(Error::TooFewUtterances {
                need: embedding_dim.max(2),
                got: stats.len(),
            });
        }
        if embedding_dim > d {
            return Err(Error::InvalidArgument(format!(
                "embedding dim {embedding_dim} exceeds stat dim {d}"
            )));
        }
        if stats.iter().any(|s| s.len() != d) {
            return Err(Error::DimensionMismatch(
                "stat vectors differ in length".into(),
            ));
        }
        let n = stats.len() as f64;
        let mean: Vec<f64> = (0..d)
            .map(|j| stats.iter().map(|s| s[j].as_f64()).sum::<f64>() / n)
            .collect();
        let std: Vec<f64> = (0..d)
            .map(|j| {
                (stats
                    .iter()
                    .map(|s| (s[j].as_f64() - mean[j]).powi(2))
                    .sum::<f64>()
                    / n)
                    .sqrt()
            })
            .collect();
        if let Some(j) = std.iter().position(|&s| s < 1e-9) {
            return Err(Error::Degenerate(format!(
                "stat dimension {j} has zero variance across utterances"
            )));
        }
        let z = DMatrix::from_fn(stats.len(), d, |i, j| {
            (stats[i][j].as_f64() - mean[j]) / std[j]
        });
        let cov = z.transpose() * &z / n;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let mut projection = Array2::zeros((embedding_dim, d));
        for (row, &k) in order.iter().take(embedding_dim).enumerate() {
            let v = eig.eigenvectors.column(k);
            // sign convention: largest-magnitude component positive
            let pivot = (0..d)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
                .unwrap_or(0);
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..d {
                projection[[row, j]] = T::lit(sign * v[j]);
            }
        }
        Ok(Self {
            mean: mean.into_iter().map(T::lit).collect(),
            scale: std.into_iter().map(|s| T::lit(1.0 / s)).collect(),
            projection,
            fingerprint,
        })
    }

    pub fn whiten(&self, stats: &[T]) -> Vec<T> {
        stats
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&s, &m), &k)| (s - m) * k)
            .collect()
    }

    pub fn embed_stats(&self, stats: &[T]) -> Result<SpeakerEmbedding<T>> {
        if stats.len() != self.stat_dim() {
            return Err(Error::DimensionMismatch(format!(
                "stats have {} dims, extractor {}",
                stats.len(),
                self.stat_dim()
            )));
        }
        let z = self.whiten(stats);
        let values = self
            .projection
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(&z).map(|(&p, &v)| p * v).sum())
            .collect();
        Ok(SpeakerEmbedding {
            values,
            fingerprint: self.fingerprint,
        })
    }

    pub fn embed_features(&self, f: &FeatureMatrix<T>) -> Result<SpeakerEmbedding<T>> {
        self.embed_stats(&utterance_stats(f))
    }
}

fn corpus_fingerprint(
    corpus: &Manifest,
    cfg: &FeatureConfig,
    embedding_dim: usize,
    seed: u64,
) -> Fingerprint {
    let mut ids: Vec<&str> = corpus.entries.iter().map(|u| u.id.as_str()).collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update((embedding_dim as u64).to_le_bytes());
    h.update(seed.to_le_bytes());
    for id in ids {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
    }
    Fingerprint(u64::from_le_bytes(h.finalize()[..8].try_into().unwrap()))
}

/// Trains an extractor from precomputed per-utterance MFCCs of `corpus` (same order).
pub fn train_extractor_from_features<T: Real>(
    corpus: &Manifest,
    features: &[FeatureMatrix<T>],
    cfg: &FeatureConfig,
    embedding_dim: usize,
    seed: u64,
) -> Result<SpeakerEmbeddingExtractor<T>> {
    if features.len() != corpus.len() {
        return Err(Error::DimensionMismatch(
            "one feature matrix per utterance required".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..features.len()).collect();
    if idx.len() > MAX_TRAINING_UTTERANCES {
        idx.shuffle(&mut rng::stream(seed, &["extractor-subset"]));
        idx.truncate(MAX_TRAINING_UTTERANCES);
        idx.sort_unstable();
    }
    let stats: Vec<Vec<T>> = idx.iter().map(|&i| utterance_stats(&features[i])).collect();
    SpeakerEmbeddingExtractor::fit(
        &stats,
        embedding_dim,
        corpus_fingerprint(corpus, cfg, embedding_dim, seed),
    )
}

pub fn train_embedding_extractor<T: Real>(
    corpus: &Manifest,
    cfg: &FeatureConfig,
    embedding_dim: usize,
    seed: u64,
) -> Result<SpeakerEmbeddingExtractor<T>> {
    if corpus.len() < embedding_dim.max(2) {
        return Err(Error::TooFewUtterances {
            need: embedding_dim.max(2),
            got: corpus.len(),
        });
    }
    let mfcc = MfccComputer::<T>::new(cfg)?;
    let features: Vec<FeatureMatrix<T>> = corpus
        .entries
        .par_iter()
        .map(|u| mfcc.compute(&u.load_audio()?))
        .collect::<Result<_>>()?;
    train_extractor_from_features(corpus, &features, cfg, embedding_dim, seed)
}

pub fn extract_embedding<T: Real>(
    u: &Utterance,
    e: &SpeakerEmbeddingExtractor<T>,
    cfg: &FeatureConfig,
) -> Result<SpeakerEmbedding<T>> {
    let f = MfccComputer::<T>::new(cfg)?.compute(&u.load_audio()?)?;
    e.embed_features(&f)
}
