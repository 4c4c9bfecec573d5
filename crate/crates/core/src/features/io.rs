//! Binary formats: extractor checkpoints and cached feature matrices. Both are
//! little-endian with a magic tag, a version, and a trailing CRC-32 of the body.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Fingerprint, SpeakerEmbeddingExtractor};
use crate::util::{write_atomic, ByteReader};
use crate::Real;

const EXTRACTOR_MAGIC: &[u8; 4] = b"XSPK";
const FEATURE_MAGIC: &[u8; 4] = b"XFEA";
const VERSION: u32 = 1;

fn finish(mut body: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&body);
    body.extend_from_slice(&crc.to_le_bytes());
    body
}

fn open<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<ByteReader<'a>> {
    if bytes.len() < 12 {
        return Err(Error::Corrupt("file too short".into()));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body).to_le_bytes() != crc {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    let mut r = ByteReader::new(body);
    if r.take(4)? != magic {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            got: version,
            expected: VERSION,
        });
    }
    Ok(r)
}

pub fn save_extractor<T: Real>(e: &SpeakerEmbeddingExtractor<T>, path: &Path) -> Result<()> {
    let mut b = Vec::new();
    b.extend_from_slice(EXTRACTOR_MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(e.stat_dim() as u32).to_le_bytes());
    b.extend_from_slice(&(e.embedding_dim() as u32).to_le_bytes());
    b.extend_from_slice(&e.fingerprint.0.to_le_bytes());
    for v in e.mean.iter().chain(&e.scale).chain(e.projection.iter()) {
        b.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    write_atomic(path, &finish(b))
}

pub fn load_extractor<T: Real>(path: &Path) -> Result<SpeakerEmbeddingExtractor<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = open(&bytes, EXTRACTOR_MAGIC)?;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let fingerprint = Fingerprint(r.u64()?);
    let mean = r.f64s::<T>(d)?;
    let scale = r.f64s::<T>(d)?;
    let projection = Array2::from_shape_vec((k, d), r.f64s::<T>(k * d)?)
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    r.expect_end()?;
    Ok(SpeakerEmbeddingExtractor {
        mean,
        scale,
        projection,
        fingerprint,
    })
}

pub fn save_features<T: Real>(f: &FeatureMatrix<T>, path: &Path) -> Result<()> {
    let mut b = Vec::new();
    b.extend_from_slice(FEATURE_MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(f.frames() as u32).to_le_bytes());
    b.extend_from_slice(&(f.dims() as u32).to_le_bytes());
    b.extend_from_slice(&f.frame_shift_ms.to_le_bytes());
    for v in f.data.iter() {
        b.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    write_atomic(path, &finish(b))
}

pub fn load_features<T: Real>(path: &Path) -> Result<FeatureMatrix<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = open(&bytes, FEATURE_MAGIC)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let shift = r.f64()?;
    let data = Array2::from_shape_vec((n, d), r.f64s::<T>(n * d)?)
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    r.expect_end()?;
    FeatureMatrix::new(data, shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn extractor_roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ext");
        let e = SpeakerEmbeddingExtractor {
            mean: vec![0.5, -1.0],
            scale: vec![2.0, 0.25],
            projection: array![[0.6, 0.8]],
            fingerprint: Fingerprint(0xdead_beef),
        };
        save_extractor(&e, &p).unwrap();
        assert_eq!(load_extractor::<f64>(&p).unwrap(), e);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_extractor::<f64>(&p), Err(Error::Corrupt(_))));
    }

    #[test]
    fn feature_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.feat");
        let f = FeatureMatrix::new(array![[1.5, 2.0], [-3.0, 4.25], [0.0, 1e-300]], 10.0).unwrap();
        save_features(&f, &p).unwrap();
        assert_eq!(load_features::<f64>(&p).unwrap(), f);
    }
}
