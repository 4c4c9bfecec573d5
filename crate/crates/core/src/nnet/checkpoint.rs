//! Model checkpoints.
//!
//! Layout (little-endian): magic `XAMD`, version `u32`, CRC-32 of everything after
//! byte 12, then the training state (epochs `u32`, last lr `f64`) at a fixed offset
//! so that it is the only region that changes when a model is merely re-stamped.
//! After that: fingerprint, dropout rate, input dim, phone set, layer specs and all
//! weights as `f64`.

use std::fs;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::features::Fingerprint;
use crate::nnet::layers::{Layer, LayerSpec};
use crate::nnet::model::{AcousticModel, InputNorm, OutputLayer, TrainingState};
use crate::util::{write_atomic, ByteReader};
use crate::Real;

const MAGIC: &[u8; 4] = b"XAMD";
pub const CHECKPOINT_VERSION: u32 = 1;
pub(crate) const STATE_RANGE: Range<usize> = 12..24;

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s<T: Real>(b: &mut Vec<u8>, vs: &[T]) {
    for v in vs {
        b.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

/// Serializes a model to bytes.
pub fn write_checkpoint<T: Real>(m: &AcousticModel<T>) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    put_u32(&mut b, CHECKPOINT_VERSION);
    put_u32(&mut b, 0);
    put_u32(&mut b, m.state.epochs_completed);
    b.extend_from_slice(&m.state.last_lr.to_le_bytes());
    put_u64(&mut b, m.fingerprint.0);
    b.extend_from_slice(&m.dropout_rate.to_le_bytes());
    put_u32(&mut b, m.input_dim() as u32);
    put_u32(&mut b, m.phone_set.len() as u32);
    for p in &m.phone_set {
        put_u32(&mut b, p.len() as u32);
        b.extend_from_slice(p.as_bytes());
    }
    put_u32(&mut b, m.hidden.len() as u32);
    for l in &m.hidden {
        match l.spec() {
            LayerSpec::Tdnn { offsets, dim } => {
                b.push(0);
                put_u32(&mut b, dim as u32);
                put_u32(&mut b, offsets.len() as u32);
                for o in offsets {
                    b.extend_from_slice(&(o as i32).to_le_bytes());
                }
            }
            LayerSpec::Lstmp { cell_dim, proj_dim } => {
                b.push(1);
                put_u32(&mut b, cell_dim as u32);
                put_u32(&mut b, proj_dim as u32);
            }
        }
    }
    put_f64s(&mut b, m.input_norm.mean.as_slice().unwrap());
    put_f64s(&mut b, m.input_norm.inv_std.as_slice().unwrap());
    for s in m.param_slices() {
        put_f64s(&mut b, s);
    }
    let crc = crc32fast::hash(&b[12..]);
    b[8..12].copy_from_slice(&crc.to_le_bytes());
    b
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

/// Parses bytes produced by [`write_checkpoint`].
pub fn read_checkpoint<T: Real>(bytes: &[u8]) -> Result<AcousticModel<T>> {
    if bytes.len() < STATE_RANGE.end {
        return Err(corrupt("checkpoint too short"));
    }
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            got: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if r.u32()? != crc32fast::hash(&bytes[12..]) {
        return Err(corrupt("checksum mismatch"));
    }
    let state = TrainingState {
        epochs_completed: r.u32()?,
        last_lr: r.f64()?,
    };
    let fingerprint = Fingerprint(r.u64()?);
    let dropout_rate = r.f64()?;
    let input_dim = r.u32()? as usize;
    let n_phones = r.u32()? as usize;
    let phone_set = (0..n_phones)
        .map(|_| r.string())
        .collect::<Result<Vec<_>>>()?;
    let n_layers = r.u32()? as usize;
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let spec = match r.take(1)?[0] {
            0 => {
                let dim = r.u32()? as usize;
                let n = r.u32()? as usize;
                let offsets = (0..n)
                    .map(|_| {
                        r.take(4)
                            .map(|s| i32::from_le_bytes(s.try_into().unwrap()) as isize)
                    })
                    .collect::<Result<Vec<_>>>()?;
                LayerSpec::Tdnn { offsets, dim }
            }
            1 => LayerSpec::Lstmp {
                cell_dim: r.u32()? as usize,
                proj_dim: r.u32()? as usize,
            },
            k => return Err(corrupt(format!("unknown layer kind {k}"))),
        };
        spec.validate().map_err(corrupt)?;
        specs.push(spec);
    }
    let mut arr1 = |n: usize| -> Result<Array1<T>> { Ok(Array1::from(r.f64s::<T>(n)?)) };
    let mean = arr1(input_dim)?;
    let inv_std = arr1(input_dim)?;
    // Zero model of the right shape, then fill its tensors in order.
    let mut dim = input_dim;
    let mut hidden = Vec::with_capacity(specs.len());
    for spec in &specs {
        hidden.push(Layer::<T>::zeros(spec, dim));
        dim = spec.output_dim();
    }
    let mut m = AcousticModel {
        input_norm: InputNorm { mean, inv_std },
        hidden,
        output: OutputLayer {
            w: Array2::zeros((n_phones, dim)),
            b: Array1::zeros(n_phones),
        },
        phone_set,
        fingerprint,
        dropout_rate,
        state,
    };
    for s in m.param_slices_mut() {
        let vals = r.f64s::<T>(s.len())?;
        s.copy_from_slice(&vals);
    }
    r.expect_end()?;
    m.validate()?;
    Ok(m)
}

pub fn save_checkpoint<T: Real>(m: &AcousticModel<T>, path: &Path) -> Result<()> {
    write_atomic(path, &write_checkpoint(m))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<AcousticModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Architecture;

    fn phones(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m =
            AcousticModel::<f64>::random(&Architecture::desk(), 9, phones(6), Fingerprint(77), 3)
                .unwrap();
        m.state = TrainingState {
            epochs_completed: 2,
            last_lr: 1e-3,
        };
        m.input_norm.mean[2] = 0.125;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&m, &p).unwrap();
        let back: AcousticModel<f64> = load_checkpoint(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_checkpoint(&back), fs::read(&p).unwrap());
    }

    #[test]
    fn truncation_and_bit_flips_are_detected() {
        let m =
            AcousticModel::<f64>::random(&Architecture::desk(), 4, phones(3), Fingerprint(1), 1)
                .unwrap();
        let b = write_checkpoint(&m);
        assert!(matches!(
            read_checkpoint::<f64>(&b[..b.len() - 9]),
            Err(Error::Corrupt(_))
        ));
        let mut flipped = b.clone();
        flipped[b.len() / 2] ^= 0x10;
        assert!(matches!(
            read_checkpoint::<f64>(&flipped),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let m =
            AcousticModel::<f64>::random(&Architecture::desk(), 4, phones(3), Fingerprint(1), 1)
                .unwrap();
        let mut b = write_checkpoint(&m);
        b[4] = 9;
        assert!(matches!(
            read_checkpoint::<f64>(&b),
            Err(Error::Version { got: 9, .. })
        ));
    }

    #[test]
    fn paper_scale_dimensions_survive() {
        let m = AcousticModel::<f32>::random(
            &Architecture::paper_scale(),
            300,
            phones(40),
            Fingerprint(1),
            1,
        )
        .unwrap();
        let back: AcousticModel<f32> = read_checkpoint(&write_checkpoint(&m)).unwrap();
        let specs = back.architecture().layers;
        let tdnn: Vec<_> = specs
            .iter()
            .filter(|s| matches!(s, LayerSpec::Tdnn { dim: 1024, .. }))
            .collect();
        let lstmp: Vec<_> = specs
            .iter()
            .filter(|s| {
                matches!(
                    s,
                    LayerSpec::Lstmp {
                        cell_dim: 1024,
                        proj_dim: 256
                    }
                )
            })
            .collect();
        assert_eq!((tdnn.len(), lstmp.len(), specs.len()), (7, 3, 10));
        assert_eq!(back.input_dim(), 300);
    }
}
