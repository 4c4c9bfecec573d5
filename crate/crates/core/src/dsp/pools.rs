//! Impulse-response and noise pools: synthesis and on-disk directory format
//! (`index.jsonl` plus one WAV per item).

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_wav, write_wav, AudioSignal};
use crate::dsp::{NoiseClip, RoomImpulseResponse};
use crate::error::{Error, Result};
use crate::{rng, util, Real};

#[derive(Clone, Debug, Default)]
pub struct AugmentationPools<T> {
    pub rirs: Vec<RoomImpulseResponse<T>>,
    pub noises: Vec<NoiseClip<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RirPoolSpec {
    pub rooms: usize,
    pub positions_per_room: usize,
    pub rt60_min_s: f64,
    pub rt60_max_s: f64,
}

impl Default for RirPoolSpec {
    fn default() -> Self {
        Self {
            rooms: 8,
            positions_per_room: 3,
            rt60_min_s: 0.2,
            rt60_max_s: 0.8,
        }
    }
}

/// Exponentially decaying seeded-noise impulse responses. The direct path sits at
/// index 0 so reverberated audio stays aligned with its frame labels; positions in
/// a room share the RT60 and differ in tail realization and direct-to-reverberant
/// ratio.
pub fn synthesize_rir_pool<T: Real>(
    spec: &RirPoolSpec,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<RoomImpulseResponse<T>>> {
    if spec.rooms == 0 || spec.positions_per_room == 0 {
        return Err(Error::InvalidArgument(
            "RIR pool needs at least one room and position".into(),
        ));
    }
    if !(spec.rt60_min_s > 0.0 && spec.rt60_min_s <= spec.rt60_max_s) {
        return Err(Error::InvalidArgument("bad RT60 range".into()));
    }
    let fs = sample_rate as f64;
    let mut out = Vec::with_capacity(spec.rooms * spec.positions_per_room);
    for room in 0..spec.rooms {
        let room_id = format!("room{room:02}");
        let mut rr = rng::stream(seed, &["rir", &room_id]);
        let rt60 = rr.random_range(spec.rt60_min_s..=spec.rt60_max_s);
        let len = (rt60 * fs).ceil() as usize;
        for pos in 0..spec.positions_per_room {
            let position_id = format!("pos{pos}");
            let mut r = rng::stream(seed, &["rir", &room_id, &position_id]);
            let drr_db: f64 = r.random_range(-3.0..9.0);
            let mut tail: Vec<f64> = (0..len)
                .map(|n| {
                    let t = n as f64 / fs;
                    let g: f64 = StandardNormal.sample(&mut r);
                    g * 10f64.powf(-3.0 * t / rt60)
                })
                .collect();
            tail[0] = 0.0;
            let tail_energy: f64 = tail.iter().map(|v| v * v).sum();
            let tail_gain = (10f64.powf(-drr_db / 10.0) / tail_energy).sqrt();
            let mut h: Vec<f64> = tail.iter().map(|v| v * tail_gain).collect();
            h[0] = 1.0;
            let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            out.push(RoomImpulseResponse::new(
                h.iter().map(|v| T::lit(v / peak)).collect(),
                sample_rate,
                room_id.clone(),
                position_id,
            )?);
        }
    }
    Ok(out)
}

/// A small set of stationary and modulated noise types, `seconds` long each.
pub fn synthesize_noise_pool<T: Real>(
    sample_rate: u32,
    seconds: f64,
    seed: u64,
) -> Result<Vec<NoiseClip<T>>> {
    let fs = sample_rate as f64;
    let len = (seconds * fs).round() as usize;
    if len == 0 {
        return Err(Error::InvalidArgument(
            "noise clips must be non-empty".into(),
        ));
    }
    let kinds = ["white", "pink", "brown", "hum", "babble"];
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut r = rng::stream(seed, &["noise", kind]);
        let mut x: Vec<f64> = match kind {
            "white" => (0..len).map(|_| StandardNormal.sample(&mut r)).collect(),
            "pink" => {
                // Paul Kellet's economy pink filter
                let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
                (0..len)
                    .map(|_| {
                        let w: f64 = StandardNormal.sample(&mut r);
                        b0 = 0.99765 * b0 + w * 0.0990460;
                        b1 = 0.96300 * b1 + w * 0.2965164;
                        b2 = 0.57000 * b2 + w * 1.0526913;
                        b0 + b1 + b2 + w * 0.1848
                    })
                    .collect()
            }
            "brown" => {
                let mut acc = 0.0;
                (0..len)
                    .map(|_| {
                        let w: f64 = StandardNormal.sample(&mut r);
                        acc = 0.995 * acc + w;
                        acc
                    })
                    .collect()
            }
            "hum" => {
                let f0 = r.random_range(48.0..62.0);
                (0..len)
                    .map(|n| {
                        let t = n as f64 / fs;
                        let w: f64 = StandardNormal.sample(&mut r);
                        (1..=5)
                            .map(|k| (2.0 * PI * f0 * k as f64 * t).sin() / k as f64)
                            .sum::<f64>()
                            + 0.05 * w
                    })
                    .collect()
            }
            _ => {
                let voices: Vec<(f64, f64, f64)> = (0..12)
                    .map(|_| {
                        (
                            r.random_range(150.0..3000.0),
                            r.random_range(2.0..7.0),
                            r.random_range(0.0..2.0 * PI),
                        )
                    })
                    .collect();
                (0..len)
                    .map(|n| {
                        let t = n as f64 / fs;
                        let w: f64 = StandardNormal.sample(&mut r);
                        voices
                            .iter()
                            .map(|&(f, am, ph)| {
                                (2.0 * PI * f * t).sin()
                                    * (0.5 + 0.5 * (2.0 * PI * am * t + ph).sin())
                            })
                            .sum::<f64>()
                            + 0.2 * w
                    })
                    .collect()
            }
        };
        let mean = x.iter().sum::<f64>() / len as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        out.push(NoiseClip::new(
            x.iter().map(|v| T::lit(0.5 * v / peak)).collect(),
            sample_rate,
            kind,
        )?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct RirIndexRecord {
    file: String,
    room: String,
    position: String,
}

#[derive(Serialize, Deserialize)]
struct NoiseIndexRecord {
    file: String,
    label: String,
}

pub fn save_rir_pool<T: Real>(rirs: &[RoomImpulseResponse<T>], dir: &Path) -> Result<()> {
    let mut index = String::new();
    for (i, h) in rirs.iter().enumerate() {
        let file = format!("rir_{i:04}.wav");
        write_wav(
            &dir.join(&file),
            &AudioSignal::new(h.samples.clone(), h.sample_rate)?,
        )?;
        let rec = RirIndexRecord {
            file,
            room: h.room_id.clone(),
            position: h.position_id.clone(),
        };
        index.push_str(&serde_json::to_string(&rec).expect("serializable"));
        index.push('\n');
    }
    util::write_atomic(&dir.join("index.jsonl"), index.as_bytes())
}

pub fn load_rir_pool<T: Real>(dir: &Path) -> Result<Vec<RoomImpulseResponse<T>>> {
    read_index::<RirIndexRecord>(dir)?
        .into_iter()
        .map(|rec| {
            let a: AudioSignal<T> = read_wav(&dir.join(&rec.file))?;
            let rate = a.sample_rate();
            RoomImpulseResponse::new(a.into_samples(), rate, rec.room, rec.position)
        })
        .collect()
}

pub fn save_noise_pool<T: Real>(noises: &[NoiseClip<T>], dir: &Path) -> Result<()> {
    let mut index = String::new();
    for (i, w) in noises.iter().enumerate() {
        let file = format!("noise_{i:04}.wav");
        write_wav(
            &dir.join(&file),
            &AudioSignal::new(w.samples.clone(), w.sample_rate)?,
        )?;
        let rec = NoiseIndexRecord {
            file,
            label: w.label.clone(),
        };
        index.push_str(&serde_json::to_string(&rec).expect("serializable"));
        index.push('\n');
    }
    util::write_atomic(&dir.join("index.jsonl"), index.as_bytes())
}

pub fn load_noise_pool<T: Real>(dir: &Path) -> Result<Vec<NoiseClip<T>>> {
    read_index::<NoiseIndexRecord>(dir)?
        .into_iter()
        .map(|rec| {
            let a: AudioSignal<T> = read_wav(&dir.join(&rec.file))?;
            let rate = a.sample_rate();
            NoiseClip::new(a.into_samples(), rate, rec.label)
        })
        .collect()
}

fn read_index<R: serde::de::DeserializeOwned>(dir: &Path) -> Result<Vec<R>> {
    let path = dir.join("index.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                path: path.clone(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rir_pool_shape_and_determinism() {
        let spec = RirPoolSpec {
            rooms: 2,
            positions_per_room: 2,
            ..Default::default()
        };
        let a: Vec<RoomImpulseResponse<f64>> = synthesize_rir_pool(&spec, 16000, 4).unwrap();
        let b: Vec<RoomImpulseResponse<f64>> = synthesize_rir_pool(&spec, 16000, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a[0].room_id, a[1].room_id);
        assert_ne!(a[0].position_id, a[1].position_id);
        assert_eq!(a[0].samples.len(), a[1].samples.len());
        assert_eq!(a[0].samples[0], 1.0);
        for h in &a {
            let len_s = h.samples.len() as f64 / 16000.0;
            assert!((0.2..=0.81).contains(&len_s));
        }
    }

    #[test]
    fn pools_roundtrip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let spec = RirPoolSpec {
            rooms: 1,
            positions_per_room: 2,
            ..Default::default()
        };
        let rirs: Vec<RoomImpulseResponse<f64>> = synthesize_rir_pool(&spec, 16000, 1).unwrap();
        save_rir_pool(&rirs, dir.path()).unwrap();
        let back: Vec<RoomImpulseResponse<f64>> = load_rir_pool(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].position_id, "pos1");
        let ndir = dir.path().join("noise");
        let noises: Vec<NoiseClip<f64>> = synthesize_noise_pool(16000, 0.5, 1).unwrap();
        save_noise_pool(&noises, &ndir).unwrap();
        let nb: Vec<NoiseClip<f64>> = load_noise_pool(&ndir).unwrap();
        assert_eq!(
            nb.iter().map(|n| n.label.as_str()).collect::<Vec<_>>(),
            ["white", "pink", "brown", "hum", "babble"]
        );
        assert!(nb.iter().all(|n| n.samples.len() == 8000));
    }
}
