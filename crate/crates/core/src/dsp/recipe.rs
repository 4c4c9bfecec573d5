use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_wav, AudioSignal, FrameGeometry, LabelTrack, Manifest, Utterance};
use crate::dsp::mix::{fit_noise, mix_at_snr, reverberant_mixture};
use crate::dsp::{augment_eq2, speed_perturb, AugmentationPools, NoiseClip, RoomImpulseResponse};
use crate::error::{Error, Result};
use crate::{rng, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrRange {
    pub low_db: f64,
    pub high_db: f64,
}

impl SnrRange {
    pub fn new(low_db: f64, high_db: f64) -> Result<Self> {
        let r = Self { low_db, high_db };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low_db.is_finite() && self.high_db.is_finite() && self.low_db <= self.high_db) {
            return Err(Error::InvalidArgument(format!(
                "bad SNR range [{}, {}]",
                self.low_db, self.high_db
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, r: &mut R) -> f64 {
        if self.low_db == self.high_db {
            self.low_db
        } else {
            r.random_range(self.low_db..=self.high_db)
        }
    }

    pub fn contains(&self, db: f64) -> bool {
        db >= self.low_db && db <= self.high_db
    }
}

/// One augmented copy of every utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopySpec {
    pub reverb: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<SnrRange>,
    /// Restricts impulse responses to these rooms; empty means the whole pool.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rooms: Vec<String>,
    /// Restricts noise clips to these labels; empty means the whole pool.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise_labels: Vec<String>,
}

impl CopySpec {
    pub fn reverb_only() -> Self {
        Self {
            reverb: true,
            noise: None,
            rooms: vec![],
            noise_labels: vec![],
        }
    }

    pub fn reverb_noise(low_db: f64, high_db: f64) -> Self {
        Self {
            reverb: true,
            noise: Some(SnrRange { low_db, high_db }),
            rooms: vec![],
            noise_labels: vec![],
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecipe {
    #[serde(default)]
    pub copies: Vec<CopySpec>,
    #[serde(default)]
    pub speed_factors: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Apply speed perturbation before reverb/noise (true) or after.
    #[serde(default = "default_true")]
    pub speed_first: bool,
}

impl Default for AugmentationRecipe {
    fn default() -> Self {
        Self {
            copies: vec![],
            speed_factors: vec![],
            seed: 0,
            speed_first: true,
        }
    }
}

impl AugmentationRecipe {
    /// Two reverberant noisy copies at 5-10 dB and 10-20 dB.
    pub fn source_language(seed: u64) -> Self {
        Self {
            copies: vec![
                CopySpec::reverb_noise(5.0, 10.0),
                CopySpec::reverb_noise(10.0, 20.0),
            ],
            seed,
            ..Self::default()
        }
    }

    /// One reverberation-only copy and one reverberant noisy copy at 10-20 dB.
    pub fn target_language(seed: u64) -> Self {
        Self {
            copies: vec![CopySpec::reverb_only(), CopySpec::reverb_noise(10.0, 20.0)],
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.speed_factors {
            if !(*f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "speed factor {f} must be positive"
                )));
            }
        }
        for c in &self.copies {
            if let Some(s) = &c.noise {
                s.validate()?;
            }
        }
        Ok(())
    }

    /// Output entries per input utterance, the clean original included.
    pub fn expansion(&self) -> usize {
        (1 + self.copies.len()) * (1 + self.speed_factors.len())
    }

    pub fn is_identity(&self) -> bool {
        self.copies.is_empty() && self.speed_factors.is_empty()
    }
}

/// Relabels a track for audio sped up by `factor`: output frame `t` takes the label
/// of the input frame whose center is nearest to `factor` times its own center.
pub fn remap_labels(
    track: &LabelTrack,
    factor: f64,
    out_len: usize,
    geom: FrameGeometry,
) -> Result<LabelTrack> {
    if track.is_empty() {
        return Err(Error::Label("cannot remap an empty label track".into()));
    }
    let n_out = geom.frame_count(out_len).unwrap_or(0);
    let half = geom.window as f64 / 2.0;
    let last = track.len() - 1;
    Ok(LabelTrack(
        (0..n_out)
            .map(|t| {
                let pos = factor * geom.center(t) as f64;
                let src = ((pos - half) / geom.shift as f64).round().max(0.0) as usize;
                track.0[src.min(last)].clone()
            })
            .collect(),
    ))
}

/// Expands a manifest by every (copy, speed factor) combination. Originals come
/// first and untouched; each augmented entry's draws depend only on
/// `(recipe.seed, utterance id, copy index, speed index)`. Audio and remapped label
/// tracks go under `out_dir`.
pub fn apply_recipe<T: Real>(
    m: &Manifest,
    recipe: &AugmentationRecipe,
    pools: &AugmentationPools<T>,
    out_dir: &Path,
    geom: FrameGeometry,
) -> Result<Manifest> {
    recipe.validate()?;
    if recipe.copies.iter().any(|c| c.reverb) && pools.rirs.is_empty() {
        return Err(Error::EmptyPool("room impulse responses"));
    }
    if recipe.copies.iter().any(|c| c.noise.is_some()) && pools.noises.is_empty() {
        return Err(Error::EmptyPool("noise clips"));
    }
    let augmented: Vec<Vec<Utterance>> = m
        .entries
        .par_iter()
        .map(|u| augment_utterance(u, recipe, pools, out_dir, geom))
        .collect::<Result<_>>()?;
    let mut entries = m.entries.clone();
    entries.extend(augmented.into_iter().flatten());
    Manifest::new(format!("{}-aug", m.name), entries)
}

fn augment_utterance<T: Real>(
    u: &Utterance,
    recipe: &AugmentationRecipe,
    pools: &AugmentationPools<T>,
    out_dir: &Path,
    geom: FrameGeometry,
) -> Result<Vec<Utterance>> {
    if recipe.is_identity() {
        return Ok(vec![]);
    }
    let clean: AudioSignal<T> = u.load_audio()?;
    let labels = u.labels.as_ref().map(|_| u.load_labels()).transpose()?;
    let mut out = Vec::with_capacity(recipe.expansion() - 1);
    let speeds: Vec<Option<f64>> = std::iter::once(None)
        .chain(recipe.speed_factors.iter().copied().map(Some))
        .collect();
    let copies: Vec<Option<(usize, &CopySpec)>> = std::iter::once(None)
        .chain(recipe.copies.iter().enumerate().map(Some))
        .collect();
    for (si, speed) in speeds.iter().enumerate() {
        for copy in &copies {
            if speed.is_none() && copy.is_none() {
                continue;
            }
            let ci = copy.map_or(0, |(i, _)| i + 1);
            let mut r = rng::stream(
                recipe.seed,
                &["recipe", &u.id, &ci.to_string(), &si.to_string()],
            );
            let mut x = clean.clone();
            let mut suffix = String::new();
            if let (Some(f), true) = (speed, recipe.speed_first) {
                x = speed_perturb(&x, *f)?;
            }
            if let Some((i, spec)) = copy {
                x = apply_copy(&x, spec, pools, &mut r)?;
                suffix.push_str(&format!("-c{}", i + 1));
            }
            if let (Some(f), false) = (speed, recipe.speed_first) {
                x = speed_perturb(&x, *f)?;
            }
            if let Some(f) = speed {
                suffix.push_str(&format!("-sp{f}"));
            }
            let id = format!("{}{}", u.id, suffix);
            let audio = out_dir.join("wav").join(format!("{id}.wav"));
            write_wav(&audio, &x)?;
            let label_path = match (&labels, speed) {
                (Some(track), Some(f)) => {
                    let p = out_dir.join("labels").join(format!("{id}.lab"));
                    remap_labels(track, *f, x.len(), geom)?.write(&p)?;
                    Some(p)
                }
                _ => u.labels.clone(),
            };
            out.push(Utterance {
                id,
                audio,
                duration_s: x.duration_s(),
                speaker: u.speaker.clone(),
                language: u.language.clone(),
                transcript: u.transcript.clone(),
                labels: label_path,
            });
        }
    }
    Ok(out)
}

fn apply_copy<T: Real, R: Rng>(
    x: &AudioSignal<T>,
    spec: &CopySpec,
    pools: &AugmentationPools<T>,
    r: &mut R,
) -> Result<AudioSignal<T>> {
    match (&spec.noise, spec.reverb) {
        (None, false) => Ok(x.clone()),
        (None, true) => {
            let rirs = candidate_rirs(pools, spec);
            if rirs.is_empty() {
                return Err(Error::EmptyPool("room impulse responses"));
            }
            augment_eq2(x, rirs[r.random_range(0..rirs.len())])
        }
        (Some(snr), reverb) => {
            let noises: Vec<&NoiseClip<T>> = pools
                .noises
                .iter()
                .filter(|n| spec.noise_labels.is_empty() || spec.noise_labels.contains(&n.label))
                .collect();
            if noises.is_empty() {
                return Err(Error::EmptyPool("noise clips"));
            }
            let w = noises[r.random_range(0..noises.len())];
            let offset = r.random_range(0..w.samples.len());
            let target = T::lit(snr.sample(r));
            if reverb {
                let (h, h_tilde) = draw_position_pair(&candidate_rirs(pools, spec), r)?;
                Ok(reverberant_mixture(x, h, w, h_tilde, offset, target)?.signal)
            } else {
                let noise =
                    AudioSignal::new(fit_noise(&w.samples, x.len(), offset), w.sample_rate)?;
                Ok(mix_at_snr(x, &noise, target)?.signal)
            }
        }
    }
}

fn candidate_rirs<'a, T>(
    pools: &'a AugmentationPools<T>,
    spec: &CopySpec,
) -> Vec<&'a RoomImpulseResponse<T>> {
    pools
        .rirs
        .iter()
        .filter(|h| spec.rooms.is_empty() || spec.rooms.contains(&h.room_id))
        .collect()
}

/// Two impulse responses from one room at distinct positions.
fn draw_position_pair<'a, T, R: Rng>(
    rirs: &[&'a RoomImpulseResponse<T>],
    r: &mut R,
) -> Result<(&'a RoomImpulseResponse<T>, &'a RoomImpulseResponse<T>)> {
    let mut rooms: Vec<&str> = rirs.iter().map(|h| h.room_id.as_str()).collect();
    rooms.sort_unstable();
    rooms.dedup();
    let rooms: Vec<&str> = rooms
        .into_iter()
        .filter(|room| rirs.iter().filter(|h| h.room_id == *room).count() >= 2)
        .collect();
    if rooms.is_empty() {
        return Err(Error::EmptyPool("rooms with at least two positions"));
    }
    let room = rooms[r.random_range(0..rooms.len())];
    let members: Vec<&RoomImpulseResponse<T>> =
        rirs.iter().copied().filter(|h| h.room_id == room).collect();
    let a = r.random_range(0..members.len());
    let mut b = r.random_range(0..members.len() - 1);
    if b >= a {
        b += 1;
    }
    Ok((members[a], members[b]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_counts() {
        assert_eq!(AugmentationRecipe::source_language(0).expansion(), 3);
        let sp = AugmentationRecipe {
            speed_factors: vec![0.9, 1.1],
            ..Default::default()
        };
        assert_eq!(sp.expansion(), 3);
    }

    #[test]
    fn remap_identity_and_stretch() {
        let g = FrameGeometry::default();
        let track = LabelTrack((0..10).map(|i| format!("p{i}")).collect());
        let len = 400 + 9 * 160;
        assert_eq!(remap_labels(&track, 1.0, len, g).unwrap(), track);
        let slow = remap_labels(&track, 0.5, 400 + 19 * 160, g).unwrap();
        assert_eq!(slow.len(), 20);
        assert_eq!(slow.0.first().unwrap(), "p0");
        assert_eq!(slow.0.last().unwrap(), "p9");
    }

    #[test]
    fn bad_recipes_rejected() {
        let r = AugmentationRecipe {
            speed_factors: vec![0.0],
            ..Default::default()
        };
        assert!(r.validate().is_err());
        assert!(SnrRange::new(10.0, 5.0).is_err());
    }
}
