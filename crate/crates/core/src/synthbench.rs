//! Deterministic synthetic speech-like corpora for two related "languages".
//!
//! Phones are short sums of sinusoids with an attack/release envelope, words are
//! fixed phone strings, and utterances are words separated by silence. Speakers
//! differ by spectral tilt. A target condition adds a tilt offset, room
//! reverberation and noise on top of the rendered audio.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    save_manifest, write_wav, AudioSignal, FrameGeometry, LabelTrack, Manifest, Utterance,
    SAMPLE_RATE,
};
use crate::dsp::{self, NoiseClip, RirPoolSpec, RoomImpulseResponse, SnrRange};
use crate::error::{Error, Result};
use crate::rng;

pub const SILENCE: &str = "sil";

/// Reference frequency for spectral tilt; tilt gain is 0 dB here.
const TILT_REFERENCE_HZ: f64 = 1000.0;
/// Level of the noise floor mixed into every rendered phone, relative to full scale.
const NOISE_FLOOR: f64 = 1e-4;
const PHONE_LEVEL: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhonePrototype {
    pub symbol: String,
    pub freqs_hz: Vec<f64>,
    pub amps: Vec<f64>,
    pub duration_ms: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhoneInventory {
    /// Silence first, then the speech phones.
    pub phones: Vec<PhonePrototype>,
}

impl PhoneInventory {
    pub fn new(phones: Vec<PhonePrototype>) -> Result<Self> {
        if phones.len() < 2 {
            return Err(Error::InvalidArgument(
                "inventory needs at least two phones".into(),
            ));
        }
        if phones[0].symbol != SILENCE {
            return Err(Error::InvalidArgument(format!(
                "first phone must be `{SILENCE}`"
            )));
        }
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        let mut seen = HashSet::new();
        for p in &phones {
            if !seen.insert(p.symbol.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate phone `{}`",
                    p.symbol
                )));
            }
            if p.freqs_hz.iter().any(|&f| !(f > 0.0 && f < nyquist)) {
                return Err(Error::InvalidArgument(format!(
                    "phone `{}` has a frequency outside (0, Nyquist)",
                    p.symbol
                )));
            }
            if p.freqs_hz.len() != p.amps.len() || !(p.duration_ms > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "phone `{}` is malformed",
                    p.symbol
                )));
            }
        }
        Ok(Self { phones })
    }

    pub fn symbols(&self) -> Vec<String> {
        self.phones.iter().map(|p| p.symbol.clone()).collect()
    }

    pub fn get(&self, symbol: &str) -> Option<&PhonePrototype> {
        self.phones.iter().find(|p| p.symbol == symbol)
    }

    /// Speech phones only.
    pub fn speech_phones(&self) -> &[PhonePrototype] {
        &self.phones[1..]
    }
}

/// A pool of speech phone prototypes from which related languages draw inventories.
pub fn phone_universe(count: usize, seed: u64) -> Vec<PhonePrototype> {
    let mut r = rng::stream(seed, &["universe"]);
    let mut out: Vec<PhonePrototype> = Vec::with_capacity(count);
    while out.len() < count {
        let n_partials = r.random_range(2..=3);
        let mut freqs = vec![r.random_range(250.0..900.0), r.random_range(950.0..2500.0)];
        let mut amps = vec![1.0, r.random_range(0.3..0.9)];
        if n_partials == 3 {
            freqs.push(r.random_range(2600.0..3900.0));
            amps.push(r.random_range(0.1..0.5));
        }
        let clash = out.iter().any(|p| {
            (p.freqs_hz[0] - freqs[0]).abs() < 90.0 && (p.freqs_hz[1] - freqs[1]).abs() < 180.0
        });
        if clash {
            continue;
        }
        let duration_ms = r.random_range(50.0..110.0);
        out.push(PhonePrototype {
            symbol: format!("p{:02}", out.len()),
            freqs_hz: freqs,
            amps,
            duration_ms,
            attack_ms: r.random_range(5.0..15.0),
            release_ms: r.random_range(5.0..15.0),
        });
    }
    out
}

pub fn silence_prototype() -> PhonePrototype {
    PhonePrototype {
        symbol: SILENCE.into(),
        freqs_hz: vec![],
        amps: vec![],
        duration_ms: 100.0,
        attack_ms: 0.0,
        release_ms: 0.0,
    }
}

/// Inventory made of silence plus the universe phones at `indices`.
pub fn inventory_from_universe(
    universe: &[PhonePrototype],
    indices: impl IntoIterator<Item = usize>,
) -> Result<PhoneInventory> {
    let mut phones = vec![silence_prototype()];
    for i in indices {
        phones.push(
            universe
                .get(i)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("universe has no phone {i}")))?,
        );
    }
    PhoneInventory::new(phones)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthLanguageSpec {
    pub language: String,
    pub inventory: PhoneInventory,
    /// Inclusive phones-per-word range.
    pub word_length_range: (usize, usize),
    /// Inclusive words-per-utterance range.
    pub utterance_length_range: (usize, usize),
    pub vocabulary_size: usize,
    pub speaker_count: usize,
    /// Speakers draw their spectral tilt (dB/octave) uniformly from this range.
    pub tilt_range_db: (f64, f64),
    /// Speakers scale all phone frequencies by a factor drawn uniformly from this range.
    #[serde(default = "unit_warp")]
    pub warp_range: (f64, f64),
    pub seed: u64,
}

fn unit_warp() -> (f64, f64) {
    (1.0, 1.0)
}

/// Per-speaker voice parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Voice {
    pub tilt_db: f64,
    pub warp: f64,
}

impl Default for Voice {
    fn default() -> Self {
        Self {
            tilt_db: 0.0,
            warp: 1.0,
        }
    }
}

impl SynthLanguageSpec {
    pub fn validate(&self) -> Result<()> {
        let (wl, wh) = self.word_length_range;
        let (ul, uh) = self.utterance_length_range;
        if wl == 0 || wl > wh || ul == 0 || ul > uh {
            return Err(Error::InvalidArgument(
                "length ranges must be non-empty and positive".into(),
            ));
        }
        if self.speaker_count < 2 {
            return Err(Error::InvalidArgument("need at least two speakers".into()));
        }
        if self.vocabulary_size == 0 {
            return Err(Error::InvalidArgument(
                "vocabulary must be non-empty".into(),
            ));
        }
        if self.inventory.speech_phones().len() < 2 && wh > 1 {
            return Err(Error::InvalidArgument(
                "multi-phone words need at least two speech phones".into(),
            ));
        }
        if self.tilt_range_db.0 > self.tilt_range_db.1 {
            return Err(Error::InvalidArgument("bad tilt range".into()));
        }
        let (wl, wh) = self.warp_range;
        if !(wl > 0.0 && wl <= wh && wh * 3900.0 < 0.45 * SAMPLE_RATE as f64) {
            return Err(Error::InvalidArgument("bad warp range".into()));
        }
        Ok(())
    }

    /// Word list; each word is a phone string with no immediate repeats, and its
    /// token is the phones joined by `_`.
    pub fn vocabulary(&self) -> Vec<Vec<String>> {
        let mut r = rng::stream(self.seed, &[&self.language, "vocabulary"]);
        let phones = self.inventory.speech_phones();
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(self.vocabulary_size);
        let mut attempts = 0;
        while out.len() < self.vocabulary_size && attempts < self.vocabulary_size * 100 {
            attempts += 1;
            let n = r.random_range(self.word_length_range.0..=self.word_length_range.1);
            let mut word: Vec<String> = Vec::with_capacity(n);
            while word.len() < n {
                let p = &phones[r.random_range(0..phones.len())].symbol;
                if word.last() != Some(p) {
                    word.push(p.clone());
                }
            }
            if seen.insert(word.join("_")) {
                out.push(word);
            }
        }
        out
    }
}

pub fn word_token(phones: &[String]) -> String {
    phones.join("_")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainShiftSpec {
    pub rirs: RirPoolSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_range_db: Option<SnrRange>,
    pub tilt_offset_db: f64,
}

/// Renders one phone in the given speaker voice.
pub fn render_phone(
    inventory: &PhoneInventory,
    phone: &str,
    voice: Voice,
    seed: u64,
) -> Result<AudioSignal<f64>> {
    let proto = inventory
        .get(phone)
        .ok_or_else(|| Error::UnknownPhone(phone.into()))?;
    let mut r = rng::stream(seed, &["phone", phone]);
    Ok(AudioSignal::new(
        render_prototype(proto, voice, &mut r),
        SAMPLE_RATE,
    )?)
}

fn render_prototype<R: Rng>(p: &PhonePrototype, voice: Voice, r: &mut R) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let jitter = r.random_range(0.8..1.2);
    let len = ((p.duration_ms * jitter / 1000.0) * fs).round().max(1.0) as usize;
    let noise =
        |r: &mut R| -> f64 { NOISE_FLOOR * Distribution::<f64>::sample(&StandardNormal, r) };
    if p.freqs_hz.is_empty() {
        return (0..len).map(|_| noise(r)).collect();
    }
    let freqs: Vec<f64> = p.freqs_hz.iter().map(|f| f * voice.warp).collect();
    let gains: Vec<f64> = freqs
        .iter()
        .zip(&p.amps)
        .map(|(&f, &a)| a * 10f64.powf(voice.tilt_db * (f / TILT_REFERENCE_HZ).log2() / 20.0))
        .collect();
    let norm = PHONE_LEVEL / gains.iter().sum::<f64>();
    let phases: Vec<f64> = p
        .freqs_hz
        .iter()
        .map(|_| r.random_range(0.0..2.0 * PI))
        .collect();
    let attack = (p.attack_ms / 1000.0 * fs).max(1.0);
    let release = (p.release_ms / 1000.0 * fs).max(1.0);
    (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            let env = (n as f64 / attack).min(1.0).min((len - n) as f64 / release);
            let tone: f64 = freqs
                .iter()
                .zip(&gains)
                .zip(&phases)
                .map(|((&f, &g), &ph)| g * (2.0 * PI * f * t + ph).sin())
                .sum();
            norm * env * tone + noise(r)
        })
        .collect()
}

/// In-memory result of synthesizing one utterance.
#[derive(Clone, Debug)]
pub struct SynthUtterance {
    pub id: String,
    pub speaker: String,
    pub words: Vec<String>,
    pub audio: AudioSignal<f64>,
    pub labels: LabelTrack,
    /// Reverberant speech and scaled reverberant noise when a shift with noise was applied.
    pub shift_components: Option<(AudioSignal<f64>, AudioSignal<f64>)>,
}

/// Shared state for rendering a corpus of one language.
pub struct CorpusSynth<'a> {
    spec: &'a SynthLanguageSpec,
    shift: Option<&'a DomainShiftSpec>,
    seed: u64,
    vocabulary: Vec<Vec<String>>,
    voices: Vec<Voice>,
    rirs: Vec<RoomImpulseResponse<f64>>,
    noises: Vec<NoiseClip<f64>>,
    geom: FrameGeometry,
}

impl<'a> CorpusSynth<'a> {
    pub fn new(
        spec: &'a SynthLanguageSpec,
        shift: Option<&'a DomainShiftSpec>,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let voices = (0..spec.speaker_count)
            .map(|j| {
                let mut r = rng::stream(
                    spec.seed,
                    &[&spec.language, "speaker", &seed.to_string(), &j.to_string()],
                );
                let mut draw = |(lo, hi): (f64, f64)| {
                    if lo == hi {
                        lo
                    } else {
                        r.random_range(lo..=hi)
                    }
                };
                let tilt_db = draw(spec.tilt_range_db) + shift.map_or(0.0, |s| s.tilt_offset_db);
                Voice {
                    tilt_db,
                    warp: draw(spec.warp_range),
                }
            })
            .collect();
        let (rirs, noises) = match shift {
            Some(s) => (
                dsp::synthesize_rir_pool(
                    &s.rirs,
                    SAMPLE_RATE,
                    rng::derive_seed(seed, &["shift-rir"]),
                )?,
                match s.snr_range_db {
                    Some(range) => {
                        range.validate()?;
                        dsp::synthesize_noise_pool(
                            SAMPLE_RATE,
                            4.0,
                            rng::derive_seed(seed, &["shift-noise"]),
                        )?
                    }
                    None => vec![],
                },
            ),
            None => (vec![], vec![]),
        };
        Ok(Self {
            spec,
            shift,
            seed,
            vocabulary: spec.vocabulary(),
            voices,
            rirs,
            noises,
            geom: FrameGeometry::default(),
        })
    }

    pub fn speaker_id(&self, j: usize) -> String {
        format!("{}-c{}-spk{j:02}", self.spec.language, self.seed)
    }

    /// Renders utterance `index`, optionally forcing its word count.
    pub fn utterance(&self, index: usize, words_override: Option<usize>) -> Result<SynthUtterance> {
        let id = format!("{}-c{}-u{index:05}", self.spec.language, self.seed);
        let mut r = rng::stream(
            self.spec.seed,
            &[
                &self.spec.language,
                "utt",
                &self.seed.to_string(),
                &index.to_string(),
            ],
        );
        let speaker = index % self.spec.speaker_count;
        let voice = self.voices[speaker];
        let (ul, uh) = self.spec.utterance_length_range;
        let drawn = r.random_range(ul..=uh);
        let n_words = words_override.unwrap_or(drawn).max(1);
        let fs = SAMPLE_RATE as f64;
        let sil = self
            .spec
            .inventory
            .get(SILENCE)
            .expect("validated inventory");
        let mut samples: Vec<f64> = Vec::new();
        // (end sample, phone) per rendered segment
        let mut seg: Vec<(usize, String)> = Vec::new();
        let push =
            |samples: &mut Vec<f64>, seg: &mut Vec<(usize, String)>, x: Vec<f64>, sym: &str| {
                samples.extend_from_slice(&x);
                seg.push((samples.len(), sym.to_string()));
            };
        let lead = (r.random_range(0.15..0.3) * fs) as usize;
        push(&mut samples, &mut seg, silence(lead, &mut r), SILENCE);
        let mut words = Vec::with_capacity(n_words);
        for w in 0..n_words {
            let word = &self.vocabulary[r.random_range(0..self.vocabulary.len())];
            for ph in word {
                let proto = self
                    .spec
                    .inventory
                    .get(ph)
                    .expect("vocabulary uses inventory phones");
                let x = render_prototype(proto, voice, &mut r);
                push(&mut samples, &mut seg, x, &proto.symbol);
            }
            words.push(word_token(word));
            let gap = if w + 1 == n_words {
                r.random_range(0.15..0.3)
            } else {
                r.random_range(0.05..0.12)
            };
            push(
                &mut samples,
                &mut seg,
                silence((gap * fs) as usize, &mut r),
                &sil.symbol,
            );
        }
        let labels = frame_labels(&seg, samples.len(), self.geom);
        let clean = AudioSignal::new(samples, SAMPLE_RATE)?;
        let (audio, shift_components) = self.apply_shift(&id, clean)?;
        Ok(SynthUtterance {
            id,
            speaker: self.speaker_id(speaker),
            words,
            audio,
            labels,
            shift_components,
        })
    }

    fn apply_shift(
        &self,
        id: &str,
        clean: AudioSignal<f64>,
    ) -> Result<(
        AudioSignal<f64>,
        Option<(AudioSignal<f64>, AudioSignal<f64>)>,
    )> {
        let Some(shift) = self.shift else {
            return Ok((clean.peak_limited(), None));
        };
        let mut r = rng::stream(self.seed, &["shift", id]);
        let h = &self.rirs[r.random_range(0..self.rirs.len())];
        let Some(range) = shift.snr_range_db else {
            return Ok((dsp::augment_eq2(&clean, h)?, None));
        };
        let same_room: Vec<&RoomImpulseResponse<f64>> = self
            .rirs
            .iter()
            .filter(|o| o.room_id == h.room_id)
            .collect();
        let h_tilde = same_room
            .iter()
            .copied()
            .find(|o| o.position_id != h.position_id)
            .unwrap_or(h);
        let w = &self.noises[r.random_range(0..self.noises.len())];
        let offset = r.random_range(0..w.samples.len());
        let snr = range.sample(&mut r);
        let speech = dsp::convolve(&clean, h)?;
        let noise_raw =
            AudioSignal::new(dsp::fit_noise(&w.samples, clean.len(), offset), SAMPLE_RATE)?;
        let noise = dsp::convolve(&noise_raw, h_tilde)?;
        let mix = dsp::mix_at_snr(&speech, &noise, snr)?;
        Ok((mix.signal, Some((speech, noise.scaled(mix.gain)))))
    }
}

fn silence<R: Rng>(len: usize, r: &mut R) -> Vec<f64> {
    (0..len)
        .map(|_| NOISE_FLOOR * Distribution::<f64>::sample(&StandardNormal, r))
        .collect()
}

/// Frame labels from segment ends: frame `t` takes the phone covering its center sample.
fn frame_labels(seg: &[(usize, String)], len: usize, geom: FrameGeometry) -> LabelTrack {
    let n = geom.frame_count(len).unwrap_or(0);
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for t in 0..n {
        let c = geom.center(t);
        while k + 1 < seg.len() && seg[k].0 <= c {
            k += 1;
        }
        out.push(seg[k].1.clone());
    }
    LabelTrack(out)
}

/// Synthesizes a corpus of about `hours` of audio and writes WAVs, label tracks and
/// `manifest.jsonl` under `out_dir`.
pub fn generate_corpus(
    spec: &SynthLanguageSpec,
    hours: f64,
    shift: Option<&DomainShiftSpec>,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    if !(hours > 0.0) {
        return Err(Error::InvalidArgument(
            "corpus duration must be positive".into(),
        ));
    }
    let synth = CorpusSynth::new(spec, shift, seed)?;
    let plan = plan_corpus(&synth, hours * 3600.0)?;
    let entries: Vec<Utterance> = plan
        .par_iter()
        .map(|&(i, words)| {
            let u = synth.utterance(i, words)?;
            write_synth_utterance(&u, &spec.language, out_dir)
        })
        .collect::<Result<_>>()?;
    let m = Manifest::new(spec.language.clone(), entries)?;
    save_manifest(&m, &out_dir.join("manifest.jsonl"))?;
    Ok(m)
}

/// Utterance indices (and a forced word count for the last one) whose durations sum
/// to within 5% of `target_s`.
fn plan_corpus(synth: &CorpusSynth, target_s: f64) -> Result<Vec<(usize, Option<usize>)>> {
    let mut plan = Vec::new();
    let mut total = 0.0;
    let mut i = 0;
    loop {
        let d = synth.utterance(i, None)?.audio.duration_s();
        if total + d <= target_s {
            plan.push((i, None));
            total += d;
            i += 1;
            if total >= target_s * 0.995 {
                break;
            }
            continue;
        }
        // Last utterance: pick the word count that lands closest to the target.
        let (ul, uh) = synth.spec.utterance_length_range;
        let mut best: Option<(f64, usize)> = None;
        for n in 1..=uh.max(ul) {
            let dn = synth.utterance(i, Some(n))?.audio.duration_s();
            let err = (total + dn - target_s).abs();
            if best.is_none_or(|(e, _)| err < e) {
                best = Some((err, n));
            }
        }
        let (err, n) = best.expect("at least one word count");
        if err < (target_s - total).abs() || plan.is_empty() {
            plan.push((i, Some(n)));
            total += synth.utterance(i, Some(n))?.audio.duration_s();
        }
        break;
    }
    if (total - target_s).abs() > 0.05 * target_s {
        return Err(Error::InvalidArgument(format!(
            "cannot reach {target_s:.1} s within 5% with the configured lengths (got {total:.1} s)"
        )));
    }
    Ok(plan)
}

fn write_synth_utterance(u: &SynthUtterance, language: &str, out_dir: &Path) -> Result<Utterance> {
    let audio: PathBuf = out_dir.join("wav").join(format!("{}.wav", u.id));
    let labels: PathBuf = out_dir.join("labels").join(format!("{}.lab", u.id));
    write_wav(&audio, &u.audio)?;
    u.labels.write(&labels)?;
    Ok(Utterance {
        id: u.id.clone(),
        audio,
        duration_s: u.audio.duration_s(),
        speaker: u.speaker.clone(),
        language: language.into(),
        transcript: u.words.clone(),
        labels: Some(labels),
    })
}

/// Default pair of related languages: a 20-phone source language and a 16-phone
/// target language sharing silence and `shared` speech phones.
pub fn default_languages(seed: u64) -> Result<(SynthLanguageSpec, SynthLanguageSpec)> {
    language_pair(19, 15, 11, seed)
}

/// Builds two languages with `a_phones` and `b_phones` speech phones, of which
/// `shared` are common to both.
pub fn language_pair(
    a_phones: usize,
    b_phones: usize,
    shared: usize,
    seed: u64,
) -> Result<(SynthLanguageSpec, SynthLanguageSpec)> {
    if shared > a_phones || shared > b_phones {
        return Err(Error::InvalidArgument(
            "shared phones exceed an inventory".into(),
        ));
    }
    let universe = phone_universe(a_phones + b_phones - shared, seed);
    let a_idx = 0..a_phones;
    let b_idx = (a_phones - shared)..(a_phones - shared + b_phones);
    let base = |language: &str, inventory, s| SynthLanguageSpec {
        language: language.into(),
        inventory,
        word_length_range: (2, 4),
        utterance_length_range: (3, 8),
        vocabulary_size: 200,
        speaker_count: 12,
        tilt_range_db: (-6.0, 3.0),
        warp_range: (0.94, 1.06),
        seed: s,
    };
    Ok((
        base(
            "a",
            inventory_from_universe(&universe, a_idx)?,
            rng::derive_seed(seed, &["lang-a"]),
        ),
        base(
            "b",
            inventory_from_universe(&universe, b_idx)?,
            rng::derive_seed(seed, &["lang-b"]),
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn langs() -> (SynthLanguageSpec, SynthLanguageSpec) {
        default_languages(5).unwrap()
    }

    #[test]
    fn default_inventories_overlap_partially() {
        let (a, b) = langs();
        assert_eq!(a.inventory.phones.len(), 20);
        assert_eq!(b.inventory.phones.len(), 16);
        let sa: HashSet<String> = a.inventory.symbols().into_iter().collect();
        let shared = b
            .inventory
            .symbols()
            .into_iter()
            .filter(|s| sa.contains(s))
            .count();
        assert_eq!(shared, 12);
    }

    #[test]
    fn silence_is_quiet_and_rendering_deterministic() {
        let (a, _) = langs();
        let s = render_phone(&a.inventory, SILENCE, Voice::default(), 1).unwrap();
        assert!(s.rms() < 1e-3);
        let p = &a.inventory.speech_phones()[3].symbol;
        let voice = Voice {
            tilt_db: -3.0,
            warp: 1.1,
        };
        assert_eq!(
            render_phone(&a.inventory, p, voice, 7).unwrap(),
            render_phone(&a.inventory, p, voice, 7).unwrap()
        );
        assert!(
            render_phone(&a.inventory, p, Voice::default(), 1)
                .unwrap()
                .peak()
                <= 1.0
        );
        assert!(matches!(
            render_phone(&a.inventory, "zz", Voice::default(), 1),
            Err(Error::UnknownPhone(_))
        ));
    }

    #[test]
    fn labels_match_segment_boundaries() {
        let (a, _) = langs();
        let synth = CorpusSynth::new(&a, None, 3).unwrap();
        let u = synth.utterance(0, None).unwrap();
        assert_eq!(
            Some(u.labels.len()),
            FrameGeometry::default().frame_count(u.audio.len())
        );
        assert_eq!(u.labels.0.first().unwrap(), SILENCE);
        assert_eq!(u.labels.0.last().unwrap(), SILENCE);
        // collapsed non-silence label runs spell the transcript's phones
        let mut runs: Vec<&str> = Vec::new();
        for l in &u.labels.0 {
            if runs.last() != Some(&l.as_str()) {
                runs.push(l);
            }
        }
        let spoken: Vec<&str> = runs.into_iter().filter(|l| *l != SILENCE).collect();
        let expected: Vec<&str> = u.words.iter().flat_map(|w| w.split('_')).collect();
        assert_eq!(spoken, expected);
    }

    #[test]
    fn vocabulary_words_have_no_repeated_phones() {
        let (a, _) = langs();
        for w in a.vocabulary() {
            assert!(w.windows(2).all(|p| p[0] != p[1]));
        }
    }
}
