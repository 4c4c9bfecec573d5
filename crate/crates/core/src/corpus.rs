//! Manifests, audio I/O, frame label tracks and corpus statistics.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::Real;

/// Canonical corpus sample rate.
pub const SAMPLE_RATE: u32 = 16_000;

/// Allowed disagreement between a manifest's stored duration and the audio length.
pub const DURATION_TOLERANCE_S: f64 = 0.010;

/// Mono waveform with amplitudes nominally in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> AudioSignal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidAudio(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![T::zero(); len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, &x| m.max(Float::abs(x)))
    }

    /// Mean power over the whole signal.
    pub fn power(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        self.samples.iter().map(|&x| x * x).sum::<T>() / T::lit(self.samples.len() as f64)
    }

    pub fn rms(&self) -> T {
        self.power().sqrt()
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Scales down so the peak is at most 1; leaves the signal alone otherwise.
    pub fn peak_limited(self) -> Self {
        let peak = self.peak();
        if peak > T::one() {
            self.scaled(T::one() / peak)
        } else {
            self
        }
    }

    pub fn convert<U: Real>(&self) -> AudioSignal<U> {
        AudioSignal {
            samples: self.samples.iter().map(|&x| U::lit(x.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads a 16-bit PCM mono WAV file.
pub fn read_wav<T: Real>(path: &Path) -> Result<AudioSignal<T>> {
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::wav(path, e))?;
    let spec = reader.spec();
    check_wav_spec(path, spec)?;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| T::lit(v as f64 / 32768.0)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::wav(path, e))?;
    AudioSignal::new(samples, spec.sample_rate)
}

/// Writes a 16-bit PCM mono WAV file. Samples outside [-1, 1] are clipped.
pub fn write_wav<T: Real>(path: &Path, signal: &AudioSignal<T>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| Error::wav(path, e))?;
    for &x in signal.samples() {
        w.write_sample(quantize(x.as_f64()))
            .map_err(|e| Error::wav(path, e))?;
    }
    w.finalize().map_err(|e| Error::wav(path, e))
}

fn quantize(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn check_wav_spec(path: &Path, spec: hound::WavSpec) -> Result<()> {
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::InvalidAudio(format!(
            "{}: expected 16-bit PCM mono, got {} ch / {} bit",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    Ok(())
}

/// Sample rate and length of a WAV file, from its header only.
pub fn wav_info(path: &Path) -> Result<(u32, usize)> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::wav(path, e))?;
    check_wav_spec(path, reader.spec())?;
    Ok((reader.spec().sample_rate, reader.duration() as usize))
}

/// Analysis framing in samples, shared by feature extraction and label tracks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub window: usize,
    pub shift: usize,
}

impl FrameGeometry {
    pub fn from_ms(sample_rate: u32, window_ms: f64, shift_ms: f64) -> Self {
        let r = sample_rate as f64 / 1000.0;
        Self {
            window: (window_ms * r).round() as usize,
            shift: (shift_ms * r).round() as usize,
        }
    }

    /// `floor((len - window) / shift) + 1`, or `None` if shorter than one window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.window && self.window > 0 && self.shift > 0)
            .then(|| (len - self.window) / self.shift + 1)
    }

    /// Sample index at the center of frame `t`.
    pub fn center(&self, t: usize) -> usize {
        t * self.shift + self.window / 2
    }
}

impl Default for FrameGeometry {
    fn default() -> Self {
        Self {
            window: 400,
            shift: 160,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub audio: PathBuf,
    #[serde(rename = "duration")]
    pub duration_s: f64,
    pub speaker: String,
    pub language: String,
    pub transcript: Vec<String>,
    /// Frame label track, when the utterance carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

impl Utterance {
    pub fn word_count(&self) -> usize {
        self.transcript.len()
    }

    pub fn load_audio<T: Real>(&self) -> Result<AudioSignal<T>> {
        read_wav(&self.audio)
    }

    pub fn load_labels(&self) -> Result<LabelTrack> {
        match &self.labels {
            Some(p) => LabelTrack::read(p),
            None => Err(Error::Label(format!(
                "utterance `{}` has no label track",
                self.id
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub entries: Vec<Utterance>,
}

impl Manifest {
    /// Builds a manifest, rejecting duplicate ids and non-positive durations.
    pub fn new(name: impl Into<String>, entries: Vec<Utterance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for u in &entries {
            if !seen.insert(u.id.as_str()) {
                return Err(Error::DuplicateId(u.id.clone()));
            }
            if !(u.duration_s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "utterance `{}` has non-positive duration",
                    u.id
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|u| u.speaker.as_str()).collect()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.entries.iter().map(|u| u.duration_s).sum()
    }
}

/// Loads a newline-delimited JSON manifest. Relative audio and label paths are
/// resolved against the manifest's directory, and every audio file's header is
/// checked against the canonical format and the stored duration.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let mut u: Utterance = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if u.id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        if !(u.duration_s > 0.0) {
            return Err(malformed(format!("non-positive duration {}", u.duration_s)));
        }
        u.audio = base.join(&u.audio);
        u.labels = u.labels.map(|l| base.join(l));
        let (rate, len) = wav_info(&u.audio).map_err(|e| malformed(e.to_string()))?;
        if rate != SAMPLE_RATE {
            return Err(malformed(
                Error::RateMismatch {
                    expected: SAMPLE_RATE,
                    got: rate,
                }
                .to_string(),
            ));
        }
        let actual = len as f64 / rate as f64;
        if (actual - u.duration_s).abs() > DURATION_TOLERANCE_S {
            return Err(malformed(format!(
                "stored duration {:.3} s disagrees with audio length {:.3} s",
                u.duration_s, actual
            )));
        }
        entries.push(u);
    }
    if entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Manifest::new(name, entries)
}

/// Writes a manifest; paths under the manifest's directory are stored relative to it.
pub fn save_manifest(m: &Manifest, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = String::new();
    for u in &m.entries {
        let mut rec = u.clone();
        rec.audio = relative_to(&u.audio, base);
        rec.labels = u.labels.as_deref().map(|l| relative_to(l, base));
        out.push_str(&serde_json::to_string(&rec).expect("utterance serializes"));
        out.push('\n');
    }
    crate::util::write_atomic(path, out.as_bytes())
}

fn relative_to(p: &Path, base: &Path) -> PathBuf {
    if base.as_os_str().is_empty() {
        return p.to_path_buf();
    }
    p.strip_prefix(base)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| p.to_path_buf())
}

/// Per-frame phone labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTrack(pub Vec<String>);

impl LabelTrack {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses `frame:phone` lines; frames must be consecutive from 0.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (frame, phone) = line
                .split_once(':')
                .ok_or_else(|| Error::Label(format!("line {}: expected frame:phone", i + 1)))?;
            let frame: usize = frame
                .trim()
                .parse()
                .map_err(|_| Error::Label(format!("line {}: bad frame index", i + 1)))?;
            if frame != out.len() {
                return Err(Error::Label(format!(
                    "line {}: expected frame {}, got {frame}",
                    i + 1,
                    out.len()
                )));
            }
            out.push(phone.trim().to_string());
        }
        Ok(Self(out))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.0.len() * 8);
        for (i, p) in self.0.iter().enumerate() {
            let _ = writeln!(s, "{i}:{p}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, self.render().as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_length_min: f64,
    pub avg_segment_length_s: f64,
    pub avg_words_per_segment: f64,
    pub avg_words_per_second: f64,
}

impl CorpusStats {
    /// One row in the layout `name | minutes | segment s | words | words/s`.
    pub fn table_row(&self, name: &str) -> String {
        format!(
            "{name} | {:.0} | {:.1} s | {:.1} | {:.1}",
            self.total_length_min,
            self.avg_segment_length_s,
            self.avg_words_per_segment,
            self.avg_words_per_second
        )
    }
}

pub fn compute_stats(m: &Manifest) -> Result<CorpusStats> {
    if m.entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let n = m.entries.len() as f64;
    let total_s: f64 = m.entries.iter().map(|u| u.duration_s).sum();
    let words: usize = m.entries.iter().map(Utterance::word_count).sum();
    Ok(CorpusStats {
        total_length_min: total_s / 60.0,
        avg_segment_length_s: total_s / n,
        avg_words_per_segment: words as f64 / n,
        avg_words_per_second: words as f64 / total_s,
    })
}

/// Splits by speaker so that no speaker appears on both sides. The number of test
/// speakers is `round(test_fraction * speakers)`, clamped to leave each side one.
pub fn split_speaker_disjoint(
    m: &Manifest,
    test_fraction: f64,
    seed: u64,
) -> Result<(Manifest, Manifest)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let mut speakers: Vec<&str> = m.speakers().into_iter().collect();
    if speakers.len() < 2 {
        return Err(Error::TooFewSpeakers(speakers.len()));
    }
    let mut r = rng::stream(seed, &["split", &m.name]);
    speakers.shuffle(&mut r);
    let n_test =
        ((test_fraction * speakers.len() as f64).round() as usize).clamp(1, speakers.len() - 1);
    let test_speakers: HashSet<&str> = speakers[..n_test].iter().copied().collect();
    let (test, train): (Vec<_>, Vec<_>) = m
        .entries
        .iter()
        .cloned()
        .partition(|u| test_speakers.contains(u.speaker.as_str()));
    Ok((
        Manifest::new(format!("{}-train", m.name), train)?,
        Manifest::new(format!("{}-test", m.name), test)?,
    ))
}
