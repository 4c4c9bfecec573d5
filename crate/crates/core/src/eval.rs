//! Greedy decoding, text normalization, word error rate and report rendering.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Manifest;
use crate::error::{Error, Result};
use crate::features::{
    assemble_for_model, FeatureConfig, FeatureMatrix, FingerprintPolicy, MfccComputer,
    SpeakerEmbeddingExtractor,
};
use crate::nnet::{phone_indices, AcousticModel};
use crate::synthbench::SILENCE;
use crate::Real;

/// Separator between the phones of a word token.
pub const WORD_JOINER: &str = "_";

/// Per-frame argmax (lowest index wins ties), consecutive repeats collapsed,
/// silence dropped. A phone repeated across a dropped silence is collapsed too.
pub fn greedy_decode<T: Real>(posteriors: &Array2<T>, phone_set: &[String]) -> Result<Vec<String>> {
    let mut out: Vec<String> = best_path(posteriors, phone_set)?
        .into_iter()
        .filter(|p| p != SILENCE)
        .collect();
    out.dedup();
    Ok(out)
}

/// Frames averaged by [`smooth_posteriors`] before word decoding in [`evaluate`].
pub const SMOOTHING_FRAMES: usize = 5;

/// Centered moving average over `width` frames (truncated at the edges). Removes
/// one-frame argmax flips that would otherwise split or insert words.
pub fn smooth_posteriors<T: Real>(posteriors: &Array2<T>, width: usize) -> Array2<T> {
    let (n, k) = posteriors.dim();
    let half = width / 2;
    let mut out = Array2::zeros((n, k));
    for t in 0..n {
        let (lo, hi) = (t.saturating_sub(half), (t + half + 1).min(n));
        let mean = posteriors
            .slice(ndarray::s![lo..hi, ..])
            .sum_axis(ndarray::Axis(0))
            / T::from_usize(hi - lo).unwrap();
        out.row_mut(t).assign(&mean);
    }
    out
}

/// Collapsed argmax path with silences kept.
fn best_path<T: Real>(posteriors: &Array2<T>, phone_set: &[String]) -> Result<Vec<String>> {
    if posteriors.nrows() == 0 {
        return Err(Error::EmptyInput("posterior matrix"));
    }
    if posteriors.ncols() != phone_set.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} posterior columns for {} phones",
            posteriors.ncols(),
            phone_set.len()
        )));
    }
    let mut out: Vec<String> = Vec::new();
    let mut prev = usize::MAX;
    for row in posteriors.rows() {
        let best = argmax(row.iter().copied());
        if best != prev {
            out.push(phone_set[best].clone());
            prev = best;
        }
    }
    Ok(out)
}

fn argmax<T: Real>(xs: impl Iterator<Item = T>) -> usize {
    let mut best = (0, T::neg_infinity());
    for (i, v) in xs.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Word tokens from posteriors: the collapsed path is split at silences and the
/// phones of each run are joined with [`WORD_JOINER`].
pub fn decode_words<T: Real>(posteriors: &Array2<T>, phone_set: &[String]) -> Result<Vec<String>> {
    let path = best_path(posteriors, phone_set)?;
    Ok(path
        .split(|p| p == SILENCE)
        .filter(|run| !run.is_empty())
        .map(|run| run.join(WORD_JOINER))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationRules {
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

/// Punctuation that is removed; `_` and `'` are word-internal and survive.
fn is_stripped(c: char) -> bool {
    c.is_ascii_punctuation() && c != '_' && c != '\''
}

/// Whitespace tokenization after optional lowercasing and punctuation removal.
pub fn normalize(text: &str, rules: NormalizationRules) -> Vec<String> {
    let mut s: String = if rules.strip_punctuation {
        text.chars()
            .map(|c| if is_stripped(c) { ' ' } else { c })
            .collect()
    } else {
        text.to_string()
    };
    if rules.lowercase {
        s = s.to_lowercase();
    }
    s.split_whitespace().map(str::to_string).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_words: usize,
    pub wer: f64,
}

impl WerReport {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    fn from_counts(s: usize, d: usize, i: usize, n: usize) -> Self {
        Self {
            substitutions: s,
            deletions: d,
            insertions: i,
            reference_words: n,
            wer: (s + d + i) as f64 / n as f64,
        }
    }

    /// Pools counts: the result's WER is total errors over total reference words.
    pub fn pooled<'a>(reports: impl IntoIterator<Item = &'a WerReport>) -> Result<WerReport> {
        let (mut s, mut d, mut i, mut n) = (0, 0, 0, 0);
        for r in reports {
            s += r.substitutions;
            d += r.deletions;
            i += r.insertions;
            n += r.reference_words;
        }
        if n == 0 {
            return Err(Error::EmptyReference);
        }
        Ok(Self::from_counts(s, d, i, n))
    }
}

/// Minimal unit-cost alignment. Among equally cheap alignments the backtrace
/// prefers substitution, then deletion, then insertion.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<WerReport> {
    let (n, m) = (reference.len(), hypothesis.len());
    if n == 0 {
        return Err(Error::EmptyReference);
    }
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        cost[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = cost[i - 1][j - 1]
                + usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            cost[i][j] = sub.min(cost[i - 1][j] + 1).min(cost[i][j - 1] + 1);
        }
    }
    let (mut s, mut d, mut ins) = (0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            if cost[i][j] == cost[i - 1][j - 1] + usize::from(!same) {
                s += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[i][j] == cost[i - 1][j] + 1 {
            d += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    Ok(WerReport::from_counts(s, d, ins, n))
}

/// A test utterance in network-input form with its reference transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredInput<T> {
    pub id: String,
    pub inputs: FeatureMatrix<T>,
    pub labels: Vec<usize>,
    pub reference: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub test_set: String,
    pub report: WerReport,
    pub frame_accuracy: f64,
    pub frames: usize,
    pub per_utterance: Vec<(String, WerReport)>,
}

impl EvalResult {
    /// `"{test set} | {WER in percent, 2 decimals}"`
    pub fn table_row(&self) -> String {
        format!("{} | {:.2}", self.test_set, 100.0 * self.report.wer)
    }
}

/// Decodes every utterance and pools WER counts and frame accuracy.
pub fn evaluate_inputs<T: Real>(
    m: &AcousticModel<T>,
    test_set: &str,
    items: &[ScoredInput<T>],
    rules: NormalizationRules,
) -> Result<EvalResult> {
    if items.is_empty() {
        return Err(Error::EmptyInput("test set"));
    }
    let scored: Vec<(WerReport, usize, usize)> = items
        .par_iter()
        .map(|it| {
            if it.labels.len() != it.inputs.frames() {
                return Err(Error::Label(format!(
                    "{}: {} labels for {} frames",
                    it.id,
                    it.labels.len(),
                    it.inputs.frames()
                )));
            }
            let post = m.forward(&it.inputs)?;
            let correct = post
                .rows()
                .into_iter()
                .zip(&it.labels)
                .filter(|(row, &l)| argmax(row.iter().copied()) == l)
                .count();
            let hyp = normalize(
                &decode_words(&smooth_posteriors(&post, SMOOTHING_FRAMES), &m.phone_set)?.join(" "),
                rules,
            );
            let reference = normalize(&it.reference.join(" "), rules);
            Ok((wer(&reference, &hyp)?, correct, it.labels.len()))
        })
        .collect::<Result<_>>()?;
    let report = WerReport::pooled(scored.iter().map(|s| &s.0))?;
    let correct: usize = scored.iter().map(|s| s.1).sum();
    let frames: usize = scored.iter().map(|s| s.2).sum();
    Ok(EvalResult {
        test_set: test_set.to_string(),
        report,
        frame_accuracy: correct as f64 / frames as f64,
        frames,
        per_utterance: items
            .iter()
            .zip(&scored)
            .map(|(it, s)| (it.id.clone(), s.0))
            .collect(),
    })
}

/// Builds network inputs for every utterance of `test` with `extractor`.
pub fn prepare_inputs<T: Real>(
    m: &AcousticModel<T>,
    extractor: &SpeakerEmbeddingExtractor<T>,
    test: &Manifest,
    cfg: &FeatureConfig,
    policy: FingerprintPolicy,
) -> Result<Vec<ScoredInput<T>>> {
    let mfcc = MfccComputer::<T>::new(cfg)?;
    test.entries
        .par_iter()
        .map(|u| {
            let f = mfcc.compute(&u.load_audio()?)?;
            let emb = extractor.embed_features(&f)?;
            let inputs = assemble_for_model(&f, &emb, cfg, m.fingerprint, policy)?;
            let labels = phone_indices(&u.load_labels()?, &m.phone_set)?;
            Ok(ScoredInput {
                id: u.id.clone(),
                inputs,
                labels,
                reference: u.transcript.clone(),
            })
        })
        .collect()
}

/// Featurizes `test` with `extractor` and scores `m` on it.
pub fn evaluate<T: Real>(
    m: &AcousticModel<T>,
    extractor: &SpeakerEmbeddingExtractor<T>,
    test: &Manifest,
    cfg: &FeatureConfig,
    rules: NormalizationRules,
    policy: FingerprintPolicy,
) -> Result<EvalResult> {
    evaluate_inputs(
        m,
        &test.name,
        &prepare_inputs(m, extractor, test, cfg, policy)?,
        rules,
    )
}

/// One machine-readable result line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub setup: String,
    pub test_set: String,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_words: usize,
    pub wer: f64,
    pub frame_accuracy: f64,
}

impl EvalRecord {
    pub fn new(setup: &str, r: &EvalResult) -> Self {
        Self {
            setup: setup.to_string(),
            test_set: r.test_set.clone(),
            substitutions: r.report.substitutions,
            deletions: r.report.deletions,
            insertions: r.report.insertions,
            reference_words: r.report.reference_words,
            wer: r.report.wer,
            frame_accuracy: r.frame_accuracy,
        }
    }
}

pub fn render_ndjson(records: &[EvalRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Plain-text table with columns padded to a common width and `|` separators.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: impl IntoIterator<Item = impl Into<String>>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let cols = self
            .rows
            .iter()
            .map(Vec::len)
            .chain([self.headers.len()])
            .max()
            .unwrap_or(0);
        let mut width = vec![0; cols];
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |row: &[String]| {
            let cells: Vec<String> = (0..cols)
                .map(|c| {
                    let cell = row.get(c).map(String::as_str).unwrap_or("");
                    format!("{cell:<w$}", w = width[c])
                })
                .collect();
            cells.join(" | ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.headers);
        out.push_str(
            &(width
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("-+-")
                + "\n"),
        );
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Fingerprint;
    use crate::nnet::{Architecture, InputNorm, LayerSpec, OutputLayer};
    use ndarray::{array, Array1};

    fn syms(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn one_hot(path: &[usize], k: usize) -> Array2<f64> {
        Array2::from_shape_fn((path.len(), k), |(t, j)| {
            if path[t] == j {
                0.9
            } else {
                0.1 / (k - 1) as f64
            }
        })
    }

    #[test]
    fn greedy_collapses_and_drops_silence() {
        let phones = syms("sil a b");
        let p = one_hot(&[1, 1, 0, 2, 2, 2], 3);
        assert_eq!(greedy_decode(&p, &phones).unwrap(), syms("a b"));
        assert!(greedy_decode(&one_hot(&[0, 0, 0], 3), &phones)
            .unwrap()
            .is_empty());
        assert!(greedy_decode(&Array2::<f64>::zeros((0, 3)), &phones).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let p = array![[0.2, 0.4, 0.4], [0.5, 0.5, 0.0]];
        assert_eq!(greedy_decode(&p, &syms("sil a b")).unwrap(), syms("a"));
    }

    #[test]
    fn repeated_phone_across_silence_is_collapsed() {
        let p = one_hot(&[1, 0, 1, 2], 3);
        assert_eq!(greedy_decode(&p, &syms("sil a b")).unwrap(), syms("a b"));
    }

    #[test]
    fn smoothing_removes_single_frame_flips() {
        let p = one_hot(&[1, 1, 1, 2, 1, 1, 0, 0, 0], 3);
        let s = smooth_posteriors(&p, 5);
        assert_eq!(decode_words(&s, &syms("sil a b")).unwrap(), syms("a"));
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(smooth_posteriors(&p, 1), p);
    }

    #[test]
    fn words_split_on_silence() {
        let p = one_hot(&[0, 1, 1, 2, 0, 0, 2, 1, 0], 3);
        assert_eq!(decode_words(&p, &syms("sil a b")).unwrap(), syms("a_b b_a"));
    }

    #[test]
    fn normalization_examples() {
        let r = NormalizationRules::default();
        assert_eq!(normalize("Hello, world.", r), syms("hello world"));
        assert!(normalize("", r).is_empty());
        assert_eq!(normalize("p01_p02  P03_p04!", r), syms("p01_p02 p03_p04"));
        let keep = NormalizationRules {
            lowercase: false,
            strip_punctuation: false,
        };
        assert_eq!(normalize("A, b", keep), syms("A, b"));
    }

    #[test]
    fn wer_examples() {
        let r = wer(&syms("a b"), &syms("b")).unwrap();
        assert_eq!(
            (r.substitutions, r.deletions, r.insertions, r.wer),
            (0, 1, 0, 0.5)
        );
        assert_eq!(wer(&syms("a b c"), &syms("a b c")).unwrap().wer, 0.0);
        let all_del = wer(&syms("a b c"), &[] as &[String]).unwrap();
        assert_eq!((all_del.deletions, all_del.wer), (3, 1.0));
        assert!(matches!(
            wer(&[] as &[String], &syms("a")),
            Err(Error::EmptyReference)
        ));
    }

    #[test]
    fn tie_break_prefers_substitution() {
        // "a b" vs "c": one substitution plus one deletion either way; both
        // alignments cost 2, and the one ending in a substitution is chosen.
        let r = wer(&syms("a b"), &syms("c")).unwrap();
        assert_eq!((r.substitutions, r.deletions, r.insertions), (1, 1, 0));
        let r = wer(&syms("a"), &syms("b c")).unwrap();
        assert_eq!((r.substitutions, r.deletions, r.insertions), (1, 0, 1));
    }

    #[test]
    fn pooling_sums_counts() {
        let a = wer(&syms("a b c d"), &syms("a x c")).unwrap();
        let b = wer(&syms("e"), &syms("f g")).unwrap();
        let p = WerReport::pooled([&a, &b]).unwrap();
        assert_eq!(p.errors(), a.errors() + b.errors());
        assert_eq!(p.reference_words, 5);
        assert!((p.wer - p.errors() as f64 / 5.0).abs() < 1e-15);
        assert_ne!(p.wer, (a.wer + b.wer) / 2.0);
    }

    #[test]
    fn table_is_aligned() {
        let mut t = Table::new(["Setup", "WER"]);
        t.push(["Baseline", "37.42"]);
        t.push(["Proposed approach", "25.91"]);
        let text = t.render();
        let bars: Vec<usize> = text
            .lines()
            .filter(|l| l.contains('|'))
            .map(|l| l.find('|').unwrap())
            .collect();
        assert!(bars.windows(2).all(|w| w[0] == w[1]), "{text}");
    }

    /// One-layer model whose output simply copies a one-hot input.
    fn oracle_model(k: usize) -> AcousticModel<f64> {
        let arch = Architecture {
            layers: vec![LayerSpec::tdnn(&[0], k)],
        };
        let mut m = AcousticModel::random(&arch, k, syms("sil a b"), Fingerprint(1), 0).unwrap();
        if let crate::nnet::Layer::Tdnn(t) = &mut m.hidden[0] {
            t.w = Array2::eye(k);
            t.b = Array1::zeros(k);
        }
        m.input_norm = InputNorm::identity(k);
        m.output = OutputLayer {
            w: Array2::eye(k) * 20.0,
            b: Array1::zeros(k),
        };
        m
    }

    #[test]
    fn perfect_model_scores_zero() {
        let m = oracle_model(3);
        // Three frames per label so smoothing keeps every segment.
        let labels: Vec<usize> = [0, 1, 1, 2, 0, 2, 1, 0]
            .iter()
            .flat_map(|&l| [l; 3])
            .collect();
        let inputs = FeatureMatrix::new(
            one_hot(&labels, 3).mapv(|v| if v > 0.5 { 1.0 } else { 0.0 }),
            10.0,
        )
        .unwrap();
        let item = ScoredInput {
            id: "u".into(),
            inputs,
            labels,
            reference: syms("a_a_b b_a"),
        };
        let mut item2 = item.clone();
        item2.reference = syms("a_b b_a");
        let r = evaluate_inputs(
            &m,
            "Oral History",
            &[item2.clone()],
            NormalizationRules::default(),
        )
        .unwrap();
        assert_eq!(r.report.wer, 0.0);
        assert_eq!(r.frame_accuracy, 1.0);
        assert_eq!(r.table_row(), "Oral History | 0.00");
        let r2 = evaluate_inputs(&m, "t", &[item, item2], NormalizationRules::default()).unwrap();
        let pooled = WerReport::pooled(r2.per_utterance.iter().map(|(_, w)| w)).unwrap();
        assert_eq!(pooled, r2.report);
        assert_eq!(r2.report.substitutions, 1);
    }
}
