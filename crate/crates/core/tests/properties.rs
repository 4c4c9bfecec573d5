use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;

use crossadapt::corpus::{
    load_manifest, save_manifest, split_speaker_disjoint, write_wav, Manifest, Utterance,
};
use crossadapt::dsp::{
    convolve_direct, convolve_overlap_add, measure_snr_db, mix_at_snr, perturbed_len, speed_perturb,
};
use crossadapt::eval::{greedy_decode, normalize, wer, NormalizationRules};
use crossadapt::AudioSignal;

const SR: u32 = 16_000;

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn words(min: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(str::to_string),
        min..9,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_is_linear(x in signal(1..400), y in signal(1..400), h in signal(1..300), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let n = x.len().max(y.len());
        let pad = |v: &[f64]| { let mut v = v.to_vec(); v.resize(n, 0.0); v };
        let (x, y) = (pad(&x), pad(&y));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let out = n + h.len() - 1;
        let lhs = convolve_overlap_add(&mix, &h, out);
        let (cx, cy) = (convolve_overlap_add(&x, &h, out), convolve_overlap_add(&y, &h, out));
        for i in 0..out {
            prop_assert!((lhs[i] - (a * cx[i] + b * cy[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_add_matches_direct_for_any_prefix(x in signal(1..3000), h in signal(1..3000), frac in 0.0f64..1.0) {
        let full = x.len() + h.len() - 1;
        let out = 1 + (frac * (full - 1) as f64) as usize;
        let (fast, slow) = (convolve_overlap_add(&x, &h, out), convolve_direct(&x, &h, out));
        for (p, q) in fast.iter().zip(&slow) {
            prop_assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn mixing_hits_the_requested_snr(s in signal(50..2000), w in signal(50..2000), snr in -5.0f64..30.0) {
        let n = s.len().min(w.len());
        let speech = AudioSignal::new(s[..n].to_vec(), SR).unwrap();
        let noise = AudioSignal::new(w[..n].to_vec(), SR).unwrap();
        prop_assume!(speech.power() > 1e-6 && noise.power() > 1e-6);
        let m = mix_at_snr(&speech, &noise, snr).unwrap();
        let scaled = noise.scaled(m.gain);
        prop_assert!((measure_snr_db(&speech, &scaled).unwrap() - snr).abs() < 1e-9);
        prop_assert!(m.signal.peak() <= 1.0 + 1e-12);
    }

    #[test]
    fn speed_perturbation_length(x in signal(1..5000), factor in 0.5f64..2.0) {
        let y = speed_perturb(&AudioSignal::new(x.clone(), SR).unwrap(), factor).unwrap();
        prop_assert_eq!(y.len(), perturbed_len(x.len(), factor));
        prop_assert!((y.len() as f64 - x.len() as f64 / factor).abs() < 1.0);
    }

    #[test]
    fn wer_of_identity_is_zero(r in words(1)) {
        let rep = wer(&r, &r).unwrap();
        prop_assert_eq!(rep.errors(), 0);
        prop_assert_eq!(rep.wer, 0.0);
    }

    #[test]
    fn wer_empty_hypothesis_deletes_everything(r in words(1)) {
        let rep = wer(&r, &[] as &[String]).unwrap();
        prop_assert_eq!((rep.deletions, rep.substitutions, rep.insertions), (r.len(), 0, 0));
        prop_assert_eq!(rep.wer, 1.0);
    }

    #[test]
    fn wer_counts_are_consistent(r in words(1), h in words(0)) {
        let rep = wer(&r, &h).unwrap();
        prop_assert!(rep.substitutions + rep.deletions <= r.len());
        prop_assert!(rep.insertions <= h.len());
        // Every reference word is matched, substituted or deleted; likewise for hypothesis words.
        prop_assert_eq!(r.len() - rep.deletions + rep.insertions, h.len());
        prop_assert!(rep.errors() <= r.len().max(h.len()));
    }

    #[test]
    fn wer_is_invariant_under_renaming(r in words(1), h in words(0)) {
        let rename = |v: &[String]| v.iter().map(|w| format!("{w}{w}x")).collect::<Vec<_>>();
        prop_assert_eq!(wer(&r, &h).unwrap().errors(), wer(&rename(&r), &rename(&h)).unwrap().errors());
    }

    #[test]
    fn normalize_is_idempotent(text in "[ a-zA-Z0-9,.!?'_-]{0,40}") {
        let rules = NormalizationRules::default();
        let once = normalize(&text, rules);
        prop_assert_eq!(normalize(&once.join(" "), rules), once);
    }

    #[test]
    fn greedy_decode_has_no_repeats_or_silence(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..60)) {
        let phones: Vec<String> = ["sil", "a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let post = Array2::from_shape_fn((rows.len(), 4), |(t, k)| rows[t][k]);
        let out = greedy_decode(&post, &phones).unwrap();
        prop_assert!(out.iter().all(|p| p != "sil"));
        prop_assert!(out.len() <= rows.len());
        let mut expect: Vec<String> = Vec::new();
        for r in &rows {
            let mut best = 0;
            for k in 1..4 { if r[k] > r[best] { best = k; } }
            if best != 0 && expect.last() != Some(&phones[best]) { expect.push(phones[best].clone()); }
        }
        prop_assert!(out.windows(2).all(|w| w[0] != w[1]));
        prop_assert_eq!(out, expect);
    }

    #[test]
    fn speaker_split_is_disjoint_and_complete(spk in prop::collection::vec(0usize..6, 2..40), frac in 0.1f64..0.9, seed in any::<u64>()) {
        prop_assume!(spk.iter().collect::<BTreeSet<_>>().len() >= 2);
        let entries = spk.iter().enumerate().map(|(i, s)| utt(&format!("u{i}"), &format!("s{s}"), std::path::Path::new("/c"))).collect();
        let m = Manifest::new("m", entries).unwrap();
        let (train, test) = split_speaker_disjoint(&m, frac, seed).unwrap();
        prop_assert!(train.speakers().is_disjoint(&test.speakers()));
        prop_assert!(!train.is_empty() && !test.is_empty());
        prop_assert_eq!(train.len() + test.len(), m.len());
    }
}

fn utt(id: &str, speaker: &str, dir: &std::path::Path) -> Utterance {
    Utterance {
        id: id.into(),
        audio: dir.join(format!("{id}.wav")),
        duration_s: 1.25,
        speaker: speaker.into(),
        language: "a".into(),
        transcript: vec!["w1".into(), "w2".into()],
        labels: Some(dir.join(format!("{id}.lab"))),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn manifest_round_trips(ids in prop::collection::btree_set("[a-z]{1,6}", 1..12), dur in 0.01f64..2.0) {
        let dir = tempfile::tempdir().unwrap();
        let n = (dur * SR as f64).round() as usize;
        let entries = ids.iter().map(|id| {
            let mut u = utt(id, "s", dir.path());
            write_wav(&u.audio, &AudioSignal::new(vec![0.0; n], SR).unwrap()).unwrap();
            u.duration_s = n as f64 / SR as f64;
            u
        }).collect();
        let m = Manifest::new("m", entries).unwrap();
        let path = dir.path().join("m.jsonl");
        save_manifest(&m, &path).unwrap();
        let back = load_manifest(&path).unwrap();
        prop_assert_eq!(back.entries, m.entries);
    }
}
