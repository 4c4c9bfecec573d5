use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{
    save_noise_pool, save_rir_pool, synthesize_noise_pool, synthesize_rir_pool, AugmentationRecipe,
    RirPoolSpec, SnrRange,
};
use crate::error::Result;
use crate::features::FeatureConfig;
use crate::nnet::{Architecture, TrainConfig};
use crate::pipeline::config::{
    ExtractorMode, PipelineConfig, StageConfig, StageName, TestSetConfig, TransferMode,
};
use crate::synthbench::{default_languages, generate_corpus, DomainShiftSpec};
use crate::{corpus::SAMPLE_RATE, rng, NoiseClip, RoomImpulseResponse};

/// Sizes of the synthetic two-language benchmark, in minutes of audio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub seed: u64,
    pub source_minutes: f64,
    pub broadcast_minutes: f64,
    pub target_train_minutes: f64,
    pub target_test_minutes: f64,
    pub broadcast_test_minutes: f64,
    pub noise_seconds: f64,
    pub target_shift: DomainShiftSpec,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            source_minutes: 15.0,
            broadcast_minutes: 6.0,
            target_train_minutes: 2.0,
            target_test_minutes: 3.0,
            broadcast_test_minutes: 3.0,
            noise_seconds: 20.0,
            target_shift: DomainShiftSpec {
                rirs: RirPoolSpec {
                    rooms: 4,
                    positions_per_room: 2,
                    rt60_min_s: 0.4,
                    rt60_max_s: 0.9,
                },
                snr_range_db: Some(SnrRange {
                    low_db: 5.0,
                    high_db: 15.0,
                }),
                tilt_offset_db: -4.0,
            },
        }
    }
}

/// Stage settings used by the default benchmark; corpus paths are relative to the
/// benchmark directory.
pub fn default_pipeline_config(
    seed: u64,
    phone_sets: BTreeMap<String, Vec<String>>,
) -> PipelineConfig {
    let big = TrainConfig {
        initial_lr: 1.0,
        final_lr: 0.8,
        epochs: 3,
        batch: 8,
        bptt_chunk: 50,
        seed: 0,
        dropout_rate: 0.1,
        max_grad_norm: Some(5.0),
    };
    let small = TrainConfig {
        initial_lr: 1.0,
        final_lr: 1.0,
        epochs: 30,
        batch: 1,
        bptt_chunk: 25,
        dropout_rate: 0.0,
        ..big.clone()
    };
    let stage =
        |name, corpus: &str, phones: &str, recipe, transfer, extractor, train| StageConfig {
            name,
            manifest: PathBuf::from(format!("corpora/{corpus}/manifest.jsonl")),
            phone_set: phones.into(),
            recipe,
            transfer,
            extractor,
            train,
        };
    PipelineConfig {
        seed,
        out_dir: PathBuf::from("runs"),
        features: FeatureConfig::default(),
        architecture: Architecture::desk(),
        pools: Some(PathBuf::from("pools")),
        phone_sets,
        stages: vec![
            stage(
                StageName::Stage1,
                "source",
                "a",
                AugmentationRecipe::source_language(1),
                TransferMode::None,
                ExtractorMode::TrainNew,
                big.clone(),
            ),
            stage(
                StageName::Stage2,
                "broadcast",
                "b",
                AugmentationRecipe::target_language(2),
                TransferMode::Hidden,
                ExtractorMode::Inherit,
                big.clone(),
            ),
            stage(
                StageName::Stage3,
                "target-train",
                "b",
                AugmentationRecipe::default(),
                TransferMode::Full,
                ExtractorMode::Inherit,
                small.clone(),
            ),
        ],
        // Same budget as Stage 3; the rate is tuned for training from random weights.
        scratch_train: Some(TrainConfig {
            initial_lr: 0.03,
            final_lr: 0.024,
            dropout_rate: big.dropout_rate,
            ..small
        }),
        test_sets: vec![
            TestSetConfig {
                name: "Oral History".into(),
                manifest: PathBuf::from("corpora/target-test/manifest.jsonl"),
            },
            TestSetConfig {
                name: "Broadcast".into(),
                manifest: PathBuf::from("corpora/broadcast-test/manifest.jsonl"),
            },
        ],
        inherit_extractor_without_stage2: true,
    }
}

/// Synthesizes corpora and augmentation pools under `dir`, writes
/// `dir/pipeline.toml`, and returns the config with paths resolved.
pub fn build_benchmark(spec: &BenchmarkSpec, dir: &Path) -> Result<PipelineConfig> {
    let seed = spec.seed;
    let (a, b) = default_languages(seed)?;
    let rirs: Vec<RoomImpulseResponse> = synthesize_rir_pool(
        &RirPoolSpec::default(),
        SAMPLE_RATE,
        rng::derive_seed(seed, &["augment-rirs"]),
    )?;
    let noises: Vec<NoiseClip> = synthesize_noise_pool(
        SAMPLE_RATE,
        spec.noise_seconds,
        rng::derive_seed(seed, &["augment-noise"]),
    )?;
    save_rir_pool(&rirs, &dir.join("pools/rirs"))?;
    save_noise_pool(&noises, &dir.join("pools/noises"))?;
    let corpora = [
        ("source", &a, spec.source_minutes, None),
        ("broadcast", &b, spec.broadcast_minutes, None),
        ("broadcast-test", &b, spec.broadcast_test_minutes, None),
        (
            "target-train",
            &b,
            spec.target_train_minutes,
            Some(&spec.target_shift),
        ),
        (
            "target-test",
            &b,
            spec.target_test_minutes,
            Some(&spec.target_shift),
        ),
    ];
    for (name, lang, minutes, shift) in corpora {
        generate_corpus(
            lang,
            minutes / 60.0,
            shift,
            rng::derive_seed(seed, &["corpus", name]),
            &dir.join("corpora").join(name),
        )?;
    }
    let phone_sets = BTreeMap::from([
        ("a".to_string(), a.inventory.symbols()),
        ("b".to_string(), b.inventory.symbols()),
    ]);
    let cfg = default_pipeline_config(seed, phone_sets);
    crate::util::write_atomic(&dir.join("pipeline.toml"), cfg.to_toml().as_bytes())?;
    let mut resolved = cfg;
    resolved.resolve_paths(dir);
    Ok(resolved)
}
