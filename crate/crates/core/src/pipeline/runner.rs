use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_manifest, save_manifest, Manifest};
use crate::dsp::{
    apply_recipe, load_noise_pool, load_rir_pool, AugmentationPools, AugmentationRecipe,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_inputs, EvalResult, NormalizationRules, ScoredInput};
use crate::features::{
    assemble_for_model, load_extractor, save_extractor, train_extractor_from_features,
    FeatureMatrix, FingerprintPolicy, MfccComputer,
};
use crate::nnet::{
    load_checkpoint, phone_indices, save_checkpoint, train, transfer_full, transfer_hidden,
    Example, InputNorm, TrainConfig, TrainingLog,
};
use crate::pipeline::config::{
    AblationSpec, ExtractorMode, PipelineConfig, StageConfig, StageName, TransferMode,
};
use crate::util::{sha256_hex, write_atomic};
use crate::{rng, AcousticModel, SpeakerEmbeddingExtractor};

/// What a stage run produced, plus enough provenance to audit the transfer rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: StageName,
    pub key: String,
    pub transfer: TransferMode,
    pub phone_count: usize,
    pub train_utterances: usize,
    pub model_fingerprint: String,
    pub extractor_fingerprint: String,
    /// SHA-256 over the hidden-layer weights right after initialization.
    pub init_hidden_digest: String,
    /// Final learning rate of the predecessor, when there is one.
    pub predecessor_final_lr: Option<f64>,
    pub log: TrainingLog,
}

pub struct StageOutput {
    pub model: AcousticModel,
    pub extractor: SpeakerEmbeddingExtractor,
    pub record: StageRecord,
}

/// Where a stage's speaker-embedding extractor comes from.
#[derive(Clone, Copy)]
pub enum ExtractorChoice<'a> {
    TrainNew,
    Inherit,
    Given(&'a StageOutput),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub setup: String,
    /// Whether Stage 1, 2 and 3 were trained.
    pub included: [bool; 3],
    pub stages: Vec<StageRecord>,
    pub results: Vec<EvalResult>,
}

/// SHA-256 of the little-endian bytes of every hidden-layer tensor.
pub fn hidden_digest(m: &AcousticModel) -> String {
    let mut bytes = Vec::new();
    for l in &m.hidden {
        for s in l.param_slices() {
            for v in s {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    sha256_hex(&bytes)
}

/// Training settings after the stage rules: Stage 3 starts at the predecessor's
/// final rate divided by 100, keeps its configured decay ratio, and uses no dropout.
pub fn effective_train_config(
    stage: &StageConfig,
    predecessor_final_lr: Option<f64>,
    seed: u64,
) -> Result<TrainConfig> {
    let mut t = stage.train.clone();
    t.seed = rng::derive_seed(
        seed,
        &[
            "train",
            &stage.name.to_string(),
            &stage.train.seed.to_string(),
        ],
    );
    if stage.name == StageName::Stage3 {
        let prev = predecessor_final_lr
            .ok_or_else(|| Error::Incompatible("stage3 needs a predecessor".into()))?;
        let ratio = stage.train.final_lr / stage.train.initial_lr;
        t.initial_lr = prev / 100.0;
        t.final_lr = t.initial_lr * ratio;
        t.dropout_rate = 0.0;
    }
    t.validate()?;
    Ok(t)
}

/// Runs stages and caches their outputs by content key under `out_dir/stages`.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pools: Option<Arc<AugmentationPools<f64>>>,
    mfcc: HashMap<String, Arc<(Manifest, Vec<FeatureMatrix<f64>>)>>,
    stages: HashMap<String, Arc<StageOutput>>,
    /// Stage keys in the order they were first requested, for reporting.
    pub log: Vec<String>,
}

#[derive(Serialize)]
struct StageKey<'a> {
    stage: &'a StageConfig,
    manifest_sha: String,
    pools_sha: Option<String>,
    phones: &'a [String],
    train: &'a TrainConfig,
    features: &'a crate::features::FeatureConfig,
    architecture: &'a crate::nnet::Architecture,
    seed: u64,
    predecessor: Option<&'a str>,
    extractor: String,
    policy: FingerprintPolicy,
}

fn file_sha(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            pools: None,
            mfcc: HashMap::new(),
            stages: HashMap::new(),
            log: Vec::new(),
        })
    }

    fn pools(&mut self) -> Result<Arc<AugmentationPools<f64>>> {
        if let Some(p) = &self.pools {
            return Ok(p.clone());
        }
        let dir =
            self.cfg.pools.clone().ok_or_else(|| {
                Error::Config("augmentation recipe without a pools directory".into())
            })?;
        let pools = Arc::new(AugmentationPools {
            rirs: load_rir_pool(&dir.join("rirs"))?,
            noises: load_noise_pool(&dir.join("noises"))?,
        });
        self.pools = Some(pools.clone());
        Ok(pools)
    }

    fn pools_sha(&self) -> Result<Option<String>> {
        match &self.cfg.pools {
            None => Ok(None),
            Some(d) => Ok(Some(sha256_hex(
                format!(
                    "{}{}",
                    file_sha(&d.join("rirs/index.jsonl"))?,
                    file_sha(&d.join("noises/index.jsonl"))?
                )
                .as_bytes(),
            ))),
        }
    }

    /// Applies `recipe` (seeded from the global seed) to the manifest, reusing a
    /// previous expansion with the same inputs, and returns MFCCs for every entry.
    fn training_features(
        &mut self,
        manifest: &Path,
        recipe: &AugmentationRecipe,
    ) -> Result<Arc<(Manifest, Vec<FeatureMatrix<f64>>)>> {
        let mut recipe = recipe.clone();
        recipe.seed = rng::derive_seed(self.cfg.seed, &["recipe", &recipe.seed.to_string()]);
        let pools_sha = if recipe.is_identity() {
            None
        } else {
            self.pools_sha()?
        };
        let key = sha256_hex(
            serde_json::to_string(&(file_sha(manifest)?, &recipe, pools_sha, &self.cfg.features))
                .expect("key serializes")
                .as_bytes(),
        );
        if let Some(hit) = self.mfcc.get(&key) {
            return Ok(hit.clone());
        }
        let source = load_manifest(manifest)?;
        let m = if recipe.is_identity() {
            source
        } else {
            let dir = self.cfg.out_dir.join("augmented").join(&key[..16]);
            let path = dir.join("manifest.jsonl");
            match load_manifest(&path) {
                Ok(m) if m.len() == source.len() * recipe.expansion() => m,
                _ => {
                    let pools = self.pools()?;
                    let m =
                        apply_recipe(&source, &recipe, &pools, &dir, self.cfg.features.geometry())?;
                    save_manifest(&m, &path)?;
                    m
                }
            }
        };
        let feats = self.mfcc_of(&m)?;
        let entry = Arc::new((m, feats));
        self.mfcc.insert(key, entry.clone());
        Ok(entry)
    }

    fn mfcc_of(&self, m: &Manifest) -> Result<Vec<FeatureMatrix<f64>>> {
        let mfcc = MfccComputer::<f64>::new(&self.cfg.features)?;
        m.entries
            .par_iter()
            .map(|u| mfcc.compute(&u.load_audio()?))
            .collect()
    }

    fn test_features(
        &mut self,
        manifest: &Path,
    ) -> Result<Arc<(Manifest, Vec<FeatureMatrix<f64>>)>> {
        self.training_features(manifest, &AugmentationRecipe::default())
    }

    fn stage_dir(&self, name: StageName, key: &str) -> PathBuf {
        self.cfg
            .out_dir
            .join("stages")
            .join(format!("{name}-{}", &key[..16]))
    }

    /// Runs one stage on top of `predecessor`, or returns the cached result of an
    /// identical earlier run.
    pub fn run_stage(
        &mut self,
        stage: &StageConfig,
        predecessor: Option<&StageOutput>,
        extractor: ExtractorChoice<'_>,
        policy: FingerprintPolicy,
    ) -> Result<Arc<StageOutput>> {
        let phones = self.cfg.phones(&stage.phone_set)?.to_vec();
        if predecessor.is_none()
            && (stage.transfer != TransferMode::None
                || matches!(extractor, ExtractorChoice::Inherit))
        {
            return Err(Error::Incompatible(format!(
                "{} has no predecessor",
                stage.name
            )));
        }
        if let (TransferMode::Full, Some(p)) = (stage.transfer, predecessor) {
            if p.model.phone_set != phones {
                return Err(Error::Incompatible(format!(
                    "full transfer into {} changes the phone set",
                    stage.name
                )));
            }
        }
        let pred_lr = predecessor.map(|p| p.model.state.last_lr);
        let train_cfg = effective_train_config(stage, pred_lr, self.cfg.seed)?;
        let extractor_tag = match extractor {
            ExtractorChoice::TrainNew => "new".to_string(),
            ExtractorChoice::Inherit => format!(
                "inherit:{}",
                predecessor.expect("checked").extractor.fingerprint
            ),
            ExtractorChoice::Given(o) => format!("given:{}", o.extractor.fingerprint),
        };
        let key_material = StageKey {
            stage,
            manifest_sha: file_sha(&stage.manifest)?,
            pools_sha: if stage.recipe.is_identity() {
                None
            } else {
                self.pools_sha()?
            },
            phones: &phones,
            train: &train_cfg,
            features: &self.cfg.features,
            architecture: &self.cfg.architecture,
            seed: self.cfg.seed,
            predecessor: predecessor.map(|p| p.record.key.as_str()),
            extractor: extractor_tag,
            policy,
        };
        let mut key_json = serde_json::to_value(&key_material).expect("key serializes");
        // The manifest location does not affect the result; its content hash does.
        key_json["stage"]["manifest"] = serde_json::Value::Null;
        let key = sha256_hex(key_json.to_string().as_bytes());
        if !self.log.contains(&key) {
            self.log.push(key.clone());
        }
        if let Some(hit) = self.stages.get(&key) {
            return Ok(hit.clone());
        }
        let dir = self.stage_dir(stage.name, &key);
        if let Some(out) = load_stage(&dir, &key) {
            let out = Arc::new(out);
            self.stages.insert(key, out.clone());
            return Ok(out);
        }

        let data = self.training_features(&stage.manifest, &stage.recipe)?;
        let (manifest, mfccs) = (&data.0, &data.1);
        let extractor = match extractor {
            ExtractorChoice::TrainNew => train_extractor_from_features(
                manifest,
                mfccs,
                &self.cfg.features,
                self.cfg.features.embedding_dim,
                rng::derive_seed(self.cfg.seed, &["extractor", &stage.name.to_string()]),
            )?,
            ExtractorChoice::Inherit => predecessor.expect("checked").extractor.clone(),
            ExtractorChoice::Given(o) => o.extractor.clone(),
        };
        let model_fp = match predecessor {
            Some(p) if stage.transfer != TransferMode::None => p.model.fingerprint,
            _ => extractor.fingerprint,
        };
        let fcfg = &self.cfg.features;
        let examples: Vec<Example<f64>> = manifest
            .entries
            .par_iter()
            .zip(mfccs.par_iter())
            .map(|(u, f)| {
                let emb = extractor.embed_features(f)?;
                let inputs = assemble_for_model(f, &emb, fcfg, model_fp, policy)?;
                let labels = phone_indices(&u.load_labels()?, &phones)?;
                if labels.len() != inputs.frames() {
                    return Err(Error::Label(format!(
                        "{}: {} labels for {} frames",
                        u.id,
                        labels.len(),
                        inputs.frames()
                    )));
                }
                Ok(Example {
                    id: u.id.clone(),
                    inputs,
                    labels,
                })
            })
            .collect::<Result<_>>()?;
        let init_seed = rng::derive_seed(self.cfg.seed, &["init", &stage.name.to_string()]);
        let model = match (stage.transfer, predecessor) {
            (TransferMode::None, _) => {
                let mut m = AcousticModel::random(
                    &self.cfg.architecture,
                    fcfg.input_dim(),
                    phones.clone(),
                    model_fp,
                    init_seed,
                )?;
                m.input_norm =
                    InputNorm::estimate(fcfg.input_dim(), examples.iter().map(|e| &e.inputs))?;
                m
            }
            (TransferMode::Hidden, Some(p)) => transfer_hidden(&p.model, &phones, init_seed)?,
            (TransferMode::Full, Some(p)) => transfer_full(&p.model)?,
            _ => unreachable!("predecessor checked above"),
        };
        let init_hidden_digest = hidden_digest(&model);
        let (model, mut log) = train(model, &examples, &train_cfg)?;
        log.fingerprint_override = model.fingerprint != extractor.fingerprint;
        let record = StageRecord {
            name: stage.name,
            key: key.clone(),
            transfer: stage.transfer,
            phone_count: phones.len(),
            train_utterances: manifest.len(),
            model_fingerprint: model.fingerprint.to_string(),
            extractor_fingerprint: extractor.fingerprint.to_string(),
            init_hidden_digest,
            predecessor_final_lr: pred_lr,
            log,
        };
        save_checkpoint(&model, &dir.join("model.ckpt"))?;
        save_extractor(&extractor, &dir.join("extractor.bin"))?;
        write_atomic(
            &dir.join("record.json"),
            serde_json::to_string_pretty(&record)
                .expect("record serializes")
                .as_bytes(),
        )?;
        let out = Arc::new(StageOutput {
            model,
            extractor,
            record,
        });
        self.stages.insert(key, out.clone());
        Ok(out)
    }

    /// Scores a stage output on every configured test set.
    pub fn evaluate(
        &mut self,
        out: &StageOutput,
        policy: FingerprintPolicy,
    ) -> Result<Vec<EvalResult>> {
        self.evaluate_with(&out.model, &out.extractor, policy)
    }

    /// Scores `model` on every test set with embeddings from `extractor`.
    pub fn evaluate_with(
        &mut self,
        model: &AcousticModel,
        extractor: &SpeakerEmbeddingExtractor,
        policy: FingerprintPolicy,
    ) -> Result<Vec<EvalResult>> {
        let sets = self.cfg.test_sets.clone();
        if sets.is_empty() {
            return Err(Error::Config("no test sets configured".into()));
        }
        let fcfg = self.cfg.features.clone();
        sets.iter()
            .map(|t| {
                let data = self.test_features(&t.manifest)?;
                let items: Vec<ScoredInput<f64>> = data
                    .0
                    .entries
                    .par_iter()
                    .zip(data.1.par_iter())
                    .map(|(u, f)| {
                        let emb = extractor.embed_features(f)?;
                        let inputs = assemble_for_model(f, &emb, &fcfg, model.fingerprint, policy)?;
                        let labels = phone_indices(&u.load_labels()?, &model.phone_set)?;
                        Ok(ScoredInput {
                            id: u.id.clone(),
                            inputs,
                            labels,
                            reference: u.transcript.clone(),
                        })
                    })
                    .collect::<Result<_>>()?;
                evaluate_inputs(model, &t.name, &items, NormalizationRules::default())
            })
            .collect()
    }

    /// Runs the configured stages in order and evaluates the final model.
    pub fn run_pipeline(&mut self) -> Result<RunReport> {
        let stages = self.cfg.stages.clone();
        let mut prev: Option<Arc<StageOutput>> = None;
        let mut records = Vec::new();
        for s in &stages {
            let choice = match s.extractor {
                ExtractorMode::TrainNew => ExtractorChoice::TrainNew,
                ExtractorMode::Inherit => ExtractorChoice::Inherit,
            };
            let out = self.run_stage(s, prev.as_deref(), choice, FingerprintPolicy::Enforce)?;
            records.push(out.record.clone());
            prev = Some(out);
        }
        let last = prev.expect("validated: at least one stage");
        let results = self.evaluate(&last, FingerprintPolicy::Enforce)?;
        let included = [StageName::Stage1, StageName::Stage2, StageName::Stage3].map(|n| {
            stages
                .iter()
                .any(|s| s.name == n || (n == StageName::Stage3 && s.name == StageName::Scratch))
        });
        Ok(RunReport {
            setup: setup_name(&included),
            included,
            stages: records,
            results,
        })
    }

    /// Stage list for an ablation setup: the first included stage starts from
    /// random weights with its own extractor, later ones chain; a phone-set change
    /// turns a full transfer into a hidden-layer transfer.
    pub fn ablation_stages(&self, spec: &AblationSpec) -> Result<Vec<StageConfig>> {
        let names = [StageName::Stage1, StageName::Stage2, StageName::Stage3];
        let mut out: Vec<StageConfig> = Vec::new();
        for (i, name) in names.iter().enumerate() {
            if !spec.stages[i] {
                continue;
            }
            let mut s = self
                .cfg
                .stage(*name)
                .cloned()
                .ok_or_else(|| Error::Config(format!("ablation needs a configured {name}")))?;
            match out.last() {
                None => {
                    s.transfer = TransferMode::None;
                    s.extractor = ExtractorMode::TrainNew;
                    if s.name == StageName::Stage3 {
                        s.name = StageName::Scratch;
                        s.train = self.cfg.scratch_train.clone().ok_or_else(|| {
                            Error::Config("a setup starting at stage3 needs `scratch_train`".into())
                        })?;
                    }
                }
                Some(prev) => {
                    if prev.phone_set != s.phone_set && s.transfer == TransferMode::Full {
                        s.transfer = TransferMode::Hidden;
                    }
                    if s.transfer == TransferMode::None {
                        s.transfer = TransferMode::Hidden;
                    }
                    if prev.name == StageName::Stage1 && s.name == StageName::Stage3 {
                        s.extractor = if self.cfg.inherit_extractor_without_stage2 {
                            ExtractorMode::Inherit
                        } else {
                            ExtractorMode::TrainNew
                        };
                    }
                }
            }
            out.push(s);
        }
        if out.is_empty() {
            return Err(Error::Config("ablation setup includes no stage".into()));
        }
        Ok(out)
    }

    /// Runs every setup, sharing identical upstream stages between them.
    pub fn run_ablation(&mut self, specs: &[AblationSpec]) -> Result<Vec<RunReport>> {
        if specs.is_empty() {
            return Err(Error::Config("no ablation setups given".into()));
        }
        let base = self.cfg.stages.clone();
        let mut reports = Vec::new();
        for spec in specs {
            let stages = self.ablation_stages(spec)?;
            self.cfg.stages = stages;
            let r = self.cfg.validate().and_then(|_| self.run_pipeline());
            self.cfg.stages = base.clone();
            let mut r = r?;
            r.setup = spec.name.clone();
            r.included = spec.stages;
            reports.push(r);
        }
        Ok(reports)
    }

    /// Trains the Stage 2 model under the four combinations of initialization
    /// (random or transferred from Stage 1) and extractor (trained on the Stage 1
    /// or the Stage 2 data), and evaluates each with the extractor it was trained with.
    /// The transferred model trained with the Stage 1 extractor is also scored with
    /// the Stage 2 extractor substituted at test time.
    pub fn extractor_swap_experiment(&mut self) -> Result<SwapReport> {
        let s1 = self
            .cfg
            .stage(StageName::Stage1)
            .cloned()
            .ok_or_else(|| Error::Config("swap experiment needs stage1".into()))?;
        let s2 = self
            .cfg
            .stage(StageName::Stage2)
            .cloned()
            .ok_or_else(|| Error::Config("swap experiment needs stage2".into()))?;
        let mut first = s1.clone();
        first.transfer = TransferMode::None;
        first.extractor = ExtractorMode::TrainNew;
        let stage1 = self.run_stage(
            &first,
            None,
            ExtractorChoice::TrainNew,
            FingerprintPolicy::Enforce,
        )?;
        let mut scratch = s2.clone();
        scratch.transfer = TransferMode::None;
        scratch.extractor = ExtractorMode::TrainNew;
        let native = self.run_stage(
            &scratch,
            None,
            ExtractorChoice::TrainNew,
            FingerprintPolicy::Enforce,
        )?;
        let mut transferred = s2.clone();
        transferred.transfer = TransferMode::Hidden;
        transferred.extractor = ExtractorMode::Inherit;

        let mut cells = Vec::new();
        let mut probe = None;
        for (init, ext) in [
            (ModelInit::Random, ExtractorSource::Target),
            (ModelInit::Transferred, ExtractorSource::Target),
            (ModelInit::Random, ExtractorSource::Source),
            (ModelInit::Transferred, ExtractorSource::Source),
        ] {
            let (out, policy) = match (init, ext) {
                (ModelInit::Random, ExtractorSource::Target) => {
                    (native.clone(), FingerprintPolicy::Enforce)
                }
                (ModelInit::Transferred, ExtractorSource::Target) => (
                    self.run_stage(
                        &transferred,
                        Some(&stage1),
                        ExtractorChoice::Given(&native),
                        FingerprintPolicy::Override,
                    )?,
                    FingerprintPolicy::Override,
                ),
                (ModelInit::Random, ExtractorSource::Source) => (
                    self.run_stage(
                        &scratch,
                        None,
                        ExtractorChoice::Given(&stage1),
                        FingerprintPolicy::Enforce,
                    )?,
                    FingerprintPolicy::Enforce,
                ),
                (ModelInit::Transferred, ExtractorSource::Source) => (
                    self.run_stage(
                        &transferred,
                        Some(&stage1),
                        ExtractorChoice::Inherit,
                        FingerprintPolicy::Enforce,
                    )?,
                    FingerprintPolicy::Enforce,
                ),
            };
            if (init, ext) == (ModelInit::Transferred, ExtractorSource::Source) {
                probe = Some(MismatchProbe {
                    matched: self.evaluate(&out, FingerprintPolicy::Enforce)?,
                    mismatched: self.evaluate_with(
                        &out.model,
                        &native.extractor,
                        FingerprintPolicy::Override,
                    )?,
                });
            }
            let results = self.evaluate(&out, policy)?;
            cells.push(SwapCell {
                init,
                extractor: ext,
                override_used: policy == FingerprintPolicy::Override,
                record: out.record.clone(),
                results,
            });
        }
        Ok(SwapReport {
            cells,
            probe: probe.expect("transferred/source cell always runs"),
        })
    }
}

fn load_stage(dir: &Path, key: &str) -> Option<StageOutput> {
    let record: StageRecord =
        serde_json::from_slice(&fs::read(dir.join("record.json")).ok()?).ok()?;
    if record.key != key {
        return None;
    }
    let model = load_checkpoint(&dir.join("model.ckpt")).ok()?;
    let extractor = load_extractor(&dir.join("extractor.bin")).ok()?;
    Some(StageOutput {
        model,
        extractor,
        record,
    })
}

/// Name of the comparison-table column with this stage pattern.
pub fn setup_name(included: &[bool; 3]) -> String {
    AblationSpec::table()
        .into_iter()
        .find(|s| &s.stages == included)
        .map(|s| s.name)
        .unwrap_or_else(|| {
            let v: Vec<String> = (0..3)
                .filter(|&i| included[i])
                .map(|i| (i + 1).to_string())
                .collect();
            format!("Stages {}", v.join("+"))
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelInit {
    Random,
    Transferred,
}

/// Which stage's data trained the extractor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractorSource {
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapCell {
    pub init: ModelInit,
    pub extractor: ExtractorSource,
    pub override_used: bool,
    pub record: StageRecord,
    pub results: Vec<EvalResult>,
}

/// One trained model scored with its own extractor and with a foreign one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MismatchProbe {
    pub matched: Vec<EvalResult>,
    pub mismatched: Vec<EvalResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub cells: Vec<SwapCell>,
    /// The transferred model trained with the source extractor, scored with the
    /// source (matched) and target (mismatched) extractors.
    pub probe: MismatchProbe,
}

impl SwapReport {
    pub fn cell(&self, init: ModelInit, extractor: ExtractorSource) -> Option<&SwapCell> {
        self.cells
            .iter()
            .find(|c| c.init == init && c.extractor == extractor)
    }
}
