//! Command-line front end. `run` parses arguments, dispatches, and maps outcomes
//! to exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::corpus::{compute_stats, load_manifest, save_manifest};
use crate::dsp::{
    apply_recipe, load_noise_pool, load_rir_pool, AugmentationPools, AugmentationRecipe,
};
use crate::error::{Error, Result};
use crate::eval::{normalize, wer, NormalizationRules, WerReport};
use crate::features::{
    save_extractor, save_features, train_extractor_from_features, FeatureConfig, MfccComputer,
};
use crate::nnet::{load_checkpoint, save_checkpoint, transfer_full, transfer_hidden};
use crate::pipeline::{
    ablation_table, build_benchmark, records, swap_table, write_reports, AblationSpec,
    BenchmarkSpec, ExtractorChoice, ExtractorMode, Pipeline, PipelineConfig, StageName,
};
use crate::util::write_atomic;
use crate::{AcousticModel, FeatureMatrix};

#[derive(Parser, Debug)]
#[command(
    name = "crossadapt",
    version,
    about = "Cross-lingual multi-stage acoustic model adaptation"
)]
struct Cli {
    /// Worker threads for per-utterance parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory; everything the command writes goes below it.
    #[arg(long)]
    out: PathBuf,
    /// Seed for every random choice the command makes.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the two-language benchmark (corpora, pools, pipeline.toml).
    Synth {
        #[command(flatten)]
        common: Common,
        /// Benchmark sizes as TOML; defaults to the desk-scale benchmark.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print corpus statistics for one or more manifests.
    Stats {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Expand a manifest with an augmentation recipe.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Recipe as TOML.
        #[arg(long)]
        recipe: PathBuf,
        /// Directory with `rirs/` and `noises/` pools.
        #[arg(long)]
        pools: PathBuf,
    },
    /// Compute MFCCs for a manifest and train a speaker-embedding extractor on it.
    Featurize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Feature settings as TOML; defaults to the desk-scale front end.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a pipeline up to and including one stage and export its model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        /// stage1, stage2, stage3 or scratch.
        #[arg(long)]
        stage: String,
    },
    /// Weight transfer between checkpoints.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// `hidden` (new output layer) or `full`.
        #[arg(long)]
        mode: String,
        /// Phone symbols, one per line; required for hidden transfer.
        #[arg(long)]
        phones: Option<PathBuf>,
    },
    /// Run the configured stages and evaluate the final model.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run ablation setups and print the comparison table.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        /// `all`, or comma-separated setup names / stage lists like `1+3`.
        #[arg(long, default_value = "all")]
        setups: String,
    },
    /// Train and evaluate Stage 2 under all initialization x extractor combinations.
    SwapIvec {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        /// Allow evaluating a model with an extractor other than its own.
        #[arg(long)]
        override_fingerprint: bool,
    },
    /// Word error rate between line-aligned reference and hypothesis files.
    Score {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
    },
}

/// Parses `argv` (program name first), runs the command, and returns the exit code.
pub fn run<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(j) = cli.jobs {
        // Fails only if a pool already exists, in which case that pool is used.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    settings: T,
}

fn write_run_manifest<T: Serialize>(
    out: &Path,
    command: &str,
    seed: Option<u64>,
    settings: T,
) -> Result<()> {
    let m = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        settings,
    };
    write_atomic(
        &out.join("run_manifest.json"),
        serde_json::to_string_pretty(&m)
            .expect("manifest serializes")
            .as_bytes(),
    )
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Loads a pipeline config, applying `--seed` and `--out`.
fn pipeline_config(path: &Path, common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.out_dir = common.out.clone();
    cfg.validate()?;
    write_atomic(
        &common.out.join("resolved_config.toml"),
        cfg.to_toml().as_bytes(),
    )?;
    Ok(cfg)
}

fn parse_stage(s: &str) -> Result<StageName> {
    serde_json::from_value(json!(s)).map_err(|_| Error::Config(format!("unknown stage `{s}`")))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { common, config } => {
            let mut spec: BenchmarkSpec = match &config {
                Some(p) => read_toml(p)?,
                None => BenchmarkSpec::default(),
            };
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            build_benchmark(&spec, &common.out)?;
            write_run_manifest(&common.out, "synth", Some(spec.seed), &spec)?;
            println!("wrote benchmark to {}", common.out.display());
        }
        Command::Stats { manifests } => {
            println!("corpus | minutes | avg segment | words/segment | words/s");
            for p in manifests {
                let m = load_manifest(&p)?;
                println!("{}", compute_stats(&m)?.table_row(&p.display().to_string()));
            }
        }
        Command::Augment {
            common,
            manifest,
            recipe,
            pools,
        } => {
            let mut recipe: AugmentationRecipe = read_toml(&recipe)?;
            if let Some(s) = common.seed {
                recipe.seed = s;
            }
            let m = load_manifest(&manifest)?;
            let pools = AugmentationPools::<f64> {
                rirs: load_rir_pool(&pools.join("rirs"))?,
                noises: load_noise_pool(&pools.join("noises"))?,
            };
            let out = apply_recipe(
                &m,
                &recipe,
                &pools,
                &common.out,
                FeatureConfig::default().geometry(),
            )?;
            save_manifest(&out, &common.out.join("manifest.jsonl"))?;
            write_run_manifest(&common.out, "augment", Some(recipe.seed), &recipe)?;
            println!("{} -> {} utterances", m.len(), out.len());
        }
        Command::Featurize {
            common,
            manifest,
            config,
        } => {
            let cfg: FeatureConfig = match &config {
                Some(p) => read_toml(p)?,
                None => FeatureConfig::default(),
            };
            let seed = common.seed.unwrap_or(0);
            let m = load_manifest(&manifest)?;
            let mfcc = MfccComputer::<f64>::new(&cfg)?;
            let feats: Vec<FeatureMatrix> = m
                .entries
                .iter()
                .map(|u| mfcc.compute(&u.load_audio()?))
                .collect::<Result<_>>()?;
            let extractor =
                train_extractor_from_features(&m, &feats, &cfg, cfg.embedding_dim, seed)?;
            for (u, f) in m.entries.iter().zip(&feats) {
                save_features(f, &common.out.join("mfcc").join(format!("{}.xfea", u.id)))?;
            }
            save_extractor(&extractor, &common.out.join("extractor.bin"))?;
            write_run_manifest(&common.out, "featurize", Some(seed), &cfg)?;
            println!(
                "{} utterances, extractor {}",
                m.len(),
                extractor.fingerprint
            );
        }
        Command::Train {
            common,
            config,
            stage,
        } => {
            let target = parse_stage(&stage)?;
            let cfg = pipeline_config(&config, &common)?;
            let upto = cfg
                .stages
                .iter()
                .position(|s| s.name == target)
                .ok_or_else(|| Error::Config(format!("stage `{stage}` is not configured")))?;
            let mut p = Pipeline::new(cfg.clone())?;
            let mut prev = None;
            for s in &cfg.stages[..=upto] {
                let choice = match s.extractor {
                    ExtractorMode::TrainNew => ExtractorChoice::TrainNew,
                    ExtractorMode::Inherit => ExtractorChoice::Inherit,
                };
                prev = Some(p.run_stage(s, prev.as_deref(), choice, Default::default())?);
            }
            let out = prev.expect("at least one stage");
            save_checkpoint(&out.model, &common.out.join("model.ckpt"))?;
            save_extractor(&out.extractor, &common.out.join("extractor.bin"))?;
            write_atomic(
                &common.out.join("log.json"),
                serde_json::to_string_pretty(&out.record.log)
                    .expect("log")
                    .as_bytes(),
            )?;
            write_run_manifest(
                &common.out,
                "train",
                Some(cfg.seed),
                json!({ "stage": stage }),
            )?;
            for e in &out.record.log.epochs {
                println!(
                    "epoch {} loss {:.4} lr {:.6}..{:.6}",
                    e.epoch, e.loss, e.lr_start, e.lr_end
                );
            }
        }
        Command::Transfer {
            common,
            model,
            mode,
            phones,
        } => {
            let src: AcousticModel = load_checkpoint(&model)?;
            let dst = match mode.as_str() {
                "full" => transfer_full(&src)?,
                "hidden" => {
                    let path = phones
                        .ok_or_else(|| Error::Config("hidden transfer needs --phones".into()))?;
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    let set: Vec<String> = text.split_whitespace().map(str::to_string).collect();
                    transfer_hidden(&src, &set, common.seed.unwrap_or(0))?
                }
                other => return Err(Error::Config(format!("unknown transfer mode `{other}`"))),
            };
            save_checkpoint(&dst, &common.out.join("model.ckpt"))?;
            write_run_manifest(
                &common.out,
                "transfer",
                common.seed,
                json!({ "mode": mode }),
            )?;
        }
        Command::Pipeline { common, config } => {
            let cfg = pipeline_config(&config, &common)?;
            let mut p = Pipeline::new(cfg.clone())?;
            let report = p.run_pipeline()?;
            let table = ablation_table(std::slice::from_ref(&report));
            write_reports(
                &common.out,
                "report",
                &table,
                &records(std::slice::from_ref(&report)),
            )?;
            write_atomic(
                &common.out.join("run_report.json"),
                serde_json::to_string_pretty(&report)
                    .expect("report")
                    .as_bytes(),
            )?;
            write_run_manifest(&common.out, "pipeline", Some(cfg.seed), &cfg)?;
            print!("{table}");
        }
        Command::Ablate {
            common,
            config,
            setups,
        } => {
            let specs = AblationSpec::parse_list(&setups)?;
            let cfg = pipeline_config(&config, &common)?;
            let mut p = Pipeline::new(cfg.clone())?;
            let reports = p.run_ablation(&specs)?;
            let table = ablation_table(&reports);
            write_reports(&common.out, "ablation", &table, &records(&reports))?;
            write_atomic(
                &common.out.join("ablation.json"),
                serde_json::to_string_pretty(&reports)
                    .expect("reports")
                    .as_bytes(),
            )?;
            write_run_manifest(
                &common.out,
                "ablate",
                Some(cfg.seed),
                json!({ "setups": setups, "config": cfg }),
            )?;
            print!("{table}");
        }
        Command::SwapIvec {
            common,
            config,
            override_fingerprint,
        } => {
            if !override_fingerprint {
                return Err(Error::Config(
                    "the transferred-model/target-extractor cell feeds a model a foreign extractor; pass --override-fingerprint".into(),
                ));
            }
            let cfg = pipeline_config(&config, &common)?;
            let mut p = Pipeline::new(cfg.clone())?;
            let report = p.extractor_swap_experiment()?;
            let table = swap_table(&report);
            write_atomic(&common.out.join("swap.txt"), table.as_bytes())?;
            write_atomic(
                &common.out.join("swap.json"),
                serde_json::to_string_pretty(&report)
                    .expect("report")
                    .as_bytes(),
            )?;
            write_run_manifest(&common.out, "swap-ivec", Some(cfg.seed), &cfg)?;
            print!("{table}");
        }
        Command::Score { reference, hyp } => {
            let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
            let (r, h) = (read(&reference)?, read(&hyp)?);
            let (rl, hl): (Vec<&str>, Vec<&str>) = (r.lines().collect(), h.lines().collect());
            if rl.len() != hl.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} reference lines but {} hypothesis lines",
                    rl.len(),
                    hl.len()
                )));
            }
            let rules = NormalizationRules::default();
            let per: Vec<WerReport> = rl
                .iter()
                .zip(&hl)
                .filter(|(r, _)| !normalize(r, rules).is_empty())
                .map(|(r, h)| wer(&normalize(r, rules), &normalize(h, rules)))
                .collect::<Result<_>>()?;
            let total = WerReport::pooled(&per)?;
            println!(
                "WER {:.2} (S={} D={} I={} N={})",
                100.0 * total.wer,
                total.substitutions,
                total.deletions,
                total.insertions,
                total.reference_words
            );
        }
    }
    Ok(())
}
