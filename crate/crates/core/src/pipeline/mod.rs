//! Three-stage training protocol, baselines, ablations and the extractor swap
//! experiment, with content-addressed reuse of stage outputs.

mod benchmark;
mod config;
mod report;
mod runner;

pub use benchmark::{build_benchmark, default_pipeline_config, BenchmarkSpec};
pub use config::{
    AblationSpec, ExtractorMode, PipelineConfig, StageConfig, StageName, TestSetConfig,
    TransferMode,
};
pub use report::{ablation_table, records, swap_table, write_reports};
pub use runner::{
    effective_train_config, hidden_digest, setup_name, ExtractorChoice, ExtractorSource,
    MismatchProbe, ModelInit, Pipeline, RunReport, StageOutput, StageRecord, SwapCell, SwapReport,
};
