//! Library surface of the pipeline driver, so integration tests can run
//! subcommands in-process.

pub mod config;
pub mod pipeline;

pub use config::{ConfigError, RunConfig};
pub use pipeline::{
    run_build_dataset, run_build_prompts, run_cluster, run_evaluate, run_ingest, run_report,
    PipelineError, PipelineOutcome, PredictionRecord,
};
