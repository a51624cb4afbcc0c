//! Generation, file formats, pipeline runs, traces and benchmarks on top of
//! `bichore-core`.

pub mod bench;
pub mod digest;
pub mod error;
pub mod format;
pub mod gen;
pub mod pipeline;
pub mod trace;

pub use error::{HarnessError, Result};
pub use pipeline::{run_pipeline, Mode, PipelineOptions, RunOutput, RunReport};
