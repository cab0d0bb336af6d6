//! Command-line front end for the PermDNN tools: model files, benchmark
//! presets, experiment runs and report output.

pub mod config_file;
pub mod model_file;
pub mod presets;
pub mod report;
pub mod runner;

pub use config_file::{parse_config, RunConfig};
pub use model_file::{Encoding, ModelFile, ModelFileError};
pub use report::Format;
pub use runner::{run_sweep, run_workload, Numeric, RunFlags, RunReport, Source};
