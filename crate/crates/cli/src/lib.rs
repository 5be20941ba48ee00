//! Command-line front end for `curvecut-core`: configuration, the
//! segmentation and inpainting pipelines, and the experiment reports.

pub mod config;
pub mod exit;
pub mod pipeline;

pub use config::{OptimizerKind, RunConfig, Task};
pub use exit::{CliError, CliResult, ErrorKind};
pub use pipeline::{run_inpaint, run_segment, segment_image, Segmentation};
