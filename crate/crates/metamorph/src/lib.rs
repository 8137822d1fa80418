//! Batch front end: job configs, image files and output writing.

pub mod config;
pub mod io;
pub mod job;

pub use config::{JobConfig, Mode, SolverConfig};
pub use io::{load_image, save_image, ImageIoError};
pub use job::{run_job, EnergyRow, JobSummary, SolveEntry};
