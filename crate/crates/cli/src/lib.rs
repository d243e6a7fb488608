//! Declarative experiment runner for the horolab model-space laboratory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod verify;

use std::path::{Path, PathBuf};

pub use config::{parse, Config, ConfigError, Format};
pub use error::CliError;
pub use report::ExperimentReport;

/// Parses `path`, runs the experiment and writes its report files.
///
/// The output directory is `out` if given, else `output.path` from the
/// config resolved against the config file's directory, else `HOROLAB_OUT`,
/// else the current directory.
pub fn run_file(path: &Path, out: Option<&Path>) -> Result<(ExperimentReport, Vec<PathBuf>), CliError> {
    let src = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let cfg = parse(&src)?;
    let dir = match (out, &cfg.output.path) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(p)) => path.parent().unwrap_or(Path::new(".")).join(p),
        (None, None) => std::env::var_os("HOROLAB_OUT").map_or_else(|| PathBuf::from("."), PathBuf::from),
    };
    let report = experiments::run(&cfg)?;
    let written = report
        .emit(&dir, cfg.output.format)
        .map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    Ok((report, written))
}
