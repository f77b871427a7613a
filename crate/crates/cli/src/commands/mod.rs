mod eval;
mod render;
mod scene;
mod train;
mod train_flow;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use svrf_core::eval::Dataset;

use crate::error::{CliError, CliResult};
use crate::manifest::write_atomic;

pub use eval::eval;
pub use render::{render, Split};
pub use scene::make_scene;
pub use train::train;
pub use train_flow::train_flow;

pub(crate) fn load_dataset(path: &Path) -> CliResult<Dataset> {
    Dataset::load(path).map_err(|e| CliError::from(e).context(format!("dataset {}", path.display())))
}

/// Parses a TOML file; a missing file is an I/O error, bad contents an
/// argument error.
pub(crate) fn read_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub(crate) fn write_checkpoint(path: &Path, store: &svrf_autodiff::ParameterStore) -> CliResult<()> {
    write_atomic(path, &svrf_autodiff::checkpoint::to_bytes(store))
}

pub(crate) fn load_checkpoint(path: &Path) -> CliResult<svrf_autodiff::ParameterStore> {
    let bytes = std::fs::read(path).map_err(|e| CliError::from(e).context(path.display()))?;
    svrf_autodiff::checkpoint::from_bytes(&bytes).map_err(|e| CliError::from(e).context(path.display()))
}

/// Line-delimited JSON records, flushed after each line.
pub(crate) struct JsonLines {
    file: std::io::BufWriter<std::fs::File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::create(path).map_err(|e| CliError::from(e).context(path.display()))?;
        Ok(Self {
            file: std::io::BufWriter::new(file),
        })
    }

    pub fn push(&mut self, record: &impl Serialize) -> CliResult<()> {
        serde_json::to_writer(&mut self.file, record)?;
        self.file.write_all(b"\n")?;
        self.file.flush()?;
        Ok(())
    }
}
