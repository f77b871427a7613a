//! Run manifests: one `run.json` per output directory, written before the
//! run does any work.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{CliError, CliResult};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments as given, without the program name.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// SHA-256 over every input file, keyed by path relative to its input root.
    pub input_hash: String,
    pub inputs: Vec<String>,
    pub created: String,
    /// Relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: impl Serialize,
        seed: Option<u64>,
        inputs: &[&Path],
        outputs: &[&str],
    ) -> CliResult<Self> {
        Ok(Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config: serde_json::to_value(config)?,
            seed,
            input_hash: content_hash(inputs)?,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            created: timestamp()?,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Creates `dir` and writes the manifest into it.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&dir.join(RUN_MANIFEST), text.as_bytes())
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| CliError::from(e).context(tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok(())
}

fn content_hash(inputs: &[&Path]) -> CliResult<String> {
    let mut hasher = Sha256::new();
    for root in inputs {
        let mut files: Vec<PathBuf> = WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file() && e.file_name() != RUN_MANIFEST)
            .map(|e| e.into_path())
            .collect();
        if files.is_empty() && !root.exists() {
            return Err(CliError::io(format!("{}: no such file or directory", root.display())));
        }
        files.sort();
        for file in files {
            let rel = file.strip_prefix(root).unwrap_or(&file);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            let bytes = std::fs::read(&file).map_err(|e| CliError::from(e).context(file.display()))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(format!("sha256:{}", hex::encode(hasher.finalize())))
}

/// RFC 3339 UTC time, taken from `SOURCE_DATE_EPOCH` when set.
fn timestamp() -> CliResult<String> {
    let secs = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse::<i64>()
            .map_err(|_| CliError::usage(format!("SOURCE_DATE_EPOCH is not an integer: `{v}`")))?,
        Err(_) => std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0),
    };
    let t = time::OffsetDateTime::from_unix_timestamp(secs).map_err(|e| CliError::usage(e.to_string()))?;
    t.format(&time::format_description::well_known::Rfc3339)
        .map_err(|e| CliError::usage(e.to_string()))
}
