//! Config loading, hashing and artifact writing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Errors that end a command with exit code 2.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<postcon_core::Error> for CliError {
    fn from(e: postcon_core::Error) -> Self {
        match e {
            postcon_core::Error::Io(m) => CliError::Io(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Read a TOML config file, or the default when no path is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn to_toml<T: Serialize>(settings: &T) -> Result<String, CliError> {
    toml::to_string(settings).map_err(|e| CliError::Config(e.to_string()))
}

/// First 16 hex digits of the SHA-256 of the resolved config.
pub fn config_hash(resolved_toml: &str) -> String {
    Sha256::digest(resolved_toml.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Output directory plus the provenance header stamped on every file.
pub struct Artifacts {
    dir: PathBuf,
    command: String,
    hash: String,
    seeds: String,
    config: String,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &str, resolved_toml: &str, seeds: &[u64]) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            hash: config_hash(resolved_toml),
            seeds: seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            config: resolved_toml.into(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("postcon {}", self.command),
            format!("config_hash: {}", self.hash),
            format!("seeds: {}", self.seeds),
        ];
        lines.extend(self.config.lines().filter(|l| !l.trim().is_empty()).map(|l| format!("config: {l}")));
        lines
    }

    /// Write `body` (CSV with its own column header) after `#` comment lines.
    pub fn write_csv(&self, name: &str, body: &[u8]) -> Result<PathBuf, CliError> {
        let mut out = String::new();
        for l in self.header_lines() {
            out.push_str("# ");
            out.push_str(&l);
            out.push('\n');
        }
        out.push_str(&String::from_utf8_lossy(body));
        self.write(name, out)
    }

    pub fn write_svg(&self, name: &str, svg: &str) -> Result<PathBuf, CliError> {
        let comment: String = self
            .header_lines()
            .iter()
            .map(|l| format!("<!-- {} -->\n", l.replace("--", "- -")))
            .collect();
        self.write(name, comment + svg)
    }

    fn write(&self, name: &str, text: String) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
