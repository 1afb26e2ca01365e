//! Report envelope and CLI error type.

use serde::Serialize;
use serde_json::Value;
use std::fmt;
use std::path::Path;

pub const TOOL: &str = "hyperdyn";

/// Outcome of a command. `Negative` is a finding (a rejected certificate,
/// an escaping graph), reported with exit code 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Positive,
    Negative,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Positive
        } else {
            Verdict::Negative
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Positive => 0,
            Verdict::Negative => 2,
        }
    }
}

/// Every report carries the tool, library version, command and full
/// configuration ahead of the result. Object keys inside `config` and
/// `result` are sorted, so identical inputs give identical bytes.
#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub verdict: Verdict,
    pub result: Value,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are plain JSON");
        s.push('\n');
        s
    }
}

#[derive(Debug)]
pub enum CliError {
    /// A model or data file failed to parse.
    Parse { file: String, msg: String },
    /// Input parsed but violates a model invariant.
    Validation { file: String, msg: String },
    Io { file: String, msg: String },
    Core(hyperdyn_core::Error),
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse { file, msg } => write!(f, "ParseError: {file}: {msg}"),
            CliError::Validation { file, msg } => write!(f, "ValidationError: {file}: {msg}"),
            CliError::Io { file, msg } => write!(f, "ParseError: {file}: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
        }
    }
}

impl From<hyperdyn_core::Error> for CliError {
    fn from(e: hyperdyn_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io { file: path.display().to_string(), msg: e.to_string() })
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io { file: path.display().to_string(), msg: e.to_string() })
}

/// Parse JSON with the file name and serde's line/column in the message.
pub fn parse_json<T: serde::de::DeserializeOwned>(file: &str, text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse { file: file.to_string(), msg: e.to_string() })
}

pub fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable result")
}

/// Write rows as CSV with the given header.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Io { file: path.display().to_string(), msg: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io { file: path.display().to_string(), msg: e.to_string() })
}
