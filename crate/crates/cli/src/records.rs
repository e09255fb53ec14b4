//! On-disk result records shared by the experiment runner and the report
//! generator.
//!
//! Results layout under the output directory:
//!
//! ```text
//! run_meta.json
//! <sign>/<patch>/<fraction>/result.json
//! <sign>/<patch>/<fraction>/adversarial.png   (successful cells only)
//! ```
//!
//! `<fraction>` is the schedule value at two decimals (`1.00`, `0.75`, ...).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snowball_core::{CandidateScore, ClassLabel};
use thiserror::Error;

use crate::manifest::fraction_key;

pub const META_FILE: &str = "run_meta.json";
pub const RESULT_FILE: &str = "result.json";
pub const ADVERSARIAL_FILE: &str = "adversarial.png";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Identity of a run: what was attacked and in which order. Written before
/// any cell so reports work on partial runs, and checked on resume so two
/// different experiments cannot interleave in one directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMeta {
    pub seed: Option<u64>,
    pub schedule: Vec<f64>,
    /// Sign directory names, in manifest order.
    pub signs: Vec<String>,
    /// Patch directory names, in manifest order.
    pub patches: Vec<String>,
    pub workers: Option<usize>,
}

impl RunMeta {
    pub fn load(dir: &Path) -> Result<Self, RecordError> {
        read_json(&dir.join(META_FILE))
    }

    pub fn save(&self, dir: &Path) -> Result<(), RecordError> {
        write_json(&dir.join(META_FILE), self)
    }

    /// True when two metas describe the same experiment (seed and worker
    /// count are provenance, not identity).
    #[must_use]
    pub fn same_experiment(&self, other: &Self) -> bool {
        self.signs == other.signs
            && self.patches == other.patches
            && self.schedule.iter().map(|f| fraction_key(*f)).collect::<Vec<_>>()
                == other.schedule.iter().map(|f| fraction_key(*f)).collect::<Vec<_>>()
    }
}

/// Outcome class of one result cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    /// A misclassifying placement was found.
    Success,
    /// The search completed but nothing flipped the label.
    NoFlip,
    /// The cell could not be evaluated.
    Error,
}

/// One `result.json`: the outcome of attacking one sign with one patch at
/// one shrink fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRecord {
    pub sign: String,
    pub patch: String,
    pub fraction: f64,
    pub sign_index: usize,
    pub patch_index: usize,
    pub true_label: ClassLabel,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<CandidateScore>,
    pub evaluations: u64,
    pub elapsed_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// True when the error was a transport failure worth retrying; resume
    /// recomputes such cells.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub error_retryable: bool,
}

impl CellRecord {
    #[must_use]
    pub fn status(&self) -> CellStatus {
        if self.error.is_some() {
            CellStatus::Error
        } else if self.success {
            CellStatus::Success
        } else {
            CellStatus::NoFlip
        }
    }
}

/// Directory holding one cell's outputs.
#[must_use]
pub fn cell_dir(root: &Path, sign: &str, patch: &str, fraction: f64) -> PathBuf {
    root.join(sign).join(patch).join(fraction_key(fraction))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, RecordError> {
    let text = std::fs::read_to_string(path).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| RecordError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RecordError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| RecordError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a cell record if its `result.json` exists and parses; `Ok(None)`
/// when the file is absent.
pub fn try_load_cell(
    root: &Path,
    sign: &str,
    patch: &str,
    fraction: f64,
) -> Result<Option<CellRecord>, RecordError> {
    let path = cell_dir(root, sign, patch, fraction).join(RESULT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}
