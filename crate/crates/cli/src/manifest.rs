//! Experiment manifest: a JSON description of a batch attack — which sign
//! images to attack, with which patches, against which classifier, over
//! which shrink-fraction schedule.
//!
//! Relative paths inside a manifest are resolved against the manifest
//! file's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snowball_core::classifier::InputShape;
use snowball_core::mask::MaskParams;
use snowball_core::{ClassLabel, SearchConfig, StubRule};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

/// One sign image to attack. Without an explicit `mask` image the runner
/// derives one with the mask pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignEntry {
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// The label the clean image must classify as.
    pub true_label: ClassLabel,
}

/// One patch image (RGBA PNG; transparency is respected).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchEntry {
    pub image: PathBuf,
    #[serde(default = "default_rotatable")]
    pub rotatable: bool,
}

fn default_rotatable() -> bool {
    true
}

fn default_timeout() -> f64 {
    10.0
}

/// Which oracle the experiment queries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierSpec {
    /// Local CNN inference from a weights file plus a class list.
    Builtin {
        weights: PathBuf,
        classes: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<InputShape>,
    },
    /// HTTP classifier: POST PNG, receive a JSON verdict. The
    /// `SNOWBALL_ENDPOINT` environment variable overrides `endpoint`.
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
    /// Deterministic scriptable oracle (see [`StubRule`]).
    Stub {
        #[serde(flatten)]
        rule: StubRule,
    },
}

fn default_schedule() -> Vec<f64> {
    vec![1.0]
}

/// The full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub signs: Vec<SignEntry>,
    pub patches: Vec<PatchEntry>,
    pub classifier: ClassifierSpec,
    /// Search parameters. `shrink_fraction` here is ignored: the schedule
    /// below supplies it per run.
    #[serde(default)]
    pub search: SearchConfig,
    /// Shrink fractions to sweep, e.g. `[1.0, 0.75, 0.5, 0.25]`. The 1.0
    /// entry (or the first entry if 1.0 is absent) is the baseline other
    /// fractions are compared against.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<f64>,
    /// Parameters for masks derived from sign images (entries without an
    /// explicit mask file).
    #[serde(default)]
    pub mask_params: MaskParams,
    pub output_dir: PathBuf,
    /// Upper bound on evaluation worker threads. Defaults to the available
    /// parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// Formats a schedule fraction the way the results layout spells it
/// (two decimals: `1.00`, `0.75`, ...).
#[must_use]
pub fn fraction_key(fraction: f64) -> String {
    format!("{fraction:.2}")
}

/// File stem used as the directory name for a sign or patch.
pub fn entry_stem(path: &Path) -> Result<String, ManifestError> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if stem.is_empty() {
        return Err(ManifestError::Invalid(format!(
            "path {} has no usable file stem",
            path.display()
        )));
    }
    Ok(stem)
}

impl Manifest {
    /// Reads, path-resolves, and validates a manifest file.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: Manifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.resolve_paths(base);
        manifest.validate()?;
        Ok(manifest)
    }

    /// Parses and validates manifest JSON without touching the filesystem.
    /// Relative paths stay relative.
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let manifest: Manifest = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for sign in &mut self.signs {
            resolve(&mut sign.image);
            if let Some(mask) = &mut sign.mask {
                resolve(mask);
            }
        }
        for patch in &mut self.patches {
            resolve(&mut patch.image);
        }
        if let ClassifierSpec::Builtin {
            weights, classes, ..
        } = &mut self.classifier
        {
            resolve(weights);
            resolve(classes);
        }
        resolve(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |msg: String| Err(ManifestError::Invalid(msg));
        if self.signs.is_empty() {
            return invalid("at least one sign entry is required".into());
        }
        if self.patches.is_empty() {
            return invalid("at least one patch entry is required".into());
        }

        // All referenced image paths must be pairwise distinct.
        let mut seen_paths: HashSet<&Path> = HashSet::new();
        for path in self
            .signs
            .iter()
            .map(|s| s.image.as_path())
            .chain(self.signs.iter().filter_map(|s| s.mask.as_deref()))
            .chain(self.patches.iter().map(|p| p.image.as_path()))
        {
            if !seen_paths.insert(path) {
                return invalid(format!("path {} is referenced twice", path.display()));
            }
        }

        // Stems become directory names in the results layout, so they must
        // be unique within each group.
        let mut sign_stems = HashSet::new();
        for sign in &self.signs {
            let stem = entry_stem(&sign.image)?;
            if !sign_stems.insert(stem.clone()) {
                return invalid(format!(
                    "two sign images share the directory name {stem:?}"
                ));
            }
        }
        let mut patch_stems = HashSet::new();
        for patch in &self.patches {
            let stem = entry_stem(&patch.image)?;
            if !patch_stems.insert(stem.clone()) {
                return invalid(format!(
                    "two patch images share the directory name {stem:?}"
                ));
            }
        }

        if self.schedule.is_empty() {
            return invalid("schedule must contain at least one fraction".into());
        }
        let mut keys = HashSet::new();
        for &f in &self.schedule {
            if !(f.is_finite() && f > 0.0 && f <= 1.0) {
                return invalid(format!("schedule fraction {f} is outside (0, 1]"));
            }
            if !keys.insert(fraction_key(f)) {
                return invalid(format!(
                    "schedule fractions collide at two decimals ({})",
                    fraction_key(f)
                ));
            }
        }

        if self.workers == Some(0) {
            return invalid("workers must be at least 1".into());
        }
        if let ClassifierSpec::Remote { timeout_secs, .. } = &self.classifier {
            if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                return invalid(format!("timeout_secs must be positive, got {timeout_secs}"));
            }
        }
        Ok(())
    }

    /// The fraction other schedule entries are compared against: 1.0 when
    /// present, otherwise the first entry.
    #[must_use]
    pub fn baseline_fraction(&self) -> f64 {
        self.schedule
            .iter()
            .copied()
            .find(|f| fraction_key(*f) == fraction_key(1.0))
            .unwrap_or(self.schedule[0])
    }
}
