//! Batch experiment runner: executes a manifest cell by cell and writes
//! the results layout consumed by the report generator.
//!
//! Execution order is signs (manifest order), then schedule fractions,
//! then the patch sequence inside one `optimized_search` call. One
//! (sign, fraction) pair forms a resume group: if every cell of the group
//! already validates on disk it is skipped, otherwise the whole group is
//! recomputed (the patch sequence shares state, so cells inside a group
//! are not independently resumable). Deterministic failures (unreadable
//! files, search errors) are recorded into the affected cells and never
//! abort the batch; transport errors are marked retryable so a resumed
//! run tries them again.

use std::path::{Path, PathBuf};
use std::time::Duration;

use snowball_core::classifier::ClassListError;
use snowball_core::mask::MaskError;
use snowball_core::{
    generate_mask, optimized_search, BinaryMask, BuiltinClassifier, ClassLabel, Oracle,
    OracleError, Patch, Raster, SearchError, StubClassifier,
};
use thiserror::Error;

use crate::manifest::{entry_stem, ClassifierSpec, Manifest, ManifestError};
use crate::records::{
    cell_dir, try_load_cell, write_json, CellRecord, RecordError, RunMeta, ADVERSARIAL_FILE,
    RESULT_FILE,
};
use crate::remote::RemoteClassifier;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("cannot prepare {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build classifier: {0}")]
    Oracle(#[from] OracleError),
    #[error("cannot load class list: {0}")]
    ClassList(#[from] ClassListError),
    #[error("cannot save adversarial image: {0}")]
    Raster(#[from] snowball_core::raster::RasterError),
    #[error("invalid run: {0}")]
    Invalid(String),
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
}

/// Overrides supplied on the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Seed recorded in `run_meta.json` for provenance.
    pub seed: Option<u64>,
    /// Replaces the manifest's `output_dir`.
    pub output_dir: Option<PathBuf>,
}

/// What a run did, for the CLI summary line.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    /// Cells computed and written by this invocation.
    pub cells_written: usize,
    /// (sign, fraction) groups skipped because they were already complete.
    pub groups_skipped: usize,
    /// Total cells the manifest describes.
    pub cells_total: usize,
}

/// Instantiates the oracle a manifest asks for. For remote classifiers the
/// `SNOWBALL_ENDPOINT` environment variable overrides the manifest URL.
pub fn build_oracle(spec: &ClassifierSpec) -> Result<Box<dyn Oracle>, RunnerError> {
    match spec {
        ClassifierSpec::Builtin {
            weights,
            classes,
            input,
        } => {
            let model = match input {
                Some(shape) => snowball_core::classifier::load_weights_with_input(weights, *shape),
                None => snowball_core::classifier::load_weights(weights),
            }
            .map_err(OracleError::Model)?;
            let labels = snowball_core::classifier::load_class_list(classes)?;
            Ok(Box::new(BuiltinClassifier::new(model, labels)?))
        }
        ClassifierSpec::Remote {
            endpoint,
            timeout_secs,
        } => {
            let endpoint = RemoteClassifier::endpoint_override().unwrap_or_else(|| endpoint.clone());
            Ok(Box::new(RemoteClassifier::new(
                endpoint,
                Duration::from_secs_f64(*timeout_secs),
            )?))
        }
        ClassifierSpec::Stub { rule } => Ok(Box::new(StubClassifier::new(rule.clone()))),
    }
}

struct LoadedSign {
    name: String,
    true_label: ClassLabel,
    /// Image and mask, or the reason they could not be prepared.
    content: Result<(Raster, BinaryMask), String>,
}

struct LoadedPatch {
    name: String,
    content: Result<Patch, String>,
}

fn load_signs(manifest: &Manifest) -> Result<Vec<LoadedSign>, RunnerError> {
    let mut signs = Vec::with_capacity(manifest.signs.len());
    for entry in &manifest.signs {
        let name = entry_stem(&entry.image)?;
        let content = (|| -> Result<(Raster, BinaryMask), String> {
            let image = Raster::load(&entry.image)
                .map_err(|e| format!("cannot load sign image {}: {e}", entry.image.display()))?
                .to_rgb();
            let mask = match &entry.mask {
                Some(path) => {
                    let raster = Raster::load(path)
                        .map_err(|e| format!("cannot load mask {}: {e}", path.display()))?;
                    BinaryMask::from_raster(&raster)
                        .map_err(|e| format!("invalid mask {}: {e}", path.display()))?
                }
                None => generate_mask(&image, &manifest.mask_params)
                    .map_err(|e: MaskError| format!("cannot derive mask: {e}"))?,
            };
            if mask.width() != image.width() || mask.height() != image.height() {
                return Err(format!(
                    "mask is {}x{} but the sign image is {}x{}",
                    mask.width(),
                    mask.height(),
                    image.width(),
                    image.height()
                ));
            }
            Ok((image, mask))
        })();
        signs.push(LoadedSign {
            name,
            true_label: entry.true_label.clone(),
            content,
        });
    }
    Ok(signs)
}

fn load_patches(manifest: &Manifest) -> Result<Vec<LoadedPatch>, RunnerError> {
    let mut patches = Vec::with_capacity(manifest.patches.len());
    for entry in &manifest.patches {
        let name = entry_stem(&entry.image)?;
        let content = Raster::load(&entry.image)
            .map(|img| Patch {
                image: img.to_rgba(),
                rotatable: entry.rotatable,
            })
            .map_err(|e| format!("cannot load patch image {}: {e}", entry.image.display()));
        patches.push(LoadedPatch { name, content });
    }
    Ok(patches)
}

/// True when a search error is worth retrying on a resumed run.
fn is_retryable(err: &SearchError) -> bool {
    matches!(
        err,
        SearchError::Oracle {
            source: OracleError::Transport(_),
            ..
        } | SearchError::CleanCheckFailed(OracleError::Transport(_))
    )
}

fn write_cell(
    root: &Path,
    record: &CellRecord,
    adversarial: Option<&Raster>,
) -> Result<(), RunnerError> {
    let dir = cell_dir(root, &record.sign, &record.patch, record.fraction);
    std::fs::create_dir_all(&dir).map_err(|source| RunnerError::Io {
        path: dir.clone(),
        source,
    })?;
    write_json(&dir.join(RESULT_FILE), record)?;
    let adversarial_path = dir.join(ADVERSARIAL_FILE);
    match adversarial {
        Some(image) => image.save(&adversarial_path)?,
        None => {
            // Drop stale images if the cell was recomputed without a win.
            if adversarial_path.exists() {
                std::fs::remove_file(&adversarial_path).map_err(|source| RunnerError::Io {
                    path: adversarial_path,
                    source,
                })?;
            }
        }
    }
    Ok(())
}

/// A cell is complete when its record parses, is not flagged for retry,
/// and a successful record still has its adversarial image.
fn group_complete(root: &Path, sign: &str, patches: &[LoadedPatch], fraction: f64) -> bool {
    patches.iter().all(|patch| {
        match try_load_cell(root, sign, &patch.name, fraction) {
            Ok(Some(cell)) => {
                !cell.error_retryable
                    && (!cell.success
                        || cell_dir(root, sign, &patch.name, fraction)
                            .join(ADVERSARIAL_FILE)
                            .exists())
            }
            _ => false,
        }
    })
}

fn error_record(
    sign: &LoadedSign,
    sign_index: usize,
    patch: &LoadedPatch,
    patch_index: usize,
    fraction: f64,
    message: String,
    retryable: bool,
) -> CellRecord {
    CellRecord {
        sign: sign.name.clone(),
        patch: patch.name.clone(),
        fraction,
        sign_index,
        patch_index,
        true_label: sign.true_label.clone(),
        success: false,
        best: None,
        evaluations: 0,
        elapsed_secs: 0.0,
        error: Some(message),
        error_retryable: retryable,
    }
}

/// Runs (or resumes) the experiment a manifest describes.
pub fn run_experiment(manifest: &Manifest, opts: &RunOptions) -> Result<RunSummary, RunnerError> {
    manifest.validate()?;
    let out = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| manifest.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|source| RunnerError::Io {
        path: out.clone(),
        source,
    })?;

    let meta = RunMeta {
        seed: opts.seed,
        schedule: manifest.schedule.clone(),
        signs: manifest
            .signs
            .iter()
            .map(|s| entry_stem(&s.image))
            .collect::<Result<_, _>>()?,
        patches: manifest
            .patches
            .iter()
            .map(|p| entry_stem(&p.image))
            .collect::<Result<_, _>>()?,
        workers: manifest.workers,
    };
    if out.join(crate::records::META_FILE).exists() {
        let existing = RunMeta::load(&out)?;
        if !existing.same_experiment(&meta) {
            return Err(RunnerError::Invalid(format!(
                "output directory {} already holds a different experiment",
                out.display()
            )));
        }
    }
    meta.save(&out)?;

    let pool = match manifest.workers {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunnerError::ThreadPool(e.to_string()))?,
        ),
        None => None,
    };

    let oracle = build_oracle(&manifest.classifier)?;
    let signs = load_signs(manifest)?;
    let patches = load_patches(manifest)?;

    let body = || run_cells(manifest, &out, oracle.as_ref(), &signs, &patches);
    let (cells_written, groups_skipped) = match &pool {
        Some(pool) => pool.install(body)?,
        None => body()?,
    };

    Ok(RunSummary {
        output_dir: out,
        cells_written,
        groups_skipped,
        cells_total: manifest.signs.len() * manifest.patches.len() * manifest.schedule.len(),
    })
}

fn run_cells(
    manifest: &Manifest,
    out: &Path,
    oracle: &dyn Oracle,
    signs: &[LoadedSign],
    patches: &[LoadedPatch],
) -> Result<(usize, usize), RunnerError> {
    let mut cells_written = 0usize;
    let mut groups_skipped = 0usize;

    for (sign_index, sign) in signs.iter().enumerate() {
        for &fraction in &manifest.schedule {
            if group_complete(out, &sign.name, patches, fraction) {
                groups_skipped += 1;
                continue;
            }

            let mut records: Vec<(CellRecord, Option<Raster>)> = Vec::new();
            match &sign.content {
                Err(msg) => {
                    for (patch_index, patch) in patches.iter().enumerate() {
                        records.push((
                            error_record(
                                sign,
                                sign_index,
                                patch,
                                patch_index,
                                fraction,
                                msg.clone(),
                                false,
                            ),
                            None,
                        ));
                    }
                }
                Ok((image, mask)) => {
                    // The snowball sequence runs over the readable patches in
                    // manifest order; unreadable ones only get error cells.
                    let mut runnable: Vec<(usize, Patch)> = Vec::new();
                    for (patch_index, patch) in patches.iter().enumerate() {
                        match &patch.content {
                            Ok(p) => runnable.push((patch_index, p.clone())),
                            Err(msg) => records.push((
                                error_record(
                                    sign,
                                    sign_index,
                                    patch,
                                    patch_index,
                                    fraction,
                                    msg.clone(),
                                    false,
                                ),
                                None,
                            )),
                        }
                    }

                    if !runnable.is_empty() {
                        let mut config = manifest.search.clone();
                        config.shrink_fraction = fraction;
                        let sequence: Vec<Patch> =
                            runnable.iter().map(|(_, p)| p.clone()).collect();
                        let outcomes = match optimized_search(
                            image,
                            mask,
                            &sequence,
                            &sign.true_label,
                            oracle,
                            &config,
                        ) {
                            Ok(outcomes) => outcomes.into_iter().map(Some).collect::<Vec<_>>(),
                            Err(SearchError::InvalidConfig(msg)) => {
                                return Err(RunnerError::Invalid(format!(
                                    "search configuration rejected: {msg}"
                                )));
                            }
                            Err(other) => {
                                let msg = other.to_string();
                                for (patch_index, _) in &runnable {
                                    records.push((
                                        error_record(
                                            sign,
                                            sign_index,
                                            &patches[*patch_index],
                                            *patch_index,
                                            fraction,
                                            msg.clone(),
                                            false,
                                        ),
                                        None,
                                    ));
                                }
                                Vec::new()
                            }
                        };

                        for ((patch_index, _), outcome) in runnable.iter().zip(outcomes) {
                            let Some(outcome) = outcome else { continue };
                            let patch = &patches[*patch_index];
                            match outcome {
                                Ok(result) => {
                                    let record = CellRecord {
                                        sign: sign.name.clone(),
                                        patch: patch.name.clone(),
                                        fraction,
                                        sign_index,
                                        patch_index: *patch_index,
                                        true_label: sign.true_label.clone(),
                                        success: result.success,
                                        best: result.best.clone(),
                                        evaluations: result.evaluations,
                                        elapsed_secs: result.elapsed_secs,
                                        error: None,
                                        error_retryable: false,
                                    };
                                    records.push((record, result.adversarial));
                                }
                                Err(err) => {
                                    let retry = is_retryable(&err);
                                    records.push((
                                        error_record(
                                            sign,
                                            sign_index,
                                            patch,
                                            *patch_index,
                                            fraction,
                                            err.to_string(),
                                            retry,
                                        ),
                                        None,
                                    ));
                                }
                            }
                        }
                    }
                }
            }

            for (record, adversarial) in &records {
                write_cell(out, record, adversarial.as_ref())?;
                cells_written += 1;
            }
        }
    }
    Ok((cells_written, groups_skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{PatchEntry, SignEntry};
    use snowball_core::{SearchConfig, StubRule};

    /// Writes a uniform RGB PNG and returns its path.
    fn write_png(dir: &Path, name: &str, side: u32, value: u8) -> PathBuf {
        let path = dir.join(name);
        Raster::filled(side, side, snowball_core::Channels::Rgb, value)
            .save(&path)
            .unwrap();
        path
    }

    /// 1 sign (uniform dark), white patch that always flips the quadrant
    /// verdict, background-colored patch that never does.
    fn test_manifest(dir: &Path) -> Manifest {
        let sign = write_png(dir, "sign.png", 48, 40);
        let mask = dir.join("sign_mask.png");
        BinaryMask::filled(48, 48, true)
            .to_raster()
            .save(&mask)
            .unwrap();
        let white = write_png(dir, "white.png", 8, 255);
        let bg = write_png(dir, "bg.png", 8, 40);
        Manifest {
            signs: vec![SignEntry {
                image: sign,
                mask: Some(mask),
                true_label: ClassLabel::new(0, "top-left"),
            }],
            patches: vec![
                PatchEntry {
                    image: white,
                    rotatable: false,
                },
                PatchEntry {
                    image: bg,
                    rotatable: false,
                },
            ],
            classifier: ClassifierSpec::Stub {
                rule: StubRule::QuadrantBrightness,
            },
            search: SearchConfig::default(),
            schedule: vec![1.0, 0.5],
            mask_params: Default::default(),
            output_dir: dir.join("out"),
            workers: None,
        }
    }

    #[test]
    fn run_writes_every_cell_and_resumes_without_recomputing() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = test_manifest(dir.path());
        let summary = run_experiment(&manifest, &RunOptions::default()).unwrap();
        assert_eq!(summary.cells_total, 4);
        assert_eq!(summary.cells_written, 4);
        assert_eq!(summary.groups_skipped, 0);

        let white_cell = try_load_cell(&summary.output_dir, "sign", "white", 1.0)
            .unwrap()
            .expect("cell written");
        assert!(white_cell.success, "white patch must flip the verdict");
        assert!(cell_dir(&summary.output_dir, "sign", "white", 1.0)
            .join(ADVERSARIAL_FILE)
            .exists());

        let bg_cell = try_load_cell(&summary.output_dir, "sign", "bg", 1.0)
            .unwrap()
            .expect("cell written");
        assert!(!bg_cell.success, "background-colored patch cannot flip");
        assert!(bg_cell.error.is_none());
        assert!(bg_cell.evaluations > 0);

        // Resume: everything is already on disk.
        let resumed = run_experiment(&manifest, &RunOptions::default()).unwrap();
        assert_eq!(resumed.cells_written, 0);
        assert_eq!(resumed.groups_skipped, 2);
    }

    #[test]
    fn deleted_cell_triggers_group_recompute_only() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = test_manifest(dir.path());
        let summary = run_experiment(&manifest, &RunOptions::default()).unwrap();
        std::fs::remove_file(
            cell_dir(&summary.output_dir, "sign", "white", 0.5).join(RESULT_FILE),
        )
        .unwrap();
        let resumed = run_experiment(&manifest, &RunOptions::default()).unwrap();
        // One group (sign, 0.5) recomputed, the other skipped.
        assert_eq!(resumed.groups_skipped, 1);
        assert_eq!(resumed.cells_written, 2);
    }

    #[test]
    fn unreadable_patch_errors_its_column_and_leaves_others_complete() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = test_manifest(dir.path());
        manifest.patches.insert(
            0,
            PatchEntry {
                image: dir.path().join("ghost.png"),
                rotatable: false,
            },
        );
        let summary = run_experiment(&manifest, &RunOptions::default()).unwrap();
        assert_eq!(summary.cells_written, 6);

        let ghost = try_load_cell(&summary.output_dir, "sign", "ghost", 1.0)
            .unwrap()
            .unwrap();
        assert!(ghost.error.is_some());
        assert!(!ghost.error_retryable, "file errors are not retryable");

        // The readable columns still ran; the sequence anchor is now the
        // first readable patch.
        let white = try_load_cell(&summary.output_dir, "sign", "white", 1.0)
            .unwrap()
            .unwrap();
        assert!(white.success);
        assert_eq!(white.patch_index, 1);
    }

    #[test]
    fn output_dir_cannot_mix_experiments() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = test_manifest(dir.path());
        run_experiment(&manifest, &RunOptions::default()).unwrap();

        let mut other = manifest.clone();
        other.schedule = vec![1.0];
        let err = run_experiment(&other, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, RunnerError::Invalid(_)), "{err}");
    }

    #[test]
    fn seed_is_recorded_in_run_meta() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = test_manifest(dir.path());
        run_experiment(
            &manifest,
            &RunOptions {
                seed: Some(1234),
                output_dir: None,
            },
        )
        .unwrap();
        let meta = RunMeta::load(&manifest.output_dir).unwrap();
        assert_eq!(meta.seed, Some(1234));
        assert_eq!(meta.signs, ["sign"]);
        assert_eq!(meta.patches, ["white", "bg"]);
    }

    #[test]
    fn mask_dimension_mismatch_becomes_an_error_column() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = test_manifest(dir.path());
        let small_mask = dir.path().join("small_mask.png");
        BinaryMask::filled(16, 16, true)
            .to_raster()
            .save(&small_mask)
            .unwrap();
        manifest.signs[0].mask = Some(small_mask);
        let summary = run_experiment(&manifest, &RunOptions::default()).unwrap();
        assert_eq!(summary.cells_written, 4);
        let cell = try_load_cell(&summary.output_dir, "sign", "white", 1.0)
            .unwrap()
            .unwrap();
        let msg = cell.error.expect("mask mismatch must error the cell");
        assert!(msg.contains("16x16"), "{msg}");
    }
}
