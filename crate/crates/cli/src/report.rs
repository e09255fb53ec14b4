//! Report tables over a results directory.
//!
//! `emit_tables` writes, next to the result cells:
//!
//! - `confidence.csv` — long format (`sign,patch,fraction,confidence`),
//!   confidence as a two-decimal percentage;
//! - `labels.csv` — long format, the misclassified label per cell;
//! - `timing_<fraction>.csv` — one wide table per schedule fraction,
//!   rows are signs and columns are patches; cells show rounded seconds
//!   plus the signed percentage delta against the baseline fraction;
//! - `report.md` — the timing tables rendered as Markdown with a summary.
//!
//! Cell text: a successful attack renders its value, a completed search
//! that found no label flip renders `-`, and a cell that could not be
//! evaluated renders `err`. The baseline fraction's own timing table shows
//! plain seconds. Reruns of the same results directory produce
//! byte-identical confidence and label tables; timing tables vary with
//! wall-clock measurements.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::manifest::fraction_key;
use crate::records::{CellRecord, CellStatus, RecordError, RunMeta};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Renders one timing cell: elapsed seconds rounded to an integer, plus
/// the signed percentage change against `baseline_secs` when one applies.
/// The delta is `100 × (t − t_base) / t_base` rounded half away from zero,
/// computed over the displayed integer seconds so every printed table is
/// self-consistent. A zero delta renders as `+0%`. Without a baseline (or
/// with a zero-second one) the cell is the plain integer.
#[must_use]
pub fn format_timing_cell(elapsed_secs: f64, baseline_secs: Option<f64>) -> String {
    let t = elapsed_secs.round() as i64;
    match baseline_secs.map(|b| b.round() as i64) {
        Some(b) if b > 0 => {
            let delta = (100.0 * (t - b) as f64 / b as f64).round() as i64;
            let sign = if delta >= 0 { '+' } else { '-' };
            format!("{t} ({sign}{}%)", delta.abs())
        }
        _ => t.to_string(),
    }
}

/// The text of a grid cell in the three per-status styles.
fn render_cell(cell: Option<&CellRecord>, success_text: impl FnOnce(&CellRecord) -> String) -> String {
    match cell {
        None => "err".to_string(),
        Some(c) => match c.status() {
            CellStatus::Error => "err".to_string(),
            CellStatus::NoFlip => "-".to_string(),
            CellStatus::Success => success_text(c),
        },
    }
}

struct Grid {
    meta: RunMeta,
    /// `cells[sign][patch][fraction]`, all in run-meta order.
    cells: Vec<Vec<Vec<Option<CellRecord>>>>,
    baseline_index: usize,
}

impl Grid {
    fn load(root: &Path) -> Result<Self, ReportError> {
        let meta = RunMeta::load(root)?;
        let baseline_index = meta
            .schedule
            .iter()
            .position(|f| fraction_key(*f) == fraction_key(1.0))
            .unwrap_or(0);
        let mut cells = Vec::with_capacity(meta.signs.len());
        for sign in &meta.signs {
            let mut row = Vec::with_capacity(meta.patches.len());
            for patch in &meta.patches {
                let mut col = Vec::with_capacity(meta.schedule.len());
                for &fraction in &meta.schedule {
                    col.push(crate::records::try_load_cell(root, sign, patch, fraction)?);
                }
                row.push(col);
            }
            cells.push(row);
        }
        Ok(Self {
            meta,
            cells,
            baseline_index,
        })
    }

    /// Baseline elapsed seconds for a (sign, patch) pair, if that cell
    /// succeeded.
    fn baseline_secs(&self, sign: usize, patch: usize) -> Option<f64> {
        self.cells[sign][patch][self.baseline_index]
            .as_ref()
            .filter(|c| c.status() == CellStatus::Success)
            .map(|c| c.elapsed_secs)
    }

    fn timing_cell(&self, sign: usize, patch: usize, fraction: usize) -> String {
        let baseline = if fraction == self.baseline_index {
            None
        } else {
            self.baseline_secs(sign, patch)
        };
        render_cell(self.cells[sign][patch][fraction].as_ref(), |c| {
            format_timing_cell(c.elapsed_secs, baseline)
        })
    }
}

fn write_long_csv(
    path: &Path,
    grid: &Grid,
    header: &str,
    cell_text: impl Fn(&CellRecord) -> String,
) -> Result<(), ReportError> {
    let to_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    writer
        .write_record(["sign", "patch", "fraction", header])
        .map_err(to_err)?;
    for (si, sign) in grid.meta.signs.iter().enumerate() {
        for (pi, patch) in grid.meta.patches.iter().enumerate() {
            for (fi, fraction) in grid.meta.schedule.iter().enumerate() {
                let text = render_cell(grid.cells[si][pi][fi].as_ref(), &cell_text);
                writer
                    .write_record([sign, patch, &fraction_key(*fraction), &text])
                    .map_err(to_err)?;
            }
        }
    }
    writer.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_timing_csv(path: &Path, grid: &Grid, fraction_index: usize) -> Result<(), ReportError> {
    let to_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    let mut header = vec!["sign".to_string()];
    header.extend(grid.meta.patches.iter().cloned());
    writer.write_record(&header).map_err(to_err)?;
    for (si, sign) in grid.meta.signs.iter().enumerate() {
        let mut row = vec![sign.clone()];
        for pi in 0..grid.meta.patches.len() {
            row.push(grid.timing_cell(si, pi, fraction_index));
        }
        writer.write_record(&row).map_err(to_err)?;
    }
    writer.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_markdown(path: &Path, grid: &Grid) -> Result<(), ReportError> {
    let mut text = String::new();
    let meta = &grid.meta;
    let _ = writeln!(text, "# Attack report\n");
    match meta.seed {
        Some(seed) => {
            let _ = writeln!(text, "- seed: {seed}");
        }
        None => {
            let _ = writeln!(text, "- seed: none");
        }
    }
    let schedule: Vec<String> = meta.schedule.iter().map(|f| fraction_key(*f)).collect();
    let _ = writeln!(text, "- schedule: {}", schedule.join(", "));
    let _ = writeln!(
        text,
        "- grid: {} signs x {} patches x {} fractions",
        meta.signs.len(),
        meta.patches.len(),
        meta.schedule.len()
    );

    let mut success = 0usize;
    let mut no_flip = 0usize;
    let mut errored = 0usize;
    for row in &grid.cells {
        for col in row {
            for cell in col {
                match cell.as_ref().map(CellRecord::status) {
                    Some(CellStatus::Success) => success += 1,
                    Some(CellStatus::NoFlip) => no_flip += 1,
                    _ => errored += 1,
                }
            }
        }
    }
    let _ = writeln!(
        text,
        "- cells: {} total, {success} successful, {no_flip} without a flip, {errored} errored\n",
        success + no_flip + errored
    );

    for (fi, fraction) in meta.schedule.iter().enumerate() {
        let marker = if fi == grid.baseline_index {
            " (baseline)"
        } else {
            ""
        };
        let _ = writeln!(text, "## Timing, fraction {}{marker}\n", fraction_key(*fraction));
        let _ = writeln!(text, "| sign | {} |", meta.patches.join(" | "));
        let dashes = vec!["---"; meta.patches.len() + 1];
        let _ = writeln!(text, "| {} |", dashes.join(" | "));
        for (si, sign) in meta.signs.iter().enumerate() {
            let cells: Vec<String> = (0..meta.patches.len())
                .map(|pi| grid.timing_cell(si, pi, fi))
                .collect();
            let _ = writeln!(text, "| {sign} | {} |", cells.join(" | "));
        }
        let _ = writeln!(text);
    }

    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Generates every table for a results directory and returns the written
/// paths (CSV tables first, then `report.md`).
pub fn emit_tables(results_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let grid = Grid::load(results_dir)?;
    let mut written = Vec::new();

    let confidence = results_dir.join("confidence.csv");
    write_long_csv(&confidence, &grid, "confidence", |c| {
        format!("{:.2}", c.best.as_ref().map_or(0.0, |b| b.confidence) * 100.0)
    })?;
    written.push(confidence);

    let labels = results_dir.join("labels.csv");
    write_long_csv(&labels, &grid, "label", |c| {
        c.best
            .as_ref()
            .map_or_else(|| "-".to_string(), |b| b.label.name.clone())
    })?;
    written.push(labels);

    for (fi, fraction) in grid.meta.schedule.iter().enumerate() {
        let path = results_dir.join(format!("timing_{}.csv", fraction_key(*fraction)));
        write_timing_csv(&path, &grid, fi)?;
        written.push(path);
    }

    let markdown = results_dir.join("report.md");
    write_markdown(&markdown, &grid)?;
    written.push(markdown);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{cell_dir, RESULT_FILE};
    use snowball_core::{CandidateScore, ClassLabel, Placement};

    #[test]
    fn timing_cell_formatting() {
        // Baseline cells and cells without a baseline are plain seconds.
        assert_eq!(format_timing_cell(5573.4, None), "5573");
        assert_eq!(format_timing_cell(0.4, None), "0");
        // Deltas round half away from zero over displayed seconds.
        assert_eq!(format_timing_cell(5110.0, Some(5608.0)), "5110 (-9%)");
        assert_eq!(format_timing_cell(5630.0, Some(5573.0)), "5630 (+1%)");
        assert_eq!(format_timing_cell(1169.0, Some(996.0)), "1169 (+17%)");
        // Equal times still render an explicit +0%.
        assert_eq!(format_timing_cell(100.0, Some(100.0)), "100 (+0%)");
        // A zero-second baseline cannot produce a percentage.
        assert_eq!(format_timing_cell(3.0, Some(0.2)), "3");
    }

    #[test]
    fn half_away_from_zero_rounding() {
        // 100 * (195 - 200) / 200 = -2.5 -> -3, not -2.
        assert_eq!(format_timing_cell(195.0, Some(200.0)), "195 (-3%)");
        // +2.5 -> +3.
        assert_eq!(format_timing_cell(205.0, Some(200.0)), "205 (+3%)");
    }

    fn make_cell(sign: &str, patch: &str, fraction: f64, status: CellStatus) -> CellRecord {
        let best = (status == CellStatus::Success).then(|| CandidateScore {
            placement: Placement {
                x: 1,
                y: 2,
                center_x: 5,
                center_y: 6,
                scale: 1.0,
                angle: 0.0,
            },
            label: ClassLabel::new(1, "bright"),
            confidence: 0.875,
        });
        CellRecord {
            sign: sign.into(),
            patch: patch.into(),
            fraction,
            sign_index: 0,
            patch_index: 0,
            true_label: ClassLabel::new(0, "dark"),
            success: status == CellStatus::Success,
            best,
            evaluations: 10,
            elapsed_secs: if fraction < 1.0 { 75.0 } else { 100.0 },
            error: (status == CellStatus::Error).then(|| "patch unreadable".into()),
            error_retryable: false,
        }
    }

    fn write_cell(root: &Path, cell: &CellRecord) {
        let dir = cell_dir(root, &cell.sign, &cell.patch, cell.fraction);
        std::fs::create_dir_all(&dir).unwrap();
        crate::records::write_json(&dir.join(RESULT_FILE), cell).unwrap();
    }

    /// 1 sign x 2 patches x 2 fractions with every cell status present.
    fn sample_run(root: &Path) {
        RunMeta {
            seed: Some(9),
            schedule: vec![1.0, 0.75],
            signs: vec!["stop".into()],
            patches: vec!["blob".into(), "noise".into()],
            workers: None,
        }
        .save(root)
        .unwrap();
        write_cell(root, &make_cell("stop", "blob", 1.0, CellStatus::Success));
        write_cell(root, &make_cell("stop", "blob", 0.75, CellStatus::Success));
        write_cell(root, &make_cell("stop", "noise", 1.0, CellStatus::NoFlip));
        write_cell(root, &make_cell("stop", "noise", 0.75, CellStatus::Error));
    }

    #[test]
    fn emit_tables_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        sample_run(dir.path());
        let written = emit_tables(dir.path()).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            [
                "confidence.csv",
                "labels.csv",
                "timing_1.00.csv",
                "timing_0.75.csv",
                "report.md"
            ]
        );

        let confidence = std::fs::read_to_string(&written[0]).unwrap();
        assert!(confidence.contains("stop,blob,1.00,87.50"), "{confidence}");
        assert!(confidence.contains("stop,noise,1.00,-"), "{confidence}");
        assert!(confidence.contains("stop,noise,0.75,err"), "{confidence}");

        let labels = std::fs::read_to_string(&written[1]).unwrap();
        assert!(labels.contains("stop,blob,0.75,bright"), "{labels}");

        // Baseline table shows plain seconds; the 0.75 table carries deltas.
        let baseline = std::fs::read_to_string(&written[2]).unwrap();
        assert!(baseline.contains("stop,100,-"), "{baseline}");
        let shrunk = std::fs::read_to_string(&written[3]).unwrap();
        assert!(shrunk.contains("\"75 (-25%)\"") || shrunk.contains("75 (-25%)"), "{shrunk}");
        assert!(shrunk.contains("err"), "{shrunk}");

        let md = std::fs::read_to_string(&written[4]).unwrap();
        assert!(md.contains("| stop | 100 | - |"), "{md}");
        assert!(md.contains("4 total, 2 successful, 1 without a flip, 1 errored"), "{md}");
    }

    #[test]
    fn long_tables_are_byte_identical_across_reruns() {
        let dir = tempfile::tempdir().unwrap();
        sample_run(dir.path());
        let first = emit_tables(dir.path()).unwrap();
        let conf1 = std::fs::read(&first[0]).unwrap();
        let labels1 = std::fs::read(&first[1]).unwrap();
        let second = emit_tables(dir.path()).unwrap();
        assert_eq!(std::fs::read(&second[0]).unwrap(), conf1);
        assert_eq!(std::fs::read(&second[1]).unwrap(), labels1);
    }

    #[test]
    fn missing_cells_render_as_err() {
        let dir = tempfile::tempdir().unwrap();
        sample_run(dir.path());
        // Remove one result file to simulate an interrupted run.
        std::fs::remove_file(
            cell_dir(dir.path(), "stop", "blob", 0.75).join(RESULT_FILE),
        )
        .unwrap();
        let written = emit_tables(dir.path()).unwrap();
        let shrunk = std::fs::read_to_string(&written[3]).unwrap();
        let mut lines = shrunk.lines();
        assert_eq!(lines.next(), Some("sign,blob,noise"));
        assert_eq!(lines.next(), Some("stop,err,err"));
    }
}
