//! Process-level tests of the `snowball` binary: exit codes, subcommand
//! behavior, and a full attack -> report round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use snowball_core::{BinaryMask, Channels, Raster};

fn snowball() -> Command {
    Command::new(env!("CARGO_BIN_EXE_snowball"))
}

fn run(args: &[&str]) -> Output {
    snowball().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// A dark scene with a bright centered square: simple for the mask
/// pipeline, distinctive for the quadrant stub.
fn write_sign(path: &Path, side: u32) {
    let mut img = Raster::filled(side, side, Channels::Rgb, 30);
    let lo = side / 4;
    let hi = side - side / 4;
    for y in lo..hi {
        for x in lo..hi {
            img.set_pixel(x, y, &[220, 220, 220]);
        }
    }
    img.save(path).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    let help = run(&["--help"]);
    assert!(help.status.success());
    assert!(stdout(&help).contains("mask"));
    assert!(stdout(&help).contains("attack"));

    let version = run(&["--version"]);
    assert!(version.status.success());
}

#[test]
fn usage_errors_exit_one() {
    let unknown = run(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(!stderr(&unknown).is_empty());

    let missing_arg = run(&["mask"]);
    assert_eq!(missing_arg.status.code(), Some(1));

    let bad_flag = run(&["report", "--no-such-flag", "x"]);
    assert_eq!(bad_flag.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let missing_manifest = run(&["attack", "/nonexistent/manifest.json"]);
    assert_eq!(missing_manifest.status.code(), Some(2));
    assert!(stderr(&missing_manifest).contains("error"));

    let missing_image = run(&["mask", "/nonexistent/sign.png"]);
    assert_eq!(missing_image.status.code(), Some(2));

    let missing_results = run(&["report", "/nonexistent/results"]);
    assert_eq!(missing_results.status.code(), Some(2));
}

#[test]
fn mask_subcommand_writes_a_binary_mask() {
    let dir = tempfile::tempdir().unwrap();
    let sign = dir.path().join("square.png");
    write_sign(&sign, 64);

    let output = run(&["mask", sign.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));

    let default_out = dir.path().join("square.mask.png");
    assert!(
        stdout(&output).contains("square.mask.png"),
        "{}",
        stdout(&output)
    );
    let mask = BinaryMask::from_raster(&Raster::load(&default_out).unwrap()).unwrap();
    assert!(mask.valid_area() > 0, "bright square must yield a region");

    // Explicit --out is honored.
    let custom = dir.path().join("custom.png");
    let output = run(&["mask", sign.to_str().unwrap(), "--out", custom.to_str().unwrap()]);
    assert!(output.status.success());
    assert!(custom.exists());
}

#[test]
fn classify_defaults_to_the_quadrant_stub() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("scene.png");
    let mut img = Raster::filled(32, 32, Channels::Rgb, 10);
    for y in 16..32 {
        for x in 16..32 {
            img.set_pixel(x, y, &[250, 250, 250]);
        }
    }
    img.save(&image).unwrap();

    let output = run(&["classify", image.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
    let verdict: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert_eq!(verdict["label"]["name"], "bottom-right");
    assert_eq!(verdict["distribution"].as_array().unwrap().len(), 4);

    // mean-threshold stub selects by overall brightness.
    let output = run(&[
        "classify",
        image.to_str().unwrap(),
        "--stub",
        "mean-threshold",
        "--threshold",
        "200",
    ]);
    assert!(output.status.success());
    let verdict: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert_eq!(verdict["label"]["name"], "dark");

    let output = run(&["classify", image.to_str().unwrap(), "--stub", "coin-flip"]);
    assert_eq!(output.status.code(), Some(2), "unknown rule is a runtime error");
}

#[test]
fn conflicting_classifier_flags_exit_one() {
    let output = run(&[
        "classify",
        "x.png",
        "--endpoint",
        "http://localhost:1",
        "--stub",
        "quadrant-brightness",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

/// Builds a small stub-classifier experiment on disk and returns the
/// manifest path and output directory.
fn write_experiment(dir: &Path) -> (PathBuf, PathBuf) {
    let signs_dir = dir.join("signs");
    let patches_dir = dir.join("patches");
    std::fs::create_dir_all(&signs_dir).unwrap();
    std::fs::create_dir_all(&patches_dir).unwrap();

    // Uniform dark signs classify as top-left on ties; explicit all-true
    // masks keep the search grid dense.
    for name in ["alpha", "beta"] {
        Raster::filled(40, 40, Channels::Rgb, 35)
            .save(signs_dir.join(format!("{name}.png")))
            .unwrap();
        BinaryMask::filled(40, 40, true)
            .to_raster()
            .save(signs_dir.join(format!("{name}_mask.png")))
            .unwrap();
    }
    // White flips the quadrant verdict, background-colored never does, and
    // mid-gray flips weakly.
    for (name, value) in [("white", 255u8), ("bg", 35), ("gray", 160)] {
        Raster::filled(8, 8, Channels::Rgb, value)
            .save(patches_dir.join(format!("{name}.png")))
            .unwrap();
    }

    let manifest = serde_json::json!({
        "signs": [
            {
                "image": "signs/alpha.png",
                "mask": "signs/alpha_mask.png",
                "true_label": {"id": 0, "name": "top-left"}
            },
            {
                "image": "signs/beta.png",
                "mask": "signs/beta_mask.png",
                "true_label": {"id": 0, "name": "top-left"}
            }
        ],
        "patches": [
            {"image": "patches/white.png", "rotatable": false},
            {"image": "patches/bg.png", "rotatable": false},
            {"image": "patches/gray.png", "rotatable": false}
        ],
        "classifier": {"kind": "stub", "rule": "quadrant-brightness"},
        "schedule": [1.0, 0.5],
        "output_dir": "results"
    });
    let path = dir.join("experiment.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    (path, dir.join("results"))
}

#[test]
fn attack_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, results) = write_experiment(dir.path());

    let output = run(&["attack", manifest.to_str().unwrap(), "--seed", "42"]);
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("wrote 12 of 12 cells"), "{}", stdout(&output));

    // 2 signs x 3 patches x 2 fractions.
    let mut cells = 0;
    for sign in ["alpha", "beta"] {
        for patch in ["white", "bg", "gray"] {
            for fraction in ["1.00", "0.50"] {
                let cell = results.join(sign).join(patch).join(fraction);
                assert!(cell.join("result.json").exists(), "{}", cell.display());
                cells += 1;
            }
        }
    }
    assert_eq!(cells, 12);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(results.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 42);

    // Rerunning resumes instead of recomputing.
    let rerun = run(&["attack", manifest.to_str().unwrap(), "--seed", "42"]);
    assert!(rerun.status.success());
    assert!(stdout(&rerun).contains("wrote 0 of 12 cells"), "{}", stdout(&rerun));

    // Report: two long tables + one timing table per fraction, plus markdown.
    let report = run(&["report", results.to_str().unwrap()]);
    assert!(report.status.success(), "{}", stderr(&report));
    let listed: Vec<String> = stdout(&report).lines().map(str::to_owned).collect();
    let csv_count = listed.iter().filter(|p| p.ends_with(".csv")).count();
    assert_eq!(csv_count, 4, "{listed:?}");
    assert!(listed.iter().any(|p| p.ends_with("report.md")));

    let confidence = std::fs::read(results.join("confidence.csv")).unwrap();
    let labels = std::fs::read(results.join("labels.csv")).unwrap();

    // The white column succeeds everywhere, the background column never
    // does.
    let text = String::from_utf8_lossy(&confidence);
    for sign in ["alpha", "beta"] {
        assert!(!text.contains(&format!("{sign},white,1.00,-")), "{text}");
        assert!(text.contains(&format!("{sign},bg,1.00,-")), "{text}");
    }

    // Reports are byte-identical when regenerated.
    let report2 = run(&["report", results.to_str().unwrap()]);
    assert!(report2.status.success());
    assert_eq!(std::fs::read(results.join("confidence.csv")).unwrap(), confidence);
    assert_eq!(std::fs::read(results.join("labels.csv")).unwrap(), labels);
}

#[test]
fn attack_reports_partial_columns_for_missing_patch_files() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest_path, results) = write_experiment(dir.path());
    // Point one patch at a file that does not exist.
    let mut manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["patches"][2]["image"] = serde_json::json!("patches/ghost.png");
    std::fs::write(&manifest_path, manifest.to_string()).unwrap();

    let output = run(&["attack", manifest_path.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));

    let ghost: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(results.join("alpha/ghost/1.00/result.json")).unwrap(),
    )
    .unwrap();
    assert!(ghost["error"].as_str().unwrap().contains("ghost.png"));

    let white: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(results.join("alpha/white/1.00/result.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(white["success"], true, "other columns still complete");

    // The report renders the broken column as err.
    let report = run(&["report", results.to_str().unwrap()]);
    assert!(report.status.success());
    let text = std::fs::read_to_string(results.join("confidence.csv")).unwrap();
    assert!(text.contains("alpha,ghost,1.00,err"), "{text}");
}

#[test]
fn class_list_fixture_parses() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/lisa_classes.txt");
    let labels = snowball_core::classifier::load_class_list(&fixture).unwrap();
    assert_eq!(labels.len(), 16);
    assert_eq!(labels[12].name, "Stop");
    assert_eq!(labels[12].id, 12);
    assert_eq!(labels[15].name, "Yield");
}
