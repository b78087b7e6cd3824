//! Integration tests for the CSV interchange: fixture export, ingestion,
//! result export and the binary's exit codes.

use std::path::PathBuf;
use std::process::Command;

use irts_cli::config::parse_config_text;
use irts_cli::error::CliError;
use irts_cli::export::{export_fixture, export_results, RunManifest};
use irts_cli::ingest::ingest_dataset;
use irts_core::sim::{
    run_campaign, simulate_trial_data, EstimatorKind, InitialErrorSpec, ScenarioConfig,
};

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "irts-test-{tag}-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config() -> ScenarioConfig {
    let mut config = ScenarioConfig::benchmark_default(77);
    config.duration = 2.0;
    config.intero_rate = 50.0;
    config.landmarks = irts_core::sim::scatter_landmarks(4, 6.0, 77);
    config
}

#[test]
fn fixture_round_trip_is_bitwise_exact() {
    let config = small_config();
    let data = simulate_trial_data(&config, 0).unwrap();
    let dir = temp_dir("roundtrip");
    export_fixture(&data, &config.landmarks, &dir).unwrap();
    let ingested = ingest_dataset(&dir).unwrap();

    assert_eq!(ingested.intero.len(), data.intero.len());
    for (a, b) in ingested.intero.iter().zip(&data.intero) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.gyro, b.gyro);
        assert_eq!(a.vel, b.vel);
    }
    assert_eq!(ingested.extero.len(), data.extero.len());
    for (a, b) in ingested.extero.items().iter().zip(data.extero.items()) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.kind, b.kind);
        assert_eq!(a.landmark_id, b.landmark_id);
        assert_eq!(a.value, b.value);
    }
    assert_eq!(ingested.map.positions(), config.landmarks.positions());
    let truth = ingested.truth.expect("truth present in fixtures");
    assert_eq!(truth.len(), data.truth.len());
    for ((t, state), (expected_t, expected)) in
        truth.iter().zip(data.times.iter().zip(&data.truth))
    {
        assert_eq!(t, expected_t);
        // Quaternion encoding reproduces the DCM to fp round-trip accuracy.
        assert!((state.attitude() - expected.attitude()).norm() < 1e-14);
        assert_eq!(state.position(), expected.position());
        assert_eq!(state.bias_gyro(), expected.bias_gyro());
        assert_eq!(state.bias_vel(), expected.bias_vel());
    }
    assert!(ingested.warnings.is_empty());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn shuffled_rows_are_resorted() {
    let config = small_config();
    let data = simulate_trial_data(&config, 0).unwrap();
    let dir = temp_dir("shuffle");
    export_fixture(&data, &config.landmarks, &dir).unwrap();
    let sorted = ingest_dataset(&dir).unwrap();

    // Reverse the data rows of intero.csv and gps.csv.
    for name in ["intero.csv", "gps.csv"] {
        let path = dir.join(name);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        let mut out = String::from(header);
        out.push('\n');
        for line in lines {
            out.push_str(line);
            out.push('\n');
        }
        std::fs::write(&path, out).unwrap();
    }
    let shuffled = ingest_dataset(&dir).unwrap();
    assert_eq!(shuffled.intero, sorted.intero);
    assert_eq!(shuffled.extero, sorted.extero);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn malformed_row_names_file_and_row() {
    let config = small_config();
    let data = simulate_trial_data(&config, 0).unwrap();
    let dir = temp_dir("malformed");
    export_fixture(&data, &config.landmarks, &dir).unwrap();
    let path = dir.join("gps.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("0.5,not_a_number,0.0,0.0\n");
    let bad_row = text.lines().count();
    std::fs::write(&path, text).unwrap();
    match ingest_dataset(&dir) {
        Err(CliError::Schema { file, row, reason }) => {
            assert_eq!(file, "gps.csv");
            assert_eq!(row, bad_row);
            assert!(reason.contains("not a number"), "{reason}");
        }
        other => panic!("expected Schema error, got {other:?}"),
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn truth_quaternion_norm_is_validated() {
    let config = small_config();
    let data = simulate_trial_data(&config, 0).unwrap();
    let dir = temp_dir("quat");
    export_fixture(&data, &config.landmarks, &dir).unwrap();
    let path = dir.join("truth.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Scale the quaternion of the first data row beyond the tolerance.
    let fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    let mut fields: Vec<f64> = fields.iter().map(|f| f.parse().unwrap()).collect();
    for q in &mut fields[1..5] {
        *q *= 1.001;
    }
    lines[1] = fields
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    match ingest_dataset(&dir) {
        Err(CliError::Schema { file, reason, .. }) => {
            assert_eq!(file, "truth.csv");
            assert!(reason.contains("quaternion"), "{reason}");
        }
        other => panic!("expected Schema error, got {other:?}"),
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn gap_warnings_are_collected() {
    let config = small_config();
    let data = simulate_trial_data(&config, 0).unwrap();
    let dir = temp_dir("gaps");
    export_fixture(&data, &config.landmarks, &dir).unwrap();
    let path = dir.join("intero.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    // Drop a contiguous chunk of rows to open a gap well above 5 periods.
    let lines: Vec<&str> = text.lines().collect();
    let kept: Vec<&str> = lines
        .iter()
        .enumerate()
        .filter(|(i, _)| *i == 0 || *i < 20 || *i > 40)
        .map(|(_, l)| *l)
        .collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let ingested = ingest_dataset(&dir).unwrap();
    assert!(
        ingested.warnings.iter().any(|w| w.file == "intero.csv"),
        "expected a gap warning, got {:?}",
        ingested.warnings
    );
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn export_results_shapes_and_determinism() {
    let config = small_config();
    let stats = run_campaign(
        &config,
        &InitialErrorSpec::low_error(),
        &[EstimatorKind::Irts, EstimatorKind::Mrts],
        1,
        3,
    )
    .unwrap();
    let manifest = RunManifest {
        artifact_version: "test",
        config_digest: 0xABCD,
        seed: config.seed,
        trials: 1,
        iterations: 3,
        estimators: vec!["irts", "mrts"],
        failed_trials: 0,
        wall_clock_seconds: 1.25,
    };
    let dir1 = temp_dir("export1");
    let dir2 = temp_dir("export2");
    export_results(&stats, &manifest, &dir1).unwrap();
    export_results(&stats, &manifest, &dir2).unwrap();
    for name in ["rmse_summary.csv", "per_trial.csv", "manifest.txt"] {
        let a = std::fs::read(dir1.join(name)).unwrap();
        let b = std::fs::read(dir2.join(name)).unwrap();
        assert_eq!(a, b, "{name} not byte-identical");
    }
    let summary = std::fs::read_to_string(dir1.join("rmse_summary.csv")).unwrap();
    // Header plus 2 estimators x 4 states x 3 iterations.
    assert_eq!(summary.lines().count(), 1 + 2 * 4 * 3);
    // Single trial: both percentiles collapse onto the mean.
    for line in summary.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[3], fields[4]);
        assert_eq!(fields[4], fields[5]);
    }
    std::fs::remove_dir_all(dir1).ok();
    std::fs::remove_dir_all(dir2).ok();
}

#[test]
fn campaign_outputs_reproducible_from_config_and_seed() {
    let config = small_config();
    let spec = InitialErrorSpec::low_error();
    let run = |dir: &std::path::Path| {
        let stats = run_campaign(&config, &spec, &[EstimatorKind::Irts], 2, 1).unwrap();
        let manifest = RunManifest {
            artifact_version: "test",
            config_digest: 1,
            seed: config.seed,
            trials: 2,
            iterations: 1,
            estimators: vec!["irts"],
            failed_trials: stats.failures.len(),
            wall_clock_seconds: 0.0,
        };
        export_results(&stats, &manifest, dir).unwrap();
    };
    let dir1 = temp_dir("repro1");
    let dir2 = temp_dir("repro2");
    run(&dir1);
    run(&dir2);
    for name in ["rmse_summary.csv", "per_trial.csv"] {
        let a = std::fs::read(dir1.join(name)).unwrap();
        let b = std::fs::read(dir2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across identical runs");
    }
    std::fs::remove_dir_all(dir1).ok();
    std::fs::remove_dir_all(dir2).ok();
}

#[test]
fn preset_configs_parse() {
    for name in ["low_error.cfg", "high_error.cfg"] {
        let path = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs")).join(name);
        let text = std::fs::read_to_string(path).unwrap();
        parse_config_text(&text).unwrap();
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_irts");
    // Missing config file: data error (3).
    let out = Command::new(bin)
        .args(["simulate", "--config", "/nonexistent/none.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    // Invalid config: configuration error (2).
    let dir = temp_dir("exitcodes");
    let bad = dir.join("bad.cfg");
    std::fs::write(&bad, "intero_rate = -5.0\n").unwrap();
    let out = Command::new(bin)
        .args(["simulate", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(dir).ok();
}
