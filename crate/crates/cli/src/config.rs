//! Key-value configuration files for scenarios, initial-error specs and
//! campaign options.
//!
//! Format: one `key = value` pair per line, `#` comments, vectors as three
//! comma-separated numbers. Unknown keys are errors, as are missing required
//! keys. Trajectory-profile keys are optional and default to the built-in
//! mixed-frequency profile.

use std::collections::BTreeMap;
use std::path::Path;

use irts_core::models::NoiseSpec;
use irts_core::sim::{
    scatter_landmarks, EstimatorKind, InitialErrorSpec, ScenarioConfig, TrajectoryProfile,
};
use nalgebra::Vector3;

use crate::error::{CliError, Result};

/// Campaign-level options carried next to the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOptions {
    pub trials: usize,
    pub iterations: usize,
    pub estimators: Vec<EstimatorKind>,
}

const REQUIRED_KEYS: [&str; 25] = [
    "duration",
    "intero_rate",
    "gps_rate",
    "landmark_rate",
    "num_landmarks",
    "landmark_extent",
    "sigma_gyro",
    "sigma_vel",
    "sigma_walk_gyro",
    "sigma_walk_vel",
    "sigma_gps",
    "sigma_landmark",
    "beta_gyro_init",
    "beta_vel_init",
    "seed",
    "mean_phi",
    "mean_pos",
    "mean_bias_gyro",
    "mean_bias_vel",
    "sigma_phi0",
    "sigma_pos0",
    "sigma_bias_gyro0",
    "sigma_bias_vel0",
    "trials",
    "iterations",
];

const OPTIONAL_KEYS: [&str; 7] = [
    "estimators",
    "omega_amp",
    "omega_freq",
    "omega_phase",
    "vel_amp",
    "vel_freq",
    "vel_phase",
];

struct Entry {
    line: usize,
    value: String,
}

struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(
                    line_no,
                    line,
                    "expected `key = value`",
                ));
            };
            let key = key.trim().to_string();
            if !REQUIRED_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
                return Err(CliError::config(line_no, &key, "unknown key"));
            }
            if entries
                .insert(
                    key.clone(),
                    Entry {
                        line: line_no,
                        value: value.trim().to_string(),
                    },
                )
                .is_some()
            {
                return Err(CliError::config(line_no, &key, "duplicate key"));
            }
        }
        let missing: Vec<&str> = REQUIRED_KEYS
            .iter()
            .filter(|k| !entries.contains_key(**k))
            .copied()
            .collect();
        if !missing.is_empty() {
            return Err(CliError::config(
                0,
                missing.join(","),
                "missing required keys",
            ));
        }
        Ok(RawConfig { entries })
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn f64(&self, key: &str) -> Result<f64> {
        let e = self.entry(key).expect("required key present");
        e.value
            .parse::<f64>()
            .map_err(|_| CliError::config(e.line, key, format!("not a number: `{}`", e.value)))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if v <= 0.0 {
            let e = self.entry(key).unwrap();
            return Err(CliError::config(e.line, key, format!("{key} must be > 0")));
        }
        Ok(v)
    }

    fn non_negative(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if v < 0.0 {
            let e = self.entry(key).unwrap();
            return Err(CliError::config(e.line, key, format!("{key} must be >= 0")));
        }
        Ok(v)
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let e = self.entry(key).expect("required key present");
        e.value
            .parse::<usize>()
            .map_err(|_| CliError::config(e.line, key, format!("not an integer: `{}`", e.value)))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        let e = self.entry(key).expect("required key present");
        e.value
            .parse::<u64>()
            .map_err(|_| CliError::config(e.line, key, format!("not an integer: `{}`", e.value)))
    }

    fn vec3(&self, key: &str) -> Result<Vector3<f64>> {
        let e = self.entry(key).expect("required key present");
        parse_vec3(&e.value)
            .ok_or_else(|| CliError::config(e.line, key, "expected three comma-separated numbers"))
    }

    fn vec3_or(&self, key: &str, default: Vector3<f64>) -> Result<Vector3<f64>> {
        match self.entry(key) {
            None => Ok(default),
            Some(e) => parse_vec3(&e.value).ok_or_else(|| {
                CliError::config(e.line, key, "expected three comma-separated numbers")
            }),
        }
    }
}

fn parse_vec3(s: &str) -> Option<Vector3<f64>> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    if parts.len() != 3 {
        return None;
    }
    Some(Vector3::new(parts[0], parts[1], parts[2]))
}

fn parse_estimators(value: &str, line: usize) -> Result<Vec<EstimatorKind>> {
    let mut out = Vec::new();
    for token in value.split(',') {
        let kind = EstimatorKind::parse(token).ok_or_else(|| {
            CliError::config(
                line,
                "estimators",
                format!("unknown estimator `{}` (expected irts, mrts, ign, mgn)", token.trim()),
            )
        })?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(CliError::config(line, "estimators", "empty estimator list"));
    }
    Ok(out)
}

/// Parses and fully validates a configuration file.
pub fn parse_config(path: &Path) -> Result<(ScenarioConfig, InitialErrorSpec, CampaignOptions)> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text)
}

pub fn parse_config_text(
    text: &str,
) -> Result<(ScenarioConfig, InitialErrorSpec, CampaignOptions)> {
    let raw = RawConfig::parse(text)?;
    let seed = raw.u64("seed")?;
    let default_profile = TrajectoryProfile::default();
    let profile = TrajectoryProfile {
        omega_amp: raw.vec3_or("omega_amp", default_profile.omega_amp)?,
        omega_freq: raw.vec3_or("omega_freq", default_profile.omega_freq)?,
        omega_phase: raw.vec3_or("omega_phase", default_profile.omega_phase)?,
        vel_amp: raw.vec3_or("vel_amp", default_profile.vel_amp)?,
        vel_freq: raw.vec3_or("vel_freq", default_profile.vel_freq)?,
        vel_phase: raw.vec3_or("vel_phase", default_profile.vel_phase)?,
    };
    let config = ScenarioConfig {
        duration: raw.positive("duration")?,
        intero_rate: raw.positive("intero_rate")?,
        gps_rate: raw.non_negative("gps_rate")?,
        landmark_rate: raw.non_negative("landmark_rate")?,
        landmarks: scatter_landmarks(
            raw.usize("num_landmarks")?,
            raw.positive("landmark_extent")?,
            seed ^ 0x1A5D,
        ),
        noise: NoiseSpec::isotropic(
            raw.positive("sigma_gyro")?,
            raw.positive("sigma_vel")?,
            raw.positive("sigma_walk_gyro")?,
            raw.positive("sigma_walk_vel")?,
            raw.positive("sigma_gps")?,
            raw.positive("sigma_landmark")?,
        ),
        beta_gyro_init: raw.vec3("beta_gyro_init")?,
        beta_vel_init: raw.vec3("beta_vel_init")?,
        profile,
        seed,
    };
    config
        .validate()
        .map_err(|e| CliError::config(0, "scenario", e.to_string()))?;
    let spec = InitialErrorSpec::from_block_values(
        raw.f64("mean_phi")?,
        raw.f64("mean_pos")?,
        raw.f64("mean_bias_gyro")?,
        raw.f64("mean_bias_vel")?,
        raw.non_negative("sigma_phi0")?,
        raw.non_negative("sigma_pos0")?,
        raw.non_negative("sigma_bias_gyro0")?,
        raw.non_negative("sigma_bias_vel0")?,
    );
    let estimators = match raw.entry("estimators") {
        Some(e) => parse_estimators(&e.value, e.line)?,
        None => vec![EstimatorKind::Irts, EstimatorKind::Mrts],
    };
    let options = CampaignOptions {
        trials: raw.usize("trials")?.max(1),
        iterations: raw.usize("iterations")?.max(1),
        estimators,
    };
    Ok((config, spec, options))
}

/// FNV-1a 64-bit digest of the configuration text; stable across platforms.
pub fn config_digest(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset_text() -> String {
        std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/low_error.cfg"
        ))
        .unwrap()
    }

    #[test]
    fn low_error_preset_carries_reference_values() {
        let (config, spec, options) = parse_config_text(&preset_text()).unwrap();
        assert_eq!(config.duration, 20.0);
        assert_eq!(config.intero_rate, 100.0);
        assert_eq!(config.gps_rate, 10.0);
        assert_eq!(config.landmark_rate, 15.0);
        assert_eq!(config.landmarks.len(), 20);
        assert_eq!(config.beta_gyro_init, Vector3::new(0.05, 0.05, 0.05));
        assert_eq!(config.beta_vel_init, Vector3::new(0.04, -0.03, 0.06));
        assert!((spec.mean[0] - std::f64::consts::PI / 12.0).abs() < 1e-12);
        assert!((spec.mean[3] - 0.1).abs() < 1e-12);
        assert!((spec.std[0] - std::f64::consts::PI / 36.0).abs() < 1e-12);
        assert_eq!(options.trials, 50);
        assert_eq!(
            options.estimators,
            vec![EstimatorKind::Irts, EstimatorKind::Mrts]
        );
    }

    #[test]
    fn empty_file_lists_missing_keys() {
        match parse_config_text("") {
            Err(CliError::Config { key, reason, .. }) => {
                assert!(reason.contains("missing required keys"));
                assert!(key.contains("duration"));
                assert!(key.contains("trials"));
            }
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn negative_rate_is_rejected() {
        let text = preset_text().replace("intero_rate = 100.0", "intero_rate = -1.0");
        match parse_config_text(&text) {
            Err(CliError::Config { key, reason, .. }) => {
                assert_eq!(key, "intero_rate");
                assert!(reason.contains("must be > 0"));
            }
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{}\nbogus_key = 1.0\n", preset_text());
        match parse_config_text(&text) {
            Err(CliError::Config { key, reason, .. }) => {
                assert_eq!(key, "bogus_key");
                assert!(reason.contains("unknown"));
            }
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(config_digest("abc"), config_digest("abc"));
        assert_ne!(config_digest("abc"), config_digest("abd"));
    }
}
