//! Result and fixture writers.
//!
//! Every number is serialized with 17 significant digits so parsing the file
//! back reproduces the doubles bit for bit; given identical inputs the files
//! are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use irts_core::group::GroupElement;
use irts_core::models::MeasurementKind;
use irts_core::sim::{CampaignStats, TrialData, STATE_NAMES};
use nalgebra::{Rotation3, UnitQuaternion};

use crate::error::Result;

/// `{:.16e}` gives one leading digit plus 16 decimals: 17 significant
/// digits, enough for an exact f64 round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Provenance block emitted next to every result set.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub config_digest: u64,
    pub seed: u64,
    pub trials: usize,
    pub iterations: usize,
    pub estimators: Vec<&'static str>,
    pub failed_trials: usize,
    /// Wall-clock of the producing run; the only line that varies between
    /// reruns of the same configuration.
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "artifact_version: {}", self.artifact_version);
        let _ = writeln!(out, "config_digest: {:016x}", self.config_digest);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "trials: {}", self.trials);
        let _ = writeln!(out, "iterations: {}", self.iterations);
        let _ = writeln!(out, "estimators: {}", self.estimators.join(","));
        let _ = writeln!(out, "failed_trials: {}", self.failed_trials);
        let _ = writeln!(out, "wall_clock_seconds: {:.3}", self.wall_clock_seconds);
        out
    }
}

/// Writes `rmse_summary.csv`, `per_trial.csv` and `manifest.txt` into
/// `out_dir` with deterministic row ordering.
pub fn export_results(
    stats: &CampaignStats,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut summary = String::from("estimator,state,iteration,mean,p2.5,p97.5\n");
    for row in &stats.summary {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{}",
            row.estimator.name(),
            STATE_NAMES[row.state],
            row.iteration + 1,
            fmt_f64(row.mean),
            fmt_f64(row.p2_5),
            fmt_f64(row.p97_5),
        );
    }
    std::fs::write(out_dir.join("rmse_summary.csv"), summary)?;

    let mut per_trial = String::from("trial,estimator,state,iteration,rmse\n");
    for (e_idx, estimator) in stats.estimators.iter().enumerate() {
        for (row, iterations) in stats.raw[e_idx].iter().enumerate() {
            for (iteration, states) in iterations.iter().enumerate() {
                for (state, value) in states.iter().enumerate() {
                    let _ = writeln!(
                        per_trial,
                        "{},{},{},{},{}",
                        stats.trial_ids[row],
                        estimator.name(),
                        STATE_NAMES[state],
                        iteration + 1,
                        fmt_f64(*value),
                    );
                }
            }
        }
    }
    std::fs::write(out_dir.join("per_trial.csv"), per_trial)?;
    std::fs::write(out_dir.join("manifest.txt"), manifest.render())?;
    Ok(())
}

fn attitude_quaternion(state: &GroupElement) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*state.attitude()))
}

fn state_row(t: f64, state: &GroupElement) -> String {
    let q = attitude_quaternion(state);
    let r = state.position();
    let b1 = state.bias_gyro();
    let b2 = state.bias_vel();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        fmt_f64(t),
        fmt_f64(q.w),
        fmt_f64(q.i),
        fmt_f64(q.j),
        fmt_f64(q.k),
        fmt_f64(r.x),
        fmt_f64(r.y),
        fmt_f64(r.z),
        fmt_f64(b1.x),
        fmt_f64(b1.y),
        fmt_f64(b1.z),
        fmt_f64(b2.x),
        fmt_f64(b2.y),
        fmt_f64(b2.z),
    )
}

const STATE_HEADER: &str = "t,qw,qx,qy,qz,rx,ry,rz,b1x,b1y,b1z,b2x,b2y,b2z\n";

/// Writes a synthetic dataset (`intero.csv`, `gps.csv`, `landmarks_obs.csv`,
/// `landmark_map.csv`, `truth.csv`) to `out_dir`.
pub fn export_fixture(
    data: &TrialData,
    map: &irts_core::models::LandmarkMap,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut intero = String::from("t,u1x,u1y,u1z,u2x,u2y,u2z\n");
    for s in &data.intero {
        let _ = writeln!(
            intero,
            "{},{},{},{},{},{},{}",
            fmt_f64(s.t),
            fmt_f64(s.gyro.x),
            fmt_f64(s.gyro.y),
            fmt_f64(s.gyro.z),
            fmt_f64(s.vel.x),
            fmt_f64(s.vel.y),
            fmt_f64(s.vel.z),
        );
    }
    std::fs::write(out_dir.join("intero.csv"), intero)?;

    let mut gps = String::from("t,yx,yy,yz\n");
    let mut obs = String::from("t,id,yx,yy,yz\n");
    for m in data.extero.items() {
        match m.kind {
            MeasurementKind::GpsLeftInvariant => {
                let _ = writeln!(
                    gps,
                    "{},{},{},{}",
                    fmt_f64(m.t),
                    fmt_f64(m.value.x),
                    fmt_f64(m.value.y),
                    fmt_f64(m.value.z),
                );
            }
            MeasurementKind::LandmarkRightInvariant => {
                let _ = writeln!(
                    obs,
                    "{},{},{},{},{}",
                    fmt_f64(m.t),
                    m.landmark_id.expect("landmark id"),
                    fmt_f64(m.value.x),
                    fmt_f64(m.value.y),
                    fmt_f64(m.value.z),
                );
            }
        }
    }
    std::fs::write(out_dir.join("gps.csv"), gps)?;
    std::fs::write(out_dir.join("landmarks_obs.csv"), obs)?;

    let mut map_csv = String::from("id,px,py,pz\n");
    for (id, p) in map.positions().iter().enumerate() {
        let _ = writeln!(
            map_csv,
            "{},{},{},{}",
            id,
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.z),
        );
    }
    std::fs::write(out_dir.join("landmark_map.csv"), map_csv)?;

    let mut truth = String::from(STATE_HEADER);
    for (t, state) in data.times.iter().zip(&data.truth) {
        truth.push_str(&state_row(*t, state));
    }
    std::fs::write(out_dir.join("truth.csv"), truth)?;
    Ok(())
}

/// Writes an estimated trajectory in the `truth.csv` schema.
pub fn export_trajectory(times: &[f64], states: &[GroupElement], path: &Path) -> Result<()> {
    let mut out = String::from(STATE_HEADER);
    for (t, state) in times.iter().zip(states) {
        out.push_str(&state_row(*t, state));
    }
    std::fs::write(path, out)?;
    Ok(())
}
