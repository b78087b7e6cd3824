//! Dataset ingestion from the documented CSV layout.
//!
//! Files in the dataset directory:
//! - `intero.csv` (required): `t,u1x,u1y,u1z,u2x,u2y,u2z`
//! - `gps.csv` (optional): `t,yx,yy,yz`
//! - `landmarks_obs.csv` (optional): `t,id,yx,yy,yz`
//! - `landmark_map.csv` (required with landmark observations): `id,px,py,pz`
//! - `truth.csv` (optional): `t,qw,qx,qy,qz,rx,ry,rz,b1x,b1y,b1z,b2x,b2y,b2z`
//!
//! Rows may arrive in any order; streams are sorted by timestamp on ingest.
//! Timestamp gaps larger than five nominal periods are collected as warnings
//! rather than errors.

use std::path::Path;

use irts_core::group::GroupElement;
use irts_core::models::{ExteroMeasurement, InteroceptiveSample, LandmarkMap, MeasurementBatch};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GapWarning {
    pub file: String,
    pub t_prev: f64,
    pub t_next: f64,
}

#[derive(Debug, Clone)]
pub struct IngestedDataset {
    pub intero: Vec<InteroceptiveSample>,
    pub extero: MeasurementBatch,
    pub truth: Option<Vec<(f64, GroupElement)>>,
    pub map: LandmarkMap,
    pub warnings: Vec<GapWarning>,
}

struct CsvFile {
    name: String,
    /// (original 1-based row number, fields)
    rows: Vec<(usize, Vec<f64>)>,
}

fn read_csv(path: &Path, header: &str, int_columns: &[usize]) -> Result<CsvFile> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let text = std::fs::read_to_string(path)?;
    let expected: Vec<&str> = header.split(',').collect();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == header => {}
        Some((_, first)) => {
            return Err(CliError::schema(
                &name,
                1,
                format!("bad header `{}`, expected `{header}`", first.trim()),
            ))
        }
        None => return Err(CliError::schema(&name, 1, "empty file")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let row_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(CliError::schema(
                &name,
                row_no,
                format!("{} fields, expected {}", fields.len(), expected.len()),
            ));
        }
        let mut values = Vec::with_capacity(fields.len());
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::schema(
                    &name,
                    row_no,
                    format!("column `{}`: not a number: `{}`", expected[col], field.trim()),
                )
            })?;
            if int_columns.contains(&col) && (v.fract() != 0.0 || v < 0.0) {
                return Err(CliError::schema(
                    &name,
                    row_no,
                    format!("column `{}`: expected a non-negative integer", expected[col]),
                ));
            }
            if !v.is_finite() {
                return Err(CliError::schema(
                    &name,
                    row_no,
                    format!("column `{}`: non-finite value", expected[col]),
                ));
            }
            values.push(v);
        }
        rows.push((row_no, values));
    }
    Ok(CsvFile { name, rows })
}

fn sort_by_time(file: &mut CsvFile) {
    file.rows
        .sort_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap().then(a.0.cmp(&b.0)));
}

fn check_strictly_increasing(file: &CsvFile) -> Result<()> {
    for pair in file.rows.windows(2) {
        if pair[1].1[0] <= pair[0].1[0] {
            return Err(CliError::schema(
                &file.name,
                pair[1].0,
                format!("duplicate or non-increasing timestamp {}", pair[1].1[0]),
            ));
        }
    }
    Ok(())
}

fn collect_gap_warnings(file: &CsvFile, warnings: &mut Vec<GapWarning>) {
    // Repeated timestamps are legitimate (one landmark frame produces several
    // rows), so the nominal period comes from the positive diffs only.
    let mut diffs: Vec<f64> = file
        .rows
        .windows(2)
        .map(|w| w[1].1[0] - w[0].1[0])
        .filter(|d| *d > 0.0)
        .collect();
    if diffs.is_empty() {
        return;
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nominal = diffs[diffs.len() / 2];
    for pair in file.rows.windows(2) {
        let gap = pair[1].1[0] - pair[0].1[0];
        if gap > 5.0 * nominal {
            warnings.push(GapWarning {
                file: file.name.clone(),
                t_prev: pair[0].1[0],
                t_next: pair[1].1[0],
            });
        }
    }
}

pub fn ingest_dataset(dir: &Path) -> Result<IngestedDataset> {
    let mut warnings = Vec::new();

    let mut intero_file = read_csv(
        &dir.join("intero.csv"),
        "t,u1x,u1y,u1z,u2x,u2y,u2z",
        &[],
    )?;
    sort_by_time(&mut intero_file);
    check_strictly_increasing(&intero_file)?;
    collect_gap_warnings(&intero_file, &mut warnings);
    let intero: Vec<InteroceptiveSample> = intero_file
        .rows
        .iter()
        .map(|(_, v)| InteroceptiveSample {
            t: v[0],
            gyro: Vector3::new(v[1], v[2], v[3]),
            vel: Vector3::new(v[4], v[5], v[6]),
        })
        .collect();
    if intero.is_empty() {
        return Err(CliError::schema("intero.csv", 2, "no samples"));
    }

    let mut items: Vec<ExteroMeasurement> = Vec::new();
    let gps_path = dir.join("gps.csv");
    if gps_path.exists() {
        let mut gps = read_csv(&gps_path, "t,yx,yy,yz", &[])?;
        sort_by_time(&mut gps);
        collect_gap_warnings(&gps, &mut warnings);
        items.extend(gps.rows.iter().map(|(_, v)| {
            ExteroMeasurement::gps(v[0], Vector3::new(v[1], v[2], v[3]))
        }));
    }

    let obs_path = dir.join("landmarks_obs.csv");
    let mut map = LandmarkMap::default();
    if obs_path.exists() {
        let map_path = dir.join("landmark_map.csv");
        if !map_path.exists() {
            return Err(CliError::schema(
                "landmark_map.csv",
                0,
                "required when landmarks_obs.csv is present",
            ));
        }
        let mut map_file = read_csv(&map_path, "id,px,py,pz", &[0])?;
        map_file.rows.sort_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap());
        for (i, (row, v)) in map_file.rows.iter().enumerate() {
            if v[0] as usize != i {
                return Err(CliError::schema(
                    &map_file.name,
                    *row,
                    format!("landmark ids must be dense 0..{}, found {}", map_file.rows.len() - 1, v[0]),
                ));
            }
        }
        map = LandmarkMap::new(
            map_file
                .rows
                .iter()
                .map(|(_, v)| Vector3::new(v[1], v[2], v[3]))
                .collect(),
        );
        let mut obs = read_csv(&obs_path, "t,id,yx,yy,yz", &[1])?;
        sort_by_time(&mut obs);
        collect_gap_warnings(&obs, &mut warnings);
        for (row, v) in &obs.rows {
            let id = v[1] as usize;
            if id >= map.len() {
                return Err(CliError::schema(
                    &obs.name,
                    *row,
                    format!("landmark id {id} not in map of {}", map.len()),
                ));
            }
            items.push(ExteroMeasurement::landmark(
                v[0],
                id,
                Vector3::new(v[2], v[3], v[4]),
            ));
        }
    }
    let extero = MeasurementBatch::new(items).map_err(CliError::Numerical)?;

    let truth_path = dir.join("truth.csv");
    let truth = if truth_path.exists() {
        let mut truth_file = read_csv(
            &truth_path,
            "t,qw,qx,qy,qz,rx,ry,rz,b1x,b1y,b1z,b2x,b2y,b2z",
            &[],
        )?;
        sort_by_time(&mut truth_file);
        check_strictly_increasing(&truth_file)?;
        let mut states = Vec::with_capacity(truth_file.rows.len());
        for (row, v) in &truth_file.rows {
            let q = Quaternion::new(v[1], v[2], v[3], v[4]);
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(CliError::schema(
                    &truth_file.name,
                    *row,
                    format!("quaternion norm {} departs from 1", q.norm()),
                ));
            }
            let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
            states.push((
                v[0],
                GroupElement::new(
                    rotation.into_inner(),
                    Vector3::new(v[5], v[6], v[7]),
                    Vector3::new(v[8], v[9], v[10]),
                    Vector3::new(v[11], v[12], v[13]),
                ),
            ));
        }
        Some(states)
    } else {
        None
    };

    Ok(IngestedDataset {
        intero,
        extero,
        truth,
        map,
        warnings,
    })
}
