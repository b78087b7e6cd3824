//! Forward filters and backward smoothing passes on the group.
//!
//! The invariant pipeline keeps beliefs in the left-invariant convention.
//! GPS measurements are corrected directly in left-invariant form; landmark
//! measurements are right-invariant, so the covariance is conjugated into the
//! right convention with the adjoint, corrected there, and conjugated back
//! with the corrected state. The multiplicative pipeline is the MEKF with the
//! attitude updated on SO(3) and everything else additively.
//!
//! Backward passes follow the linear RTS gain/covariance recursion with the
//! state pulled back through the flavor's exponential update.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::group::{exp_g, left_error, log_g, right_error, GroupElement, TangentVector};
use crate::kalman;
use crate::models::{
    self, ErrorConvention, ExteroMeasurement, InteroceptiveSample, LandmarkMap, MeasurementBatch,
    MeasurementKind, NoiseSpec,
};
use crate::so3;
use crate::{Mat12, Vec12};

/// A state estimate with covariance, tagged with the error convention the
/// covariance is expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub state: GroupElement,
    pub cov: Mat12,
    pub convention: ErrorConvention,
    pub t: f64,
}

impl Belief {
    /// Builds a belief with a symmetrized covariance.
    pub fn new(state: GroupElement, cov: Mat12, convention: ErrorConvention, t: f64) -> Self {
        Belief {
            state,
            cov: kalman::symmetrize(&cov),
            convention,
            t,
        }
    }
}

/// Which smoother drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherFlavor {
    /// IEKF forward pass (with the error representation transformation for
    /// landmark corrections), left-invariant backward pass.
    Lirts,
    /// MEKF forward pass, multiplicative backward pass.
    Mrts,
}

impl SmootherFlavor {
    pub fn convention(&self) -> ErrorConvention {
        match self {
            SmootherFlavor::Lirts => ErrorConvention::LeftInvariant,
            SmootherFlavor::Mrts => ErrorConvention::Multiplicative,
        }
    }
}

/// Side of an invariant innovation or update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvariantSide {
    Left,
    Right,
}

/// Inputs shared by every pass of a smoother run.
#[derive(Debug, Clone, Copy)]
pub struct SmootherProblem<'a> {
    pub intero: &'a [InteroceptiveSample],
    pub extero: &'a MeasurementBatch,
    pub map: &'a LandmarkMap,
    pub noise: &'a NoiseSpec,
}

/// Everything one forward-backward sweep produces. Belief lists hold `N + 1`
/// entries; `transitions` and `smoother_gains` hold `N`.
#[derive(Debug, Clone)]
pub struct SmootherRun {
    pub forward_pred: Vec<Belief>,
    pub forward_corr: Vec<Belief>,
    pub smoothed: Vec<Belief>,
    pub transitions: Vec<Mat12>,
    pub smoother_gains: Vec<Mat12>,
    /// Smoothed state trajectory after each iteration.
    pub iteration_states: Vec<Vec<GroupElement>>,
}

/// Covariance prediction wrapped around a precomputed propagated state.
pub fn kf_predict(
    belief: &Belief,
    a_d: &Mat12,
    l_d: &Mat12,
    q_d: &Mat12,
    x_pred: GroupElement,
    t: f64,
) -> Result<Belief> {
    let cov = kalman::predict_cov(&belief.cov, a_d, l_d, q_d);
    kalman::check_psd(&cov, "predicted covariance")?;
    Ok(Belief {
        state: x_pred,
        cov,
        convention: belief.convention,
        t,
    })
}

fn mat12_to_dyn(m: &Mat12) -> DMatrix<f64> {
    DMatrix::from_column_slice(12, 12, m.as_slice())
}

fn dyn_to_mat12(m: &DMatrix<f64>) -> Mat12 {
    Mat12::from_column_slice(m.as_slice())
}

fn mat3_to_dyn(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

struct Correction {
    h: DMatrix<f64>,
    m: DMatrix<f64>,
    r: DMatrix<f64>,
    z: DVector<f64>,
}

/// Gain, tangent correction and Joseph update for one stacked correction.
fn apply_correction(cov: &Mat12, c: &Correction) -> Result<(Vec12, Mat12)> {
    let p = mat12_to_dyn(cov);
    let k = kalman::gain(&p, &c.h, &c.m, &c.r)?;
    let delta = &k * &c.z;
    let cov_new = kalman::joseph_update(&p, &k, &c.h, &c.m, &c.r);
    Ok((
        Vec12::from_column_slice(delta.as_slice()),
        dyn_to_mat12(&cov_new),
    ))
}

fn gps_correction_left(
    belief: &Belief,
    meas: &ExteroMeasurement,
    map: &LandmarkMap,
    noise: &NoiseSpec,
) -> Result<Correction> {
    let z = models::innovation(ErrorConvention::LeftInvariant, meas, &belief.state, map)?;
    let (h, m) = models::gps_jacobians_invariant(&belief.state);
    Ok(Correction {
        h: DMatrix::from_fn(3, 12, |i, j| h[(i, j)]),
        m: mat3_to_dyn(&m),
        r: mat3_to_dyn(&noise.r_gps),
        z: DVector::from_column_slice(z.as_slice()),
    })
}

fn landmark_correction_right(
    belief: &Belief,
    meas: &[&ExteroMeasurement],
    map: &LandmarkMap,
    noise: &NoiseSpec,
) -> Result<Correction> {
    let n = meas.len();
    let mut h = DMatrix::zeros(3 * n, 12);
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    let mut r = DMatrix::zeros(3 * n, 3 * n);
    let mut z = DVector::zeros(3 * n);
    for (i, item) in meas.iter().enumerate() {
        let id = item.landmark_id.expect("landmark measurement carries id");
        let (hi, mi) = models::landmark_jacobians_invariant(map, id, &belief.state)?;
        let zi = models::innovation(ErrorConvention::RightInvariant, item, &belief.state, map)?;
        h.view_mut((3 * i, 0), (3, 12)).copy_from(&hi);
        m.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&mi);
        r.view_mut((3 * i, 3 * i), (3, 3))
            .copy_from(&noise.r_landmark);
        z.rows_mut(3 * i, 3).copy_from(&zi);
    }
    Ok(Correction { h, m, r, z })
}

/// IEKF correction of a left-invariant belief by one measurement.
///
/// GPS applies the left-invariant correction directly. A landmark measurement
/// is right-invariant: the covariance is mapped to the right convention with
/// `Ad(X_check)`, corrected there, and mapped back with the adjoint of the
/// corrected state.
pub fn iekf_correct(
    belief: &Belief,
    meas: &ExteroMeasurement,
    map: &LandmarkMap,
    noise: &NoiseSpec,
) -> Result<Belief> {
    match meas.kind {
        MeasurementKind::GpsLeftInvariant => iekf_correct_gps(belief, meas, map, noise),
        MeasurementKind::LandmarkRightInvariant => {
            iekf_correct_landmarks(belief, &[meas], map, noise)
        }
    }
}

fn require_convention(belief: &Belief, expected: ErrorConvention) -> Result<()> {
    if belief.convention != expected {
        return Err(Error::ConventionMismatch {
            expected: expected.name(),
            found: belief.convention.name(),
        });
    }
    Ok(())
}

fn iekf_correct_gps(
    belief: &Belief,
    meas: &ExteroMeasurement,
    map: &LandmarkMap,
    noise: &NoiseSpec,
) -> Result<Belief> {
    require_convention(belief, ErrorConvention::LeftInvariant)?;
    let corr = gps_correction_left(belief, meas, map, noise)?;
    let (delta, cov) = apply_correction(&belief.cov, &corr)?;
    Ok(Belief {
        state: belief.state.compose(&exp_g(&TangentVector(-delta))),
        cov,
        convention: ErrorConvention::LeftInvariant,
        t: belief.t,
    })
}

/// Stacked right-invariant correction of all landmark measurements at one
/// timestamp, bracketed by the error representation transformation.
pub fn iekf_correct_landmarks(
    belief: &Belief,
    meas: &[&ExteroMeasurement],
    map: &LandmarkMap,
    noise: &NoiseSpec,
) -> Result<Belief> {
    require_convention(belief, ErrorConvention::LeftInvariant)?;
    if meas.is_empty() {
        return Ok(belief.clone());
    }
    let ad = belief.state.adjoint();
    let cov_right = kalman::symmetrize(&(ad * belief.cov * ad.transpose()));
    let corr = landmark_correction_right(belief, meas, map, noise)?;
    let (delta, cov_right_new) = apply_correction(&cov_right, &corr)?;
    let state = exp_g(&TangentVector(-delta)).compose(&belief.state);
    let ad_inv = state.inverse().adjoint();
    let cov = kalman::symmetrize(&(ad_inv * cov_right_new * ad_inv.transpose()));
    Ok(Belief {
        state,
        cov,
        convention: ErrorConvention::LeftInvariant,
        t: belief.t,
    })
}

/// MEKF correction: multiplicative attitude update, additive position and
/// bias update. Accepts any number of measurements at one timestamp stacked
/// into a single update.
pub fn mekf_correct_batch(
    belief: &Belief,
    meas: &[&ExteroMeasurement],
    map: &LandmarkMap,
    noise: &NoiseSpec,
) -> Result<Belief> {
    require_convention(belief, ErrorConvention::Multiplicative)?;
    if meas.is_empty() {
        return Ok(belief.clone());
    }
    let n = meas.len();
    let mut h = DMatrix::zeros(3 * n, 12);
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    let mut r = DMatrix::zeros(3 * n, 3 * n);
    let mut z = DVector::zeros(3 * n);
    for (i, item) in meas.iter().enumerate() {
        let (hi, mi, ri) = match item.kind {
            MeasurementKind::GpsLeftInvariant => {
                let (hi, mi) = models::gps_jacobians_multiplicative(&belief.state);
                (hi, mi, noise.r_gps)
            }
            MeasurementKind::LandmarkRightInvariant => {
                let id = item.landmark_id.expect("landmark measurement carries id");
                let (hi, mi) = models::landmark_jacobians_multiplicative(map, id, &belief.state)?;
                (hi, mi, noise.r_landmark)
            }
        };
        let zi = models::innovation(ErrorConvention::Multiplicative, item, &belief.state, map)?;
        h.view_mut((3 * i, 0), (3, 12)).copy_from(&hi);
        m.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&mi);
        r.view_mut((3 * i, 3 * i), (3, 3)).copy_from(&ri);
        z.rows_mut(3 * i, 3).copy_from(&zi);
    }
    let corr = Correction { h, m, r, z };
    let (delta, cov) = apply_correction(&belief.cov, &corr)?;
    Ok(Belief {
        state: apply_multiplicative_delta(&belief.state, &delta),
        cov,
        convention: ErrorConvention::Multiplicative,
        t: belief.t,
    })
}

/// MEKF correction by a single measurement.
pub fn mekf_correct(
    belief: &Belief,
    meas: &ExteroMeasurement,
    map: &LandmarkMap,
    noise: &NoiseSpec,
) -> Result<Belief> {
    mekf_correct_batch(belief, &[meas], map, noise)
}

/// `C <- C exp(-d_phi)`, additive `-d` on position and biases.
fn apply_multiplicative_delta(state: &GroupElement, delta: &Vec12) -> GroupElement {
    let d_phi: Vector3<f64> = delta.fixed_rows::<3>(0).into();
    let d_r: Vector3<f64> = delta.fixed_rows::<3>(3).into();
    let d_b1: Vector3<f64> = delta.fixed_rows::<3>(6).into();
    let d_b2: Vector3<f64> = delta.fixed_rows::<3>(9).into();
    GroupElement::new(
        state.attitude() * so3::exp_so3(&(-d_phi)),
        state.position() - d_r,
        state.bias_gyro() - d_b1,
        state.bias_vel() - d_b2,
    )
}

/// Smoother-state innovation between the smoothed next belief and the
/// forward-predicted next belief:
/// left `log(Xs^-1 Xc)`, right `log(Xc Xs^-1)`.
pub fn irts_innovation(
    smoothed_next: &Belief,
    fwd_pred_next: &Belief,
    side: InvariantSide,
) -> Result<TangentVector> {
    let rel = match side {
        InvariantSide::Left => left_error(&smoothed_next.state, &fwd_pred_next.state),
        InvariantSide::Right => right_error(&smoothed_next.state, &fwd_pred_next.state),
    };
    log_g(&rel)
}

/// Invariant smoother state/covariance update:
/// left `Xs = Xf exp(-(Ks z))`, right `Xs = exp(-(Ks z)) Xf`; covariance from
/// the RTS recursion.
pub fn irts_update(
    fwd_corr: &Belief,
    k_s: &Mat12,
    z_s: &TangentVector,
    side: InvariantSide,
    p_check_next: &Mat12,
    p_smooth_next: &Mat12,
) -> Belief {
    let delta = TangentVector(-(k_s * z_s.0));
    let state = match side {
        InvariantSide::Left => fwd_corr.state.compose(&exp_g(&delta)),
        InvariantSide::Right => exp_g(&delta).compose(&fwd_corr.state),
    };
    Belief {
        state,
        cov: kalman::smooth_cov(&fwd_corr.cov, k_s, p_check_next, p_smooth_next),
        convention: fwd_corr.convention,
        t: fwd_corr.t,
    }
}

/// Multiplicative smoother update. The innovation stacks the SO(3) logarithm
/// of the attitude mismatch with the additive mismatch of position and
/// biases, both oriented prediction-relative-to-smoothed so that the update
/// `C <- C exp(-d1)`, `x <- x - d2` reduces to the linear RTS equations.
pub fn mrts_update(
    fwd_corr: &Belief,
    k_s: &Mat12,
    smoothed_next: &Belief,
    fwd_pred_next: &Belief,
) -> Result<Belief> {
    let z_att = so3::log_so3(
        &(smoothed_next.state.attitude().transpose() * fwd_pred_next.state.attitude()),
    )?;
    let mut z = Vec12::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&z_att);
    z.fixed_rows_mut::<3>(3)
        .copy_from(&(fwd_pred_next.state.position() - smoothed_next.state.position()));
    z.fixed_rows_mut::<3>(6)
        .copy_from(&(fwd_pred_next.state.bias_gyro() - smoothed_next.state.bias_gyro()));
    z.fixed_rows_mut::<3>(9)
        .copy_from(&(fwd_pred_next.state.bias_vel() - smoothed_next.state.bias_vel()));
    let delta = k_s * z;
    Ok(Belief {
        state: apply_multiplicative_delta(&fwd_corr.state, &delta),
        cov: kalman::smooth_cov(&fwd_corr.cov, k_s, &fwd_pred_next.cov, &smoothed_next.cov),
        convention: fwd_corr.convention,
        t: fwd_corr.t,
    })
}

/// Step times and durations derived from an interoceptive stream: `N`
/// samples drive `N` steps between `N + 1` states. The final step reuses the
/// median sample period.
pub fn step_times(intero: &[InteroceptiveSample]) -> (Vec<f64>, Vec<f64>) {
    let n = intero.len();
    let mut diffs: Vec<f64> = intero.windows(2).map(|w| w[1].t - w[0].t).collect();
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nominal = if diffs.is_empty() {
        1.0
    } else {
        diffs[diffs.len() / 2]
    };
    let mut times = Vec::with_capacity(n + 1);
    let mut dts = Vec::with_capacity(n);
    for k in 0..n {
        times.push(intero[k].t);
        let dt = if k + 1 < n {
            intero[k + 1].t - intero[k].t
        } else {
            nominal
        };
        dts.push(dt);
    }
    times.push(intero[n - 1].t + dts[n - 1]);
    (times, dts)
}

/// Snaps each measurement to the nearest state index (half-period
/// tolerance). Within one step, batch order (GPS before landmarks) is kept.
pub fn snap_measurements(
    extero: &MeasurementBatch,
    times: &[f64],
) -> Result<BTreeMap<usize, Vec<ExteroMeasurement>>> {
    let mut by_step: BTreeMap<usize, Vec<ExteroMeasurement>> = BTreeMap::new();
    if times.len() < 2 {
        if !extero.is_empty() {
            return Err(Error::MeasurementOutOfRange {
                t: extero.items()[0].t,
            });
        }
        return Ok(by_step);
    }
    let half = 0.5 * (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for meas in extero.items() {
        // Nearest state time by binary search over the sorted time grid.
        let idx = match times.binary_search_by(|t| t.partial_cmp(&meas.t).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= times.len() {
                    times.len() - 1
                } else if (meas.t - times[i - 1]).abs() <= (times[i] - meas.t).abs() {
                    i - 1
                } else {
                    i
                }
            }
        };
        if (meas.t - times[idx]).abs() > half * (1.0 + 1e-9) {
            return Err(Error::MeasurementOutOfRange { t: meas.t });
        }
        by_step.entry(idx).or_default().push(*meas);
    }
    Ok(by_step)
}

struct ForwardPass {
    pred: Vec<Belief>,
    corr: Vec<Belief>,
    transitions: Vec<Mat12>,
}

fn correct_at_step(
    belief: &Belief,
    meas: &[ExteroMeasurement],
    problem: &SmootherProblem,
    flavor: SmootherFlavor,
    step: usize,
) -> Result<Belief> {
    let mut current = belief.clone();
    let gps: Vec<&ExteroMeasurement> = meas
        .iter()
        .filter(|m| m.kind == MeasurementKind::GpsLeftInvariant)
        .collect();
    let landmarks: Vec<&ExteroMeasurement> = meas
        .iter()
        .filter(|m| m.kind == MeasurementKind::LandmarkRightInvariant)
        .collect();
    match flavor {
        SmootherFlavor::Lirts => {
            for m in gps {
                current = iekf_correct_gps(&current, m, problem.map, problem.noise)
                    .map_err(|e| e.at_step(step))?;
            }
            if !landmarks.is_empty() {
                current = iekf_correct_landmarks(&current, &landmarks, problem.map, problem.noise)
                    .map_err(|e| e.at_step(step))?;
            }
        }
        SmootherFlavor::Mrts => {
            for m in gps {
                current = mekf_correct(&current, m, problem.map, problem.noise)
                    .map_err(|e| e.at_step(step))?;
            }
            if !landmarks.is_empty() {
                current = mekf_correct_batch(&current, &landmarks, problem.map, problem.noise)
                    .map_err(|e| e.at_step(step))?;
            }
        }
    }
    Ok(current)
}

fn forward_pass(
    initial: &Belief,
    problem: &SmootherProblem,
    flavor: SmootherFlavor,
    times: &[f64],
    dts: &[f64],
    by_step: &BTreeMap<usize, Vec<ExteroMeasurement>>,
) -> Result<ForwardPass> {
    let n = dts.len();
    let q_psd = problem.noise.process_psd();
    let mut pred = Vec::with_capacity(n + 1);
    let mut corr = Vec::with_capacity(n + 1);
    let mut transitions = Vec::with_capacity(n);
    let mut initial = initial.clone();
    initial.t = times[0];
    pred.push(initial.clone());
    let corr0 = match by_step.get(&0) {
        Some(meas) => correct_at_step(&initial, meas, problem, flavor, 0)?,
        None => initial,
    };
    corr.push(corr0);
    for k in 0..n {
        let u = &problem.intero[k];
        let dt = dts[k];
        let prev = &corr[k];
        let (a, l) = match flavor {
            SmootherFlavor::Lirts => models::invariant_process_jacobians(
                u,
                prev.state.bias_gyro(),
                prev.state.bias_vel(),
            ),
            SmootherFlavor::Mrts => models::multiplicative_process_jacobians(
                u,
                prev.state.attitude(),
                prev.state.bias_gyro(),
                prev.state.bias_vel(),
            ),
        };
        let a_d = Mat12::identity() + a * dt;
        let q_d = q_psd * dt;
        let x_pred = models::propagate(&prev.state, u, dt);
        let predicted =
            kf_predict(prev, &a_d, &l, &q_d, x_pred, times[k + 1]).map_err(|e| e.at_step(k))?;
        let corrected = match by_step.get(&(k + 1)) {
            Some(meas) => correct_at_step(&predicted, meas, problem, flavor, k + 1)?,
            None => predicted.clone(),
        };
        pred.push(predicted);
        corr.push(corrected);
        transitions.push(a_d);
    }
    Ok(ForwardPass {
        pred,
        corr,
        transitions,
    })
}

fn backward_pass(fwd: &ForwardPass, flavor: SmootherFlavor) -> Result<(Vec<Belief>, Vec<Mat12>)> {
    let n = fwd.transitions.len();
    let mut smoothed = vec![fwd.corr[n].clone(); n + 1];
    let mut gains = vec![Mat12::zeros(); n];
    for k in (0..n).rev() {
        let k_s = kalman::smoother_gain(
            &fwd.corr[k].cov,
            &fwd.transitions[k],
            &fwd.pred[k + 1].cov,
            k,
        )?;
        smoothed[k] = match flavor {
            SmootherFlavor::Lirts => {
                let z = irts_innovation(&smoothed[k + 1], &fwd.pred[k + 1], InvariantSide::Left)
                    .map_err(|e| e.at_step(k))?;
                irts_update(
                    &fwd.corr[k],
                    &k_s,
                    &z,
                    InvariantSide::Left,
                    &fwd.pred[k + 1].cov,
                    &smoothed[k + 1].cov,
                )
            }
            SmootherFlavor::Mrts => {
                mrts_update(&fwd.corr[k], &k_s, &smoothed[k + 1], &fwd.pred[k + 1])
                    .map_err(|e| e.at_step(k))?
            }
        };
        gains[k] = k_s;
    }
    Ok((smoothed, gains))
}

/// Runs `iterations` forward-backward sweeps. Every sweep after the first
/// restarts the forward filter from the previous sweep's smoothed initial
/// belief; Jacobians are recomputed from the current best estimate at every
/// step of both passes.
pub fn run_smoother(
    initial: &Belief,
    problem: &SmootherProblem,
    flavor: SmootherFlavor,
    iterations: usize,
) -> Result<SmootherRun> {
    if iterations == 0 {
        return Err(Error::InvalidScenario("iterations must be >= 1".into()));
    }
    require_convention(initial, flavor.convention())?;
    if problem.intero.is_empty() {
        return Err(Error::InvalidScenario("empty interoceptive stream".into()));
    }
    let (times, dts) = step_times(problem.intero);
    let by_step = snap_measurements(problem.extero, &times)?;
    let mut start = initial.clone();
    let mut iteration_states = Vec::with_capacity(iterations);
    let mut last: Option<SmootherRun> = None;
    for _ in 0..iterations {
        let fwd = forward_pass(&start, problem, flavor, &times, &dts, &by_step)?;
        let (smoothed, gains) = backward_pass(&fwd, flavor)?;
        iteration_states.push(smoothed.iter().map(|b| b.state.clone()).collect());
        start = smoothed[0].clone();
        last = Some(SmootherRun {
            forward_pred: fwd.pred,
            forward_corr: fwd.corr,
            smoothed,
            transitions: fwd.transitions,
            smoother_gains: gains,
            iteration_states: Vec::new(),
        });
    }
    let mut run = last.expect("iterations >= 1");
    run.iteration_states = iteration_states;
    Ok(run)
}

/// Forward filter only (no backward pass), exposed for filter-versus-smoother
/// comparisons.
pub fn run_forward_filter(
    initial: &Belief,
    problem: &SmootherProblem,
    flavor: SmootherFlavor,
) -> Result<(Vec<Belief>, Vec<Belief>)> {
    require_convention(initial, flavor.convention())?;
    let (times, dts) = step_times(problem.intero);
    let by_step = snap_measurements(problem.extero, &times)?;
    let fwd = forward_pass(initial, problem, flavor, &times, &dts, &by_step)?;
    Ok((fwd.pred, fwd.corr))
}
