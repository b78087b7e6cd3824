//! Process and measurement models for the pose-plus-biases problem.
//!
//! The continuous-time kinematics driven by biased rate-gyro and
//! translational-velocity readings are discretized with a forward Euler step
//! (exponential on the attitude so the state stays on the group). Two
//! linearization families are provided: the invariant one, whose process
//! Jacobian depends only on the inputs and bias estimates, and the
//! multiplicative one, which also depends on the attitude estimate.

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::group::{exp_g, GroupElement, TangentVector};
use crate::so3;
use crate::{Mat12, Mat9};

/// One timestamped pair of interoceptive readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteroceptiveSample {
    /// Sample time in seconds.
    pub t: f64,
    /// Rate-gyro reading, rad/s.
    pub gyro: Vector3<f64>,
    /// Translational-velocity reading in the body frame, m/s.
    pub vel: Vector3<f64>,
}

/// Which error convention a linearization or innovation is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorConvention {
    LeftInvariant,
    RightInvariant,
    Multiplicative,
}

impl ErrorConvention {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorConvention::LeftInvariant => "left-invariant",
            ErrorConvention::RightInvariant => "right-invariant",
            ErrorConvention::Multiplicative => "multiplicative",
        }
    }
}

/// Continuous-time process noise PSDs and discrete measurement covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Gyro white-noise PSD.
    pub q_gyro: Matrix3<f64>,
    /// Velocity-sensor white-noise PSD.
    pub q_vel: Matrix3<f64>,
    /// Gyro-bias random-walk PSD.
    pub q_bias_gyro: Matrix3<f64>,
    /// Velocity-bias random-walk PSD.
    pub q_bias_vel: Matrix3<f64>,
    /// GPS measurement covariance.
    pub r_gps: Matrix3<f64>,
    /// Per-landmark measurement covariance.
    pub r_landmark: Matrix3<f64>,
}

impl NoiseSpec {
    pub fn isotropic(
        sigma_gyro: f64,
        sigma_vel: f64,
        sigma_walk_gyro: f64,
        sigma_walk_vel: f64,
        sigma_gps: f64,
        sigma_landmark: f64,
    ) -> Self {
        let iso = |s: f64| Matrix3::identity() * s * s;
        NoiseSpec {
            q_gyro: iso(sigma_gyro),
            q_vel: iso(sigma_vel),
            q_bias_gyro: iso(sigma_walk_gyro),
            q_bias_vel: iso(sigma_walk_vel),
            r_gps: iso(sigma_gps),
            r_landmark: iso(sigma_landmark),
        }
    }

    /// Checks symmetry (1e-12) and positive definiteness of every matrix.
    pub fn validate(&self) -> Result<()> {
        let blocks: [(&Matrix3<f64>, &'static str); 6] = [
            (&self.q_gyro, "q_gyro"),
            (&self.q_vel, "q_vel"),
            (&self.q_bias_gyro, "q_bias_gyro"),
            (&self.q_bias_vel, "q_bias_vel"),
            (&self.r_gps, "r_gps"),
            (&self.r_landmark, "r_landmark"),
        ];
        for (m, name) in blocks {
            if (m - m.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidScenario(format!("{name} is not symmetric")));
            }
            if m.cholesky().is_none() {
                return Err(Error::NonPsdCovariance { context: name });
            }
        }
        Ok(())
    }

    /// Stacked 12x12 process PSD `diag(q_gyro, q_vel, q_bias_gyro, q_bias_vel)`.
    pub fn process_psd(&self) -> Mat12 {
        let mut q = Mat12::zeros();
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.q_gyro);
        q.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.q_vel);
        q.fixed_view_mut::<3, 3>(6, 6).copy_from(&self.q_bias_gyro);
        q.fixed_view_mut::<3, 3>(9, 9).copy_from(&self.q_bias_vel);
        q
    }
}

/// Kinds of exteroceptive measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MeasurementKind {
    /// Position resolved in the world frame; left-invariant form.
    GpsLeftInvariant,
    /// Landmark position resolved in the body frame; right-invariant form.
    LandmarkRightInvariant,
}

/// A timestamped exteroceptive measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExteroMeasurement {
    pub t: f64,
    pub kind: MeasurementKind,
    pub value: Vector3<f64>,
    pub landmark_id: Option<usize>,
}

impl ExteroMeasurement {
    pub fn gps(t: f64, value: Vector3<f64>) -> Self {
        ExteroMeasurement {
            t,
            kind: MeasurementKind::GpsLeftInvariant,
            value,
            landmark_id: None,
        }
    }

    pub fn landmark(t: f64, id: usize, value: Vector3<f64>) -> Self {
        ExteroMeasurement {
            t,
            kind: MeasurementKind::LandmarkRightInvariant,
            value,
            landmark_id: Some(id),
        }
    }
}

/// A validated, time-sorted collection of exteroceptive measurements.
///
/// At equal timestamps GPS measurements sort before landmark measurements,
/// which matches the order corrections are applied in the forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementBatch {
    items: Vec<ExteroMeasurement>,
}

impl MeasurementBatch {
    pub fn new(mut items: Vec<ExteroMeasurement>) -> Result<Self> {
        for m in &items {
            let has_id = m.landmark_id.is_some();
            let is_landmark = m.kind == MeasurementKind::LandmarkRightInvariant;
            if has_id != is_landmark {
                return Err(Error::InvalidScenario(format!(
                    "measurement at t = {} has landmark_id {:?} but kind {:?}",
                    m.t, m.landmark_id, m.kind
                )));
            }
            if !m.t.is_finite() {
                return Err(Error::InvalidScenario("non-finite measurement time".into()));
            }
        }
        items.sort_by(|a, b| {
            a.t.partial_cmp(&b.t)
                .unwrap()
                .then(a.kind.cmp(&b.kind))
                .then(a.landmark_id.cmp(&b.landmark_id))
        });
        Ok(MeasurementBatch { items })
    }

    pub fn empty() -> Self {
        MeasurementBatch { items: Vec::new() }
    }

    pub fn items(&self) -> &[ExteroMeasurement] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Known landmark positions in the world frame, densely indexed from zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LandmarkMap {
    positions: Vec<Vector3<f64>>,
}

impl LandmarkMap {
    pub fn new(positions: Vec<Vector3<f64>>) -> Self {
        LandmarkMap { positions }
    }

    pub fn get(&self, id: usize) -> Result<&Vector3<f64>> {
        self.positions.get(id).ok_or(Error::UnknownLandmark {
            id,
            map_len: self.positions.len(),
        })
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Forward-Euler step of the biased kinematics: exponential update on the
/// attitude, Euler on the position, biases held (their walk has zero mean).
pub fn propagate(x: &GroupElement, u: &InteroceptiveSample, dt: f64) -> GroupElement {
    let omega = u.gyro + x.bias_gyro();
    let vel = u.vel + x.bias_vel();
    GroupElement::new(
        x.attitude() * so3::exp_so3(&(omega * dt)),
        x.position() + x.attitude() * vel * dt,
        *x.bias_gyro(),
        *x.bias_vel(),
    )
}

/// Continuous-time process Jacobians `(A, L)` under the left-invariant error.
///
/// `A` depends on the inputs and bias estimates only; `L` is `-I`.
pub fn invariant_process_jacobians(
    u: &InteroceptiveSample,
    beta_gyro_hat: &Vector3<f64>,
    beta_vel_hat: &Vector3<f64>,
) -> (Mat12, Mat12) {
    let w1 = so3::cross(&(u.gyro + beta_gyro_hat));
    let w2 = so3::cross(&(u.vel + beta_vel_hat));
    let mut a = Mat12::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-w1));
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-w2));
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-w1));
    a.fixed_view_mut::<3, 3>(0, 6)
        .copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, 9)
        .copy_from(&Matrix3::identity());
    (a, -Mat12::identity())
}

/// Continuous-time process Jacobians `(A*, L*)` under the multiplicative
/// error; both depend on the attitude estimate.
pub fn multiplicative_process_jacobians(
    u: &InteroceptiveSample,
    c_hat: &Matrix3<f64>,
    beta_gyro_hat: &Vector3<f64>,
    beta_vel_hat: &Vector3<f64>,
) -> (Mat12, Mat12) {
    let w1 = so3::cross(&(u.gyro + beta_gyro_hat));
    let w2 = so3::cross(&(u.vel + beta_vel_hat));
    let mut a = Mat12::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-w1));
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-(c_hat * w2)));
    a.fixed_view_mut::<3, 3>(0, 6)
        .copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, 9).copy_from(c_hat);
    let mut l = Mat12::identity();
    l.fixed_view_mut::<3, 3>(3, 3).copy_from(c_hat);
    (a, -l)
}

/// Predicted GPS measurement: the world-frame position.
pub fn gps_predict(x: &GroupElement) -> Vector3<f64> {
    *x.position()
}

/// Predicted body-frame landmark measurement `Ct (p - r)`.
pub fn landmark_predict(x: &GroupElement, map: &LandmarkMap, id: usize) -> Result<Vector3<f64>> {
    let p = map.get(id)?;
    Ok(x.attitude().transpose() * (p - x.position()))
}

/// Predicted value for an arbitrary measurement.
pub fn predict_measurement(
    x: &GroupElement,
    map: &LandmarkMap,
    meas: &ExteroMeasurement,
) -> Result<Vector3<f64>> {
    match meas.kind {
        MeasurementKind::GpsLeftInvariant => Ok(gps_predict(x)),
        MeasurementKind::LandmarkRightInvariant => {
            landmark_predict(x, map, meas.landmark_id.unwrap_or(usize::MAX))
        }
    }
}

/// Effective 3-vector innovation for a single measurement under the given
/// convention: `Ct (y - yhat)` (left), `C (y - yhat)` (right) or the plain
/// difference (multiplicative).
pub fn innovation(
    convention: ErrorConvention,
    meas: &ExteroMeasurement,
    x_check: &GroupElement,
    map: &LandmarkMap,
) -> Result<Vector3<f64>> {
    let predicted = predict_measurement(x_check, map, meas)?;
    let diff = meas.value - predicted;
    Ok(match convention {
        ErrorConvention::LeftInvariant => x_check.attitude().transpose() * diff,
        ErrorConvention::RightInvariant => x_check.attitude() * diff,
        ErrorConvention::Multiplicative => diff,
    })
}

/// Innovation Jacobian row for a GPS measurement under the invariant
/// (left-invariant) convention: `H = [0 -I 0 0]`, `M = Ct`.
pub fn gps_jacobians_invariant(x_check: &GroupElement) -> (SMatrix<f64, 3, 12>, Matrix3<f64>) {
    let mut h = SMatrix::<f64, 3, 12>::zeros();
    h.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-Matrix3::identity()));
    (h, x_check.attitude().transpose())
}

/// Innovation Jacobian row for one landmark under the right-invariant
/// convention: `H = [-p^x I 0 0]`, `M = C`. `H` is independent of the state.
pub fn landmark_jacobians_invariant(
    map: &LandmarkMap,
    id: usize,
    x_check: &GroupElement,
) -> Result<(SMatrix<f64, 3, 12>, Matrix3<f64>)> {
    let p = map.get(id)?;
    let mut h = SMatrix::<f64, 3, 12>::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-so3::cross(p)));
    h.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&Matrix3::identity());
    Ok((h, *x_check.attitude()))
}

/// GPS Jacobians under the multiplicative convention: `H = [0 -I 0 0]`, `M = I`.
pub fn gps_jacobians_multiplicative(
    _x_check: &GroupElement,
) -> (SMatrix<f64, 3, 12>, Matrix3<f64>) {
    let mut h = SMatrix::<f64, 3, 12>::zeros();
    h.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-Matrix3::identity()));
    (h, Matrix3::identity())
}

/// Landmark Jacobians under the multiplicative convention:
/// `H = [-(Ct (p - r))^x  Ct  0 0]`, `M = I`. Recomputed from the current
/// estimate on every call; the attitude block is the cross matrix of the
/// predicted measurement itself.
pub fn landmark_jacobians_multiplicative(
    map: &LandmarkMap,
    id: usize,
    x_check: &GroupElement,
) -> Result<(SMatrix<f64, 3, 12>, Matrix3<f64>)> {
    let predicted = landmark_predict(x_check, map, id)?;
    let ct = x_check.attitude().transpose();
    let mut h = SMatrix::<f64, 3, 12>::zeros();
    h.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-so3::cross(&predicted)));
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&ct);
    Ok((h, Matrix3::identity()))
}

/// Stacked invariant measurement Jacobians for a whole map (landmark kind) or
/// a single GPS row. Landmark rows are stacked in index order.
pub fn invariant_measurement_jacobians(
    kind: MeasurementKind,
    map: &LandmarkMap,
    x_check: &GroupElement,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    match kind {
        MeasurementKind::GpsLeftInvariant => {
            let (h, m) = gps_jacobians_invariant(x_check);
            Ok((stack_rows(&[h]), block_diag(&[m])))
        }
        MeasurementKind::LandmarkRightInvariant => {
            let mut hs = Vec::with_capacity(map.len());
            let mut ms = Vec::with_capacity(map.len());
            for id in 0..map.len() {
                let (h, m) = landmark_jacobians_invariant(map, id, x_check)?;
                hs.push(h);
                ms.push(m);
            }
            Ok((stack_rows(&hs), block_diag(&ms)))
        }
    }
}

/// Stacked multiplicative measurement Jacobians, mirroring
/// [`invariant_measurement_jacobians`].
pub fn multiplicative_measurement_jacobians(
    kind: MeasurementKind,
    map: &LandmarkMap,
    x_check: &GroupElement,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    match kind {
        MeasurementKind::GpsLeftInvariant => {
            let (h, m) = gps_jacobians_multiplicative(x_check);
            Ok((stack_rows(&[h]), block_diag(&[m])))
        }
        MeasurementKind::LandmarkRightInvariant => {
            let mut hs = Vec::with_capacity(map.len());
            let mut ms = Vec::with_capacity(map.len());
            for id in 0..map.len() {
                let (h, m) = landmark_jacobians_multiplicative(map, id, x_check)?;
                hs.push(h);
                ms.push(m);
            }
            Ok((stack_rows(&hs), block_diag(&ms)))
        }
    }
}

pub(crate) fn stack_rows(rows: &[SMatrix<f64, 3, 12>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(3 * rows.len(), 12);
    for (i, r) in rows.iter().enumerate() {
        out.view_mut((3 * i, 0), (3, 12)).copy_from(r);
    }
    out
}

pub(crate) fn block_diag(blocks: &[Matrix3<f64>]) -> DMatrix<f64> {
    let n = 3 * blocks.len();
    let mut out = DMatrix::zeros(n, n);
    for (i, b) in blocks.iter().enumerate() {
        out.view_mut((3 * i, 3 * i), (3, 3)).copy_from(b);
    }
    out
}

/// Embedding derivative of the bias-free rigid-body kinematics, with the
/// interoceptive readings treated as the true rates. Group affine.
pub fn bias_free_kinematics(x: &Mat9, u: &InteroceptiveSample) -> Mat9 {
    let lambda = crate::group::wedge(&TangentVector::from_blocks(
        u.gyro,
        u.vel,
        Vector3::zeros(),
        Vector3::zeros(),
    ));
    x * lambda.as_matrix()
}

/// Embedding derivative of the full kinematics with the biases read from the
/// state. The bias coupling breaks the group-affine identity.
pub fn bias_coupled_kinematics(x: &Mat9, u: &InteroceptiveSample) -> Mat9 {
    let c: Matrix3<f64> = x.fixed_view::<3, 3>(0, 0).into_owned();
    let beta1 = Vector3::new(x[(4, 7)], x[(5, 7)], x[(6, 7)]);
    let beta2 = Vector3::new(x[(4, 8)], x[(5, 8)], x[(6, 8)]);
    let mut f = Mat9::zeros();
    f.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(c * so3::cross(&(u.gyro + beta1))));
    f.fixed_view_mut::<3, 1>(0, 3)
        .copy_from(&(c * (u.vel + beta2)));
    f
}

/// Numerically checks the group-affine identity
/// `F(X1 X2, u) = X1 F(X2, u) + F(X1, u) X2 - X1 F(1, u) X2`
/// over `trials` random draws.
pub fn is_group_affine<F>(f: F, trials: usize) -> bool
where
    F: Fn(&Mat9, &InteroceptiveSample) -> Mat9,
{
    let mut rng = ChaCha12Rng::seed_from_u64(0xC0FFEE);
    let rand_vec3 = |rng: &mut ChaCha12Rng, s: f64| {
        Vector3::from_fn(|_, _| (rng.random::<f64>() * 2.0 - 1.0) * s)
    };
    for _ in 0..trials {
        let x1 = exp_g(&TangentVector::from_blocks(
            rand_vec3(&mut rng, 1.0),
            rand_vec3(&mut rng, 1.0),
            rand_vec3(&mut rng, 0.2),
            rand_vec3(&mut rng, 0.2),
        ))
        .embed();
        let x2 = exp_g(&TangentVector::from_blocks(
            rand_vec3(&mut rng, 1.0),
            rand_vec3(&mut rng, 1.0),
            rand_vec3(&mut rng, 0.2),
            rand_vec3(&mut rng, 0.2),
        ))
        .embed();
        let u = InteroceptiveSample {
            t: 0.0,
            gyro: rand_vec3(&mut rng, 0.5),
            vel: rand_vec3(&mut rng, 0.5),
        };
        let identity = Mat9::identity();
        let lhs = f(&(x1 * x2), &u);
        let rhs = x1 * f(&x2, &u) + f(&x1, &u) * x2 - x1 * f(&identity, &u) * x2;
        let tol = 1e-9 * (1.0 + lhs.norm());
        if (lhs - rhs).norm() > tol {
            return false;
        }
    }
    true
}
