//! Gauss-Newton batch MAP solvers over the whole trajectory.
//!
//! The invariant flavor expresses prior and process residuals in
//! left-invariant error coordinates and uses the left innovation for GPS;
//! landmark measurements keep the standard innovation, whose Jacobian then
//! depends on the state estimate (the price of a fixed innovation when both
//! measurement types are present). The multiplicative flavor uses the
//! multiplicative error coordinates and standard innovations throughout.
//!
//! Each iteration assembles the normal equations, solves them by block
//! Cholesky elimination along the time chain (measurements fold into the
//! diagonal), and retracts with the flavor-consistent update. Plain
//! Gauss-Newton: no damping or line search, so per-iteration cost values are
//! recorded rather than asserted monotone.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::estimators::{snap_measurements, step_times, Belief};
use crate::group::{exp_g, left_error, log_g, GroupElement, TangentVector};
use crate::kalman;
use crate::models::{
    self, ErrorConvention, ExteroMeasurement, InteroceptiveSample, LandmarkMap, MeasurementBatch,
    MeasurementKind, NoiseSpec,
};
use crate::so3;
use crate::{Mat12, Vec12};

type HRow = SMatrix<f64, 3, 12>;

/// Which error definitions the batch solver linearizes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnFlavor {
    /// Left-invariant errors; left innovation for GPS, standard innovation
    /// for landmarks.
    Invariant,
    /// Multiplicative errors and standard innovations for every measurement.
    Multiplicative,
}

impl GnFlavor {
    pub fn convention(&self) -> ErrorConvention {
        match self {
            GnFlavor::Invariant => ErrorConvention::LeftInvariant,
            GnFlavor::Multiplicative => ErrorConvention::Multiplicative,
        }
    }
}

/// A full batch MAP instance.
#[derive(Debug, Clone, Copy)]
pub struct BatchProblem<'a> {
    pub prior: &'a Belief,
    pub intero: &'a [InteroceptiveSample],
    pub extero: &'a MeasurementBatch,
    pub map: &'a LandmarkMap,
    pub noise: &'a NoiseSpec,
}

/// Solver output: final states plus per-iteration cost values and state
/// snapshots (`snapshots[0]` is the dead-reckoned initialization).
#[derive(Debug, Clone)]
pub struct BatchSolution {
    pub states: Vec<GroupElement>,
    pub costs: Vec<f64>,
    pub snapshots: Vec<Vec<GroupElement>>,
}

/// Pure propagation of the prior mean through the interoceptive stream,
/// carrying the prior's bias estimates.
pub fn dead_reckon(prior_state: &GroupElement, intero: &[InteroceptiveSample]) -> Vec<GroupElement> {
    let (_, dts) = step_times(intero);
    let mut states = Vec::with_capacity(intero.len() + 1);
    states.push(prior_state.clone());
    for (u, dt) in intero.iter().zip(&dts) {
        let next = models::propagate(states.last().unwrap(), u, *dt);
        states.push(next);
    }
    states
}

/// Residual between a candidate state (truth slot) and a reference
/// (estimate slot) in the flavor's error coordinates.
fn flavor_error(flavor: GnFlavor, candidate: &GroupElement, reference: &GroupElement) -> Result<Vec12> {
    match flavor {
        GnFlavor::Invariant => Ok(log_g(&left_error(candidate, reference))?.0),
        GnFlavor::Multiplicative => {
            let phi =
                so3::log_so3(&(candidate.attitude().transpose() * reference.attitude()))?;
            let mut e = Vec12::zeros();
            e.fixed_rows_mut::<3>(0).copy_from(&phi);
            e.fixed_rows_mut::<3>(3)
                .copy_from(&(reference.position() - candidate.position()));
            e.fixed_rows_mut::<3>(6)
                .copy_from(&(reference.bias_gyro() - candidate.bias_gyro()));
            e.fixed_rows_mut::<3>(9)
                .copy_from(&(reference.bias_vel() - candidate.bias_vel()));
            Ok(e)
        }
    }
}

/// Flavor-consistent retraction by the solved correction.
fn retract(flavor: GnFlavor, state: &GroupElement, delta: &Vec12) -> GroupElement {
    match flavor {
        GnFlavor::Invariant => state.compose(&exp_g(&TangentVector(-*delta))),
        GnFlavor::Multiplicative => {
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
    }
}

/// GPS residual Jacobian for the invariant flavor: constant, independent of
/// the state estimate.
pub(crate) fn ign_gps_jacobian() -> HRow {
    let mut j = HRow::zeros();
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    j
}

/// Landmark residual Jacobian for the invariant flavor (standard innovation
/// under the left-invariant error): depends on the state estimate.
pub(crate) fn ign_landmark_jacobian(
    map: &LandmarkMap,
    id: usize,
    state: &GroupElement,
) -> Result<HRow> {
    let w = state.attitude().transpose() * (map.get(id)? - state.position());
    let mut j = HRow::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3::cross(&w));
    j.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-Matrix3::identity()));
    Ok(j)
}

pub(crate) fn mgn_gps_jacobian() -> HRow {
    ign_gps_jacobian()
}

pub(crate) fn mgn_landmark_jacobian(
    map: &LandmarkMap,
    id: usize,
    state: &GroupElement,
) -> Result<HRow> {
    let w = state.attitude().transpose() * (map.get(id)? - state.position());
    let mut j = HRow::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3::cross(&w));
    j.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-state.attitude().transpose()));
    Ok(j)
}

fn inv3(m: &Matrix3<f64>, block: usize) -> Result<Matrix3<f64>> {
    m.try_inverse()
        .ok_or(Error::SingularNormalEquations { block })
}

fn inv12(m: &Mat12, block: usize) -> Result<Mat12> {
    m.try_inverse()
        .ok_or(Error::SingularNormalEquations { block })
}

/// Block-tridiagonal normal-equation system along the time chain.
pub(crate) struct BlockTridiag {
    pub diag: Vec<Mat12>,
    /// `upper[k]` is block `(k, k+1)`.
    pub upper: Vec<Mat12>,
    pub rhs: Vec<Vec12>,
}

impl BlockTridiag {
    pub fn new(n_blocks: usize) -> Self {
        BlockTridiag {
            diag: vec![Mat12::zeros(); n_blocks],
            upper: vec![Mat12::zeros(); n_blocks.saturating_sub(1)],
            rhs: vec![Vec12::zeros(); n_blocks],
        }
    }

    /// Block Cholesky elimination down the chain, then back substitution.
    pub fn solve(mut self) -> Result<Vec<Vec12>> {
        let n = self.diag.len();
        let mut factors = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                let prev: &nalgebra::Cholesky<f64, nalgebra::Const<12>> = &factors[k - 1];
                let dinv_u = prev.solve(&self.upper[k - 1]);
                let dinv_b = prev.solve(&self.rhs[k - 1]);
                let ut = self.upper[k - 1].transpose();
                self.diag[k] -= ut * dinv_u;
                let correction = ut * dinv_b;
                self.rhs[k] -= correction;
            }
            let chol = kalman::symmetrize(&self.diag[k])
                .cholesky()
                .ok_or(Error::SingularNormalEquations { block: k })?;
            factors.push(chol);
        }
        let mut delta = vec![Vec12::zeros(); n];
        delta[n - 1] = factors[n - 1].solve(&self.rhs[n - 1]);
        for k in (0..n - 1).rev() {
            let adjusted = self.rhs[k] - self.upper[k] * delta[k + 1];
            delta[k] = factors[k].solve(&adjusted);
        }
        Ok(delta)
    }

    /// Dense assembly of the same system, for reference solves in tests.
    #[cfg(test)]
    pub fn to_dense(&self) -> (nalgebra::DMatrix<f64>, nalgebra::DVector<f64>) {
        let n = self.diag.len();
        let mut a = nalgebra::DMatrix::zeros(12 * n, 12 * n);
        let mut b = nalgebra::DVector::zeros(12 * n);
        for k in 0..n {
            for i in 0..12 {
                for j in 0..12 {
                    a[(12 * k + i, 12 * k + j)] = self.diag[k][(i, j)];
                }
                b[12 * k + i] = self.rhs[k][i];
            }
            if k + 1 < n {
                for i in 0..12 {
                    for j in 0..12 {
                        a[(12 * k + i, 12 * (k + 1) + j)] = self.upper[k][(i, j)];
                        a[(12 * (k + 1) + j, 12 * k + i)] = self.upper[k][(i, j)];
                    }
                }
            }
        }
        (a, b)
    }
}

/// One Gauss-Newton iteration: assemble residuals and Jacobians at `current`,
/// solve the normal equations, retract. Returns the updated trajectory and
/// the weighted squared-residual cost at the linearization point.
pub fn gn_iterate(
    problem: &BatchProblem,
    current: &[GroupElement],
    flavor: GnFlavor,
) -> Result<(Vec<GroupElement>, f64)> {
    let n = problem.intero.len();
    if current.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            actual: current.len(),
        });
    }
    let (times, dts) = step_times(problem.intero);
    let by_step = snap_measurements(problem.extero, &times)?;
    let mut sys = BlockTridiag::new(n + 1);
    let mut cost = 0.0;

    // Prior term on block 0.
    let p0_inv = inv12(&problem.prior.cov, 0)?;
    let e0 = flavor_error(flavor, &current[0], &problem.prior.state)?;
    sys.diag[0] += p0_inv;
    sys.rhs[0] -= p0_inv * e0;
    cost += (e0.transpose() * p0_inv * e0)[0];

    // Process chain.
    let q_psd = problem.noise.process_psd();
    for k in 1..=n {
        let u = &problem.intero[k - 1];
        let dt = dts[k - 1];
        let prev = &current[k - 1];
        let (a, l) = match flavor {
            GnFlavor::Invariant => {
                models::invariant_process_jacobians(u, prev.bias_gyro(), prev.bias_vel())
            }
            GnFlavor::Multiplicative => models::multiplicative_process_jacobians(
                u,
                prev.attitude(),
                prev.bias_gyro(),
                prev.bias_vel(),
            ),
        };
        let a_d = Mat12::identity() + a * dt;
        let q_d = kalman::symmetrize(&(l * (q_psd * dt) * l.transpose()));
        let w = inv12(&q_d, k)?;
        let pred = models::propagate(prev, u, dt);
        let e = flavor_error(flavor, &current[k], &pred).map_err(|err| err.at_step(k))?;
        let at_w = a_d.transpose() * w;
        sys.diag[k - 1] += at_w * a_d;
        sys.diag[k] += w;
        sys.upper[k - 1] -= at_w;
        sys.rhs[k - 1] += at_w * e;
        sys.rhs[k] -= w * e;
        cost += (e.transpose() * w * e)[0];
    }

    // Measurement terms fold into the diagonal.
    for (&step, meas_list) in &by_step {
        for meas in meas_list {
            let state = &current[step];
            let (j, e, w) = measurement_term(flavor, meas, state, problem.map, problem.noise)
                .map_err(|err| err.at_step(step))?;
            sys.diag[step] += j.transpose() * w * j;
            sys.rhs[step] -= j.transpose() * w * e;
            cost += (e.transpose() * w * e)[0];
        }
    }

    let delta = sys.solve()?;
    let next = current
        .iter()
        .zip(&delta)
        .map(|(x, d)| retract(flavor, x, d))
        .collect();
    Ok((next, cost))
}

fn measurement_term(
    flavor: GnFlavor,
    meas: &ExteroMeasurement,
    state: &GroupElement,
    map: &LandmarkMap,
    noise: &NoiseSpec,
) -> Result<(HRow, Vector3<f64>, Matrix3<f64>)> {
    match (flavor, meas.kind) {
        (GnFlavor::Invariant, MeasurementKind::GpsLeftInvariant) => {
            // Left innovation; noise enters through M = Ct.
            let e = models::innovation(ErrorConvention::LeftInvariant, meas, state, map)?;
            let ct = state.attitude().transpose();
            let w = inv3(&(ct * noise.r_gps * ct.transpose()), 0)?;
            Ok((ign_gps_jacobian(), e, w))
        }
        (GnFlavor::Invariant, MeasurementKind::LandmarkRightInvariant) => {
            // Standard innovation y - yhat; the batch solver cannot switch
            // innovation per measurement, so this Jacobian depends on the
            // state estimate.
            let id = meas.landmark_id.expect("landmark measurement carries id");
            let e = models::innovation(ErrorConvention::Multiplicative, meas, state, map)?;
            let w = inv3(&noise.r_landmark, 0)?;
            Ok((ign_landmark_jacobian(map, id, state)?, e, w))
        }
        (GnFlavor::Multiplicative, MeasurementKind::GpsLeftInvariant) => {
            let e = models::innovation(ErrorConvention::Multiplicative, meas, state, map)?;
            let w = inv3(&noise.r_gps, 0)?;
            Ok((mgn_gps_jacobian(), e, w))
        }
        (GnFlavor::Multiplicative, MeasurementKind::LandmarkRightInvariant) => {
            let id = meas.landmark_id.expect("landmark measurement carries id");
            let e = models::innovation(ErrorConvention::Multiplicative, meas, state, map)?;
            let w = inv3(&noise.r_landmark, 0)?;
            Ok((mgn_landmark_jacobian(map, id, state)?, e, w))
        }
    }
}

/// Dead-reckoned initialization followed by exactly `iterations` Gauss-Newton
/// iterations, recording a snapshot after each.
pub fn solve(problem: &BatchProblem, flavor: GnFlavor, iterations: usize) -> Result<BatchSolution> {
    if iterations == 0 {
        return Err(Error::InvalidScenario("iterations must be >= 1".into()));
    }
    let mut states = dead_reckon(&problem.prior.state, problem.intero);
    let mut snapshots = vec![states.clone()];
    let mut costs = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let (next, cost) = gn_iterate(problem, &states, flavor)?;
        states = next;
        snapshots.push(states.clone());
        costs.push(cost);
    }
    Ok(BatchSolution {
        states,
        costs,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{run_forward_filter, SmootherFlavor, SmootherProblem};
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rand_vec3(rng: &mut ChaCha12Rng, s: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| (rng.random::<f64>() * 2.0 - 1.0) * s)
    }

    #[test]
    fn dead_reckon_constant_without_input() {
        let intero: Vec<InteroceptiveSample> = (0..10)
            .map(|k| InteroceptiveSample {
                t: k as f64 * 0.1,
                gyro: Vector3::zeros(),
                vel: Vector3::zeros(),
            })
            .collect();
        let states = dead_reckon(&GroupElement::identity(), &intero);
        assert_eq!(states.len(), 11);
        for s in &states {
            assert_eq!(*s, GroupElement::identity());
        }
    }

    #[test]
    fn dead_reckon_pure_translation() {
        let intero: Vec<InteroceptiveSample> = (0..10)
            .map(|k| InteroceptiveSample {
                t: k as f64 * 0.1,
                gyro: Vector3::zeros(),
                vel: Vector3::new(1.0, 0.0, 0.0),
            })
            .collect();
        let states = dead_reckon(&GroupElement::identity(), &intero);
        assert!((states[10].position() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dead_reckon_equals_forward_filter_without_measurements() {
        let mut rng = ChaCha12Rng::seed_from_u64(80);
        let intero: Vec<InteroceptiveSample> = (0..40)
            .map(|k| InteroceptiveSample {
                t: k as f64 * 0.05,
                gyro: rand_vec3(&mut rng, 0.3),
                vel: rand_vec3(&mut rng, 0.5),
            })
            .collect();
        let prior_state = GroupElement::new(
            so3::exp_so3(&rand_vec3(&mut rng, 0.5)),
            rand_vec3(&mut rng, 1.0),
            rand_vec3(&mut rng, 0.05),
            rand_vec3(&mut rng, 0.05),
        );
        let states = dead_reckon(&prior_state, &intero);
        let batch = MeasurementBatch::empty();
        let map = LandmarkMap::default();
        let noise = NoiseSpec::isotropic(0.01, 0.01, 0.005, 0.005, 0.5, 0.1);
        let problem = SmootherProblem {
            intero: &intero,
            extero: &batch,
            map: &map,
            noise: &noise,
        };
        let initial = Belief::new(
            prior_state,
            Mat12::identity() * 0.01,
            ErrorConvention::LeftInvariant,
            0.0,
        );
        let (_, corr) = run_forward_filter(&initial, &problem, SmootherFlavor::Lirts).unwrap();
        for (a, b) in states.iter().zip(&corr) {
            assert!((a.embed() - b.state.embed()).norm() < 1e-12);
        }
    }

    #[test]
    fn block_tridiag_matches_dense_solve() {
        let mut rng = ChaCha12Rng::seed_from_u64(81);
        for n_blocks in [1usize, 2, 5, 20, 51] {
            let mut sys = BlockTridiag::new(n_blocks);
            for k in 0..n_blocks {
                let a = Mat12::from_fn(|_, _| rng.random::<f64>() - 0.5);
                sys.diag[k] = a * a.transpose() + Mat12::identity() * 6.0;
                sys.rhs[k] = Vec12::from_fn(|_, _| rng.random::<f64>() - 0.5);
            }
            for k in 0..n_blocks.saturating_sub(1) {
                sys.upper[k] = Mat12::from_fn(|_, _| (rng.random::<f64>() - 0.5) * 0.4);
            }
            let (a_dense, b_dense) = sys.to_dense();
            let x_dense = a_dense.lu().solve(&b_dense).unwrap();
            let x_sparse = sys.solve().unwrap();
            #[allow(clippy::needless_range_loop)]
            for k in 0..n_blocks {
                let seg = DVector::from(x_dense.rows(12 * k, 12).into_owned());
                let diff = (DVector::from_column_slice(x_sparse[k].as_slice()) - &seg).norm();
                let rel = diff / (1.0 + seg.norm());
                assert!(rel < 1e-8, "block {k} of {n_blocks}: rel err {rel:e}");
            }
        }
    }

    #[test]
    fn block_tridiag_reports_singularity() {
        let sys = BlockTridiag::new(3);
        match sys.solve() {
            Err(Error::SingularNormalEquations { block: 0 }) => {}
            other => panic!("expected SingularNormalEquations, got {other:?}"),
        }
    }

    /// Pinned-attitude translation instance shared by the exactness tests:
    /// gyro inputs zero, gyro-bias and attitude prior essentially exact.
    struct LinearInstance {
        intero: Vec<InteroceptiveSample>,
        extero: MeasurementBatch,
        map: LandmarkMap,
        noise: NoiseSpec,
        prior: Belief,
        dt: f64,
    }

    fn linear_instance(rng: &mut ChaCha12Rng, n: usize, dt: f64) -> LinearInstance {
        let intero: Vec<InteroceptiveSample> = (0..n)
            .map(|k| InteroceptiveSample {
                t: k as f64 * dt,
                gyro: Vector3::zeros(),
                vel: Vector3::new((k as f64 * 0.2).cos(), -0.3, 0.1),
            })
            .collect();
        let gps: Vec<ExteroMeasurement> = (1..=n)
            .step_by(2)
            .map(|k| ExteroMeasurement::gps(k as f64 * dt, rand_vec3(rng, 2.0)))
            .collect();
        let mut noise = NoiseSpec::isotropic(1.0, 0.05, 1.0, 0.01, 0.3, 0.1);
        noise.q_gyro = Matrix3::identity() * 1e-12;
        noise.q_bias_gyro = Matrix3::identity() * 1e-12;
        let mut cov = Mat12::identity() * 1e-12;
        cov.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(Matrix3::identity() * 0.8));
        cov.fixed_view_mut::<3, 3>(9, 9)
            .copy_from(&(Matrix3::identity() * 0.05));
        let prior_state = GroupElement::new(
            Matrix3::identity(),
            rand_vec3(rng, 1.0),
            Vector3::zeros(),
            rand_vec3(rng, 0.1),
        );
        LinearInstance {
            intero,
            extero: MeasurementBatch::new(gps).unwrap(),
            map: LandmarkMap::default(),
            noise,
            prior: Belief::new(prior_state, cov, ErrorConvention::LeftInvariant, 0.0),
            dt,
        }
    }

    #[test]
    fn one_iteration_reaches_linear_map_optimum() {
        let mut rng = ChaCha12Rng::seed_from_u64(82);
        let inst = linear_instance(&mut rng, 30, 0.1);
        // Linear RTS reference on the same coordinates.
        let reference = {
            let mut a = DMatrix::identity(12, 12);
            a.view_mut((3, 9), (3, 3))
                .copy_from(&(DMatrix::identity(3, 3) * inst.dt));
            let mut h = DMatrix::zeros(3, 12);
            h.view_mut((0, 3), (3, 3))
                .copy_from(&DMatrix::identity(3, 3));
            let sys = kalman::LinearSystem {
                a,
                b: DMatrix::identity(12, 12),
                l: DMatrix::identity(12, 12),
                q: DMatrix::from_fn(12, 12, |i, j| (inst.noise.process_psd() * inst.dt)[(i, j)]),
                h,
                m: DMatrix::identity(3, 3),
                r: DMatrix::from_fn(3, 3, |i, j| inst.noise.r_gps[(i, j)]),
            };
            let mut x0 = DVector::zeros(12);
            x0.rows_mut(3, 3).copy_from(inst.prior.state.position());
            x0.rows_mut(9, 3).copy_from(inst.prior.state.bias_vel());
            let init = kalman::LinearBelief {
                x: x0,
                p: DMatrix::from_fn(12, 12, |i, j| inst.prior.cov[(i, j)]),
            };
            let inputs: Vec<DVector<f64>> = inst
                .intero
                .iter()
                .map(|u| {
                    let mut v = DVector::zeros(12);
                    v.rows_mut(3, 3).copy_from(&(u.vel * inst.dt));
                    v
                })
                .collect();
            let measurements: Vec<Option<DVector<f64>>> = (0..inst.intero.len())
                .map(|k| {
                    inst.extero
                        .items()
                        .iter()
                        .find(|m| (m.t - (k + 1) as f64 * inst.dt).abs() < 1e-9)
                        .map(|m| DVector::from_column_slice(m.value.as_slice()))
                })
                .collect();
            let steps = kalman::run_linear_forward(&init, &sys, &inputs, &measurements).unwrap();
            kalman::run_linear_rts(&init, &steps).unwrap()
        };
        let problem = BatchProblem {
            prior: &inst.prior,
            intero: &inst.intero,
            extero: &inst.extero,
            map: &inst.map,
            noise: &inst.noise,
        };
        for flavor in [GnFlavor::Invariant, GnFlavor::Multiplicative] {
            let solution = solve(&problem, flavor, 1).unwrap();
            for (k, state) in solution.states.iter().enumerate() {
                let lin_pos = Vector3::new(reference[k].x[3], reference[k].x[4], reference[k].x[5]);
                let lin_bias =
                    Vector3::new(reference[k].x[9], reference[k].x[10], reference[k].x[11]);
                let dp = (state.position() - lin_pos).norm() / (1.0 + lin_pos.norm());
                let db = (state.bias_vel() - lin_bias).norm() / (1.0 + lin_bias.norm());
                assert!(dp < 1e-9, "{flavor:?} position rel err {dp:e} at {k}");
                assert!(db < 1e-9, "{flavor:?} bias rel err {db:e} at {k}");
            }
        }
    }

    #[test]
    fn gn_step_is_zero_at_noiseless_truth() {
        // Start at the exact noiseless trajectory with the prior mean on it:
        // all residuals vanish and the step must be numerically zero.
        let mut rng = ChaCha12Rng::seed_from_u64(83);
        let n = 20;
        let dt = 0.05;
        let intero: Vec<InteroceptiveSample> = (0..n)
            .map(|k| InteroceptiveSample {
                t: k as f64 * dt,
                gyro: rand_vec3(&mut rng, 0.3),
                vel: rand_vec3(&mut rng, 0.5),
            })
            .collect();
        let truth = dead_reckon(&GroupElement::identity(), &intero);
        let map = LandmarkMap::new(vec![
            Vector3::new(4.0, 0.0, 1.0),
            Vector3::new(-2.0, 3.0, 0.5),
        ]);
        let mut meas = Vec::new();
        for k in (2..=n).step_by(4) {
            meas.push(ExteroMeasurement::gps(
                k as f64 * dt,
                *truth[k].position(),
            ));
            for id in 0..map.len() {
                meas.push(ExteroMeasurement::landmark(
                    k as f64 * dt,
                    id,
                    models::landmark_predict(&truth[k], &map, id).unwrap(),
                ));
            }
        }
        let extero = MeasurementBatch::new(meas).unwrap();
        let noise = NoiseSpec::isotropic(0.01, 0.01, 0.005, 0.005, 0.5, 0.1);
        let prior = Belief::new(
            truth[0].clone(),
            Mat12::identity() * 0.01,
            ErrorConvention::LeftInvariant,
            0.0,
        );
        let problem = BatchProblem {
            prior: &prior,
            intero: &intero,
            extero: &extero,
            map: &map,
            noise: &noise,
        };
        for flavor in [GnFlavor::Invariant, GnFlavor::Multiplicative] {
            let (next, cost) = gn_iterate(&problem, &truth, flavor).unwrap();
            assert!(cost < 1e-18, "{flavor:?} cost {cost:e}");
            for (a, b) in next.iter().zip(&truth) {
                let step = log_g(&left_error(a, b)).unwrap().norm();
                assert!(step < 1e-10, "{flavor:?} step {step:e}");
            }
        }
    }

    #[test]
    fn solve_records_snapshots_and_costs() {
        let mut rng = ChaCha12Rng::seed_from_u64(84);
        let inst = linear_instance(&mut rng, 10, 0.1);
        let problem = BatchProblem {
            prior: &inst.prior,
            intero: &inst.intero,
            extero: &inst.extero,
            map: &inst.map,
            noise: &inst.noise,
        };
        let solution = solve(&problem, GnFlavor::Invariant, 3).unwrap();
        assert_eq!(solution.snapshots.len(), 4);
        assert_eq!(solution.costs.len(), 3);
        assert_eq!(solution.states.len(), 11);
        // Snapshot 0 is the dead-reckoned initialization.
        let dr = dead_reckon(&inst.prior.state, &inst.intero);
        for (a, b) in solution.snapshots[0].iter().zip(&dr) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn ign_process_and_gps_jacobians_are_estimate_independent() {
        let mut rng = ChaCha12Rng::seed_from_u64(85);
        let u = InteroceptiveSample {
            t: 0.0,
            gyro: rand_vec3(&mut rng, 0.4),
            vel: rand_vec3(&mut rng, 0.6),
        };
        let biases = (rand_vec3(&mut rng, 0.05), rand_vec3(&mut rng, 0.05));
        let (a1, _) = models::invariant_process_jacobians(&u, &biases.0, &biases.1);
        let (a2, _) = models::invariant_process_jacobians(&u, &biases.0, &biases.1);
        assert_eq!(a1, a2);
        assert_eq!(ign_gps_jacobian(), ign_gps_jacobian());
        // Landmark Jacobians DO depend on the estimate under the fixed
        // standard innovation.
        let map = LandmarkMap::new(vec![Vector3::new(2.0, 1.0, -1.0)]);
        let s1 = exp_g(&TangentVector::from_blocks(
            rand_vec3(&mut rng, 0.5),
            rand_vec3(&mut rng, 1.0),
            Vector3::zeros(),
            Vector3::zeros(),
        ));
        let s2 = exp_g(&TangentVector::from_blocks(
            rand_vec3(&mut rng, 0.5),
            rand_vec3(&mut rng, 1.0),
            Vector3::zeros(),
            Vector3::zeros(),
        ));
        let j1 = ign_landmark_jacobian(&map, 0, &s1).unwrap();
        let j2 = ign_landmark_jacobian(&map, 0, &s2).unwrap();
        assert!((j1 - j2).norm() > 1e-6);
    }

    #[test]
    fn gn_rejects_wrong_trajectory_length() {
        let mut rng = ChaCha12Rng::seed_from_u64(86);
        let inst = linear_instance(&mut rng, 5, 0.1);
        let problem = BatchProblem {
            prior: &inst.prior,
            intero: &inst.intero,
            extero: &inst.extero,
            map: &inst.map,
            noise: &inst.noise,
        };
        let too_short = vec![GroupElement::identity(); 3];
        match gn_iterate(&problem, &too_short, GnFlavor::Invariant) {
            Err(Error::LengthMismatch { expected: 6, .. }) => {}
            other => panic!("expected LengthMismatch, got {other:?}"),
        }
    }
}
