//! Self-check battery behind the CLI `verify` command: group-operation
//! oracles, Jacobian slope tests, transformation integrity and solver
//! cross-checks, each reported as a named pass/fail line.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::group::{exp_g, left_error, log_g, right_error, GroupElement, TangentVector};
use crate::models::{
    self, bias_coupled_kinematics, bias_free_kinematics, is_group_affine, InteroceptiveSample,
};
use crate::so3;
use crate::{Mat12, Mat9, Vec12};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult {
            name,
            passed,
            detail,
        }
    }
}

fn rand_vec3(rng: &mut ChaCha12Rng, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| (rng.random::<f64>() * 2.0 - 1.0) * s)
}

fn random_state(rng: &mut ChaCha12Rng) -> GroupElement {
    exp_g(&TangentVector::from_blocks(
        rand_vec3(rng, 0.8),
        rand_vec3(rng, 2.0),
        rand_vec3(rng, 0.05),
        rand_vec3(rng, 0.05),
    ))
}

fn check_exp_log(rng: &mut ChaCha12Rng, cases: usize) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let xi = TangentVector::from_blocks(
            rand_vec3(rng, 1.7),
            rand_vec3(rng, 2.0),
            rand_vec3(rng, 0.1),
            rand_vec3(rng, 0.1),
        );
        match log_g(&exp_g(&xi)) {
            Ok(back) => worst = worst.max((back.0 - xi.0).norm()),
            Err(_) => worst = f64::INFINITY,
        }
    }
    CheckResult::new(
        "exp/log round trip",
        worst < 1e-9,
        format!("worst residual {worst:.2e} (tol 1e-9, {cases} cases)"),
    )
}

fn check_adjoint(rng: &mut ChaCha12Rng, cases: usize) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let x = random_state(rng);
        let y = random_state(rng);
        let xi = TangentVector::from_blocks(
            rand_vec3(rng, 1.0),
            rand_vec3(rng, 1.0),
            rand_vec3(rng, 0.1),
            rand_vec3(rng, 0.1),
        );
        let conj = x.embed() * crate::group::wedge(&xi).as_matrix() * x.inverse().embed();
        let direct = crate::group::wedge(&TangentVector(x.adjoint() * xi.0));
        worst = worst.max((conj - direct.as_matrix()).norm());
        worst = worst.max((x.compose(&y).adjoint() - x.adjoint() * y.adjoint()).norm());
    }
    CheckResult::new(
        "adjoint identity and homomorphism",
        worst < 1e-10,
        format!("worst residual {worst:.2e} (tol 1e-10, {cases} cases)"),
    )
}

fn check_group_axioms(rng: &mut ChaCha12Rng, cases: usize) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let x = random_state(rng);
        let y = random_state(rng);
        let z = random_state(rng);
        worst = worst
            .max((x.compose(&y).compose(&z).embed() - x.compose(&y.compose(&z)).embed()).norm());
        worst = worst.max((x.compose(&x.inverse()).embed() - Mat9::identity()).norm());
        worst = worst.max((left_error(&x, &x).embed() - Mat9::identity()).norm());
        worst = worst.max((right_error(&x, &x).embed() - Mat9::identity()).norm());
    }
    CheckResult::new(
        "group axioms",
        worst < 1e-10,
        format!("worst residual {worst:.2e} (tol 1e-10, {cases} cases)"),
    )
}

fn check_left_jacobian(rng: &mut ChaCha12Rng, cases: usize) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let phi = rand_vec3(rng, 1.7);
        let n = 100;
        let h = 1.0 / n as f64;
        let mut sum = so3::exp_so3(&(0.0 * phi)) + so3::exp_so3(&phi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * so3::exp_so3(&(i as f64 * h * phi));
        }
        let quadrature = sum * h / 3.0;
        worst = worst.max((so3::left_jacobian(&phi) - quadrature).norm());
    }
    CheckResult::new(
        "left Jacobian vs quadrature",
        worst < 1e-8,
        format!("worst residual {worst:.2e} (tol 1e-8, {cases} cases)"),
    )
}

fn fd_slope_worst<F>(map: F, h: f64) -> Mat12
where
    F: Fn(&Vec12) -> Vec12,
{
    let mut out = Mat12::zeros();
    for j in 0..12 {
        let mut dp = Vec12::zeros();
        dp[j] = h;
        out.set_column(j, &((map(&dp) - map(&(-dp))) / (2.0 * h)));
    }
    out
}

fn check_process_jacobians(rng: &mut ChaCha12Rng, cases: usize) -> CheckResult {
    let dt = 0.002;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let xhat = random_state(rng);
        let u = InteroceptiveSample {
            t: 0.0,
            gyro: rand_vec3(rng, 0.4),
            vel: rand_vec3(rng, 0.6),
        };
        let left_map = |d: &Vec12| -> Vec12 {
            let x = xhat.compose(&exp_g(&TangentVector(-*d)));
            let xn = models::propagate(&x, &u, dt);
            let hn = models::propagate(&xhat, &u, dt);
            log_g(&left_error(&xn, &hn)).unwrap().0
        };
        let (a, _) = models::invariant_process_jacobians(&u, xhat.bias_gyro(), xhat.bias_vel());
        let analytic = Mat12::identity() + a * dt;
        let fd = fd_slope_worst(left_map, 1e-6);
        worst = worst.max((fd - analytic).norm() / analytic.norm());

        let mult_map = |d: &Vec12| -> Vec12 {
            let eps: Vector3<f64> = d.fixed_rows::<3>(0).into();
            let dr: Vector3<f64> = d.fixed_rows::<3>(3).into();
            let db1: Vector3<f64> = d.fixed_rows::<3>(6).into();
            let db2: Vector3<f64> = d.fixed_rows::<3>(9).into();
            let x = GroupElement::new(
                xhat.attitude() * so3::exp_so3(&(-eps)),
                xhat.position() - dr,
                xhat.bias_gyro() - db1,
                xhat.bias_vel() - db2,
            );
            let xn = models::propagate(&x, &u, dt);
            let hn = models::propagate(&xhat, &u, dt);
            let mut out = Vec12::zeros();
            out.fixed_rows_mut::<3>(0).copy_from(
                &so3::log_so3(&(xn.attitude().transpose() * hn.attitude())).unwrap(),
            );
            out.fixed_rows_mut::<3>(3)
                .copy_from(&(hn.position() - xn.position()));
            out.fixed_rows_mut::<3>(6)
                .copy_from(&(hn.bias_gyro() - xn.bias_gyro()));
            out.fixed_rows_mut::<3>(9)
                .copy_from(&(hn.bias_vel() - xn.bias_vel()));
            out
        };
        let (a, _) = models::multiplicative_process_jacobians(
            &u,
            xhat.attitude(),
            xhat.bias_gyro(),
            xhat.bias_vel(),
        );
        let analytic = Mat12::identity() + a * dt;
        let fd = fd_slope_worst(mult_map, 1e-6);
        worst = worst.max((fd - analytic).norm() / analytic.norm());
    }
    CheckResult::new(
        "process Jacobian slope tests",
        worst < 1e-5,
        format!("worst relative error {worst:.2e} (tol 1e-5, {cases} points)"),
    )
}

fn check_ert_round_trip(rng: &mut ChaCha12Rng, cases: usize) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let x = random_state(rng);
        let a = Mat12::from_fn(|_, _| rng.random::<f64>() - 0.5);
        let p = a * a.transpose() + Mat12::identity() * 0.1;
        let ad = x.adjoint();
        let ad_inv = x.inverse().adjoint();
        let back = ad_inv * (ad * p * ad.transpose()) * ad_inv.transpose();
        worst = worst.max((back - p).norm());
    }
    CheckResult::new(
        "error-representation transformation round trip",
        worst < 1e-12,
        format!("worst residual {worst:.2e} (tol 1e-12, {cases} cases)"),
    )
}

fn check_group_affine() -> CheckResult {
    let bias_free = is_group_affine(bias_free_kinematics, 200);
    let full = is_group_affine(bias_coupled_kinematics, 200);
    CheckResult::new(
        "group-affine classification",
        bias_free && !full,
        format!("bias-free model affine: {bias_free}, biased model affine: {full}"),
    )
}

fn check_measurement_jacobians(rng: &mut ChaCha12Rng, cases: usize) -> CheckResult {
    let map = models::LandmarkMap::new(vec![Vector3::new(2.0, -1.0, 3.0)]);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let xhat = random_state(rng);
        let probe = |g: &dyn Fn(&Vec12) -> Vector3<f64>,
                     h: &nalgebra::SMatrix<f64, 3, 12>|
         -> f64 {
            let mut fd = nalgebra::SMatrix::<f64, 3, 12>::zeros();
            for j in 0..12 {
                let mut dp = Vec12::zeros();
                dp[j] = 1e-6;
                fd.set_column(j, &((g(&dp) - g(&(-dp))) / 2e-6));
            }
            (fd - h).norm() / h.norm()
        };
        let (h_gps, _) = models::gps_jacobians_invariant(&xhat);
        worst = worst.max(probe(
            &|d| {
                let x = xhat.compose(&exp_g(&TangentVector(-*d)));
                let meas = models::ExteroMeasurement::gps(0.0, models::gps_predict(&x));
                models::innovation(models::ErrorConvention::LeftInvariant, &meas, &xhat, &map)
                    .unwrap()
            },
            &h_gps,
        ));
        let (h_lm, _) = models::landmark_jacobians_invariant(&map, 0, &xhat).unwrap();
        worst = worst.max(probe(
            &|d| {
                let x = exp_g(&TangentVector(-*d)).compose(&xhat);
                let meas = models::ExteroMeasurement::landmark(
                    0.0,
                    0,
                    models::landmark_predict(&x, &map, 0).unwrap(),
                );
                models::innovation(models::ErrorConvention::RightInvariant, &meas, &xhat, &map)
                    .unwrap()
            },
            &h_lm,
        ));
        let mult_state = |d: &Vec12| {
            let eps: Vector3<f64> = d.fixed_rows::<3>(0).into();
            let dr: Vector3<f64> = d.fixed_rows::<3>(3).into();
            GroupElement::new(
                xhat.attitude() * so3::exp_so3(&(-eps)),
                xhat.position() - dr,
                *xhat.bias_gyro(),
                *xhat.bias_vel(),
            )
        };
        let (h1, _) = models::gps_jacobians_multiplicative(&xhat);
        worst = worst.max(probe(
            &|d| {
                let meas = models::ExteroMeasurement::gps(0.0, models::gps_predict(&mult_state(d)));
                models::innovation(models::ErrorConvention::Multiplicative, &meas, &xhat, &map)
                    .unwrap()
            },
            &h1,
        ));
        let (h2, _) = models::landmark_jacobians_multiplicative(&map, 0, &xhat).unwrap();
        worst = worst.max(probe(
            &|d| {
                let meas = models::ExteroMeasurement::landmark(
                    0.0,
                    0,
                    models::landmark_predict(&mult_state(d), &map, 0).unwrap(),
                );
                models::innovation(models::ErrorConvention::Multiplicative, &meas, &xhat, &map)
                    .unwrap()
            },
            &h2,
        ));
    }
    CheckResult::new(
        "measurement Jacobian slope tests",
        worst < 1e-5,
        format!("worst relative error {worst:.2e} (tol 1e-5, {cases} points)"),
    )
}

fn check_rotation_reorthonormalization(rng: &mut ChaCha12Rng) -> CheckResult {
    // Long composition chain must stay on the rotation manifold.
    let mut c = Matrix3::identity();
    for _ in 0..20000 {
        c *= so3::exp_so3(&rand_vec3(rng, 0.02));
        c = so3::renormalize_if_needed(&c);
    }
    let defect = so3::orthogonality_defect(&c);
    CheckResult::new(
        "rotation renormalization over long chains",
        defect < 1e-9,
        format!("orthogonality defect {defect:.2e} after 20000 compositions"),
    )
}

/// Runs the whole battery with a fixed seed.
pub fn run_battery() -> Vec<CheckResult> {
    let mut rng = ChaCha12Rng::seed_from_u64(0xD1A6);
    vec![
        check_exp_log(&mut rng, 1000),
        check_adjoint(&mut rng, 1000),
        check_group_axioms(&mut rng, 1000),
        check_left_jacobian(&mut rng, 200),
        check_process_jacobians(&mut rng, 20),
        check_measurement_jacobians(&mut rng, 20),
        check_ert_round_trip(&mut rng, 200),
        check_group_affine(),
        check_rotation_reorthonormalization(&mut rng),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes() {
        for check in run_battery() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
