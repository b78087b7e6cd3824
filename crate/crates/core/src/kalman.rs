//! Convention-agnostic Kalman algebra: covariance prediction, gain, Joseph
//! update and the smoother gain/covariance recursion, plus a small linear
//! Kalman filter / RTS smoother used by reduction oracles and calibration
//! tests.
//!
//! Gains are always obtained from a Cholesky solve of the innovation
//! covariance, never from an explicit inverse.

use std::ops::{AddAssign, SubAssign};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Mat12;

/// Symmetrized copy: `(P + Pt) / 2`.
pub fn symmetrize(p: &Mat12) -> Mat12 {
    (p + p.transpose()) * 0.5
}

pub fn symmetrize_dyn(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Checks that a symmetric matrix admits a Cholesky factorization after a
/// jitter of at most 1e-12 on the diagonal.
pub fn check_psd(p: &Mat12, context: &'static str) -> Result<()> {
    let jittered = symmetrize(p) + Mat12::identity() * 1e-12;
    if jittered.cholesky().is_none() {
        return Err(Error::NonPsdCovariance { context });
    }
    Ok(())
}

/// Covariance prediction `P <- Ad P Adt + Ld Qd Ldt`.
pub fn predict_cov(p: &Mat12, a_d: &Mat12, l_d: &Mat12, q_d: &Mat12) -> Mat12 {
    symmetrize(&(a_d * p * a_d.transpose() + l_d * q_d * l_d.transpose()))
}

/// Kalman gain `K = P Ht S^-1` with `S = H P Ht + M R Mt`, via Cholesky.
pub fn gain(
    p_check: &DMatrix<f64>,
    h: &DMatrix<f64>,
    m: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pht = p_check * h.transpose();
    let s = symmetrize_dyn(&(h * &pht + m * r * m.transpose()));
    let chol = s.cholesky().ok_or(Error::SingularInnovationCovariance)?;
    // Solve S Kt = (P Ht)t, then transpose.
    let kt = chol.solve(&pht.transpose());
    Ok(kt.transpose())
}

/// Joseph-form covariance update
/// `P <- (I - K H) P (I - K H)t + K M R Mt Kt`.
pub fn joseph_update(
    p_check: &DMatrix<f64>,
    k: &DMatrix<f64>,
    h: &DMatrix<f64>,
    m: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = p_check.nrows();
    let ikh = DMatrix::identity(n, n) - k * h;
    let mrm = m * r * m.transpose();
    symmetrize_dyn(&(&ikh * p_check * ikh.transpose() + k * mrm * k.transpose()))
}

/// Smoother gain `Ks = Pf_hat At (Pf_check_next)^-1`, solved through the
/// Cholesky factor of the predicted covariance.
pub fn smoother_gain(
    p_hat: &Mat12,
    a_d: &Mat12,
    p_check_next: &Mat12,
    step: usize,
) -> Result<Mat12> {
    let chol = symmetrize(p_check_next)
        .cholesky()
        .ok_or(Error::SingularPredictedCovariance { step })?;
    // Ks = Pf At Pc^-1  <=>  Pc Kst = A Pft
    let rhs = a_d * p_hat.transpose();
    let kst = chol.solve(&rhs);
    Ok(kst.transpose())
}

/// Smoothed covariance `Ps = Pf - Ks (Pc_next - Ps_next) Kst`.
pub fn smooth_cov(
    p_hat: &Mat12,
    k_s: &Mat12,
    p_check_next: &Mat12,
    p_smooth_next: &Mat12,
) -> Mat12 {
    symmetrize(&(p_hat - k_s * (p_check_next - p_smooth_next) * k_s.transpose()))
}

/// Belief over a plain vector state, used by the linear reduction oracles,
/// the NEES calibration harness and the linear acceptance checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBelief {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

/// One recorded step of a linear forward pass.
#[derive(Debug, Clone)]
pub struct LinearStep {
    pub predicted: LinearBelief,
    pub corrected: LinearBelief,
    pub a_d: DMatrix<f64>,
}

/// A time-invariant linear-Gaussian system `x_k = A x_{k-1} + B u + L w`,
/// `y = H x + M v`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Linear prediction step.
pub fn kf_predict_linear(
    belief: &LinearBelief,
    sys: &LinearSystem,
    u: &DVector<f64>,
) -> LinearBelief {
    LinearBelief {
        x: &sys.a * &belief.x + &sys.b * u,
        p: symmetrize_dyn(
            &(&sys.a * &belief.p * sys.a.transpose() + &sys.l * &sys.q * sys.l.transpose()),
        ),
    }
}

/// Linear correction `x <- x + K z` with the Joseph covariance form.
pub fn kf_correct_linear(
    belief: &LinearBelief,
    k: &DMatrix<f64>,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    m: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> LinearBelief {
    LinearBelief {
        x: &belief.x + k * z,
        p: joseph_update(&belief.p, k, h, m, r),
    }
}

/// Full measurement update: gain, innovation, correction.
pub fn kf_update_linear(
    belief: &LinearBelief,
    sys: &LinearSystem,
    y: &DVector<f64>,
) -> Result<LinearBelief> {
    let k = gain(&belief.p, &sys.h, &sys.m, &sys.r)?;
    let z = y - &sys.h * &belief.x;
    Ok(kf_correct_linear(belief, &k, &z, &sys.h, &sys.m, &sys.r))
}

/// One linear RTS backward step:
/// `Ks = Pf At Pc^-1`, `xs = xf + Ks (xs_next - xc_next)`,
/// `Ps = Pf - Ks (Pc_next - Ps_next) Kst`.
pub fn rts_backward_step_linear(
    fwd_corr: &LinearBelief,
    fwd_pred_next: &LinearBelief,
    smoothed_next: &LinearBelief,
    a_d: &DMatrix<f64>,
    step: usize,
) -> Result<LinearBelief> {
    let chol = symmetrize_dyn(&fwd_pred_next.p)
        .cholesky()
        .ok_or(Error::SingularPredictedCovariance { step })?;
    let rhs = a_d * fwd_corr.p.transpose();
    let k_s = chol.solve(&rhs).transpose();
    let x = &fwd_corr.x + &k_s * (&smoothed_next.x - &fwd_pred_next.x);
    let p = symmetrize_dyn(
        &(&fwd_corr.p - &k_s * (&fwd_pred_next.p - &smoothed_next.p) * k_s.transpose()),
    );
    Ok(LinearBelief { x, p })
}

/// Forward KF pass, recording everything the backward pass needs.
/// `measurements[k]` corrects the prediction into step `k + 1`; `None` skips
/// the update.
pub fn run_linear_forward(
    initial: &LinearBelief,
    sys: &LinearSystem,
    inputs: &[DVector<f64>],
    measurements: &[Option<DVector<f64>>],
) -> Result<Vec<LinearStep>> {
    assert_eq!(inputs.len(), measurements.len());
    let mut steps = Vec::with_capacity(inputs.len());
    let mut current = initial.clone();
    for (u, y) in inputs.iter().zip(measurements) {
        let predicted = kf_predict_linear(&current, sys, u);
        let corrected = match y {
            Some(y) => kf_update_linear(&predicted, sys, y)?,
            None => predicted.clone(),
        };
        steps.push(LinearStep {
            predicted,
            corrected: corrected.clone(),
            a_d: sys.a.clone(),
        });
        current = corrected;
    }
    Ok(steps)
}

/// RTS backward pass over a recorded linear forward pass. Returns smoothed
/// beliefs for steps `0..=N` where entry 0 smooths the initial belief.
pub fn run_linear_rts(initial: &LinearBelief, steps: &[LinearStep]) -> Result<Vec<LinearBelief>> {
    let n = steps.len();
    let mut smoothed = vec![
        LinearBelief {
            x: DVector::zeros(initial.x.len()),
            p: DMatrix::zeros(initial.p.nrows(), initial.p.ncols()),
        };
        n + 1
    ];
    smoothed[n] = steps[n - 1].corrected.clone();
    for k in (0..n).rev() {
        let fwd_corr = if k == 0 {
            initial
        } else {
            &steps[k - 1].corrected
        };
        smoothed[k] = rts_backward_step_linear(
            fwd_corr,
            &steps[k].predicted,
            &smoothed[k + 1],
            &steps[k].a_d,
            k,
        )?;
    }
    Ok(smoothed)
}

/// Marginal means and covariances per step.
pub type LinearMarginals = (Vec<DVector<f64>>, Vec<DMatrix<f64>>);

/// Dense joint-Gaussian MAP over a whole linear trajectory: builds the full
/// information system from prior, process and measurement terms and solves
/// it. Marginal covariances come from the inverse of the information matrix.
pub fn dense_linear_map(
    initial: &LinearBelief,
    sys: &LinearSystem,
    inputs: &[DVector<f64>],
    measurements: &[Option<DVector<f64>>],
) -> Result<LinearMarginals> {
    let d = initial.x.len();
    let n = inputs.len();
    let total = d * (n + 1);
    let mut info = DMatrix::<f64>::zeros(total, total);
    let mut rhs = DVector::<f64>::zeros(total);
    let p0_inv = initial
        .p
        .clone()
        .try_inverse()
        .ok_or(Error::NonPsdCovariance { context: "prior" })?;
    info.view_mut((0, 0), (d, d)).copy_from(&p0_inv);
    rhs.rows_mut(0, d).copy_from(&(&p0_inv * &initial.x));
    let q_full = &sys.l * &sys.q * sys.l.transpose();
    let q_inv = q_full
        .try_inverse()
        .ok_or(Error::NonPsdCovariance { context: "process" })?;
    let r_full = &sys.m * &sys.r * sys.m.transpose();
    let r_inv = r_full.try_inverse().ok_or(Error::NonPsdCovariance {
        context: "measurement",
    })?;
    for k in 0..n {
        let i0 = k * d;
        let i1 = (k + 1) * d;
        let at_qi = sys.a.transpose() * &q_inv;
        info.view_mut((i0, i0), (d, d)).add_assign(&at_qi * &sys.a);
        info.view_mut((i1, i1), (d, d)).add_assign(q_inv.clone());
        info.view_mut((i0, i1), (d, d)).sub_assign(&at_qi);
        info.view_mut((i1, i0), (d, d)).sub_assign(&q_inv * &sys.a);
        let bu = &sys.b * &inputs[k];
        rhs.rows_mut(i0, d).sub_assign(&at_qi * &bu);
        rhs.rows_mut(i1, d).add_assign(&q_inv * &bu);
        if let Some(y) = &measurements[k] {
            let ht_ri = sys.h.transpose() * &r_inv;
            info.view_mut((i1, i1), (d, d)).add_assign(&ht_ri * &sys.h);
            rhs.rows_mut(i1, d).add_assign(&ht_ri * y);
        }
    }
    let chol = info
        .clone()
        .cholesky()
        .ok_or(Error::SingularNormalEquations { block: 0 })?;
    let solution = chol.solve(&rhs);
    let cov_full = info
        .try_inverse()
        .ok_or(Error::SingularNormalEquations { block: 0 })?;
    let mut means = Vec::with_capacity(n + 1);
    let mut covs = Vec::with_capacity(n + 1);
    for k in 0..=n {
        means.push(solution.rows(k * d, d).into_owned());
        covs.push(cov_full.view((k * d, k * d), (d, d)).into_owned());
    }
    Ok((means, covs))
}
