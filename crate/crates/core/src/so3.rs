//! SO(3) primitives: cross operator, Rodrigues exponential, logarithm and the
//! left Jacobian.
//!
//! All maps switch to second-order series below `SMALL_ANGLE` so the 0/0
//! forms at the origin never surface. The logarithm refuses angles within
//! `PI_EXCLUSION` of pi, where axis extraction from the skew part loses all
//! precision.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Angle below which series expansions replace the closed forms.
pub const SMALL_ANGLE: f64 = 1e-6;
/// Half-width of the exclusion band around pi for the logarithm.
pub const PI_EXCLUSION: f64 = 1e-6;
/// Orthogonality defect above which rotations are re-orthonormalized.
pub const ORTHO_TOL: f64 = 1e-9;

/// Skew-symmetric cross-product matrix of `w`.
#[rustfmt::skip]
pub fn cross(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0,  -w.z,  w.y,
        w.z,   0.0, -w.x,
       -w.y,   w.x,  0.0,
    )
}

/// Inverse of [`cross`]; reads the three free entries of a skew matrix.
pub fn uncross(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' rotation formula: the exponential map of so(3).
///
/// The versine coefficient uses the half-angle form `2 sin^2(a/2) / a^2`,
/// which stays accurate where `1 - cos a` cancels.
pub fn exp_so3(phi: &Vector3<f64>) -> Matrix3<f64> {
    let angle = phi.norm();
    let px = cross(phi);
    let (a1, a2) = if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        (1.0 - a2 / 6.0, 0.5 - a2 / 24.0)
    } else {
        let half_sin = (0.5 * angle).sin();
        (
            angle.sin() / angle,
            2.0 * half_sin * half_sin / (angle * angle),
        )
    };
    Matrix3::identity() + a1 * px + a2 * px * px
}

/// Principal rotation angle of `c`, robust over the full range `[0, pi]`.
fn rotation_angle(c: &Matrix3<f64>) -> f64 {
    let skew = 0.5 * (c - c.transpose());
    let s = uncross(&skew).norm();
    let t = 0.5 * (c.trace() - 1.0);
    s.atan2(t)
}

/// Logarithm map of SO(3), returning the rotation vector.
///
/// Fails with [`Error::NearPiRotation`] when the principal angle is within
/// [`PI_EXCLUSION`] of pi.
pub fn log_so3(c: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let angle = rotation_angle(c);
    if angle > std::f64::consts::PI - PI_EXCLUSION {
        return Err(Error::NearPiRotation { angle });
    }
    let axis_scaled = uncross(&(0.5 * (c - c.transpose())));
    // axis_scaled = sin(angle) * axis; scale by angle / sin(angle).
    let factor = if angle < SMALL_ANGLE {
        1.0 + angle * angle / 6.0
    } else {
        angle / angle.sin()
    };
    Ok(factor * axis_scaled)
}

/// Left Jacobian of SO(3): `J = I + c2 phi^x + c3 (phi^x)^2` with the usual
/// sinc-style coefficients.
pub fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let angle = phi.norm();
    let px = cross(phi);
    let (c2, c3) = if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        (0.5 - a2 / 24.0, 1.0 / 6.0 - a2 / 120.0)
    } else {
        let a2 = angle * angle;
        let half_sin = (0.5 * angle).sin();
        (
            2.0 * half_sin * half_sin / a2,
            (angle - angle.sin()) / (a2 * angle),
        )
    };
    Matrix3::identity() + c2 * px + c3 * px * px
}

/// Inverse of the left Jacobian, valid for angles below 2 pi.
pub fn left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let angle = phi.norm();
    let px = cross(phi);
    let c = if angle < SMALL_ANGLE {
        1.0 / 12.0 + angle * angle / 720.0
    } else {
        1.0 / (angle * angle) - (1.0 + angle.cos()) / (2.0 * angle * angle.sin())
    };
    Matrix3::identity() - 0.5 * px + c * px * px
}

/// Frobenius norm of `Ct C - I`.
pub fn orthogonality_defect(c: &Matrix3<f64>) -> f64 {
    (c.transpose() * c - Matrix3::identity()).norm()
}

/// Projects `c` onto SO(3) through the polar factor of its SVD.
pub fn orthonormalize(c: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = c.svd(true, true);
    let u = svd.u.expect("svd of 3x3 requested with u");
    let v_t = svd.v_t.expect("svd of 3x3 requested with v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // flip the last column of u to land on the proper rotation branch
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Re-orthonormalizes only when the orthogonality defect or the determinant
/// drifts beyond [`ORTHO_TOL`].
pub fn renormalize_if_needed(c: &Matrix3<f64>) -> Matrix3<f64> {
    if orthogonality_defect(c) > ORTHO_TOL || (c.determinant() - 1.0).abs() > ORTHO_TOL {
        orthonormalize(c)
    } else {
        *c
    }
}
