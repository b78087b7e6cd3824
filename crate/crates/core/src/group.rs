//! The 9x9 matrix Lie group of rigid-body pose plus two sensor biases.
//!
//! A group element carries an attitude DCM `C`, a position `r`, a rate-gyro
//! bias `b1` and a translational-velocity bias `b2`. Its embedding is
//!
//! ```text
//!     [ C  r  .  .  . ]
//!     [ .  1  .  .  . ]
//!     [ .  .  I  b1 b2]
//!     [ .  .  .  1  . ]
//!     [ .  .  .  .  1 ]
//! ```
//!
//! with 12 tangent degrees of freedom ordered `(phi, rho, dbeta1, dbeta2)`.
//! Elements store the decomposed blocks; the embedding is materialized only
//! on request (oracles, group-affinity checks).

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::so3;
use crate::{Mat12, Mat9, Vec12};

/// Tangent coordinates `(phi, rho, dbeta1, dbeta2)` stored as one 12-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector(pub Vec12);

impl TangentVector {
    pub fn zero() -> Self {
        TangentVector(Vec12::zeros())
    }

    pub fn from_blocks(
        phi: Vector3<f64>,
        rho: Vector3<f64>,
        dbeta1: Vector3<f64>,
        dbeta2: Vector3<f64>,
    ) -> Self {
        let mut v = Vec12::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&phi);
        v.fixed_rows_mut::<3>(3).copy_from(&rho);
        v.fixed_rows_mut::<3>(6).copy_from(&dbeta1);
        v.fixed_rows_mut::<3>(9).copy_from(&dbeta2);
        TangentVector(v)
    }

    pub fn phi(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into()
    }

    pub fn rho(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into()
    }

    pub fn dbeta1(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(6).into()
    }

    pub fn dbeta2(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(9).into()
    }

    pub fn as_vector(&self) -> &Vec12 {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl From<Vec12> for TangentVector {
    fn from(v: Vec12) -> Self {
        TangentVector(v)
    }
}

/// A Lie algebra element: 9x9 matrix with the wedge sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement(Mat9);

impl AlgebraElement {
    /// Wraps a raw matrix after checking that every entry outside the wedge
    /// pattern is zero (to 1e-12).
    pub fn from_matrix(m: Mat9) -> Result<Self> {
        let rebuilt = wedge(&vee_unchecked(&m)).0;
        let max_violation = (m - rebuilt).amax();
        if max_violation > 1e-12 {
            return Err(Error::MalformedAlgebraElement { max_violation });
        }
        Ok(AlgebraElement(m))
    }

    pub fn as_matrix(&self) -> &Mat9 {
        &self.0
    }
}

/// Reads tangent coordinates out of the pattern positions without validation.
fn vee_unchecked(m: &Mat9) -> TangentVector {
    let phi = so3::uncross(&m.fixed_view::<3, 3>(0, 0).into_owned());
    let rho = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
    let b1 = Vector3::new(m[(4, 7)], m[(5, 7)], m[(6, 7)]);
    let b2 = Vector3::new(m[(4, 8)], m[(5, 8)], m[(6, 8)]);
    TangentVector::from_blocks(phi, rho, b1, b2)
}

/// Wedge operator: tangent coordinates to algebra matrix.
pub fn wedge(xi: &TangentVector) -> AlgebraElement {
    let mut m = Mat9::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3::cross(&xi.phi()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.rho());
    m.fixed_view_mut::<3, 1>(4, 7).copy_from(&xi.dbeta1());
    m.fixed_view_mut::<3, 1>(4, 8).copy_from(&xi.dbeta2());
    AlgebraElement(m)
}

/// Vee operator: algebra matrix back to tangent coordinates. Exact.
pub fn vee(xi: &AlgebraElement) -> TangentVector {
    vee_unchecked(&xi.0)
}

/// Group element holding attitude, position and the two bias states.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    attitude: Matrix3<f64>,
    position: Vector3<f64>,
    bias_gyro: Vector3<f64>,
    bias_vel: Vector3<f64>,
}

impl GroupElement {
    /// Builds an element, re-orthonormalizing the attitude if its defect
    /// exceeds the library tolerance.
    pub fn new(
        attitude: Matrix3<f64>,
        position: Vector3<f64>,
        bias_gyro: Vector3<f64>,
        bias_vel: Vector3<f64>,
    ) -> Self {
        GroupElement {
            attitude: so3::renormalize_if_needed(&attitude),
            position,
            bias_gyro,
            bias_vel,
        }
    }

    pub fn identity() -> Self {
        GroupElement {
            attitude: Matrix3::identity(),
            position: Vector3::zeros(),
            bias_gyro: Vector3::zeros(),
            bias_vel: Vector3::zeros(),
        }
    }

    pub fn attitude(&self) -> &Matrix3<f64> {
        &self.attitude
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.position
    }

    pub fn bias_gyro(&self) -> &Vector3<f64> {
        &self.bias_gyro
    }

    pub fn bias_vel(&self) -> &Vector3<f64> {
        &self.bias_vel
    }

    /// Returns a copy with the bias blocks replaced.
    pub fn with_biases(&self, bias_gyro: Vector3<f64>, bias_vel: Vector3<f64>) -> Self {
        GroupElement {
            attitude: self.attitude,
            position: self.position,
            bias_gyro,
            bias_vel,
        }
    }

    /// Materializes the 9x9 embedding.
    pub fn embed(&self) -> Mat9 {
        let mut m = Mat9::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.attitude);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m.fixed_view_mut::<3, 1>(4, 7).copy_from(&self.bias_gyro);
        m.fixed_view_mut::<3, 1>(4, 8).copy_from(&self.bias_vel);
        m
    }

    /// Extracts an element from a 9x9 embedding, validating its structure.
    pub fn from_embedding(m: &Mat9) -> Result<Self> {
        let attitude: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        if so3::orthogonality_defect(&attitude) > 1e-6 {
            return Err(Error::MalformedEmbedding {
                reason: "attitude block is not orthonormal".into(),
            });
        }
        let position = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        let bias_gyro = Vector3::new(m[(4, 7)], m[(5, 7)], m[(6, 7)]);
        let bias_vel = Vector3::new(m[(4, 8)], m[(5, 8)], m[(6, 8)]);
        let rebuilt = GroupElement::new(attitude, position, bias_gyro, bias_vel).embed();
        let defect = (m - rebuilt).amax();
        if defect > 1e-9 {
            return Err(Error::MalformedEmbedding {
                reason: format!("off-pattern entries up to {defect:e}"),
            });
        }
        Ok(GroupElement::new(attitude, position, bias_gyro, bias_vel))
    }

    pub fn inverse(&self) -> Self {
        let ct = self.attitude.transpose();
        GroupElement {
            attitude: ct,
            position: -ct * self.position,
            bias_gyro: -self.bias_gyro,
            bias_vel: -self.bias_vel,
        }
    }

    /// Group composition `self * rhs` on the decomposed blocks.
    pub fn compose(&self, rhs: &GroupElement) -> Self {
        GroupElement {
            attitude: so3::renormalize_if_needed(&(self.attitude * rhs.attitude)),
            position: self.attitude * rhs.position + self.position,
            bias_gyro: self.bias_gyro + rhs.bias_gyro,
            bias_vel: self.bias_vel + rhs.bias_vel,
        }
    }

    /// 12x12 adjoint matrix: pose block as on SE(3), identity on the biases.
    pub fn adjoint(&self) -> Mat12 {
        let mut ad = Mat12::identity();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.attitude);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.attitude);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(so3::cross(&self.position) * self.attitude));
        ad
    }
}

/// Exponential map of the full group: Rodrigues on the attitude, left-Jacobian
/// coupling on the position, biases copied through.
pub fn exp_g(xi: &TangentVector) -> GroupElement {
    let phi = xi.phi();
    GroupElement {
        attitude: so3::exp_so3(&phi),
        position: so3::left_jacobian(&phi) * xi.rho(),
        bias_gyro: xi.dbeta1(),
        bias_vel: xi.dbeta2(),
    }
}

/// Logarithm map of the full group; fails near a pi attitude angle.
pub fn log_g(x: &GroupElement) -> Result<TangentVector> {
    let phi = so3::log_so3(x.attitude())?;
    let rho = so3::left_jacobian_inv(&phi) * x.position();
    Ok(TangentVector::from_blocks(
        phi,
        rho,
        *x.bias_gyro(),
        *x.bias_vel(),
    ))
}

/// Left-invariant error `x^-1 * xhat` between a reference and an estimate.
pub fn left_error(x: &GroupElement, xhat: &GroupElement) -> GroupElement {
    x.inverse().compose(xhat)
}

/// Right-invariant error `xhat * x^-1`.
pub fn right_error(x: &GroupElement, xhat: &GroupElement) -> GroupElement {
    xhat.compose(&x.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_vec3(rng: &mut ChaCha12Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        ) * scale
    }

    fn random_tangent(rng: &mut ChaCha12Rng, phi_scale: f64) -> TangentVector {
        TangentVector::from_blocks(
            random_vec3(rng, phi_scale / 3.0f64.sqrt()),
            random_vec3(rng, 2.0),
            random_vec3(rng, 0.1),
            random_vec3(rng, 0.1),
        )
    }

    fn random_element(rng: &mut ChaCha12Rng) -> GroupElement {
        exp_g(&random_tangent(rng, 1.5))
    }

    #[test]
    fn wedge_of_zero_is_zero_matrix() {
        let z = wedge(&TangentVector::zero());
        assert_eq!(*z.as_matrix(), Mat9::zeros());
    }

    #[test]
    fn wedge_of_e3_phi_places_cross_entries() {
        let xi = TangentVector::from_blocks(
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let m = wedge(&xi);
        let mut expected = Mat9::zeros();
        expected[(0, 1)] = -1.0;
        expected[(1, 0)] = 1.0;
        assert_eq!(*m.as_matrix(), expected);
    }

    #[test]
    fn vee_wedge_round_trip_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let xi = random_tangent(&mut rng, 2.0);
            assert_eq!(vee(&wedge(&xi)), xi);
        }
    }

    #[test]
    fn wedge_vee_on_unit_blocks() {
        let xi = TangentVector::from_blocks(
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::zeros(),
        );
        assert_eq!(vee(&wedge(&xi)), xi);
    }

    #[test]
    fn vee_reads_rho_column() {
        let mut m = Mat9::zeros();
        m[(0, 3)] = 1.0;
        m[(1, 3)] = 2.0;
        m[(2, 3)] = 3.0;
        let xi = vee(&AlgebraElement::from_matrix(m).unwrap());
        assert_eq!(xi.rho(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(xi.phi(), Vector3::zeros());
    }

    #[test]
    fn vee_rejects_off_pattern_entries() {
        let mut m = Mat9::zeros();
        m[(8, 0)] = 1e-6;
        match AlgebraElement::from_matrix(m) {
            Err(Error::MalformedAlgebraElement { .. }) => {}
            other => panic!("expected MalformedAlgebraElement, got {other:?}"),
        }
    }

    #[test]
    fn exp_of_zero_is_identity_element() {
        assert_eq!(exp_g(&TangentVector::zero()), GroupElement::identity());
    }

    #[test]
    fn exp_of_pure_translation() {
        let xi = TangentVector::from_blocks(
            Vector3::zeros(),
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let x = exp_g(&xi);
        assert_eq!(*x.attitude(), Matrix3::identity());
        assert_eq!(*x.position(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(
            log_g(&GroupElement::identity()).unwrap(),
            TangentVector::zero()
        );
    }

    #[test]
    fn log_reads_biases_verbatim() {
        let x = GroupElement::new(
            Matrix3::identity(),
            Vector3::new(5.0, 0.0, 0.0),
            Vector3::new(0.05, 0.05, 0.05),
            Vector3::zeros(),
        );
        let xi = log_g(&x).unwrap();
        assert_eq!(xi.phi(), Vector3::zeros());
        assert_eq!(xi.rho(), Vector3::new(5.0, 0.0, 0.0));
        assert_eq!(xi.dbeta1(), Vector3::new(0.05, 0.05, 0.05));
        assert_eq!(xi.dbeta2(), Vector3::zeros());
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let xi = random_tangent(&mut rng, 3.0);
            let back = log_g(&exp_g(&xi)).unwrap();
            assert!((back.0 - xi.0).norm() < 1e-9);
        }
    }

    #[test]
    fn compose_with_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let x = random_element(&mut rng);
        assert!((x.compose(&GroupElement::identity()).embed() - x.embed()).norm() < 1e-14);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..100 {
            let x = random_element(&mut rng);
            let e = x.compose(&x.inverse()).embed();
            assert!((e - Mat9::identity()).norm() < 1e-10);
        }
    }

    #[test]
    fn compose_matches_embedding_product() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let x = random_element(&mut rng);
            let y = random_element(&mut rng);
            let lhs = x.compose(&y).embed();
            let rhs = x.embed() * y.embed();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn group_axioms_hold() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let x = random_element(&mut rng);
            let y = random_element(&mut rng);
            let z = random_element(&mut rng);
            let assoc =
                (x.compose(&y).compose(&z).embed() - x.compose(&y.compose(&z)).embed()).norm();
            assert!(assoc < 1e-10);
            let inv = (x.inverse().compose(&x).embed() - Mat9::identity()).norm();
            assert!(inv < 1e-10);
        }
    }

    #[test]
    fn embedding_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        for _ in 0..200 {
            let x = random_element(&mut rng);
            let back = GroupElement::from_embedding(&x.embed()).unwrap();
            assert!((back.embed() - x.embed()).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_of_identity() {
        assert_eq!(GroupElement::identity().adjoint(), Mat12::identity());
    }

    #[test]
    fn adjoint_of_pure_translation_has_cross_block() {
        let x = GroupElement::new(
            Matrix3::identity(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let ad = x.adjoint();
        let mut expected = Mat12::identity();
        expected
            .fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&so3::cross(&Vector3::new(1.0, 0.0, 0.0)));
        assert_eq!(ad, expected);
    }

    #[test]
    fn adjoint_satisfies_conjugation_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let x = random_element(&mut rng);
            let xi = random_tangent(&mut rng, 1.0);
            let lhs = wedge(&TangentVector(x.adjoint() * xi.0)).0;
            let rhs = x.embed() * wedge(&xi).0 * x.inverse().embed();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_is_homomorphism() {
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        for _ in 0..1000 {
            let x = random_element(&mut rng);
            let y = random_element(&mut rng);
            let lhs = x.compose(&y).adjoint();
            let rhs = x.adjoint() * y.adjoint();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn left_error_of_equal_states_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let x = random_element(&mut rng);
        assert!((left_error(&x, &x).embed() - Mat9::identity()).norm() < 1e-12);
    }

    #[test]
    fn left_error_unchanged_by_common_left_factor() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        for _ in 0..500 {
            let x = random_element(&mut rng);
            let xhat = random_element(&mut rng);
            let g = random_element(&mut rng);
            let base = left_error(&x, &xhat).embed();
            let shifted = left_error(&g.compose(&x), &g.compose(&xhat)).embed();
            assert!((base - shifted).norm() < 1e-10);
        }
    }

    #[test]
    fn right_error_unchanged_by_common_right_factor() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..500 {
            let x = random_element(&mut rng);
            let xhat = random_element(&mut rng);
            let g = random_element(&mut rng);
            let base = right_error(&x, &xhat).embed();
            let shifted = right_error(&x.compose(&g), &xhat.compose(&g)).embed();
            assert!((base - shifted).norm() < 1e-10);
        }
    }
}
