//! Symmetric 2D tensors and 3x3 Voigt matrices for plane-strain elasticity.
//!
//! Tensors are stored as `(11, 22, 12)` with the shear component unscaled, so
//! a strain carries the tensor component `eps12`, not the engineering shear
//! `2 eps12`. A stiffness therefore maps `eps12` to `sig12` through its `2 mu`
//! shear entry. The double contraction picks up the factor 2 on the shear
//! term, see [`SymTensor2::ddot`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition-number ceiling above which a 3x3 matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Symmetric second-order tensor in 2D, `(11, 22, 12)` ordering.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymTensor2 {
    pub t11: f64,
    pub t22: f64,
    pub t12: f64,
}

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2 {
        t11: 0.0,
        t22: 0.0,
        t12: 0.0,
    };

    pub const fn new(t11: f64, t22: f64, t12: f64) -> Self {
        Self { t11, t22, t12 }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.t11, self.t22, self.t12]
    }

    /// Full double contraction `a : b`.
    pub fn ddot(&self, other: &SymTensor2) -> f64 {
        self.t11 * other.t11 + self.t22 * other.t22 + 2.0 * self.t12 * other.t12
    }

    /// Frobenius norm of the full 2x2 tensor.
    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.t11.is_finite() && self.t22.is_finite() && self.t12.is_finite()
    }
}

impl Add for SymTensor2 {
    type Output = SymTensor2;
    fn add(self, o: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self.t11 + o.t11, self.t22 + o.t22, self.t12 + o.t12)
    }
}

impl Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(self, o: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self.t11 - o.t11, self.t22 - o.t22, self.t12 - o.t12)
    }
}

impl Neg for SymTensor2 {
    type Output = SymTensor2;
    fn neg(self) -> SymTensor2 {
        SymTensor2::new(-self.t11, -self.t22, -self.t12)
    }
}

impl Mul<SymTensor2> for f64 {
    type Output = SymTensor2;
    fn mul(self, t: SymTensor2) -> SymTensor2 {
        SymTensor2::new(self * t.t11, self * t.t22, self * t.t12)
    }
}

/// A 3x3 matrix acting on [`SymTensor2`] values in Voigt form.
///
/// Row/column order is `(11, 22, 12)`. Stiffnesses built here are symmetric
/// as plain matrices. Operators such as the Green operator carry major
/// symmetry only in the energy-weighted sense, see
/// [`VoigtMatrix::is_major_symmetric`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VoigtMatrix(pub [[f64; 3]; 3]);

/// Weights of the double contraction in Voigt form.
const CONTRACTION_WEIGHT: [f64; 3] = [1.0, 1.0, 2.0];

impl VoigtMatrix {
    pub const ZERO: VoigtMatrix = VoigtMatrix([[0.0; 3]; 3]);

    pub fn identity() -> Self {
        Self::diagonal(1.0, 1.0, 1.0)
    }

    pub fn diagonal(a: f64, b: f64, c: f64) -> Self {
        VoigtMatrix([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    /// Plane-strain stiffness from Lamé parameters.
    pub fn from_lame(lambda: f64, mu: f64) -> Self {
        let m = lambda + 2.0 * mu;
        VoigtMatrix([[m, lambda, 0.0], [lambda, m, 0.0], [0.0, 0.0, 2.0 * mu]])
    }

    pub fn apply(&self, t: &SymTensor2) -> SymTensor2 {
        let m = &self.0;
        SymTensor2::new(
            m[0][0] * t.t11 + m[0][1] * t.t22 + m[0][2] * t.t12,
            m[1][0] * t.t11 + m[1][1] * t.t22 + m[1][2] * t.t12,
            m[2][0] * t.t11 + m[2][1] * t.t22 + m[2][2] * t.t12,
        )
    }

    pub fn matmul(&self, other: &VoigtMatrix) -> VoigtMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        VoigtMatrix(out)
    }

    pub fn transpose(&self) -> VoigtMatrix {
        let m = &self.0;
        VoigtMatrix([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..3).all(|i| (0..3).all(|j| (self.0[i][j] - self.0[j][i]).abs() <= rel_tol * scale))
    }

    /// Symmetry of the bilinear form `a : (M b)`, i.e. of `W M` with
    /// `W = diag(1, 1, 2)`.
    pub fn is_major_symmetric(&self, rel_tol: f64) -> bool {
        let mut weighted = *self;
        for (i, row) in weighted.0.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v *= CONTRACTION_WEIGHT[i];
            }
        }
        weighted.is_symmetric(rel_tol)
    }

    fn to_nalgebra(self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.0[i][j])
    }

    fn from_nalgebra(m: &Matrix3<f64>) -> VoigtMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        VoigtMatrix(out)
    }

    /// Inverse via the adjugate. Fails when the 1-norm condition number
    /// exceeds [`MAX_CONDITION`].
    pub fn inverse(&self) -> Result<VoigtMatrix> {
        let m = &self.0;
        let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
        let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
        let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
        let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularMatrix);
        }
        let inv_det = 1.0 / det;
        let inv = VoigtMatrix([
            [
                c00 * inv_det,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
            ],
            [
                c01 * inv_det,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
            ],
            [
                c02 * inv_det,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
            ],
        ]);
        if self.norm1() * inv.norm1() > MAX_CONDITION {
            return Err(Error::SingularMatrix);
        }
        Ok(inv)
    }

    fn norm1(&self) -> f64 {
        (0..3)
            .map(|j| (0..3).map(|i| self.0[i][j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Moore-Penrose pseudo-inverse of a symmetric matrix, together with a
    /// flag telling whether the matrix was rank deficient.
    ///
    /// Eigenvalues below `rel_tol * max|eig|` are treated as zero.
    pub fn symmetric_pseudo_inverse(&self, rel_tol: f64) -> (VoigtMatrix, bool) {
        let sym = (self.to_nalgebra() + self.to_nalgebra().transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let largest = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let cutoff = rel_tol * largest;
        let mut deficient = false;
        let mut inv = Matrix3::zeros();
        for k in 0..3 {
            let ev = eig.eigenvalues[k];
            if ev.abs() <= cutoff || largest == 0.0 {
                deficient = true;
                continue;
            }
            let v = eig.eigenvectors.column(k);
            inv += v * v.transpose() / ev;
        }
        (VoigtMatrix::from_nalgebra(&inv), deficient)
    }

    /// Orthogonal projector onto the range of a symmetric matrix.
    pub fn symmetric_range_projector(&self, rel_tol: f64) -> VoigtMatrix {
        let sym = (self.to_nalgebra() + self.to_nalgebra().transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let largest = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut proj = Matrix3::zeros();
        for k in 0..3 {
            if largest > 0.0 && eig.eigenvalues[k].abs() > rel_tol * largest {
                let v = eig.eigenvectors.column(k);
                proj += v * v.transpose();
            }
        }
        VoigtMatrix::from_nalgebra(&proj)
    }
}

impl Add for VoigtMatrix {
    type Output = VoigtMatrix;
    fn add(self, o: VoigtMatrix) -> VoigtMatrix {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] += o.0[i][j];
            }
        }
        out
    }
}

impl Sub for VoigtMatrix {
    type Output = VoigtMatrix;
    fn sub(self, o: VoigtMatrix) -> VoigtMatrix {
        self + (-1.0) * o
    }
}

impl Mul<VoigtMatrix> for f64 {
    type Output = VoigtMatrix;
    fn mul(self, m: VoigtMatrix) -> VoigtMatrix {
        let mut out = m;
        out.0.iter_mut().flatten().for_each(|v| *v *= self);
        out
    }
}

/// Lamé parameters `(lambda, mu)` from Young's modulus and Poisson ratio.
pub fn lame_parameters(youngs: f64, poisson: f64) -> (f64, f64) {
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = youngs / (2.0 * (1.0 + poisson));
    (lambda, mu)
}

pub(crate) fn check_isotropic(youngs: f64, poisson: f64) -> Result<()> {
    if !(youngs >= 0.0) || !youngs.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Young's modulus must be finite and non-negative, got {youngs}"
        )));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "Poisson ratio must lie in (-1, 0.5), got {poisson}"
        )));
    }
    Ok(())
}

/// Plane-strain isotropic stiffness for modulus `youngs` and ratio `poisson`.
pub fn isotropic_stiffness(youngs: f64, poisson: f64) -> Result<VoigtMatrix> {
    check_isotropic(youngs, poisson)?;
    let (lambda, mu) = lame_parameters(youngs, poisson);
    Ok(VoigtMatrix::from_lame(lambda, mu))
}

pub fn apply_voigt(m: &VoigtMatrix, t: &SymTensor2) -> SymTensor2 {
    m.apply(t)
}

pub fn invert_voigt(m: &VoigtMatrix) -> Result<VoigtMatrix> {
    m.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn assert_mat_eq(a: &VoigtMatrix, b: &VoigtMatrix, tol: f64) {
        let scale = a.max_abs().max(b.max_abs()).max(1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (a.0[i][j] - b.0[i][j]).abs() <= tol * scale,
                    "entry ({i},{j}): {} vs {}",
                    a.0[i][j],
                    b.0[i][j]
                );
            }
        }
    }

    #[test]
    fn void_phase_is_zero_matrix() {
        assert_eq!(isotropic_stiffness(0.0, 0.3).unwrap(), VoigtMatrix::ZERO);
    }

    #[test]
    fn unit_modulus_zero_poisson_is_identity() {
        let c = isotropic_stiffness(1.0, 0.0).unwrap();
        assert_mat_eq(&c, &VoigtMatrix::identity(), 1e-15);
        let s = c.apply(&SymTensor2::new(1.0, 0.0, 0.0));
        assert_eq!(s, SymTensor2::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn aluminium_like_fiber_lame_constants() {
        let (e, nu) = (68.9e9, 0.35);
        let c = isotropic_stiffness(e, nu).unwrap();
        // independent scalar evaluation
        let lambda = 68.9e9 * 0.35 / (1.35 * 0.3);
        let mu = 68.9e9 / 2.7;
        assert_relative_eq!(c.0[0][1], lambda, max_relative = 1e-14);
        assert_relative_eq!(c.0[0][0], lambda + 2.0 * mu, max_relative = 1e-14);
        assert_relative_eq!(c.0[2][2], 2.0 * mu, max_relative = 1e-14);
        assert_relative_eq!(lambda, 5.954_320_987_654_321e10, max_relative = 1e-12);
    }

    #[test]
    fn hooke_law_scalar_expansion() {
        let c = isotropic_stiffness(2.0, 0.25).unwrap();
        let eps = SymTensor2::new(0.01, 0.02, 0.005);
        let s = c.apply(&eps);
        let lambda = 2.0 * 0.25 / (1.25 * 0.5);
        let mu = 2.0 / 2.5;
        let tr = eps.t11 + eps.t22;
        assert_relative_eq!(s.t11, lambda * tr + 2.0 * mu * eps.t11, max_relative = 1e-14);
        assert_relative_eq!(s.t22, lambda * tr + 2.0 * mu * eps.t22, max_relative = 1e-14);
        assert_relative_eq!(s.t12, 2.0 * mu * eps.t12, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_moduli() {
        assert!(isotropic_stiffness(-1.0, 0.3).is_err());
        assert!(isotropic_stiffness(1.0, 0.5).is_err());
        assert!(isotropic_stiffness(1.0, -1.0).is_err());
        assert!(isotropic_stiffness(f64::NAN, 0.2).is_err());
    }

    #[test]
    fn inverse_of_simple_matrices() {
        assert_mat_eq(&VoigtMatrix::identity().inverse().unwrap(), &VoigtMatrix::identity(), 0.0);
        let half = VoigtMatrix::diagonal(2.0, 2.0, 2.0).inverse().unwrap();
        assert_mat_eq(&half, &VoigtMatrix::diagonal(0.5, 0.5, 0.5), 1e-16);
        assert!(VoigtMatrix::ZERO.inverse().is_err());
    }

    #[test]
    fn void_plus_reference_inverts_to_reference_compliance() {
        let c0 = isotropic_stiffness(200.0, 0.3).unwrap();
        let sum = isotropic_stiffness(0.0, 0.3).unwrap() + c0;
        let inv = sum.inverse().unwrap();
        // dense 3x3 solve as the reference
        let lu = c0.to_nalgebra().lu();
        let dense = lu.try_inverse().unwrap();
        assert_mat_eq(&inv, &VoigtMatrix::from_nalgebra(&dense), 1e-14);
        assert_mat_eq(&inv.matmul(&c0), &VoigtMatrix::identity(), 1e-14);
    }

    #[test]
    fn pseudo_inverse_of_rank_deficient() {
        let d = VoigtMatrix::diagonal(2.0, 0.0, 4.0);
        let (p, deficient) = d.symmetric_pseudo_inverse(1e-12);
        assert!(deficient);
        assert_mat_eq(&p, &VoigtMatrix::diagonal(0.5, 0.0, 0.25), 1e-15);
        let proj = d.symmetric_range_projector(1e-12);
        assert_mat_eq(&proj, &VoigtMatrix::diagonal(1.0, 0.0, 1.0), 1e-15);
    }

    fn moduli() -> impl Strategy<Value = (f64, f64)> {
        (0.0..1e3_f64, -0.99..0.49_f64)
    }

    fn tensor() -> impl Strategy<Value = SymTensor2> {
        (-1.0..1.0_f64, -1.0..1.0_f64, -1.0..1.0_f64).prop_map(|(a, b, c)| SymTensor2::new(a, b, c))
    }

    proptest! {
        #[test]
        fn hooke_law_is_linear((e, nu) in moduli(), a in -5.0..5.0_f64, b in -5.0..5.0_f64,
                               x in tensor(), y in tensor()) {
            let c = isotropic_stiffness(e, nu).unwrap();
            let lhs = c.apply(&(a * x + b * y));
            let rhs = a * c.apply(&x) + b * c.apply(&y);
            let scale = c.max_abs() * 10.0 + 1e-300;
            prop_assert!((lhs - rhs).norm() <= 1e-12 * scale);
        }

        #[test]
        fn strain_energy_is_non_negative((e, nu) in moduli(), x in tensor()) {
            let c = isotropic_stiffness(e, nu).unwrap();
            let w = x.ddot(&c.apply(&x));
            prop_assert!(w >= -1e-12 * c.max_abs());
            if e > 1e-6 && x.norm() > 1e-6 {
                prop_assert!(w > 0.0);
            }
        }

        #[test]
        fn stiffness_is_symmetric((e, nu) in moduli()) {
            let c = isotropic_stiffness(e, nu).unwrap();
            prop_assert!(c.is_symmetric(1e-12));
            prop_assert!(c.is_major_symmetric(1e-12));
        }

        #[test]
        fn double_inverse_is_identity((e, nu) in (1e-3..1e3_f64, -0.9..0.45_f64)) {
            let c = isotropic_stiffness(e, nu).unwrap();
            let back = c.inverse().unwrap().inverse().unwrap();
            assert_mat_eq(&back, &c, 1e-10);
            assert_mat_eq(&c.matmul(&c.inverse().unwrap()), &VoigtMatrix::identity(), 1e-10);
        }
    }
}
