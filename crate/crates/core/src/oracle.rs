//! Reference solutions for validating the iterative schemes: a dense direct
//! solve of the discrete Lippmann-Schwinger system and the closed-form
//! effective stiffness of a two-phase laminate.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::TensorField2;
use crate::greens::{zero_spectrum, GreenOperator, ReferenceMedium};
use crate::microstructure::{Axis, Isotropic, MaterialField};
use crate::spectral::LoadCase;
use crate::tensor::{isotropic_stiffness, VoigtMatrix};

/// Largest number of unknowns the dense oracle accepts (a 24 x 24 grid).
pub const MAX_DENSE_UNKNOWNS: usize = 3 * 24 * 24;

/// Pivot magnitude, relative to the largest, below which a direction counts
/// towards the null space.
const NULL_PIVOT: f64 = 1e-10;

/// `(I + Gamma d) eps = E`, assembled column by column.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl DenseSystem {
    /// Probes the composed map `eps -> eps + Gamma(d eps)` with every unit
    /// vector of the component-major strain layout.
    pub fn assemble(material: &MaterialField, medium: &ReferenceMedium, load: &LoadCase) -> Result<Self> {
        let grid = *material.grid();
        let n = grid.len();
        let n3 = 3 * n;
        if n3 > MAX_DENSE_UNKNOWNS {
            return Err(Error::InvalidParameter(format!(
                "dense oracle limited to {MAX_DENSE_UNKNOWNS} unknowns, grid has {n3}"
            )));
        }
        let c0 = medium.stiffness();
        let contrast: Vec<VoigtMatrix> = material.phase_stiffness().iter().map(|c| *c - c0).collect();
        let green = GreenOperator::new(*medium, &grid);
        let mut fft = Fft2::new(grid.nx, grid.ny);
        let mut spec = zero_spectrum(fft.spectrum_len());
        let mut out = zero_spectrum(fft.spectrum_len());
        let mut tau = vec![0.0; n3];
        let mut column = vec![0.0; n3];
        let mut matrix = DMatrix::zeros(n3, n3);
        for j in 0..n3 {
            let (comp, cell) = (j / n, j % n);
            tau.iter_mut().for_each(|v| *v = 0.0);
            let d = &contrast[material.phase_ids()[cell] as usize].0;
            for r in 0..3 {
                tau[r * n + cell] = d[r][comp];
            }
            for (c, plane) in spec.iter_mut().enumerate() {
                fft.forward(&tau[c * n..(c + 1) * n], plane);
            }
            green.apply(&spec, &mut out)?;
            for (c, plane) in out.iter_mut().enumerate() {
                fft.inverse(plane, &mut column[c * n..(c + 1) * n]);
            }
            column[j] += 1.0;
            matrix.set_column(j, &DVector::from_column_slice(&column));
        }
        let rhs = DVector::from_column_slice(TensorField2::uniform(grid, load.strain).as_flat());
        Ok(Self { matrix, rhs })
    }

    /// Solves the system by full-pivot LU, failing with a null-space
    /// estimate when it is singular.
    pub fn solve(&self) -> Result<DVector<f64>> {
        let lu = self.matrix.clone().full_piv_lu();
        let u = lu.u();
        let m = u.nrows();
        let largest = (0..m).fold(0.0_f64, |a, i| a.max(u[(i, i)].abs()));
        let nullity = (0..m)
            .filter(|&i| u[(i, i)].abs() <= NULL_PIVOT * largest)
            .count();
        if nullity > 0 || largest == 0.0 {
            return Err(Error::SingularSystem { nullity: nullity.max(1) });
        }
        lu.solve(&self.rhs).ok_or(Error::SingularSystem { nullity: 1 })
    }
}

/// Exact solution of the discrete cell problem by dense assembly and
/// direct solve. Grids are limited to [`MAX_DENSE_UNKNOWNS`] unknowns.
pub fn dense_solve(material: &MaterialField, medium: &ReferenceMedium, load: &LoadCase) -> Result<TensorField2> {
    let system = DenseSystem::assemble(material, medium, load)?;
    let x = system.solve()?;
    TensorField2::from_flat(*material.grid(), x.iter().copied().collect())
}

fn swap_normal_directions(m: &VoigtMatrix) -> VoigtMatrix {
    let p = [1, 0, 2];
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m.0[p[i]][p[j]];
        }
    }
    VoigtMatrix(out)
}

/// Effective stiffness of a laminate of `c1` (volume fraction `fraction`)
/// and `c2` with interfaces normal to `normal`.
///
/// Normal and shear tractions on the interfaces and the tangential strain
/// are uniform; the phase fields are piecewise constant.
pub fn laminate_stiffness(c1: &VoigtMatrix, c2: &VoigtMatrix, fraction: f64, normal: Axis) -> Result<VoigtMatrix> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "laminate fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if normal == Axis::Y {
        let eff = laminate_stiffness(&swap_normal_directions(c1), &swap_normal_directions(c2), fraction, Axis::X)?;
        return Ok(swap_normal_directions(&eff));
    }
    let phases = [(c1, fraction), (c2, 1.0 - fraction)];
    // per phase: [sig11, sig12] = A [eps11, eps12] + b eps22
    let mut blocks = Vec::with_capacity(2);
    for (c, _) in phases {
        let m = &c.0;
        let a = Matrix2::new(m[0][0], m[0][2], m[2][0], m[2][2]);
        let a_inv = a.try_inverse().ok_or(Error::SingularMatrix)?;
        let b = Vector2::new(m[0][1], m[2][1]);
        blocks.push((a_inv, b));
    }
    let compliance = blocks[0].0 * phases[0].1 + blocks[1].0 * phases[1].1;
    let coupling = blocks[0].0 * blocks[0].1 * phases[0].1 + blocks[1].0 * blocks[1].1 * phases[1].1;
    let compliance_inv = compliance.try_inverse().ok_or(Error::SingularMatrix)?;
    let mut eff = [[0.0; 3]; 3];
    for col in 0..3 {
        let mut e = [0.0; 3];
        e[col] = 1.0;
        let s = compliance_inv * (Vector2::new(e[0], e[2]) + coupling * e[1]);
        let mut sig22 = 0.0;
        for (k, (c, f)) in phases.iter().enumerate() {
            let (a_inv, b) = &blocks[k];
            let x = a_inv * (s - b * e[1]);
            sig22 += f * (c.0[1][0] * x[0] + c.0[1][1] * e[1] + c.0[1][2] * x[1]);
        }
        eff[0][col] = s[0];
        eff[1][col] = sig22;
        eff[2][col] = s[1];
    }
    Ok(VoigtMatrix(eff))
}

/// Effective plane-strain stiffness of an isotropic two-phase laminate with
/// interfaces normal to axis 1.
pub fn laminate_effective(e1: f64, nu1: f64, e2: f64, nu2: f64, fraction: f64) -> Result<VoigtMatrix> {
    for (e, nu) in [(e1, nu1), (e2, nu2)] {
        Isotropic::new(e, nu)?;
        if e <= 0.0 {
            return Err(Error::InvalidParameter(
                "laminate phases must have positive stiffness".into(),
            ));
        }
    }
    laminate_stiffness(
        &isotropic_stiffness(e1, nu1)?,
        &isotropic_stiffness(e2, nu2)?,
        fraction,
        Axis::X,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::reference_from_average;
    use crate::microstructure::{laminate, single_fiber, Grid2};
    use crate::spectral::{average_stress, classical_step, equilibrium_error, stress};
    use crate::tensor::SymTensor2;
    use proptest::prelude::*;

    #[test]
    fn equal_phases_give_the_common_stiffness() {
        let eff = laminate_effective(3.0, 0.3, 3.0, 0.3, 0.4).unwrap();
        let c = isotropic_stiffness(3.0, 0.3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((eff.0[i][j] - c.0[i][j]).abs() < 1e-12 * c.max_abs());
            }
        }
    }

    #[test]
    fn limit_of_full_fraction() {
        let eff = laminate_effective(5.0, 0.2, 1.0, 0.35, 1.0 - 1e-9).unwrap();
        let c = isotropic_stiffness(5.0, 0.2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((eff.0[i][j] - c.0[i][j]).abs() < 1e-6 * c.max_abs());
            }
        }
    }

    #[test]
    fn shear_modulus_is_the_harmonic_mean() {
        let (e1, e2, nu, f) = (10.0, 1.0, 0.3, 0.25);
        let eff = laminate_effective(e1, nu, e2, nu, f).unwrap();
        let mu = |e: f64| e / (2.0 * (1.0 + nu));
        let harmonic = 1.0 / (f / mu(e1) + (1.0 - f) / mu(e2));
        assert!((eff.0[2][2] - 2.0 * harmonic).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_laminate_input() {
        assert!(laminate_effective(1.0, 0.3, 1.0, 0.3, 0.0).is_err());
        assert!(laminate_effective(0.0, 0.3, 1.0, 0.3, 0.5).is_err());
        assert!(laminate_effective(1.0, 0.6, 1.0, 0.3, 0.5).is_err());
    }

    #[test]
    fn homogeneous_dense_solution_is_the_load() {
        let grid = Grid2::square(6).unwrap();
        let material = MaterialField::homogeneous(grid, Isotropic::new(2.0, 0.3).unwrap()).unwrap();
        let medium = ReferenceMedium::from_youngs(1.0, 0.2).unwrap();
        let load = LoadCase::new(SymTensor2::new(0.01, -0.003, 0.004)).unwrap();
        let eps = dense_solve(&material, &medium, &load).unwrap();
        assert!(eps.max_abs_diff(&TensorField2::uniform(grid, load.strain)).unwrap() < 1e-15);
    }

    #[test]
    fn dense_laminate_matches_closed_form() {
        let grid = Grid2::square(8).unwrap();
        let (a, b) = (Isotropic::new(10.0, 0.3).unwrap(), Isotropic::new(1.0, 0.3).unwrap());
        for normal in [Axis::X, Axis::Y] {
            let material = laminate(grid, 0.5, a, b, normal).unwrap();
            let medium = reference_from_average(10.0, 1.0, 0.3).unwrap();
            let eff = laminate_stiffness(&a.stiffness(), &b.stiffness(), 0.5, normal).unwrap();
            for col in 0..3 {
                let mut e = [0.0; 3];
                e[col] = 0.01;
                let load = LoadCase::new(SymTensor2::from_array(e)).unwrap();
                let eps = dense_solve(&material, &medium, &load).unwrap();
                let sig = average_stress(&material, &eps).unwrap().to_array();
                for row in 0..3 {
                    assert!((sig[row] - eff.0[row][col] * 0.01).abs() < 1e-8 * eff.max_abs() * 0.01);
                }
            }
        }
    }

    #[test]
    fn dense_solution_is_a_classical_fixed_point() {
        let grid = Grid2::square(12).unwrap();
        let fiber = Isotropic::new(100.0, 0.25).unwrap();
        let matrix = Isotropic::new(1.0, 0.25).unwrap();
        let material = single_fiber(grid, 0.3, fiber, matrix).unwrap();
        let medium = reference_from_average(100.0, 1.0, 0.25).unwrap();
        let load = LoadCase::shear(0.005);
        let eps = dense_solve(&material, &medium, &load).unwrap();
        let next = classical_step(&material, &medium, &load, &eps).unwrap();
        assert!(next.max_abs_diff(&eps).unwrap() < 1e-9 * eps.max_abs());
        assert!((eps.mean() - load.strain).norm() < 1e-12);
        let sig = stress(&material, &eps).unwrap();
        assert!(equilibrium_error(&sig).unwrap() < 1e-10);
    }

    #[test]
    fn void_system_is_singular() {
        let grid = Grid2::square(8).unwrap();
        let void = Isotropic::new(0.0, 0.25).unwrap();
        let matrix = Isotropic::new(1.0, 0.25).unwrap();
        let material = single_fiber(grid, 0.3, void, matrix).unwrap();
        let medium = reference_from_average(0.0, 1.0, 0.25).unwrap();
        match dense_solve(&material, &medium, &LoadCase::shear(0.01)) {
            Err(Error::SingularSystem { nullity }) => assert!(nullity >= 1),
            other => panic!("expected a singular system, got {other:?}"),
        }
    }

    #[test]
    fn rejects_large_grids() {
        let grid = Grid2::square(25).unwrap();
        let material = MaterialField::homogeneous(grid, Isotropic::new(1.0, 0.3).unwrap()).unwrap();
        let medium = ReferenceMedium::from_youngs(1.0, 0.3).unwrap();
        assert!(dense_solve(&material, &medium, &LoadCase::shear(0.01)).is_err());
    }

    #[test]
    fn dense_solution_follows_periodic_shifts() {
        let grid = Grid2::square(8).unwrap();
        let fiber = Isotropic::new(20.0, 0.3).unwrap();
        let matrix = Isotropic::new(1.0, 0.25).unwrap();
        let material = single_fiber(grid, 0.3, fiber, matrix).unwrap();
        let medium = reference_from_average(20.0, 1.0, 0.3).unwrap();
        let load = LoadCase::new(SymTensor2::new(0.01, 0.0, 0.003)).unwrap();
        let base = dense_solve(&material, &medium, &load).unwrap();
        let (sx, sy) = (3, 5);
        let shifted = dense_solve(&material.shifted(sx, sy), &medium, &load).unwrap();
        for iy in 0..8 {
            for ix in 0..8 {
                let a = base.get(iy * 8 + ix);
                let b = shifted.get(((iy + sy) % 8) * 8 + (ix + sx) % 8);
                assert!((a - b).norm() < 1e-9 * base.max_abs());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn effective_eigenvalues_within_voigt_reuss_bounds(
            e1 in 0.1..100.0_f64, e2 in 0.1..100.0_f64,
            nu1 in -0.5..0.45_f64, nu2 in -0.5..0.45_f64, f in 0.01..0.99_f64,
        ) {
            let c1 = isotropic_stiffness(e1, nu1).unwrap();
            let c2 = isotropic_stiffness(e2, nu2).unwrap();
            let eff = laminate_stiffness(&c1, &c2, f, Axis::X).unwrap();
            let w = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, 2.0));
            let to_na = |m: &VoigtMatrix| nalgebra::Matrix3::from_fn(|i, j| m.0[i][j]);
            // energy form eps : C eps = eps^T W C eps with W C symmetric
            let sym = |m: nalgebra::Matrix3<f64>| (w * m + (w * m).transpose()) * 0.5;
            let voigt = sym(to_na(&c1) * f + to_na(&c2) * (1.0 - f));
            let reuss_compliance = to_na(&c1).try_inverse().unwrap() * f
                + to_na(&c2).try_inverse().unwrap() * (1.0 - f);
            let reuss = sym(reuss_compliance.try_inverse().unwrap());
            let e = sym(to_na(&eff));
            // Loewner order: reuss <= eff <= voigt
            let lo = (e - reuss).symmetric_eigen().eigenvalues.min();
            let hi = (voigt - e).symmetric_eigen().eigenvalues.min();
            let scale = voigt.amax();
            prop_assert!(lo >= -1e-9 * scale, "{lo}");
            prop_assert!(hi >= -1e-9 * scale, "{hi}");
        }
    }
}
