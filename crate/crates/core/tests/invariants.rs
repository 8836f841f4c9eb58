//! Property tests on randomized small cells: mean-strain pinning, basis
//! orthonormality, the `Gamma C0` projector, linearity in the load and the
//! equilibrium residual of converged solutions.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use rpmfft::greens::{apply_gamma, GreenOperator, ReferenceMedium, SpectralField};
use rpmfft::iteration::FixedPointMap;
use rpmfft::microstructure::{Grid2, Isotropic, MaterialField};
use rpmfft::rpm::{rpm_solve_with_state, solve_rpm, RpmConfig};
use rpmfft::spectral::{
    classical_step, equilibrium_error, solve_fixed_point, stress, FixedPointConfig, LoadCase, Scheme,
};
use rpmfft::tensor::SymTensor2;
use rpmfft::Result;

/// Random two-phase cell with both phases present.
fn random_cell(n: usize, contrast: f64, nu: f64, seed: u64) -> (MaterialField, ReferenceMedium) {
    let grid = Grid2::square(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u16> = (0..grid.len()).map(|_| rng.random_range(0..2u16)).collect();
    ids[0] = 0;
    ids[1] = 1;
    let phases = vec![Isotropic::new(1.0, nu).unwrap(), Isotropic::new(contrast, nu).unwrap()];
    let material = MaterialField::new(grid, ids, phases).unwrap();
    let medium = rpmfft::greens::reference_from_average(contrast, 1.0, nu).unwrap();
    (material, medium)
}

fn load_strategy() -> impl Strategy<Value = SymTensor2> {
    (-1.0..1.0_f64, -1.0..1.0_f64, -1.0..1.0_f64)
        .prop_filter("nonzero load", |(a, b, c)| a.abs() + b.abs() + c.abs() > 0.1)
        .prop_map(|(a, b, c)| SymTensor2::new(0.01 * a, 0.01 * b, 0.01 * c))
}

fn schemes() -> [Scheme; 3] {
    [Scheme::Classical, Scheme::ACCELERATED, Scheme::Polarization { alpha: 1.5, beta: 1.5 }]
}

struct LinearMap {
    a: DMatrix<f64>,
    b: Vec<f64>,
}

impl FixedPointMap for LinearMap {
    fn len(&self) -> usize {
        self.b.len()
    }

    fn apply(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.b[i] + (0..u.len()).map(|j| self.a[(i, j)] * u[j]).sum::<f64>();
        }
        Ok(())
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn classical_iterates_keep_the_applied_mean(
        n in prop::sample::select(vec![4usize, 6, 8]),
        contrast in 1.5..100.0_f64,
        nu in 0.0..0.45_f64,
        seed in any::<u64>(),
        load in load_strategy(),
    ) {
        let (material, medium) = random_cell(n, contrast, nu, seed);
        let load = LoadCase::new(load).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let data: Vec<f64> = (0..3 * n * n).map(|_| rng.random_range(-0.01..0.01)).collect();
        let eps = rpmfft::field::TensorField2::from_flat(*material.grid(), data).unwrap();
        let next = classical_step(&material, &medium, &load, &eps).unwrap();
        prop_assert!((next.mean() - load.strain).norm() < 1e-15);
    }

    #[test]
    fn converged_solutions_are_equilibrated_with_the_applied_mean(
        n in prop::sample::select(vec![4usize, 6, 8]),
        contrast in 1.5..50.0_f64,
        nu in 0.0..0.45_f64,
        seed in any::<u64>(),
        load in load_strategy(),
        tol in prop::sample::select(vec![1e-4, 1e-6, 1e-8]),
    ) {
        let (material, medium) = random_cell(n, contrast, nu, seed);
        let load = LoadCase::new(load).unwrap();
        for scheme in schemes() {
            let config = FixedPointConfig { tolerance: tol, max_iterations: 20_000, scheme };
            let (eps, report) = solve_fixed_point(&material, &medium, &load, &config).unwrap();
            prop_assert!(report.converged, "{scheme:?}");
            let err = equilibrium_error(&stress(&material, &eps).unwrap()).unwrap();
            prop_assert!(err <= tol, "{scheme:?}: {err} > {tol}");
            // Polarization iterates pin the mean only in the limit.
            if scheme == Scheme::Classical {
                prop_assert!((eps.mean() - load.strain).norm() < 1e-15);
            }

            let rpm = RpmConfig { tolerance: tol, max_outer: 20_000, ..RpmConfig::default() };
            let (eps, report) = solve_rpm(&material, &medium, &load, scheme, &rpm).unwrap();
            prop_assert!(report.converged, "rpm {scheme:?}");
            let err = equilibrium_error(&stress(&material, &eps).unwrap()).unwrap();
            prop_assert!(err <= tol, "rpm {scheme:?}: {err} > {tol}");
        }
    }

    #[test]
    fn solutions_scale_with_the_load(
        n in prop::sample::select(vec![4usize, 6, 8]),
        contrast in 1.5..50.0_f64,
        seed in any::<u64>(),
        load in load_strategy(),
        scale in 0.01..100.0_f64,
    ) {
        let (material, medium) = random_cell(n, contrast, 0.3, seed);
        for scheme in schemes() {
            let config = FixedPointConfig { tolerance: 1e-8, max_iterations: 20_000, scheme };
            let base = LoadCase::new(load).unwrap();
            let scaled = LoadCase::new(scale * load).unwrap();
            let (e1, r1) = solve_fixed_point(&material, &medium, &base, &config).unwrap();
            let (e2, r2) = solve_fixed_point(&material, &medium, &scaled, &config).unwrap();
            prop_assert_eq!(r1.iterations, r2.iterations);
            let d = e2.max_abs_diff(&e1.scaled(scale)).unwrap();
            prop_assert!(d <= 1e-12 * e2.max_abs(), "{scheme:?}: {d}");
        }
    }

    #[test]
    fn gamma_c0_is_a_projector_on_spectral_fields(
        nx in 2usize..9,
        ny in 2usize..9,
        youngs in 0.1..10.0_f64,
        nu in -0.5..0.45_f64,
        seed in any::<u64>(),
    ) {
        let grid = Grid2::new(nx, ny, 1.0, 1.3).unwrap();
        let medium = ReferenceMedium::from_youngs(youngs, nu).unwrap();
        let op = GreenOperator::new(medium, &grid);
        let len = op.frequencies().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: SpectralField = rpmfft::greens::zero_spectrum(len);
        for comp in x.iter_mut() {
            for v in comp.iter_mut() {
                *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let c0 = medium.stiffness().0;
        let p = |field: &SpectralField| -> SpectralField {
            let mut tau = rpmfft::greens::zero_spectrum(len);
            for s in 0..len {
                for (r, row) in c0.iter().enumerate() {
                    tau[r][s] = (0..3).map(|c| row[c] * field[c][s]).sum();
                }
            }
            apply_gamma(&op, &tau).unwrap()
        };
        let once = p(&x);
        let twice = p(&once);
        let scale = once.iter().flatten().fold(0.0_f64, |a, v| a.max(v.norm())).max(1.0);
        for c in 0..3 {
            for s in 0..len {
                prop_assert!((twice[c][s] - once[c][s]).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn rpm_basis_stays_orthonormal(
        unstable in prop::collection::vec(prop_oneof![1.2..4.0_f64, -4.0..-1.2_f64], 1..4),
        seed in any::<u64>(),
    ) {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = g.qr().q();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = unstable.get(i).copied().unwrap_or_else(|| rng.random_range(-0.5..0.5));
        }
        let mut map = LinearMap {
            a: &s * d * s.transpose(),
            b: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let config = RpmConfig { tolerance: 1e-10, max_outer: 2000, ..RpmConfig::default() };
        let (_, report, state) = rpm_solve_with_state(&mut map, &vec![0.0; n], &config, None).unwrap();
        prop_assert!(report.converged);
        prop_assert!(state.dim() >= unstable.len());
        prop_assert!(state.orthonormality_defect() < 1e-10);
    }
}
