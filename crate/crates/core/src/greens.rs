//! Reference medium and the periodic Green operator of isotropic plane-strain
//! elasticity, applied frequency by frequency.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microstructure::Grid2;
use crate::tensor::{lame_parameters, SymTensor2, VoigtMatrix};

/// Homogeneous isotropic comparison medium given by its Lamé parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMedium {
    pub lambda: f64,
    pub mu: f64,
}

impl ReferenceMedium {
    pub fn from_lame(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !(lambda + 2.0 * mu > 0.0) || !lambda.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "reference medium must be positive-definite, got lambda = {lambda}, mu = {mu}"
            )));
        }
        Ok(Self { lambda, mu })
    }

    pub fn from_youngs(youngs: f64, poisson: f64) -> Result<Self> {
        crate::tensor::check_isotropic(youngs, poisson)?;
        let (lambda, mu) = lame_parameters(youngs, poisson);
        Self::from_lame(lambda, mu)
    }

    pub fn stiffness(&self) -> VoigtMatrix {
        VoigtMatrix::from_lame(self.lambda, self.mu)
    }

    pub fn compliance(&self) -> VoigtMatrix {
        self.stiffness()
            .inverse()
            .expect("positive-definite reference medium")
    }

    /// Young's modulus of the medium.
    pub fn youngs(&self) -> f64 {
        self.mu * (3.0 * self.lambda + 2.0 * self.mu) / (self.lambda + self.mu)
    }

    pub fn poisson(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_lame(self.lambda * factor, self.mu * factor)
    }
}

/// Reference medium with modulus `(e_fiber + e_matrix) / 2` and ratio
/// `poisson`.
pub fn reference_from_average(e_fiber: f64, e_matrix: f64, poisson: f64) -> Result<ReferenceMedium> {
    if e_fiber < 0.0 || e_matrix < 0.0 || (e_fiber == 0.0 && e_matrix == 0.0) {
        return Err(Error::InvalidParameter(format!(
            "moduli must be non-negative and not both zero, got {e_fiber} and {e_matrix}"
        )));
    }
    ReferenceMedium::from_youngs(0.5 * (e_fiber + e_matrix), poisson)
}

fn gamma_entry(lambda: f64, mu: f64, xi: [f64; 2], k: usize, h: usize, i: usize, j: usize) -> f64 {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let n2 = xi[0] * xi[0] + xi[1] * xi[1];
    let first = (d(k, i) * xi[h] * xi[j]
        + d(h, i) * xi[k] * xi[j]
        + d(k, j) * xi[h] * xi[i]
        + d(h, j) * xi[k] * xi[i])
        / (4.0 * mu * n2);
    let second = (lambda + mu) / (mu * (lambda + 2.0 * mu)) * xi[i] * xi[j] * xi[k] * xi[h] / (n2 * n2);
    first - second
}

/// Voigt form of the Green operator at frequency `xi`, mapping a stress
/// amplitude to a strain amplitude.
pub fn gamma_hat(medium: &ReferenceMedium, xi: [f64; 2]) -> Result<VoigtMatrix> {
    if xi[0] == 0.0 && xi[1] == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    const PAIRS: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];
    let mut out = [[0.0; 3]; 3];
    for (r, &(k, h)) in PAIRS.iter().enumerate() {
        for (c, &(i, j)) in PAIRS.iter().enumerate() {
            let g = gamma_entry(medium.lambda, medium.mu, xi, k, h, i, j);
            // the 12 column collects both the 12 and 21 stress components
            out[r][c] = if c == 2 { 2.0 * g } else { g };
        }
    }
    Ok(VoigtMatrix(out))
}

/// Physical frequency vectors of the half spectrum produced by
/// [`crate::fft::Fft2`].
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    nkx: usize,
    ny: usize,
    xi: Vec<[f64; 2]>,
    nyquist: Vec<bool>,
}

impl FrequencyGrid {
    pub fn new(grid: &Grid2) -> Self {
        let (nx, ny) = grid.dims();
        let nkx = nx / 2 + 1;
        let mut xi = Vec::with_capacity(nkx * ny);
        let mut nyquist = Vec::with_capacity(nkx * ny);
        for kx in 0..nkx {
            for ky in 0..ny {
                let sy = if ky < ny.div_ceil(2) {
                    ky as f64
                } else {
                    ky as f64 - ny as f64
                };
                xi.push([2.0 * PI * kx as f64 / grid.lx, 2.0 * PI * sy / grid.ly]);
                let nyq_x = nx % 2 == 0 && kx == nx / 2;
                let nyq_y = ny % 2 == 0 && ky == ny / 2;
                nyquist.push(nyq_x || nyq_y);
            }
        }
        Self { nkx, ny, xi, nyquist }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn nkx(&self) -> usize {
        self.nkx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Frequency vector at half-spectrum index `s = kx * ny + ky`.
    pub fn xi(&self, s: usize) -> [f64; 2] {
        self.xi[s]
    }

    /// Whether index `s` has a component at the Nyquist index of an even
    /// grid.
    pub fn is_nyquist(&self, s: usize) -> bool {
        self.nyquist[s]
    }
}

/// Three complex component planes `(11, 22, 12)` of a half spectrum.
pub type SpectralField = [Vec<Complex64>; 3];

pub fn zero_spectrum(len: usize) -> SpectralField {
    [
        vec![Complex64::default(); len],
        vec![Complex64::default(); len],
        vec![Complex64::default(); len],
    ]
}

/// Green operator of a reference medium on a fixed grid.
///
/// At frequencies with a Nyquist component on even grids the operator is
/// replaced by the reference compliance, which drives the stress of those
/// modes to zero and keeps `Gamma C0` an exact projector on real fields.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    medium: ReferenceMedium,
    freqs: FrequencyGrid,
    unit: Vec<[f64; 2]>,
    compliance: VoigtMatrix,
}

impl GreenOperator {
    pub fn new(medium: ReferenceMedium, grid: &Grid2) -> Self {
        let freqs = FrequencyGrid::new(grid);
        let unit = (0..freqs.len())
            .map(|s| {
                let [a, b] = freqs.xi(s);
                let n = (a * a + b * b).sqrt();
                if n == 0.0 {
                    [0.0, 0.0]
                } else {
                    [a / n, b / n]
                }
            })
            .collect();
        Self {
            medium,
            compliance: medium.compliance(),
            freqs,
            unit,
        }
    }

    pub fn medium(&self) -> &ReferenceMedium {
        &self.medium
    }

    pub fn frequencies(&self) -> &FrequencyGrid {
        &self.freqs
    }

    /// Voigt matrix actually applied at half-spectrum index `s`; `None` at
    /// the zero frequency.
    pub fn matrix_at(&self, s: usize) -> Option<VoigtMatrix> {
        if s == 0 {
            None
        } else if self.freqs.is_nyquist(s) {
            Some(self.compliance)
        } else {
            Some(gamma_hat(&self.medium, self.freqs.xi(s)).expect("nonzero frequency"))
        }
    }

    /// Writes `Gamma(tau)` into `out` for every nonzero frequency. The zero
    /// frequency of `out` is set to zero and left to the caller.
    pub fn apply(&self, input: &SpectralField, out: &mut SpectralField) -> Result<()> {
        let len = self.freqs.len();
        for (c, comp) in input.iter().chain(out.iter()).enumerate() {
            if comp.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    found: input.get(c).map_or(comp.len(), Vec::len),
                });
            }
        }
        let mu = self.medium.mu;
        let coupling = (self.medium.lambda + mu) / (mu * (self.medium.lambda + 2.0 * mu));
        let [o11, o22, o12] = out;
        for s in 0..len {
            let (t11, t22, t12) = (input[0][s], input[1][s], input[2][s]);
            if s == 0 {
                o11[s] = Complex64::default();
                o22[s] = Complex64::default();
                o12[s] = Complex64::default();
                continue;
            }
            if self.freqs.is_nyquist(s) {
                let m = &self.compliance.0;
                o11[s] = m[0][0] * t11 + m[0][1] * t22 + m[0][2] * t12;
                o22[s] = m[1][0] * t11 + m[1][1] * t22 + m[1][2] * t12;
                o12[s] = m[2][0] * t11 + m[2][1] * t22 + m[2][2] * t12;
                continue;
            }
            let [n1, n2] = self.unit[s];
            let s1 = t11 * n1 + t12 * n2;
            let s2 = t12 * n1 + t22 * n2;
            let q = (s1 * n1 + s2 * n2) * coupling;
            o11[s] = s1 * (n1 / mu) - q * (n1 * n1);
            o22[s] = s2 * (n2 / mu) - q * (n2 * n2);
            o12[s] = (s2 * n1 + s1 * n2) * (0.5 / mu) - q * (n1 * n2);
        }
        Ok(())
    }
}

/// Applies the Green operator to a spectral field in place of `out`; the
/// zero-frequency entry of the result is zero.
pub fn apply_gamma(op: &GreenOperator, field_hat: &SpectralField) -> Result<SpectralField> {
    let mut out = zero_spectrum(op.frequencies().len());
    op.apply(field_hat, &mut out)?;
    Ok(out)
}

/// Symmetric part of `xi (x) a`, the strain amplitude of a plane wave.
pub fn compatible_amplitude(xi: [f64; 2], a: [f64; 2]) -> SymTensor2 {
    SymTensor2::new(xi[0] * a[0], xi[1] * a[1], 0.5 * (xi[0] * a[1] + xi[1] * a[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn medium() -> ReferenceMedium {
        ReferenceMedium::from_youngs(3.0, 0.3).unwrap()
    }

    #[test]
    fn average_reference_values() {
        let r = reference_from_average(68.9e9, 400e9, 0.23).unwrap();
        assert!((r.youngs() - 234.45e9).abs() < 1e-3);
        assert!((r.poisson() - 0.23).abs() < 1e-14);
        let same = reference_from_average(5.0, 5.0, 0.25).unwrap();
        assert!((same.youngs() - 5.0).abs() < 1e-14);
        let void = reference_from_average(0.0, 8.0, 0.25).unwrap();
        assert!((void.youngs() - 4.0).abs() < 1e-14);
        assert!(reference_from_average(0.0, 0.0, 0.25).is_err());
        assert!(reference_from_average(-1.0, 1.0, 0.25).is_err());
    }

    #[test]
    fn zero_frequency_is_rejected() {
        assert_eq!(gamma_hat(&medium(), [0.0, 0.0]), Err(Error::ZeroFrequency));
    }

    #[test]
    fn fast_path_matches_tensor_formula() {
        let grid = Grid2::new(7, 5, 1.3, 0.7).unwrap();
        let op = GreenOperator::new(medium(), &grid);
        let len = op.frequencies().len();
        let mut input = zero_spectrum(len);
        for s in 0..len {
            for (c, comp) in input.iter_mut().enumerate() {
                comp[s] = Complex64::new((s * 3 + c) as f64 * 0.1 - 1.0, (s + 2 * c) as f64 * 0.05);
            }
        }
        let out = apply_gamma(&op, &input).unwrap();
        for s in 1..len {
            let g = gamma_hat(&medium(), op.frequencies().xi(s)).unwrap();
            for r in 0..3 {
                let expect: Complex64 = (0..3).map(|c| g.0[r][c] * input[c][s]).sum();
                assert!((expect - out[r][s]).norm() < 1e-12 * (1.0 + expect.norm()));
            }
        }
    }

    fn xi_strategy() -> impl Strategy<Value = [f64; 2]> {
        (-10.0..10.0_f64, -10.0..10.0_f64)
            .prop_filter("nonzero", |(a, b)| a.abs() + b.abs() > 1e-3)
            .prop_map(|(a, b)| [a, b])
    }

    proptest! {
        #[test]
        fn reference_acts_as_identity_on_compatible(xi in xi_strategy(),
                                                    a in (-1.0..1.0_f64, -1.0..1.0_f64),
                                                    e in 0.1..100.0_f64, nu in -0.5..0.45_f64) {
            let m = ReferenceMedium::from_youngs(e, nu).unwrap();
            let eps = compatible_amplitude(xi, [a.0, a.1]);
            let g = gamma_hat(&m, xi).unwrap();
            let back = g.apply(&m.stiffness().apply(&eps));
            prop_assert!((back - eps).norm() <= 1e-12 * (1.0 + eps.norm()));
        }

        #[test]
        fn homogeneity_in_medium_and_frequency(xi in xi_strategy(), c in 0.01..100.0_f64) {
            let m = medium();
            let g = gamma_hat(&m, xi).unwrap();
            let scaled = gamma_hat(&m.scaled(c).unwrap(), xi).unwrap();
            let doubled = gamma_hat(&m, [2.0 * xi[0], 2.0 * xi[1]]).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((scaled.0[i][j] * c - g.0[i][j]).abs() <= 1e-12 * g.max_abs());
                    prop_assert!((doubled.0[i][j] - g.0[i][j]).abs() <= 1e-12 * g.max_abs());
                }
            }
        }

        #[test]
        fn major_symmetry(xi in xi_strategy()) {
            prop_assert!(gamma_hat(&medium(), xi).unwrap().is_major_symmetric(1e-12));
        }

        #[test]
        fn gamma_c0_is_idempotent(xi in xi_strategy()) {
            let m = medium();
            let p = gamma_hat(&m, xi).unwrap().matmul(&m.stiffness());
            let pp = p.matmul(&p);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((pp.0[i][j] - p.0[i][j]).abs() <= 1e-12);
                }
            }
        }
    }
}
