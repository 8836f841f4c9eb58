//! FFT-based fixed-point schemes for the periodic cell problem.
//!
//! Every scheme is a [`FixedPointMap`] on a flat state vector. For the
//! classical and polarization schemes the state is the strain field in the
//! component-major layout of [`TensorField2`] (`3 * nx * ny` values). The
//! gradient-flow scheme carries the strain followed by the polarization
//! (`6 * nx * ny` values).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::TensorField2;
use crate::greens::{zero_spectrum, FrequencyGrid, GreenOperator, ReferenceMedium, SpectralField};
use crate::iteration::{self, FixedPointMap, SolveReport};
use crate::microstructure::{Grid2, MaterialField};
use crate::tensor::{SymTensor2, VoigtMatrix};

/// Relative eigenvalue cutoff deciding the range of `d = C - C0`.
const CONTRAST_RANK_TOL: f64 = 1e-12;

/// Prescribed average strain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub strain: SymTensor2,
}

impl LoadCase {
    pub fn new(strain: SymTensor2) -> Result<Self> {
        if !strain.is_finite() {
            return Err(Error::InvalidParameter("load must be finite".into()));
        }
        Ok(Self { strain })
    }

    pub fn shear(e12: f64) -> Self {
        Self {
            strain: SymTensor2::new(0.0, 0.0, e12),
        }
    }

    pub fn axial(e11: f64) -> Self {
        Self {
            strain: SymTensor2::new(e11, 0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scheme {
    Classical,
    /// `alpha = beta = 2` is the accelerated scheme.
    Polarization { alpha: f64, beta: f64 },
    GradientFlow { a: f64 },
}

impl Scheme {
    pub const ACCELERATED: Scheme = Scheme::Polarization {
        alpha: 2.0,
        beta: 2.0,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            Scheme::Classical => Ok(()),
            Scheme::Polarization { alpha, beta } => {
                if !(alpha.is_finite() && beta.is_finite()) || alpha == 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "polarization parameters must be finite with alpha != 0, got ({alpha}, {beta})"
                    )));
                }
                Ok(())
            }
            Scheme::GradientFlow { a } => {
                if !a.is_finite() {
                    return Err(Error::InvalidParameter(format!("step a must be finite, got {a}")));
                }
                Ok(())
            }
        }
    }

    /// Number of tensor fields in the state vector.
    pub fn fields_in_state(&self) -> usize {
        match self {
            Scheme::GradientFlow { .. } => 2,
            _ => 1,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Scheme::Classical => "classical".into(),
            Scheme::Polarization { alpha, beta } if alpha == 2.0 && beta == 2.0 => {
                "accelerated".into()
            }
            Scheme::Polarization { alpha, beta } => format!("polarization({alpha},{beta})"),
            Scheme::GradientFlow { a } => format!("gradient-flow({a})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scheme: Scheme,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 10_000,
            scheme: Scheme::Classical,
        }
    }
}

/// Applies a per-phase matrix to every cell of a component-major field.
fn cellwise(ids: &[u16], mats: &[VoigtMatrix], input: &[f64], out: &mut [f64]) {
    let n = ids.len();
    let (i11, rest) = input.split_at(n);
    let (i22, i12) = rest.split_at(n);
    let (o11, rest) = out.split_at_mut(n);
    let (o22, o12) = rest.split_at_mut(n);
    for cell in 0..n {
        let m = &mats[ids[cell] as usize].0;
        let (a, b, c) = (i11[cell], i22[cell], i12[cell]);
        o11[cell] = m[0][0] * a + m[0][1] * b + m[0][2] * c;
        o22[cell] = m[1][0] * a + m[1][1] * b + m[1][2] * c;
        o12[cell] = m[2][0] * a + m[2][1] * b + m[2][2] * c;
    }
}

fn component_means(field: &[f64], n: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, m) in out.iter_mut().enumerate() {
        *m = field[c * n..(c + 1) * n].iter().sum::<f64>() / n as f64;
    }
    out
}

/// Equilibrium error of a stress spectrum: the root mean square of
/// `div sigma` over the cell divided by the Frobenius norm of the mean
/// stress.
fn spectral_error(fft: &Fft2, freqs: &FrequencyGrid, sig: &SpectralField) -> Result<f64> {
    let n = (fft.nx() * fft.ny()) as f64;
    let mean = [sig[0][0].re / n, sig[1][0].re / n, sig[2][0].re / n];
    let mean_norm = (mean[0] * mean[0] + mean[1] * mean[1] + 2.0 * mean[2] * mean[2]).sqrt();
    if mean_norm == 0.0 || !mean_norm.is_finite() {
        if !mean_norm.is_finite() {
            return Ok(f64::NAN);
        }
        return Err(Error::ZeroMeanStress);
    }
    let ny = fft.ny();
    let mut acc = 0.0;
    for kx in 0..fft.nkx() {
        let w = fft.column_weight(kx);
        let mut col = 0.0;
        for ky in 0..ny {
            let s = kx * ny + ky;
            let [x1, x2] = freqs.xi(s);
            let d1 = sig[0][s] * x1 + sig[2][s] * x2;
            let d2 = sig[2][s] * x1 + sig[1][s] * x2;
            col += d1.norm_sqr() + d2.norm_sqr();
        }
        acc += w * col;
    }
    Ok(acc.sqrt() / n / mean_norm)
}

/// One FFT scheme on a fixed material, reference medium and load.
pub struct SpectralOperator<'a> {
    material: &'a MaterialField,
    load: SymTensor2,
    scheme: Scheme,
    green: GreenOperator,
    fft: Fft2,
    stiffness: Vec<VoigtMatrix>,
    c0: Vec<VoigtMatrix>,
    /// `(C + C0)^-1` per phase, polarization only.
    polar_inverse: Vec<VoigtMatrix>,
    /// Pseudo-inverse of `d` and projector on its range, gradient flow only.
    contrast_pinv: Vec<VoigtMatrix>,
    contrast_range: Vec<VoigtMatrix>,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
    spec_a: SpectralField,
    spec_b: SpectralField,
}

impl std::fmt::Debug for SpectralOperator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOperator")
            .field("grid", self.material.grid())
            .field("scheme", &self.scheme)
            .field("medium", self.green.medium())
            .finish()
    }
}

fn first_cell_of(material: &MaterialField, phase: usize) -> usize {
    material
        .phase_ids()
        .iter()
        .position(|&id| id as usize == phase)
        .unwrap_or(0)
}

impl<'a> SpectralOperator<'a> {
    pub fn new(
        material: &'a MaterialField,
        medium: &ReferenceMedium,
        load: &LoadCase,
        scheme: Scheme,
    ) -> Result<Self> {
        scheme.validate()?;
        if !load.strain.is_finite() {
            return Err(Error::InvalidParameter("load must be finite".into()));
        }
        let grid = material.grid();
        let c0 = medium.stiffness();
        let stiffness = material.phase_stiffness().to_vec();
        let mut polar_inverse = Vec::new();
        let mut contrast_pinv = Vec::new();
        let mut contrast_range = Vec::new();
        match scheme {
            Scheme::Polarization { .. } => {
                for (p, c) in stiffness.iter().enumerate() {
                    let inv = (*c + c0).inverse().map_err(|_| Error::SingularCell {
                        cell: first_cell_of(material, p),
                    })?;
                    polar_inverse.push(inv);
                }
            }
            Scheme::GradientFlow { .. } => {
                for c in &stiffness {
                    let d = *c - c0;
                    contrast_pinv.push(d.symmetric_pseudo_inverse(CONTRAST_RANK_TOL).0);
                    contrast_range.push(d.symmetric_range_projector(CONTRAST_RANK_TOL));
                }
            }
            Scheme::Classical => {}
        }
        let spec_len = (grid.nx / 2 + 1) * grid.ny;
        Ok(Self {
            material,
            load: load.strain,
            scheme,
            green: GreenOperator::new(*medium, grid),
            fft: Fft2::new(grid.nx, grid.ny),
            c0: vec![c0],
            stiffness,
            polar_inverse,
            contrast_pinv,
            contrast_range,
            buf_a: vec![0.0; 3 * grid.len()],
            buf_b: vec![0.0; 3 * grid.len()],
            spec_a: zero_spectrum(spec_len),
            spec_b: zero_spectrum(spec_len),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn grid(&self) -> &Grid2 {
        self.material.grid()
    }

    pub fn material(&self) -> &MaterialField {
        self.material
    }

    pub fn medium(&self) -> &ReferenceMedium {
        self.green.medium()
    }

    pub fn load(&self) -> SymTensor2 {
        self.load
    }

    /// Starting state: `eps = E`, and `tau = d E` for the gradient flow.
    pub fn initial_state(&self) -> Vec<f64> {
        let grid = *self.grid();
        let mut state = TensorField2::uniform(grid, self.load).into_flat();
        if let Scheme::GradientFlow { .. } = self.scheme {
            let d: Vec<VoigtMatrix> = self.stiffness.iter().map(|c| *c - self.c0[0]).collect();
            let mut tau = vec![0.0; state.len()];
            cellwise(self.material.phase_ids(), &d, &state, &mut tau);
            state.extend(tau);
        }
        state
    }

    /// Strain part of a state vector.
    pub fn strain_of(&self, state: &[f64]) -> Result<TensorField2> {
        let n3 = 3 * self.grid().len();
        if state.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: state.len(),
            });
        }
        TensorField2::from_flat(*self.grid(), state[..n3].to_vec())
    }

    fn forward(&mut self, field: &[f64], which_b: bool) {
        let n = self.grid().len();
        let spec = if which_b { &mut self.spec_b } else { &mut self.spec_a };
        for (c, plane) in spec.iter_mut().enumerate() {
            self.fft.forward(&field[c * n..(c + 1) * n], plane);
        }
    }

    /// Real field of `Gamma` applied to the spectrum in `spec_a`, written to
    /// `buf_b`. Its mean is zero.
    fn gamma_of_spec_a(&mut self) -> Result<()> {
        self.green.apply(&self.spec_a, &mut self.spec_b)?;
        let n = self.grid().len();
        for (c, plane) in self.spec_b.iter_mut().enumerate() {
            self.fft.inverse(plane, &mut self.buf_b[c * n..(c + 1) * n]);
        }
        Ok(())
    }

    fn error_of_stress(&mut self, sigma: &[f64]) -> Result<f64> {
        self.forward(sigma, true);
        spectral_error(&self.fft, self.green.frequencies(), &self.spec_b)
    }

    fn classical(&mut self, u: &[f64], out: &mut [f64], want_error: bool) -> Result<f64> {
        let n = self.grid().len();
        let ids = self.material.phase_ids();
        cellwise(ids, &self.stiffness, u, &mut self.buf_a);
        let sigma = std::mem::take(&mut self.buf_a);
        self.forward(&sigma, false);
        self.buf_a = sigma;
        let err = if want_error {
            spectral_error(&self.fft, self.green.frequencies(), &self.spec_a)?
        } else {
            f64::NAN
        };
        self.gamma_of_spec_a()?;
        let mean = component_means(u, n);
        let load = self.load.to_array();
        for c in 0..3 {
            let shift = load[c] - mean[c];
            for i in c * n..(c + 1) * n {
                out[i] = u[i] - self.buf_b[i] + shift;
            }
        }
        Ok(err)
    }

    fn polarization(
        &mut self,
        alpha: f64,
        beta: f64,
        u: &[f64],
        out: &mut [f64],
        want_error: bool,
    ) -> Result<f64> {
        let n = self.grid().len();
        let ids = self.material.phase_ids();
        // buf_a <- sigma, out <- C0 eps (used as scratch until the final step)
        cellwise(ids, &self.stiffness, u, &mut self.buf_a);
        let c0u = &mut *out;
        for cell in 0..n {
            let t = self.c0[0].apply(&SymTensor2::new(u[cell], u[n + cell], u[2 * n + cell]));
            c0u[cell] = t.t11;
            c0u[n + cell] = t.t22;
            c0u[2 * n + cell] = t.t12;
        }
        let mut sb = std::mem::take(&mut self.buf_b);
        for i in 0..3 * n {
            sb[i] = alpha * self.buf_a[i] - beta * c0u[i];
        }
        self.forward(&sb, false);
        self.buf_b = sb;
        self.gamma_of_spec_a()?;
        // buf_b <- eps_b = beta E - Gamma s_b
        let load = self.load.to_array();
        for c in 0..3 {
            for i in c * n..(c + 1) * n {
                self.buf_b[i] = beta * load[c] - self.buf_b[i];
            }
        }
        // s_a + C0 eps_b = sigma + (1 - beta) C0 eps + C0 eps_b
        let mut rhs = vec![0.0; 3 * n];
        for cell in 0..n {
            let eb = self.c0[0].apply(&SymTensor2::new(
                self.buf_b[cell],
                self.buf_b[n + cell],
                self.buf_b[2 * n + cell],
            ));
            let eb = eb.to_array();
            for c in 0..3 {
                let i = c * n + cell;
                rhs[i] = self.buf_a[i] + (1.0 - beta) * out[i] + eb[c];
            }
        }
        cellwise(ids, &self.polar_inverse, &rhs, out);
        if want_error {
            let sigma = std::mem::take(&mut self.buf_a);
            let err = self.error_of_stress(&sigma);
            self.buf_a = sigma;
            err
        } else {
            Ok(f64::NAN)
        }
    }

    fn gradient_flow(&mut self, a: f64, u: &[f64], out: &mut [f64], want_error: bool) -> Result<f64> {
        let n = self.grid().len();
        let n3 = 3 * n;
        let ids = self.material.phase_ids();
        let (eps, tau) = u.split_at(n3);
        let (eps_out, tau_out) = out.split_at_mut(n3);
        // descent along d^+ tau - eps, kept in the range of d
        cellwise(ids, &self.contrast_pinv, tau, &mut self.buf_a);
        for i in 0..n3 {
            self.buf_a[i] = tau[i] - a * (self.buf_a[i] - eps[i]);
        }
        cellwise(ids, &self.contrast_range, &self.buf_a, tau_out);
        self.forward(tau_out, false);
        self.gamma_of_spec_a()?;
        let load = self.load.to_array();
        for c in 0..3 {
            for i in c * n..(c + 1) * n {
                eps_out[i] = load[c] - self.buf_b[i];
            }
        }
        if want_error {
            cellwise(ids, &self.stiffness, eps, &mut self.buf_a);
            let sigma = std::mem::take(&mut self.buf_a);
            let err = self.error_of_stress(&sigma);
            self.buf_a = sigma;
            err
        } else {
            Ok(f64::NAN)
        }
    }

    fn step(&mut self, u: &[f64], out: &mut [f64], want_error: bool) -> Result<f64> {
        if u.len() != self.len() || out.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: if u.len() != self.len() { u.len() } else { out.len() },
            });
        }
        match self.scheme {
            Scheme::Classical => self.classical(u, out, want_error),
            Scheme::Polarization { alpha, beta } => {
                self.polarization(alpha, beta, u, out, want_error)
            }
            Scheme::GradientFlow { a } => self.gradient_flow(a, u, out, want_error),
        }
    }

    /// Equilibrium error of the stress `C eps` for the strain part of
    /// `state`.
    pub fn residual(&mut self, state: &[f64]) -> Result<f64> {
        let n3 = 3 * self.grid().len();
        if state.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: state.len(),
            });
        }
        let ids = self.material.phase_ids();
        cellwise(ids, &self.stiffness, &state[..n3], &mut self.buf_a);
        let sigma = std::mem::take(&mut self.buf_a);
        let err = self.error_of_stress(&sigma);
        self.buf_a = sigma;
        err
    }
}

impl FixedPointMap for SpectralOperator<'_> {
    fn len(&self) -> usize {
        3 * self.scheme.fields_in_state() * self.material.grid().len()
    }

    fn apply(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.step(u, out, false).map(|_| ())
    }

    fn apply_with_residual(&mut self, u: &[f64], out: &mut [f64]) -> Result<f64> {
        self.step(u, out, true)
    }
}

fn check_grid(material: &MaterialField, field: &TensorField2) -> Result<()> {
    material.grid().check_same(field.grid())
}

/// One classical step: `eps <- eps - Gamma(C eps)` at nonzero frequencies
/// with the mean set to the load.
pub fn classical_step(
    material: &MaterialField,
    medium: &ReferenceMedium,
    load: &LoadCase,
    eps: &TensorField2,
) -> Result<TensorField2> {
    check_grid(material, eps)?;
    let mut op = SpectralOperator::new(material, medium, load, Scheme::Classical)?;
    let mut out = vec![0.0; op.len()];
    op.apply(eps.as_flat(), &mut out)?;
    TensorField2::from_flat(*material.grid(), out)
}

/// One polarization step with relaxation parameters `alpha`, `beta`.
pub fn polarization_step(
    material: &MaterialField,
    medium: &ReferenceMedium,
    load: &LoadCase,
    eps: &TensorField2,
    alpha: f64,
    beta: f64,
) -> Result<TensorField2> {
    check_grid(material, eps)?;
    let mut op = SpectralOperator::new(material, medium, load, Scheme::Polarization { alpha, beta })?;
    let mut out = vec![0.0; op.len()];
    op.apply(eps.as_flat(), &mut out)?;
    TensorField2::from_flat(*material.grid(), out)
}

/// One explicit gradient-flow step on `(eps, tau)`; returns the new pair.
pub fn gradient_flow_step(
    material: &MaterialField,
    medium: &ReferenceMedium,
    load: &LoadCase,
    eps: &TensorField2,
    tau: &TensorField2,
    a: f64,
) -> Result<(TensorField2, TensorField2)> {
    check_grid(material, eps)?;
    check_grid(material, tau)?;
    let mut op = SpectralOperator::new(material, medium, load, Scheme::GradientFlow { a })?;
    let mut state = eps.as_flat().to_vec();
    state.extend_from_slice(tau.as_flat());
    let mut out = vec![0.0; op.len()];
    op.apply(&state, &mut out)?;
    let tau_out = out.split_off(3 * material.grid().len());
    Ok((
        TensorField2::from_flat(*material.grid(), out)?,
        TensorField2::from_flat(*material.grid(), tau_out)?,
    ))
}

/// Strain `E - Gamma(tau)` solving the reference problem with
/// polarization `tau`.
pub fn constrained_strain(
    medium: &ReferenceMedium,
    load: &LoadCase,
    tau: &TensorField2,
) -> Result<TensorField2> {
    let grid = *tau.grid();
    let n = grid.len();
    let green = GreenOperator::new(*medium, &grid);
    let mut fft = Fft2::new(grid.nx, grid.ny);
    let mut spec = zero_spectrum(fft.spectrum_len());
    for (c, plane) in spec.iter_mut().enumerate() {
        fft.forward(tau.component(c), plane);
    }
    let mut out = zero_spectrum(fft.spectrum_len());
    green.apply(&spec, &mut out)?;
    let mut eps = TensorField2::zeros(grid);
    let load = load.strain.to_array();
    for (c, plane) in out.iter_mut().enumerate() {
        let dst = eps.component_mut(c);
        fft.inverse(plane, dst);
        dst.iter_mut().for_each(|v| *v = load[c] - *v);
    }
    debug_assert_eq!(eps.as_flat().len(), 3 * n);
    Ok(eps)
}

/// Normalized equilibrium residual of a stress field.
pub fn equilibrium_error(sigma: &TensorField2) -> Result<f64> {
    let grid = *sigma.grid();
    let mut fft = Fft2::new(grid.nx, grid.ny);
    let freqs = FrequencyGrid::new(&grid);
    let mut spec: SpectralField = zero_spectrum(fft.spectrum_len());
    for (c, plane) in spec.iter_mut().enumerate() {
        fft.forward(sigma.component(c), plane);
    }
    spectral_error(&fft, &freqs, &spec)
}

/// Cellwise stress `C(x) eps(x)`.
pub fn stress(material: &MaterialField, eps: &TensorField2) -> Result<TensorField2> {
    check_grid(material, eps)?;
    let mut out = TensorField2::zeros(*material.grid());
    cellwise(
        material.phase_ids(),
        material.phase_stiffness(),
        eps.as_flat(),
        out.as_flat_mut(),
    );
    Ok(out)
}

/// Cell average of `C(x) eps(x)`.
pub fn average_stress(material: &MaterialField, eps: &TensorField2) -> Result<SymTensor2> {
    Ok(stress(material, eps)?.mean())
}

/// Strain energy density `1/2 eps : C eps` per cell.
pub fn energy_density(material: &MaterialField, eps: &TensorField2) -> Result<Vec<f64>> {
    let sigma = stress(material, eps)?;
    Ok((0..material.grid().len())
        .map(|cell| 0.5 * eps.get(cell).ddot(&sigma.get(cell)))
        .collect())
}

/// Cell-averaged energy
/// `1/2 tau : d^+ tau + 1/2 eps : C0 eps - tau : E`.
///
/// The load term makes the energy stationary in `tau` (with `eps` slaved
/// through [`constrained_strain`]) exactly at `tau = d eps`.
pub fn energy(
    material: &MaterialField,
    medium: &ReferenceMedium,
    load: &LoadCase,
    tau: &TensorField2,
    eps: &TensorField2,
) -> Result<f64> {
    check_grid(material, eps)?;
    check_grid(material, tau)?;
    let c0 = medium.stiffness();
    let mut pinv = Vec::new();
    let mut range = Vec::new();
    for c in material.phase_stiffness() {
        let d = *c - c0;
        pinv.push(d.symmetric_pseudo_inverse(CONTRAST_RANK_TOL).0);
        range.push(d.symmetric_range_projector(CONTRAST_RANK_TOL));
    }
    let scale = tau.max_abs();
    let mut acc = 0.0;
    for (cell, &id) in material.phase_ids().iter().enumerate() {
        let t = tau.get(cell);
        let e = eps.get(cell);
        let outside = t - range[id as usize].apply(&t);
        if outside.norm() > 1e-10 * scale {
            return Err(Error::SingularContrast { cell });
        }
        acc += 0.5 * t.ddot(&pinv[id as usize].apply(&t)) + 0.5 * e.ddot(&c0.apply(&e))
            - t.ddot(&load.strain);
    }
    Ok(acc / material.grid().len() as f64)
}

/// Runs `config.scheme` to convergence from the initial state.
pub fn solve_fixed_point(
    material: &MaterialField,
    medium: &ReferenceMedium,
    load: &LoadCase,
    config: &FixedPointConfig,
) -> Result<(TensorField2, SolveReport)> {
    solve_fixed_point_observed(material, medium, load, config, None)
}

/// [`solve_fixed_point`] with an observer receiving each state vector.
pub fn solve_fixed_point_observed(
    material: &MaterialField,
    medium: &ReferenceMedium,
    load: &LoadCase,
    config: &FixedPointConfig,
    observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<(TensorField2, SolveReport)> {
    let mut op = SpectralOperator::new(material, medium, load, config.scheme)?;
    let u0 = op.initial_state();
    let (u, mut report) =
        iteration::iterate(&mut op, &u0, config.tolerance, config.max_iterations, observer)?;
    let eps = op.strain_of(&u)?;
    report.effective_stress = Some(average_stress(material, &eps)?);
    Ok((eps, report))
}
