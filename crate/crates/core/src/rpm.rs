//! Recursive Projection Method around an arbitrary fixed-point map.
//!
//! The iterate is split as `u = Z z + q` with `Z` an orthonormal basis of the
//! slowly converging or divergent subspace. Newton steps are taken on the
//! coordinates `z` using the projected Jacobian `H = Z^T F_u Z`, while `q`
//! follows the plain fixed-point map. The basis grows from differences of
//! successive `q` iterates whenever `n_max` iterations pass without reaching
//! the tolerance.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TensorField2;
use crate::greens::ReferenceMedium;
use crate::iteration::{check_tolerance, FixedPointMap, GrowthEvent, SolveReport, Termination};
use crate::microstructure::MaterialField;
use crate::spectral::{average_stress, LoadCase, Scheme, SpectralOperator};

/// Norm below which a stable-space difference carries no direction.
pub const STAGNATION_NORM: f64 = 1e-14;

/// Pivot of `I - H`, relative to `1 + max|H|`, below which the Newton
/// system counts as singular.
pub const SINGULAR_PIVOT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpmConfig {
    /// Fixed-point iterations between basis enlargements.
    pub n_max: usize,
    pub tolerance: f64,
    /// Cap on the basis dimension; `0` disables the projection entirely.
    pub max_basis: usize,
    /// `|T11| / |T22|` at or above which only one vector is added.
    pub growth_ratio: f64,
    /// Finite-difference step; `None` uses `sqrt(eps) * (1 + |u|_inf)`.
    pub fd_step: Option<f64>,
    pub max_outer: usize,
}

impl Default for RpmConfig {
    fn default() -> Self {
        Self {
            n_max: 10,
            tolerance: 1e-4,
            max_basis: 100,
            growth_ratio: 10.0,
            fd_step: None,
            max_outer: 10_000,
        }
    }
}

impl RpmConfig {
    pub fn validate(&self) -> Result<()> {
        check_tolerance(self.tolerance, self.max_outer)?;
        if self.n_max < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_max must be at least 2, got {}",
                self.n_max
            )));
        }
        if !(self.growth_ratio > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "growth ratio must exceed 1, got {}",
                self.growth_ratio
            )));
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "finite-difference step must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Removes the components along `basis` from `v`, twice for stability.
fn orthogonalize(basis: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            axpy(-c, b, v);
        }
    }
}

/// Mutable data of one RPM solve.
#[derive(Debug, Clone)]
pub struct RpmState {
    /// Orthonormal columns of `Z`.
    pub basis: Vec<Vec<f64>>,
    /// Columns of `F_u Z`.
    pub jacobian_basis: Vec<Vec<f64>>,
    /// `H = Z^T F_u Z`.
    pub projected: DMatrix<f64>,
    /// Stable component `q = (I - Z Z^T) u` of the current iterate.
    pub q: Vec<f64>,
    /// Iterations since the last enlargement.
    pub nu: usize,
    /// Last two stable-space differences, most recent last.
    pub dq: Vec<Vec<f64>>,
}

impl RpmState {
    pub fn new(u: &[f64]) -> Self {
        Self {
            basis: Vec::new(),
            jacobian_basis: Vec::new(),
            projected: DMatrix::zeros(0, 0),
            q: u.to_vec(),
            nu: 0,
            dq: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Coordinates `Z^T v`.
    pub fn coordinates(&self, v: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.basis.len(), self.basis.iter().map(|b| dot(b, v)))
    }

    /// `(Z^T a, Z^T b)` with one pass over each basis vector.
    pub fn coordinates_pair(&self, a: &[f64], b: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let m = self.basis.len();
        let mut za = DVector::zeros(m);
        let mut zb = DVector::zeros(m);
        for (j, z) in self.basis.iter().enumerate() {
            let (mut sa, mut sb) = (0.0, 0.0);
            for ((z, a), b) in z.iter().zip(a).zip(b) {
                sa += z * a;
                sb += z * b;
            }
            za[j] = sa;
            zb[j] = sb;
        }
        (za, zb)
    }

    /// Largest entry of `|Z^T Z - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.basis.len();
        let mut worst = 0.0_f64;
        for i in 0..m {
            for j in 0..m {
                let g = dot(&self.basis[i], &self.basis[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// Outcome of one basis enlargement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub added: usize,
    pub diagonal_ratio: f64,
}

/// Appends one or two orthonormal vectors to `basis` from the QR factor of
/// `D = [dq_curr, dq_prev]`.
///
/// One vector is added when `|T11| / |T22| >= growth_ratio` or `T22 = 0`,
/// two otherwise; at most `max_add` are added.
pub fn grow_basis(
    dq_prev: &[f64],
    dq_curr: &[f64],
    basis: &mut Vec<Vec<f64>>,
    growth_ratio: f64,
    max_add: usize,
) -> Result<Growth> {
    let mut d1 = dq_curr.to_vec();
    let mut d2 = dq_prev.to_vec();
    orthogonalize(basis, &mut d1);
    orthogonalize(basis, &mut d2);
    let t11 = norm(&d1);
    if t11 < STAGNATION_NORM {
        return Err(Error::NoGrowthSignal);
    }
    d1.iter_mut().for_each(|v| *v /= t11);
    let t12 = dot(&d1, &d2);
    axpy(-t12, &d1, &mut d2);
    // second Gram-Schmidt pass against the first column
    let c = dot(&d1, &d2);
    axpy(-c, &d1, &mut d2);
    let t22 = norm(&d2);
    let ratio = if t22 == 0.0 { f64::INFINITY } else { t11 / t22 };
    let want = if t22 <= f64::EPSILON * t11 || ratio >= growth_ratio {
        1
    } else {
        2
    };
    let mut added = 0;
    if max_add > 0 {
        basis.push(d1);
        added += 1;
    }
    if want == 2 && added < max_add {
        d2.iter_mut().for_each(|v| *v /= t22);
        orthogonalize(basis, &mut d2);
        let n2 = norm(&d2);
        if n2 > 1e-8 {
            d2.iter_mut().for_each(|v| *v /= n2);
            basis.push(d2);
            added += 1;
        }
    }
    Ok(Growth {
        added,
        diagonal_ratio: ratio,
    })
}

fn default_step(u: &[f64]) -> f64 {
    let inf = u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    f64::EPSILON.sqrt() * (1.0 + inf)
}

/// Forward-difference columns `(F(u + h z_j) - F(u)) / h`, given
/// `f_u = F(u)`.
pub fn jacobian_times_basis<M: FixedPointMap + ?Sized>(
    map: &mut M,
    u: &[f64],
    f_u: &[f64],
    columns: &[Vec<f64>],
    h: Option<f64>,
) -> Result<Vec<Vec<f64>>> {
    let h = h.unwrap_or_else(|| default_step(u));
    let mut probe = vec![0.0; u.len()];
    let mut out = Vec::with_capacity(columns.len());
    for z in columns {
        probe.copy_from_slice(u);
        axpy(h, z, &mut probe);
        let mut f = vec![0.0; u.len()];
        map.apply(&probe, &mut f)?;
        f.iter_mut().zip(f_u).for_each(|(a, b)| *a = (*a - b) / h);
        out.push(f);
    }
    Ok(out)
}

/// `H = Z^T W` for basis `Z` and `W = F_u Z`.
pub fn projected_jacobian(basis: &[Vec<f64>], jacobian_basis: &[Vec<f64>]) -> DMatrix<f64> {
    let m = basis.len();
    DMatrix::from_fn(m, m, |i, j| dot(&basis[i], &jacobian_basis[j]))
}

/// Newton step on the basis coordinates: `z + (I - H)^-1 (zeta - z)`.
pub fn newton_update(z: &DVector<f64>, zeta: &DVector<f64>, h: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = z.len();
    if m == 0 {
        return Ok(z.clone());
    }
    let a = DMatrix::identity(m, m) - h;
    let lu = a.clone().full_piv_lu();
    let u = lu.u();
    let smallest = (0..m).fold(f64::INFINITY, |lo, i| lo.min(u[(i, i)].abs()));
    let scale = 1.0 + h.amax();
    if !(smallest > SINGULAR_PIVOT * scale) {
        return Err(Error::SingularProjectedJacobian);
    }
    let delta = lu
        .solve(&(zeta - z))
        .ok_or(Error::SingularProjectedJacobian)?;
    Ok(z + delta)
}

/// Runs the RPM iteration from `u0`.
///
/// Each outer iteration evaluates `F` once, at the new iterate; the residual
/// reported for iteration `i` is that of the iterate `u_i`. Finite-difference
/// probes for new basis columns are counted in `map_evaluations`.
pub fn rpm_solve<M: FixedPointMap + ?Sized>(
    map: &mut M,
    u0: &[f64],
    config: &RpmConfig,
    observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<(Vec<f64>, SolveReport)> {
    rpm_solve_with_state(map, u0, config, observer).map(|(u, report, _)| (u, report))
}

/// [`rpm_solve`] that also returns the final basis and projected Jacobian.
pub fn rpm_solve_with_state<M: FixedPointMap + ?Sized>(
    map: &mut M,
    u0: &[f64],
    config: &RpmConfig,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<(Vec<f64>, SolveReport, RpmState)> {
    config.validate()?;
    let n = map.len();
    if u0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: u0.len(),
        });
    }
    let start = Instant::now();
    let mut report = SolveReport::new();
    let mut state = RpmState::new(u0);
    let mut u = u0.to_vec();
    let mut xi = vec![0.0; n];
    let mut residual = map.apply_with_residual(&u, &mut xi)?;
    report.map_evaluations += 1;
    let mut refreshed = false;
    loop {
        if report.iterations > 0 {
            report.residual_history.push(residual);
            if !residual.is_finite() {
                report.termination = Termination::Diverged;
                break;
            }
            if residual <= config.tolerance {
                report.converged = true;
                report.termination = Termination::Converged;
                break;
            }
        }
        if report.iterations == config.max_outer {
            break;
        }

        let (q_new, u_new) = if state.dim() == 0 {
            (xi.clone(), xi.clone())
        } else {
            let (z, zeta) = state.coordinates_pair(&u, &xi);
            let z_new = match newton_update(&z, &zeta, &state.projected) {
                Ok(v) => v,
                Err(Error::SingularProjectedJacobian) if !refreshed => {
                    refreshed = true;
                    state.jacobian_basis =
                        jacobian_times_basis(map, &u, &xi, &state.basis, config.fd_step)?;
                    report.map_evaluations += state.dim();
                    state.projected = projected_jacobian(&state.basis, &state.jacobian_basis);
                    match newton_update(&z, &zeta, &state.projected) {
                        Ok(v) => v,
                        Err(e) => {
                            report.termination = Termination::SingularJacobian;
                            report.note = Some(e.to_string());
                            break;
                        }
                    }
                }
                Err(e) => {
                    report.termination = Termination::SingularJacobian;
                    report.note = Some(e.to_string());
                    break;
                }
            };
            // q' = xi - Z zeta and u' = Z z' + q' = xi + Z (z' - zeta), in one
            // sweep over the basis.
            let mut q_new = xi.clone();
            let mut u_new = xi.clone();
            for (j, b) in state.basis.iter().enumerate() {
                let (cq, cu) = (zeta[j], z_new[j] - zeta[j]);
                for ((q, u), b) in q_new.iter_mut().zip(u_new.iter_mut()).zip(b) {
                    *q -= cq * b;
                    *u += cu * b;
                }
            }
            (q_new, u_new)
        };
        if config.max_basis > 0 {
            let dq: Vec<f64> = q_new.iter().zip(&state.q).map(|(a, b)| a - b).collect();
            if state.dq.len() == 2 {
                state.dq.remove(0);
            }
            state.dq.push(dq);
        }
        state.q = q_new;
        u = u_new;
        report.iterations += 1;
        state.nu += 1;
        if let Some(obs) = observer.as_mut() {
            obs(report.iterations, &u);
        }
        residual = map.apply_with_residual(&u, &mut xi)?;
        report.map_evaluations += 1;

        if state.nu > config.n_max
            && state.dim() < config.max_basis
            && residual > config.tolerance
            && state.dq.len() == 2
        {
            let old = state.dim();
            let growth = match grow_basis(
                &state.dq[0],
                &state.dq[1],
                &mut state.basis,
                config.growth_ratio,
                config.max_basis - old,
            ) {
                Ok(g) => g,
                Err(Error::NoGrowthSignal) => {
                    report.residual_history.push(residual);
                    report.termination = Termination::Stagnated;
                    report.note = Some(Error::NoGrowthSignal.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            let fresh = jacobian_times_basis(map, &u, &xi, &state.basis[old..], config.fd_step)?;
            report.map_evaluations += fresh.len();
            state.jacobian_basis.extend(fresh);
            let m = state.dim();
            let mut h = DMatrix::zeros(m, m);
            h.view_mut((0, 0), (old, old)).copy_from(&state.projected);
            for i in 0..m {
                for j in 0..m {
                    if i >= old || j >= old {
                        h[(i, j)] = dot(&state.basis[i], &state.jacobian_basis[j]);
                    }
                }
            }
            state.projected = h;
            let z = state.coordinates(&u);
            state.q = u.clone();
            for (j, b) in state.basis.iter().enumerate() {
                axpy(-z[j], b, &mut state.q);
            }
            state.nu = 0;
            state.dq.clear();
            report.growth_events.push(GrowthEvent {
                iteration: report.iterations,
                added: growth.added,
                basis_size: m,
                diagonal_ratio: growth.diagonal_ratio,
            });
        }
    }
    report.basis_size = state.dim();
    report.elapsed = start.elapsed().as_secs_f64();
    Ok((u, report, state))
}

/// RPM around one of the FFT schemes, started from `eps = E`.
pub fn solve_rpm(
    material: &MaterialField,
    medium: &ReferenceMedium,
    load: &LoadCase,
    scheme: Scheme,
    config: &RpmConfig,
) -> Result<(TensorField2, SolveReport)> {
    solve_rpm_observed(material, medium, load, scheme, config, None)
}

pub fn solve_rpm_observed(
    material: &MaterialField,
    medium: &ReferenceMedium,
    load: &LoadCase,
    scheme: Scheme,
    config: &RpmConfig,
    observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<(TensorField2, SolveReport)> {
    let mut op = SpectralOperator::new(material, medium, load, scheme)?;
    let u0 = op.initial_state();
    let (u, mut report) = rpm_solve(&mut op, &u0, config, observer)?;
    let eps = op.strain_of(&u)?;
    report.effective_stress = Some(average_stress(material, &eps)?);
    Ok((eps, report))
}

/// One line per iteration: iteration, residual and basis size, with growth
/// events appended to the iteration they follow.
pub fn event_log(report: &SolveReport) -> String {
    let mut out = String::from("# iteration residual basis_size event\n");
    let mut basis = 0;
    let mut events = report.growth_events.iter().peekable();
    for (i, r) in report.residual_history.iter().enumerate() {
        let iteration = i + 1;
        let _ = write!(out, "{iteration} {r:.6e} {basis}");
        while let Some(e) = events.next_if(|e| e.iteration == iteration) {
            basis = e.basis_size;
            let _ = write!(out, " grow+{} ratio={:.3e} size={}", e.added, e.diagonal_ratio, e.basis_size);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "# termination {:?}", report.termination);
    out
}
