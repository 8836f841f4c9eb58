//! Generic fixed-point maps on flat vectors and the plain iteration driver.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::SymTensor2;

/// A map `F: R^N -> R^N` whose fixed point is sought, together with the
/// convergence residual of its argument.
pub trait FixedPointMap {
    /// Dimension `N`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `F(u)` into `out`.
    fn apply(&mut self, u: &[f64], out: &mut [f64]) -> Result<()>;

    /// Writes `F(u)` into `out` and returns the residual of `u` itself.
    ///
    /// The default residual is `||F(u) - u|| / max(||u||, 1)`.
    fn apply_with_residual(&mut self, u: &[f64], out: &mut [f64]) -> Result<f64> {
        self.apply(u, out)?;
        let diff = u
            .iter()
            .zip(out.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = u.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        Ok(diff / scale)
    }
}

/// Why an iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationLimit,
    /// The residual became NaN or infinite.
    Diverged,
    /// Successive stable-space differences vanished while the residual was
    /// still above tolerance.
    Stagnated,
    /// The projected Newton system stayed singular after a recompute.
    SingularJacobian,
}

/// One enlargement of the unstable basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthEvent {
    /// Outer iteration after which the basis grew.
    pub iteration: usize,
    pub added: usize,
    pub basis_size: usize,
    /// `|T11| / |T22|` of the QR factor, infinite when `T22 = 0`.
    pub diagonal_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Residual of iterate `i` at index `i - 1`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
    /// Informational only.
    pub elapsed: f64,
    /// Total evaluations of the map, including finite-difference probes.
    pub map_evaluations: usize,
    /// Mean stress of the returned iterate, when the map is a mechanics
    /// problem.
    pub effective_stress: Option<SymTensor2>,
    pub growth_events: Vec<GrowthEvent>,
    pub basis_size: usize,
    /// Diagnostic message for abnormal termination.
    pub note: Option<String>,
}

impl SolveReport {
    pub(crate) fn new() -> Self {
        Self {
            iterations: 0,
            residual_history: Vec::new(),
            converged: false,
            termination: Termination::IterationLimit,
            elapsed: 0.0,
            map_evaluations: 0,
            effective_stress: None,
            growth_events: Vec::new(),
            basis_size: 0,
            note: None,
        }
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }
}

pub(crate) fn check_tolerance(tolerance: f64, max_iterations: usize) -> Result<()> {
    if !(tolerance > 0.0) || !tolerance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    if max_iterations < 1 {
        return Err(Error::InvalidParameter(
            "max_iterations must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Plain fixed-point iteration `u <- F(u)` from `u0`.
///
/// The iteration count is the number of steps taken; the residual of step
/// `i` is the residual of iterate `u_i`. `observer` sees every iterate
/// `u_1, u_2, ...` as it is produced.
pub fn iterate<M: FixedPointMap + ?Sized>(
    map: &mut M,
    u0: &[f64],
    tolerance: f64,
    max_iterations: usize,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<(Vec<f64>, SolveReport)> {
    check_tolerance(tolerance, max_iterations)?;
    if u0.len() != map.len() {
        return Err(Error::DimensionMismatch {
            expected: map.len(),
            found: u0.len(),
        });
    }
    let start = Instant::now();
    let mut report = SolveReport::new();
    let mut u = u0.to_vec();
    let mut next = vec![0.0; u.len()];
    loop {
        let residual = map.apply_with_residual(&u, &mut next)?;
        report.map_evaluations += 1;
        if report.iterations > 0 {
            report.residual_history.push(residual);
            if !residual.is_finite() {
                report.termination = Termination::Diverged;
                break;
            }
            if residual <= tolerance {
                report.converged = true;
                report.termination = Termination::Converged;
                break;
            }
        }
        if report.iterations == max_iterations {
            break;
        }
        std::mem::swap(&mut u, &mut next);
        report.iterations += 1;
        if let Some(obs) = observer.as_mut() {
            obs(report.iterations, &u);
        }
    }
    report.elapsed = start.elapsed().as_secs_f64();
    Ok((u, report))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// `F(u) = A u + b` with a dense row-major `A`.
    pub struct LinearMap {
        pub n: usize,
        pub a: Vec<f64>,
        pub b: Vec<f64>,
    }

    impl FixedPointMap for LinearMap {
        fn len(&self) -> usize {
            self.n
        }

        fn apply(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.b[i]
                    + self.a[i * self.n..(i + 1) * self.n]
                        .iter()
                        .zip(u)
                        .map(|(x, y)| x * y)
                        .sum::<f64>();
            }
            Ok(())
        }
    }

    #[test]
    fn contraction_converges() {
        let mut map = LinearMap {
            n: 2,
            a: vec![0.5, 0.0, 0.0, 0.25],
            b: vec![1.0, 3.0],
        };
        let (u, report) = iterate(&mut map, &[0.0, 0.0], 1e-12, 200, None).unwrap();
        assert!(report.converged);
        assert!((u[0] - 2.0).abs() < 1e-11 && (u[1] - 4.0).abs() < 1e-11);
        assert_eq!(report.residual_history.len(), report.iterations);
        assert_eq!(report.map_evaluations, report.iterations + 1);
    }

    #[test]
    fn fixed_point_start_takes_one_step() {
        let mut map = LinearMap {
            n: 1,
            a: vec![0.5],
            b: vec![1.0],
        };
        let (_, report) = iterate(&mut map, &[2.0], 1e-12, 10, None).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
    }

    #[test]
    fn expanding_map_hits_the_limit() {
        let mut map = LinearMap {
            n: 1,
            a: vec![-1.5],
            b: vec![1.0],
        };
        let (_, report) = iterate(&mut map, &[0.0], 1e-8, 20, None).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 20);
        assert_eq!(report.termination, Termination::IterationLimit);
    }

    #[test]
    fn observer_sees_each_iterate() {
        let mut map = LinearMap {
            n: 1,
            a: vec![0.5],
            b: vec![0.0],
        };
        let mut seen = Vec::new();
        let mut obs = |i: usize, u: &[f64]| seen.push((i, u[0]));
        iterate(&mut map, &[1.0], 1e-3, 3, Some(&mut obs)).unwrap();
        assert_eq!(seen, vec![(1, 0.5), (2, 0.25), (3, 0.125)]);
    }

    #[test]
    fn rejects_bad_config() {
        let mut map = LinearMap {
            n: 1,
            a: vec![0.5],
            b: vec![0.0],
        };
        assert!(iterate(&mut map, &[1.0], 0.0, 3, None).is_err());
        assert!(iterate(&mut map, &[1.0], 1e-3, 0, None).is_err());
        assert!(iterate(&mut map, &[1.0, 2.0], 1e-3, 3, None).is_err());
    }
}
