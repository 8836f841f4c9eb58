//! Independent solver runs and a small worker pool.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rpmfft::field::TensorField2;
use rpmfft::greens::ReferenceMedium;
use rpmfft::iteration::SolveReport;
use rpmfft::microstructure::MaterialField;
use rpmfft::rpm::solve_rpm;
use rpmfft::spectral::{solve_fixed_point, FixedPointConfig, LoadCase};

use crate::config::{SolverSpec, Variant};

/// One solve with everything it needs.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub variant: Variant,
    pub n_max: Option<usize>,
    pub material: MaterialField,
    pub medium: ReferenceMedium,
    pub load: LoadCase,
    pub solver: SolverSpec,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Keep the strain field in the outcome.
    pub keep_field: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Option<SolveReport>,
    pub strain: Option<TensorField2>,
    /// Solver error that prevented a report.
    pub error: Option<String>,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.converged)
    }
}

pub fn run_job(job: &Job) -> Outcome {
    let result = match job.solver.rpm_config(job.tolerance, job.max_iterations, job.n_max) {
        Some(config) => solve_rpm(&job.material, &job.medium, &job.load, job.solver.scheme(), &config),
        None => {
            let config = FixedPointConfig {
                tolerance: job.tolerance,
                max_iterations: job.max_iterations,
                scheme: job.solver.scheme(),
            };
            solve_fixed_point(&job.material, &job.medium, &job.load, &config)
        }
    };
    match result {
        Ok((strain, report)) => Outcome {
            report: Some(report),
            strain: job.keep_field.then_some(strain),
            error: None,
        },
        Err(e) => Outcome {
            report: None,
            strain: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs `jobs` on up to `workers` threads. Outcomes come back in job order
/// whatever order they finish in; `on_done` is called as each finishes.
pub fn run_all(jobs: &[Job], workers: usize, on_done: &(dyn Fn(usize, &Outcome) + Sync)) -> Vec<Outcome> {
    let workers = workers.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new(vec![None; jobs.len()]);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let outcome = run_job(&jobs[i]);
                on_done(i, &outcome);
                slots.lock().expect("result lock")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}
