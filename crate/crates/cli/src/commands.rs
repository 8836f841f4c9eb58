//! The `solve`, `sweep-contrast`, `sweep-reference` and `compare`
//! subcommands.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rpmfft::rpm::event_log;

use crate::config::{ConfigError, ExperimentConfig, Variant};
use crate::output::{
    dump_fields, file_stem, fmt_f64, fmt_opt, history_table, loglog_fit, report_cells, Table,
    REPORT_COLUMNS,
};
use crate::run::{run_all, Job, Outcome};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<rpmfft::Error> for CliError {
    fn from(e: rpmfft::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Shared run options from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub tolerance: Option<f64>,
    pub quiet: bool,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub runs: usize,
    pub converged: usize,
    pub out_dir: PathBuf,
}

fn prepare(cfg: &mut ExperimentConfig, opts: &RunOptions) -> Result<PathBuf, CliError> {
    if let Some(t) = opts.tolerance {
        cfg.tolerance = t;
    }
    cfg.validate()?;
    let dir = cfg.output_dir(opts.out.as_deref());
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn job(
    cfg: &ExperimentConfig,
    variant: Variant,
    solver_index: usize,
    n_max: Option<usize>,
    keep_field: bool,
) -> Result<Job, CliError> {
    let material = cfg.material(&variant)?;
    let medium = cfg.reference(&material, variant.reference_youngs)?;
    let solver = cfg.solvers[solver_index];
    Ok(Job {
        label: solver.label(),
        variant,
        n_max,
        material,
        medium,
        load: cfg.load_case()?,
        solver,
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
        keep_field,
    })
}

fn execute(jobs: &[Job], opts: &RunOptions) -> Vec<Outcome> {
    let total = jobs.len();
    let quiet = opts.quiet;
    let progress = move |i: usize, o: &Outcome| {
        if quiet {
            return;
        }
        let job = &jobs[i];
        let status = match (&o.report, &o.error) {
            (Some(r), _) => format!(
                "{} iterations, {}",
                r.iterations,
                if r.converged { "converged" } else { "not converged" }
            ),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => "no result".into(),
        };
        eprintln!("[{}/{total}] {}: {status}", i + 1, describe(job));
    };
    run_all(jobs, opts.workers.max(1), &progress)
}

fn describe(job: &Job) -> String {
    let mut parts = vec![job.label.clone()];
    let v = &job.variant;
    if let Some(k) = v.contrast {
        parts.push(format!("K={k}"));
    }
    if v.resolution.is_some() {
        let (nx, ny) = job.material.grid().dims();
        parts.push(format!("{nx}x{ny}"));
    }
    if let Some(r) = v.radius_ratio {
        parts.push(format!("radius={r}"));
    }
    if let Some(e) = v.reference_youngs {
        parts.push(format!("E0={e:e}"));
    }
    if let Some(n) = job.n_max {
        parts.push(format!("n_max={n}"));
    }
    parts.join(" ")
}

fn summarize(outcomes: &[Outcome], dir: PathBuf) -> Summary {
    Summary {
        runs: outcomes.len(),
        converged: outcomes.iter().filter(|o| o.converged()).count(),
        out_dir: dir,
    }
}

fn write_history(dir: &Path, stem: &str, outcome: &Outcome, rpm: bool) -> Result<(), CliError> {
    if let Some(report) = &outcome.report {
        history_table(report).write(&dir.join(format!("{stem}.history.csv")))?;
        if rpm {
            fs::write(dir.join(format!("{stem}.events.txt")), event_log(report))?;
        }
    }
    Ok(())
}

/// Solves the base configuration with every listed solver. Writes
/// `report.csv`, per-solver histories and field dumps.
pub fn solve(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<Summary, CliError> {
    let dir = prepare(&mut cfg, opts)?;
    let keep = cfg.output.fields;
    let jobs = (0..cfg.solvers.len())
        .map(|s| job(&cfg, Variant::default(), s, None, keep))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes = execute(&jobs, opts);
    write_solver_outputs(&cfg, &dir, &jobs, &outcomes)?;
    Ok(summarize(&outcomes, dir))
}

fn write_solver_outputs(
    cfg: &ExperimentConfig,
    dir: &Path,
    jobs: &[Job],
    outcomes: &[Outcome],
) -> Result<(), CliError> {
    let mut header = vec!["solver"];
    header.extend(REPORT_COLUMNS);
    let mut table = Table::new("report", &header);
    for (job, outcome) in jobs.iter().zip(outcomes) {
        let mut row = vec![job.label.clone()];
        row.extend(report_cells(outcome.report.as_ref(), outcome.error.as_deref()));
        table.push(row);
        let stem = file_stem(&job.label);
        if cfg.output.history {
            write_history(dir, &stem, outcome, job.solver.is_rpm())?;
        }
        if let Some(strain) = &outcome.strain {
            dump_fields(
                &dir.join("fields"),
                &stem,
                &job.material,
                strain,
                job.load.strain,
                cfg.output.format,
            )?;
        }
    }
    table.write(&dir.join("report.csv"))?;
    Ok(())
}

/// Runs every sweep point (contrast, resolution, radius, `n_max`) with every
/// solver and fits `log(iterations)` against `log(K)`.
pub fn sweep_contrast(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<Summary, CliError> {
    let dir = prepare(&mut cfg, opts)?;
    let s = &cfg.sweep;
    if s.contrast.is_empty() && s.resolutions.is_empty() && s.radius_ratios.is_empty() && s.n_max.is_empty() {
        return Err(ConfigError("sweep-contrast needs at least one sweep axis (sweep.contrast, resolutions, radius_ratios or n_max)".into()).into());
    }
    if s.contrast.iter().any(|&k| k <= 0.0) {
        return Err(ConfigError("contrast values must be positive".into()).into());
    }
    let mut jobs = Vec::new();
    for variant in cfg.variants() {
        for (si, solver) in cfg.solvers.iter().enumerate() {
            let n_max_axis: Vec<Option<usize>> = if solver.is_rpm() && !cfg.sweep.n_max.is_empty() {
                cfg.sweep.n_max.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for n_max in n_max_axis {
                jobs.push(job(&cfg, variant, si, n_max, false)?);
            }
        }
    }
    let outcomes = execute(&jobs, opts);

    let mut header = vec!["contrast", "nx", "ny", "radius_ratio", "fiber_fraction", "n_max", "solver"];
    header.extend(REPORT_COLUMNS);
    let mut table = Table::new("sweep-contrast", &header);
    // (solver, nx, radius, n_max) -> [(K, iterations)] of converged runs
    let mut series: BTreeMap<(String, usize, String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for (job, outcome) in jobs.iter().zip(&outcomes) {
        let (nx, ny) = job.material.grid().dims();
        let n_max = job
            .solver
            .rpm_config(job.tolerance, job.max_iterations, job.n_max)
            .map(|c| c.n_max.to_string())
            .unwrap_or_default();
        let radius = fmt_opt(job.variant.radius_ratio);
        let mut row = vec![
            fmt_opt(job.variant.contrast),
            nx.to_string(),
            ny.to_string(),
            radius.clone(),
            fmt_f64(1.0 - job.material.volume_fraction(0)),
            n_max.clone(),
            job.label.clone(),
        ];
        row.extend(report_cells(outcome.report.as_ref(), outcome.error.as_deref()));
        table.push(row);
        if let (Some(k), Some(r)) = (job.variant.contrast, &outcome.report) {
            if r.converged {
                series
                    .entry((job.label.clone(), nx, radius, n_max))
                    .or_default()
                    .push((k, r.iterations as f64));
            }
        }
    }
    let mut fits = Table::new(
        "sweep-contrast-fit",
        &["solver", "nx", "radius_ratio", "n_max", "slope", "intercept", "points"],
    );
    for ((solver, nx, radius, n_max), pts) in &series {
        if let Some((slope, intercept)) = loglog_fit(pts) {
            table.trailer.push(format!(
                "fit solver={solver} nx={nx} radius_ratio={radius} n_max={n_max} slope={slope:.4} intercept={intercept:.4} points={}",
                pts.len()
            ));
            fits.push(vec![
                solver.clone(),
                nx.to_string(),
                radius.clone(),
                n_max.clone(),
                format!("{slope:.6}"),
                format!("{intercept:.6}"),
                pts.len().to_string(),
            ]);
            if !opts.quiet {
                eprintln!("fit {solver} nx={nx}: iterations ~ K^{slope:.3} over {} points", pts.len());
            }
        }
    }
    table.write(&dir.join("sweep_contrast.csv"))?;
    fits.write(&dir.join("sweep_contrast_fit.csv"))?;
    Ok(summarize(&outcomes, dir))
}

/// Runs every solver for each reference modulus and reports the spread of
/// iteration counts.
pub fn sweep_reference(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<Summary, CliError> {
    let dir = prepare(&mut cfg, opts)?;
    if cfg.sweep.reference_moduli.is_empty() && cfg.sweep.reference_factors.is_empty() {
        return Err(ConfigError("sweep-reference needs sweep.reference_moduli or sweep.reference_factors".into()).into());
    }
    let mut jobs = Vec::new();
    let mut averages = Vec::new();
    for base in cfg.variants() {
        let material = cfg.material(&base)?;
        let avg = ExperimentConfig::average_modulus(&material);
        for e0 in cfg.reference_list(&material)? {
            let variant = Variant {
                reference_youngs: Some(e0),
                ..base
            };
            for si in 0..cfg.solvers.len() {
                jobs.push(job(&cfg, variant, si, None, false)?);
                averages.push(avg);
            }
        }
    }
    let outcomes = execute(&jobs, opts);

    let mut header = vec!["contrast", "nx", "ny", "reference_youngs", "reference_factor", "solver"];
    header.extend(REPORT_COLUMNS);
    let mut table = Table::new("sweep-reference", &header);
    // (contrast, nx, solver) -> [(iterations, converged)]
    let mut groups: BTreeMap<(String, usize, String), Vec<(usize, bool)>> = BTreeMap::new();
    for ((job, outcome), avg) in jobs.iter().zip(&outcomes).zip(&averages) {
        let (nx, ny) = job.material.grid().dims();
        let e0 = job.variant.reference_youngs.unwrap_or(f64::NAN);
        let mut row = vec![
            fmt_opt(job.variant.contrast),
            nx.to_string(),
            ny.to_string(),
            fmt_f64(e0),
            format!("{:.6}", e0 / avg),
            job.label.clone(),
        ];
        row.extend(report_cells(outcome.report.as_ref(), outcome.error.as_deref()));
        table.push(row);
        let entry = groups
            .entry((fmt_opt(job.variant.contrast), nx, job.label.clone()))
            .or_default();
        match &outcome.report {
            Some(r) => entry.push((r.iterations, r.converged)),
            None => entry.push((0, false)),
        }
    }
    let mut summary = Table::new(
        "sweep-reference-summary",
        &["contrast", "nx", "solver", "min_iterations", "max_iterations", "ratio", "all_converged"],
    );
    for ((contrast, nx, solver), runs) in &groups {
        let lo = runs.iter().map(|r| r.0).min().unwrap_or(0);
        let hi = runs.iter().map(|r| r.0).max().unwrap_or(0);
        let all = runs.iter().all(|r| r.1);
        let ratio = if lo > 0 { hi as f64 / lo as f64 } else { f64::INFINITY };
        table.trailer.push(format!(
            "summary contrast={contrast} nx={nx} solver={solver} min={lo} max={hi} ratio={ratio:.3} all_converged={all}"
        ));
        summary.push(vec![
            contrast.clone(),
            nx.to_string(),
            solver.clone(),
            lo.to_string(),
            hi.to_string(),
            format!("{ratio:.4}"),
            all.to_string(),
        ]);
    }
    table.write(&dir.join("sweep_reference.csv"))?;
    summary.write(&dir.join("sweep_reference_summary.csv"))?;
    Ok(summarize(&outcomes, dir))
}

/// Solves the base configuration with each solver and tabulates pairwise
/// strain differences.
pub fn compare(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<Summary, CliError> {
    if cfg.solvers.len() < 2 {
        return Err(ConfigError("compare needs at least two solvers".into()).into());
    }
    let dir = prepare(&mut cfg, opts)?;
    let jobs = (0..cfg.solvers.len())
        .map(|s| job(&cfg, Variant::default(), s, None, true))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes = execute(&jobs, opts);
    // The comparison always needs the fields; dumping them is optional.
    let written: Vec<Outcome> = outcomes
        .iter()
        .map(|o| Outcome {
            strain: if cfg.output.fields { o.strain.clone() } else { None },
            ..o.clone()
        })
        .collect();
    write_solver_outputs(&cfg, &dir, &jobs, &written)?;

    let scale = cfg.load.strain().to_array().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut pairs = Table::new(
        "compare-pairs",
        &["solver_a", "solver_b", "converged_a", "converged_b", "max_abs_difference", "relative_difference"],
    );
    for i in 0..jobs.len() {
        for j in i + 1..jobs.len() {
            let (a, b) = (&outcomes[i], &outcomes[j]);
            let diff = match (&a.strain, &b.strain) {
                (Some(x), Some(y)) => Some(x.max_abs_diff(y)?),
                _ => None,
            };
            pairs.push(vec![
                jobs[i].label.clone(),
                jobs[j].label.clone(),
                a.converged().to_string(),
                b.converged().to_string(),
                fmt_opt(diff),
                fmt_opt(diff.map(|d| d / scale)),
            ]);
        }
    }
    pairs.write(&dir.join("compare_pairs.csv"))?;
    Ok(summarize(&outcomes, dir))
}
