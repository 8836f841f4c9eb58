//! CSV tables, fits and field dumps.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rpmfft::field::{write_field, write_planes, write_planes_csv, TensorField2};
use rpmfft::iteration::SolveReport;
use rpmfft::microstructure::MaterialField;
use rpmfft::spectral::{energy_density, stress};
use rpmfft::tensor::SymTensor2;

use crate::config::DumpFormat;

/// Version of every CSV layout written by this crate.
pub const CSV_VERSION: u32 = 1;

/// A CSV table whose first line is `# rpmfft <kind> v<version>`, followed
/// by a header row, data rows and optional trailing `#` comment lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub trailer: Vec<String>,
}

impl Table {
    pub fn new(kind: &'static str, header: &[&str]) -> Self {
        Self {
            kind,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            trailer: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> io::Result<String> {
        let mut out = format!("# rpmfft {} v{CSV_VERSION}\n", self.kind);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let body = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        out.push_str(&String::from_utf8(body).map_err(io::Error::other)?);
        for line in &self.trailer {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv()?)
    }
}

/// Least-squares line through `(ln x, ln y)`: `(slope, intercept)`.
/// Needs two distinct positive abscissae.
pub fn loglog_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Columns describing a report, shared by all tables.
pub const REPORT_COLUMNS: [&str; 10] = [
    "iterations",
    "converged",
    "termination",
    "final_residual",
    "basis_size",
    "map_evaluations",
    "elapsed_s",
    "sigma11",
    "sigma22",
    "sigma12",
];

pub fn report_cells(report: Option<&SolveReport>, error: Option<&str>) -> Vec<String> {
    match report {
        Some(r) => {
            let s = r.effective_stress.unwrap_or(SymTensor2::ZERO);
            let termination = termination_name(r.termination);
            vec![
                r.iterations.to_string(),
                r.converged.to_string(),
                termination,
                fmt_opt(r.final_residual()),
                r.basis_size.to_string(),
                r.map_evaluations.to_string(),
                format!("{:.3}", r.elapsed),
                fmt_f64(s.t11),
                fmt_f64(s.t22),
                fmt_f64(s.t12),
            ]
        }
        None => {
            let mut cells = vec![String::new(); REPORT_COLUMNS.len()];
            cells[1] = "false".into();
            cells[2] = format!("error: {}", error.unwrap_or("unknown"));
            cells
        }
    }
}

fn termination_name(t: rpmfft::iteration::Termination) -> String {
    use rpmfft::iteration::Termination::*;
    match t {
        Converged => "converged",
        IterationLimit => "iteration-limit",
        Diverged => "diverged",
        Stagnated => "stagnated",
        SingularJacobian => "singular-jacobian",
    }
    .into()
}

/// Per-iteration residual and basis size.
pub fn history_table(report: &SolveReport) -> Table {
    let mut t = Table::new("history", &["iteration", "residual", "basis_size"]);
    let mut events = report.growth_events.iter().peekable();
    let mut basis = 0;
    for (i, r) in report.residual_history.iter().enumerate() {
        let it = i + 1;
        t.push(vec![it.to_string(), fmt_f64(*r), basis.to_string()]);
        while let Some(e) = events.next_if(|e| e.iteration == it) {
            basis = e.basis_size;
        }
    }
    t
}

/// File-name-safe version of a solver label.
pub fn file_stem(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    while s.ends_with('_') {
        s.pop();
    }
    s
}

/// Writes strain, stress and energy density of a solution under `dir`.
/// Returns the written paths.
pub fn dump_fields(
    dir: &Path,
    stem: &str,
    material: &MaterialField,
    strain: &TensorField2,
    load: SymTensor2,
    format: DumpFormat,
) -> rpmfft::Result<Vec<PathBuf>> {
    let sigma = stress(material, strain)?;
    let energy = energy_density(material, strain)?;
    let grid = material.grid();
    match format {
        DumpFormat::Binary => Ok(vec![
            write_field(dir, &format!("{stem}.strain"), strain, Some(load))?,
            write_field(dir, &format!("{stem}.stress"), &sigma, Some(load))?,
            write_planes(dir, &format!("{stem}.energy"), grid, &[("w", &energy)], Some(load))?,
        ]),
        DumpFormat::Csv => {
            fs::create_dir_all(dir).map_err(|e| rpmfft::Error::Io(e.to_string()))?;
            let path = dir.join(format!("{stem}.fields.csv"));
            write_planes_csv(
                &path,
                grid,
                &[
                    ("e11", strain.component(0)),
                    ("e22", strain.component(1)),
                    ("e12", strain.component(2)),
                    ("s11", sigma.component(0)),
                    ("s22", sigma.component(1)),
                    ("s12", sigma.component(2)),
                    ("w", &energy),
                ],
            )?;
            Ok(vec![path])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&k: &f64| (k, 3.0 * k.powf(0.5))).collect();
        let (slope, intercept) = loglog_fit(&pts).unwrap();
        assert!((slope - 0.5).abs() < 1e-12);
        assert!((intercept - 3.0_f64.ln()).abs() < 1e-12);
        assert!(loglog_fit(&pts[..1]).is_none());
        assert!(loglog_fit(&[(2.0, 1.0), (2.0, 5.0)]).is_none());
    }

    #[test]
    fn table_has_version_line_and_trailer() {
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        t.trailer.push("fit slope=1".into());
        let text = t.to_csv().unwrap();
        assert_eq!(text, "# rpmfft demo v1\na,b\n1,\"x,y\"\n# fit slope=1\n");
    }

    #[test]
    fn stems_are_file_safe() {
        assert_eq!(file_stem("rpm-polarization(1.5,1.5)"), "rpm-polarization_1.5_1.5");
        assert_eq!(file_stem("classical"), "classical");
    }
}
