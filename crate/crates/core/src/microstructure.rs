//! Unit-cell grids and per-cell material fields.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_isotropic, isotropic_stiffness, VoigtMatrix};

/// Regular grid over a rectangular periodic unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 cells per direction, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cell dimensions must be positive, got {lx}x{ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square `n x n` grid on the unit square.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Physical coordinates of the center of cell `(ix, iy)`.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            (ix as f64 + 0.5) * self.lx / self.nx as f64,
            (iy as f64 + 0.5) * self.ly / self.ny as f64,
        )
    }

    pub(crate) fn check_same(&self, other: &Grid2) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::GridMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

/// Isotropic phase given by Young's modulus and Poisson ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isotropic {
    pub youngs: f64,
    pub poisson: f64,
}

impl Isotropic {
    pub fn new(youngs: f64, poisson: f64) -> Result<Self> {
        check_isotropic(youngs, poisson)?;
        Ok(Self { youngs, poisson })
    }

    pub fn stiffness(&self) -> VoigtMatrix {
        isotropic_stiffness(self.youngs, self.poisson).expect("validated at construction")
    }
}

/// Per-cell phase map plus a phase table. Cells are stored row-major:
/// `index = iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    grid: Grid2,
    phase_ids: Vec<u16>,
    phases: Vec<Isotropic>,
    stiffness: Vec<VoigtMatrix>,
}

impl MaterialField {
    pub fn new(grid: Grid2, phase_ids: Vec<u16>, phases: Vec<Isotropic>) -> Result<Self> {
        if phase_ids.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: phase_ids.len(),
            });
        }
        for p in &phases {
            check_isotropic(p.youngs, p.poisson)?;
        }
        if let Some((cell, &id)) = phase_ids
            .iter()
            .enumerate()
            .find(|(_, &id)| id as usize >= phases.len())
        {
            return Err(Error::UnknownPhase { id, cell });
        }
        let used_stiff = phase_ids
            .iter()
            .any(|&id| phases[id as usize].youngs > 0.0);
        if !used_stiff {
            return Err(Error::DegenerateGeometry(
                "every cell has zero stiffness".into(),
            ));
        }
        let stiffness = phases.iter().map(Isotropic::stiffness).collect();
        Ok(Self {
            grid,
            phase_ids,
            phases,
            stiffness,
        })
    }

    pub fn homogeneous(grid: Grid2, phase: Isotropic) -> Result<Self> {
        Self::new(grid, vec![0; grid.len()], vec![phase])
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn phase_ids(&self) -> &[u16] {
        &self.phase_ids
    }

    pub fn phases(&self) -> &[Isotropic] {
        &self.phases
    }

    /// Stiffness of cell `cell`.
    #[inline]
    pub fn stiffness(&self, cell: usize) -> &VoigtMatrix {
        &self.stiffness[self.phase_ids[cell] as usize]
    }

    /// Stiffness of each entry of the phase table.
    pub fn phase_stiffness(&self) -> &[VoigtMatrix] {
        &self.stiffness
    }

    pub fn youngs_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &id in &self.phase_ids {
            let e = self.phases[id as usize].youngs;
            lo = lo.min(e);
            hi = hi.max(e);
        }
        (lo, hi)
    }

    pub fn volume_fraction(&self, phase_id: u16) -> f64 {
        volume_fraction(self, phase_id)
    }

    /// Same phase map with the phase table replaced.
    pub fn with_phases(&self, phases: Vec<Isotropic>) -> Result<Self> {
        Self::new(self.grid, self.phase_ids.clone(), phases)
    }

    /// Periodic shift of the phase map by `(sx, sy)` cells.
    pub fn shifted(&self, sx: usize, sy: usize) -> Self {
        let (nx, ny) = self.grid.dims();
        let mut ids = vec![0; self.grid.len()];
        for iy in 0..ny {
            for ix in 0..nx {
                ids[((iy + sy) % ny) * nx + (ix + sx) % nx] = self.phase_ids[iy * nx + ix];
            }
        }
        Self {
            phase_ids: ids,
            ..self.clone()
        }
    }
}

/// Fraction of cells carrying `phase_id`.
pub fn volume_fraction(field: &MaterialField, phase_id: u16) -> f64 {
    let count = field.phase_ids.iter().filter(|&&id| id == phase_id).count();
    count as f64 / field.grid.len() as f64
}

fn disk_ids(grid: &Grid2, disks: &[(f64, f64, f64, u16)], background: u16) -> Vec<u16> {
    let mut ids = vec![background; grid.len()];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.cell_center(ix, iy);
            for &(cx, cy, r, id) in disks {
                if (x - cx).powi(2) + (y - cy).powi(2) <= r * r {
                    ids[iy * grid.nx + ix] = id;
                }
            }
        }
    }
    ids
}

/// Circular fiber at the center of the cell. Phase 0 is the matrix, phase 1
/// the fiber.
///
/// `radius_ratio` is the fiber radius divided by the shorter cell edge. A
/// cell belongs to the fiber when its center lies inside the disk.
pub fn single_fiber(
    grid: Grid2,
    radius_ratio: f64,
    fiber: Isotropic,
    matrix: Isotropic,
) -> Result<MaterialField> {
    if !(radius_ratio > 0.0 && radius_ratio < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "radius ratio must lie in (0, 0.5), got {radius_ratio}"
        )));
    }
    let radius = radius_ratio * grid.lx.min(grid.ly);
    let ids = disk_ids(&grid, &[(grid.lx / 2.0, grid.ly / 2.0, radius, 1)], 0);
    if !ids.contains(&1) {
        return Err(Error::DegenerateGeometry(format!(
            "no cell center lies within radius {radius} on a {}x{} grid",
            grid.nx, grid.ny
        )));
    }
    MaterialField::new(grid, ids, vec![matrix, fiber])
}

/// Two fibers of radius `radius` and `2 * radius` on the long-axis
/// centerline, centers `separation` apart and symmetric about the cell
/// center. Phases: 0 matrix, 1 small fiber (left), 2 large fiber (right).
pub fn two_fibers(
    grid: Grid2,
    radius: f64,
    separation: f64,
    fiber: Isotropic,
    matrix: Isotropic,
) -> Result<MaterialField> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fiber radius must be positive, got {radius}"
        )));
    }
    if separation < 3.0 * radius {
        return Err(Error::DegenerateGeometry(format!(
            "fibers of radius {radius} and {} overlap at separation {separation}",
            2.0 * radius
        )));
    }
    let cy = grid.ly / 2.0;
    let left = grid.lx / 2.0 - separation / 2.0;
    let right = grid.lx / 2.0 + separation / 2.0;
    if left - radius < 0.0 || right + 2.0 * radius > grid.lx || 2.0 * radius > cy {
        return Err(Error::DegenerateGeometry(
            "fibers do not fit inside the unit cell".into(),
        ));
    }
    let ids = disk_ids(
        &grid,
        &[(left, cy, radius, 1), (right, cy, 2.0 * radius, 2)],
        0,
    );
    if !ids.contains(&1) || !ids.contains(&2) {
        return Err(Error::DegenerateGeometry(
            "a fiber covers no cell center at this resolution".into(),
        ));
    }
    MaterialField::new(grid, ids, vec![matrix, fiber, fiber])
}

/// Layering direction of a laminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Grid-aligned two-phase laminate with interfaces normal to `normal`.
/// The first `fraction * n` layers carry phase 0 (`phase1`), the rest phase
/// 1 (`phase2`).
pub fn laminate(
    grid: Grid2,
    fraction: f64,
    phase1: Isotropic,
    phase2: Isotropic,
    normal: Axis,
) -> Result<MaterialField> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "laminate fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = match normal {
        Axis::X => grid.nx,
        Axis::Y => grid.ny,
    };
    let layers = fraction * n as f64;
    let rounded = layers.round();
    if (layers - rounded).abs() > 1e-9 || rounded < 1.0 || rounded as usize >= n {
        return Err(Error::DegenerateGeometry(format!(
            "fraction {fraction} is {layers} layers on {n} cells, not grid-aligned"
        )));
    }
    let cut = rounded as usize;
    let mut ids = vec![1; grid.len()];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let along = match normal {
                Axis::X => ix,
                Axis::Y => iy,
            };
            if along < cut {
                ids[iy * grid.nx + ix] = 0;
            }
        }
    }
    MaterialField::new(grid, ids, vec![phase1, phase2])
}

/// Parses a phase map: a header line `nx ny` followed by `ny` rows of `nx`
/// whitespace-separated integers. Row `j` of the file is grid row `iy = j`.
pub fn parse_phase_map(text: &str) -> Result<(usize, usize, Vec<u16>)> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedPhaseMap("empty file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::MalformedPhaseMap(format!("bad header '{header}': {e}")))?;
    let [nx, ny] = dims[..] else {
        return Err(Error::MalformedPhaseMap(format!(
            "header must be 'nx ny', got '{header}'"
        )));
    };
    let mut ids = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for (row, line) in lines.enumerate() {
        let values: Vec<u16> = line
            .split_whitespace()
            .map(|t| t.parse::<u16>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedPhaseMap(format!("row {row}: {e}")))?;
        if values.len() != nx {
            return Err(Error::MalformedPhaseMap(format!(
                "row {row} has {} entries, expected {nx}",
                values.len()
            )));
        }
        ids.extend(values);
        rows += 1;
    }
    if rows != ny {
        return Err(Error::MalformedPhaseMap(format!(
            "found {rows} rows, header says {ny}"
        )));
    }
    Ok((nx, ny, ids))
}

pub fn format_phase_map(field: &MaterialField) -> String {
    let (nx, ny) = field.grid.dims();
    let mut out = format!("{nx} {ny}\n");
    for row in field.phase_ids.chunks(nx) {
        let line: Vec<String> = row.iter().map(u16::to_string).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Loads a phase map file on the unit cell `lx x ly` using the given phase
/// table.
pub fn load_phase_map(
    path: impl AsRef<Path>,
    lx: f64,
    ly: f64,
    phases: Vec<Isotropic>,
) -> Result<MaterialField> {
    let text = std::fs::read_to_string(path)?;
    let (nx, ny, ids) = parse_phase_map(&text)?;
    MaterialField::new(Grid2::new(nx, ny, lx, ly)?, ids, phases)
}

pub fn save_phase_map(field: &MaterialField, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_phase_map(field))?;
    Ok(())
}
