//! Grid fields of symmetric tensors and their on-disk dumps.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microstructure::Grid2;
use crate::tensor::SymTensor2;

pub const COMPONENT_NAMES: [&str; 3] = ["11", "22", "12"];

/// Field of symmetric tensors on a grid.
///
/// The data is one flat vector, component-major: all `11` values, then all
/// `22`, then all `12`, each plane row-major (`iy * nx + ix`). This is also
/// the flattening seen by the fixed-point drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField2 {
    grid: Grid2,
    data: Vec<f64>,
}

impl TensorField2 {
    pub fn zeros(grid: Grid2) -> Self {
        Self {
            grid,
            data: vec![0.0; 3 * grid.len()],
        }
    }

    pub fn uniform(grid: Grid2, value: SymTensor2) -> Self {
        let n = grid.len();
        let mut data = Vec::with_capacity(3 * n);
        for v in value.to_array() {
            data.extend(std::iter::repeat_n(v, n));
        }
        Self { grid, data }
    }

    pub fn from_flat(grid: Grid2, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * grid.len() {
            return Err(Error::DimensionMismatch {
                expected: 3 * grid.len(),
                found: data.len(),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, cell: usize) -> SymTensor2 {
        let n = self.grid.len();
        SymTensor2::new(self.data[cell], self.data[n + cell], self.data[2 * n + cell])
    }

    pub fn set(&mut self, cell: usize, t: SymTensor2) {
        let n = self.grid.len();
        self.data[cell] = t.t11;
        self.data[n + cell] = t.t22;
        self.data[2 * n + cell] = t.t12;
    }

    pub fn mean(&self) -> SymTensor2 {
        let n = self.grid.len() as f64;
        SymTensor2::new(
            self.component(0).iter().sum::<f64>() / n,
            self.component(1).iter().sum::<f64>() / n,
            self.component(2).iter().sum::<f64>() / n,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest componentwise absolute difference.
    pub fn max_abs_diff(&self, other: &TensorField2) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs())))
    }

    pub fn scaled(&self, factor: f64) -> TensorField2 {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Values along row `iy` for component `c`.
    pub fn row(&self, c: usize, iy: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.component(c)[iy * nx..(iy + 1) * nx]
    }
}

/// Metadata written next to the binary component files of a field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub layout: String,
    pub dtype: String,
    pub components: Vec<DumpComponent>,
    pub load: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpComponent {
    pub name: String,
    pub file: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_f64_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::DimensionMismatch {
            expected: expected * 8,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect())
}

/// Writes scalar planes as `<name>.toml` plus one `<name>.<component>.f64`
/// little-endian file per plane. Returns the sidecar path.
pub fn write_planes(
    dir: impl AsRef<Path>,
    name: &str,
    grid: &Grid2,
    planes: &[(&str, &[f64])],
    load: Option<SymTensor2>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut components = Vec::new();
    for (comp, values) in planes {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        let file = format!("{name}.{comp}.f64");
        write_f64_le(&dir.join(&file), values)?;
        components.push(DumpComponent {
            name: comp.to_string(),
            file,
        });
    }
    let header = DumpHeader {
        name: name.to_string(),
        nx: grid.nx,
        ny: grid.ny,
        lx: grid.lx,
        ly: grid.ly,
        layout: "row-major, index = iy * nx + ix".into(),
        dtype: "f64-le".into(),
        components,
        load: load.map(SymTensor2::to_array),
    };
    let sidecar = dir.join(format!("{name}.toml"));
    let text = toml::to_string_pretty(&header).map_err(|e| io_err(&sidecar, e))?;
    fs::write(&sidecar, text).map_err(|e| io_err(&sidecar, e))?;
    Ok(sidecar)
}

/// Writes a tensor field dump with components `11`, `22`, `12`.
pub fn write_field(
    dir: impl AsRef<Path>,
    name: &str,
    field: &TensorField2,
    load: Option<SymTensor2>,
) -> Result<PathBuf> {
    let planes: Vec<(&str, &[f64])> = (0..3)
        .map(|c| (COMPONENT_NAMES[c], field.component(c)))
        .collect();
    write_planes(dir, name, field.grid(), &planes, load)
}

/// Reads a tensor field dump written by [`write_field`].
pub fn read_field(sidecar: impl AsRef<Path>) -> Result<(TensorField2, DumpHeader)> {
    let sidecar = sidecar.as_ref();
    let text = fs::read_to_string(sidecar).map_err(|e| io_err(sidecar, e))?;
    let header: DumpHeader = toml::from_str(&text).map_err(|e| io_err(sidecar, e))?;
    let grid = Grid2::new(header.nx, header.ny, header.lx, header.ly)?;
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let mut data = Vec::with_capacity(3 * grid.len());
    for name in COMPONENT_NAMES {
        let comp = header
            .components
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| io_err(sidecar, format!("missing component {name}")))?;
        data.extend(read_f64_le(&dir.join(&comp.file), grid.len())?);
    }
    Ok((TensorField2::from_flat(grid, data)?, header))
}

/// Plain-text dump with one `ix,iy,<planes...>` row per cell.
pub fn write_planes_csv(
    path: impl AsRef<Path>,
    grid: &Grid2,
    planes: &[(&str, &[f64])],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut header = String::from("ix,iy");
    for (name, _) in planes {
        header.push(',');
        header.push_str(name);
    }
    writeln!(out, "{header}").map_err(|e| io_err(path, e))?;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let cell = iy * grid.nx + ix;
            write!(out, "{ix},{iy}").map_err(|e| io_err(path, e))?;
            for (_, values) in planes {
                write!(out, ",{:e}", values[cell]).map_err(|e| io_err(path, e))?;
            }
            writeln!(out).map_err(|e| io_err(path, e))?;
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}
