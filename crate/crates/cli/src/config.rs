//! Experiment configuration files (TOML).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use rpmfft::greens::{reference_from_average, ReferenceMedium};
use rpmfft::microstructure::{self, Axis, Grid2, Isotropic, MaterialField};
use rpmfft::rpm::RpmConfig;
use rpmfft::spectral::{LoadCase, Scheme};
use rpmfft::tensor::SymTensor2;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<rpmfft::Error> for ConfigError {
    fn from(e: rpmfft::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub grid: GridSpec,
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub materials: MaterialsSpec,
    #[serde(default)]
    pub load: LoadSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    pub solvers: Vec<SolverSpec>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative paths in the file are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_tolerance() -> f64 {
    1e-4
}

fn default_max_iterations() -> usize {
    10_000
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    /// Defaults to `nx`.
    pub ny: Option<usize>,
    #[serde(default = "unit")]
    pub lx: f64,
    #[serde(default = "unit")]
    pub ly: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometrySpec {
    Homogeneous,
    SingleFiber {
        /// Fiber radius over the shorter cell edge.
        radius_ratio: f64,
    },
    TwoFibers {
        /// Radius of the smaller fiber; the other has twice this radius.
        radius: f64,
        separation: f64,
    },
    Laminate {
        fraction: f64,
        #[serde(default)]
        normal: Normal,
    },
    PhaseMap {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normal {
    #[default]
    X,
    Y,
}

impl From<Normal> for Axis {
    fn from(n: Normal) -> Axis {
        match n {
            Normal::X => Axis::X,
            Normal::Y => Axis::Y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub youngs: f64,
    pub poisson: f64,
}

impl PhaseSpec {
    fn build(&self) -> Result<Isotropic, ConfigError> {
        Ok(Isotropic::new(self.youngs, self.poisson)?)
    }
}

/// Generators use `fiber` and `matrix` (laminates: `fiber` is the first
/// layer); phase maps use the `phases` table indexed by phase id.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSpec {
    pub fiber: Option<PhaseSpec>,
    pub matrix: Option<PhaseSpec>,
    #[serde(default)]
    pub phases: Vec<PhaseSpec>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default)]
    pub e11: f64,
    #[serde(default)]
    pub e22: f64,
    #[serde(default)]
    pub e12: f64,
}

impl LoadSpec {
    pub fn strain(&self) -> SymTensor2 {
        SymTensor2::new(self.e11, self.e22, self.e12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// `E0` halfway between the smallest and largest phase modulus.
    Average { poisson: Option<f64> },
    Explicit { youngs: f64, poisson: Option<f64> },
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::Average { poisson: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SchemeSpec {
    #[default]
    Classical,
    Accelerated,
    Polarization {
        alpha: f64,
        beta: f64,
    },
    GradientFlow {
        a: f64,
    },
}

impl SchemeSpec {
    pub fn scheme(&self) -> Scheme {
        match *self {
            SchemeSpec::Classical => Scheme::Classical,
            SchemeSpec::Accelerated => Scheme::ACCELERATED,
            SchemeSpec::Polarization { alpha, beta } => Scheme::Polarization { alpha, beta },
            SchemeSpec::GradientFlow { a } => Scheme::GradientFlow { a },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SolverSpec {
    Classical,
    Accelerated,
    Polarization {
        alpha: f64,
        beta: f64,
    },
    GradientFlow {
        a: f64,
    },
    Rpm {
        #[serde(default)]
        scheme: SchemeSpec,
        n_max: Option<usize>,
        max_basis: Option<usize>,
        growth_ratio: Option<f64>,
        fd_step: Option<f64>,
        /// Defaults to the experiment's `max_iterations`.
        max_outer: Option<usize>,
    },
}

impl SolverSpec {
    pub fn scheme(&self) -> Scheme {
        match *self {
            SolverSpec::Classical => Scheme::Classical,
            SolverSpec::Accelerated => Scheme::ACCELERATED,
            SolverSpec::Polarization { alpha, beta } => Scheme::Polarization { alpha, beta },
            SolverSpec::GradientFlow { a } => Scheme::GradientFlow { a },
            SolverSpec::Rpm { scheme, .. } => scheme.scheme(),
        }
    }

    pub fn is_rpm(&self) -> bool {
        matches!(self, SolverSpec::Rpm { .. })
    }

    pub fn label(&self) -> String {
        let base = self.scheme().label();
        if self.is_rpm() {
            format!("rpm-{base}")
        } else {
            base
        }
    }

    /// RPM settings for this solver, `None` for plain schemes. `n_max`
    /// overrides the configured value when given.
    pub fn rpm_config(
        &self,
        tolerance: f64,
        max_iterations: usize,
        n_max_override: Option<usize>,
    ) -> Option<RpmConfig> {
        match *self {
            SolverSpec::Rpm {
                n_max,
                max_basis,
                growth_ratio,
                fd_step,
                max_outer,
                ..
            } => {
                let d = RpmConfig::default();
                Some(RpmConfig {
                    n_max: n_max_override.or(n_max).unwrap_or(d.n_max),
                    tolerance,
                    max_basis: max_basis.unwrap_or(d.max_basis),
                    growth_ratio: growth_ratio.unwrap_or(d.growth_ratio),
                    fd_step: fd_step.or(d.fd_step),
                    max_outer: max_outer.unwrap_or(max_iterations),
                })
            }
            _ => None,
        }
    }
}

/// Sweep axes; an empty list means "use the base configuration".
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Fiber-to-matrix modulus ratios; the fiber modulus becomes `K * E_m`.
    #[serde(default)]
    pub contrast: Vec<f64>,
    /// Values of `nx`; `ny` keeps the base aspect ratio of cell counts.
    #[serde(default)]
    pub resolutions: Vec<usize>,
    /// RPM `n_max` values, applied to RPM solvers only.
    #[serde(default)]
    pub n_max: Vec<usize>,
    /// Single-fiber radius ratios.
    #[serde(default)]
    pub radius_ratios: Vec<f64>,
    /// Absolute reference moduli for `sweep-reference`.
    #[serde(default)]
    pub reference_moduli: Vec<f64>,
    /// Reference moduli as multiples of the average rule.
    #[serde(default)]
    pub reference_factors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    #[default]
    Binary,
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub fields: bool,
    #[serde(default)]
    pub format: DumpFormat,
    #[serde(default = "yes")]
    pub history: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            fields: true,
            format: DumpFormat::Binary,
            history: true,
        }
    }
}

/// One point of a sweep: which base parameters are replaced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Variant {
    pub contrast: Option<f64>,
    pub resolution: Option<usize>,
    pub radius_ratio: Option<f64>,
    pub reference_youngs: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| bad(format!("invalid config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Output directory: explicit override, then the config's `output.dir`,
    /// then `out/<name>`.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(dir) = cli {
            return dir.to_path_buf();
        }
        match &self.output.dir {
            Some(d) if d.is_relative() => self.base_dir.join(d),
            Some(d) => d.clone(),
            None => PathBuf::from("out").join(&self.name),
        }
    }

    pub fn grid(&self, resolution: Option<usize>) -> Result<Grid2, ConfigError> {
        let nx0 = self.grid.nx;
        let ny0 = self.grid.ny.unwrap_or(nx0);
        let (nx, ny) = match resolution {
            Some(r) => {
                let ny = (r as f64 * ny0 as f64 / nx0 as f64).round() as usize;
                (r, ny)
            }
            None => (nx0, ny0),
        };
        Ok(Grid2::new(nx, ny, self.grid.lx, self.grid.ly)?)
    }

    fn fiber_and_matrix(&self, contrast: Option<f64>) -> Result<(Isotropic, Isotropic), ConfigError> {
        let matrix = self
            .materials
            .matrix
            .ok_or_else(|| bad("materials.matrix is required for this geometry"))?;
        let mut fiber = match self.materials.fiber {
            Some(f) => f,
            None if contrast.is_some() => matrix,
            None => return Err(bad("materials.fiber is required for this geometry")),
        };
        if let Some(k) = contrast {
            fiber.youngs = k * matrix.youngs;
        }
        Ok((fiber.build()?, matrix.build()?))
    }

    pub fn material(&self, variant: &Variant) -> Result<MaterialField, ConfigError> {
        let grid = self.grid(variant.resolution)?;
        if variant.radius_ratio.is_some() && !matches!(self.geometry, GeometrySpec::SingleFiber { .. }) {
            return Err(bad("radius_ratios can only be swept for a single-fiber geometry"));
        }
        let field = match &self.geometry {
            GeometrySpec::Homogeneous => {
                let matrix = self
                    .materials
                    .matrix
                    .ok_or_else(|| bad("materials.matrix is required for this geometry"))?;
                MaterialField::homogeneous(grid, matrix.build()?)?
            }
            GeometrySpec::SingleFiber { radius_ratio } => {
                let (fiber, matrix) = self.fiber_and_matrix(variant.contrast)?;
                let r = variant.radius_ratio.unwrap_or(*radius_ratio);
                microstructure::single_fiber(grid, r, fiber, matrix)?
            }
            GeometrySpec::TwoFibers { radius, separation } => {
                let (fiber, matrix) = self.fiber_and_matrix(variant.contrast)?;
                microstructure::two_fibers(grid, *radius, *separation, fiber, matrix)?
            }
            GeometrySpec::Laminate { fraction, normal } => {
                let (fiber, matrix) = self.fiber_and_matrix(variant.contrast)?;
                microstructure::laminate(grid, *fraction, fiber, matrix, (*normal).into())?
            }
            GeometrySpec::PhaseMap { path } => {
                if variant.contrast.is_some() {
                    return Err(bad("contrast sweeps need a generated geometry, not a phase map"));
                }
                if self.materials.phases.is_empty() {
                    return Err(bad("materials.phases is required for a phase map"));
                }
                let phases = self
                    .materials
                    .phases
                    .iter()
                    .map(PhaseSpec::build)
                    .collect::<Result<Vec<_>, _>>()?;
                let path = if path.is_relative() {
                    self.base_dir.join(path)
                } else {
                    path.clone()
                };
                let field = microstructure::load_phase_map(&path, self.grid.lx, self.grid.ly, phases)?;
                if variant.resolution.is_some() {
                    return Err(bad("resolution sweeps need a generated geometry, not a phase map"));
                }
                field
            }
        };
        Ok(field)
    }

    fn reference_poisson(&self) -> Option<f64> {
        match self.reference {
            ReferenceSpec::Average { poisson } | ReferenceSpec::Explicit { poisson, .. } => poisson,
        }
    }

    /// `E0` of the average rule for `material`.
    pub fn average_modulus(material: &MaterialField) -> f64 {
        let (lo, hi) = material.youngs_range();
        0.5 * (lo + hi)
    }

    /// Reference medium for `material`. The Poisson ratio defaults to the
    /// matrix (phase 0) value.
    pub fn reference(
        &self,
        material: &MaterialField,
        youngs_override: Option<f64>,
    ) -> Result<ReferenceMedium, ConfigError> {
        let nu = self
            .reference_poisson()
            .unwrap_or(material.phases()[0].poisson);
        let medium = match (youngs_override, self.reference) {
            (Some(e), _) | (None, ReferenceSpec::Explicit { youngs: e, .. }) => {
                ReferenceMedium::from_youngs(e, nu)?
            }
            (None, ReferenceSpec::Average { .. }) => {
                let (lo, hi) = material.youngs_range();
                reference_from_average(hi, lo, nu)?
            }
        };
        Ok(medium)
    }

    pub fn load_case(&self) -> Result<LoadCase, ConfigError> {
        let strain = self.load.strain();
        if strain.norm() == 0.0 {
            return Err(bad("load must have a nonzero component"));
        }
        Ok(LoadCase::new(strain)?)
    }

    /// Reference moduli for `sweep-reference`, given the base material.
    pub fn reference_list(&self, material: &MaterialField) -> Result<Vec<f64>, ConfigError> {
        let s = &self.sweep;
        if !s.reference_moduli.is_empty() && !s.reference_factors.is_empty() {
            return Err(bad("give either sweep.reference_moduli or sweep.reference_factors, not both"));
        }
        if !s.reference_moduli.is_empty() {
            return Ok(s.reference_moduli.clone());
        }
        let avg = Self::average_modulus(material);
        Ok(s.reference_factors.iter().map(|f| f * avg).collect())
    }

    /// Checks everything that can be checked without solving: geometry and
    /// phases of every sweep point, the load, solver parameters and the
    /// reference rule.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(bad(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(bad("max_iterations must be at least 1"));
        }
        if self.solvers.is_empty() {
            return Err(bad("at least one solver is required"));
        }
        self.load_case()?;
        for solver in &self.solvers {
            solver.scheme().validate()?;
            if let Some(rc) = solver.rpm_config(self.tolerance, self.max_iterations, None) {
                rc.validate()?;
            }
        }
        let s = &self.sweep;
        if s.contrast.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(bad("contrast values must be finite and non-negative"));
        }
        if s.n_max.iter().any(|&n| n < 2) {
            return Err(bad("n_max values must be at least 2"));
        }
        if s.reference_moduli.iter().chain(&s.reference_factors).any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(bad("reference moduli and factors must be positive"));
        }
        for variant in self.variants() {
            let material = self.material(&variant)?;
            self.reference(&material, None)?;
            for e in self.reference_list(&material)? {
                self.reference(&material, Some(e))?;
            }
        }
        Ok(())
    }

    /// Cartesian product of the geometry and material sweep axes, in
    /// file order (contrast outermost).
    pub fn variants(&self) -> Vec<Variant> {
        fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for contrast in axis(&self.sweep.contrast) {
            for resolution in axis(&self.sweep.resolutions) {
                for radius_ratio in axis(&self.sweep.radius_ratios) {
                    out.push(Variant {
                        contrast,
                        resolution,
                        radius_ratio,
                        reference_youngs: None,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIBER: &str = r#"
        name = "fiber"
        tolerance = 1e-4
        [grid]
        nx = 32
        [geometry]
        kind = "single-fiber"
        radius_ratio = 0.125
        [materials]
        fiber = { youngs = 100.0, poisson = 0.25 }
        matrix = { youngs = 1.0, poisson = 0.25 }
        [load]
        e12 = 0.005
        [[solvers]]
        kind = "classical"
        [[solvers]]
        kind = "rpm"
        scheme = { kind = "accelerated" }
        n_max = 8
    "#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(FIBER).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.solvers.len(), 2);
        assert_eq!(cfg.solvers[1].label(), "rpm-accelerated");
        let rc = cfg.solvers[1].rpm_config(1e-4, 500, None).unwrap();
        assert_eq!((rc.n_max, rc.max_outer), (8, 500));
        assert_eq!(cfg.solvers[1].rpm_config(1e-4, 500, Some(3)).unwrap().n_max, 3);
        assert!(cfg.solvers[0].rpm_config(1e-4, 500, None).is_none());
    }

    #[test]
    fn average_reference_and_poisson_default() {
        let cfg = ExperimentConfig::from_toml(FIBER).unwrap();
        let material = cfg.material(&Variant::default()).unwrap();
        let medium = cfg.reference(&material, None).unwrap();
        assert!((medium.youngs() - 50.5).abs() < 1e-12);
        assert!((medium.poisson() - 0.25).abs() < 1e-12);
        let k = cfg
            .material(&Variant {
                contrast: Some(1e4),
                ..Variant::default()
            })
            .unwrap();
        assert_eq!(k.youngs_range(), (1.0, 1e4));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml(&FIBER.replace("n_max = 8", "n_max = 8\nbogus = 1")).is_err());
        let cfg = ExperimentConfig::from_toml(&FIBER.replace("e12 = 0.005", "e12 = 0.0")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_toml(&FIBER.replace("n_max = 8", "n_max = 1")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_toml(&FIBER.replace("0.125", "0.001")).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_variants_are_a_product() {
        let text = format!("{FIBER}\n[sweep]\ncontrast = [10.0, 100.0]\nresolutions = [16, 32, 64]\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let v = cfg.variants();
        assert_eq!(v.len(), 6);
        assert_eq!(v[0].contrast, Some(10.0));
        assert_eq!(v[2].resolution, Some(64));
        assert_eq!(v[3].contrast, Some(100.0));
        assert_eq!(cfg.grid(Some(64)).unwrap().dims(), (64, 64));
    }

    #[test]
    fn reference_list_from_factors() {
        let text = format!("{FIBER}\n[sweep]\nreference_factors = [0.1, 1.0]\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let material = cfg.material(&Variant::default()).unwrap();
        let list = cfg.reference_list(&material).unwrap();
        assert!((list[0] - 5.05).abs() < 1e-12 && (list[1] - 50.5).abs() < 1e-12);
    }

    #[test]
    fn explicit_reference() {
        let text = FIBER.replace("[load]", "[reference]\nrule = \"explicit\"\nyoungs = 7.0\npoisson = 0.3\n[load]");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let material = cfg.material(&Variant::default()).unwrap();
        let medium = cfg.reference(&material, None).unwrap();
        assert!((medium.youngs() - 7.0).abs() < 1e-12 && (medium.poisson() - 0.3).abs() < 1e-12);
    }
}
