//! Run configuration: a versioned JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use steklov_core::assembly::{BoundaryDensity, ProblemParams};
use steklov_core::eigensolver::SolverOptions;
use steklov_core::mesh::{Mesh, RegionSpec};
use steklov_core::rearrange::{cap_indicator, random_admissible, InitialPotential, OptimizeOptions};
use steklov_core::shapederiv::{SignConvention, TangentField, DEFAULT_T_STEPS};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub geometry: Geometry,
    pub params: ParamsConfig,
    #[serde(default)]
    pub potential: Option<PotentialSource>,
    /// Boundary mass of the potential for optimize, sweep and symmetry runs.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub shape: Option<ShapeConfig>,
    #[serde(default)]
    pub symmetry: SymmetryConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Disk { h: f64 },
    Rectangle { width: f64, height: f64, target_h: f64 },
    MeshFile { path: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub p: f64,
    pub sigma: f64,
    #[serde(default)]
    pub eps_reg: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSource {
    /// Boundary density file (`{"edge_values": [...]}`).
    File { path: PathBuf },
    Constant { c: f64 },
    /// Single arc of length `a` centered at polar angle `angle` (disk only).
    Cap { angle: f64, a: f64 },
    Random { seed: u64, a: f64 },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub armijo_slope: Option<f64>,
    pub armijo_backtrack: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub max_outer: Option<usize>,
    pub tol: Option<f64>,
    pub initial: Option<InitialPotential>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    /// Arcs of the region as `[begin, end]` arc-length pairs.
    pub region: Vec<(f64, f64)>,
    /// Endpoint speeds in the order `[arc0.start, arc0.end, ...]`.
    pub speeds: Vec<f64>,
    #[serde(default)]
    pub t_steps: Option<Vec<f64>>,
    #[serde(default)]
    pub sign_convention: SignConvention,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    pub seeds: Vec<u64>,
}

impl Default for SymmetryConfig {
    fn default() -> Self {
        SymmetryConfig { seeds: vec![1, 2, 3, 4, 5] }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        Self::parse(&read(path)?, path.parent())
    }

    /// Parses the document; relative file paths are taken relative to `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(usage(format!("config version {} is not supported (expected {CONFIG_VERSION})", cfg.version)));
        }
        if let Some(base) = base {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            if let Geometry::MeshFile { path } = &mut cfg.geometry {
                rebase(path);
            }
            if let Some(PotentialSource::File { path }) = &mut cfg.potential {
                rebase(path);
            }
            if let Some(dir) = &mut cfg.output_dir {
                rebase(dir);
            }
        }
        Ok(cfg)
    }

    pub fn mesh(&self) -> Result<Mesh, CliError> {
        let mesh = match &self.geometry {
            Geometry::Disk { h } => Mesh::generate_disk(*h),
            Geometry::Rectangle { width, height, target_h } => Mesh::generate_rectangle(*width, *height, *target_h),
            Geometry::MeshFile { path } => Mesh::load(&read(path)?),
        };
        mesh.map_err(|e| usage(format!("geometry: {e}")))
    }

    pub fn params(&self) -> Result<ProblemParams, CliError> {
        let ParamsConfig { p, sigma, eps_reg } = self.params;
        match eps_reg {
            Some(eps) => ProblemParams::with_eps(p, sigma, eps),
            None => ProblemParams::new(p, sigma),
        }
        .map_err(|e| usage(format!("params: {e}")))
    }

    pub fn solver(&self, p: f64) -> Result<SolverOptions, CliError> {
        let d = SolverOptions::for_exponent(p);
        let s = &self.solver;
        let opts = SolverOptions {
            tol: s.tol.unwrap_or(d.tol),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            seed: s.seed.unwrap_or(d.seed),
            armijo_slope: s.armijo_slope.unwrap_or(d.armijo_slope),
            armijo_backtrack: s.armijo_backtrack.unwrap_or(d.armijo_backtrack),
            direct_limit: d.direct_limit,
        };
        opts.validate().map_err(|e| usage(format!("solver: {e}")))?;
        Ok(opts)
    }

    pub fn optimize_options(&self, p: f64) -> Result<OptimizeOptions, CliError> {
        let d = OptimizeOptions::default();
        Ok(OptimizeOptions {
            max_outer: self.optimize.max_outer.unwrap_or(d.max_outer),
            tol: self.optimize.tol.unwrap_or(d.tol),
            initial: self.optimize.initial.clone().unwrap_or(d.initial),
            solver: self.solver(p)?,
            binarize: None,
        })
    }

    /// Mass `a`, checked against the perimeter of `mesh`.
    pub fn mass(&self, mesh: &Mesh) -> Result<f64, CliError> {
        let a = self.a.ok_or_else(|| usage("config needs the potential mass `a`"))?;
        if !(a >= 0.0 && a <= mesh.perimeter()) {
            return Err(usage(format!("mass a = {a} outside [0, {}]", mesh.perimeter())));
        }
        Ok(a)
    }

    pub fn potential(&self, mesh: &Mesh) -> Result<BoundaryDensity, CliError> {
        let source = self.potential.as_ref().ok_or_else(|| usage("config needs a `potential` source"))?;
        let check = |a: f64| {
            if a >= 0.0 && a <= mesh.perimeter() {
                Ok(a)
            } else {
                Err(usage(format!("mass a = {a} outside [0, {}]", mesh.perimeter())))
            }
        };
        let phi = match source {
            PotentialSource::File { path } => BoundaryDensity::from_json(mesh, &read(path)?),
            PotentialSource::Constant { c } => BoundaryDensity::constant(mesh, *c),
            PotentialSource::Cap { angle, a } => cap_indicator(mesh, *angle, check(*a)?).map(|(_, phi)| phi),
            PotentialSource::Random { seed, a } => random_admissible(mesh, check(*a)?, *seed),
        };
        phi.map_err(|e| usage(format!("potential: {e}")))
    }

    pub fn region(&self, mesh: &Mesh) -> Result<(RegionSpec, TangentField, Vec<f64>, SignConvention), CliError> {
        let s = self.shape.as_ref().ok_or_else(|| usage("config needs a `shape` section"))?;
        let region =
            RegionSpec::from_intervals(&s.region, mesh.perimeter()).map_err(|e| usage(format!("shape region: {e}")))?;
        let field = TangentField::new(&region, s.speeds.clone()).map_err(|e| usage(format!("shape speeds: {e}")))?;
        Ok((region, field, s.t_steps.clone().unwrap_or_else(|| DEFAULT_T_STEPS.to_vec()), s.sign_convention))
    }

    pub fn sigmas(&self) -> Result<Vec<f64>, CliError> {
        let s = self.sweep.as_ref().ok_or_else(|| usage("config needs a `sweep` section"))?;
        if s.sigmas.is_empty() || s.sigmas.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(usage("sweep sigmas must be positive and finite"));
        }
        if s.sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(usage("sweep sigmas must be strictly ascending"));
        }
        Ok(s.sigmas.clone())
    }
}
