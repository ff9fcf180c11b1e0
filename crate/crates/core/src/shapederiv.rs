//! Derivative of the eigenvalue with respect to tangential transport of a
//! boundary region `D` carrying the potential `chi_D`.
//!
//! A tangential flow keeps the domain and the mesh fixed and only moves the
//! endpoints of the arcs of `D`. The closed-form derivative is a sum over those
//! endpoints of `|u|^p` times the speed component along the outward tangent of
//! `D`; it is checked against central differences of re-solved eigenvalues.

use serde::{Deserialize, Serialize};

use crate::assembly::{abs_pow, BoundaryDensity, ProblemParams};
use crate::eigensolver::{solve, EigenPair, SolverOptions};
use crate::error::{Error, Result};
use crate::mesh::{ArcSide, Mesh, RegionSpec};

/// Default central-difference steps.
pub const DEFAULT_T_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Tangential speeds at the endpoints of a region, in the order of
/// [`RegionSpec::endpoints`]: `[arc0.start, arc0.end, arc1.start, ...]`.
/// Positive speed moves an endpoint towards increasing arc length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TangentField {
    pub speeds: Vec<f64>,
}

impl TangentField {
    pub fn new(region: &RegionSpec, speeds: Vec<f64>) -> Result<Self> {
        let field = TangentField { speeds };
        field.check(region)?;
        Ok(field)
    }

    pub fn zero(region: &RegionSpec) -> Self {
        TangentField { speeds: vec![0.0; region.endpoints().len()] }
    }

    /// Speed `v` at endpoint `index`, zero elsewhere.
    pub fn single(region: &RegionSpec, index: usize, v: f64) -> Result<Self> {
        let mut speeds = vec![0.0; region.endpoints().len()];
        if index >= speeds.len() {
            return Err(Error::Shape(format!("endpoint {index} of {}", speeds.len())));
        }
        speeds[index] = v;
        Self::new(region, speeds)
    }

    /// Unit speed pointing out of `D` at endpoint `index` (mass-increasing).
    pub fn outward(region: &RegionSpec, index: usize) -> Result<Self> {
        let eps = region.endpoints();
        let side = eps.get(index).map(|e| e.side).ok_or_else(|| Error::Shape(format!("endpoint {index} of {}", eps.len())))?;
        Self::single(region, index, if side == ArcSide::End { 1.0 } else { -1.0 })
    }

    pub fn scaled(&self, c: f64) -> Self {
        TangentField { speeds: self.speeds.iter().map(|v| c * v).collect() }
    }

    fn check(&self, region: &RegionSpec) -> Result<()> {
        let n = region.endpoints().len();
        if self.speeds.len() != n {
            return Err(Error::Shape(format!("{} speeds for {n} endpoints", self.speeds.len())));
        }
        if self.speeds.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("speeds must be finite".into()));
        }
        Ok(())
    }
}

/// Overall sign of the closed-form derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// `+sigma sum |u|^p (V . n)`: the derivative of the penalty term at fixed `u`.
    #[default]
    Envelope,
    /// The opposite sign, `-sigma sum |u|^p (V . n)`.
    Negated,
}

impl SignConvention {
    pub fn factor(self) -> f64 {
        match self {
            SignConvention::Envelope => 1.0,
            SignConvention::Negated => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdEntry {
    pub t: f64,
    pub diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub formula_value: f64,
    pub fd_value: f64,
    pub fd_table: Vec<FdEntry>,
    /// `formula_value * fd_value > 0`.
    pub sign_consistent: bool,
    /// `|formula - fd| / max(|fd|, 1e-14)`.
    pub relative_error: f64,
    pub sign_convention: SignConvention,
    /// Eigenvalue of the unperturbed region.
    pub lambda: f64,
    /// Steps at which some endpoint crosses a mesh vertex, where `lambda(t)` is only piecewise smooth.
    pub vertex_crossings: Vec<f64>,
}

impl DerivativeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Observed order of the central differences from the last three table rows,
    /// `log(|d1 - d2| / |d2 - d3|) / log(t1 / t2)`; `None` when undefined.
    pub fn observed_order(&self) -> Option<f64> {
        let n = self.fd_table.len();
        if n < 3 {
            return None;
        }
        let [a, b, c] = [&self.fd_table[n - 3], &self.fd_table[n - 2], &self.fd_table[n - 1]];
        let num = (a.diff - b.diff).abs();
        let den = (b.diff - c.diff).abs();
        if num == 0.0 || den == 0.0 {
            return None;
        }
        Some((num / den).ln() / (a.t / b.t).ln())
    }

    /// Plain-text convergence table.
    pub fn table(&self) -> String {
        let mut out = format!("{:>12}  {:>22}\n", "t", "central difference");
        for e in &self.fd_table {
            out.push_str(&format!("{:>12.4e}  {:>22.15e}\n", e.t, e.diff));
        }
        out.push_str(&format!("{:>12}  {:>22.15e}\n", "richardson", self.fd_value));
        out.push_str(&format!("{:>12}  {:>22.15e}\n", "formula", self.formula_value));
        out
    }
}

fn check_pair(mesh: &Mesh, eig: &EigenPair, region: &RegionSpec, params: &ProblemParams) -> Result<()> {
    let expected = BoundaryDensity::from_region(mesh, region)?.digest();
    if eig.potential_digest != Some(expected) {
        return Err(Error::RegionMismatch("the eigenpair was not solved for the indicator of this region".into()));
    }
    if eig.p != params.p || eig.sigma != params.sigma {
        return Err(Error::RegionMismatch(format!(
            "eigenpair solved with p = {}, sigma = {}; requested p = {}, sigma = {}",
            eig.p, eig.sigma, params.p, params.sigma
        )));
    }
    Ok(())
}

/// `sign * sigma * sum_x |u(x)|^p (V . n)(x)` over the endpoints `x` of `region`,
/// where `n` is the unit tangent pointing out of the region and `u(x)` the
/// linear interpolation of the trace.
pub fn shape_derivative_formula(
    mesh: &Mesh,
    eig: &EigenPair,
    region: &RegionSpec,
    params: &ProblemParams,
    field: &TangentField,
    convention: SignConvention,
) -> Result<f64> {
    params.validate()?;
    field.check(region)?;
    check_pair(mesh, eig, region, params)?;
    let mut sum = 0.0;
    for (ep, &v) in region.endpoints().iter().zip(&field.speeds) {
        let u = eig.u.trace_at(mesh, ep.s)?;
        let normal_speed = match ep.side {
            ArcSide::Start => -v,
            ArcSide::End => v,
        };
        sum += abs_pow(u, params.p) * normal_speed;
    }
    Ok(convention.factor() * params.sigma * sum)
}

/// `D_t`: every endpoint moved by `t` times its speed.
pub fn perturb_region(region: &RegionSpec, field: &TangentField, t: f64) -> Result<RegionSpec> {
    field.check(region)?;
    region.perturb(&field.speeds, t)
}

fn check_steps(t_steps: &[f64]) -> Result<()> {
    if t_steps.len() < 3 {
        return Err(Error::Argument("at least three steps are required".into()));
    }
    if t_steps.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Argument("steps must be positive".into()));
    }
    let ratio = t_steps[0] / t_steps[1];
    if !(ratio > 1.0) || t_steps.windows(2).any(|w| ((w[0] / w[1]) - ratio).abs() > 1e-9 * ratio) {
        return Err(Error::Argument("steps must decrease in a geometric progression".into()));
    }
    Ok(())
}

/// Whether moving endpoints over `[-t, t]` passes a mesh vertex.
fn crosses_vertex(mesh: &Mesh, region: &RegionSpec, field: &TangentField, t: f64) -> bool {
    let p = mesh.perimeter();
    region.endpoints().iter().zip(&field.speeds).any(|(ep, &v)| {
        let reach = (t * v).abs();
        reach > 0.0
            && mesh.cum_arclength().iter().any(|&c| {
                let d = (ep.s - c).rem_euclid(p);
                d.min(p - d) < reach
            })
    })
}

/// Central differences `(lambda(D_t) - lambda(D_-t)) / 2t` for each step,
/// Richardson extrapolation of the two smallest, and the closed-form value.
pub fn shape_derivative_fd(
    mesh: &Mesh,
    region: &RegionSpec,
    params: &ProblemParams,
    field: &TangentField,
    t_steps: &[f64],
    opts: &SolverOptions,
    convention: SignConvention,
) -> Result<DerivativeReport> {
    params.validate()?;
    field.check(region)?;
    check_steps(t_steps)?;
    let mut regions = vec![region.clone()];
    for &t in t_steps {
        regions.push(perturb_region(region, field, t)?);
        regions.push(perturb_region(region, field, -t)?);
    }
    let densities = regions.iter().map(|r| BoundaryDensity::from_region(mesh, r)).collect::<Result<Vec<_>>>()?;
    let run = |phi: &BoundaryDensity| solve(mesh, phi, params, opts);
    #[cfg(feature = "parallel")]
    let pairs: Vec<EigenPair> = {
        use rayon::prelude::*;
        densities.par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<EigenPair> = densities.iter().map(run).collect::<Result<_>>()?;

    let fd_table: Vec<FdEntry> = t_steps
        .iter()
        .enumerate()
        .map(|(k, &t)| FdEntry { t, diff: (pairs[1 + 2 * k].lambda - pairs[2 + 2 * k].lambda) / (2.0 * t) })
        .collect();
    let n = fd_table.len();
    let r2 = (fd_table[n - 2].t / fd_table[n - 1].t).powi(2);
    let fd_value = (r2 * fd_table[n - 1].diff - fd_table[n - 2].diff) / (r2 - 1.0);
    let formula_value = shape_derivative_formula(mesh, &pairs[0], region, params, field, convention)?;
    let vertex_crossings = t_steps.iter().copied().filter(|&t| crosses_vertex(mesh, region, field, t)).collect();
    Ok(DerivativeReport {
        formula_value,
        fd_value,
        fd_table,
        sign_consistent: formula_value * fd_value > 0.0,
        relative_error: (formula_value - fd_value).abs() / fd_value.abs().max(1e-14),
        sign_convention: convention,
        lambda: pairs[0].lambda,
        vertex_crossings,
    })
}
