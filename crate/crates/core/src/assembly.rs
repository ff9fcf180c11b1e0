//! Discrete energy functional, its gradient, the boundary `L^p` norm and the
//! `p = 2` matrices.
//!
//! For a piecewise-linear `u` and a potential `phi` that is constant on each
//! boundary edge, the discrete energy is
//!
//! ```text
//! I(u, phi) = sum_T |grad u|_T|^p area(T)
//!           + sum_T area(T)/3 sum_{v in T} |u_v|^p
//!           + sigma sum_e phi_e len(e) (|u_i|^p + |u_j|^p) / 2
//! ```
//!
//! i.e. the gradient term is exact, the volume term uses vertex quadrature and
//! the boundary term uses the trapezoidal rule on every edge `(i, j)`. Every
//! other module (bathtub weights, Rayleigh quotients, matrices) uses this same
//! rule, so identities between them hold to rounding.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, RegionSpec};
use crate::sparse::CsrMatrix;

/// Default gradient regularization used when `p < 2`.
pub const DEFAULT_EPS_REG: f64 = 1e-8;

#[cfg(feature = "parallel")]
const PAR_CHUNK: usize = 4096;

/// `|x|^p`.
#[inline]
pub fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

/// `|x|^(p-2) x`, extended by 0 at `x = 0`.
#[inline]
pub fn signed_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if p == 2.0 {
        x
    } else {
        x.abs().powf(p - 2.0) * x
    }
}

/// A continuous piecewise-linear function given by its nodal values.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    mesh_id: u64,
}

impl Field {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::Shape(format!(
                "field has {} values for {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("field values must be finite".into()));
        }
        Ok(Field { values, mesh_id: mesh.id() })
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Field { values: vec![c; mesh.num_vertices()], mesh_id: mesh.id() }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Field { values: mesh.vertices().iter().map(|&x| f(x)).collect(), mesh_id: mesh.id() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, t: f64) -> Field {
        Field { values: self.values.iter().map(|v| v * t).collect(), mesh_id: self.mesh_id }
    }

    pub(crate) fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_vertices() {
            return Err(Error::Shape("field belongs to a different mesh".into()));
        }
        Ok(())
    }

    /// Linear interpolation of the trace at arc-length `s`.
    pub fn trace_at(&self, mesh: &Mesh, s: f64) -> Result<f64> {
        self.check(mesh)?;
        let (e, t) = mesh.locate_arc_point(s)?;
        let [i, j] = mesh.boundary_loop()[e];
        Ok((1.0 - t) * self.values[i] + t * self.values[j])
    }
}

/// Piecewise-constant boundary potential with values in `[0, 1]`, one per
/// boundary edge in loop order.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryDensity {
    values: Vec<f64>,
    mass: f64,
    mesh_id: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityFile {
    edge_values: Vec<f64>,
}

/// How [`BoundaryDensity::binarize`] treats fractional edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarize {
    /// `phi_e >= 1/2` becomes 1, the rest 0.
    Round,
    /// Only edges that are already 1 are kept.
    Drop,
    /// Every edge with `phi_e > 0` becomes 1.
    Support,
}

impl BoundaryDensity {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_boundary_edges() {
            return Err(Error::Shape(format!(
                "density has {} values for {} boundary edges",
                values.len(),
                mesh.num_boundary_edges()
            )));
        }
        if let Some((e, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::Argument(format!("density value {v} on edge {e} outside [0, 1]")));
        }
        let mass = values.iter().zip(mesh.edge_lengths()).map(|(v, l)| v * l).sum();
        Ok(BoundaryDensity { values, mass, mesh_id: mesh.id() })
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        BoundaryDensity { values: vec![0.0; mesh.num_boundary_edges()], mass: 0.0, mesh_id: mesh.id() }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Result<Self> {
        Self::new(mesh, vec![c; mesh.num_boundary_edges()])
    }

    /// Indicator of a region, with fractional values on edges the region covers partially.
    pub fn from_region(mesh: &Mesh, region: &RegionSpec) -> Result<Self> {
        if (region.perimeter() - mesh.perimeter()).abs() > 1e-12 * mesh.perimeter() {
            return Err(Error::Shape("region perimeter differs from the mesh perimeter".into()));
        }
        let values = mesh
            .cum_arclength()
            .iter()
            .zip(mesh.edge_lengths())
            .map(|(&c, &l)| (region.overlap(c, c + l) / l).clamp(0.0, 1.0))
            .collect();
        Self::new(mesh, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `sum_e phi_e len(e)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub(crate) fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_boundary_edges() {
            return Err(Error::Shape("density belongs to a different mesh".into()));
        }
        Ok(())
    }

    pub fn binarize(&self, mesh: &Mesh, mode: Binarize) -> Result<Self> {
        let values = self
            .values
            .iter()
            .map(|&v| {
                let keep = match mode {
                    Binarize::Round => v >= 0.5,
                    Binarize::Drop => v >= 1.0,
                    Binarize::Support => v > 0.0,
                };
                if keep {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(mesh, values)
    }

    /// Region made of the maximal runs of edges with a positive value, each run
    /// taken as a whole arc.
    pub fn support_region(&self, mesh: &Mesh) -> Result<RegionSpec> {
        let n = self.values.len();
        let on: Vec<bool> = self.values.iter().map(|&v| v > 0.0).collect();
        if on.iter().all(|&b| b) {
            return Ok(RegionSpec::full(mesh.perimeter()));
        }
        let first_off = on.iter().position(|&b| !b).unwrap_or(0);
        let mut intervals = Vec::new();
        let mut k = 0;
        while k < n {
            let e = (first_off + k) % n;
            if on[e] {
                let begin = mesh.cum_arclength()[e];
                let mut len = 0.0;
                while k < n && on[(first_off + k) % n] {
                    len += mesh.edge_lengths()[(first_off + k) % n];
                    k += 1;
                }
                intervals.push((begin, begin + len));
            } else {
                k += 1;
            }
        }
        RegionSpec::from_intervals(&intervals, mesh.perimeter())
    }

    /// Hash of the exact values, used to match eigenpairs with the potential they were solved for.
    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.mesh_id.hash(&mut h);
        for v in &self.values {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DensityFile { edge_values: self.values.clone() }).expect("serializable")
    }

    pub fn from_json(mesh: &Mesh, text: &str) -> Result<Self> {
        let file: DensityFile = serde_json::from_str(text)?;
        Self::new(mesh, file.edge_values)
    }
}

/// Exponent, penalty weight and gradient regularization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub p: f64,
    pub sigma: f64,
    pub eps_reg: f64,
}

impl ProblemParams {
    /// Parameters with the default regularization for this `p`.
    pub fn new(p: f64, sigma: f64) -> Result<Self> {
        let eps_reg = if p < 2.0 { DEFAULT_EPS_REG } else { 0.0 };
        Self::with_eps(p, sigma, eps_reg)
    }

    pub fn with_eps(p: f64, sigma: f64, eps_reg: f64) -> Result<Self> {
        let params = ProblemParams { p, sigma, eps_reg };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::Argument(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Argument(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if !(self.eps_reg >= 0.0 && self.eps_reg.is_finite()) {
            return Err(Error::Argument(format!("eps_reg must be nonnegative, got {}", self.eps_reg)));
        }
        Ok(())
    }
}

pub(crate) fn triangle_gradient(mesh: &Mesh, u: &[f64], t: usize) -> [f64; 2] {
    let tri = mesh.triangles()[t];
    let g = &mesh.hat_gradients()[t];
    let mut out = [0.0; 2];
    for k in 0..3 {
        out[0] += u[tri[k]] * g[k][0];
        out[1] += u[tri[k]] * g[k][1];
    }
    out
}

fn gradient_term_range(mesh: &Mesh, u: &[f64], p: f64, range: std::ops::Range<usize>) -> f64 {
    range
        .map(|t| {
            let g = triangle_gradient(mesh, u, t);
            let sq = g[0] * g[0] + g[1] * g[1];
            let val = if p == 2.0 { sq } else { sq.powf(0.5 * p) };
            val * mesh.areas()[t]
        })
        .sum()
}

/// `sum_T |grad u|_T|^p area(T)`.
pub fn gradient_term(mesh: &Mesh, u: &[f64], p: f64) -> f64 {
    #[cfg(feature = "parallel")]
    {
        let nt = mesh.triangles().len();
        if nt > PAR_CHUNK {
            use rayon::prelude::*;
            let chunks: Vec<f64> = (0..nt.div_ceil(PAR_CHUNK))
                .into_par_iter()
                .map(|c| gradient_term_range(mesh, u, p, c * PAR_CHUNK..((c + 1) * PAR_CHUNK).min(nt)))
                .collect();
            return chunks.iter().sum();
        }
    }
    gradient_term_range(mesh, u, p, 0..mesh.triangles().len())
}

/// Lumped `sum_v m_v |u_v|^p`.
pub fn volume_term(mesh: &Mesh, u: &[f64], p: f64) -> f64 {
    mesh.lumped_mass().iter().zip(u).map(|(m, &x)| m * abs_pow(x, p)).sum()
}

/// Trapezoidal `sum_e phi_e len(e) (|u_i|^p + |u_j|^p) / 2`.
pub fn boundary_term(mesh: &Mesh, u: &[f64], phi: &[f64], p: f64) -> f64 {
    mesh.boundary_loop()
        .iter()
        .zip(mesh.edge_lengths())
        .zip(phi)
        .filter(|(_, &f)| f != 0.0)
        .map(|((&[i, j], &len), &f)| f * len * 0.5 * (abs_pow(u[i], p) + abs_pow(u[j], p)))
        .sum()
}

/// Per-edge trapezoidal weights `w_e = (|u_i|^p + |u_j|^p) / 2`.
pub fn edge_weights(mesh: &Mesh, u: &Field, p: f64) -> Result<Vec<f64>> {
    u.check(mesh)?;
    let v = u.values();
    Ok(mesh
        .boundary_loop()
        .iter()
        .map(|&[i, j]| 0.5 * (abs_pow(v[i], p) + abs_pow(v[j], p)))
        .collect())
}

/// The discrete functional `I(u, phi)`.
pub fn energy(mesh: &Mesh, u: &Field, phi: &BoundaryDensity, params: &ProblemParams) -> Result<f64> {
    u.check(mesh)?;
    phi.check(mesh)?;
    Ok(energy_raw(mesh, u.values(), phi.values(), params))
}

pub(crate) fn energy_raw(mesh: &Mesh, u: &[f64], phi: &[f64], params: &ProblemParams) -> f64 {
    let p = params.p;
    let mut e = gradient_term(mesh, u, p) + volume_term(mesh, u, p);
    if params.sigma != 0.0 {
        e += params.sigma * boundary_term(mesh, u, phi, p);
    }
    e
}

/// `(sum_e len(e) (|u_i|^p + |u_j|^p) / 2)^(1/p)`.
pub fn boundary_p_norm(mesh: &Mesh, u: &Field, p: f64) -> Result<f64> {
    u.check(mesh)?;
    if !(p > 1.0) {
        return Err(Error::Argument(format!("p must exceed 1, got {p}")));
    }
    Ok(boundary_p_norm_raw(mesh, u.values(), p))
}

pub(crate) fn boundary_power_raw(mesh: &Mesh, u: &[f64], p: f64) -> f64 {
    mesh.boundary_loop()
        .iter()
        .zip(mesh.edge_lengths())
        .map(|(&[i, j], &len)| len * 0.5 * (abs_pow(u[i], p) + abs_pow(u[j], p)))
        .sum()
}

pub(crate) fn boundary_p_norm_raw(mesh: &Mesh, u: &[f64], p: f64) -> f64 {
    boundary_power_raw(mesh, u, p).powf(1.0 / p)
}

fn add_gradient_term_range(
    mesh: &Mesh,
    u: &[f64],
    params: &ProblemParams,
    range: std::ops::Range<usize>,
    out: &mut [f64],
) {
    let p = params.p;
    let eps2 = params.eps_reg * params.eps_reg;
    for t in range {
        let g = triangle_gradient(mesh, u, t);
        let sq = g[0] * g[0] + g[1] * g[1] + eps2;
        let factor = if p == 2.0 {
            2.0
        } else if sq == 0.0 {
            0.0
        } else {
            p * sq.powf(0.5 * (p - 2.0))
        } * mesh.areas()[t];
        let tri = mesh.triangles()[t];
        let hg = &mesh.hat_gradients()[t];
        for k in 0..3 {
            out[tri[k]] += factor * (g[0] * hg[k][0] + g[1] * hg[k][1]);
        }
    }
}

/// Nodal gradient of the discrete energy. The gradient term uses
/// `(|grad u|^2 + eps^2)^((p-2)/2) grad u`, which is the exact derivative when
/// `eps = 0` and `p >= 2`.
pub fn energy_gradient(mesh: &Mesh, u: &Field, phi: &BoundaryDensity, params: &ProblemParams) -> Result<Field> {
    u.check(mesh)?;
    phi.check(mesh)?;
    let values = energy_gradient_raw(mesh, u.values(), phi.values(), params);
    Ok(Field { values, mesh_id: mesh.id() })
}

pub(crate) fn energy_gradient_raw(mesh: &Mesh, u: &[f64], phi: &[f64], params: &ProblemParams) -> Vec<f64> {
    let n = mesh.num_vertices();
    let p = params.p;
    let mut out = vec![0.0; n];

    #[cfg(feature = "parallel")]
    let done = {
        let nt = mesh.triangles().len();
        if nt > PAR_CHUNK {
            use rayon::prelude::*;
            let partials: Vec<Vec<f64>> = (0..nt.div_ceil(PAR_CHUNK))
                .into_par_iter()
                .map(|c| {
                    let mut part = vec![0.0; n];
                    add_gradient_term_range(mesh, u, params, c * PAR_CHUNK..((c + 1) * PAR_CHUNK).min(nt), &mut part);
                    part
                })
                .collect();
            for part in partials {
                for (o, v) in out.iter_mut().zip(part) {
                    *o += v;
                }
            }
            true
        } else {
            false
        }
    };
    #[cfg(not(feature = "parallel"))]
    let done = false;
    if !done {
        add_gradient_term_range(mesh, u, params, 0..mesh.triangles().len(), &mut out);
    }

    for ((o, &m), &x) in out.iter_mut().zip(mesh.lumped_mass()).zip(u) {
        *o += m * p * signed_pow(x, p);
    }
    if params.sigma != 0.0 {
        for ((&[i, j], &len), &f) in mesh.boundary_loop().iter().zip(mesh.edge_lengths()).zip(phi) {
            if f != 0.0 {
                let c = params.sigma * f * len * 0.5 * p;
                out[i] += c * signed_pow(u[i], p);
                out[j] += c * signed_pow(u[j], p);
            }
        }
    }
    out
}

/// Gradient of `sum_e len(e) (|u_i|^p + |u_j|^p) / 2`.
pub(crate) fn boundary_power_gradient_raw(mesh: &Mesh, u: &[f64], p: f64) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_vertices()];
    for (&[i, j], &len) in mesh.boundary_loop().iter().zip(mesh.edge_lengths()) {
        let c = len * 0.5 * p;
        out[i] += c * signed_pow(u[i], p);
        out[j] += c * signed_pow(u[j], p);
    }
    out
}

/// Matrices of the `p = 2` problem `A u = lambda Mb u`.
///
/// `A` is stiffness plus lumped volume mass plus `sigma` times the
/// `phi`-weighted trapezoidal boundary mass; `Mb` is the unweighted trapezoidal
/// boundary mass. Both are diagonal on the boundary part, and `u^T A u`
/// reproduces [`energy`] at `p = 2`.
pub fn assemble_linear(mesh: &Mesh, phi: &BoundaryDensity, sigma: f64) -> Result<(CsrMatrix, CsrMatrix)> {
    phi.check(mesh)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("sigma must be nonnegative, got {sigma}")));
    }
    let n = mesh.num_vertices();
    let mut a = Vec::with_capacity(9 * mesh.triangles().len() + n + 2 * mesh.num_boundary_edges());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = &mesh.hat_gradients()[t];
        let area = mesh.areas()[t];
        for i in 0..3 {
            a.push((tri[i], tri[i], area * (g[i][0] * g[i][0] + g[i][1] * g[i][1])));
            for j in (i + 1)..3 {
                let k = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                a.push((tri[i], tri[j], k));
                a.push((tri[j], tri[i], k));
            }
        }
    }
    for (v, &m) in mesh.lumped_mass().iter().enumerate() {
        a.push((v, v, m));
    }
    let mut mb = Vec::with_capacity(2 * mesh.num_boundary_edges());
    for ((&[i, j], &len), &f) in mesh.boundary_loop().iter().zip(mesh.edge_lengths()).zip(phi.values()) {
        mb.push((i, i, 0.5 * len));
        mb.push((j, j, 0.5 * len));
        if sigma != 0.0 && f != 0.0 {
            a.push((i, i, sigma * f * 0.5 * len));
            a.push((j, j, sigma * f * 0.5 * len));
        }
    }
    Ok((CsrMatrix::from_triplets(n, &a), CsrMatrix::from_triplets(n, &mb)))
}

/// `sum_T kappa_T area(T) grad(phi_i) . grad(phi_j)` plus a diagonal.
pub(crate) fn weighted_operator(mesh: &Mesh, kappa: &[f64], diag: &[f64]) -> CsrMatrix {
    let n = mesh.num_vertices();
    let mut a = Vec::with_capacity(9 * mesh.triangles().len() + n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = &mesh.hat_gradients()[t];
        let c = kappa[t] * mesh.areas()[t];
        for i in 0..3 {
            a.push((tri[i], tri[i], c * (g[i][0] * g[i][0] + g[i][1] * g[i][1])));
            for j in (i + 1)..3 {
                let k = c * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                a.push((tri[i], tri[j], k));
                a.push((tri[j], tri[i], k));
            }
        }
    }
    for (v, &d) in diag.iter().enumerate() {
        a.push((v, v, d));
    }
    CsrMatrix::from_triplets(n, &a)
}
