//! First eigenpair of the Steklov problem with a boundary potential.
//!
//! The first eigenvalue is the minimum of the Rayleigh quotient
//! `R(u) = I(u, phi) / ||u||_{L^p(boundary)}^p`. For `p = 2` it is computed by
//! inverse iteration on `A u = lambda Mb u`; for general `p` by descent on `R`
//! in the metric of the `p = 2` operator. The `sigma = infinity` problem
//! removes the boundary vertices of a set `E` from the unknowns.

use serde::{Deserialize, Serialize};

use crate::assembly::{
    abs_pow, assemble_linear, triangle_gradient, weighted_operator, boundary_p_norm_raw, boundary_power_gradient_raw, boundary_power_raw, energy_gradient_raw,
    energy_raw, BoundaryDensity, Field, ProblemParams,
};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, RegionSpec};
use crate::sparse::{CsrMatrix, SpdSolver, DIRECT_SOLVE_LIMIT};

/// Nodes below this value make the solver raise its positivity flag.
pub const POSITIVITY_SLACK: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative change of the eigenvalue (and, for descent, the scaled gradient norm) at which to stop.
    pub tol: f64,
    pub max_iters: usize,
    /// Seed for randomized starting vectors; the default start is deterministic.
    pub seed: u64,
    /// Sufficient-decrease factor of the Armijo test.
    pub armijo_slope: f64,
    /// Step reduction factor while backtracking.
    pub armijo_backtrack: f64,
    /// Unknown count from which linear solves switch to conjugate gradients.
    pub direct_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iters: 10_000,
            seed: 0,
            armijo_slope: 1e-4,
            armijo_backtrack: 0.5,
            direct_limit: DIRECT_SOLVE_LIMIT,
        }
    }
}

impl SolverOptions {
    /// Defaults for exponent `p`: `tol = 1e-9` at `p = 2`, `1e-7` otherwise.
    pub fn for_exponent(p: f64) -> Self {
        let tol = if p == 2.0 { 1e-9 } else { 1e-7 };
        SolverOptions { tol, ..Default::default() }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Argument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be at least 1".into()));
        }
        if !(self.armijo_slope > 0.0 && self.armijo_slope < 1.0)
            || !(self.armijo_backtrack > 0.0 && self.armijo_backtrack < 1.0)
        {
            return Err(Error::Argument("Armijo factors must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// First eigenvalue with its nonnegative eigenfunction normalized to unit boundary `L^p` norm.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda: f64,
    pub u: Field,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Some node fell below `-POSITIVITY_SLACK`.
    pub positivity_violation: bool,
    pub p: f64,
    pub sigma: f64,
    /// Digest of the potential the pair was solved for; `None` for the Dirichlet problem.
    pub potential_digest: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EigenPairFile {
    lambda: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    u: Vec<f64>,
}

impl EigenPair {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&EigenPairFile {
            lambda: self.lambda,
            iterations: self.iterations,
            residual: self.residual,
            converged: self.converged,
            u: self.u.values().to_vec(),
        })
        .expect("serializable")
    }

    /// Reads a serialized pair. Solver context that is not serialized (exponent,
    /// penalty, potential digest) comes from the arguments.
    pub fn from_json(mesh: &Mesh, text: &str, p: f64, sigma: f64) -> Result<Self> {
        let f: EigenPairFile = serde_json::from_str(text)?;
        let positivity_violation = f.u.iter().any(|&x| x < -POSITIVITY_SLACK);
        Ok(EigenPair {
            lambda: f.lambda,
            u: Field::new(mesh, f.u)?,
            iterations: f.iterations,
            residual: f.residual,
            converged: f.converged,
            positivity_violation,
            p,
            sigma,
            potential_digest: None,
        })
    }
}

/// `I(u, phi) / ||u||^p`.
pub fn rayleigh(mesh: &Mesh, u: &Field, phi: &BoundaryDensity, params: &ProblemParams) -> Result<f64> {
    params.validate()?;
    let e = crate::assembly::energy(mesh, u, phi, params)?;
    let nb = boundary_power_raw(mesh, u.values(), params.p);
    if !(nb > 0.0) {
        return Err(Error::Argument("field has zero boundary trace".into()));
    }
    Ok(e / nb)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioner restricted to the free unknowns.
struct Reduced {
    free: Vec<usize>,
    solver: SpdSolver,
    n: usize,
}

impl Reduced {
    fn new(a: &CsrMatrix, free: Option<Vec<usize>>, limit: usize) -> Result<Self> {
        let n = a.dim();
        match free {
            None => Ok(Reduced { free: (0..n).collect(), solver: SpdSolver::with_limit(a, limit)?, n }),
            Some(free) => {
                let sub = a.principal_submatrix(&free);
                Ok(Reduced { free, solver: SpdSolver::with_limit(&sub, limit)?, n })
            }
        }
    }

    /// Solves on the free block; fixed entries of the result are zero.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b: Vec<f64> = self.free.iter().map(|&i| rhs[i]).collect();
        let x = self.solver.solve(&b)?;
        let mut out = vec![0.0; self.n];
        for (&i, v) in self.free.iter().zip(x) {
            out[i] = v;
        }
        Ok(out)
    }
}

fn free_indices(mesh: &Mesh, fixed: &[bool]) -> Vec<usize> {
    (0..mesh.num_vertices()).filter(|&i| !fixed[i]).collect()
}

fn normalize(mesh: &Mesh, u: &mut [f64], p: f64) -> Result<()> {
    let nrm = boundary_p_norm_raw(mesh, u, p);
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(Error::Internal("iterate lost its boundary trace".into()));
    }
    for x in u.iter_mut() {
        *x /= nrm;
    }
    Ok(())
}

fn orient_nonnegative(mesh: &Mesh, u: &mut [f64]) {
    let mean: f64 = mesh.boundary_vertices().map(|v| u[v]).sum();
    if mean < 0.0 {
        for x in u.iter_mut() {
            *x = -*x;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    mesh: &Mesh,
    mut u: Vec<f64>,
    phi: &[f64],
    params: &ProblemParams,
    iterations: usize,
    residual: f64,
    converged: bool,
    potential_digest: Option<u64>,
) -> Result<EigenPair> {
    orient_nonnegative(mesh, &mut u);
    normalize(mesh, &mut u, params.p)?;
    let lambda = energy_raw(mesh, &u, phi, params) / boundary_power_raw(mesh, &u, params.p);
    let positivity_violation = u.iter().any(|&x| x < -POSITIVITY_SLACK);
    Ok(EigenPair {
        lambda,
        u: Field::new(mesh, u)?,
        iterations,
        residual,
        converged,
        positivity_violation,
        p: params.p,
        sigma: params.sigma,
        potential_digest,
    })
}

/// Inverse iteration for the smallest eigenvalue of `A u = lambda Mb u` with a
/// nontrivial boundary trace, optionally on a subset of free unknowns.
///
/// Stops once the relative change of the Rayleigh quotient and the scaled dual
/// residual `2 sqrt(r^T A^-1 r) / lambda`, `r = A u - lambda Mb u`, are both
/// below `opts.tol`; the latter is the descent gradient test at `p = 2`.
#[allow(clippy::too_many_arguments)]
fn inverse_iteration(
    mesh: &Mesh,
    a: &CsrMatrix,
    mb: &CsrMatrix,
    fixed: Option<&[bool]>,
    phi: &[f64],
    params: &ProblemParams,
    opts: &SolverOptions,
    mut u: Vec<f64>,
    digest: Option<u64>,
) -> Result<EigenPair> {
    let free = fixed.map(|f| free_indices(mesh, f));
    let solver = Reduced::new(a, free, opts.direct_limit)?;
    if let Some(f) = fixed {
        for (x, &is_fixed) in u.iter_mut().zip(f) {
            if is_fixed {
                *x = 0.0;
            }
        }
    }
    normalize(mesh, &mut u, 2.0)?;
    let mut lambda = a.quad_form(&u);
    let mut converged = false;
    let mut iterations = 0;
    let mut gnorm = f64::INFINITY;
    for k in 1..=opts.max_iters {
        iterations = k;
        let mbu = mb.mul_vec(&u);
        let mut w = solver.solve(&mbu)?;
        let au = a.mul_vec(&u);
        let rd: f64 = au
            .iter()
            .zip(&mbu)
            .zip(u.iter().zip(&w))
            .map(|((ax, mx), (ux, wx))| (ax - lambda * mx) * (ux - lambda * wx))
            .sum();
        gnorm = 2.0 * rd.max(0.0).sqrt() / lambda.abs().max(f64::MIN_POSITIVE);
        let scale = mb.quad_form(&w).sqrt();
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Internal("inverse iteration produced no boundary trace".into()));
        }
        for x in w.iter_mut() {
            *x /= scale;
        }
        let new_lambda = a.quad_form(&w);
        u = w;
        let change = (new_lambda - lambda).abs() / new_lambda.abs().max(f64::MIN_POSITIVE);
        lambda = new_lambda;
        if change <= opts.tol && gnorm <= opts.tol {
            converged = true;
            break;
        }
    }
    finish(mesh, u, phi, params, iterations, gnorm, converged, digest)
}

/// First eigenpair at `p = 2` by inverse iteration from the constant start.
pub fn solve_linear(mesh: &Mesh, phi: &BoundaryDensity, sigma: f64, opts: &SolverOptions) -> Result<EigenPair> {
    solve_linear_from(mesh, phi, sigma, opts, &Field::constant(mesh, 1.0))
}

/// Same as [`solve_linear`] from a caller-provided start with nonzero boundary trace.
pub fn solve_linear_from(
    mesh: &Mesh,
    phi: &BoundaryDensity,
    sigma: f64,
    opts: &SolverOptions,
    start: &Field,
) -> Result<EigenPair> {
    opts.validate()?;
    phi.check(mesh)?;
    start.check(mesh)?;
    let params = ProblemParams::with_eps(2.0, sigma, 0.0)?;
    let (a, mb) = assemble_linear(mesh, phi, sigma)?;
    inverse_iteration(mesh, &a, &mb, None, phi.values(), &params, opts, start.values().to_vec(), Some(phi.digest()))
}

/// Positive start with values uniform in `[0.5, 1.5)`, deterministic in `seed`.
pub fn random_positive_start(mesh: &Mesh, seed: u64) -> Field {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = (0..mesh.num_vertices()).map(|_| rng.gen_range(0.5..1.5)).collect();
    Field::new(mesh, values).expect("length matches")
}

/// Relative change of `R` treated as round-off.
const ROUNDOFF_CHANGE: f64 = 1e-14;
/// Consecutive round-off steps after which descent stops.
const STALL_ITERATIONS: usize = 10;
/// For `p < 2` the gradient of `|grad u|^p` is not Lipschitz where `grad u` vanishes and
/// its round-off floor can exceed `tol` once `R` no longer changes; a stalled
/// iterate counts as converged if its gradient norm is within this factor of `tol`.
const STALL_GRADIENT_FACTOR: f64 = 1e3;
/// Iterations between rebuilds of the descent metric for `p < 2`.
const METRIC_REFRESH: usize = 20;
/// Relative floor on gradient magnitudes and nodal values inside the metric.
const METRIC_FLOOR: f64 = 1e-3;

/// Isotropic part of the second variation of the energy at `u`: gradient-weighted
/// stiffness with weights `p (|grad u|^2 + eps^2)^((p-2)/2)` and a diagonal
/// `p (p-1) |u_v|^(p-2)` times lumped volume plus potential mass. At `p = 2` it
/// is twice the linear operator.
fn descent_metric(mesh: &Mesh, u: &[f64], phi: &[f64], params: &ProblemParams) -> CsrMatrix {
    let p = params.p;
    let eps2 = params.eps_reg * params.eps_reg;
    let sq: Vec<f64> = (0..mesh.triangles().len())
        .map(|t| {
            let g = triangle_gradient(mesh, u, t);
            g[0] * g[0] + g[1] * g[1] + eps2
        })
        .collect();
    let umax = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    // gradient scale of a field of size umax varying over the domain
    let scale_sq = umax * umax / mesh.total_area();
    let floor_sq = METRIC_FLOOR * METRIC_FLOOR * scale_sq;
    let kappa: Vec<f64> = sq.iter().map(|&s| p * s.max(floor_sq).powf(0.5 * (p - 2.0))).collect();
    let mut weight = mesh.lumped_mass().to_vec();
    for ((&[i, j], &len), &f) in mesh.boundary_loop().iter().zip(mesh.edge_lengths()).zip(phi) {
        weight[i] += params.sigma * f * 0.5 * len;
        weight[j] += params.sigma * f * 0.5 * len;
    }
    let floor_u = METRIC_FLOOR * umax;
    let diag: Vec<f64> = u
        .iter()
        .zip(&weight)
        .map(|(&x, &w)| p * (p - 1.0) * abs_pow(x.abs().max(floor_u), p - 2.0) * w)
        .collect();
    weighted_operator(mesh, &kappa, &diag)
}

/// Preconditioned descent on the Rayleigh quotient from the start `u`.
///
/// Directions are Polak-Ribiere conjugate gradients in the inner product of
/// `precond`, or of [`descent_metric`] rebuilt every `METRIC_REFRESH` steps when
/// `precond` is `None`, with Armijo backtracking. Each iterate is
/// renormalized to unit boundary norm. Stops once the relative change of `R`
/// and the scaled dual gradient norm are both below `opts.tol`, or when `R` has
/// stalled at round-off with a gradient norm below `STALL_GRADIENT_FACTOR * tol`.
#[allow(clippy::too_many_arguments)]
fn descend(
    mesh: &Mesh,
    precond: Option<&CsrMatrix>,
    fixed: Option<&[bool]>,
    phi: &[f64],
    params: &ProblemParams,
    opts: &SolverOptions,
    mut u: Vec<f64>,
    digest: Option<u64>,
) -> Result<EigenPair> {
    let p = params.p;
    let free = fixed.map(|f| free_indices(mesh, f));
    normalize(mesh, &mut u, p)?;
    let metric = |v: &[f64]| -> Result<Reduced> {
        match precond {
            Some(a) => Reduced::new(a, free.clone(), opts.direct_limit),
            None => Reduced::new(&descent_metric(mesh, v, phi, params), free.clone(), opts.direct_limit),
        }
    };
    let mut solver = metric(&u)?;

    let quotient = |v: &[f64]| -> f64 { energy_raw(mesh, v, phi, params) / boundary_power_raw(mesh, v, p) };
    // gradient of R at a normalized point (boundary power 1)
    let gradient = |v: &[f64], r: f64| -> Vec<f64> {
        let mut g = energy_gradient_raw(mesh, v, phi, params);
        let gn = boundary_power_gradient_raw(mesh, v, p);
        for (gi, ni) in g.iter_mut().zip(gn) {
            *gi -= r * ni;
        }
        if let Some(f) = fixed {
            for (gi, &is_fixed) in g.iter_mut().zip(f) {
                if is_fixed {
                    *gi = 0.0;
                }
            }
        }
        g
    };

    let mut r = quotient(&u);
    let mut g = gradient(&u, r);
    let mut z = solver.solve(&g)?;
    let mut gz = dot(&g, &z);
    let mut dir: Vec<f64> = z.iter().map(|x| -x).collect();
    let mut step = 0.5;
    let mut converged = false;
    let mut iterations = 0;
    let mut gnorm = gz.max(0.0).sqrt() / r.abs().max(f64::MIN_POSITIVE);
    let mut stalled = 0;

    for k in 1..=opts.max_iters {
        iterations = k;
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            dir = z.iter().map(|x| -x).collect();
            slope = -gz;
        }
        if slope == 0.0 {
            converged = true;
            break;
        }

        let mut alpha = step;
        let mut trial = vec![0.0; u.len()];
        let mut accepted = None;
        for _ in 0..60 {
            for ((t, &x), &d) in trial.iter_mut().zip(&u).zip(&dir) {
                *t = x + alpha * d;
            }
            let rt = quotient(&trial);
            if rt.is_finite() && rt <= r + opts.armijo_slope * alpha * slope {
                accepted = Some(rt);
                break;
            }
            alpha *= opts.armijo_backtrack;
        }
        let Some(_) = accepted else {
            // The predicted decrease is below rounding of R: nothing left to gain.
            if (alpha * slope).abs() <= 1e-15 * r.abs() || gnorm <= STALL_GRADIENT_FACTOR * opts.tol {
                converged = gnorm <= STALL_GRADIENT_FACTOR * opts.tol;
                break;
            }
            return Err(Error::LineSearch(format!("no Armijo step at iteration {k} (gradient norm {gnorm:e})")));
        };
        step = (alpha * 2.0).min(4.0);
        u.clone_from(&trial);
        normalize(mesh, &mut u, p)?;
        let r_new = quotient(&u);
        let refresh = precond.is_none() && k % METRIC_REFRESH == 0;
        if refresh {
            solver = metric(&u)?;
        }

        let g_new = gradient(&u, r_new);
        let z_new = solver.solve(&g_new)?;
        let gz_new = dot(&g_new, &z_new);
        let change = (r - r_new).abs() / r_new.abs().max(f64::MIN_POSITIVE);
        gnorm = gz_new.max(0.0).sqrt() / r_new.abs().max(f64::MIN_POSITIVE);

        let beta = if refresh {
            0.0
        } else {
            let num: f64 = g_new.iter().zip(z_new.iter().zip(&z)).map(|(gi, (zn, zo))| gi * (zn - zo)).sum();
            (num / gz).max(0.0)
        };
        for (d, zn) in dir.iter_mut().zip(&z_new) {
            *d = -zn + beta * *d;
        }
        r = r_new;
        g = g_new;
        z = z_new;
        gz = gz_new;
        stalled = if change <= ROUNDOFF_CHANGE { stalled + 1 } else { 0 };
        if stalled >= STALL_ITERATIONS && gnorm <= STALL_GRADIENT_FACTOR * opts.tol {
            converged = true;
            break;
        }
        stalled = if change <= ROUNDOFF_CHANGE { stalled + 1 } else { 0 };
        if stalled >= STALL_ITERATIONS && gnorm <= STALL_GRADIENT_FACTOR * opts.tol {
            converged = true;
            break;
        }
        if change <= opts.tol && gnorm <= opts.tol {
            converged = true;
            break;
        }
    }
    finish(mesh, u, phi, params, iterations, gnorm, converged, digest)
}

/// First eigenpair for general `p` by descent on the Rayleigh quotient from the
/// positive constant `perimeter^(-1/p)`.
pub fn solve_nonlinear(
    mesh: &Mesh,
    phi: &BoundaryDensity,
    params: &ProblemParams,
    opts: &SolverOptions,
) -> Result<EigenPair> {
    params.validate()?;
    opts.validate()?;
    let start = Field::constant(mesh, mesh.perimeter().powf(-1.0 / params.p));
    solve_nonlinear_from(mesh, phi, params, opts, &start)
}

/// Same as [`solve_nonlinear`] from a caller-provided start.
pub fn solve_nonlinear_from(
    mesh: &Mesh,
    phi: &BoundaryDensity,
    params: &ProblemParams,
    opts: &SolverOptions,
    start: &Field,
) -> Result<EigenPair> {
    params.validate()?;
    opts.validate()?;
    phi.check(mesh)?;
    start.check(mesh)?;
    let start = start.values().to_vec();
    let (a, _) = assemble_linear(mesh, phi, params.sigma)?;
    let precond = if params.p >= 2.0 { Some(&a) } else { None };
    descend(mesh, precond, None, phi.values(), params, opts, start, Some(phi.digest()))
}

/// Dispatches to inverse iteration at `p = 2` and to descent otherwise.
pub fn solve(mesh: &Mesh, phi: &BoundaryDensity, params: &ProblemParams, opts: &SolverOptions) -> Result<EigenPair> {
    if params.p == 2.0 {
        solve_linear(mesh, phi, params.sigma, opts)
    } else {
        solve_nonlinear(mesh, phi, params, opts)
    }
}

/// [`solve`] warm-started from `start`.
pub fn solve_from(
    mesh: &Mesh,
    phi: &BoundaryDensity,
    params: &ProblemParams,
    opts: &SolverOptions,
    start: &Field,
) -> Result<EigenPair> {
    if params.p == 2.0 {
        solve_linear_from(mesh, phi, params.sigma, opts, start)
    } else {
        solve_nonlinear_from(mesh, phi, params, opts, start)
    }
}

/// Boundary vertices whose arc-length parameter lies in the closure of `region`.
pub fn dirichlet_vertices(mesh: &Mesh, region: &RegionSpec) -> Vec<bool> {
    let mut fixed = vec![false; mesh.num_vertices()];
    for (k, v) in mesh.boundary_vertices().enumerate() {
        if region.contains_closed(mesh.cum_arclength()[k]) {
            fixed[v] = true;
        }
    }
    fixed
}

/// First eigenpair of the mixed problem: `u = 0` on the boundary vertices of
/// `region`, no potential term, normalization on the remaining boundary.
pub fn solve_dirichlet(
    mesh: &Mesh,
    region: &RegionSpec,
    params: &ProblemParams,
    opts: &SolverOptions,
) -> Result<EigenPair> {
    params.validate()?;
    opts.validate()?;
    let mass = region.total_mass();
    if !(mass > 0.0 && mass < mesh.perimeter()) {
        return Err(Error::Argument(format!(
            "Dirichlet region mass {mass} must lie strictly between 0 and the perimeter {}",
            mesh.perimeter()
        )));
    }
    let fixed = dirichlet_vertices(mesh, region);
    if mesh.boundary_vertices().all(|v| fixed[v]) {
        return Err(Error::Infeasible("the region covers every boundary vertex".into()));
    }
    let zero = BoundaryDensity::zeros(mesh);
    let free_params = ProblemParams { sigma: 0.0, ..*params };
    let (a, mb) = assemble_linear(mesh, &zero, 0.0)?;
    if params.p == 2.0 {
        let start = vec![1.0; mesh.num_vertices()];
        inverse_iteration(mesh, &a, &mb, Some(&fixed), zero.values(), &free_params, opts, start, None)
    } else {
        let c = mesh.perimeter().powf(-1.0 / params.p);
        let start = fixed.iter().map(|&f| if f { 0.0 } else { c }).collect();
        let precond = if params.p >= 2.0 { Some(&a) } else { None };
        descend(mesh, precond, Some(&fixed), zero.values(), &free_params, opts, start, None)
    }
    .map(|mut pair| {
        pair.sigma = f64::INFINITY;
        pair
    })
}
