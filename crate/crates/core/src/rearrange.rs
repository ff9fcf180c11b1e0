//! Optimization of the boundary potential at fixed mass.
//!
//! For a fixed eigenfunction the boundary term is linear in the potential, and
//! its minimizer over `0 <= phi <= 1` with prescribed mass fills the edges of
//! smallest weight `w_e = (|u_i|^p + |u_j|^p) / 2` (bathtub principle). The
//! alternating scheme solves for `u`, refills, and repeats.

use serde::{Deserialize, Serialize};

use crate::assembly::{edge_weights, Binarize, BoundaryDensity, Field, ProblemParams};
use crate::eigensolver::{solve, solve_from, EigenPair, SolverOptions};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, RegionSpec};

/// Edgewise tolerance for two potentials to count as equal.
pub const POTENTIAL_EQ_TOL: f64 = 1e-12;
/// Number of earlier potentials compared against for cycle detection.
pub const CYCLE_WINDOW: usize = 4;

fn check_mass(mesh: &Mesh, a: f64) -> Result<()> {
    if !(a >= 0.0 && a <= mesh.perimeter()) {
        return Err(Error::Argument(format!("mass {a} outside [0, {}]", mesh.perimeter())));
    }
    Ok(())
}

/// Minimizer of `sum_e phi_e w_e len_e` subject to `sum_e phi_e len_e = a`, `0 <= phi <= 1`,
/// for precomputed edge weights, together with the fill level.
///
/// Edges are filled in ascending order of `w` (ties by lower index); at most one edge is fractional.
pub fn bathtub_weights(mesh: &Mesh, w: &[f64], a: f64) -> Result<(BoundaryDensity, f64)> {
    check_mass(mesh, a)?;
    let m = mesh.num_boundary_edges();
    if w.len() != m || w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("edge weights must be finite, one per boundary edge".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| w[i].total_cmp(&w[j]).then(i.cmp(&j)));
    if a >= mesh.perimeter() {
        return Ok((BoundaryDensity::constant(mesh, 1.0)?, w[order[m - 1]]));
    }
    let mut phi = vec![0.0; m];
    let mut level = w[order[0]];
    let mut remaining = a;
    let lens = mesh.edge_lengths();
    for &e in &order {
        if remaining <= 0.0 {
            break;
        }
        level = w[e];
        if remaining >= lens[e] {
            phi[e] = 1.0;
            remaining -= lens[e];
        } else {
            phi[e] = (remaining / lens[e]).clamp(0.0, 1.0);
            remaining = 0.0;
        }
    }
    let phi = BoundaryDensity::new(mesh, phi)?;
    debug_assert!(satisfies_level_property(&phi, w, level), "bathtub fill violates its level");
    Ok((phi, level))
}

/// Bathtub rearrangement for the eigenfunction `u`: returns the potential of mass
/// `a` minimizing the boundary term at fixed `u`, and the level `s` with
/// `{w < s}` filled and `{w > s}` empty.
pub fn bathtub(mesh: &Mesh, u: &Field, a: f64, p: f64) -> Result<(BoundaryDensity, f64)> {
    let w = edge_weights(mesh, u, p)?;
    bathtub_weights(mesh, &w, a)
}

/// `sum_e phi_e w_e len_e`.
pub fn bathtub_objective(mesh: &Mesh, phi: &BoundaryDensity, w: &[f64]) -> f64 {
    phi.values().iter().zip(w).zip(mesh.edge_lengths()).map(|((f, w), l)| f * w * l).sum()
}

/// Whether every edge with `w < level` is full and every edge with `w > level` is empty.
pub fn satisfies_level_property(phi: &BoundaryDensity, w: &[f64], level: f64) -> bool {
    phi.values().iter().zip(w).all(|(&f, &we)| (we >= level || f == 1.0) && (we <= level || f == 0.0))
}

/// Potential of mass exactly `a`, values in `[0, 1]`, deterministic in `seed`.
///
/// Uniform values are rescaled to the target mass; values pushed above 1 are
/// clipped and the excess redistributed over the rest until the mass is met.
pub fn random_admissible(mesh: &Mesh, a: f64, seed: u64) -> Result<BoundaryDensity> {
    use rand::{Rng, SeedableRng};
    check_mass(mesh, a)?;
    if a == 0.0 {
        return Ok(BoundaryDensity::zeros(mesh));
    }
    if a >= mesh.perimeter() {
        return BoundaryDensity::constant(mesh, 1.0);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let lens = mesh.edge_lengths();
    let mut v: Vec<f64> = (0..lens.len()).map(|_| rng.gen_range(f64::EPSILON..1.0)).collect();
    let mut clipped = vec![false; v.len()];
    loop {
        let clipped_mass: f64 = lens.iter().zip(&clipped).filter(|(_, &c)| c).map(|(l, _)| l).sum();
        let free_mass: f64 = v.iter().zip(lens).zip(&clipped).filter(|(_, &c)| !c).map(|((x, l), _)| x * l).sum();
        let f = (a - clipped_mass) / free_mass;
        let mut changed = false;
        for (x, c) in v.iter_mut().zip(clipped.iter_mut()) {
            if *c {
                continue;
            }
            *x *= f;
            if *x >= 1.0 {
                *x = 1.0;
                *c = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    BoundaryDensity::new(mesh, v)
}

/// Single arc of length `a` centered at polar angle `center_angle` on a disk mesh,
/// as a region and as its rasterized potential.
pub fn cap_indicator(mesh: &Mesh, center_angle: f64, a: f64) -> Result<(RegionSpec, BoundaryDensity)> {
    if !mesh.is_disk() {
        return Err(Error::NotDisk);
    }
    check_mass(mesh, a)?;
    let p = mesh.perimeter();
    let region = if a >= p {
        RegionSpec::full(p)
    } else if a == 0.0 {
        RegionSpec::empty(p)
    } else {
        let center = center_angle / std::f64::consts::TAU * p;
        let begin = mesh.wrap_arclength(center - 0.5 * a);
        RegionSpec::from_intervals(&[(begin, begin + a)], p)?
    };
    let phi = BoundaryDensity::from_region(mesh, &region)?;
    Ok((region, phi))
}

/// Mass of `phi` not captured by the best window of length `mass(phi)`.
///
/// The mass of an edge is only known up to its position within the edge, so a
/// window partially covering an edge captures `min(phi_e len_e, covered length)`
/// of it. Zero for a single-arc indicator with fractional end edges.
pub fn arc_defect(mesh: &Mesh, phi: &BoundaryDensity) -> f64 {
    let m = phi.mass();
    let p = mesh.perimeter();
    if m <= 0.0 || m >= p {
        return 0.0;
    }
    let n = phi.values().len();
    let lens = mesh.edge_lengths();
    let vals = phi.values();
    // edges and their starts over two turns of the boundary
    let start = |k: usize| mesh.cum_arclength()[k % n] + if k >= n { p } else { 0.0 };
    let edge_mass = |k: usize| vals[k % n] * lens[k % n];
    let mut prefix = Vec::with_capacity(2 * n + 1);
    prefix.push(0.0);
    for k in 0..2 * n {
        prefix.push(prefix[k] + edge_mass(k));
    }
    let locate = |y: f64| -> usize {
        let (shift, y) = if y >= p { (n, y - p) } else { (0, y) };
        let k = mesh.cum_arclength()[..n].partition_point(|&c| c <= y).max(1) - 1;
        shift + k
    };
    let captured = |x: f64| -> f64 {
        let y = x + m;
        let k1 = locate(x);
        let k2 = locate(y).max(k1);
        if k1 == k2 {
            return edge_mass(k1).min(m);
        }
        let head = edge_mass(k1).min(start(k1) + lens[k1 % n] - x);
        let tail = edge_mass(k2).min(y - start(k2));
        (head + prefix[k2] - prefix[k1 + 1] + tail.max(0.0)).min(m)
    };
    let mut best = 0.0_f64;
    for (k, len) in lens.iter().enumerate() {
        let c = start(k);
        let c_next = c + len;
        let f = edge_mass(k);
        for x in [c, c - m, c_next - f, c + f - m] {
            best = best.max(captured(mesh.wrap_arclength(x)));
        }
    }
    (m - best).max(0.0)
}

/// Starting potential of the alternating scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPotential {
    /// Indicator of the arc `[start, start + a)`.
    Arc { start: f64 },
    /// [`random_admissible`] with this seed.
    Random { seed: u64 },
}

impl Default for InitialPotential {
    fn default() -> Self {
        InitialPotential::Arc { start: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOptions {
    pub max_outer: usize,
    /// Relative eigenvalue change at which the outer loop stops.
    pub tol: f64,
    pub initial: InitialPotential,
    pub solver: SolverOptions,
    /// Post-processing of the final potential into an indicator.
    pub binarize: Option<Binarize>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_outer: 100,
            tol: 1e-9,
            initial: InitialPotential::default(),
            solver: SolverOptions::default(),
            binarize: None,
        }
    }
}

impl OptimizeOptions {
    /// Defaults with solver tolerances for exponent `p`.
    pub fn for_exponent(p: f64) -> Self {
        OptimizeOptions { solver: SolverOptions::for_exponent(p), ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Rearranging the last eigenfunction reproduces the last potential.
    FixedPoint,
    /// Relative eigenvalue change fell below the tolerance.
    LambdaStagnation,
    /// The new potential repeats one of the recent ones.
    CycleDetected,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct OptimizationTrace {
    pub lambdas: Vec<f64>,
    pub potentials: Vec<BoundaryDensity>,
    /// Bathtub level that produced each potential; `None` for the initial one.
    pub levels: Vec<Option<f64>>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub stop_reason: StopReason,
    /// Whether rearranging the final eigenfunction returns the final potential.
    pub fixed_point: bool,
    /// Eigenpair of the final potential.
    pub pair: EigenPair,
    /// Binarized final potential and its eigenvalue, when requested.
    pub binarized: Option<(BoundaryDensity, f64)>,
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    lambda: f64,
    level: Option<f64>,
    mass: f64,
}

impl OptimizationTrace {
    pub fn final_lambda(&self) -> f64 {
        *self.lambdas.last().expect("trace is never empty")
    }

    pub fn final_potential(&self) -> &BoundaryDensity {
        self.potentials.last().expect("trace is never empty")
    }

    /// JSON array of `{"iter", "lambda", "level", "mass"}`.
    pub fn to_json(&self) -> String {
        let rows: Vec<TraceRow> = self
            .lambdas
            .iter()
            .zip(&self.levels)
            .zip(&self.potentials)
            .enumerate()
            .map(|(iter, ((&lambda, &level), phi))| TraceRow { iter, lambda, level, mass: phi.mass() })
            .collect();
        serde_json::to_string_pretty(&rows).expect("serializable")
    }

    /// CSV with header `iter,lambda`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,lambda\n");
        for (k, l) in self.lambdas.iter().enumerate() {
            out.push_str(&format!("{k},{l:?}\n"));
        }
        out
    }

    /// Largest increase between consecutive eigenvalues, 0 for a non-increasing trace.
    pub fn max_increase(&self) -> f64 {
        self.lambdas.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

fn same_potential(a: &BoundaryDensity, b: &BoundaryDensity) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= POTENTIAL_EQ_TOL)
}

fn initial_potential(mesh: &Mesh, a: f64, init: &InitialPotential) -> Result<BoundaryDensity> {
    let p = mesh.perimeter();
    if a >= p {
        return BoundaryDensity::constant(mesh, 1.0);
    }
    if a == 0.0 {
        return Ok(BoundaryDensity::zeros(mesh));
    }
    match *init {
        InitialPotential::Arc { start } => {
            let begin = mesh.wrap_arclength(start);
            BoundaryDensity::from_region(mesh, &RegionSpec::from_intervals(&[(begin, begin + a)], p)?)
        }
        InitialPotential::Random { seed } => random_admissible(mesh, a, seed),
    }
}

/// Alternating minimization of `lambda(sigma, phi)` over potentials of mass `a`.
///
/// Each eigensolve is warm-started from the previous eigenfunction, so the
/// eigenvalue trace is non-increasing.
pub fn optimize_potential(
    mesh: &Mesh,
    params: &ProblemParams,
    a: f64,
    opts: &OptimizeOptions,
) -> Result<OptimizationTrace> {
    params.validate()?;
    check_mass(mesh, a)?;
    if opts.max_outer == 0 || !(opts.tol > 0.0) {
        return Err(Error::Argument("max_outer must be positive and tol positive".into()));
    }
    let with_context = |k: usize| move |e: Error| Error::NotConverged(format!("eigensolve at outer iteration {k}: {e}"));
    let phi0 = initial_potential(mesh, a, &opts.initial)?;
    let mut pair = solve(mesh, &phi0, params, &opts.solver).map_err(with_context(0))?;
    let mut trace = OptimizationTrace {
        lambdas: vec![pair.lambda],
        potentials: vec![phi0],
        levels: vec![None],
        converged: false,
        outer_iterations: 0,
        stop_reason: StopReason::MaxIterations,
        fixed_point: false,
        pair: pair.clone(),
        binarized: None,
    };
    let degenerate = a == 0.0 || a >= mesh.perimeter();
    for k in 1..=opts.max_outer {
        let (next, level) = bathtub(mesh, &pair.u, a, params.p)?;
        let current = trace.potentials.last().unwrap();
        if degenerate || same_potential(&next, current) {
            trace.stop_reason = StopReason::FixedPoint;
            trace.converged = true;
            trace.fixed_point = true;
            break;
        }
        let start = trace.potentials.len().saturating_sub(CYCLE_WINDOW + 1);
        if trace.potentials[start..trace.potentials.len() - 1].iter().any(|old| same_potential(&next, old)) {
            trace.stop_reason = StopReason::CycleDetected;
            break;
        }
        pair = solve_from(mesh, &next, params, &opts.solver, &pair.u).map_err(with_context(k))?;
        let previous = *trace.lambdas.last().unwrap();
        trace.outer_iterations = k;
        trace.lambdas.push(pair.lambda);
        trace.potentials.push(next);
        trace.levels.push(Some(level));
        if (pair.lambda - previous).abs() <= opts.tol * previous.abs() {
            trace.stop_reason = StopReason::LambdaStagnation;
            trace.converged = true;
            let (again, _) = bathtub(mesh, &pair.u, a, params.p)?;
            trace.fixed_point = same_potential(&again, trace.potentials.last().unwrap());
            break;
        }
    }
    trace.pair = pair;
    if let Some(mode) = opts.binarize {
        let bin = trace.final_potential().binarize(mesh, mode)?;
        let lambda = solve(mesh, &bin, params, &opts.solver)?.lambda;
        trace.binarized = Some((bin, lambda));
    }
    Ok(trace)
}

/// Outcome of alternating minimization from several starts.
#[derive(Clone, Debug, Serialize)]
pub struct MultistartRun {
    pub seed: u64,
    pub lambda: f64,
    pub arc_defect: f64,
    pub outer_iterations: usize,
    pub stop_reason: StopReason,
    pub fixed_point: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub runs: Vec<MultistartRun>,
    /// `(max - min) / min` over the final eigenvalues.
    pub lambda_spread: f64,
    /// Allowed arc defect: twice the longest boundary edge.
    pub defect_bound: f64,
    pub passed: bool,
}

/// Relative agreement required between multistart eigenvalues.
pub const SYMMETRY_LAMBDA_TOL: f64 = 1e-6;

/// Runs [`optimize_potential`] from random admissible starts with the given seeds
/// on a disk and checks that all runs reach the same eigenvalue with single-arc potentials.
pub fn symmetry_check(
    mesh: &Mesh,
    params: &ProblemParams,
    a: f64,
    seeds: &[u64],
    opts: &OptimizeOptions,
) -> Result<SymmetryReport> {
    if !mesh.is_disk() {
        return Err(Error::NotDisk);
    }
    if seeds.is_empty() {
        return Err(Error::Argument("at least one seed is required".into()));
    }
    let run = |&seed: &u64| -> Result<MultistartRun> {
        let opts = OptimizeOptions { initial: InitialPotential::Random { seed }, binarize: None, ..opts.clone() };
        let trace = optimize_potential(mesh, params, a, &opts)?;
        Ok(MultistartRun {
            seed,
            lambda: trace.final_lambda(),
            arc_defect: arc_defect(mesh, trace.final_potential()),
            outer_iterations: trace.outer_iterations,
            stop_reason: trace.stop_reason,
            fixed_point: trace.fixed_point,
        })
    };
    #[cfg(feature = "parallel")]
    let runs: Vec<MultistartRun> = {
        use rayon::prelude::*;
        seeds.par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<MultistartRun> = seeds.iter().map(run).collect::<Result<_>>()?;
    let lo = runs.iter().map(|r| r.lambda).fold(f64::INFINITY, f64::min);
    let hi = runs.iter().map(|r| r.lambda).fold(f64::NEG_INFINITY, f64::max);
    let lambda_spread = (hi - lo) / lo.abs().max(f64::MIN_POSITIVE);
    let defect_bound = 2.0 * mesh.max_edge_length();
    let passed = lambda_spread <= SYMMETRY_LAMBDA_TOL && runs.iter().all(|r| r.arc_defect <= defect_bound);
    Ok(SymmetryReport { runs, lambda_spread, defect_bound, passed })
}
