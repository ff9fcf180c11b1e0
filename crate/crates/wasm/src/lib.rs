//! Browser bindings for three operations on the unit disk. Every export returns a
//! JSON string: the result on success, `{"error": "..."}` otherwise, so the same
//! functions run unchanged in native tests.

use serde::Serialize;
use steklov_core::assembly::{BoundaryDensity, ProblemParams};
use steklov_core::eigensolver::{solve, EigenPair};
use steklov_core::mesh::{Mesh, RegionSpec};
use steklov_core::rearrange::{arc_defect, cap_indicator, optimize_potential, InitialPotential, OptimizeOptions};
use steklov_core::shapederiv::{shape_derivative_fd, SignConvention, TangentField, DEFAULT_T_STEPS};
use wasm_bindgen::prelude::*;

/// Coarsest and finest mesh sizes accepted from the page.
pub const H_RANGE: (f64, f64) = (0.04, 0.5);

#[derive(Serialize)]
struct Picture {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Nodal values of the eigenfunction.
    u: Vec<f64>,
    /// Boundary edges as vertex pairs, aligned with `phi`.
    edges: Vec<[usize; 2]>,
    phi: Vec<f64>,
}

impl Picture {
    fn new(mesh: &Mesh, pair: &EigenPair, phi: &BoundaryDensity) -> Self {
        Picture {
            vertices: mesh.vertices().to_vec(),
            triangles: mesh.triangles().to_vec(),
            u: pair.u.values().to_vec(),
            edges: mesh.boundary_loop().to_vec(),
            phi: phi.values().to_vec(),
        }
    }
}

#[derive(Serialize)]
struct SolveOut {
    lambda: f64,
    iterations: usize,
    converged: bool,
    picture: Picture,
}

#[derive(Serialize)]
struct OptimizeOut {
    lambdas: Vec<f64>,
    stop_reason: String,
    fixed_point: bool,
    arc_defect: f64,
    defect_bound: f64,
    picture: Picture,
}

#[derive(Serialize)]
struct ShapeOut {
    lambda: f64,
    formula: f64,
    finite_difference: f64,
    relative_error: f64,
    sign_consistent: bool,
    table: Vec<(f64, f64)>,
    picture: Picture,
}

fn disk(h: f64) -> Result<Mesh, String> {
    if !(H_RANGE.0..=H_RANGE.1).contains(&h) {
        return Err(format!("mesh size must lie in [{}, {}]", H_RANGE.0, H_RANGE.1));
    }
    Mesh::generate_disk(h).map_err(|e| e.to_string())
}

fn mass(mesh: &Mesh, a: f64) -> Result<f64, String> {
    if a >= 0.0 && a <= mesh.perimeter() {
        Ok(a)
    } else {
        Err(format!("mass must lie in [0, {:.4}]", mesh.perimeter()))
    }
}

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).expect("serializable"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

fn err(e: steklov_core::Error) -> String {
    e.to_string()
}

/// First eigenpair for the indicator of an arc of length `a` centered at polar angle `angle`.
#[wasm_bindgen]
pub fn solve_cap(h: f64, p: f64, sigma: f64, angle: f64, a: f64) -> String {
    respond((|| {
        let mesh = disk(h)?;
        let params = ProblemParams::new(p, sigma).map_err(err)?;
        let (_, phi) = cap_indicator(&mesh, angle, mass(&mesh, a)?).map_err(err)?;
        let pair = solve(&mesh, &phi, &params, &steklov_core::eigensolver::SolverOptions::for_exponent(p))
            .map_err(err)?;
        Ok(SolveOut {
            lambda: pair.lambda,
            iterations: pair.iterations,
            converged: pair.converged,
            picture: Picture::new(&mesh, &pair, &phi),
        })
    })())
}

/// Alternating minimization from a seeded random potential of mass `a`.
#[wasm_bindgen]
pub fn optimize(h: f64, p: f64, sigma: f64, a: f64, seed: u32) -> String {
    respond((|| {
        let mesh = disk(h)?;
        let params = ProblemParams::new(p, sigma).map_err(err)?;
        let opts = OptimizeOptions {
            initial: InitialPotential::Random { seed: u64::from(seed) },
            ..OptimizeOptions::for_exponent(p)
        };
        let trace = optimize_potential(&mesh, &params, mass(&mesh, a)?, &opts).map_err(err)?;
        let phi = trace.final_potential();
        Ok(OptimizeOut {
            lambdas: trace.lambdas.clone(),
            stop_reason: format!("{:?}", trace.stop_reason),
            fixed_point: trace.fixed_point,
            arc_defect: arc_defect(&mesh, phi),
            defect_bound: 2.0 * mesh.max_edge_length(),
            picture: Picture::new(&mesh, &trace.pair, phi),
        })
    })())
}

/// Shape derivative of the eigenvalue when the end of the arc `[begin, end]`
/// moves along the boundary with unit speed.
#[wasm_bindgen]
pub fn shape_derivative(h: f64, p: f64, sigma: f64, begin: f64, end: f64) -> String {
    respond((|| {
        let mesh = disk(h)?;
        let params = ProblemParams::new(p, sigma).map_err(err)?;
        let region = RegionSpec::from_intervals(&[(begin, end)], mesh.perimeter()).map_err(err)?;
        let field = TangentField::outward(&region, 1).map_err(err)?;
        let opts = steklov_core::eigensolver::SolverOptions::for_exponent(p);
        let report =
            shape_derivative_fd(&mesh, &region, &params, &field, &DEFAULT_T_STEPS, &opts, SignConvention::Envelope)
                .map_err(err)?;
        let phi = BoundaryDensity::from_region(&mesh, &region).map_err(err)?;
        let pair = solve(&mesh, &phi, &params, &opts).map_err(err)?;
        Ok(ShapeOut {
            lambda: report.lambda,
            formula: report.formula_value,
            finite_difference: report.fd_value,
            relative_error: report.relative_error,
            sign_consistent: report.sign_consistent,
            table: report.fd_table.iter().map(|e| (e.t, e.diff)).collect(),
            picture: Picture::new(&mesh, &pair, &phi),
        })
    })())
}
