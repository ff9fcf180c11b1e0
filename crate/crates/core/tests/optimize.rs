mod common;

use common::Plain;
use steklov_core::assembly::{energy, BoundaryDensity, Field, ProblemParams};
use steklov_core::eigensolver::{random_positive_start, solve, solve_from, SolverOptions};
use steklov_core::mesh::Mesh;
use steklov_core::rearrange::{
    optimize_potential, random_admissible, symmetry_check, InitialPotential, OptimizeOptions, StopReason,
};

#[test]
fn optimized_eigenvalue_beats_random_potentials() {
    for (mesh, p) in [
        (Mesh::generate_disk(0.15).unwrap(), 2.0),
        (Mesh::generate_rectangle(1.0, 1.0, 0.15).unwrap(), 3.0),
        (Mesh::generate_disk(0.2).unwrap(), 1.5),
    ] {
        let params = ProblemParams::new(p, 5.0).unwrap();
        let a = 0.3 * mesh.perimeter();
        let opts = OptimizeOptions::for_exponent(p);
        let best = optimize_potential(&mesh, &params, a, &opts).unwrap().final_lambda();
        for seed in 0..20 {
            let phi = random_admissible(&mesh, a, seed).unwrap();
            let l = solve(&mesh, &phi, &params, &opts.solver).unwrap().lambda;
            assert!(best <= l * (1.0 + 1e-10), "p = {p}, seed {seed}: {best} > {l}");
        }
    }
}

#[test]
fn first_eigenvalue_is_independent_of_the_start() {
    let mesh = Mesh::generate_rectangle(1.5, 1.0, 0.15).unwrap();
    let phi = random_admissible(&mesh, 1.7, 9).unwrap();
    for p in [1.5, 2.0, 3.0] {
        let params = ProblemParams::new(p, 5.0).unwrap();
        let opts = SolverOptions::for_exponent(p);
        let reference = solve(&mesh, &phi, &params, &opts).unwrap().lambda;
        for seed in 0..20 {
            let start = random_positive_start(&mesh, seed);
            let l = solve_from(&mesh, &phi, &params, &opts, &start).unwrap().lambda;
            assert!((l - reference).abs() <= 1e-6 * reference, "p = {p}, seed {seed}: {l} vs {reference}");
        }
    }
}

#[test]
fn full_mass_gives_the_constant_shift_in_one_step() {
    let mesh = Mesh::generate_disk(0.2).unwrap();
    for p in [1.5, 2.0, 3.0] {
        let params = ProblemParams::new(p, 4.0).unwrap();
        let opts = OptimizeOptions::for_exponent(p);
        let trace = optimize_potential(&mesh, &params, mesh.perimeter(), &opts).unwrap();
        assert_eq!(trace.lambdas.len(), 1);
        assert!(trace.final_potential().values().iter().all(|&x| x == 1.0));
        let free = solve(&mesh, &BoundaryDensity::zeros(&mesh), &ProblemParams::new(p, 0.0).unwrap(), &opts.solver)
            .unwrap()
            .lambda;
        assert!((trace.final_lambda() - free - 4.0).abs() <= 1e-9 * trace.final_lambda());
        let empty = optimize_potential(&mesh, &params, 0.0, &opts).unwrap();
        assert_eq!(empty.stop_reason, StopReason::FixedPoint);
        assert!((empty.final_lambda() - free).abs() <= 1e-9 * free);
    }
}

#[test]
fn multistart_matches_sequential_runs() {
    let mesh = Mesh::generate_disk(0.15).unwrap();
    let params = ProblemParams::new(2.0, 5.0).unwrap();
    let a = std::f64::consts::FRAC_PI_2;
    let opts = OptimizeOptions::default();
    let seeds = [3, 1, 4, 1, 5];
    let report = symmetry_check(&mesh, &params, a, &seeds, &opts).unwrap();
    for (run, &seed) in report.runs.iter().zip(&seeds) {
        assert_eq!(run.seed, seed);
        let alone =
            optimize_potential(&mesh, &params, a, &OptimizeOptions { initial: InitialPotential::Random { seed }, ..opts.clone() })
                .unwrap();
        assert_eq!(run.lambda.to_bits(), alone.final_lambda().to_bits());
    }
}

#[test]
fn chunked_assembly_matches_a_serial_sum() {
    // large enough for the chunked gradient sum to engage
    let mesh = Mesh::generate_disk(0.012).unwrap();
    assert!(mesh.triangles().len() > 4096);
    let u = Field::from_fn(&mesh, |x| 1.0 + 0.3 * x[0] - 0.2 * x[1] * x[1]);
    let plain = Plain::of(&mesh);
    for p in [1.5, 2.0, 3.0] {
        let e = energy(&mesh, &u, &BoundaryDensity::zeros(&mesh), &ProblemParams::new(p, 0.0).unwrap()).unwrap();
        let serial = plain.interior_energy(u.values(), p);
        assert!((e - serial).abs() <= 1e-12 * serial, "p = {p}: {e} vs {serial}");
    }
}

#[test]
fn traces_are_reproducible() {
    let mesh = Mesh::generate_rectangle(1.0, 1.0, 0.15).unwrap();
    let params = ProblemParams::new(1.5, 5.0).unwrap();
    let opts = OptimizeOptions { initial: InitialPotential::Random { seed: 8 }, ..OptimizeOptions::for_exponent(1.5) };
    let a = optimize_potential(&mesh, &params, 1.0, &opts).unwrap();
    let b = optimize_potential(&mesh, &params, 1.0, &opts).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.final_potential().to_json(), b.final_potential().to_json());
}
