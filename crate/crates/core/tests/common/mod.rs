//! Oracles shared by the integration tests. They use only mesh geometry and
//! never call into the solvers they check.

#![allow(dead_code)]

use steklov_core::assembly::BoundaryDensity;
use steklov_core::mesh::{Mesh, RegionSpec};

/// `I1(1) / I0(1)` summed from the power series of the modified Bessel functions.
pub fn bessel_quotient() -> f64 {
    let (mut i0, mut i1) = (0.0, 0.0);
    let mut term = 1.0; // (1/4)^k / (k!)^2
    for k in 0..30 {
        let kf = k as f64;
        if k > 0 {
            term *= 0.25 / (kf * kf);
        }
        i0 += term;
        i1 += 0.5 * term / (kf + 1.0);
    }
    i1 / i0
}

/// Mesh data in plain arrays for the brute-force energy below.
pub struct Plain {
    pub xy: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    pub bedges: Vec<[usize; 2]>,
}

impl Plain {
    pub fn of(mesh: &Mesh) -> Self {
        Plain {
            xy: mesh.vertices().to_vec(),
            tris: mesh.triangles().to_vec(),
            bedges: mesh.boundary_loop().to_vec(),
        }
    }

    fn area(&self, t: &[usize; 3]) -> f64 {
        let [a, b, c] = t.map(|i| self.xy[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
    }

    /// Gradient of the linear interpolant from the 2x2 system of edge differences.
    fn grad(&self, t: &[usize; 3], u: &[f64]) -> [f64; 2] {
        let [a, b, c] = t.map(|i| self.xy[i]);
        let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
        let (d1, d2) = (u[t[1]] - u[t[0]], u[t[2]] - u[t[0]]);
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        [(d1 * e2[1] - d2 * e1[1]) / det, (e1[0] * d2 - e2[0] * d1) / det]
    }

    /// `sum_T |grad u|^p area + sum_T area/3 sum_{v in T} |u_v|^p`.
    pub fn interior_energy(&self, u: &[f64], p: f64) -> f64 {
        self.tris
            .iter()
            .map(|t| {
                let area = self.area(t);
                let g = self.grad(t, u);
                let gp = (g[0] * g[0] + g[1] * g[1]).powf(0.5 * p);
                gp * area + area / 3.0 * t.iter().map(|&v| u[v].abs().powf(p)).sum::<f64>()
            })
            .sum()
    }

    /// Trapezoidal `sum_e len_e (|u_i|^p + |u_j|^p) / 2`, optionally weighted by `phi`.
    pub fn boundary_power(&self, u: &[f64], p: f64, phi: Option<&[f64]>) -> f64 {
        self.bedges
            .iter()
            .enumerate()
            .map(|(k, &[i, j])| {
                let (a, b) = (self.xy[i], self.xy[j]);
                let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                phi.map_or(1.0, |f| f[k]) * len * 0.5 * (u[i].abs().powf(p) + u[j].abs().powf(p))
            })
            .sum()
    }

    pub fn rayleigh(&self, u: &[f64], p: f64) -> f64 {
        self.interior_energy(u, p) / self.boundary_power(u, p, None)
    }

    /// Lumped `sum_v m_v f(x_v)` with `m_v` a third of the adjacent area.
    pub fn lumped_integral(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.tris.iter().map(|t| self.area(t) / 3.0 * t.iter().map(|&v| f(self.xy[v])).sum::<f64>()).sum()
    }
}

/// Slow steepest descent on the Rayleigh quotient with central-difference
/// gradients, doubling the step after every success and halving it after every
/// failure, run until the step underflows or nothing improves for a long stretch.
pub fn descent_oracle(plain: &Plain, p: f64) -> f64 {
    let n = plain.xy.len();
    let mut u = vec![1.0; n];
    let mut r = plain.rayleigh(&u, p);
    let mut step = 1e-2;
    let mut idle = 0;
    for _ in 0..200_000 {
        let g: Vec<f64> = (0..n)
            .map(|i| {
                let d = 1e-6;
                let mut up = u.clone();
                up[i] += d;
                let mut dn = u.clone();
                dn[i] -= d;
                (plain.rayleigh(&up, p) - plain.rayleigh(&dn, p)) / (2.0 * d)
            })
            .collect();
        let trial: Vec<f64> = u.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
        let rt = plain.rayleigh(&trial, p);
        if rt < r {
            idle = if r - rt < 1e-15 * r { idle + 1 } else { 0 };
            let scale = plain.boundary_power(&trial, p, None).powf(-1.0 / p);
            u = trial.iter().map(|x| x * scale).collect();
            r = rt;
            step *= 2.0;
        } else {
            step *= 0.5;
            idle += 1;
        }
        if step < 1e-14 || idle > 200 {
            break;
        }
    }
    r
}

/// Indicator of `2^j` equally spaced arcs of total length `a`.
pub fn alternating_arcs(mesh: &Mesh, j: u32, a: f64) -> BoundaryDensity {
    let p = mesh.perimeter();
    let k = 1usize << j;
    let period = p / k as f64;
    let len = a / k as f64;
    let arcs: Vec<(f64, f64)> = (0..k).map(|i| (i as f64 * period, i as f64 * period + len)).collect();
    let region = RegionSpec::from_intervals(&arcs, p).unwrap();
    BoundaryDensity::from_region(mesh, &region).unwrap()
}

/// Exhaustive minimum of `sum_e phi_e w_e len_e` over the vertices of
/// `{0 <= phi <= 1, sum_e phi_e len_e = a}`: every vertex has at most one
/// fractional entry, so enumerate the full set and the fractional edge.
/// Returns the minimizing potential.
pub fn lp_vertex_minimum(mesh: &Mesh, w: &[f64], a: f64) -> BoundaryDensity {
    let lens = mesh.edge_lengths();
    let m = lens.len();
    assert!(m <= 12, "exhaustive oracle is for tiny boundaries");
    let objective = |phi: &[f64]| -> f64 { phi.iter().zip(w).zip(lens).map(|((f, w), l)| f * w * l).sum() };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let full: f64 = (0..m).filter(|&e| mask >> e & 1 == 1).map(|e| lens[e]).sum();
        let mut candidates = Vec::new();
        if full == a {
            candidates.push(None);
        }
        for f in (0..m).filter(|&e| mask >> e & 1 == 0) {
            if full < a && a < full + lens[f] {
                candidates.push(Some(f));
            }
        }
        for frac in candidates {
            let mut phi: Vec<f64> = (0..m).map(|e| f64::from(mask >> e & 1)).collect();
            if let Some(f) = frac {
                phi[f] = (a - full) / lens[f];
            }
            let value = objective(&phi);
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, phi));
            }
        }
    }
    BoundaryDensity::new(mesh, best.expect("feasible mass").1).unwrap()
}

/// Mesh of the unit square with lengths that are exact in binary.
pub fn dyadic_meshes() -> Vec<Mesh> {
    let square = "vertices 4\n0 0\n1 0\n1 1\n0 1\ntriangles 2\n0 1 2\n0 2 3\n";
    vec![
        Mesh::load(square).unwrap(),
        Mesh::generate_rectangle(1.0, 1.0, 0.5).unwrap(),
        Mesh::generate_rectangle(1.0, 0.5, 0.25).unwrap(),
        Mesh::generate_rectangle(2.0, 1.0, 0.5).unwrap(),
    ]
}
