//! Triangular meshes of planar domains and their boundary loop.
//!
//! A [`Mesh`] owns its vertices and counterclockwise triangles together with
//! the single closed boundary loop, parametrized by polygonal arc length.
//! Boundary edge `k` runs from `boundary_loop[k][0]` to `boundary_loop[k][1]`
//! and covers the arc-length interval `[cum_arclength[k], cum_arclength[k] + edge_lengths[k])`.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// Upper bound on generated vertex counts.
const MAX_GENERATED_VERTICES: usize = 20_000_000;

/// How a mesh came into existence. Only generated disks carry the rotational
/// structure that cap indicators rely on.
#[derive(Clone, Debug, PartialEq)]
pub enum MeshKind {
    /// Unit disk with `boundary_nodes` equally spaced nodes on the circle.
    Disk { boundary_nodes: usize },
    Rectangle { width: f64, height: f64 },
    Loaded,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_loop: Vec<[usize; 2]>,
    edge_lengths: Vec<f64>,
    cum_arclength: Vec<f64>,
    outward_normals: Vec<[f64; 2]>,
    perimeter: f64,
    areas: Vec<f64>,
    hat_grads: Vec<[[f64; 2]; 3]>,
    lumped_mass: Vec<f64>,
    kind: MeshKind,
    reoriented: usize,
    id: u64,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.boundary_loop == other.boundary_loop
            && self.edge_lengths == other.edge_lengths
            && self.cum_arclength == other.cum_arclength
            && self.outward_normals == other.outward_normals
            && self.kind == other.kind
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn hat_gradients([pa, pb, pc]: [[f64; 2]; 3], area: f64) -> [[f64; 2]; 3] {
    let two_area = 2.0 * area;
    [
        [(pb[1] - pc[1]) / two_area, (pc[0] - pb[0]) / two_area],
        [(pc[1] - pa[1]) / two_area, (pa[0] - pc[0]) / two_area],
        [(pa[1] - pb[1]) / two_area, (pb[0] - pa[0]) / two_area],
    ]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

impl Mesh {
    /// Builds a mesh from raw vertex and triangle lists.
    ///
    /// Clockwise triangles are flipped and counted in [`Mesh::reoriented`].
    /// The boundary loop starts at the lowest-index boundary vertex.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, kind: MeshKind) -> Result<Self> {
        let nv = vertices.len();
        if nv < 3 || triangles.is_empty() {
            return Err(Error::Topology("mesh needs at least one triangle".into()));
        }
        if vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::Topology("non-finite vertex coordinate".into()));
        }

        let mut triangles = triangles;
        let mut reoriented = 0;
        let mut areas = Vec::with_capacity(triangles.len());
        let mut used = vec![false; nv];
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::Topology(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Topology(format!("triangle {t} repeats a vertex")));
            }
            let mut area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area == 0.0 {
                return Err(Error::Topology(format!("triangle {t} is degenerate")));
            }
            if area < 0.0 {
                tri.swap(1, 2);
                area = -area;
                reoriented += 1;
            }
            areas.push(area);
            for &i in tri.iter() {
                used[i] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::Topology(format!("vertex {i} belongs to no triangle")));
        }

        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if let Some(prev) = directed.insert(e, t) {
                    return Err(Error::Topology(format!(
                        "edge ({}, {}) shared by triangles {prev} and {t} with the same orientation",
                        e.0, e.1
                    )));
                }
            }
        }

        // Boundary edges are those whose reverse is absent.
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) && next.insert(a, b).is_some() {
                return Err(Error::Topology(format!("boundary is pinched at vertex {a}")));
            }
        }
        let n_boundary = next.len();
        let start = *next
            .keys()
            .min()
            .ok_or_else(|| Error::Topology("mesh has no boundary".into()))?;

        let mut boundary_loop = Vec::with_capacity(n_boundary);
        let mut cur = start;
        loop {
            let nxt = *next
                .get(&cur)
                .ok_or_else(|| Error::OpenBoundary(format!("no boundary edge leaves vertex {cur}")))?;
            boundary_loop.push([cur, nxt]);
            cur = nxt;
            if cur == start {
                break;
            }
            if boundary_loop.len() > n_boundary {
                return Err(Error::OpenBoundary("boundary traversal does not return to its start".into()));
            }
        }
        if boundary_loop.len() != n_boundary {
            return Err(Error::Topology(format!(
                "boundary has several loops ({} of {} boundary edges in the first)",
                boundary_loop.len(),
                n_boundary
            )));
        }

        let mut edge_lengths = Vec::with_capacity(n_boundary);
        let mut cum_arclength = Vec::with_capacity(n_boundary);
        let mut outward_normals = Vec::with_capacity(n_boundary);
        let mut s = 0.0;
        for &[a, b] in &boundary_loop {
            let (pa, pb) = (vertices[a], vertices[b]);
            let len = dist(pa, pb);
            cum_arclength.push(s);
            edge_lengths.push(len);
            s += len;
            // Triangles are counterclockwise, so the interior lies to the left.
            outward_normals.push([(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len]);
        }

        let hat_grads = triangles
            .iter()
            .zip(&areas)
            .map(|(tri, &area)| hat_gradients(tri.map(|i| vertices[i]), area))
            .collect();
        let mut lumped_mass = vec![0.0; nv];
        for (tri, &area) in triangles.iter().zip(&areas) {
            for &i in tri {
                lumped_mass[i] += area / 3.0;
            }
        }

        let mut hasher = DefaultHasher::new();
        for v in &vertices {
            v[0].to_bits().hash(&mut hasher);
            v[1].to_bits().hash(&mut hasher);
        }
        triangles.hash(&mut hasher);
        let id = hasher.finish();

        Ok(Mesh {
            vertices,
            triangles,
            boundary_loop,
            edge_lengths,
            cum_arclength,
            outward_normals,
            perimeter: s,
            areas,
            hat_grads,
            lumped_mass,
            kind,
            reoriented,
            id,
        })
    }

    /// Triangulates the unit disk with concentric rings.
    ///
    /// Every ring carries the same number `N` of nodes (a multiple of four) and
    /// consecutive rings are staggered by half a step, so the mesh is invariant
    /// under rotation by `2π/N` and under reflection in the x-axis. The center
    /// is a single vertex joined to the innermost ring.
    pub fn generate_disk(target_h: f64) -> Result<Self> {
        if !(target_h > 0.0 && target_h < 1.0) {
            return Err(Error::Argument(format!("disk target_h must lie in (0, 1), got {target_h}")));
        }
        let quarter = (2.0 * PI / (4.0 * target_h)).ceil();
        let rings = (1.0 / target_h).ceil();
        if !(quarter * 4.0 * rings < MAX_GENERATED_VERTICES as f64) {
            return Err(Error::Resource(format!("target_h = {target_h}")));
        }
        let n = 4 * quarter as usize;
        let m = rings as usize;

        // Ring k (1..=m) has radius k/m; vertex order is boundary ring first, center last.
        let ring_base = |k: usize| (m - k) * n;
        let center = m * n;
        let mut vertices = Vec::with_capacity(m * n + 1);
        for k in (1..=m).rev() {
            let r = k as f64 / m as f64;
            let offset = ((m - k) % 2) as f64 * 0.5;
            for i in 0..n {
                let theta = 2.0 * PI * (i as f64 + offset) / n as f64;
                if k == m {
                    vertices.push([theta.cos(), theta.sin()]);
                } else {
                    vertices.push([r * theta.cos(), r * theta.sin()]);
                }
            }
        }
        vertices.push([0.0, 0.0]);

        let mut triangles = Vec::with_capacity(2 * n * m);
        let mut push = |tri: [usize; 3], vertices: &[[f64; 2]]| {
            if signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) < 0.0 {
                triangles.push([tri[0], tri[2], tri[1]]);
            } else {
                triangles.push(tri);
            }
        };
        for k in (2..=m).rev() {
            let outer = ring_base(k);
            let inner = ring_base(k - 1);
            let outer_staggered = (m - k) % 2 == 1;
            for i in 0..n {
                let i1 = (i + 1) % n;
                if outer_staggered {
                    // outer i sits at angle i + 1/2, inner i at angle i
                    push([outer + i, outer + i1, inner + i1], &vertices);
                    push([inner + i, inner + i1, outer + i], &vertices);
                } else {
                    push([outer + i, outer + i1, inner + i], &vertices);
                    push([inner + i, inner + i1, outer + i1], &vertices);
                }
            }
        }
        let first = ring_base(1);
        for i in 0..n {
            push([center, first + i, first + (i + 1) % n], &vertices);
        }

        Mesh::new(vertices, triangles, MeshKind::Disk { boundary_nodes: n })
    }

    /// Structured triangulation of `[0, width] x [0, height]`, each cell split along
    /// its lower-left to upper-right diagonal.
    pub fn generate_rectangle(width: f64, height: f64, target_h: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && target_h > 0.0)
            || !(width.is_finite() && height.is_finite())
        {
            return Err(Error::Argument(format!(
                "rectangle needs positive dimensions and target_h, got ({width}, {height}, {target_h})"
            )));
        }
        let nx = (width / target_h).ceil().max(1.0);
        let ny = (height / target_h).ceil().max(1.0);
        if !((nx + 1.0) * (ny + 1.0) < MAX_GENERATED_VERTICES as f64) {
            return Err(Error::Resource(format!("target_h = {target_h}")));
        }
        let (nx, ny) = (nx as usize, ny as usize);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Mesh::new(vertices, triangles, MeshKind::Rectangle { width, height })
    }

    /// Parses the line-oriented mesh format (`vertices N`, N coordinate lines,
    /// `triangles M`, M index lines; `#` comments).
    pub fn load(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let nv = read_header(&mut lines, "vertices")?;
        let mut vertices = Vec::with_capacity(nv.min(1 << 20));
        for _ in 0..nv {
            let (no, vals) = read_record::<f64>(&mut lines, "vertex")?;
            if vals.len() != 2 {
                return Err(Error::Parse { line: no, msg: "expected `x y`".into() });
            }
            vertices.push([vals[0], vals[1]]);
        }
        let nt = read_header(&mut lines, "triangles")?;
        let mut triangles = Vec::with_capacity(nt.min(1 << 20));
        for _ in 0..nt {
            let (no, idx) = read_record::<usize>(&mut lines, "triangle")?;
            if idx.len() != 3 {
                return Err(Error::Parse { line: no, msg: "expected `i j k`".into() });
            }
            triangles.push([idx[0], idx[1], idx[2]]);
        }
        if let Some((no, _)) = lines.next() {
            return Err(Error::Parse { line: no, msg: "unexpected content after triangles".into() });
        }
        Mesh::new(vertices, triangles, MeshKind::Loaded)
    }

    /// Writes the mesh in the text format read by [`Mesh::load`]. Coordinates use
    /// the shortest representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", v[0], v[1]);
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    /// Finds the boundary edge containing arc-length `s` and the local fraction along it.
    pub fn locate_arc_point(&self, s: f64) -> Result<(usize, f64)> {
        if !(s >= 0.0 && s < self.perimeter) {
            return Err(Error::OutOfRange { s, perimeter: self.perimeter });
        }
        let k = self.cum_arclength.partition_point(|&c| c <= s) - 1;
        let t = ((s - self.cum_arclength[k]) / self.edge_lengths[k]).clamp(0.0, 1.0);
        Ok((k, t))
    }

    /// Maps any real arc-length into `[0, perimeter)`.
    pub fn wrap_arclength(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.perimeter);
        if w >= self.perimeter {
            0.0
        } else {
            w
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loop(&self) -> &[[usize; 2]] {
        &self.boundary_loop
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    pub fn cum_arclength(&self) -> &[f64] {
        &self.cum_arclength
    }

    pub fn outward_normals(&self) -> &[[f64; 2]] {
        &self.outward_normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn kind(&self) -> &MeshKind {
        &self.kind
    }

    /// Number of clockwise input triangles that were flipped during construction.
    pub fn reoriented(&self) -> usize {
        self.reoriented
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.boundary_loop.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn is_disk(&self) -> bool {
        matches!(self.kind, MeshKind::Disk { .. })
    }

    /// Vertices on the boundary in loop order (start vertex of each edge).
    pub fn boundary_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary_loop.iter().map(|e| e[0])
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
                    .map(|(a, b)| dist(self.vertices[a], self.vertices[b]))
            })
            .fold(0.0, f64::max)
    }

    /// Gradients of the three hat functions on each triangle (constant per triangle).
    pub fn hat_gradients(&self) -> &[[[f64; 2]; 3]] {
        &self.hat_grads
    }

    /// Vertex (lumped) mass: a third of the area of every incident triangle.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    /// Fingerprint of the geometry, used to catch fields paired with the wrong mesh.
    pub fn id(&self) -> u64 {
        self.id
    }
}

fn read_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, name: &str) -> Result<usize> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing `{name}` header") })?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(name) {
        return Err(Error::Parse { line: no, msg: format!("expected `{name} <count>`") });
    }
    let count = parts
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Parse { line: no, msg: "bad count".into() })?;
    if parts.next().is_some() {
        return Err(Error::Parse { line: no, msg: "trailing tokens".into() });
    }
    Ok(count)
}

fn read_record<'a, T: std::str::FromStr>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    what: &str,
) -> Result<(usize, Vec<T>)>
where
    T::Err: std::fmt::Display,
{
    let (no, line) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 0, msg: format!("too few {what} lines") })?;
    let vals = line
        .split_whitespace()
        .map(|t| t.parse::<T>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse { line: no, msg: e.to_string() })?;
    Ok((no, vals))
}

/// Which end of an arc an endpoint is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcSide {
    /// Lower arc-length end; the outward direction of the region is decreasing `s`.
    Start,
    /// Upper arc-length end; the outward direction is increasing `s`.
    End,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Endpoint {
    /// Position in `[0, perimeter)`.
    pub s: f64,
    pub arc: usize,
    pub side: ArcSide,
}

/// A union of disjoint boundary arcs. Each arc is stored as `(start, length)`
/// with `start` in `[0, perimeter)` and `0 < length <= perimeter`; arcs may
/// wrap past the perimeter.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSpec {
    arcs: Vec<(f64, f64)>,
    perimeter: f64,
}

impl RegionSpec {
    /// Builds a region from half-open intervals `[begin, end)`. `end` may exceed the
    /// perimeter to express wraparound.
    pub fn from_intervals(intervals: &[(f64, f64)], perimeter: f64) -> Result<Self> {
        if !(perimeter > 0.0) {
            return Err(Error::Argument("perimeter must be positive".into()));
        }
        let mut arcs = Vec::with_capacity(intervals.len());
        for &(begin, end) in intervals {
            let len = end - begin;
            if !(begin.is_finite() && end.is_finite()) || !(len > 0.0) {
                return Err(Error::Argument(format!("arc [{begin}, {end}) has no positive length")));
            }
            if len > perimeter * (1.0 + 1e-14) {
                return Err(Error::Argument(format!("arc [{begin}, {end}) is longer than the boundary")));
            }
            let mut start = begin.rem_euclid(perimeter);
            if start >= perimeter {
                start = 0.0;
            }
            arcs.push((start, len.min(perimeter)));
        }
        Self::from_arcs(arcs, perimeter)
    }

    fn from_arcs(mut arcs: Vec<(f64, f64)>, perimeter: f64) -> Result<Self> {
        arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let slack = 1e-12 * perimeter;
        for w in arcs.windows(2) {
            if w[0].0 + w[0].1 > w[1].0 + slack {
                return Err(Error::Argument(format!(
                    "arcs starting at {} and {} overlap",
                    w[0].0, w[1].0
                )));
            }
        }
        if arcs.len() > 1 {
            let (first, last) = (arcs[0], arcs[arcs.len() - 1]);
            if last.0 + last.1 > first.0 + perimeter + slack {
                return Err(Error::Argument("arcs overlap across the wraparound".into()));
            }
        }
        Ok(RegionSpec { arcs, perimeter })
    }

    pub fn empty(perimeter: f64) -> Self {
        RegionSpec { arcs: Vec::new(), perimeter }
    }

    pub fn full(perimeter: f64) -> Self {
        RegionSpec { arcs: vec![(0.0, perimeter)], perimeter }
    }

    /// Arcs as `(start, length)`, sorted by start.
    pub fn arcs(&self) -> &[(f64, f64)] {
        &self.arcs
    }

    /// Arcs as half-open `[begin, end)` intervals (end may exceed the perimeter).
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.arcs.iter().map(|&(s, l)| (s, s + l)).collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn total_mass(&self) -> f64 {
        self.arcs.iter().map(|a| a.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    /// Endpoints of every arc, ordered `[arc0.start, arc0.end, arc1.start, ...]`.
    /// A full-circle arc has no endpoints.
    pub fn endpoints(&self) -> Vec<Endpoint> {
        let mut out = Vec::with_capacity(2 * self.arcs.len());
        for (i, &(start, len)) in self.arcs.iter().enumerate() {
            if len >= self.perimeter {
                continue;
            }
            let mut end = (start + len).rem_euclid(self.perimeter);
            if end >= self.perimeter {
                end = 0.0;
            }
            out.push(Endpoint { s: start, arc: i, side: ArcSide::Start });
            out.push(Endpoint { s: end, arc: i, side: ArcSide::End });
        }
        out
    }

    /// Whether `s` lies in the closure of some arc (modulo the perimeter).
    pub fn contains_closed(&self, s: f64) -> bool {
        let tol = 1e-12 * self.perimeter;
        self.arcs.iter().any(|&(start, len)| {
            let d = (s - start).rem_euclid(self.perimeter);
            d <= len + tol || d >= self.perimeter - tol
        })
    }

    /// Length of the intersection of the region with `[a, b)`, where `0 <= a <= b <= perimeter`.
    pub fn overlap(&self, a: f64, b: f64) -> f64 {
        let p = self.perimeter;
        let mut total = 0.0;
        for &(start, len) in &self.arcs {
            // An arc may wrap, so test it against the window and its shifted copy.
            for shift in [-p, 0.0] {
                let lo = (start + shift).max(a);
                let hi = (start + len + shift).min(b);
                if hi > lo {
                    total += hi - lo;
                }
            }
        }
        total
    }

    /// Moves each endpoint by `t * speed` along the boundary. `speeds` follows the
    /// order of [`RegionSpec::endpoints`].
    pub fn perturb(&self, speeds: &[f64], t: f64) -> Result<RegionSpec> {
        let eps = self.endpoints();
        if speeds.len() != eps.len() {
            return Err(Error::Shape(format!(
                "{} speeds for {} endpoints",
                speeds.len(),
                eps.len()
            )));
        }
        if speeds.iter().any(|v| !v.is_finite()) || !t.is_finite() {
            return Err(Error::Argument("non-finite speed or step".into()));
        }
        if t == 0.0 {
            return Ok(self.clone());
        }
        let p = self.perimeter;
        let mut moved = Vec::with_capacity(self.arcs.len());
        let mut k = 0;
        for &(start, len) in &self.arcs {
            if len >= p {
                moved.push((start, len));
                continue;
            }
            let ds = t * speeds[k];
            let de = t * speeds[k + 1];
            k += 2;
            let new_len = len + de - ds;
            if !(new_len > 0.0) {
                return Err(Error::Collision(format!("arc starting at {start} vanishes")));
            }
            moved.push((start + ds, new_len));
        }
        // The arcs must keep their cyclic order and stay disjoint.
        let n = moved.len();
        if n > 1 {
            for i in 0..n {
                let (s0, l0) = moved[i];
                let (s1, _) = moved[(i + 1) % n];
                let next_start = if i + 1 == n { s1 + p } else { s1 };
                if s0 + l0 >= next_start {
                    return Err(Error::Collision(format!("arcs {i} and {} merge", (i + 1) % n)));
                }
            }
            let span = moved[n - 1].0 + moved[n - 1].1 - moved[0].0;
            if span >= p {
                return Err(Error::Collision("arcs wrap onto each other".into()));
            }
        } else if n == 1 && moved[0].1 >= p {
            return Err(Error::Collision("arc covers the whole boundary".into()));
        }
        let arcs = moved
            .into_iter()
            .map(|(s, l)| {
                let mut w = s.rem_euclid(p);
                if w >= p {
                    w = 0.0;
                }
                (w, l)
            })
            .collect();
        Self::from_arcs(arcs, p)
    }
}
