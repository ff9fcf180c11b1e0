//! Compressed sparse row matrices and the symmetric positive definite solvers
//! used by the eigensolvers.
//!
//! Direct solves use an envelope (skyline) Cholesky factorization after a
//! reverse Cuthill-McKee reordering; very large systems fall back to conjugate
//! gradients with a diagonal preconditioner.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Systems with at least this many unknowns are solved iteratively.
pub const DIRECT_SOLVE_LIMIT: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles an `n x n` matrix from `(row, col, value)` triplets, summing duplicates.
    /// Duplicates are summed in triplet order, so symmetric triplet streams give
    /// exactly symmetric matrices.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            // stable sort keeps triplet order among duplicates
            scratch.sort_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Exact (bitwise) symmetry check.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// Principal submatrix on the index set `keep` (in the given order).
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (old_j, v) in self.row(old_i) {
                if map[old_j] != usize::MAX {
                    triplets.push((new_i, map[old_j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), &triplets)
    }
}

/// Reverse Cuthill-McKee ordering of the sparsity graph. Returns `perm` with
/// `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |root: usize, visited_global: &[bool]| -> (usize, usize) {
        // returns (last node reached, eccentricity)
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::from([root]);
        dist[root] = 0;
        let mut last = root;
        while let Some(v) = queue.pop_front() {
            last = v;
            for (w, _) in a.row(v) {
                if dist[w] == usize::MAX && !visited_global[w] {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        (last, dist[last])
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .expect("unvisited node");
        // pseudo-peripheral start: a few BFS sweeps
        let mut root = seed;
        let mut ecc = 0;
        for _ in 0..4 {
            let (far, e) = bfs_levels(root, &visited);
            if e <= ecc {
                break;
            }
            ecc = e;
            root = far;
        }
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        let mut nbrs = Vec::new();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).map(|(w, _)| w).filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A P^T = L L^T`, stored row by row from the first
/// nonzero column of each row to the diagonal.
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0usize; n];
        for (new_i, &old_i) in perm.iter().enumerate() {
            first[new_i] = a.row(old_i).map(|(j, _)| inv[j]).filter(|&j| j <= new_i).min().unwrap_or(new_i);
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0usize);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (j, v) in a.row(old_i) {
                let new_j = inv[j];
                if new_j <= new_i {
                    data[start[new_i] + new_j - first[new_i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (before, rest) = data.split_at_mut(start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let row_j = &before[start[j]..start[j + 1]];
                let k0 = fi.max(fj);
                let mut acc = row_i[j - fi];
                let li = &row_i[k0 - fi..j - fi];
                let lj = &row_j[k0 - fj..j - fj];
                acc -= li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
                row_i[j - fi] = acc / row_j[j - fj];
            }
            let d = row_i[i - fi] - row_i[..i - fi].iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Internal(format!("matrix is not positive definite (pivot {i}: {d})")));
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(SkylineCholesky { perm, first, start, data })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // forward: L y = Pb
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, x)| l * x).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        // backward: L^T x = y, column-oriented over the stored rows
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }
}

/// Conjugate gradients with a Jacobi preconditioner.
#[derive(Clone, Debug)]
pub struct JacobiPcg {
    matrix: CsrMatrix,
    inv_diag: Vec<f64>,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl JacobiPcg {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        let diag = matrix.diagonal();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Internal("nonpositive diagonal in SPD solve".into()));
        }
        let inv_diag = diag.iter().map(|d| 1.0 / d).collect();
        let max_iters = 10 * matrix.dim() + 100;
        Ok(JacobiPcg { matrix, inv_diag, rel_tol: 1e-14, max_iters })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.dim();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for _ in 0..self.max_iters {
            self.matrix.mul_vec_into(&p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= self.rel_tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * self.inv_diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NotConverged("conjugate gradients hit the iteration limit".into()))
    }
}

/// SPD solver whose factorization (or preconditioner) is reused across solves.
#[derive(Clone, Debug)]
pub enum SpdSolver {
    Direct(SkylineCholesky),
    Iterative(JacobiPcg),
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        Self::with_limit(a, DIRECT_SOLVE_LIMIT)
    }

    /// Direct factorization below `limit` unknowns, conjugate gradients otherwise.
    pub fn with_limit(a: &CsrMatrix, limit: usize) -> Result<Self> {
        if a.dim() < limit {
            Ok(SpdSolver::Direct(SkylineCholesky::factor(a)?))
        } else {
            Ok(SpdSolver::Iterative(JacobiPcg::new(a.clone())?))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpdSolver::Direct(f) => Ok(f.solve(b)),
            SpdSolver::Iterative(cg) => cg.solve(b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (0, 0, 3.0), (1, 0, 2.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert!(a.is_symmetric());
    }

    #[test]
    fn cholesky_and_cg_agree() {
        // 2D grid Laplacian plus shift, shuffled numbering
        let m = 12;
        let n = m * m;
        let label = |i: usize| (i * 37) % n;
        let mut t = Vec::new();
        for y in 0..m {
            for x in 0..m {
                let i = label(y * m + x);
                t.push((i, i, 4.1));
                if x + 1 < m {
                    let j = label(y * m + x + 1);
                    t.push((i, j, -1.0));
                    t.push((j, i, -1.0));
                }
                if y + 1 < m {
                    let j = label((y + 1) * m + x);
                    t.push((i, j, -1.0));
                    t.push((j, i, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let x1 = SpdSolver::with_limit(&a, usize::MAX).unwrap().solve(&b).unwrap();
        let x2 = SpdSolver::with_limit(&a, 0).unwrap().solve(&b).unwrap();
        let r = a.mul_vec(&x1);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12);
            assert!((x1[i] - x2[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d(50);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
        let f = SkylineCholesky::factor(&a).unwrap();
        assert!(f.envelope_size() <= 2 * 50);
    }

    #[test]
    fn indefinite_is_reported() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(SkylineCholesky::factor(&a).is_err());
    }

    #[test]
    fn submatrix() {
        let a = laplacian_1d(5);
        let s = a.principal_submatrix(&[0, 2, 3]);
        assert_eq!(s.get(1, 2), -1.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(0, 0), 2.5);
    }
}
