//! Sparse symmetric systems and their solution.
//!
//! Reductions are computed over fixed-size chunks and summed in order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

/// Sparsity of a cell-plus-neighbours operator, with the storage position of
/// every diagonal and of both off-diagonal entries of every face.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilPattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    pub diag: Vec<usize>,
    /// Position of `(lo, hi)` for each face.
    pub lo_hi: Vec<usize>,
    /// Position of `(hi, lo)` for each face.
    pub hi_lo: Vec<usize>,
}

impl StencilPattern {
    pub fn from_faces(n: usize, faces: &[(usize, usize)]) -> Self {
        let mut neighbours: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(lo, hi) in faces {
            neighbours[lo].push(hi);
            neighbours[hi].push(lo);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in &mut neighbours {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let find = |i: usize, j: usize| row_ptr[i] + cols[row_ptr[i]..row_ptr[i + 1]].binary_search(&j).unwrap();
        let diag = (0..n).map(|i| find(i, i)).collect();
        let lo_hi = faces.iter().map(|&(lo, hi)| find(lo, hi)).collect();
        let hi_lo = faces.iter().map(|&(lo, hi)| find(hi, lo)).collect();
        Self {
            n,
            row_ptr,
            cols,
            diag,
            lo_hi,
            hi_lo,
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

/// Square matrix in compressed sparse row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                assert!(c < n, "column {c} out of range for {n}x{n} matrix");
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    /// Matrix on `pattern` with the given values, one per stored entry.
    pub fn with_pattern(pattern: &StencilPattern, vals: Vec<f64>) -> Self {
        assert_eq!(vals.len(), pattern.cols.len());
        Self {
            n: pattern.n,
            row_ptr: pattern.row_ptr.clone(),
            cols: pattern.cols.clone(),
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, out)| {
            let base = c * CHUNK;
            for (k, yi) in out.iter_mut().enumerate() {
                let i = base + k;
                let mut acc = 0.0;
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.vals[p] * x[self.cols[p]];
                }
                *yi = acc;
            }
        });
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / max(|a_ij|, |a_ji|)`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let w = self.get(j, i);
                let scale = v.abs().max(w.abs());
                if scale > 0.0 {
                    worst = worst.max((v - w).abs() / scale);
                }
            }
        }
        worst
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// `x += alpha p`, `r -= alpha ap`; returns the new `|r|²` with the same
/// chunked reduction as [`dot`].
fn update_iterate(x: &mut [f64], r: &mut [f64], p: &[f64], ap: &[f64], alpha: f64) -> f64 {
    let partial: Vec<f64> = x
        .par_chunks_mut(CHUNK)
        .zip(r.par_chunks_mut(CHUNK))
        .zip(p.par_chunks(CHUNK).zip(ap.par_chunks(CHUNK)))
        .map(|((xc, rc), (pc, apc))| {
            let mut acc = 0.0;
            for i in 0..xc.len() {
                xc[i] += alpha * pc[i];
                rc[i] -= alpha * apc[i];
                acc += rc[i] * rc[i];
            }
            acc
        })
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `r = b - A x`
pub fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut ax = vec![0.0; a.n()];
    a.mul_vec(x, &mut ax);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let bn = norm(b);
    let rn = norm(&residual(a, x, b));
    if bn == 0.0 {
        rn
    } else {
        rn / bn
    }
}

/// Zero-fill incomplete Cholesky factor `L`: strictly lower entries per row
/// plus the reciprocal of each diagonal.
#[derive(Debug, Clone)]
struct IncompleteCholesky {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl IncompleteCholesky {
    fn factor(a: &CsrMatrix) -> Option<Self> {
        let n = a.n();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(a.nnz() / 2);
        let mut vals = Vec::with_capacity(a.nnz() / 2);
        let mut diag = vec![0.0; n];
        row_ptr.push(0);
        for (i, d) in diag.iter_mut().enumerate() {
            for (j, v) in a.row(i) {
                if j < i {
                    cols.push(j);
                    vals.push(v);
                } else if j == i {
                    *d = v;
                }
            }
            row_ptr.push(cols.len());
        }
        let mut inv_diag = vec![0.0; n];
        for i in 0..n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            for p in start..end {
                let k = cols[p];
                // sparse dot of rows i and k over columns < k
                let (ks, ke) = (row_ptr[k], row_ptr[k + 1]);
                let mut s = vals[p];
                let (mut pi, mut pk) = (start, ks);
                while pi < p && pk < ke {
                    match cols[pi].cmp(&cols[pk]) {
                        std::cmp::Ordering::Less => pi += 1,
                        std::cmp::Ordering::Greater => pk += 1,
                        std::cmp::Ordering::Equal => {
                            s -= vals[pi] * vals[pk];
                            pi += 1;
                            pk += 1;
                        }
                    }
                }
                vals[p] = s * inv_diag[k];
            }
            let mut d = diag[i];
            for v in &vals[start..end] {
                d -= v * v;
            }
            if !(d > 0.0) {
                return None;
            }
            inv_diag[i] = 1.0 / d.sqrt();
        }
        Some(Self {
            row_ptr,
            cols,
            vals,
            inv_diag,
        })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let mut s = r[i];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s -= self.vals[p] * z[self.cols[p]];
            }
            z[i] = s * self.inv_diag[i];
        }
        for i in (0..n).rev() {
            let zi = z[i] * self.inv_diag[i];
            z[i] = zi;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                z[self.cols[p]] -= self.vals[p] * zi;
            }
        }
    }
}

enum Preconditioner {
    Cholesky(IncompleteCholesky),
    Jacobi(Vec<f64>),
}

impl Preconditioner {
    fn new(a: &CsrMatrix) -> Self {
        match IncompleteCholesky::factor(a) {
            Some(ic) => Preconditioner::Cholesky(ic),
            None => Preconditioner::Jacobi(
                a.diagonal()
                    .into_iter()
                    .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
                    .collect(),
            ),
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Cholesky(ic) => ic.apply(r, z),
            Preconditioner::Jacobi(inv) => {
                z.par_iter_mut()
                    .zip(r.par_iter())
                    .zip(inv.par_iter())
                    .for_each(|((zi, ri), d)| *zi = ri * d);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub history: Vec<f64>,
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// system, starting from `x`. Converged when `|b - A x| <= tol |b|`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iterations: usize,
) -> Result<SolveStats> {
    let n = a.n();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
            history: vec![0.0],
        });
    }
    let mut r = residual(a, x, b);
    let mut rel = norm(&r) / bn;
    let mut history = vec![rel];
    if rel <= tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: rel,
            history,
        });
    }
    let pre = Preconditioner::new(a);
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        rel = update_iterate(x, &mut r, &p, &ap, alpha).sqrt() / bn;
        history.push(rel);
        if rel <= tol {
            // guard against drift of the recursive residual
            r = residual(a, x, b);
            rel = norm(&r) / bn;
            if rel <= tol {
                return Ok(SolveStats {
                    iterations,
                    relative_residual: rel,
                    history,
                });
            }
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::NotConverged {
        iterations,
        residual: rel,
        history,
    })
}

/// Largest system the dense fallback accepts.
pub const DENSE_LIMIT: usize = 10_000;

/// Direct LU solve of the assembled system; for verification on small grids.
pub fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.n() > DENSE_LIMIT {
        return Err(Error::Singular(format!(
            "dense fallback limited to {DENSE_LIMIT} unknowns, got {}",
            a.n()
        )));
    }
    let lu = a.to_dense().lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    lu.solve(&rhs)
        .map(|v| v.as_slice().to_vec())
        .ok_or_else(|| Error::Singular("dense factorization failed".to_string()))
}

/// Systems up to this size fall back to a direct solve when iterations stall.
pub const DIRECT_FALLBACK_LIMIT: usize = 2_000;

/// Conjugate gradients with a direct fallback for small systems, whose
/// iteration budget is also cut to a few sweeps of the unknowns.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iterations: usize) -> Result<SolveStats> {
    let n = a.n();
    let small = n <= DIRECT_FALLBACK_LIMIT;
    let budget = if small { max_iterations.min(4 * n + 50) } else { max_iterations };
    match conjugate_gradient(a, b, x, tol, budget) {
        Err(Error::NotConverged { iterations, history, .. }) if small => {
            let solution = dense_solve(a, b)?;
            x.copy_from_slice(&solution);
            Ok(SolveStats {
                iterations,
                relative_residual: relative_residual(a, x, b),
                history,
            })
        }
        other => other,
    }
}
