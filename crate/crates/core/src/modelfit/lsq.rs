//! Least squares through the normal equations, factored with a diagonally
//! pivoted Cholesky decomposition.
//!
//! Pivot order: at every step the remaining column with the largest
//! Schur-complement diagonal, ties broken by the lowest column index. The
//! factorization stops when that diagonal drops below `RANK_TOL` times the
//! largest initial diagonal; the remaining columns are treated as
//! dependent and the minimum-norm solution is returned.

#![allow(clippy::needless_range_loop)]

/// Relative pivot threshold.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub rank: usize,
}

impl Solution {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.x.len()
    }
}

/// A sparse design matrix row: `(column, value)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// Minimizes `|A x - b|` for the `n`-column matrix whose rows are `rows`.
pub fn solve(n: usize, rows: &[SparseRow], b: &[f64]) -> Solution {
    assert_eq!(rows.len(), b.len());
    let mut m = vec![0.0; n * n];
    let mut c = vec![0.0; n];
    for (row, &rhs) in rows.iter().zip(b) {
        for &(i, vi) in row {
            c[i] += vi * rhs;
            for &(j, vj) in row {
                m[i * n + j] += vi * vj;
            }
        }
    }
    solve_normal(n, &m, &c)
}

/// Solves `M x = c` for symmetric positive semidefinite `M` (row-major).
pub fn solve_normal(n: usize, m: &[f64], c: &[f64]) -> Solution {
    if n == 0 {
        return Solution { x: Vec::new(), rank: 0 };
    }
    let at = |i: usize, j: usize| m[i * n + j];
    let mut diag: Vec<f64> = (0..n).map(|i| at(i, i)).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    let tol = RANK_TOL * max_diag;
    let mut piv: Vec<usize> = (0..n).collect();
    // l[orig * n + k]: factor entry of original column `orig`, step `k`.
    let mut l = vec![0.0; n * n];
    let mut rank = 0;
    for k in 0..n {
        let mut best = k;
        for i in k + 1..n {
            let (di, db) = (diag[piv[i]], diag[piv[best]]);
            if di > db || (di == db && piv[i] < piv[best]) {
                best = i;
            }
        }
        piv.swap(k, best);
        let pk = piv[k];
        if diag[pk].is_nan() || diag[pk] <= tol {
            break;
        }
        let lkk = diag[pk].sqrt();
        l[pk * n + k] = lkk;
        for &pi in &piv[k + 1..] {
            let mut s = at(pi, pk);
            for q in 0..k {
                s -= l[pi * n + q] * l[pk * n + q];
            }
            let v = s / lkk;
            l[pi * n + k] = v;
            diag[pi] -= v * v;
        }
        rank = k + 1;
    }
    let r = rank;
    let lf = |pos: usize, k: usize| l[piv[pos] * n + k];
    let mut x = vec![0.0; n];
    if r == n {
        // L z = P^T c, then L^T w = z.
        let mut z = vec![0.0; n];
        for k in 0..n {
            let mut s = c[piv[k]];
            for q in 0..k {
                s -= lf(k, q) * z[q];
            }
            z[k] = s / lf(k, k);
        }
        let mut w = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = z[k];
            for i in k + 1..n {
                s -= lf(i, k) * w[i];
            }
            w[k] = s / lf(k, k);
        }
        for k in 0..n {
            x[piv[k]] = w[k];
        }
        return Solution { x, rank };
    }
    // M = P L L^T P^T with L of width r, so M^+ = P L (L^T L)^-2 L^T P^T.
    let mut y = vec![0.0; r];
    for (k, yk) in y.iter_mut().enumerate() {
        *yk = (0..n).map(|pos| lf(pos, k) * c[piv[pos]]).sum();
    }
    let mut g = vec![0.0; r * r];
    for a in 0..r {
        for b in 0..=a {
            let v: f64 = (0..n).map(|pos| lf(pos, a) * lf(pos, b)).sum();
            g[a * r + b] = v;
            g[b * r + a] = v;
        }
    }
    let gc = cholesky(r, &g);
    let u = chol_solve(r, &gc, &y);
    let v = chol_solve(r, &gc, &u);
    for pos in 0..n {
        x[piv[pos]] = (0..r).map(|k| lf(pos, k) * v[k]).sum();
    }
    Solution { x, rank }
}

/// Plain Cholesky of a positive definite matrix; lower factor, row-major.
fn cholesky(n: usize, a: &[f64]) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for q in 0..j {
            d -= l[j * n + q] * l[j * n + q];
        }
        let ljj = d.max(f64::MIN_POSITIVE).sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for q in 0..j {
                s -= l[i * n + q] * l[j * n + q];
            }
            l[i * n + j] = s / ljj;
        }
    }
    l
}

fn chol_solve(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for q in 0..i {
            s -= l[i * n + q] * z[q];
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for q in i + 1..n {
            s -= l[q * n + i] * x[q];
        }
        x[i] = s / l[i * n + i];
    }
    x
}
