//! Sparse symmetric linear algebra.
//!
//! The direct solver is a banded LDLᵀ factorization without pivoting,
//! preceded by symmetric diagonal equilibration (undone on the solution).
//! The assembled systems of this crate are either SPD or symmetric
//! quasi-definite saddle systems, for which the signed factorization is
//! well defined; a residual check guards every solve. Conjugate gradients
//! is provided for SPD subproblems, and extreme eigenvalues are estimated
//! with a Lanczos iteration on a matrix-vector operator.

use std::io::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Compressed sparse row symmetric matrix (both triangles stored).
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub symmetric: bool,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            let p = next[r];
            cols[p] = c;
            vals[p] = v;
            next[r] += 1;
        }
        // sort each row and merge duplicates
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for r in 0..n {
            let lo = counts[r];
            let hi = counts[r + 1];
            let mut row: Vec<(usize, f64)> =
                cols[lo..hi].iter().copied().zip(vals[lo..hi].iter().copied()).collect();
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr[r + 1] = indices.len();
        }
        SparseMatrix {
            n,
            indptr,
            indices,
            values,
            symmetric,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            y[r] = acc;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        for p in self.indptr[r]..self.indptr[r + 1] {
            if self.indices[p] == c {
                return self.values[p];
            }
        }
        0.0
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest symmetry defect |a_ij - a_ji| over all stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for p in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[p];
                if c >= r {
                    worst = worst.max((self.values[p] - self.get(c, r)).abs());
                }
            }
        }
        worst
    }

    /// Half bandwidth max |i - j| over nonzeros.
    pub fn half_bandwidth(&self) -> usize {
        let mut hb = 0usize;
        for r in 0..self.n {
            for p in self.indptr[r]..self.indptr[r + 1] {
                hb = hb.max(r.abs_diff(self.indices[p]));
            }
        }
        hb
    }

    /// Write in Matrix Market coordinate format (general symmetric entries kept).
    pub fn write_matrix_market(&self, path: &Path, comment: &str) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "% {comment}")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.values.len())?;
        for r in 0..self.n {
            for p in self.indptr[r]..self.indptr[r + 1] {
                writeln!(w, "{} {} {:e}", r + 1, self.indices[p] + 1, self.values[p])?;
            }
        }
        Ok(())
    }
}

/// Rectangular sparse matrix in CSR form (coupling blocks).
#[derive(Debug, Clone)]
pub struct RectMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl RectMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let sq = SparseMatrix::from_triplets(nrows.max(ncols), triplets, false);
        let mut indptr = sq.indptr;
        indptr.truncate(nrows + 1);
        RectMatrix {
            nrows,
            ncols,
            indptr,
            indices: sq.indices,
            values: sq.values,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            y[r] = acc;
        }
    }

    /// y = Aᵀ x.
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        for v in y.iter_mut() {
            *v = 0.0;
        }
        for r in 0..self.nrows {
            let xr = x[r];
            if xr != 0.0 {
                for p in self.indptr[r]..self.indptr[r + 1] {
                    y[self.indices[p]] += self.values[p] * xr;
                }
            }
        }
    }
}

/// Banded LDLᵀ factorization with symmetric equilibration.
pub struct DirectFactor {
    n: usize,
    hb: usize,
    /// Row-major lower band, band[i * (hb+1) + (hb - (i - j))] = L_ij (unit diagonal).
    band: Vec<f64>,
    d: Vec<f64>,
    scale: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-14;

impl DirectFactor {
    pub fn new(m: &SparseMatrix) -> Result<Self> {
        let n = m.n;
        if n == 0 {
            return Err(Error::StructurallySingular("empty matrix".into()));
        }
        // equilibration scales from the diagonal (fall back to the row max)
        let mut scale = vec![0.0; n];
        for r in 0..n {
            let lo = m.indptr[r];
            let hi = m.indptr[r + 1];
            if lo == hi {
                return Err(Error::StructurallySingular(format!("row {r} has no entries")));
            }
            let diag = m.get(r, r).abs();
            let basis = if diag > 0.0 {
                diag
            } else {
                m.values[lo..hi].iter().fold(0.0f64, |a, v| a.max(v.abs()))
            };
            if basis == 0.0 {
                return Err(Error::StructurallySingular(format!("row {r} is identically zero")));
            }
            scale[r] = 1.0 / basis.sqrt();
        }

        let hb = m.half_bandwidth();
        let w = hb + 1;
        let mut band = vec![0.0; n * w];
        for r in 0..n {
            for p in m.indptr[r]..m.indptr[r + 1] {
                let c = m.indices[p];
                if c <= r {
                    band[r * w + (hb - (r - c))] = m.values[p] * scale[r] * scale[c];
                }
            }
        }

        // in-place banded LDL^T, unit lower triangle in `band`
        let mut d = vec![0.0; n];
        for i in 0..n {
            let jlo = i.saturating_sub(hb);
            for j in jlo..=i {
                // dot over k in [max(jlo, j-hb), j)
                let klo = jlo.max(j.saturating_sub(hb));
                let mut sum = band[i * w + (hb - (i - j))];
                if klo < j {
                    let off_i = i * w + hb - i; // + k
                    let off_j = j * w + hb - j;
                    let mut acc = 0.0;
                    for k in klo..j {
                        acc += band[off_i + k] * band[off_j + k] * d[k];
                    }
                    sum -= acc;
                }
                if j == i {
                    if sum.abs() <= PIVOT_TOL {
                        return Err(Error::SingularPivot { index: i, pivot: sum });
                    }
                    d[i] = sum;
                } else {
                    band[i * w + (hb - (i - j))] = sum / d[j];
                }
            }
        }
        Ok(DirectFactor { n, hb, band, d, scale })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let w = self.hb + 1;
        let mut x: Vec<f64> = rhs.iter().zip(self.scale.iter()).map(|(b, s)| b * s).collect();
        // forward: L y = b
        for i in 0..n {
            let jlo = i.saturating_sub(self.hb);
            let mut acc = 0.0;
            let off = i * w + self.hb - i;
            for j in jlo..i {
                acc += self.band[off + j] * x[j];
            }
            x[i] -= acc;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        // backward: L^T x = z
        for i in (0..n).rev() {
            let v = x[i];
            let jlo = i.saturating_sub(self.hb);
            let off = i * w + self.hb - i;
            for j in jlo..i {
                x[j] -= self.band[off + j] * v;
            }
        }
        for i in 0..n {
            x[i] *= self.scale[i];
        }
        x
    }

    /// Solve with one step of iterative refinement against `m`.
    pub fn solve_refined(&self, m: &SparseMatrix, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.solve(rhs);
        let mut r = vec![0.0; m.n];
        m.matvec(&x, &mut r);
        for i in 0..m.n {
            r[i] = rhs[i] - r[i];
        }
        let dx = self.solve(&r);
        for i in 0..m.n {
            x[i] += dx[i];
        }
        x
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct solve with the post-hoc residual guarantee
/// ‖Mx - b‖ ≤ 1e-10 (‖M‖_F ‖x‖ + ‖b‖).
pub fn solve_direct(m: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.n {
        return Err(Error::Shape(format!("rhs length {} vs matrix dim {}", rhs.len(), m.n)));
    }
    let f = DirectFactor::new(m)?;
    let x = f.solve_refined(m, rhs);
    let mut r = vec![0.0; m.n];
    m.matvec(&x, &mut r);
    for i in 0..m.n {
        r[i] -= rhs[i];
    }
    let res = norm2(&r);
    let bound = 1e-10 * (m.frobenius() * norm2(&x) + norm2(rhs));
    if res > bound {
        return Err(Error::ResidualCheck {
            residual: res,
            tol: bound,
            context: " (direct solve)".into(),
        });
    }
    Ok(x)
}

/// Conjugate gradients for SPD systems. Returns (solution, iterations).
pub fn solve_cg(m: &SparseMatrix, rhs: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, usize)> {
    let n = m.n;
    if rhs.len() != n {
        return Err(Error::Shape(format!("rhs length {} vs matrix dim {}", rhs.len(), n)));
    }
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rs = dot(&r, &r);
    for it in 1..=maxit {
        m.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SpdViolation(format!(
                "negative curvature p'Ap = {pap:.3e} at iteration {it}"
            )));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iters: maxit,
        residual: rs.sqrt() / bnorm,
    })
}

/// Eigenvalues of a symmetric tridiagonal matrix by Sturm bisection.
fn tridiag_extreme(alpha: &[f64], beta: &[f64], want_min: bool) -> f64 {
    let n = alpha.len();
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let b0 = if i > 0 { beta[i - 1].abs() } else { 0.0 };
        let b1 = if i < n - 1 { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - b0 - b1);
        hi = hi.max(alpha[i] + b0 + b1);
    }
    // count of eigenvalues < x via the Sturm sequence
    let count_below = |x: f64| -> usize {
        let mut count = 0usize;
        let mut q = 1.0f64;
        for i in 0..n {
            let b2 = if i > 0 { beta[i - 1] * beta[i - 1] } else { 0.0 };
            q = alpha[i] - x - if i > 0 { b2 / q } else { 0.0 };
            if q == 0.0 {
                q = -1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let target = if want_min { 1 } else { n };
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if count_below(mid) >= target {
            b = mid;
        } else {
            a = mid;
        }
        if (b - a).abs() <= 1e-15 * (1.0 + b.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Lanczos iteration with full reorthogonalization on a matrix-free
/// symmetric operator; returns the requested extreme eigenvalue.
pub fn lanczos_extreme(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    n: usize,
    want_min: bool,
    tol: f64,
    maxit: usize,
) -> Result<f64> {
    // deterministic pseudo-random start vector
    let mut v = vec![0.0; n];
    let mut state = 0x9e3779b97f4a7c15u64;
    for vi in v.iter_mut() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        *vi = (state as f64 / u64::MAX as f64) - 0.5;
    }
    let nv = norm2(&v);
    for vi in v.iter_mut() {
        *vi /= nv;
    }

    let m_max = maxit.min(n);
    let mut basis: Vec<Vec<f64>> = vec![v.clone()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev = f64::NAN;
    for m in 0..m_max {
        apply(&basis[m], &mut w);
        let a = dot(&basis[m], &w);
        alpha.push(a);
        for i in 0..n {
            w[i] -= a * basis[m][i];
        }
        if m > 0 {
            let b = beta[m - 1];
            for i in 0..n {
                w[i] -= b * basis[m - 1][i];
            }
        }
        // full reorthogonalization
        for q in &basis {
            let c = dot(q, &w);
            for i in 0..n {
                w[i] -= c * q[i];
            }
        }
        let est = tridiag_extreme(&alpha, &beta, want_min);
        if m >= 2 && (est - prev).abs() <= tol * (1.0 + est.abs()) {
            return Ok(est);
        }
        prev = est;
        let b = norm2(&w);
        if b <= 1e-14 * (1.0 + alpha[0].abs()) {
            // invariant subspace found; the tridiagonal spectrum is exact
            return Ok(est);
        }
        if m + 1 < m_max {
            beta.push(b);
            let q: Vec<f64> = w.iter().map(|x| x / b).collect();
            basis.push(q);
        }
    }
    Err(Error::NonConvergence {
        iters: m_max,
        residual: (tridiag_extreme(&alpha, &beta, want_min) - prev).abs(),
    })
}

/// Smallest eigenvalue of a symmetric sparse matrix.
pub fn min_eig_estimate(m: &SparseMatrix, tol: f64) -> Result<f64> {
    let n = m.n;
    lanczos_extreme(&mut |x, y| m.matvec(x, y), n, true, tol, 400.max(n.min(500)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, scale: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 * scale));
            if i + 1 < n {
                t.push((i, i + 1, -scale));
                t.push((i + 1, i, -scale));
            }
        }
        SparseMatrix::from_triplets(n, &t, true)
    }

    /// Dense Gaussian elimination oracle for small systems.
    fn dense_solve(a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        let mut a = a;
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for k in row + 1..n {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        x
    }

    #[test]
    fn identity_solve() {
        let m = SparseMatrix::from_triplets(4, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)], true);
        let rhs = vec![1.0, -2.0, 3.0, 0.5];
        let x = solve_direct(&m, &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn dirichlet_laplacian_matches_explicit_inverse() {
        // tridiag(-1, 2, -1)/h^2 with h = 1/4, rhs = 1
        let h2 = 1.0 / 16.0;
        let m = tridiag(3, 1.0 / h2);
        let x = solve_direct(&m, &[1.0, 1.0, 1.0]).unwrap();
        assert!((x[0] - 3.0 / 32.0).abs() < 1e-14);
        assert!((x[1] - 4.0 / 32.0).abs() < 1e-14);
        assert!((x[2] - 3.0 / 32.0).abs() < 1e-14);

        // cross-check against the dense oracle on a slightly larger system
        let n = 9;
        let m = tridiag(n, 7.3);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let dense: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| m.get(i, j)).collect())
            .collect();
        let expect = dense_solve(dense, rhs.clone());
        let got = solve_direct(&m, &rhs).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn singular_matrix_is_an_error() {
        // one zero row
        let m = SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 0.0), (2, 2, 2.0)], true);
        assert!(solve_direct(&m, &[1.0, 1.0, 1.0]).is_err());
        // rank-deficient but no zero row
        let m = SparseMatrix::from_triplets(
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
            true,
        );
        assert!(solve_direct(&m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cg_basics() {
        let m = SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)], true);
        let (x, iters) = solve_cg(&m, &[1.0, 2.0, 3.0], 1e-10, 10).unwrap();
        assert_eq!(iters, 1, "identity converges in one iteration");
        assert_eq!(x, vec![1.0, 2.0, 3.0]);

        let (x, iters) = solve_cg(&m, &[0.0, 0.0, 0.0], 1e-10, 10).unwrap();
        assert_eq!(iters, 0);
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn cg_agrees_with_direct_on_2d_laplacian() {
        // 16x16-cell unit-square Dirichlet Laplacian (interior nodes)
        let n1 = 15;
        let n = n1 * n1;
        let h2 = (1.0 / 16.0f64).powi(2);
        let idx = |i: usize, j: usize| i * n1 + j;
        let mut t = Vec::new();
        for i in 0..n1 {
            for j in 0..n1 {
                t.push((idx(i, j), idx(i, j), 4.0 / h2));
                if i > 0 {
                    t.push((idx(i, j), idx(i - 1, j), -1.0 / h2));
                }
                if i + 1 < n1 {
                    t.push((idx(i, j), idx(i + 1, j), -1.0 / h2));
                }
                if j > 0 {
                    t.push((idx(i, j), idx(i, j - 1), -1.0 / h2));
                }
                if j + 1 < n1 {
                    t.push((idx(i, j), idx(i, j + 1), -1.0 / h2));
                }
            }
        }
        let m = SparseMatrix::from_triplets(n, &t, true);
        let rhs: Vec<f64> = (0..n).map(|q| ((q % 17) as f64 - 8.0) / 8.0).collect();
        let xd = solve_direct(&m, &rhs).unwrap();
        let (xc, _) = solve_cg(&m, &rhs, 1e-12, 2000).unwrap();
        let diff: f64 = xd.iter().zip(&xc).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(diff < 1e-8, "direct vs cg differ by {diff}");
    }

    #[test]
    fn cg_detects_indefiniteness() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)], true);
        let err = solve_cg(&m, &[1.0, 1.0], 1e-10, 10).unwrap_err();
        assert!(matches!(err, Error::SpdViolation(_)));
    }

    #[test]
    fn min_eig_examples() {
        let m = SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0)], true);
        let e = min_eig_estimate(&m, 1e-8).unwrap();
        assert!((e - 1.0).abs() < 1e-6, "diag(1,2,3) min eig {e}");

        let n = 10;
        let m = tridiag(n, 1.0);
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let e = min_eig_estimate(&m, 1e-9).unwrap();
        assert!((e - exact).abs() < 1e-7 * exact.max(1.0), "{e} vs {exact}");

        let m = SparseMatrix::from_triplets(5, &(0..5).map(|i| (i, i, 1.0)).collect::<Vec<_>>(), true);
        let e = min_eig_estimate(&m, 1e-8).unwrap();
        assert!((e - 1.0).abs() < 1e-8);
    }

    #[test]
    fn determinism_bitwise() {
        let m = tridiag(50, 3.0);
        let rhs: Vec<f64> = (0..50).map(|i| (i as f64).cos()).collect();
        let a = solve_direct(&m, &rhs).unwrap();
        let b = solve_direct(&m, &rhs).unwrap();
        assert_eq!(a, b);
        let (c1, i1) = solve_cg(&m, &rhs, 1e-10, 500).unwrap();
        let (c2, i2) = solve_cg(&m, &rhs, 1e-10, 500).unwrap();
        assert_eq!(i1, i2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn quasi_definite_saddle_factors_without_pivoting() {
        // [ I  B^T; B  -I ] with a skinny coupling block
        let n = 8;
        let mut t = Vec::new();
        for i in 0..5 {
            t.push((i, i, 2.0));
        }
        for i in 5..n {
            t.push((i, i, -1.5));
        }
        for (r, c, v) in [(5, 0, 0.7), (6, 2, -0.4), (7, 4, 1.1)] {
            t.push((r, c, v));
            t.push((c, r, v));
        }
        let m = SparseMatrix::from_triplets(n, &t, true);
        let rhs: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let x = solve_direct(&m, &rhs).unwrap();
        let mut r = vec![0.0; n];
        m.matvec(&x, &mut r);
        for i in 0..n {
            assert!((r[i] - rhs[i]).abs() < 1e-12);
        }
    }
}
