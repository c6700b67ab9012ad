//! Small dense linear algebra kernels.
//!
//! Everything here is sized for the problems this crate solves: square
//! matrices of dimension at most a few dozen, stored row-major in a flat
//! buffer. The routines favour accuracy on ill-conditioned positive definite
//! inputs (Jacobi methods) over asymptotic speed.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::math::{abs, hypot, sqrt};

/// A dense `n x n` real matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if `data.len() != n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "matrix data has wrong length");
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    /// Frobenius inner product `tr(A^T B)`.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(self.dot(self))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// `self += s * v v^T`
    pub fn add_outer(&mut self, s: f64, v: &[f64]) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        for i in 0..n {
            let si = s * v[i];
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += si * vj;
            }
        }
    }

    /// Replaces the matrix by its symmetric part.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = m;
                self.data[j * n + i] = m;
            }
        }
    }

    /// Largest absolute deviation from symmetry.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max(abs(self.data[i * n + j] - self.data[j * n + i]));
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Quadratic form `v^T A v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let r: f64 = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
            acc += v[i] * r;
        }
        acc
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// `A B`
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.n;
    debug_assert_eq!(n, b.n);
    let mut c = Matrix::zeros(n);
    for i in 0..n {
        let crow = &mut c.data[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a.data[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aik * bj;
            }
        }
    }
    c
}

/// `A^T B`
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.n;
    debug_assert_eq!(n, b.n);
    let mut c = Matrix::zeros(n);
    for k in 0..n {
        let arow = &a.data[k * n..(k + 1) * n];
        let brow = &b.data[k * n..(k + 1) * n];
        for i in 0..n {
            let aki = arow[i];
            if aki == 0.0 {
                continue;
            }
            let crow = &mut c.data[i * n..(i + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aki * bj;
            }
        }
    }
    c
}

/// `A B^T`
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.n;
    debug_assert_eq!(n, b.n);
    let mut c = Matrix::zeros(n);
    for i in 0..n {
        let arow = &a.data[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b.data[j * n..(j + 1) * n];
            c.data[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// Congruence `B^T A B`.
pub fn congruence_tn(a: &Matrix, b: &Matrix) -> Matrix {
    matmul_tn(b, &matmul(a, b))
}

/// Congruence `B A B^T`.
pub fn congruence_nt(a: &Matrix, b: &Matrix) -> Matrix {
    matmul_nt(&matmul(b, a), b)
}

/// Lower Cholesky factor `L` with `A = L L^T`; `None` if `A` is not
/// numerically positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.n;
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = a.data[j * n + j];
        for k in 0..j {
            d -= l.data[j * n + k] * l.data[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let djj = sqrt(d);
        l.data[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a.data[i * n + j];
            for k in 0..j {
                s -= l.data[i * n + k] * l.data[j * n + k];
            }
            l.data[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L L^T x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.n;
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l.data[i * n + k] * y[k];
        }
        y[i] = s / l.data[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.data[k * n + i] * y[k];
        }
        y[i] = s / l.data[i * n + i];
    }
    y
}

/// Solves the general system `A x = b` by Gaussian elimination with partial
/// pivoting. `None` if a pivot vanishes.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.n;
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = abs(m[col * n + col]);
        for r in (col + 1)..n {
            let v = abs(m[r * n + col]);
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let p = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= m[i * n + k] * x[k];
        }
        x[i] = s / m[i * n + i];
    }
    Some(x)
}

/// Eigen-decomposition of a symmetric matrix by the cyclic Jacobi method.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Eigenvectors stored as the columns of this matrix, in the order of
    /// `values`.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn new(a: &Matrix) -> Self {
        let (values, vectors) = jacobi(a, true);
        let vectors = vectors.expect("vectors requested");
        let n = a.n;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let mut sorted = Matrix::zeros(n);
        for (new, &old) in order.iter().enumerate() {
            for r in 0..n {
                sorted[(r, new)] = vectors[(r, old)];
            }
        }
        Self {
            values: order.iter().map(|&i| values[i]).collect(),
            vectors: sorted,
        }
    }

    /// Column `k` of the eigenvector matrix.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        let n = self.vectors.dim();
        (0..n).map(|r| self.vectors[(r, k)]).collect()
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let (mut values, _) = jacobi(a, false);
    values.sort_by(f64::total_cmp);
    values
}

/// Smallest eigenvalue of a symmetric matrix, by Householder reduction to
/// tridiagonal form and Sturm-sequence bisection.
pub fn min_eigenvalue(a: &Matrix) -> f64 {
    let n = a.n;
    if n == 0 {
        return f64::INFINITY;
    }
    let (d, e) = tridiagonalize(a);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { abs(e[i - 1]) } else { 0.0 } + if i + 1 < n { abs(e[i]) } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let scale = abs(lo).max(abs(hi)).max(f64::MIN_POSITIVE);
    while hi - lo > 1e-15 * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count_below(&d, &e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Number of eigenvalues of the tridiagonal matrix `(d, e)` below `x`.
fn sturm_count_below(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        if q == 0.0 {
            q = f64::EPSILON * (abs(e[i - 1]) + f64::MIN_POSITIVE);
        }
        q = d[i] - x - e[i - 1] * e[i - 1] / q;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Householder reduction of a symmetric matrix to tridiagonal form; returns
/// the diagonal and the sub-diagonal.
pub fn tridiagonalize(a: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.n;
    let mut m = a.data.clone();
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut alpha = 0.0;
        for i in 0..len {
            v[i] = m[(k + 1 + i) * n + k];
            alpha += v[i] * v[i];
        }
        let mut alpha = sqrt(alpha);
        if alpha == 0.0 {
            continue;
        }
        if v[0] > 0.0 {
            alpha = -alpha;
        }
        v[0] -= alpha;
        let vv: f64 = v[..len].iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        let beta = 2.0 / vv;
        for i in 0..len {
            let row = &m[(k + 1 + i) * n + k + 1..(k + 2 + i) * n];
            p[i] = beta * row.iter().zip(&v[..len]).map(|(x, y)| x * y).sum::<f64>();
        }
        let kk = 0.5
            * beta
            * p[..len]
                .iter()
                .zip(&v[..len])
                .map(|(x, y)| x * y)
                .sum::<f64>();
        for i in 0..len {
            p[i] -= kk * v[i];
        }
        for i in 0..len {
            let row = &mut m[(k + 1 + i) * n + k + 1..(k + 2 + i) * n];
            for j in 0..len {
                row[j] -= v[i] * p[j] + p[i] * v[j];
            }
        }
        m[(k + 1) * n + k] = alpha;
        m[k * n + k + 1] = alpha;
        for i in 1..len {
            m[(k + 1 + i) * n + k] = 0.0;
            m[k * n + k + 1 + i] = 0.0;
        }
    }
    let d = (0..n).map(|i| m[i * n + i]).collect();
    let e = (0..n.saturating_sub(1))
        .map(|i| m[(i + 1) * n + i])
        .collect();
    (d, e)
}

fn jacobi(a: &Matrix, want_vectors: bool) -> (Vec<f64>, Option<Matrix>) {
    let n = a.n;
    let mut m = a.clone();
    m.symmetrize();
    let mut v = want_vectors.then(|| Matrix::identity(n));
    if n == 1 {
        return (vec![m.data[0]], v);
    }
    let scale = m.frobenius_norm();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.data[p * n + q] * m.data[p * n + q];
            }
        }
        if sqrt(off) <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.data[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m.data[p * n + p];
                let aqq = m.data[q * n + q];
                if abs(apq) <= 1e-300 {
                    m.data[p * n + q] = 0.0;
                    m.data[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + hypot(1.0, theta))
                } else {
                    -1.0 / (-theta + hypot(1.0, theta))
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.data[k * n + p];
                    let mkq = m.data[k * n + q];
                    m.data[k * n + p] = c * mkp - s * mkq;
                    m.data[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m.data[p * n + k];
                    let mqk = m.data[q * n + k];
                    m.data[p * n + k] = c * mpk - s * mqk;
                    m.data[q * n + k] = s * mpk + c * mqk;
                }
                m.data[p * n + q] = 0.0;
                m.data[q * n + p] = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v.data[k * n + p];
                        let vkq = v.data[k * n + q];
                        v.data[k * n + p] = c * vkp - s * vkq;
                        v.data[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    ((0..n).map(|i| m.data[i * n + i]).collect(), v)
}

/// Singular value decomposition `B = U diag(s) V^T` of a square matrix by
/// one-sided (Hestenes) Jacobi rotations. Singular values come back
/// unsorted, paired with the columns of `U` and `V`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn new(b: &Matrix) -> Self {
        let n = b.n;
        // Rows of `w` are the columns of `B`; rows of `vt` the columns of V.
        let mut w = b.transpose();
        let mut vt = Matrix::identity(n);
        for _sweep in 0..80 {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let (alpha, beta, gamma) = {
                        let rp = &w.data[p * n..(p + 1) * n];
                        let rq = &w.data[q * n..(q + 1) * n];
                        let mut a = 0.0;
                        let mut bb = 0.0;
                        let mut g = 0.0;
                        for k in 0..n {
                            a += rp[k] * rp[k];
                            bb += rq[k] * rq[k];
                            g += rp[k] * rq[k];
                        }
                        (a, bb, g)
                    };
                    if gamma == 0.0 || abs(gamma) <= 1e-15 * sqrt(alpha * beta) {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = if zeta >= 0.0 {
                        1.0 / (zeta + hypot(1.0, zeta))
                    } else {
                        -1.0 / (-zeta + hypot(1.0, zeta))
                    };
                    let c = 1.0 / sqrt(1.0 + t * t);
                    let s = c * t;
                    rotate_rows(&mut w.data, n, p, q, c, s);
                    rotate_rows(&mut vt.data, n, p, q, c, s);
                }
            }
            if !rotated {
                break;
            }
        }
        let mut s = vec![0.0; n];
        let mut u = Matrix::zeros(n);
        for j in 0..n {
            let row = &w.data[j * n..(j + 1) * n];
            let norm = sqrt(row.iter().map(|x| x * x).sum());
            s[j] = norm;
            for k in 0..n {
                u.data[k * n + j] = if norm > 0.0 { row[k] / norm } else { 0.0 };
            }
        }
        Self {
            u,
            s,
            v: vt.transpose(),
        }
    }
}

#[inline]
fn rotate_rows(data: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let xp = data[p * n + k];
        let xq = data[q * n + k];
        data[p * n + k] = c * xp - s * xq;
        data[q * n + k] = s * xp + c * xq;
    }
}

/// Cholesky factorization of a Hermitian positive definite complex matrix,
/// stored row-major.
#[derive(Clone, Debug)]
pub struct ComplexCholesky {
    n: usize,
    l: Vec<Complex64>,
}

impl ComplexCholesky {
    pub fn new(a: &[Complex64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = a[j * n + j].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let djj = sqrt(d);
            l[j * n + j] = Complex64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i].re;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i].conj() * y[k];
            }
            y[i] = s / l[i * n + i].re;
        }
        y
    }
}

/// `a^H b`
#[inline]
pub fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Squared Euclidean norm of a complex vector.
#[inline]
pub fn cnorm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}
