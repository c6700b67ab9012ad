use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::linalg::Matrix;
use crate::math::abs;
use crate::{Error, Result};

/// Hermitian matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// `a a^H`
    pub fn outer(a: &[Complex64]) -> Self {
        let n = a.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = a[i] * a[j].conj();
            }
        }
        m
    }

    /// Validates Hermitian symmetry within `1e-12` relative to the largest
    /// entry.
    pub fn from_row_major(n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::dims("hermitian matrix", n * n, data.len()));
        }
        let m = Self { n, data };
        let scale = m.data.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for i in 0..n {
            for j in i..n {
                let d = (m.data[i * n + j] - m.data[j * n + i].conj()).norm();
                if d > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i].re).sum()
    }

    /// `a^H X a`
    pub fn quad_form(&self, a: &[Complex64]) -> f64 {
        let n = self.n;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += self.data[i * n + j] * a[j];
            }
            acc += a[i].conj() * row;
        }
        acc.re
    }

    /// `Re tr(A^H B)`, the real inner product of Hermitian matrices.
    pub fn inner(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    /// Real symmetric embedding `[[Re, -Im], [Im, Re]]` of size `2n`.
    pub fn embed(&self) -> Matrix {
        let n = self.n;
        let mut e = Matrix::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.data[i * n + j];
                e[(i, j)] = z.re;
                e[(i + n, j + n)] = z.re;
                e[(i, j + n)] = -z.im;
                e[(i + n, j)] = z.im;
            }
        }
        e
    }

    /// Inverse of [`embed`](Self::embed) for an arbitrary real symmetric
    /// `2n x 2n` matrix: projects onto the embedded subspace first.
    pub fn from_embedding(e: &Matrix) -> Self {
        let n = e.dim() / 2;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let re = 0.5 * (e[(i, j)] + e[(i + n, j + n)]);
                let im = 0.5 * (e[(i + n, j)] - e[(i, j + n)]);
                m.data[i * n + j] = Complex64::new(re, im);
            }
        }
        m
    }
}

/// Constraint data on one block.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Dense(HermitianMatrix),
    /// `weight * a a^H`
    Rank1 {
        weight: f64,
        vector: Vec<Complex64>,
    },
}

impl Term {
    fn dim(&self) -> usize {
        match self {
            Term::Dense(m) => m.dim(),
            Term::Rank1 { vector, .. } => vector.len(),
        }
    }

    /// `<A, X>` for Hermitian `X`.
    pub fn eval(&self, x: &HermitianMatrix) -> f64 {
        match self {
            Term::Dense(a) => a.inner(x),
            Term::Rank1 { weight, vector } => weight * x.quad_form(vector),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// `sum <A, X> >= b`
    AtLeast,
    /// `sum <A, X> = b`
    Equal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    /// `(block, data)` pairs; a block may appear more than once.
    pub terms: Vec<(usize, Term)>,
    pub rhs: f64,
    pub sense: Sense,
}

impl Constraint {
    pub fn eval(&self, x: &[HermitianMatrix]) -> f64 {
        self.terms.iter().map(|(b, t)| t.eval(&x[*b])).sum()
    }
}

/// `minimize sum_b <C_b, X_b>` subject to linear constraints on Hermitian
/// positive semidefinite blocks `X_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub objective: Vec<HermitianMatrix>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    /// Trace minimization: `C_b = I` on every block.
    pub fn trace_min(blocks: Vec<usize>) -> Self {
        let objective = blocks
            .iter()
            .map(|&n| HermitianMatrix::identity(n))
            .collect();
        Self {
            blocks,
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, Term)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { terms, rhs, sense });
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.blocks.len() {
            return Err(Error::dims(
                "objective blocks",
                self.blocks.len(),
                self.objective.len(),
            ));
        }
        for (c, &n) in self.objective.iter().zip(&self.blocks) {
            if c.dim() != n {
                return Err(Error::dims("objective block", n, c.dim()));
            }
            check_hermitian(c)?;
        }
        for con in &self.constraints {
            if !con.rhs.is_finite() {
                return Err(Error::invalid("constraint right-hand side must be finite"));
            }
            for (b, t) in &con.terms {
                let n = *self
                    .blocks
                    .get(*b)
                    .ok_or_else(|| Error::invalid(format!("constraint refers to block {b}")))?;
                if t.dim() != n {
                    return Err(Error::dims("constraint block", n, t.dim()));
                }
                match t {
                    Term::Dense(a) => check_hermitian(a)?,
                    Term::Rank1 { weight, vector } => {
                        if !weight.is_finite()
                            || vector
                                .iter()
                                .any(|c| !c.re.is_finite() || !c.im.is_finite())
                        {
                            return Err(Error::invalid("rank-one term must be finite"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[HermitianMatrix]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c.inner(x)).sum()
    }
}

fn check_hermitian(m: &HermitianMatrix) -> Result<()> {
    let n = m.dim();
    let scale = m.as_slice().iter().map(|c| c.norm()).fold(1.0, f64::max);
    for i in 0..n {
        for j in i..n {
            let d = m.get(i, j) - m.get(j, i).conj();
            if abs(d.re) + abs(d.im) > 1e-12 * scale {
                return Err(Error::invalid(format!(
                    "block is not Hermitian at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Real constraint data on one block.
#[derive(Clone, Debug, PartialEq)]
pub enum RealTerm {
    Dense(Matrix),
    /// `weight * a a^T`
    Rank1 {
        weight: f64,
        vector: Vec<f64>,
    },
}

impl RealTerm {
    pub fn eval(&self, x: &Matrix) -> f64 {
        match self {
            RealTerm::Dense(a) => a.dot(x),
            RealTerm::Rank1 { weight, vector } => weight * x.quad_form(vector),
        }
    }

    /// `x += s * A`
    pub fn add_to(&self, s: f64, x: &mut Matrix) {
        match self {
            RealTerm::Dense(a) => x.axpy(s, a),
            RealTerm::Rank1 { weight, vector } => x.add_outer(s * weight, vector),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            RealTerm::Dense(a) => a.frobenius_norm(),
            RealTerm::Rank1 { weight, vector } => {
                abs(*weight) * vector.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            RealTerm::Dense(a) => a.scale(s),
            RealTerm::Rank1 { weight, .. } => *weight *= s,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealConstraint {
    pub terms: Vec<(usize, RealTerm)>,
    pub rhs: f64,
    pub sense: Sense,
}

impl RealConstraint {
    pub fn eval(&self, x: &[Matrix]) -> f64 {
        self.terms.iter().map(|(b, t)| t.eval(&x[*b])).sum()
    }

    pub(crate) fn scale(&mut self, s: f64) {
        for (_, t) in &mut self.terms {
            t.scale(s);
        }
        self.rhs *= s;
    }
}

/// Real symmetric counterpart of [`SdpProblem`].
#[derive(Clone, Debug, PartialEq)]
pub struct RealSdp {
    pub blocks: Vec<usize>,
    pub objective: Vec<Matrix>,
    pub constraints: Vec<RealConstraint>,
}

impl RealSdp {
    pub fn objective_value(&self, x: &[Matrix]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c.dot(x)).sum()
    }
}

/// Maps a Hermitian problem onto an equivalent real symmetric one.
///
/// Each `n x n` block becomes a `2n x 2n` block through
/// [`HermitianMatrix::embed`]. Since `<embed(A), embed(X)> = 2 <A, X>`, all
/// embedded data is halved so objective and constraint values carry over
/// unchanged. A complex rank-one term `w a a^H` with `a = p + iq` becomes
/// the two real rank-one terms along `[p; q]` and `[-q; p]`.
pub fn realify(problem: &SdpProblem) -> Result<RealSdp> {
    problem.validate()?;
    let blocks = problem.blocks.iter().map(|&n| 2 * n).collect();
    let objective = problem
        .objective
        .iter()
        .map(|c| {
            let mut e = c.embed();
            e.scale(0.5);
            e
        })
        .collect();
    let constraints = problem
        .constraints
        .iter()
        .map(|con| {
            let mut terms = Vec::with_capacity(con.terms.len() * 2);
            for (b, t) in &con.terms {
                match t {
                    Term::Dense(a) => {
                        let mut e = a.embed();
                        e.scale(0.5);
                        terms.push((*b, RealTerm::Dense(e)));
                    }
                    Term::Rank1 { weight, vector } => {
                        let n = vector.len();
                        let mut u = vec![0.0; 2 * n];
                        let mut v = vec![0.0; 2 * n];
                        for (k, z) in vector.iter().enumerate() {
                            u[k] = z.re;
                            u[k + n] = z.im;
                            v[k] = -z.im;
                            v[k + n] = z.re;
                        }
                        let w = 0.5 * weight;
                        terms.push((
                            *b,
                            RealTerm::Rank1 {
                                weight: w,
                                vector: u,
                            },
                        ));
                        terms.push((
                            *b,
                            RealTerm::Rank1 {
                                weight: w,
                                vector: v,
                            },
                        ));
                    }
                }
            }
            RealConstraint {
                terms,
                rhs: con.rhs,
                sense: con.sense,
            }
        })
        .collect();
    Ok(RealSdp {
        blocks,
        objective,
        constraints,
    })
}
