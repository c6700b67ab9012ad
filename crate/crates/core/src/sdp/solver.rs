//! Homogeneous self-dual interior-point method for real block SDPs.
//!
//! The problem `min <C, X> s.t. <A_t, X> >= b_t (or = b_t), X >= 0` is handed
//! to a conic engine in the form
//!
//! ```text
//! minimize c^T x  s.t.  G x + s = h,  s in K
//! ```
//!
//! with `x = y` (the dual multipliers), `c = -b`, one linear cone entry
//! `s_t = y_t >= 0` per inequality and one PSD block `S_b = C_b - sum_t y_t
//! A_tb` per variable block. The conic dual variable `z` is then the primal
//! `X`. Iterates follow Mehrotra predictor-corrector steps under
//! Nesterov-Todd scaling; the embedding either converges with `tau > 0` or
//! produces an improving ray proving infeasibility.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::problem::{RealSdp, RealTerm, Sense};
use crate::linalg::{
    cholesky, cholesky_solve, congruence_nt, congruence_tn, matmul, matmul_nt, matmul_tn,
    min_eigenvalue, Matrix, Svd,
};
use crate::math::{abs, powf, sqrt};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance on residuals and duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep iterating toward this tighter tolerance once `tol` is met; the
    /// best iterate meeting `tol` is returned if progress stalls.
    pub target_tol: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100,
            target_tol: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// The primal constraints admit no PSD solution; `y` holds a Farkas ray.
    Infeasible,
    /// The dual is infeasible: the primal objective is unbounded below.
    Unbounded,
    MaxIter,
    NumericalFailure,
}

/// Solution of a [`RealSdp`].
#[derive(Clone, Debug)]
pub struct RealSolution {
    pub status: SdpStatus,
    /// Primal blocks.
    pub x: Vec<Matrix>,
    /// Dual multipliers, or the normalized certificate ray (`b^T y = 1`) when
    /// infeasible.
    pub y: Vec<f64>,
    /// Dual slack `C - sum y_t A_t`.
    pub z: Vec<Matrix>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal - dual| / (1 + |primal|)` at termination.
    pub gap: f64,
    pub iterations: usize,
    /// Diagnostic for non-optimal exits.
    pub message: Option<String>,
}

struct BlockData {
    c: Matrix,
    dense: Vec<(usize, Matrix)>,
    rank1: Vec<(usize, f64, Vec<f64>)>,
}

struct Data {
    m: usize,
    cvec: Vec<f64>,
    blocks: Vec<BlockData>,
    /// Constraint index behind each linear cone entry.
    lin: Vec<usize>,
}

/// A point in the cone space: linear part plus PSD blocks.
#[derive(Clone)]
struct ConeVec {
    lin: Vec<f64>,
    blk: Vec<Matrix>,
}

impl ConeVec {
    fn dot(&self, other: &Self) -> f64 {
        self.lin
            .iter()
            .zip(&other.lin)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + self
                .blk
                .iter()
                .zip(&other.blk)
                .map(|(a, b)| a.dot(b))
                .sum::<f64>()
    }

    fn norm(&self) -> f64 {
        sqrt(self.dot(self))
    }

    fn axpy(&mut self, s: f64, other: &Self) {
        for (a, b) in self.lin.iter_mut().zip(&other.lin) {
            *a += s * b;
        }
        for (a, b) in self.blk.iter_mut().zip(&other.blk) {
            a.axpy(s, b);
        }
    }
}

impl Data {
    fn g_mul(&self, x: &[f64]) -> ConeVec {
        let lin = self.lin.iter().map(|&t| -x[t]).collect();
        let blk = self
            .blocks
            .iter()
            .map(|b| {
                let mut out = Matrix::zeros(b.c.dim());
                for (t, a) in &b.dense {
                    out.axpy(x[*t], a);
                }
                for (t, w, a) in &b.rank1 {
                    out.add_outer(x[*t] * w, a);
                }
                out
            })
            .collect();
        ConeVec { lin, blk }
    }

    fn gt_mul(&self, z: &ConeVec) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (l, &t) in self.lin.iter().enumerate() {
            out[t] -= z.lin[l];
        }
        for (b, zb) in self.blocks.iter().zip(&z.blk) {
            for (t, a) in &b.dense {
                out[*t] += a.dot(zb);
            }
            for (t, w, a) in &b.rank1 {
                out[*t] += w * zb.quad_form(a);
            }
        }
        out
    }

    fn h_dot(&self, z: &ConeVec) -> f64 {
        self.blocks
            .iter()
            .zip(&z.blk)
            .map(|(b, zb)| b.c.dot(zb))
            .sum()
    }

    fn c_dot(&self, x: &[f64]) -> f64 {
        self.cvec.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn h_cone(&self) -> ConeVec {
        ConeVec {
            lin: vec![0.0; self.lin.len()],
            blk: self.blocks.iter().map(|b| b.c.clone()).collect(),
        }
    }
}

/// Nesterov-Todd scaling `W` with `W z = W^{-T} s = lambda`.
struct Scaling {
    d: Vec<f64>,
    lam_lin: Vec<f64>,
    r: Vec<Matrix>,
    rti: Vec<Matrix>,
    lam_blk: Vec<Vec<f64>>,
}

impl Scaling {
    /// `W u`
    fn apply(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lin: u.lin.iter().zip(&self.d).map(|(a, d)| a * d).collect(),
            blk: u
                .blk
                .iter()
                .zip(&self.r)
                .map(|(ub, r)| congruence_tn(ub, r))
                .collect(),
        }
    }

    /// `W^T u`
    fn apply_t(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lin: u.lin.iter().zip(&self.d).map(|(a, d)| a * d).collect(),
            blk: u
                .blk
                .iter()
                .zip(&self.r)
                .map(|(ub, r)| congruence_nt(ub, r))
                .collect(),
        }
    }

    /// `W^{-1} u`
    fn apply_inv(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lin: u.lin.iter().zip(&self.d).map(|(a, d)| a / d).collect(),
            blk: u
                .blk
                .iter()
                .zip(&self.rti)
                .map(|(ub, r)| congruence_nt(ub, r))
                .collect(),
        }
    }

    fn s(&self) -> ConeVec {
        ConeVec {
            lin: self
                .lam_lin
                .iter()
                .zip(&self.d)
                .map(|(l, d)| l * d)
                .collect(),
            blk: self
                .r
                .iter()
                .zip(&self.lam_blk)
                .map(|(r, l)| congruence_nt(&Matrix::from_diag(l), r))
                .collect(),
        }
    }

    fn z(&self) -> ConeVec {
        ConeVec {
            lin: self
                .lam_lin
                .iter()
                .zip(&self.d)
                .map(|(l, d)| l / d)
                .collect(),
            blk: self
                .rti
                .iter()
                .zip(&self.lam_blk)
                .map(|(r, l)| congruence_nt(&Matrix::from_diag(l), r))
                .collect(),
        }
    }

    fn lambda_sq_sum(&self) -> f64 {
        self.lam_lin.iter().map(|l| l * l).sum::<f64>()
            + self
                .lam_blk
                .iter()
                .flat_map(|l| l.iter())
                .map(|l| l * l)
                .sum::<f64>()
    }
}

/// Factored reduced KKT system `[0 G^T; G -W^T W]`.
struct Kkt {
    chol: Matrix,
    /// `(r r^T)^{-1}` per block.
    q: Vec<Matrix>,
    /// `1 / d^2` per linear entry.
    inv_d2: Vec<f64>,
}

impl Kkt {
    fn factor(data: &Data, w: &Scaling) -> Option<Self> {
        let m = data.m;
        let q: Vec<Matrix> = w.rti.iter().map(|r| matmul_nt(r, r)).collect();
        let inv_d2: Vec<f64> = w.d.iter().map(|d| 1.0 / (d * d)).collect();
        let mut h = Matrix::zeros(m);
        for (l, &t) in data.lin.iter().enumerate() {
            h[(t, t)] += inv_d2[l];
        }
        for (b, qb) in data.blocks.iter().zip(&q) {
            let qa: Vec<Vec<f64>> = b.rank1.iter().map(|(_, _, a)| qb.mul_vec(a)).collect();
            for (p, (tp, wp, _)) in b.rank1.iter().enumerate() {
                for (r, (tr, wr, ar)) in b.rank1.iter().enumerate().skip(p) {
                    let ip: f64 = ar.iter().zip(&qa[p]).map(|(x, y)| x * y).sum();
                    let v = wp * wr * ip * ip;
                    h[(*tp, *tr)] += v;
                    if r != p {
                        h[(*tr, *tp)] += v;
                    }
                }
            }
            let qaq: Vec<Matrix> = b
                .dense
                .iter()
                .map(|(_, a)| matmul(&matmul(qb, a), qb))
                .collect();
            for (i, (ti, ai)) in b.dense.iter().enumerate() {
                for (j, (tj, _)) in b.dense.iter().enumerate().skip(i) {
                    let v = ai.dot(&qaq[j]);
                    h[(*ti, *tj)] += v;
                    if j != i {
                        h[(*tj, *ti)] += v;
                    }
                }
                for (tp, wp, ap) in &b.rank1 {
                    let v = wp * qaq[i].quad_form(ap);
                    h[(*ti, *tp)] += v;
                    h[(*tp, *ti)] += v;
                }
            }
        }
        h.symmetrize();
        if let Some(chol) = cholesky(&h) {
            return Some(Self { chol, q, inv_d2 });
        }
        let diag_max = (0..m)
            .map(|i| abs(h[(i, i)]))
            .fold(0.0, f64::max)
            .max(1e-300);
        for reg in [1e-13, 1e-11, 1e-9] {
            let mut hr = h.clone();
            for i in 0..m {
                hr[(i, i)] += reg * diag_max;
            }
            if let Some(chol) = cholesky(&hr) {
                return Some(Self { chol, q, inv_d2 });
            }
        }
        None
    }

    /// `(W^T W)^{-1} u`
    fn inv_wtw(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lin: u.lin.iter().zip(&self.inv_d2).map(|(a, b)| a * b).collect(),
            blk: u
                .blk
                .iter()
                .zip(&self.q)
                .map(|(ub, q)| matmul(&matmul(q, ub), q))
                .collect(),
        }
    }

    /// Solves the KKT system with five rounds of iterative refinement against
    /// the unfactored operator.
    fn solve(&self, data: &Data, w: &Scaling, bx: &[f64], bz: &ConeVec) -> (Vec<f64>, ConeVec) {
        let (mut dx, mut dz) = self.solve_once(data, bx, bz);
        for _ in 0..5 {
            let gtz = data.gt_mul(&dz);
            let ex: Vec<f64> = bx.iter().zip(&gtz).map(|(b, g)| b - g).collect();
            let mut ez = bz.clone();
            ez.axpy(-1.0, &data.g_mul(&dx));
            ez.axpy(1.0, &w.apply_t(&w.apply(&dz)));
            let (cx, cz) = self.solve_once(data, &ex, &ez);
            for (a, b) in dx.iter_mut().zip(&cx) {
                *a += b;
            }
            dz.axpy(1.0, &cz);
        }
        (dx, dz)
    }

    fn solve_once(&self, data: &Data, bx: &[f64], bz: &ConeVec) -> (Vec<f64>, ConeVec) {
        let t = self.inv_wtw(bz);
        let gt = data.gt_mul(&t);
        let rhs: Vec<f64> = bx.iter().zip(&gt).map(|(a, b)| a + b).collect();
        let dx = cholesky_solve(&self.chol, &rhs);
        let mut u = data.g_mul(&dx);
        u.axpy(-1.0, bz);
        let dz = self.inv_wtw(&u);
        (dx, dz)
    }
}

/// Largest step keeping `lambda + alpha * d` in the cone (infinite if `d`
/// points into the cone).
fn max_step(lam_lin: &[f64], lam_blk: &[Vec<f64>], d: &ConeVec) -> f64 {
    let mut alpha = f64::INFINITY;
    for (l, di) in lam_lin.iter().zip(&d.lin) {
        if *di < 0.0 {
            alpha = alpha.min(-l / di);
        }
    }
    for (l, db) in lam_blk.iter().zip(&d.blk) {
        let n = l.len();
        let inv: Vec<f64> = l.iter().map(|v| 1.0 / sqrt(*v)).collect();
        let mut t = db.clone();
        for i in 0..n {
            for j in 0..n {
                t[(i, j)] *= inv[i] * inv[j];
            }
        }
        t.symmetrize();
        let ev = min_eigenvalue(&t);
        if ev < 0.0 {
            alpha = alpha.min(-1.0 / ev);
        }
    }
    alpha
}

/// Symmetrized Jordan product of two scaled directions.
fn jordan(a: &ConeVec, b: &ConeVec) -> ConeVec {
    ConeVec {
        lin: a.lin.iter().zip(&b.lin).map(|(x, y)| x * y).collect(),
        blk: a
            .blk
            .iter()
            .zip(&b.blk)
            .map(|(x, y)| {
                let mut p = matmul(x, y);
                let q = matmul(y, x);
                p.axpy(1.0, &q);
                p.scale(0.5);
                p
            })
            .collect(),
    }
}

/// Solves `lambda o u = r` for diagonal `lambda`.
fn jordan_div(w: &Scaling, r: &ConeVec) -> ConeVec {
    ConeVec {
        lin: r.lin.iter().zip(&w.lam_lin).map(|(a, l)| a / l).collect(),
        blk: r
            .blk
            .iter()
            .zip(&w.lam_blk)
            .map(|(rb, l)| {
                let n = l.len();
                let mut u = rb.clone();
                for i in 0..n {
                    for j in 0..n {
                        u[(i, j)] *= 2.0 / (l[i] + l[j]);
                    }
                }
                u
            })
            .collect(),
    }
}

struct Direction {
    dx: Vec<f64>,
    ds_t: ConeVec,
    dz_t: ConeVec,
    dtau: f64,
    dkappa: f64,
}

struct Residuals<'a> {
    rx: &'a [f64],
    rz: &'a ConeVec,
    rt: f64,
}

#[allow(clippy::too_many_arguments)]
fn newton(
    data: &Data,
    w: &Scaling,
    kkt: &Kkt,
    dx1: &[f64],
    dz1: &ConeVec,
    res: &Residuals,
    rs: &ConeVec,
    rtau: f64,
    eta: f64,
    tau: f64,
    kappa: f64,
) -> Direction {
    let bs = jordan_div(w, rs);
    let wtbs = w.apply_t(&bs);
    let bx: Vec<f64> = res.rx.iter().map(|v| -eta * v).collect();
    let mut bz = res.rz.clone();
    for v in bz.lin.iter_mut() {
        *v *= -eta;
    }
    for b in bz.blk.iter_mut() {
        b.scale(-eta);
    }
    bz.axpy(-1.0, &wtbs);
    let (dx0, dz0) = kkt.solve(data, w, &bx, &bz);
    let h = data.h_cone();
    let num = -eta * res.rt - data.c_dot(&dx0) - h.dot(&dz0) - rtau / tau;
    let den = data.c_dot(dx1) + h.dot(dz1) - kappa / tau;
    let dtau = num / den;
    let dx: Vec<f64> = dx0.iter().zip(dx1).map(|(a, b)| a + dtau * b).collect();
    let mut dz = dz0;
    dz.axpy(dtau, dz1);
    let dkappa = (rtau - kappa * dtau) / tau;
    let dz_t = w.apply(&dz);
    let mut ds_t = bs;
    ds_t.axpy(-1.0, &dz_t);
    Direction {
        dx,
        ds_t,
        dz_t,
        dtau,
        dkappa,
    }
}

fn step_length(w: &Scaling, dir: &Direction, tau: f64, kappa: f64) -> f64 {
    let mut a = max_step(&w.lam_lin, &w.lam_blk, &dir.ds_t)
        .min(max_step(&w.lam_lin, &w.lam_blk, &dir.dz_t));
    if dir.dtau < 0.0 {
        a = a.min(-tau / dir.dtau);
    }
    if dir.dkappa < 0.0 {
        a = a.min(-kappa / dir.dkappa);
    }
    a
}

/// Advances the scaling after a step of length `alpha` in scaled coordinates.
fn update_scaling(w: &mut Scaling, dir: &Direction, alpha: f64) -> Option<()> {
    for l in 0..w.d.len() {
        let s = w.lam_lin[l] + alpha * dir.ds_t.lin[l];
        let z = w.lam_lin[l] + alpha * dir.dz_t.lin[l];
        if !(s > 0.0 && z > 0.0) {
            return None;
        }
        w.d[l] *= sqrt(s / z);
        w.lam_lin[l] = sqrt(s * z);
    }
    for b in 0..w.r.len() {
        let lam = &w.lam_blk[b];
        let mut st = Matrix::from_diag(lam);
        st.axpy(alpha, &dir.ds_t.blk[b]);
        st.symmetrize();
        let mut zt = Matrix::from_diag(lam);
        zt.axpy(alpha, &dir.dz_t.blk[b]);
        zt.symmetrize();
        let l1 = cholesky(&st)?;
        let l2 = cholesky(&zt)?;
        let svd = Svd::new(&matmul_tn(&l2, &l1));
        if svd.s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return None;
        }
        let n = svd.s.len();
        let mut lv = matmul(&l1, &svd.v);
        let mut lu = matmul(&l2, &svd.u);
        for j in 0..n {
            let f = 1.0 / sqrt(svd.s[j]);
            for i in 0..n {
                lv[(i, j)] *= f;
                lu[(i, j)] *= f;
            }
        }
        w.r[b] = matmul(&w.r[b], &lv);
        w.rti[b] = matmul(&w.rti[b], &lu);
        w.lam_blk[b] = svd.s;
    }
    Some(())
}

fn build_data(p: &RealSdp) -> Data {
    let m = p.constraints.len();
    let mut blocks: Vec<BlockData> = p
        .objective
        .iter()
        .map(|c| BlockData {
            c: c.clone(),
            dense: Vec::new(),
            rank1: Vec::new(),
        })
        .collect();
    let mut lin = Vec::new();
    for (t, con) in p.constraints.iter().enumerate() {
        if con.sense == Sense::AtLeast {
            lin.push(t);
        }
        for (b, term) in &con.terms {
            match term {
                RealTerm::Dense(a) => blocks[*b].dense.push((t, a.clone())),
                RealTerm::Rank1 { weight, vector } => {
                    blocks[*b].rank1.push((t, *weight, vector.clone()))
                }
            }
        }
    }
    Data {
        m,
        cvec: p.constraints.iter().map(|c| -c.rhs).collect(),
        blocks,
        lin,
    }
}

/// Row-normalizes the constraints and scales `b` and `C` to unit size.
struct Equilibration {
    row: Vec<f64>,
    b: f64,
    c: f64,
}

fn equilibrate(p: &RealSdp) -> (RealSdp, Equilibration) {
    let mut q = p.clone();
    let mut row = Vec::with_capacity(q.constraints.len());
    for con in &mut q.constraints {
        let norm = sqrt(
            con.terms
                .iter()
                .map(|(_, t)| {
                    let f = t.frobenius_norm();
                    f * f
                })
                .sum(),
        );
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        con.scale(s);
        row.push(s);
    }
    let bmax = q.constraints.iter().map(|c| abs(c.rhs)).fold(0.0, f64::max);
    let b = if bmax > 0.0 { bmax } else { 1.0 };
    for con in &mut q.constraints {
        con.rhs /= b;
    }
    let cmax = q
        .objective
        .iter()
        .flat_map(|c| c.as_slice().iter())
        .map(|v| abs(*v))
        .fold(0.0, f64::max);
    let c = if cmax > 0.0 { cmax } else { 1.0 };
    for obj in &mut q.objective {
        obj.scale(1.0 / c);
    }
    (q, Equilibration { row, b, c })
}

/// Solves a real block SDP.
pub fn solve_real(problem: &RealSdp, opts: &SolverOptions) -> RealSolution {
    let (scaled, eq) = equilibrate(problem);
    let data = build_data(&scaled);
    let mut sol = run(&data, opts);
    // undo equilibration
    let m = data.m;
    match sol.status {
        SdpStatus::Infeasible => {
            for t in 0..m {
                sol.y[t] *= eq.row[t];
            }
            let by: f64 = problem
                .constraints
                .iter()
                .zip(&sol.y)
                .map(|(c, y)| c.rhs * y)
                .sum();
            if by > 0.0 {
                sol.y.iter_mut().for_each(|y| *y /= by);
            }
        }
        _ => {
            for xb in sol.x.iter_mut() {
                xb.scale(eq.b);
            }
            for zb in sol.z.iter_mut() {
                zb.scale(eq.c);
            }
            for t in 0..m {
                sol.y[t] *= eq.c * eq.row[t];
            }
            sol.primal_objective *= eq.b * eq.c;
            sol.dual_objective *= eq.b * eq.c;
        }
    }
    sol
}

fn failure(data: &Data, status: SdpStatus, iterations: usize, msg: String) -> RealSolution {
    RealSolution {
        status,
        x: data
            .blocks
            .iter()
            .map(|b| Matrix::zeros(b.c.dim()))
            .collect(),
        y: vec![0.0; data.m],
        z: data
            .blocks
            .iter()
            .map(|b| Matrix::zeros(b.c.dim()))
            .collect(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        gap: f64::NAN,
        iterations,
        message: Some(msg),
    }
}

fn run(data: &Data, opts: &SolverOptions) -> RealSolution {
    let mut best = None;
    let out = iterate(data, opts, &mut best);
    match (out.status, best) {
        (SdpStatus::MaxIter | SdpStatus::NumericalFailure, Some((_, b))) => b,
        _ => out,
    }
}

fn iterate(
    data: &Data,
    opts: &SolverOptions,
    best: &mut Option<(f64, RealSolution)>,
) -> RealSolution {
    let tol = opts.tol;
    let m = data.m;
    let nlin = data.lin.len();
    let mut w = Scaling {
        d: vec![1.0; nlin],
        lam_lin: vec![1.0; nlin],
        r: data
            .blocks
            .iter()
            .map(|b| Matrix::identity(b.c.dim()))
            .collect(),
        rti: data
            .blocks
            .iter()
            .map(|b| Matrix::identity(b.c.dim()))
            .collect(),
        lam_blk: data.blocks.iter().map(|b| vec![1.0; b.c.dim()]).collect(),
    };
    let degree = nlin + data.blocks.iter().map(|b| b.c.dim()).sum::<usize>();
    let mut x = vec![0.0; m];
    let mut s = w.s();
    let mut z = w.z();
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let h = data.h_cone();
    let resx0 = sqrt(data.cvec.iter().map(|v| v * v).sum()).max(1.0);
    let resz0 = h.norm().max(1.0);
    let mut last_gap = f64::NAN;
    let target = opts.target_tol.map_or(tol, |t| t.min(tol));

    for iter in 0..=opts.max_iter {
        let gtz = data.gt_mul(&z);
        let gx = data.g_mul(&x);
        let cx = data.c_dot(&x);
        let hz = data.h_dot(&z);
        let rx: Vec<f64> = gtz
            .iter()
            .zip(&data.cvec)
            .map(|(a, c)| a + tau * c)
            .collect();
        let mut rz = s.clone();
        rz.axpy(1.0, &gx);
        rz.axpy(-tau, &h);
        let rt = kappa + cx + hz;
        let mu = (w.lambda_sq_sum() + tau * kappa) / (degree as f64 + 1.0);

        if !(mu.is_finite() && tau.is_finite() && kappa.is_finite()) {
            return failure(
                data,
                SdpStatus::NumericalFailure,
                iter,
                "non-finite iterate".into(),
            );
        }

        let pobj = hz / tau;
        let dobj = -cx / tau;
        let pres = rz.norm() / tau / resz0;
        let dres = sqrt(rx.iter().map(|v| v * v).sum()) / tau / resx0;
        let gap = abs(pobj - dobj) / (1.0 + abs(pobj));
        last_gap = gap;
        let merit = pres.max(dres).max(gap);
        if merit <= tol {
            let inv = 1.0 / tau;
            let mut xs = z.blk.clone();
            xs.iter_mut().for_each(|b| b.scale(inv));
            let mut zs = s.blk.clone();
            zs.iter_mut().for_each(|b| b.scale(inv));
            let sol = RealSolution {
                status: SdpStatus::Optimal,
                x: xs,
                y: x.iter().map(|v| v * inv).collect(),
                z: zs,
                primal_objective: pobj,
                dual_objective: dobj,
                gap,
                iterations: iter,
                message: None,
            };
            if merit <= target {
                return sol;
            }
            if best.as_ref().is_none_or(|(m, _)| merit < *m) {
                *best = Some((merit, sol));
            }
        }
        if let Some((m, b)) = best.as_ref() {
            // stalled: no improvement for a few iterations or residuals blowing up
            if merit > 100.0 * m || iter >= b.iterations + 4 || iter == opts.max_iter {
                return b.clone();
            }
        }
        if cx < 0.0 {
            let mut ray = gx.clone();
            ray.axpy(1.0, &s);
            if ray.norm() / (-cx) <= 1e-3 * tol * resz0 {
                let mut out = failure(data, SdpStatus::Infeasible, iter, String::new());
                out.message = None;
                out.y = x.iter().map(|v| v / -cx).collect();
                out.gap = gap;
                return out;
            }
        }
        if hz < 0.0 {
            let n = sqrt(gtz.iter().map(|v| v * v).sum());
            if n / (-hz) <= tol * resx0 {
                let mut out = failure(data, SdpStatus::Unbounded, iter, String::new());
                out.message = None;
                out.gap = gap;
                return out;
            }
        }
        if iter == opts.max_iter {
            break;
        }

        let Some(kkt) = Kkt::factor(data, &w) else {
            return failure(
                data,
                SdpStatus::NumericalFailure,
                iter,
                "Schur complement not positive definite after regularization".into(),
            );
        };
        let neg_c: Vec<f64> = data.cvec.iter().map(|v| -v).collect();
        let (dx1, dz1) = kkt.solve(data, &w, &neg_c, &h);
        let res = Residuals {
            rx: &rx,
            rz: &rz,
            rt,
        };

        // -lambda o lambda
        let lam_sq = ConeVec {
            lin: w.lam_lin.iter().map(|l| -l * l).collect(),
            blk: w
                .lam_blk
                .iter()
                .map(|l| Matrix::from_diag(&l.iter().map(|v| -v * v).collect::<Vec<_>>()))
                .collect(),
        };
        let aff = newton(
            data,
            &w,
            &kkt,
            &dx1,
            &dz1,
            &res,
            &lam_sq,
            -tau * kappa,
            1.0,
            tau,
            kappa,
        );
        let alpha_aff = step_length(&w, &aff, tau, kappa).min(1.0);
        let sigma = powf(1.0 - alpha_aff, 3.0);

        let mut rs = lam_sq;
        for v in rs.lin.iter_mut() {
            *v += sigma * mu;
        }
        for b in rs.blk.iter_mut() {
            for i in 0..b.dim() {
                b[(i, i)] += sigma * mu;
            }
        }
        rs.axpy(-1.0, &jordan(&aff.ds_t, &aff.dz_t));
        let rtau = -tau * kappa + sigma * mu - aff.dtau * aff.dkappa;
        let dir = newton(
            data,
            &w,
            &kkt,
            &dx1,
            &dz1,
            &res,
            &rs,
            rtau,
            1.0 - sigma,
            tau,
            kappa,
        );
        let alpha = (0.99 * step_length(&w, &dir, tau, kappa)).min(1.0);
        if !(alpha > 0.0) || !alpha.is_finite() {
            return failure(
                data,
                SdpStatus::NumericalFailure,
                iter,
                format!("step length {alpha}"),
            );
        }

        for (xi, di) in x.iter_mut().zip(&dir.dx) {
            *xi += alpha * di;
        }
        s.axpy(alpha, &w.apply_t(&dir.ds_t));
        z.axpy(alpha, &w.apply_inv(&dir.dz_t));
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        if update_scaling(&mut w, &dir, alpha).is_none() {
            return failure(
                data,
                SdpStatus::NumericalFailure,
                iter,
                "scaling update lost positive definiteness".into(),
            );
        }
    }
    let mut out = failure(
        data,
        SdpStatus::MaxIter,
        opts.max_iter,
        format!("no convergence in {} iterations", opts.max_iter),
    );
    out.gap = last_gap;
    out
}
