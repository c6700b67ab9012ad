//! Minimum transmit power needed to serve a user subset, and with it the
//! feasibility test `P_min(A) <= P` used by every allocation engine.
//!
//! Mixed subsets go through semidefinite relaxation with one shared energy
//! beam; IR-only subsets use uplink-downlink duality; a lone user has a
//! matched-filter closed form.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{cdot, cnorm_sqr, lu_solve, ComplexCholesky, Matrix, SymmetricEigen};
use crate::math::{abs, sqrt};
use crate::model::{AllocationVector, BeamformingSolution, ChannelRealization, DemandProfile};
use crate::sdp::{self, extract_rank1, HermitianMatrix, SdpProblem, SdpStatus, Sense, Term};
use crate::{Error, Result};

/// A subset of users as IR and ER bitmasks (bit `i` is IR `i` / ER `i`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SubsetSelection {
    pub ir: u32,
    pub er: u32,
}

impl SubsetSelection {
    pub const EMPTY: Self = Self { ir: 0, er: 0 };

    pub fn new(ir: &[usize], er: &[usize]) -> Self {
        Self {
            ir: ir.iter().fold(0, |m, &i| m | 1 << i),
            er: er.iter().fold(0, |m, &j| m | 1 << j),
        }
    }

    /// Splits a joint user mask (IRs in the low `num_ir` bits).
    pub fn from_mask(mask: u64, num_ir: usize) -> Self {
        Self {
            ir: (mask & ((1u64 << num_ir) - 1)) as u32,
            er: (mask >> num_ir) as u32,
        }
    }

    pub fn mask(&self, num_ir: usize) -> u64 {
        self.ir as u64 | (self.er as u64) << num_ir
    }

    pub fn from_allocation(a: &AllocationVector) -> Self {
        Self::from_mask(a.mask(), a.num_ir())
    }

    pub fn to_allocation(&self, num_ir: usize, num_er: usize) -> AllocationVector {
        AllocationVector::from_mask(self.mask(num_ir), num_ir, num_er)
    }

    pub fn is_empty(&self) -> bool {
        self.ir == 0 && self.er == 0
    }

    pub fn len(&self) -> usize {
        (self.ir.count_ones() + self.er.count_ones()) as usize
    }

    pub fn ir_indices(&self) -> Vec<usize> {
        bits(self.ir)
    }

    pub fn er_indices(&self) -> Vec<usize> {
        bits(self.er)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.ir & !other.ir == 0 && self.er & !other.er == 0
    }

    fn check(&self, num_ir: usize, num_er: usize) -> Result<()> {
        if (num_ir < 32 && self.ir >> num_ir != 0) || (num_er < 32 && self.er >> num_er != 0) {
            return Err(Error::invalid("subset refers to users outside the network"));
        }
        Ok(())
    }
}

fn bits(mut m: u32) -> Vec<usize> {
    let mut out = Vec::with_capacity(m.count_ones() as usize);
    while m != 0 {
        out.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowerMinStatus {
    Solved,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverUsed {
    Sdr,
    Udd,
    ClosedForm,
}

/// How IR-only subsets are solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IrMethod {
    Udd,
    Sdr,
}

#[derive(Clone, Debug)]
pub struct PowerMinResult {
    pub status: PowerMinStatus,
    /// Minimum transmit power; `None` when infeasible.
    pub p_min: Option<f64>,
    pub solution: Option<BeamformingSolution>,
    pub solver_used: SolverUsed,
    /// Largest `l2 / l1` over the extracted SDR blocks (0 otherwise).
    pub rank1_residual: f64,
    /// Whether Gaussian randomization replaced eigenvector extraction.
    pub randomized: bool,
}

impl PowerMinResult {
    fn solved(solution: BeamformingSolution, solver_used: SolverUsed) -> Self {
        Self {
            status: PowerMinStatus::Solved,
            p_min: Some(solution.total_power()),
            solution: Some(solution),
            solver_used,
            rank1_residual: 0.0,
            randomized: false,
        }
    }

    fn infeasible(solver_used: SolverUsed) -> Self {
        Self {
            status: PowerMinStatus::Infeasible,
            p_min: None,
            solution: None,
            solver_used,
            rank1_residual: 0.0,
            randomized: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerMinOptions {
    pub sdp: sdp::SolverOptions,
    pub ir_method: IrMethod,
    /// `l2 / l1` above which extraction falls back to randomization.
    pub rank1_threshold: f64,
    pub randomizations: usize,
    /// Relative change of the dual power sum that ends the UDD iteration.
    pub udd_tol: f64,
    pub udd_max_iter: usize,
    /// Seed for the randomization fallback.
    pub seed: u64,
    /// Let [`is_feasible`] settle subsets from cheap power bounds before
    /// solving the full problem.
    pub bounds: bool,
}

impl Default for PowerMinOptions {
    fn default() -> Self {
        Self {
            sdp: sdp::SolverOptions {
                target_tol: Some(1e-10),
                ..Default::default()
            },
            ir_method: IrMethod::Udd,
            rank1_threshold: 1e-4,
            randomizations: 100,
            udd_tol: 1e-9,
            udd_max_iter: 500,
            seed: 0x5eed,
            bounds: true,
        }
    }
}

fn check_dims(ch: &ChannelRealization, dm: &DemandProfile, subset: &SubsetSelection) -> Result<()> {
    if dm.gamma.len() != ch.num_ir() {
        return Err(Error::dims("SINR targets", ch.num_ir(), dm.gamma.len()));
    }
    if dm.q.len() != ch.num_er() {
        return Err(Error::dims("energy demands", ch.num_er(), dm.q.len()));
    }
    subset.check(ch.num_ir(), ch.num_er())
}

fn unit(v: &[Complex64]) -> Vec<Complex64> {
    let n = sqrt(cnorm_sqr(v));
    v.iter().map(|c| c / n).collect()
}

/// Semidefinite relaxation of the power minimization for `subset`: one
/// `M x M` block per served IR, plus one energy block shared by all served
/// ERs. Constraint rows are divided by the user's channel gain.
pub fn build_swipt_sdr(
    ch: &ChannelRealization,
    dm: &DemandProfile,
    subset: &SubsetSelection,
) -> Result<SdpProblem> {
    check_dims(ch, dm, subset)?;
    if subset.is_empty() {
        return Err(Error::invalid("empty subset needs no optimization"));
    }
    let m = ch.antennas();
    let irs = subset.ir_indices();
    let ers = subset.er_indices();
    let nb = irs.len() + usize::from(!ers.is_empty());
    let v_block = (!ers.is_empty()).then_some(irs.len());
    let mut p = SdpProblem::trace_min(vec![m; nb]);
    for (pos, &i) in irs.iter().enumerate() {
        let hu = unit(ch.h(i));
        let mut terms = Vec::with_capacity(nb);
        for b in 0..nb {
            let weight = if b == pos { 1.0 / dm.gamma[i] } else { -1.0 };
            terms.push((
                b,
                Term::Rank1 {
                    weight,
                    vector: hu.clone(),
                },
            ));
        }
        p.add_constraint(terms, Sense::AtLeast, ch.noise_var(i) / ch.ir_gain(i));
    }
    for &j in &ers {
        let gu = unit(ch.g(j));
        let terms = (0..nb)
            .map(|b| {
                (
                    b,
                    Term::Rank1 {
                        weight: 1.0,
                        vector: gu.clone(),
                    },
                )
            })
            .collect();
        p.add_constraint(terms, Sense::AtLeast, dm.q[j] / ch.er_gain(j));
    }
    debug_assert!(v_block.is_none_or(|v| v == nb - 1));
    Ok(p)
}

/// Outcome of the dual uplink fixed point.
enum UddOutcome {
    Solved(BeamformingSolution),
    /// The monotone dual power sum passed the budget: `P_min > budget`.
    ExceedsBudget,
    Diverged,
    NotConverged,
}

fn udd_iterate(
    h: &[&[Complex64]],
    gamma: &[f64],
    sigma2: &[f64],
    budget: Option<f64>,
    opts: &PowerMinOptions,
) -> Result<UddOutcome> {
    let k = h.len();
    let m = h.first().map_or(0, |c| c.len());
    let ht: Vec<Vec<Complex64>> = h
        .iter()
        .zip(sigma2)
        .map(|(col, s)| col.iter().map(|c| c / sqrt(*s)).collect())
        .collect();
    let cap = 1e6 * (0..k).map(|i| gamma[i] / cnorm_sqr(&ht[i])).sum::<f64>();
    let mut q = vec![0.0; k];
    let mut sum = 0.0;
    let mut converged = false;
    let mut t = vec![Complex64::new(0.0, 0.0); m * m];
    let build_t = |q: &[f64], t: &mut Vec<Complex64>| {
        t.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for r in 0..m {
            t[r * m + r] = Complex64::new(1.0, 0.0);
        }
        for (qi, hi) in q.iter().zip(&ht) {
            if *qi == 0.0 {
                continue;
            }
            for r in 0..m {
                let s = hi[r] * *qi;
                for c in 0..m {
                    t[r * m + c] += s * hi[c].conj();
                }
            }
        }
    };
    for _ in 0..opts.udd_max_iter {
        build_t(&q, &mut t);
        let chol = ComplexCholesky::new(&t, m)
            .ok_or_else(|| Error::Numerical("uplink covariance lost definiteness".into()))?;
        let mut next = vec![0.0; k];
        for i in 0..k {
            let a = cdot(&ht[i], &chol.solve(&ht[i])).re;
            next[i] = gamma[i] * (1.0 - q[i] * a) / a;
        }
        let new_sum: f64 = next.iter().sum();
        if !new_sum.is_finite() {
            return Ok(UddOutcome::Diverged);
        }
        if let Some(p) = budget {
            if new_sum > p {
                return Ok(UddOutcome::ExceedsBudget);
            }
        }
        if new_sum > cap {
            return Ok(UddOutcome::Diverged);
        }
        let change = abs(new_sum - sum);
        q = next;
        sum = new_sum;
        if change <= opts.udd_tol * new_sum {
            converged = true;
            break;
        }
    }
    if !converged {
        return Ok(UddOutcome::NotConverged);
    }
    // MMSE receive filters double as downlink beam directions.
    build_t(&q, &mut t);
    let chol = ComplexCholesky::new(&t, m)
        .ok_or_else(|| Error::Numerical("uplink covariance lost definiteness".into()))?;
    let u: Vec<Vec<Complex64>> = ht.iter().map(|hi| unit(&chol.solve(hi))).collect();
    let mut a = Matrix::zeros(k);
    for i in 0..k {
        for j in 0..k {
            let gain = cdot(&ht[i], &u[j]).norm_sqr();
            a[(i, j)] = if i == j { gain / gamma[i] } else { -gain };
        }
    }
    let rho = lu_solve(&a, &vec![1.0; k])
        .ok_or_else(|| Error::Numerical("downlink power system is singular".into()))?;
    if rho.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::Numerical("downlink powers are not positive".into()));
    }
    let mut sol = BeamformingSolution::default();
    for (i, (ui, r)) in u.iter().zip(&rho).enumerate() {
        sol.w.insert(i, ui.iter().map(|c| c * sqrt(*r)).collect());
    }
    Ok(UddOutcome::Solved(sol))
}

/// Minimum power for IR-only service via uplink-downlink duality.
///
/// Beams in the result are keyed by position in `h`. Fails with a numerical
/// error when the iteration does not settle within the iteration cap.
pub fn solve_udd(
    h: &[&[Complex64]],
    gamma: &[f64],
    sigma2: &[f64],
    opts: &PowerMinOptions,
) -> Result<PowerMinResult> {
    if gamma.len() != h.len() || sigma2.len() != h.len() {
        return Err(Error::dims(
            "UDD inputs",
            h.len(),
            gamma.len().min(sigma2.len()),
        ));
    }
    if gamma.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::invalid("SINR targets must be positive"));
    }
    match udd_iterate(h, gamma, sigma2, None, opts)? {
        UddOutcome::Solved(sol) => Ok(PowerMinResult::solved(sol, SolverUsed::Udd)),
        UddOutcome::Diverged | UddOutcome::ExceedsBudget => {
            Ok(PowerMinResult::infeasible(SolverUsed::Udd))
        }
        UddOutcome::NotConverged => Err(Error::Numerical(format!(
            "dual power iteration did not settle in {} iterations",
            opts.udd_max_iter
        ))),
    }
}

/// Minimum power for ER-only service: a single shared energy beam.
pub fn solve_wpt(
    ch: &ChannelRealization,
    dm: &DemandProfile,
    ers: u32,
    opts: &PowerMinOptions,
) -> Result<PowerMinResult> {
    let subset = SubsetSelection { ir: 0, er: ers };
    check_dims(ch, dm, &subset)?;
    match ers.count_ones() {
        0 => Ok(PowerMinResult::solved(
            BeamformingSolution::default(),
            SolverUsed::ClosedForm,
        )),
        1 => {
            let j = ers.trailing_zeros() as usize;
            let p = dm.q[j] / ch.er_gain(j);
            let v = unit(ch.g(j)).iter().map(|c| c * sqrt(p)).collect();
            let sol = BeamformingSolution {
                v_energy: Some(v),
                ..Default::default()
            };
            Ok(PowerMinResult::solved(sol, SolverUsed::ClosedForm))
        }
        _ => solve_sdr(ch, dm, &subset, opts),
    }
}

fn closed_form_ir(ch: &ChannelRealization, dm: &DemandProfile, i: usize) -> BeamformingSolution {
    let p = dm.gamma[i] * ch.noise_var(i) / ch.ir_gain(i);
    let mut sol = BeamformingSolution::default();
    sol.w
        .insert(i, unit(ch.h(i)).iter().map(|c| c * sqrt(p)).collect());
    sol
}

fn udd_for_subset(
    ch: &ChannelRealization,
    dm: &DemandProfile,
    irs: &[usize],
    budget: Option<f64>,
    opts: &PowerMinOptions,
) -> Result<UddOutcome> {
    let h: Vec<&[Complex64]> = irs.iter().map(|&i| ch.h(i)).collect();
    let gamma: Vec<f64> = irs.iter().map(|&i| dm.gamma[i]).collect();
    let sigma2: Vec<f64> = irs.iter().map(|&i| ch.noise_var(i)).collect();
    let out = udd_iterate(&h, &gamma, &sigma2, budget, opts)?;
    Ok(match out {
        UddOutcome::Solved(local) => {
            let mut sol = BeamformingSolution::default();
            for (pos, beam) in local.w {
                sol.w.insert(irs[pos], beam);
            }
            UddOutcome::Solved(sol)
        }
        other => other,
    })
}

/// Smallest uniform power scaling `c^2` under which `sol` meets every demand
/// of `subset`; `None` if no scaling can.
fn required_scaling(
    sol: &BeamformingSolution,
    ch: &ChannelRealization,
    dm: &DemandProfile,
    subset: &SubsetSelection,
) -> Option<f64> {
    let mut need: f64 = 0.0;
    for i in subset.ir_indices() {
        let h = ch.h(i);
        let signal = cdot(h, sol.w.get(&i)?).norm_sqr();
        let interference: f64 = sol
            .w
            .iter()
            .filter(|(k, _)| **k != i)
            .map(|(_, w)| cdot(h, w).norm_sqr())
            .sum::<f64>()
            + sol
                .v_energy
                .as_deref()
                .map_or(0.0, |v| cdot(h, v).norm_sqr());
        let margin = signal - dm.gamma[i] * interference;
        if !(margin > 0.0) {
            return None;
        }
        need = need.max(dm.gamma[i] * ch.noise_var(i) / margin);
    }
    for j in subset.er_indices() {
        let g = ch.g(j);
        let got: f64 = sol.beams().map(|b| cdot(g, b).norm_sqr()).sum();
        if !(got > 0.0) {
            return None;
        }
        need = need.max(dm.q[j] / got);
    }
    Some(need * (1.0 + 1e-12))
}

/// Completes IR beams `sol` with an energy beam orthogonal to every served
/// IR channel, sized for the largest harvesting shortfall. `None` when the
/// IR channels span the whole space or no candidate direction reaches an ER.
fn energy_completion(
    mut sol: BeamformingSolution,
    ch: &ChannelRealization,
    dm: &DemandProfile,
    subset: &SubsetSelection,
) -> Option<BeamformingSolution> {
    let irs = subset.ir_indices();
    let deficits: Vec<(usize, f64)> = subset
        .er_indices()
        .into_iter()
        .map(|j| {
            let got: f64 = sol.beams().map(|b| cdot(ch.g(j), b).norm_sqr()).sum();
            (j, dm.q[j] - got)
        })
        .filter(|(_, d)| *d > 0.0)
        .collect();
    if deficits.is_empty() {
        return Some(sol);
    }
    let m = ch.antennas();
    if irs.len() >= m {
        return None;
    }
    // P g = g - H (H^H H)^{-1} H^H g
    let n = irs.len();
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for (a, &i) in irs.iter().enumerate() {
        for (b, &k) in irs.iter().enumerate() {
            gram[a * n + b] = cdot(ch.h(i), ch.h(k));
        }
    }
    let chol = if n > 0 {
        Some(ComplexCholesky::new(&gram, n)?)
    } else {
        None
    };
    let project = |g: &[Complex64]| -> Vec<Complex64> {
        let Some(chol) = &chol else { return g.to_vec() };
        let hg: Vec<Complex64> = irs.iter().map(|&i| cdot(ch.h(i), g)).collect();
        let coef = chol.solve(&hg);
        let mut out = g.to_vec();
        for (c, &i) in coef.iter().zip(&irs) {
            for (o, hv) in out.iter_mut().zip(ch.h(i)) {
                *o -= hv * c;
            }
        }
        out
    };
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for &(j, _) in &deficits {
        let dir = project(ch.g(j));
        let norm = cnorm_sqr(&dir);
        if !(norm > 1e-12 * ch.er_gain(j)) {
            continue;
        }
        let u: Vec<Complex64> = dir.iter().map(|c| c / sqrt(norm)).collect();
        let mut need: f64 = 0.0;
        for &(k, d) in &deficits {
            let gain = cdot(ch.g(k), &u).norm_sqr();
            need = if gain > 0.0 {
                need.max(d / gain)
            } else {
                f64::INFINITY
            };
        }
        if need.is_finite() && best.as_ref().is_none_or(|(p, _)| need < *p) {
            best = Some((need, u));
        }
    }
    let (p, u) = best?;
    let p = p * (1.0 + 1e-9);
    sol.v_energy = Some(u.iter().map(|c| c * sqrt(p)).collect());
    Some(sol)
}

fn sample_beam(w: &HermitianMatrix, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let n = w.dim();
    let eig = SymmetricEigen::new(&w.embed());
    let r: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(rng)).collect();
    let mut xi = vec![0.0; 2 * n];
    for (k, &lam) in eig.values.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let s = sqrt(lam) * r[k];
        for (row, x) in xi.iter_mut().enumerate() {
            *x += eig.vectors[(row, k)] * s;
        }
    }
    (0..n).map(|k| Complex64::new(xi[k], xi[k + n])).collect()
}

fn solve_sdr(
    ch: &ChannelRealization,
    dm: &DemandProfile,
    subset: &SubsetSelection,
    opts: &PowerMinOptions,
) -> Result<PowerMinResult> {
    let problem = build_swipt_sdr(ch, dm, subset)?;
    let mut sdp_opts = opts.sdp;
    let mut sol = sdp::solve(&problem, &sdp_opts)?;
    // far-infeasible instances can stall just short of the tolerance
    while matches!(sol.status, SdpStatus::MaxIter | SdpStatus::NumericalFailure)
        && sdp_opts.tol < 1e-5
    {
        sdp_opts.tol = (sdp_opts.tol * 10.0).min(1e-5);
        sol = sdp::solve(&problem, &sdp_opts)?;
    }
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => return Ok(PowerMinResult::infeasible(SolverUsed::Sdr)),
        status => {
            return Err(Error::Numerical(format!(
                "SDP solver stopped with {status:?} after {} iterations",
                sol.iterations
            )))
        }
    }
    let irs = subset.ir_indices();
    let has_v = subset.er != 0;
    let total: f64 = sol.x.iter().map(|x| x.trace()).sum();
    let tol = 1e-6;
    // an energy block this small is interior-point residue, not a beam
    let v_floor = 10.0 * opts.sdp.tol * total;
    let mut beams = BeamformingSolution::default();
    let mut worst: f64 = 0.0;
    for (pos, &i) in irs.iter().enumerate() {
        let (w, res) = extract_rank1(&sol.x[pos], tol)?;
        worst = worst.max(res);
        beams.w.insert(i, w);
    }
    if has_v {
        let v = &sol.x[irs.len()];
        if v.trace() > v_floor {
            let (w, res) = extract_rank1(v, tol)?;
            worst = worst.max(res);
            beams.v_energy = Some(w);
        }
    }
    let mut randomized = false;
    let mut best = required_scaling(&beams, ch, dm, subset).map(|c| {
        let mut b = beams.clone();
        b.scale(sqrt(c));
        b
    });
    if worst > opts.rank1_threshold {
        randomized = true;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ subset.mask(ch.num_ir()));
        for _ in 0..opts.randomizations {
            let mut cand = BeamformingSolution::default();
            for (pos, &i) in irs.iter().enumerate() {
                cand.w.insert(i, sample_beam(&sol.x[pos], &mut rng));
            }
            if beams.v_energy.is_some() {
                cand.v_energy = Some(sample_beam(&sol.x[irs.len()], &mut rng));
            }
            if let Some(c) = required_scaling(&cand, ch, dm, subset) {
                cand.scale(sqrt(c));
                if best
                    .as_ref()
                    .is_none_or(|b| cand.total_power() < b.total_power())
                {
                    best = Some(cand);
                }
            }
        }
    }
    let Some(best) = best else {
        return Err(Error::Numerical(
            "no beamformer recovered from the relaxation meets the demands".into(),
        ));
    };
    let mut out = PowerMinResult::solved(best, SolverUsed::Sdr);
    out.rank1_residual = worst;
    out.randomized = randomized;
    Ok(out)
}

/// Minimum power needed to serve `subset`, with the beamformers achieving it.
pub fn solve_powermin(
    ch: &ChannelRealization,
    dm: &DemandProfile,
    subset: &SubsetSelection,
    opts: &PowerMinOptions,
) -> Result<PowerMinResult> {
    check_dims(ch, dm, subset)?;
    let irs = subset.ir_indices();
    match (irs.len(), subset.er) {
        (0, 0) => Ok(PowerMinResult::solved(
            BeamformingSolution::default(),
            SolverUsed::ClosedForm,
        )),
        (1, 0) => Ok(PowerMinResult::solved(
            closed_form_ir(ch, dm, irs[0]),
            SolverUsed::ClosedForm,
        )),
        (_, 0) if opts.ir_method == IrMethod::Udd => {
            match udd_for_subset(ch, dm, &irs, None, opts) {
                Ok(UddOutcome::Solved(sol)) => Ok(PowerMinResult::solved(sol, SolverUsed::Udd)),
                Ok(UddOutcome::Diverged) => Ok(PowerMinResult::infeasible(SolverUsed::Udd)),
                _ => solve_sdr(ch, dm, subset, opts),
            }
        }
        (_, 0) => solve_sdr(ch, dm, subset, opts),
        (0, ers) => solve_wpt(ch, dm, ers, opts),
        _ => solve_sdr(ch, dm, subset, opts),
    }
}

/// Whether `subset` can be served within `budget`, with its minimum power
/// when that was computed.
///
/// Lower bounds prove infeasibility early: every served user alone needs its
/// matched-filter power, and the monotone dual iteration for the IRs never
/// exceeds their joint minimum. With [`PowerMinOptions::bounds`] set, an
/// explicit feasible beamformer within budget proves feasibility without the
/// relaxation; the returned power is then `None`.
pub fn is_feasible(
    ch: &ChannelRealization,
    dm: &DemandProfile,
    subset: &SubsetSelection,
    budget: f64,
    opts: &PowerMinOptions,
) -> Result<(bool, Option<f64>)> {
    check_dims(ch, dm, subset)?;
    if !(budget > 0.0) {
        return Err(Error::invalid("power budget must be positive"));
    }
    if subset.is_empty() {
        return Ok((true, Some(0.0)));
    }
    let irs = subset.ir_indices();
    let ers = subset.er_indices();
    let singles = irs
        .iter()
        .map(|&i| dm.gamma[i] * ch.noise_var(i) / ch.ir_gain(i))
        .chain(ers.iter().map(|&j| dm.q[j] / ch.er_gain(j)));
    let (mut lb, mut n) = (0.0f64, 0);
    for p in singles {
        lb = lb.max(p);
        n += 1;
    }
    if n == 1 {
        return Ok((lb <= budget, Some(lb)));
    }
    if opts.bounds && lb > budget {
        return Ok((false, None));
    }
    if opts.bounds {
        // IR-only minimum is a lower bound; completing it with a null-space
        // energy beam gives a feasible point and hence an upper bound.
        let ir_sol = match irs.len() {
            0 => Some(BeamformingSolution::default()),
            1 => Some(closed_form_ir(ch, dm, irs[0])),
            _ if opts.ir_method == IrMethod::Udd => {
                match udd_for_subset(ch, dm, &irs, Some(budget), opts)? {
                    UddOutcome::ExceedsBudget | UddOutcome::Diverged => return Ok((false, None)),
                    UddOutcome::Solved(sol) if ers.is_empty() => {
                        let p = sol.total_power();
                        return Ok((p <= budget, Some(p)));
                    }
                    UddOutcome::Solved(sol) => Some(sol),
                    UddOutcome::NotConverged => None,
                }
            }
            _ => None,
        };
        if let Some(sol) = ir_sol.and_then(|s| energy_completion(s, ch, dm, subset)) {
            if sol.total_power() <= budget {
                return Ok((true, None));
            }
        }
    }
    let res = solve_powermin(ch, dm, subset, opts)?;
    Ok(match res.p_min {
        Some(p) => (p <= budget, Some(p)),
        None => (false, None),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compute_harvested_power, compute_sinr};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        }
    }

    fn random_network(m: usize, ni: usize, nj: usize, seed: u64) -> ChannelRealization {
        let mut r = lcg(seed);
        let mut col = |_| (0..m).map(|_| c(r(), r())).collect::<Vec<_>>();
        let h = (0..ni).map(&mut col).collect();
        let g = (0..nj).map(&mut col).collect();
        ChannelRealization::new(m, h, g, vec![0.01; ni]).unwrap()
    }

    #[test]
    fn subset_encoding_round_trips() {
        let s = SubsetSelection::new(&[0, 2], &[1]);
        let a = s.to_allocation(3, 2);
        assert_eq!(a.bits(), &[true, false, true, false, true]);
        assert_eq!(SubsetSelection::from_allocation(&a), s);
        assert_eq!(SubsetSelection::from_mask(s.mask(3), 3), s);
        assert!(SubsetSelection::new(&[0], &[]).is_subset_of(&s));
        assert!(!SubsetSelection::new(&[1], &[]).is_subset_of(&s));
    }

    #[test]
    fn sdr_structure() {
        let ch = random_network(3, 2, 1, 1);
        let dm = DemandProfile::new(vec![1.0, 2.0], vec![0.1]).unwrap();
        let p = build_swipt_sdr(&ch, &dm, &SubsetSelection::new(&[0], &[])).unwrap();
        assert_eq!((p.blocks.len(), p.constraints.len()), (1, 1));
        let p = build_swipt_sdr(&ch, &dm, &SubsetSelection::new(&[0, 1], &[0])).unwrap();
        assert_eq!((p.blocks.len(), p.constraints.len()), (3, 3));
        assert!(build_swipt_sdr(&ch, &dm, &SubsetSelection::EMPTY).is_err());
    }

    #[test]
    fn empty_and_singletons() {
        let ch = random_network(4, 2, 1, 2);
        let dm = DemandProfile::new(vec![3.0, 2.0], vec![0.2]).unwrap();
        let o = PowerMinOptions::default();
        let r = solve_powermin(&ch, &dm, &SubsetSelection::EMPTY, &o).unwrap();
        assert_eq!((r.status, r.p_min), (PowerMinStatus::Solved, Some(0.0)));
        let r = solve_powermin(&ch, &dm, &SubsetSelection::new(&[1], &[]), &o).unwrap();
        let want = 2.0 * 0.01 / ch.ir_gain(1);
        assert!((r.p_min.unwrap() - want).abs() < 1e-12 * want);
        assert_eq!(r.solver_used, SolverUsed::ClosedForm);
        let r = solve_powermin(&ch, &dm, &SubsetSelection::new(&[], &[0]), &o).unwrap();
        assert!((r.p_min.unwrap() - 0.2 / ch.er_gain(0)).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_irs_decouple() {
        let h = vec![
            vec![c(2.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.5)],
        ];
        let ch = ChannelRealization::new(2, h, vec![], vec![0.1, 0.2]).unwrap();
        let dm = DemandProfile::new(vec![4.0, 3.0], vec![]).unwrap();
        let r = solve_powermin(
            &ch,
            &dm,
            &SubsetSelection::new(&[0, 1], &[]),
            &PowerMinOptions::default(),
        )
        .unwrap();
        let want = 4.0 * 0.1 / 4.0 + 3.0 * 0.2 / 0.25;
        assert_eq!(r.solver_used, SolverUsed::Udd);
        assert!((r.p_min.unwrap() - want).abs() < 1e-9 * want);
    }

    #[test]
    fn udd_matches_sdr() {
        for seed in 0..5 {
            let ch = random_network(4, 3, 0, 10 + seed);
            let dm = DemandProfile::new(vec![1.0, 2.0, 1.5], vec![]).unwrap();
            let s = SubsetSelection::new(&[0, 1, 2], &[]);
            let udd = solve_powermin(&ch, &dm, &s, &PowerMinOptions::default()).unwrap();
            let sdr_opts = PowerMinOptions {
                ir_method: IrMethod::Sdr,
                ..Default::default()
            };
            let sdr = solve_powermin(&ch, &dm, &s, &sdr_opts).unwrap();
            assert_eq!(udd.solver_used, SolverUsed::Udd);
            assert_eq!(sdr.solver_used, SolverUsed::Sdr);
            let (a, b) = (udd.p_min.unwrap(), sdr.p_min.unwrap());
            assert!((a - b).abs() <= 1e-3 * b, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn mixed_solution_meets_demands() {
        let ch = random_network(4, 2, 1, 77);
        let dm = DemandProfile::new(vec![2.0, 1.0], vec![0.05]).unwrap();
        let s = SubsetSelection::new(&[0, 1], &[0]);
        let r = solve_powermin(&ch, &dm, &s, &PowerMinOptions::default()).unwrap();
        assert_eq!(r.status, PowerMinStatus::Solved);
        let sol = r.solution.unwrap();
        assert!((sol.total_power() - r.p_min.unwrap()).abs() < 1e-12);
        for i in 0..2 {
            assert!(compute_sinr(&sol, &ch, i).unwrap() >= dm.gamma[i] * (1.0 - 1e-6));
        }
        assert!(compute_harvested_power(&sol, &ch, 0).unwrap() >= 0.05 * (1.0 - 1e-6));
        assert!(r.rank1_residual <= 1e-5);
    }

    #[test]
    fn two_identical_ers_bind_on_larger_demand() {
        let g = vec![c(0.4, 0.3), c(-0.2, 0.8)];
        let ch = ChannelRealization::new(2, vec![], vec![g.clone(), g], vec![]).unwrap();
        let dm = DemandProfile::new(vec![], vec![0.5, 1.0]).unwrap();
        let r = solve_powermin(
            &ch,
            &dm,
            &SubsetSelection::new(&[], &[0, 1]),
            &PowerMinOptions::default(),
        )
        .unwrap();
        let want = 1.0 / ch.er_gain(0);
        assert!((r.p_min.unwrap() - want).abs() < 1e-6 * want);
    }

    #[test]
    fn infeasible_sinr_targets() {
        // same channel for both IRs: SINR targets above 1 cannot both hold
        let h = vec![c(1.0, 0.0), c(0.5, 0.5)];
        let ch = ChannelRealization::new(2, vec![h.clone(), h], vec![], vec![0.1, 0.1]).unwrap();
        let dm = DemandProfile::new(vec![2.0, 2.0], vec![]).unwrap();
        let s = SubsetSelection::new(&[0, 1], &[]);
        let r = solve_powermin(&ch, &dm, &s, &PowerMinOptions::default()).unwrap();
        assert_eq!(r.status, PowerMinStatus::Infeasible);
        let sdr_opts = PowerMinOptions {
            ir_method: IrMethod::Sdr,
            ..Default::default()
        };
        let r = solve_powermin(&ch, &dm, &s, &sdr_opts).unwrap();
        assert_eq!(r.status, PowerMinStatus::Infeasible);
        assert!(
            !is_feasible(&ch, &dm, &s, 1e6, &PowerMinOptions::default())
                .unwrap()
                .0
        );
    }

    #[test]
    fn feasibility_against_budget() {
        let ch = random_network(4, 2, 1, 5);
        let dm = DemandProfile::new(vec![2.0, 1.0], vec![0.05]).unwrap();
        let o = PowerMinOptions::default();
        assert_eq!(
            is_feasible(&ch, &dm, &SubsetSelection::EMPTY, 1.0, &o).unwrap(),
            (true, Some(0.0))
        );
        let single = dm.gamma[0] * 0.01 / ch.ir_gain(0);
        let (ok, p) =
            is_feasible(&ch, &dm, &SubsetSelection::new(&[0], &[]), single * 0.5, &o).unwrap();
        assert!(!ok);
        assert!((p.unwrap() - single).abs() < 1e-15);
        let all = SubsetSelection::new(&[0, 1], &[0]);
        let p = solve_powermin(&ch, &dm, &all, &o).unwrap().p_min.unwrap();
        assert!(is_feasible(&ch, &dm, &all, p * 1.01, &o).unwrap().0);
        assert!(!is_feasible(&ch, &dm, &all, p * 0.99, &o).unwrap().0);
    }
}
