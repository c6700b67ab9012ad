//! Network, demand and bid types plus the closed-form physical and economic
//! metrics evaluated on them.
//!
//! Effective channel gains are `|h^H w|^2` throughout: a stored channel
//! column `h` and a beam `w` couple through the conjugate inner product.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::linalg::{cdot, cnorm_sqr};
use crate::math::log2;
use crate::{Error, Result};

/// Static dimensions of one network and the AP's power budget.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Transmit antennas at the AP.
    pub antennas: usize,
    /// Information receivers.
    pub num_ir: usize,
    /// Energy receivers.
    pub num_er: usize,
    /// Transmit power budget in watts.
    pub power_budget: f64,
    /// Length of one auction round in seconds; always 1.
    pub auction_duration: f64,
}

impl ScenarioConfig {
    pub fn new(antennas: usize, num_ir: usize, num_er: usize, power_budget: f64) -> Result<Self> {
        let cfg = Self {
            antennas,
            num_ir,
            num_er,
            power_budget,
            auction_duration: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_users(&self) -> usize {
        self.num_ir + self.num_er
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(Error::invalid("antenna count must be at least 1"));
        }
        if self.num_users() == 0 {
            return Err(Error::invalid("scenario needs at least one receiver"));
        }
        if self.num_users() > 30 {
            return Err(Error::invalid("at most 30 receivers are supported"));
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return Err(Error::invalid("power budget must be positive and finite"));
        }
        if self.auction_duration != 1.0 {
            return Err(Error::invalid("auction duration is fixed to 1 second"));
        }
        Ok(())
    }
}

/// Channel state of one round: one column per receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    antennas: usize,
    h: Vec<Vec<Complex64>>,
    g: Vec<Vec<Complex64>>,
    noise_var: Vec<f64>,
}

impl ChannelRealization {
    /// `h` holds the IR channel columns, `g` the ER channel columns and
    /// `noise_var` the per-IR receiver noise power in watts.
    pub fn new(
        antennas: usize,
        h: Vec<Vec<Complex64>>,
        g: Vec<Vec<Complex64>>,
        noise_var: Vec<f64>,
    ) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::invalid("antenna count must be at least 1"));
        }
        if noise_var.len() != h.len() {
            return Err(Error::dims("noise variances", h.len(), noise_var.len()));
        }
        for col in h.iter().chain(&g) {
            if col.len() != antennas {
                return Err(Error::dims("channel column", antennas, col.len()));
            }
            if col.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::invalid("channel entries must be finite"));
            }
            if cnorm_sqr(col) <= 0.0 {
                return Err(Error::invalid("channel columns must be nonzero"));
            }
        }
        if noise_var.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("noise variances must be positive"));
        }
        Ok(Self {
            antennas,
            h,
            g,
            noise_var,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn num_ir(&self) -> usize {
        self.h.len()
    }

    pub fn num_er(&self) -> usize {
        self.g.len()
    }

    pub fn num_users(&self) -> usize {
        self.h.len() + self.g.len()
    }

    pub fn h(&self, i: usize) -> &[Complex64] {
        &self.h[i]
    }

    pub fn g(&self, j: usize) -> &[Complex64] {
        &self.g[j]
    }

    pub fn ir_channels(&self) -> &[Vec<Complex64>] {
        &self.h
    }

    pub fn er_channels(&self) -> &[Vec<Complex64>] {
        &self.g
    }

    pub fn noise_var(&self, i: usize) -> f64 {
        self.noise_var[i]
    }

    pub fn noise_vars(&self) -> &[f64] {
        &self.noise_var
    }

    /// `‖h_i‖²`
    pub fn ir_gain(&self, i: usize) -> f64 {
        cnorm_sqr(&self.h[i])
    }

    /// `‖g_j‖²`
    pub fn er_gain(&self, j: usize) -> f64 {
        cnorm_sqr(&self.g[j])
    }

    /// Channel gain of user `k` in the joint IR-then-ER ordering.
    pub fn user_gain(&self, k: usize) -> f64 {
        if k < self.num_ir() {
            self.ir_gain(k)
        } else {
            self.er_gain(k - self.num_ir())
        }
    }
}

/// Service demands: SINR targets for IRs, received power for ERs.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandProfile {
    /// Minimum SINR per IR as a linear ratio.
    pub gamma: Vec<f64>,
    /// Minimum received power per ER in watts.
    pub q: Vec<f64>,
}

impl DemandProfile {
    pub fn new(gamma: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let d = Self { gamma, q };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .gamma
            .iter()
            .chain(&self.q)
            .any(|&x| !(x > 0.0 && x.is_finite()))
        {
            return Err(Error::invalid("demands must be positive and finite"));
        }
        Ok(())
    }

    /// Demand of user `k` in the joint IR-then-ER ordering.
    pub fn user_demand(&self, k: usize) -> f64 {
        if k < self.gamma.len() {
            self.gamma[k]
        } else {
            self.q[k - self.gamma.len()]
        }
    }
}

/// Bids submitted by the IRs and ERs.
#[derive(Clone, Debug, PartialEq)]
pub struct BidProfile {
    pub ir: Vec<f64>,
    pub er: Vec<f64>,
}

impl BidProfile {
    pub fn new(ir: Vec<f64>, er: Vec<f64>) -> Result<Self> {
        if ir.iter().chain(&er).any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::invalid("bids must be nonnegative and finite"));
        }
        Ok(Self { ir, er })
    }

    pub fn len(&self) -> usize {
        self.ir.len() + self.er.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bids concatenated IRs first.
    pub fn to_vec(&self) -> Vec<f64> {
        self.ir.iter().chain(&self.er).copied().collect()
    }
}

/// Binary allocation over the users, IRs first then ERs.
///
/// The decimal index reads the bits with the first IR as the most
/// significant bit: with three IRs and one ER, serving only the third IR is
/// `(0, 0, 1, 0)`, index 2.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AllocationVector {
    bits: Vec<bool>,
    num_ir: usize,
}

impl AllocationVector {
    pub fn new(bits: Vec<bool>, num_ir: usize) -> Result<Self> {
        if num_ir > bits.len() {
            return Err(Error::invalid("more IRs than allocation bits"));
        }
        if bits.len() > 63 {
            return Err(Error::invalid("allocation vectors hold at most 63 users"));
        }
        Ok(Self { bits, num_ir })
    }

    pub fn zeros(num_ir: usize, num_er: usize) -> Self {
        Self {
            bits: alloc::vec![false; num_ir + num_er],
            num_ir,
        }
    }

    pub fn from_decimal(index: u64, num_ir: usize, num_er: usize) -> Result<Self> {
        let k = num_ir + num_er;
        if k > 63 || index >> k != 0 {
            return Err(Error::invalid(format!(
                "index {index} out of range for {k} users"
            )));
        }
        let bits = (0..k).map(|u| (index >> (k - 1 - u)) & 1 == 1).collect();
        Ok(Self { bits, num_ir })
    }

    /// Builds from a user mask where bit `k` is user `k`.
    pub fn from_mask(mask: u64, num_ir: usize, num_er: usize) -> Self {
        let bits = (0..num_ir + num_er).map(|u| (mask >> u) & 1 == 1).collect();
        Self { bits, num_ir }
    }

    /// User mask where bit `k` is user `k`.
    pub fn mask(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0, |m, (k, _)| m | 1 << k)
    }

    pub fn decimal_index(&self) -> u64 {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn num_ir(&self) -> usize {
        self.num_ir
    }

    pub fn num_er(&self) -> usize {
        self.bits.len() - self.num_ir
    }

    pub fn ir_bits(&self) -> &[bool] {
        &self.bits[..self.num_ir]
    }

    pub fn er_bits(&self) -> &[bool] {
        &self.bits[self.num_ir..]
    }

    pub fn count_served(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_served(&self, k: usize) -> bool {
        self.bits[k]
    }
}

/// Beamformers for one round: one beam per served IR and an optional energy
/// beam shared by every served ER.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BeamformingSolution {
    /// Information beams keyed by IR index.
    pub w: BTreeMap<usize, Vec<Complex64>>,
    /// Shared energy beam.
    pub v_energy: Option<Vec<Complex64>>,
}

impl BeamformingSolution {
    pub fn total_power(&self) -> f64 {
        self.w.values().map(|b| cnorm_sqr(b)).sum::<f64>()
            + self.v_energy.as_deref().map_or(0.0, cnorm_sqr)
    }

    /// Every beam, information beams first.
    pub fn beams(&self) -> impl Iterator<Item = &[Complex64]> {
        self.w
            .values()
            .map(|b| b.as_slice())
            .chain(self.v_energy.as_deref())
    }

    /// Multiplies every beam by `factor` (power scales by its square).
    pub fn scale(&mut self, factor: f64) {
        for b in self.w.values_mut().chain(self.v_energy.as_mut()) {
            b.iter_mut().for_each(|c| *c *= factor);
        }
    }

    fn check_dims(&self, antennas: usize) -> Result<()> {
        for b in self.beams() {
            if b.len() != antennas {
                return Err(Error::dims("beam", antennas, b.len()));
            }
        }
        Ok(())
    }
}

/// SINR of IR `i` under `solution`.
pub fn compute_sinr(
    solution: &BeamformingSolution,
    channels: &ChannelRealization,
    i: usize,
) -> Result<f64> {
    if i >= channels.num_ir() {
        return Err(Error::invalid(format!("IR index {i} out of range")));
    }
    solution.check_dims(channels.antennas())?;
    let h = channels.h(i);
    let own = solution
        .w
        .get(&i)
        .ok_or_else(|| Error::invalid(format!("IR {i} has no beam")))?;
    let signal = cdot(h, own).norm_sqr();
    let mut interference = channels.noise_var(i);
    for (&k, w) in &solution.w {
        if k != i {
            interference += cdot(h, w).norm_sqr();
        }
    }
    if let Some(v) = &solution.v_energy {
        interference += cdot(h, v).norm_sqr();
    }
    Ok(signal / interference)
}

/// Power received by ER `j` from every beam.
pub fn compute_harvested_power(
    solution: &BeamformingSolution,
    channels: &ChannelRealization,
    j: usize,
) -> Result<f64> {
    if j >= channels.num_er() {
        return Err(Error::invalid(format!("ER index {j} out of range")));
    }
    solution.check_dims(channels.antennas())?;
    let g = channels.g(j);
    Ok(solution.beams().map(|b| cdot(g, b).norm_sqr()).sum())
}

/// Sum of the values of served users.
pub fn social_welfare(values: &[f64], allocation: &AllocationVector) -> Result<f64> {
    if values.len() != allocation.len() {
        return Err(Error::dims("values", allocation.len(), values.len()));
    }
    Ok(values
        .iter()
        .zip(allocation.bits())
        .filter(|(_, &b)| b)
        .map(|(v, _)| v)
        .sum())
}

/// Revenue of the AP: total payments collected (service cost is zero).
pub fn ap_revenue(payments: &[f64]) -> f64 {
    payments.iter().sum()
}

/// Spectral efficiency `log2(1 + sinr / gap)` in bits/s/Hz.
pub fn achievable_rate(sinr: f64, gap: f64) -> Result<f64> {
    if !(gap >= 1.0) {
        return Err(Error::invalid("gap to capacity must be at least 1"));
    }
    if !(sinr >= 0.0) {
        return Err(Error::invalid("SINR must be nonnegative"));
    }
    Ok(log2(1.0 + sinr / gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single_ir() -> ChannelRealization {
        ChannelRealization::new(2, vec![vec![c(1.0, 0.0), c(0.0, 0.0)]], vec![], vec![0.1]).unwrap()
    }

    #[test]
    fn sinr_single_beam() {
        let ch = single_ir();
        let mut sol = BeamformingSolution::default();
        sol.w.insert(0, vec![c(0.5f64.sqrt(), 0.0), c(0.0, 0.0)]);
        assert!((compute_sinr(&sol, &ch, 0).unwrap() - 5.0).abs() < 1e-12);
        // an orthogonal energy beam causes no interference
        sol.v_energy = Some(vec![c(0.0, 0.0), c(2.0f64.sqrt(), 0.0)]);
        assert!((compute_sinr(&sol, &ch, 0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_rejects_bad_dims() {
        let ch = single_ir();
        let mut sol = BeamformingSolution::default();
        sol.w.insert(0, vec![c(1.0, 0.0)]);
        assert!(matches!(
            compute_sinr(&sol, &ch, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn harvested_power_matched_beam() {
        let g = vec![c(0.3, -0.4), c(1.2, 0.5)];
        let ch = ChannelRealization::new(2, vec![], vec![g.clone()], vec![]).unwrap();
        let empty = BeamformingSolution::default();
        assert_eq!(compute_harvested_power(&empty, &ch, 0).unwrap(), 0.0);
        let rho: f64 = 0.7;
        let norm = cnorm_sqr(&g).sqrt();
        let beam: Vec<_> = g.iter().map(|x| x * (rho.sqrt() / norm)).collect();
        let sol = BeamformingSolution {
            w: BTreeMap::new(),
            v_energy: Some(beam),
        };
        let got = compute_harvested_power(&sol, &ch, 0).unwrap();
        assert!((got - rho * cnorm_sqr(&g)).abs() < 1e-12);
    }

    #[test]
    fn welfare_and_revenue() {
        let a = AllocationVector::new(vec![true, false, true], 3).unwrap();
        assert_eq!(social_welfare(&[1.0, 2.0, 3.0], &a).unwrap(), 4.0);
        let z = AllocationVector::zeros(2, 1);
        assert_eq!(social_welfare(&[1.0, 2.0, 3.0], &z).unwrap(), 0.0);
        assert_eq!(ap_revenue(&[0.0, 0.0]), 0.0);
        assert_eq!(ap_revenue(&[1.5, 0.5]), 2.0);
    }

    #[test]
    fn rate() {
        assert_eq!(achievable_rate(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(achievable_rate(3.0, 1.0).unwrap(), 2.0);
        assert_eq!(achievable_rate(0.0, 1.0).unwrap(), 0.0);
        assert!(achievable_rate(1.0, 0.5).is_err());
    }

    #[test]
    fn decimal_index_puts_first_ir_most_significant() {
        // three IRs, one ER: serving only the third IR is index 2
        let a = AllocationVector::new(vec![false, false, true, false], 3).unwrap();
        assert_eq!(a.decimal_index(), 2);
        assert_eq!(AllocationVector::from_decimal(2, 3, 1).unwrap(), a);
        assert_eq!(a.mask(), 0b0100);
        assert_eq!(AllocationVector::from_mask(0b0100, 3, 1), a);
        assert!(AllocationVector::from_decimal(16, 3, 1).is_err());
    }

    #[test]
    fn scenario_validation() {
        assert!(ScenarioConfig::new(4, 2, 1, 3.0).is_ok());
        assert!(ScenarioConfig::new(0, 2, 1, 3.0).is_err());
        assert!(ScenarioConfig::new(4, 0, 0, 3.0).is_err());
        assert!(ScenarioConfig::new(4, 1, 0, 0.0).is_err());
    }

    fn cvec(m: usize) -> impl Strategy<Value = Vec<Complex64>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), m)
            .prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
    }

    proptest! {
        #[test]
        fn sinr_never_drops_when_all_beams_scale_up(
            h in proptest::collection::vec(cvec(3), 2),
            beams in proptest::collection::vec(cvec(3), 3),
            alpha in 1.0f64..10.0,
        ) {
            prop_assume!(h.iter().all(|x| cnorm_sqr(x) > 1e-6));
            let ch = ChannelRealization::new(3, h, vec![], vec![0.05, 0.2]).unwrap();
            let mut sol = BeamformingSolution::default();
            sol.w.insert(0, beams[0].clone());
            sol.w.insert(1, beams[1].clone());
            sol.v_energy = Some(beams[2].clone());
            let before = [compute_sinr(&sol, &ch, 0).unwrap(), compute_sinr(&sol, &ch, 1).unwrap()];
            sol.scale(alpha.sqrt());
            for (i, b) in before.iter().enumerate() {
                let after = compute_sinr(&sol, &ch, i).unwrap();
                prop_assert!(after >= b * (1.0 - 1e-12));
            }
        }

        #[test]
        fn harvested_power_never_drops_when_a_beam_is_added(
            g in cvec(3),
            beams in proptest::collection::vec(cvec(3), 2),
            extra in cvec(3),
        ) {
            prop_assume!(cnorm_sqr(&g) > 1e-6);
            let ch = ChannelRealization::new(3, vec![], vec![g], vec![]).unwrap();
            let mut sol = BeamformingSolution::default();
            sol.w.insert(0, beams[0].clone());
            sol.w.insert(1, beams[1].clone());
            let before = compute_harvested_power(&sol, &ch, 0).unwrap();
            sol.v_energy = Some(extra);
            prop_assert!(compute_harvested_power(&sol, &ch, 0).unwrap() >= before);
        }

        #[test]
        fn welfare_is_linear_in_values(
            v in proptest::collection::vec(-5.0f64..5.0, 5),
            u in proptest::collection::vec(-5.0f64..5.0, 5),
            s in -3.0f64..3.0,
            mask in 0u64..32,
        ) {
            let a = AllocationVector::from_mask(mask, 3, 2);
            let combo: Vec<f64> = v.iter().zip(&u).map(|(x, y)| s * x + y).collect();
            let lhs = social_welfare(&combo, &a).unwrap();
            let rhs = s * social_welfare(&v, &a).unwrap() + social_welfare(&u, &a).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn revenue_is_permutation_invariant(mut p in proptest::collection::vec(0.0f64..10.0, 1..8), seed in 0usize..100) {
            let before = ap_revenue(&p);
            let n = p.len();
            p.rotate_left(seed % n);
            p.reverse();
            prop_assert!((ap_revenue(&p) - before).abs() < 1e-9);
        }

        #[test]
        fn decimal_round_trip(index in 0u64..128) {
            let a = AllocationVector::from_decimal(index, 4, 3).unwrap();
            prop_assert_eq!(a.decimal_index(), index);
            prop_assert_eq!(AllocationVector::from_mask(a.mask(), 4, 3), a);
        }
    }
}
