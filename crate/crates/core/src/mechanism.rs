//! Single-parameter auction mechanisms over a feasibility oracle.
//!
//! Bids are mapped to virtual values `phi(b) = b - (1 - F(b)) / f(b)`;
//! maximizing virtual welfare with critical-value payments in virtual space
//! and mapping the payments back through `phi^-1` gives the revenue-optimal
//! mechanism for regular value distributions. With `phi` the identity this
//! is plain VCG.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::exp;
use crate::model::{AllocationVector, BidProfile};
use crate::search::{bnb_allocate, bnb_within, BnbOptions, FeasibilityOracle, Memoized};
use crate::{Error, Result};

/// Distribution of one agent's private value.
#[derive(Clone, Debug, PartialEq)]
pub enum ValuationModel {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Support `[0, inf)`.
    Exponential {
        rate: f64,
    },
    /// Weighted mixture of uniform components `(weight, lo, hi)`; weights are
    /// normalized on use.
    UniformMixture(Vec<(f64, f64, f64)>),
}

impl ValuationModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Self::Exponential { rate } => rate.is_finite() && *rate > 0.0,
            Self::UniformMixture(c) => {
                !c.is_empty()
                    && c.iter().all(|&(w, lo, hi)| {
                        w > 0.0 && w.is_finite() && lo.is_finite() && hi.is_finite() && lo < hi
                    })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("malformed valuation model"))
        }
    }

    /// Closed support hull `[lo, hi]` (`hi` may be infinite).
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Uniform { lo, hi } => (*lo, *hi),
            Self::Exponential { .. } => (0.0, f64::INFINITY),
            Self::UniformMixture(c) => c.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(a, b), &(_, lo, hi)| (a.min(lo), b.max(hi)),
            ),
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            Self::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::Exponential { rate } => {
                if v <= 0.0 {
                    0.0
                } else {
                    1.0 - exp(-rate * v)
                }
            }
            Self::UniformMixture(c) => {
                let total: f64 = c.iter().map(|x| x.0).sum();
                c.iter()
                    .map(|&(w, lo, hi)| w * ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
                    .sum::<f64>()
                    / total
            }
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        match self {
            Self::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&v) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::Exponential { rate } => {
                if v >= 0.0 {
                    rate * exp(-rate * v)
                } else {
                    0.0
                }
            }
            Self::UniformMixture(c) => {
                let total: f64 = c.iter().map(|x| x.0).sum();
                c.iter()
                    .filter(|&&(_, lo, hi)| (lo..=hi).contains(&v))
                    .map(|&(w, lo, hi)| w / (hi - lo))
                    .sum::<f64>()
                    / total
            }
        }
    }

    /// Whether `v` carries density (gaps of a mixture are excluded).
    pub fn in_support(&self, v: f64) -> bool {
        let (lo, hi) = self.support();
        v >= lo && v <= hi && self.pdf(v) > 0.0
    }

    /// Virtual value `v - (1 - F(v)) / f(v)`.
    pub fn virtual_valuation(&self, v: f64) -> Result<f64> {
        if !self.in_support(v) {
            return Err(Error::invalid(alloc::format!(
                "value {v} outside the support"
            )));
        }
        Ok(self.phi(v))
    }

    fn phi(&self, v: f64) -> f64 {
        match self {
            Self::Exponential { rate } => v - 1.0 / rate,
            _ => v - (1.0 - self.cdf(v)) / self.pdf(v),
        }
    }

    /// `phi` continued across density gaps by its value at the last
    /// supported point to the left, so that it stays monotone for regular
    /// models.
    fn phi_filled(&self, v: f64) -> f64 {
        if self.pdf(v) > 0.0 {
            return self.phi(v);
        }
        match self {
            Self::UniformMixture(c) => {
                let left = c
                    .iter()
                    .map(|x| x.2)
                    .filter(|&hi| hi <= v)
                    .fold(f64::NEG_INFINITY, f64::max);
                self.phi(left)
            }
            _ => self.phi(v),
        }
    }

    /// Smallest supported value whose virtual value reaches `y`; clamps to
    /// the support ends.
    pub fn inverse_virtual(&self, y: f64) -> Result<f64> {
        if y.is_nan() {
            return Err(Error::invalid("virtual value is NaN"));
        }
        if !self.is_regular() {
            return Err(Error::invalid(
                "inverse virtual valuation needs a regular model",
            ));
        }
        let (lo, hi) = self.support();
        if self.phi(lo) >= y {
            return Ok(lo);
        }
        let mut upper = if hi.is_finite() {
            if self.phi(hi) <= y {
                return Ok(hi);
            }
            hi
        } else {
            let mut u = lo + 1.0;
            while self.phi(u) < y {
                u = lo + 2.0 * (u - lo);
            }
            u
        };
        let mut lower = lo;
        // invariant: phi(lower) < y <= phi(upper)
        for _ in 0..200 {
            let mid = 0.5 * (lower + upper);
            if mid <= lower || mid >= upper {
                break;
            }
            if self.phi_filled(mid) >= y {
                upper = mid;
            } else {
                lower = mid;
            }
        }
        Ok(upper)
    }

    /// Regularity of the built-in families, checked on a fine grid for
    /// mixtures.
    pub fn is_regular(&self) -> bool {
        match self {
            Self::Uniform { .. } | Self::Exponential { .. } => true,
            Self::UniformMixture(_) => check_regularity(self, 4096),
        }
    }
}

/// `phi(v)` for a value inside the model's support.
pub fn virtual_valuation(model: &ValuationModel, v: f64) -> Result<f64> {
    model.virtual_valuation(v)
}

/// `phi^-1(y)` for a regular model, clamped to the support.
pub fn inverse_virtual(model: &ValuationModel, y: f64) -> Result<f64> {
    model.inverse_virtual(y)
}

/// Whether `phi` is non-decreasing over `grid_size` evenly spaced supported
/// points (tolerance `1e-9`). Infinite supports are cut at the
/// `1 - 1e-9` quantile.
pub fn check_regularity(model: &ValuationModel, grid_size: usize) -> bool {
    if model.validate().is_err() || grid_size < 2 {
        return false;
    }
    let (lo, mut hi) = model.support();
    if let ValuationModel::Exponential { rate } = model {
        hi = -crate::math::ln(1e-9) / rate;
    }
    let mut prev = f64::NEG_INFINITY;
    for s in 0..grid_size {
        let v = lo + (hi - lo) * s as f64 / (grid_size - 1) as f64;
        if model.pdf(v) <= 0.0 {
            continue;
        }
        let phi = model.phi(v);
        if phi - prev < -1e-9 {
            return false;
        }
        prev = phi;
    }
    true
}

/// Allocation and payments of one auction round.
#[derive(Clone, Debug, PartialEq)]
pub struct MechanismOutcome {
    pub allocation: AllocationVector,
    pub payments: Vec<f64>,
    pub virtual_bids: Vec<f64>,
    /// Virtual welfare of the allocation.
    pub welfare: f64,
}

/// Virtual-welfare maximization with critical-value payments in virtual
/// space: a winner pays the best welfare achievable without it minus what
/// the other winners contribute. Losers pay zero; with `b' = b` this is VCG.
pub fn vcg_prime<O: FeasibilityOracle>(
    virtual_bids: &[f64],
    oracle: &mut O,
) -> Result<(AllocationVector, Vec<f64>)> {
    let mut memo = Memoized::new(oracle);
    let best = bnb_allocate(virtual_bids, &mut memo)?;
    let mask = best.allocation.mask();
    let mut pay = vec![0.0; virtual_bids.len()];
    for (k, p) in pay.iter_mut().enumerate() {
        if mask >> k & 1 == 0 {
            continue;
        }
        let without = bnb_within(virtual_bids, !(1u64 << k), &mut memo, BnbOptions::default())?;
        let others = best.welfare - virtual_bids[k];
        *p = (without.welfare - others).clamp(0.0, virtual_bids[k]);
    }
    Ok((best.allocation, pay))
}

/// Revenue-optimal mechanism: virtual bids, [`vcg_prime`], then payments
/// mapped back through each winner's `phi^-1`.
pub fn myerson_mechanism<O: FeasibilityOracle>(
    bids: &BidProfile,
    models: &[ValuationModel],
    oracle: &mut O,
) -> Result<MechanismOutcome> {
    let b = bids.to_vec();
    if models.len() != b.len() {
        return Err(Error::dims("valuation models", b.len(), models.len()));
    }
    let virtual_bids = virtual_bids(&b, models)?;
    let (allocation, p_virtual) = vcg_prime(&virtual_bids, oracle)?;
    let mut payments = vec![0.0; b.len()];
    for (k, p) in payments.iter_mut().enumerate() {
        if allocation.is_served(k) {
            *p = models[k].inverse_virtual(p_virtual[k])?.min(b[k]);
        }
    }
    let welfare = allocation
        .bits()
        .iter()
        .zip(&virtual_bids)
        .filter(|(a, _)| **a)
        .map(|(_, v)| v)
        .sum();
    Ok(MechanismOutcome {
        allocation,
        payments,
        virtual_bids,
        welfare,
    })
}

/// `phi_k(b_k)` for every agent, checking each bid lies in its support and
/// each model is regular.
pub fn virtual_bids(bids: &[f64], models: &[ValuationModel]) -> Result<Vec<f64>> {
    if models.len() != bids.len() {
        return Err(Error::dims("valuation models", bids.len(), models.len()));
    }
    bids.iter()
        .zip(models)
        .map(|(&b, m)| {
            m.validate()?;
            if !m.is_regular() {
                return Err(Error::invalid("valuation model is not regular"));
            }
            m.virtual_valuation(b)
        })
        .collect()
}
