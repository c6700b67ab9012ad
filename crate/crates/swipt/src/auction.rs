//! One auction round end to end: virtual bids, an allocation engine,
//! payments, and the beamformers that serve the winners.

use std::str::FromStr;

use serde::Serialize;
use swipt_core::mechanism::{myerson_mechanism, virtual_bids, ValuationModel};
use swipt_core::model::{
    compute_harvested_power, compute_sinr, AllocationVector, BidProfile, ChannelRealization,
    DemandProfile,
};
use swipt_core::powermin::{solve_powermin, PowerMinOptions, SubsetSelection};
use swipt_core::search::{
    bnb_allocate, goodness_factors, heuristic_allocate, mask_welfare, FeasibilityOracle,
    PowerOracle,
};
use swipt_core::surrogate::Surrogate;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Bnb,
    Heuristic,
    Dnn,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bnb => "bnb",
            Self::Heuristic => "heuristic",
            Self::Dnn => "dnn",
        }
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bnb" => Ok(Self::Bnb),
            "heuristic" => Ok(Self::Heuristic),
            "dnn" => Ok(Self::Dnn),
            _ => Err(format!(
                "unknown engine {s:?} (expected bnb, heuristic or dnn)"
            )),
        }
    }
}

/// Inputs of one round.
#[derive(Clone, Debug)]
pub struct Round<'a> {
    pub channels: &'a ChannelRealization,
    pub demands: &'a DemandProfile,
    pub bids: &'a BidProfile,
    pub models: &'a [ValuationModel],
    pub budget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserReport {
    pub user: usize,
    pub is_ir: bool,
    pub bid: f64,
    pub virtual_bid: f64,
    /// Chosen by the engine.
    pub allocated: bool,
    /// Demand actually met by the final beamformers.
    pub served: bool,
    pub payment: f64,
    /// SINR target (IRs) or harvesting demand in watts (ERs).
    pub demand: f64,
    /// Achieved SINR or harvested watts.
    pub achieved: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuctionReport {
    pub engine: Engine,
    /// Engine output, after repair when requested.
    pub allocation: Vec<bool>,
    /// Whether the allocation fits the power budget.
    pub feasible: bool,
    /// Users removed by repair, in removal order.
    pub repaired: Vec<usize>,
    pub users: Vec<UserReport>,
    /// Virtual welfare of the users actually served.
    pub virtual_welfare: f64,
    pub revenue: f64,
    /// Transmit power of the final beamformers, watts.
    pub total_power: f64,
}

/// Allocation mask chosen by `engine` for `vb`, with repair applied when
/// asked. Returns the mask and the repaired-away users.
fn allocate(
    engine: Engine,
    round: &Round,
    vb: &[f64],
    surrogate: Option<&Surrogate>,
    repair: bool,
    opts: &PowerMinOptions,
) -> Result<(u64, Vec<usize>)> {
    let mut oracle = PowerOracle::new(round.channels, round.demands, round.budget, *opts);
    match engine {
        Engine::Bnb => Ok((bnb_allocate(vb, &mut oracle)?.allocation.mask(), Vec::new())),
        Engine::Heuristic => {
            let good = goodness_factors(round.channels, round.demands, vb)?;
            Ok((
                heuristic_allocate(vb, &good, &mut oracle)?
                    .allocation
                    .mask(),
                Vec::new(),
            ))
        }
        Engine::Dnn => {
            let s =
                surrogate.ok_or_else(|| Error::Config("the dnn engine needs a model".into()))?;
            let predicted = s
                .predict_allocation(round.channels, round.demands, vb)?
                .mask();
            if !repair {
                return Ok((predicted, Vec::new()));
            }
            let good = goodness_factors(round.channels, round.demands, vb)?;
            repair_mask(predicted, &good, &mut oracle)
        }
    }
}

/// Drops the least-good user until the set is feasible.
pub fn repair_mask<O: FeasibilityOracle>(
    mut mask: u64,
    goodness: &[f64],
    oracle: &mut O,
) -> Result<(u64, Vec<usize>)> {
    let mut dropped = Vec::new();
    while mask != 0 && !oracle.is_feasible(mask)? {
        let worst = (0..goodness.len())
            .filter(|&k| mask >> k & 1 == 1)
            .min_by(|&a, &b| goodness[a].total_cmp(&goodness[b]))
            .expect("nonempty mask");
        mask &= !(1 << worst);
        dropped.push(worst);
    }
    Ok((mask, dropped))
}

/// Runs one round. The bnb engine charges Myerson payments; the other
/// engines charge the same critical-value rule with their own allocation
/// in place of the optimal one.
pub fn run_auction(
    round: &Round,
    engine: Engine,
    surrogate: Option<&Surrogate>,
    repair: bool,
    opts: &PowerMinOptions,
) -> Result<AuctionReport> {
    let (ch, dm) = (round.channels, round.demands);
    let (ni, nj) = (ch.num_ir(), ch.num_er());
    let bids = round.bids.to_vec();
    let vb = virtual_bids(&bids, round.models)?;

    let (mask, repaired, bnb_payments) = if engine == Engine::Bnb {
        let mut oracle = PowerOracle::new(ch, dm, round.budget, *opts);
        let out = myerson_mechanism(round.bids, round.models, &mut oracle)?;
        (out.allocation.mask(), Vec::new(), Some(out.payments))
    } else {
        let (mask, repaired) = allocate(engine, round, &vb, surrogate, repair, opts)?;
        (mask, repaired, None)
    };

    let subset = SubsetSelection::from_mask(mask, ni);
    let mut oracle = PowerOracle::new(ch, dm, round.budget, *opts);
    let feasible = oracle.is_feasible(mask)?;
    let solved = solve_powermin(ch, dm, &subset, opts)?;
    let mut solution = solved.solution;
    if let (Some(sol), Some(p)) = (solution.as_mut(), solved.p_min) {
        if p > round.budget {
            // partial service: spend the whole budget and keep whoever is
            // still satisfied
            sol.scale((round.budget / p).sqrt());
        }
    }

    let mut achieved = vec![0.0; ni + nj];
    let mut served = vec![false; ni + nj];
    if let Some(sol) = &solution {
        for i in 0..ni {
            if sol.w.contains_key(&i) {
                achieved[i] = compute_sinr(sol, ch, i)?;
            }
            served[i] = mask >> i & 1 == 1 && achieved[i] >= dm.gamma[i] * (1.0 - 1e-6);
        }
        for j in 0..nj {
            achieved[ni + j] = compute_harvested_power(sol, ch, j)?;
            served[ni + j] =
                mask >> (ni + j) & 1 == 1 && achieved[ni + j] >= dm.q[j] * (1.0 - 1e-6);
        }
    }

    let payments = match bnb_payments {
        Some(p) => p,
        None => {
            let base = mask_welfare(&vb, mask);
            let mut pay = vec![0.0; ni + nj];
            for k in (0..ni + nj).filter(|&k| mask >> k & 1 == 1) {
                let mut without = vb.clone();
                without[k] = 0.0;
                let (m, _) = allocate(engine, round, &without, surrogate, repair, opts)?;
                let w = mask_welfare(&vb, m & !(1 << k));
                let critical = (w - (base - vb[k])).clamp(0.0, vb[k].max(0.0));
                pay[k] = round.models[k].inverse_virtual(critical)?.min(bids[k]);
            }
            pay
        }
    };

    let users: Vec<UserReport> = (0..ni + nj)
        .map(|k| UserReport {
            user: k,
            is_ir: k < ni,
            bid: bids[k],
            virtual_bid: vb[k],
            allocated: mask >> k & 1 == 1,
            served: served[k],
            payment: if served[k] { payments[k] } else { 0.0 },
            demand: dm.user_demand(k),
            achieved: achieved[k],
        })
        .collect();
    let served_mask = served
        .iter()
        .enumerate()
        .fold(0u64, |m, (k, &s)| if s { m | 1 << k } else { m });
    Ok(AuctionReport {
        engine,
        allocation: AllocationVector::from_mask(mask, ni, nj).bits().to_vec(),
        feasible,
        repaired,
        virtual_welfare: mask_welfare(&vb, served_mask),
        revenue: users.iter().map(|u| u.payment).sum(),
        total_power: solution.as_ref().map_or(0.0, |s| s.total_power()),
        users,
    })
}
