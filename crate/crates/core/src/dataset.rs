//! Random network realizations, offline labeling with the exact allocation
//! engine, and deterministic train/validation/test splits.
//!
//! Every sample is a pure function of `(master_seed, sample_seed)`: the
//! master seed keys a ChaCha8 generator and the sample seed selects its
//! stream, so samples can be drawn in any order or in parallel.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math::{db_to_linear, dbm_to_watts, round, sqrt};
use crate::mechanism::{virtual_bids, ValuationModel};
use crate::model::{
    AllocationVector, BidProfile, ChannelRealization, DemandProfile, ScenarioConfig,
};
use crate::powermin::{solve_powermin, PowerMinOptions, SubsetSelection};
use crate::search::{bnb_allocate, PowerOracle};
use crate::{Error, Result};

/// Parameter ranges for drawing network realizations. Every range is
/// sampled uniformly in the unit it is written in.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    pub scenario: ScenarioConfig,
    /// Per-IR channel variance, dB.
    pub ir_gain_db: (f64, f64),
    /// Per-ER channel variance, dB.
    pub er_gain_db: (f64, f64),
    pub noise_dbm: f64,
    pub bid_range: (f64, f64),
    /// SINR targets, dB.
    pub gamma_db: (f64, f64),
    /// Harvesting demands, dBm.
    pub q_dbm: (f64, f64),
    /// Per-user value distributions; empty means uniform over `bid_range`
    /// for everyone.
    pub valuations: Vec<ValuationModel>,
    pub master_seed: u64,
}

impl SamplingConfig {
    /// Defaults for the given scenario.
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            ir_gain_db: (-80.0, -60.0),
            er_gain_db: (-60.0, -40.0),
            noise_dbm: -50.0,
            bid_range: (0.1, 1.0),
            gamma_db: (5.0, 35.0),
            q_dbm: (-20.0, 0.0),
            valuations: Vec::new(),
            master_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let ranges = [
            ("ir_gain_db", self.ir_gain_db),
            ("er_gain_db", self.er_gain_db),
            ("bid_range", self.bid_range),
            ("gamma_db", self.gamma_db),
            ("q_dbm", self.q_dbm),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!(
                    "{name}: range must be finite and ordered"
                )));
            }
        }
        if !self.noise_dbm.is_finite() {
            return Err(Error::invalid("noise_dbm must be finite"));
        }
        if self.bid_range.0 < 0.0 {
            return Err(Error::invalid("bid_range: bids must be nonnegative"));
        }
        let k = self.scenario.num_users();
        if !self.valuations.is_empty() && self.valuations.len() != k {
            return Err(Error::dims("valuations", k, self.valuations.len()));
        }
        for m in self.models() {
            m.validate()?;
            let (lo, hi) = m.support();
            if self.bid_range.0 < lo || self.bid_range.1 > hi {
                return Err(Error::invalid(
                    "bid_range must lie inside every value support",
                ));
            }
        }
        Ok(())
    }

    /// Value distribution of every user.
    pub fn models(&self) -> Vec<ValuationModel> {
        if self.valuations.is_empty() {
            let (lo, hi) = self.bid_range;
            alloc::vec![ValuationModel::Uniform { lo, hi }; self.scenario.num_users()]
        } else {
            self.valuations.clone()
        }
    }
}

/// Unlabeled realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSample {
    pub sample_seed: u64,
    pub channels: ChannelRealization,
    pub bids: BidProfile,
    pub demands: DemandProfile,
}

/// Realization labeled with the optimal allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub sample_seed: u64,
    pub channels: ChannelRealization,
    pub bids: BidProfile,
    pub demands: DemandProfile,
    pub virtual_bids: Vec<f64>,
    pub label: AllocationVector,
    /// Minimum power serving the label (0 for the empty label).
    pub p_min_of_label: f64,
}

/// Generator for one sample.
pub fn sample_rng(master_seed: u64, sample_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample_seed);
    rng
}

/// `CN(0, var I)` column of length `m`.
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, m: usize, var: f64) -> Vec<Complex64> {
    let s = sqrt(var / 2.0);
    (0..m)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws one realization: channel variances per user, Gaussian channel
/// columns, bids, SINR targets and harvesting demands.
pub fn sample_scenario(config: &SamplingConfig, sample_seed: u64) -> Result<ScenarioSample> {
    config.validate()?;
    let sc = &config.scenario;
    let mut rng = sample_rng(config.master_seed, sample_seed);
    let m = sc.antennas;
    let h: Vec<Vec<Complex64>> = (0..sc.num_ir)
        .map(|_| {
            let var = db_to_linear(uniform(&mut rng, config.ir_gain_db));
            draw_channel(&mut rng, m, var)
        })
        .collect();
    let g: Vec<Vec<Complex64>> = (0..sc.num_er)
        .map(|_| {
            let var = db_to_linear(uniform(&mut rng, config.er_gain_db));
            draw_channel(&mut rng, m, var)
        })
        .collect();
    let noise = dbm_to_watts(config.noise_dbm);
    let channels = ChannelRealization::new(m, h, g, alloc::vec![noise; sc.num_ir])?;
    let ir_bids = (0..sc.num_ir)
        .map(|_| uniform(&mut rng, config.bid_range))
        .collect();
    let er_bids = (0..sc.num_er)
        .map(|_| uniform(&mut rng, config.bid_range))
        .collect();
    let gamma = (0..sc.num_ir)
        .map(|_| db_to_linear(uniform(&mut rng, config.gamma_db)))
        .collect();
    let q = (0..sc.num_er)
        .map(|_| dbm_to_watts(uniform(&mut rng, config.q_dbm)))
        .collect();
    Ok(ScenarioSample {
        sample_seed,
        channels,
        bids: BidProfile::new(ir_bids, er_bids)?,
        demands: DemandProfile::new(gamma, q)?,
    })
}

/// Labels a realization with the branch-and-bound allocation under the
/// config's budget.
pub fn label_sample(
    sample: ScenarioSample,
    config: &SamplingConfig,
    opts: &PowerMinOptions,
) -> Result<TrainingSample> {
    let vb = virtual_bids(&sample.bids.to_vec(), &config.models())?;
    let mut oracle = PowerOracle::new(
        &sample.channels,
        &sample.demands,
        config.scenario.power_budget,
        *opts,
    );
    let out = bnb_allocate(&vb, &mut oracle)?;
    let subset = SubsetSelection::from_allocation(&out.allocation);
    let p_min = solve_powermin(&sample.channels, &sample.demands, &subset, opts)?
        .p_min
        .ok_or_else(|| Error::Numerical("label became infeasible on re-solve".into()))?;
    Ok(TrainingSample {
        sample_seed: sample.sample_seed,
        channels: sample.channels,
        bids: sample.bids,
        demands: sample.demands,
        virtual_bids: vb,
        label: out.allocation,
        p_min_of_label: p_min,
    })
}

/// Sample seed of attempt `attempt` for counter `index`; retries live above
/// bit 40 so they never collide with other counters.
pub fn attempt_seed(index: u64, attempt: u64) -> u64 {
    index | (attempt << 40)
}

/// Samples that failed to label, with the reason.
pub type Failures = Vec<(u64, String)>;

/// Draws and labels the samples with counters `start..start + count`. A
/// sample whose solve fails is redrawn with the next attempt seed, up to
/// `max_attempts` times; failures are returned alongside the samples.
pub fn generate(
    config: &SamplingConfig,
    start: u64,
    count: usize,
    opts: &PowerMinOptions,
    max_attempts: u64,
) -> Result<(Vec<TrainingSample>, Failures)> {
    config.validate()?;
    let mut out = Vec::with_capacity(count);
    let mut failures = Vec::new();
    for index in start..start + count as u64 {
        let mut done = false;
        for attempt in 0..max_attempts.max(1) {
            let seed = attempt_seed(index, attempt);
            match sample_scenario(config, seed).and_then(|s| label_sample(s, config, opts)) {
                Ok(s) => {
                    out.push(s);
                    done = true;
                    break;
                }
                Err(e) => failures.push((seed, format!("{e}"))),
            }
        }
        if !done {
            return Err(Error::Numerical(format!(
                "sample {index} failed {max_attempts} labeling attempts"
            )));
        }
    }
    Ok((out, failures))
}

/// Sizes of the test and validation parts: 20% of the whole, then 20% of
/// the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let test = round(n as f64 * 0.2) as usize;
    let val = round((n - test) as f64 * 0.2) as usize;
    (n - test - val, val, test)
}

/// Shuffles deterministically by `seed` and cuts into train, validation
/// and test parts (64% / 16% / 20%).
pub fn split_dataset<T: Clone>(samples: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if samples.len() < 10 {
        return Err(Error::invalid(format!(
            "splitting needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (ntr, nva, _) = split_sizes(samples.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<T>>();
    Ok((
        pick(&order[..ntr]),
        pick(&order[ntr..ntr + nva]),
        pick(&order[ntr + nva..]),
    ))
}
