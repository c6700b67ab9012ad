//! Allocation engines over a downward-closed feasibility oracle: exhaustive
//! enumeration, exclusion-first branch and bound, and the goodness-ordered
//! greedy heuristic.
//!
//! Users are addressed by a mask where bit `k` is user `k`; the IRs come
//! first, then the ERs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{AllocationVector, ChannelRealization, DemandProfile};
use crate::powermin::{is_feasible, PowerMinOptions, SubsetSelection};
use crate::{Error, Result};

/// Largest user count the exhaustive engine accepts.
pub const EXHAUSTIVE_MAX_USERS: usize = 14;

/// Answers whether a user mask can be served.
pub trait FeasibilityOracle {
    fn num_ir(&self) -> usize;
    fn num_er(&self) -> usize;
    fn is_feasible(&mut self, mask: u64) -> Result<bool>;

    fn num_users(&self) -> usize {
        self.num_ir() + self.num_er()
    }
}

impl<O: FeasibilityOracle + ?Sized> FeasibilityOracle for &mut O {
    fn num_ir(&self) -> usize {
        (**self).num_ir()
    }
    fn num_er(&self) -> usize {
        (**self).num_er()
    }
    fn is_feasible(&mut self, mask: u64) -> Result<bool> {
        (**self).is_feasible(mask)
    }
}

/// Feasibility as `P_min(A) <= P` for one channel realization.
pub struct PowerOracle<'a> {
    pub channels: &'a ChannelRealization,
    pub demands: &'a DemandProfile,
    pub budget: f64,
    pub options: PowerMinOptions,
}

impl<'a> PowerOracle<'a> {
    pub fn new(
        channels: &'a ChannelRealization,
        demands: &'a DemandProfile,
        budget: f64,
        options: PowerMinOptions,
    ) -> Self {
        Self {
            channels,
            demands,
            budget,
            options,
        }
    }
}

impl FeasibilityOracle for PowerOracle<'_> {
    fn num_ir(&self) -> usize {
        self.channels.num_ir()
    }
    fn num_er(&self) -> usize {
        self.channels.num_er()
    }
    fn is_feasible(&mut self, mask: u64) -> Result<bool> {
        let subset = SubsetSelection::from_mask(mask, self.channels.num_ir());
        Ok(is_feasible(
            self.channels,
            self.demands,
            &subset,
            self.budget,
            &self.options,
        )?
        .0)
    }
}

/// A feasibility family given by its maximal sets; a mask is feasible when
/// it lies inside one of them.
#[derive(Clone, Debug)]
pub struct FamilyOracle {
    num_ir: usize,
    num_er: usize,
    maximal: Vec<u64>,
}

impl FamilyOracle {
    pub fn new(num_ir: usize, num_er: usize, maximal: Vec<u64>) -> Self {
        Self {
            num_ir,
            num_er,
            maximal,
        }
    }
}

impl FeasibilityOracle for FamilyOracle {
    fn num_ir(&self) -> usize {
        self.num_ir
    }
    fn num_er(&self) -> usize {
        self.num_er
    }
    fn is_feasible(&mut self, mask: u64) -> Result<bool> {
        Ok(mask == 0 || self.maximal.iter().any(|&m| mask & !m == 0))
    }
}

/// Caches answers of an inner oracle; repeated searches on one instance (as
/// in payment computation) then solve each subset once.
pub struct Memoized<O> {
    inner: O,
    cache: BTreeMap<u64, bool>,
    misses: usize,
}

impl<O: FeasibilityOracle> Memoized<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            cache: BTreeMap::new(),
            misses: 0,
        }
    }

    /// Number of queries forwarded to the inner oracle.
    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: FeasibilityOracle> FeasibilityOracle for Memoized<O> {
    fn num_ir(&self) -> usize {
        self.inner.num_ir()
    }
    fn num_er(&self) -> usize {
        self.inner.num_er()
    }
    fn is_feasible(&mut self, mask: u64) -> Result<bool> {
        if let Some(&f) = self.cache.get(&mask) {
            return Ok(f);
        }
        self.misses += 1;
        let f = self.inner.is_feasible(mask)?;
        self.cache.insert(mask, f);
        Ok(f)
    }
}

/// Masks excluded from the search: every subset of a recorded mask.
///
/// Records are kept as a small antichain and membership is a subset test
/// against each, instead of materializing all subsets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PruneSet {
    records: Vec<u64>,
}

impl PruneSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Excludes `mask` and all of its subsets.
    pub fn record(&mut self, mask: u64) {
        if self.contains(mask) {
            return;
        }
        self.records.retain(|&r| r & !mask != 0);
        self.records.push(mask);
    }

    pub fn contains(&self, mask: u64) -> bool {
        self.records.iter().any(|&r| mask & !r == 0)
    }

    pub fn records(&self) -> &[u64] {
        &self.records
    }
}

/// Returns `o` with the pair `(x, y)` of IR and ER masks recorded.
pub fn update_prune_set(mut o: PruneSet, x: u32, y: u32, num_ir: usize) -> PruneSet {
    o.record(u64::from(x) | (u64::from(y) << num_ir));
    o
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SearchStats {
    /// Feasibility queries issued.
    pub nodes_evaluated: usize,
    /// Nodes skipped without a query.
    pub nodes_pruned: usize,
    /// Seconds; zero without the `std` feature.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub allocation: AllocationVector,
    /// Sum of the virtual bids of the allocated users.
    pub welfare: f64,
    pub stats: SearchStats,
}

/// Branch-and-bound switches. The defaults are the fastest exact setting;
/// turning both off follows the textbook listing node for node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BnbOptions {
    /// Skip the solver on nodes whose welfare cannot beat the incumbent.
    pub skip_dominated: bool,
    /// Also prune subsets of feasible nodes that did not improve.
    pub prune_non_improving: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            skip_dominated: true,
            prune_non_improving: true,
        }
    }
}

struct Timer {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Timer {
    fn start() -> Self {
        Self {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(not(feature = "std"))]
        {
            0.0
        }
    }
}

fn check_bids(virtual_bids: &[f64], oracle: &impl FeasibilityOracle) -> Result<()> {
    let k = oracle.num_users();
    if virtual_bids.len() != k {
        return Err(Error::dims("virtual bids", k, virtual_bids.len()));
    }
    if k > 63 {
        return Err(Error::invalid("at most 63 users are supported"));
    }
    if virtual_bids.iter().any(|b| b.is_nan()) {
        return Err(Error::invalid("virtual bids must not be NaN"));
    }
    Ok(())
}

/// Users with a positive virtual bid, restricted to `allowed`.
fn candidates(virtual_bids: &[f64], allowed: u64) -> u64 {
    virtual_bids
        .iter()
        .enumerate()
        .filter(|(k, b)| **b > 0.0 && allowed >> k & 1 == 1)
        .fold(0, |m, (k, _)| m | 1 << k)
}

/// Welfare of a mask, summed in user order so equal sets give equal sums.
pub fn mask_welfare(virtual_bids: &[f64], mask: u64) -> f64 {
    virtual_bids
        .iter()
        .enumerate()
        .filter(|(k, _)| mask >> k & 1 == 1)
        .map(|(_, b)| b)
        .sum()
}

/// Decimal index of a mask with the first IR as the most significant bit.
pub fn mask_decimal(mask: u64, num_users: usize) -> u64 {
    (0..num_users).fold(0, |acc, k| (acc << 1) | (mask >> k & 1))
}

fn tie_eps(a: f64, b: f64) -> f64 {
    1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Whether `(w, mask)` beats the incumbent: higher welfare, or equal welfare
/// with a smaller decimal index.
fn improves(w: f64, mask: u64, best_w: f64, best_mask: u64, k: usize) -> bool {
    let eps = tie_eps(w, best_w);
    if w > best_w + eps {
        return true;
    }
    (w - best_w).abs() <= eps
        && best_mask != 0
        && mask_decimal(mask, k) < mask_decimal(best_mask, k)
}

/// All size-`size` submasks of `set`, in lexicographic order of their
/// member indices.
fn combinations(set: u64, size: usize) -> Vec<u64> {
    let members: Vec<usize> = (0..64).filter(|&b| set >> b & 1 == 1).collect();
    let mut out = Vec::new();
    if size > members.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.iter().fold(0u64, |m, &i| m | 1 << members[i]));
        let Some(pos) = (0..size).rev().find(|&p| idx[p] < members.len() - size + p) else {
            break;
        };
        idx[pos] += 1;
        for q in pos + 1..size {
            idx[q] = idx[q - 1] + 1;
        }
    }
    out
}

fn outcome(
    mask: u64,
    welfare: f64,
    stats: SearchStats,
    oracle: &impl FeasibilityOracle,
) -> SearchOutcome {
    SearchOutcome {
        allocation: AllocationVector::from_mask(mask, oracle.num_ir(), oracle.num_er()),
        welfare: if mask == 0 { 0.0 } else { welfare },
        stats,
    }
}

/// Evaluates every nonempty subset of the positive-bid users and returns the
/// welfare maximizer (ties to the smallest decimal index), or the empty
/// allocation when no subset with positive welfare is feasible.
pub fn exhaustive_allocate<O: FeasibilityOracle>(
    virtual_bids: &[f64],
    oracle: &mut O,
) -> Result<SearchOutcome> {
    exhaustive_within(virtual_bids, u64::MAX, oracle)
}

/// [`exhaustive_allocate`] restricted to the users in `allowed`.
pub fn exhaustive_within<O: FeasibilityOracle>(
    virtual_bids: &[f64],
    allowed: u64,
    oracle: &mut O,
) -> Result<SearchOutcome> {
    check_bids(virtual_bids, oracle)?;
    let k = oracle.num_users();
    if k > EXHAUSTIVE_MAX_USERS {
        return Err(Error::invalid(alloc::format!(
            "exhaustive search is limited to {EXHAUSTIVE_MAX_USERS} users, got {k}"
        )));
    }
    let timer = Timer::start();
    let cand = candidates(virtual_bids, allowed);
    let mut stats = SearchStats::default();
    let (mut best, mut best_w) = (0u64, 0.0);
    // enumerate submasks of cand
    let mut sub = cand;
    while sub != 0 {
        stats.nodes_evaluated += 1;
        if oracle.is_feasible(sub)? {
            let w = mask_welfare(virtual_bids, sub);
            if improves(w, sub, best_w, best, k) {
                best = sub;
                best_w = w;
            }
        }
        sub = (sub - 1) & cand;
    }
    stats.wall_time = timer.seconds();
    Ok(outcome(best, best_w, stats, oracle))
}

/// Exclusion-first branch and bound: IR subsets from largest to smallest,
/// and within each, ER subsets from largest to smallest. Subsets of a
/// feasible node are never evaluated. Returns the same allocation as
/// [`exhaustive_allocate`].
pub fn bnb_allocate<O: FeasibilityOracle>(
    virtual_bids: &[f64],
    oracle: &mut O,
) -> Result<SearchOutcome> {
    bnb_within(virtual_bids, u64::MAX, oracle, BnbOptions::default())
}

/// [`bnb_allocate`] restricted to the users in `allowed`.
pub fn bnb_within<O: FeasibilityOracle>(
    virtual_bids: &[f64],
    allowed: u64,
    oracle: &mut O,
    opts: BnbOptions,
) -> Result<SearchOutcome> {
    check_bids(virtual_bids, oracle)?;
    let timer = Timer::start();
    let k = oracle.num_users();
    let ni = oracle.num_ir();
    let ir_all = (1u64 << ni) - 1;
    let cand = candidates(virtual_bids, allowed);
    let (ir_cand, er_cand) = (cand & ir_all, cand & !ir_all);
    let mut pruned = PruneSet::new();
    let mut stats = SearchStats::default();
    let (mut best, mut best_w) = (0u64, 0.0);
    let er_levels: Vec<Vec<u64>> = (0..=er_cand.count_ones() as usize)
        .rev()
        .map(|n| combinations(er_cand, n))
        .collect();
    for m in (0..=ir_cand.count_ones() as usize).rev() {
        for x in combinations(ir_cand, m) {
            for level in &er_levels {
                for &y in level {
                    let node = x | y;
                    if node == 0 {
                        continue;
                    }
                    if pruned.contains(node) {
                        stats.nodes_pruned += 1;
                        continue;
                    }
                    let w = mask_welfare(virtual_bids, node);
                    if opts.skip_dominated && w < best_w - tie_eps(w, best_w) {
                        stats.nodes_pruned += 1;
                        continue;
                    }
                    stats.nodes_evaluated += 1;
                    if !oracle.is_feasible(node)? {
                        continue;
                    }
                    if improves(w, node, best_w, best, k) {
                        best = node;
                        best_w = w;
                        pruned.record(node);
                    } else if opts.prune_non_improving {
                        pruned.record(node);
                    }
                }
            }
        }
    }
    stats.wall_time = timer.seconds();
    Ok(outcome(best, best_w, stats, oracle))
}

/// Goodness factors `||h_i||^2 b'_i / gamma_i` for IRs and
/// `||g_j||^2 b'_j / q_j` for ERs.
pub fn goodness_factors(
    channels: &ChannelRealization,
    demands: &DemandProfile,
    virtual_bids: &[f64],
) -> Result<Vec<f64>> {
    let (ni, nj) = (channels.num_ir(), channels.num_er());
    if virtual_bids.len() != ni + nj {
        return Err(Error::dims("virtual bids", ni + nj, virtual_bids.len()));
    }
    if demands.gamma.len() != ni || demands.q.len() != nj {
        return Err(Error::dims(
            "demands",
            ni + nj,
            demands.gamma.len() + demands.q.len(),
        ));
    }
    Ok((0..ni)
        .map(|i| channels.ir_gain(i) * virtual_bids[i] / demands.gamma[i])
        .chain((0..nj).map(|j| channels.er_gain(j) * virtual_bids[ni + j] / demands.q[j]))
        .collect())
}

/// Starts from every positive-bid user and drops the least-good member
/// until the remaining set is feasible.
pub fn heuristic_allocate<O: FeasibilityOracle>(
    virtual_bids: &[f64],
    goodness: &[f64],
    oracle: &mut O,
) -> Result<SearchOutcome> {
    check_bids(virtual_bids, oracle)?;
    if goodness.len() != virtual_bids.len() {
        return Err(Error::dims(
            "goodness factors",
            virtual_bids.len(),
            goodness.len(),
        ));
    }
    let timer = Timer::start();
    let mut stats = SearchStats::default();
    let mut set = candidates(virtual_bids, u64::MAX);
    while set != 0 {
        stats.nodes_evaluated += 1;
        if oracle.is_feasible(set)? {
            break;
        }
        let worst = (0..virtual_bids.len())
            .filter(|&k| set >> k & 1 == 1)
            .min_by(|&a, &b| goodness[a].total_cmp(&goodness[b]))
            .expect("nonempty set");
        set &= !(1 << worst);
    }
    stats.wall_time = timer.seconds();
    let w = mask_welfare(virtual_bids, set);
    Ok(outcome(set, w, stats, oracle))
}
