use alloc::vec::Vec;

use crate::math::{atan2, sqrt};
use crate::model::{AllocationVector, ChannelRealization, DemandProfile};
use crate::search::goodness_factors;
use crate::{Error, Result};

/// Per-block transform applied before normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scaling {
    /// Raw values.
    #[default]
    Linear,
    /// Demands and channel magnitudes in decibels and goodness factors as
    /// signed logarithms, which tames their many-decade ranges.
    Log,
}

/// Feature layout and normalization statistics.
///
/// Blocks, in order: IR goodness, SINR targets, IR channel magnitudes, IR
/// channel phases, ER goodness, harvesting demands, ER channel magnitudes,
/// ER channel phases. Within each group users are sorted by ascending
/// goodness and carry all of their columns with them.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub num_ir: usize,
    pub num_er: usize,
    pub antennas: usize,
    pub scaling: Scaling,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
}

/// Smallest standard deviation used for normalization.
pub const MIN_STD: f64 = 1e-8;

/// Sorted position to original user: `ir[p]` is the IR at position `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortPermutation {
    pub ir: Vec<usize>,
    pub er: Vec<usize>,
}

impl SortPermutation {
    pub fn identity(num_ir: usize, num_er: usize) -> Self {
        Self {
            ir: (0..num_ir).collect(),
            er: (0..num_er).collect(),
        }
    }

    /// Reorders per-user values from original to sorted order.
    pub fn sort<T: Copy>(&self, values: &[T]) -> Vec<T> {
        let ni = self.ir.len();
        self.ir
            .iter()
            .map(|&i| values[i])
            .chain(self.er.iter().map(|&j| values[ni + j]))
            .collect()
    }

    /// Inverse of [`SortPermutation::sort`].
    pub fn unsort<T: Copy>(&self, values: &[T]) -> Vec<T> {
        let ni = self.ir.len();
        let mut out = values.to_vec();
        for (p, &i) in self.ir.iter().enumerate() {
            out[i] = values[p];
        }
        for (p, &j) in self.er.iter().enumerate() {
            out[ni + j] = values[ni + p];
        }
        out
    }
}

impl PreprocessConfig {
    /// Unfitted config (zero mean, unit deviation).
    pub fn new(num_ir: usize, num_er: usize, antennas: usize, scaling: Scaling) -> Self {
        let dim = feature_dim(num_ir, num_er, antennas);
        Self {
            num_ir,
            num_er,
            antennas,
            scaling,
            norm_mean: alloc::vec![0.0; dim],
            norm_std: alloc::vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        feature_dim(self.num_ir, self.num_er, self.antennas)
    }

    pub fn num_users(&self) -> usize {
        self.num_ir + self.num_er
    }

    /// Sorted, flattened, transformed but unnormalized features.
    pub fn raw_features(
        &self,
        channels: &ChannelRealization,
        demands: &DemandProfile,
        virtual_bids: &[f64],
    ) -> Result<(Vec<f64>, SortPermutation)> {
        if channels.num_ir() != self.num_ir
            || channels.num_er() != self.num_er
            || channels.antennas() != self.antennas
        {
            return Err(Error::invalid(alloc::format!(
                "sample has I={}, J={}, M={} but the layout expects I={}, J={}, M={}",
                channels.num_ir(),
                channels.num_er(),
                channels.antennas(),
                self.num_ir,
                self.num_er,
                self.antennas
            )));
        }
        let good = goodness_factors(channels, demands, virtual_bids)?;
        let (ni, nj) = (self.num_ir, self.num_er);
        let order = |offset: usize, n: usize| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| good[offset + a].total_cmp(&good[offset + b]));
            idx
        };
        let perm = SortPermutation {
            ir: order(0, ni),
            er: order(ni, nj),
        };
        let log = self.scaling == Scaling::Log;
        let goodness = |g: f64| if log { signed_log(g) } else { g };
        let level = |v: f64| if log { 10.0 * crate::math::log10(v) } else { v };
        let mut x = Vec::with_capacity(self.dim());
        x.extend(perm.ir.iter().map(|&i| goodness(good[i])));
        x.extend(perm.ir.iter().map(|&i| level(demands.gamma[i])));
        for &i in &perm.ir {
            x.extend(channels.h(i).iter().map(|c| level(sqrt(c.norm_sqr()))));
        }
        for &i in &perm.ir {
            x.extend(channels.h(i).iter().map(|c| atan2(c.im, c.re)));
        }
        x.extend(perm.er.iter().map(|&j| goodness(good[ni + j])));
        x.extend(perm.er.iter().map(|&j| level(demands.q[j])));
        for &j in &perm.er {
            x.extend(channels.g(j).iter().map(|c| level(sqrt(c.norm_sqr()))));
        }
        for &j in &perm.er {
            x.extend(channels.g(j).iter().map(|c| atan2(c.im, c.re)));
        }
        Ok((x, perm))
    }

    /// Fits per-feature mean and deviation on rows of raw features.
    pub fn fit(&mut self, rows: &[Vec<f64>]) -> Result<()> {
        let d = self.dim();
        if rows.is_empty() {
            return Err(Error::invalid("cannot fit normalization on no samples"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::dims("feature row", d, r.len()));
        }
        let n = rows.len() as f64;
        let mut mean = alloc::vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        self.norm_std = var.iter().map(|s| sqrt(s / n).max(MIN_STD)).collect();
        self.norm_mean = mean;
        Ok(())
    }

    pub fn normalize(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.norm_mean).zip(&self.norm_std) {
            *v = (*v - m) / s;
        }
    }

    /// Normalized features and the sorting permutation.
    pub fn preprocess(
        &self,
        channels: &ChannelRealization,
        demands: &DemandProfile,
        virtual_bids: &[f64],
    ) -> Result<(Vec<f64>, SortPermutation)> {
        let (mut x, perm) = self.raw_features(channels, demands, virtual_bids)?;
        self.normalize(&mut x);
        Ok((x, perm))
    }

    /// Label bits in sorted order, as network targets.
    pub fn sorted_targets(&self, label: &AllocationVector, perm: &SortPermutation) -> Vec<f64> {
        let bits: Vec<f64> = label
            .bits()
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        perm.sort(&bits)
    }
}

/// `I + I + M I + M I + J + J + M J + M J`.
pub fn feature_dim(num_ir: usize, num_er: usize, antennas: usize) -> usize {
    2 * (num_ir + num_er) * (1 + antennas)
}

fn signed_log(x: f64) -> f64 {
    // goodness factors are tiny (channel gains of 1e-8..1e-4); shift the
    // scale so the log keeps resolution there
    let s = x * 1e10;
    if s >= 0.0 {
        crate::math::ln(1.0 + s)
    } else {
        -crate::math::ln(1.0 - s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use num_complex::Complex64;

    fn sample(ni: usize, nj: usize, m: usize) -> (ChannelRealization, DemandProfile) {
        let col = |s: f64| {
            (0..m)
                .map(|k| Complex64::new(s + k as f64, s - k as f64))
                .collect()
        };
        let h = (0..ni).map(|i| col(1.0 + i as f64)).collect();
        let g = (0..nj).map(|j| col(0.5 + j as f64)).collect();
        let ch = ChannelRealization::new(m, h, g, vec![1e-3; ni]).unwrap();
        let dm = DemandProfile::new(vec![2.0; ni], vec![0.1; nj]).unwrap();
        (ch, dm)
    }

    #[test]
    fn table_dimension() {
        assert_eq!(feature_dim(4, 2, 8), 108);
        assert_eq!(PreprocessConfig::new(4, 2, 8, Scaling::Linear).dim(), 108);
    }

    #[test]
    fn presorted_sample_has_identity_permutation() {
        let (ch, dm) = sample(3, 2, 2);
        let cfg = PreprocessConfig::new(3, 2, 2, Scaling::Linear);
        // gains grow with index, so equal bids are already ascending
        let (_, perm) = cfg.raw_features(&ch, &dm, &[1.0; 5]).unwrap();
        assert_eq!(perm, SortPermutation::identity(3, 2));
        let v = [1, 2, 3, 4, 5];
        assert_eq!(perm.unsort(&perm.sort(&v)), v);
    }

    #[test]
    fn sorting_moves_whole_user_blocks() {
        let (ch, dm) = sample(2, 0, 2);
        let cfg = PreprocessConfig::new(2, 0, 2, Scaling::Linear);
        let (x, perm) = cfg.raw_features(&ch, &dm, &[1.0, -1.0]).unwrap();
        assert_eq!(perm.ir, vec![1, 0]);
        // first magnitude column now belongs to IR 1
        assert!((x[4] - ch.h(1)[0].norm()).abs() < 1e-15);
        assert!((x[6] - ch.h(0)[0].norm()).abs() < 1e-15);
        let p = perm.sort(&[10, 20]);
        assert_eq!(p, vec![20, 10]);
        assert_eq!(perm.unsort(&p), vec![10, 20]);
    }

    #[test]
    fn mean_maps_to_zero() {
        let mut cfg = PreprocessConfig::new(1, 0, 1, Scaling::Linear);
        cfg.fit(&[vec![1.0, 2.0, 3.0, 0.5], vec![3.0, 2.0, 5.0, 1.5]])
            .unwrap();
        let mut x = vec![2.0, 2.0, 4.0, 1.0];
        cfg.normalize(&mut x);
        assert!(x.iter().all(|v| v.abs() < 1e-12));
        // constant column keeps the floor deviation
        assert_eq!(cfg.norm_std[1], MIN_STD);
    }

    #[test]
    fn mismatched_layout_is_rejected() {
        let (ch, dm) = sample(2, 1, 2);
        let cfg = PreprocessConfig::new(3, 0, 2, Scaling::Linear);
        assert!(cfg.raw_features(&ch, &dm, &[1.0; 3]).is_err());
    }
}
