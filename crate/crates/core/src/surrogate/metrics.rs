use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Evaluation summary of predicted allocations against labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub exact_accuracy: f64,
    pub binary_accuracy: f64,
    /// Mean squared error of the probabilities before thresholding.
    pub mse: f64,
    /// Row `t`, column `p`: share of samples with true class `t` predicted
    /// as `p`. Classes are decimal label indices; rows of absent classes are
    /// zero.
    pub confusion: Vec<Vec<f64>>,
    pub samples: usize,
}

/// Threshold rule: probabilities of at least one half map to 1.
pub fn threshold(p: f64) -> bool {
    p >= 0.5
}

/// Decimal class of a bit row, first bit most significant.
pub fn decimal(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

fn check(probs: &[f64], targets: &[f64], k: usize) -> Result<usize> {
    if k == 0 || probs.is_empty() || !probs.len().is_multiple_of(k) {
        return Err(Error::invalid(
            "predictions must be nonempty rows of K outputs",
        ));
    }
    if probs.len() != targets.len() {
        return Err(Error::dims("targets", probs.len(), targets.len()));
    }
    Ok(probs.len() / k)
}

/// Share of rows whose thresholded bits all match.
pub fn exact_accuracy(probs: &[f64], targets: &[f64], k: usize) -> Result<f64> {
    let n = check(probs, targets, k)?;
    let hits = probs
        .chunks(k)
        .zip(targets.chunks(k))
        .filter(|(p, t)| p.iter().zip(*t).all(|(&p, &t)| threshold(p) == (t >= 0.5)))
        .count();
    Ok(hits as f64 / n as f64)
}

/// Share of individual bits that match.
pub fn binary_accuracy(probs: &[f64], targets: &[f64], k: usize) -> Result<f64> {
    check(probs, targets, k)?;
    let hits = probs
        .iter()
        .zip(targets)
        .filter(|&(&p, &t)| threshold(p) == (t >= 0.5))
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

pub fn evaluate(probs: &[f64], targets: &[f64], k: usize) -> Result<Metrics> {
    let n = check(probs, targets, k)?;
    if k > 16 {
        return Err(Error::invalid("confusion matrix limited to 16 outputs"));
    }
    let mse = probs
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / probs.len() as f64;
    let classes = 1usize << k;
    let mut confusion = vec![vec![0.0; classes]; classes];
    for (p, t) in probs.chunks(k).zip(targets.chunks(k)) {
        let pb: Vec<bool> = p.iter().map(|&v| threshold(v)).collect();
        let tb: Vec<bool> = t.iter().map(|&v| v >= 0.5).collect();
        confusion[decimal(&tb)][decimal(&pb)] += 1.0;
    }
    for row in &mut confusion {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    Ok(Metrics {
        exact_accuracy: exact_accuracy(probs, targets, k)?,
        binary_accuracy: binary_accuracy(probs, targets, k)?,
        mse,
        confusion,
        samples: n,
    })
}
