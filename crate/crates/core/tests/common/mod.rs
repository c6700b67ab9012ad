#![allow(dead_code)]

use swipt_core::dataset::{sample_scenario, SamplingConfig, ScenarioSample};
use swipt_core::model::ScenarioConfig;

pub fn sampling(antennas: usize, num_ir: usize, num_er: usize, seed: u64) -> SamplingConfig {
    let sc = ScenarioConfig::new(antennas, num_ir, num_er, 3.0).unwrap();
    let mut cfg = SamplingConfig::new(sc);
    cfg.master_seed = seed;
    cfg
}

pub fn instances(
    antennas: usize,
    num_ir: usize,
    num_er: usize,
    seed: u64,
    n: usize,
) -> Vec<ScenarioSample> {
    let cfg = sampling(antennas, num_ir, num_er, seed);
    (0..n as u64)
        .map(|s| sample_scenario(&cfg, s).unwrap())
        .collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
