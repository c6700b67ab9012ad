//! Timing and accuracy benchmark of the allocation engines on a shared set
//! of random instances.
//!
//! Every instance is labeled by branch and bound over the semidefinite
//! relaxation; the duality-based branch and bound (IR-only networks), the
//! goodness heuristic and the network are timed on the same instances and
//! scored against that label. Except for the relaxation-based search, every
//! method solves its subsets with uplink-downlink duality (the relaxation
//! for subsets with ERs) and without the bound shortcuts, and the network's
//! time includes the one solve that turns its prediction into beamformers.

use std::time::Instant;

use serde::Serialize;
use swipt_core::dataset::{sample_scenario, SamplingConfig};
use swipt_core::mechanism::virtual_bids;
use swipt_core::model::ScenarioConfig;
use swipt_core::powermin::{solve_powermin, IrMethod, PowerMinOptions, SubsetSelection};
use swipt_core::search::{
    bnb_allocate, goodness_factors, heuristic_allocate, PowerOracle, SearchOutcome,
};
use swipt_core::surrogate::{Mlp, PreprocessConfig, Scaling, Surrogate};

use crate::Result;

pub const BENCH_SCHEMA: &str = "swipt-bench";
pub const BENCH_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BnbSdr,
    BnbUdd,
    Heuristic,
    Dnn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::BnbSdr => "bnb-sdr",
            Self::BnbUdd => "bnb-udd",
            Self::Heuristic => "heuristic",
            Self::Dnn => "dnn",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sampling: SamplingConfig,
    pub repetitions: usize,
    pub warmup: usize,
    pub density_buckets: usize,
    /// Index of the first instance; instance `n` uses sample seed
    /// `first_seed + n`.
    pub first_seed: u64,
}

/// Summary of one method on one network.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRow {
    pub schema: &'static str,
    pub version: u32,
    pub method: Method,
    pub antennas: usize,
    pub num_ir: usize,
    pub num_er: usize,
    pub power_budget: f64,
    pub master_seed: u64,
    pub first_seed: u64,
    pub instances: usize,
    pub mean_seconds: f64,
    pub median_seconds: f64,
    /// Network forward pass alone, without the final power minimization.
    pub mean_inference_seconds: Option<f64>,
    /// Mean feasibility queries per instance (0 for the network).
    pub mean_nodes: f64,
    /// Agreement with the relaxation-based branch-and-bound label.
    pub exact_accuracy: f64,
    pub binary_accuracy: f64,
    /// Whether the network was a trained checkpoint.
    pub trained_model: Option<bool>,
}

/// Accuracy over instances whose label has a given share of served users.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityRow {
    pub schema: &'static str,
    pub version: u32,
    pub method: Method,
    /// Inclusive lower and (for the last bucket inclusive) upper share.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub exact_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BenchReport {
    pub methods: Vec<MethodRow>,
    pub density: Vec<DensityRow>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Bucket of a label density in `[0, 1]` among `n` equal buckets.
pub fn density_bucket(density: f64, n: usize) -> usize {
    ((density * n as f64) as usize).min(n - 1)
}

struct Trace {
    seconds: Vec<f64>,
    nodes: Vec<usize>,
    masks: Vec<u64>,
    inference: Vec<f64>,
}

impl Trace {
    fn new() -> Self {
        Self {
            seconds: Vec::new(),
            nodes: Vec::new(),
            masks: Vec::new(),
            inference: Vec::new(),
        }
    }

    fn push(&mut self, seconds: f64, out: &SearchOutcome) {
        self.seconds.push(seconds);
        self.nodes.push(out.stats.nodes_evaluated);
        self.masks.push(out.allocation.mask());
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let t = Instant::now();
    let out = f();
    (t.elapsed().as_secs_f64(), out)
}

/// Untrained network with identity normalization, for timing only.
pub fn untrained_surrogate(scenario: &ScenarioConfig, seed: u64) -> Result<Surrogate> {
    let preprocess = PreprocessConfig::new(
        scenario.num_ir,
        scenario.num_er,
        scenario.antennas,
        Scaling::Log,
    );
    let model = Mlp::surrogate(preprocess.dim(), preprocess.num_users(), seed)?;
    Ok(Surrogate::new(model, preprocess)?)
}

/// Runs every method on `repetitions` instances after `warmup` untimed
/// ones. Without `surrogate` the network is timed untrained.
pub fn run_bench(cfg: &BenchConfig, surrogate: Option<&Surrogate>) -> Result<BenchReport> {
    let sc = &cfg.sampling.scenario;
    let fallback;
    let (net, trained) = match surrogate {
        Some(s) => (s, true),
        None => {
            fallback = untrained_surrogate(sc, cfg.first_seed)?;
            (&fallback, false)
        }
    };
    let models = cfg.sampling.models();
    let sdr = PowerMinOptions {
        ir_method: IrMethod::Sdr,
        bounds: false,
        ..Default::default()
    };
    let udd = PowerMinOptions {
        ir_method: IrMethod::Udd,
        bounds: false,
        ..Default::default()
    };
    let with_udd = sc.num_er == 0;

    let mut traces: Vec<(Method, Trace)> = [
        Method::BnbSdr,
        Method::BnbUdd,
        Method::Heuristic,
        Method::Dnn,
    ]
    .into_iter()
    .filter(|&m| m != Method::BnbUdd || with_udd)
    .map(|m| (m, Trace::new()))
    .collect();
    let instances = (0..cfg.warmup + cfg.repetitions)
        .map(|n| {
            let s = sample_scenario(&cfg.sampling, cfg.first_seed + n as u64)?;
            let vb = virtual_bids(&s.bids.to_vec(), &models)?;
            Ok((s, vb))
        })
        .collect::<Result<Vec<_>>>()?;
    let budget = sc.power_budget;
    let mut labels = Vec::new();
    // one method at a time over every instance, so each runs with its own
    // working set in cache
    for (method, trace) in &mut traces {
        for (n, (s, vb)) in instances.iter().enumerate() {
            let vb = vb.as_slice();
            let record = n >= cfg.warmup;
            let (secs, out) = match method {
                Method::BnbSdr | Method::BnbUdd => {
                    let opts = if *method == Method::BnbSdr { sdr } else { udd };
                    let mut oracle = PowerOracle::new(&s.channels, &s.demands, budget, opts);
                    timed(|| bnb_allocate(vb, &mut oracle))
                }
                Method::Heuristic => {
                    let mut oracle = PowerOracle::new(&s.channels, &s.demands, budget, udd);
                    timed(|| {
                        let good = goodness_factors(&s.channels, &s.demands, vb)?;
                        heuristic_allocate(vb, &good, &mut oracle)
                    })
                }
                Method::Dnn => {
                    // prediction plus the one power minimization that
                    // yields the beamformers
                    let mut infer = 0.0;
                    let (secs, a) = timed(|| {
                        let (t, a) = timed(|| net.predict_allocation(&s.channels, &s.demands, vb));
                        infer = t;
                        let a = a?;
                        let subset = SubsetSelection::from_allocation(&a);
                        solve_powermin(&s.channels, &s.demands, &subset, &udd)?;
                        Ok::<_, swipt_core::Error>(a)
                    });
                    let allocation = a?;
                    if record {
                        trace.inference.push(infer);
                    }
                    let welfare = swipt_core::search::mask_welfare(vb, allocation.mask());
                    (
                        secs,
                        Ok(SearchOutcome {
                            allocation,
                            welfare,
                            stats: Default::default(),
                        }),
                    )
                }
            };
            let out = out?;
            if record {
                if *method == Method::BnbSdr {
                    labels.push(out.allocation.clone());
                }
                trace.push(secs, &out);
            }
        }
    }

    let k = sc.num_users();
    let mut report = BenchReport::default();
    for (method, trace) in &mut traces {
        let n = trace.seconds.len();
        let exact = labels
            .iter()
            .zip(&trace.masks)
            .filter(|(l, m)| l.mask() == **m)
            .count();
        let wrong_bits: u32 = labels
            .iter()
            .zip(&trace.masks)
            .map(|(l, m)| (l.mask() ^ m).count_ones())
            .sum();
        let mean = trace.seconds.iter().sum::<f64>() / n.max(1) as f64;
        report.methods.push(MethodRow {
            schema: BENCH_SCHEMA,
            version: BENCH_VERSION,
            method: *method,
            antennas: sc.antennas,
            num_ir: sc.num_ir,
            num_er: sc.num_er,
            power_budget: sc.power_budget,
            master_seed: cfg.sampling.master_seed,
            first_seed: cfg.first_seed + cfg.warmup as u64,
            instances: n,
            mean_seconds: mean,
            median_seconds: median(&mut trace.seconds),
            mean_inference_seconds: (!trace.inference.is_empty())
                .then(|| trace.inference.iter().sum::<f64>() / trace.inference.len() as f64),
            mean_nodes: trace.nodes.iter().sum::<usize>() as f64 / n.max(1) as f64,
            exact_accuracy: exact as f64 / n.max(1) as f64,
            binary_accuracy: 1.0 - wrong_bits as f64 / (n * k).max(1) as f64,
            trained_model: (*method == Method::Dnn).then_some(trained),
        });
        if matches!(method, Method::Heuristic | Method::Dnn) {
            let nb = cfg.density_buckets.max(1);
            let mut count = vec![0usize; nb];
            let mut hits = vec![0usize; nb];
            for (l, m) in labels.iter().zip(&trace.masks) {
                let b = density_bucket(l.count_served() as f64 / k as f64, nb);
                count[b] += 1;
                hits[b] += (l.mask() == *m) as usize;
            }
            for b in 0..nb {
                report.density.push(DensityRow {
                    schema: BENCH_SCHEMA,
                    version: BENCH_VERSION,
                    method: *method,
                    lo: b as f64 / nb as f64,
                    hi: (b + 1) as f64 / nb as f64,
                    count: count[b],
                    exact_accuracy: (count[b] > 0).then(|| hits[b] as f64 / count[b] as f64),
                });
            }
        }
    }
    Ok(report)
}

impl BenchReport {
    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>6} {:>4} {:>4} {:>6} {:>12} {:>12} {:>8} {:>7} {:>7}\n",
            "method", "M", "I", "J", "n", "mean [s]", "median [s]", "nodes", "exact", "binary"
        );
        for r in &self.methods {
            out +=
                &format!(
                "{:<10} {:>6} {:>4} {:>4} {:>6} {:>12.3e} {:>12.3e} {:>8.1} {:>7.3} {:>7.3}{}\n",
                r.method.name(),
                r.antennas,
                r.num_ir,
                r.num_er,
                r.instances,
                r.mean_seconds,
                r.median_seconds,
                r.mean_nodes,
                r.exact_accuracy,
                r.binary_accuracy,
                if r.trained_model == Some(false) { "  (untrained)" } else { "" }
            );
            if let Some(t) = r.mean_inference_seconds {
                out += &format!("{:<10} {:>36.3e}  (forward pass only)\n", "", t);
            }
        }
        if !self.density.is_empty() {
            out += "\nexact accuracy by share of served users in the label\n";
            for r in &self.density {
                out += &format!(
                    "{:<10} [{:.2}, {:.2}{} {:>6} {}\n",
                    r.method.name(),
                    r.lo,
                    r.hi,
                    if r.hi >= 1.0 { "]" } else { ")" },
                    r.count,
                    r.exact_accuracy.map_or("-".into(), |a| format!("{a:.3}"))
                );
            }
        }
        out
    }

    /// One JSON object per line, method rows first.
    pub fn json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.methods {
            out += &serde_json::to_string(r).expect("row serializes");
            out.push('\n');
        }
        for r in &self.density {
            out += &serde_json::to_string(r).expect("row serializes");
            out.push('\n');
        }
        out
    }
}
