//! Subcommand implementations. Each writes its human-readable output to the
//! given writer so the binary and the tests share one code path.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use swipt_core::dataset::{generate, sample_scenario, split_dataset, TrainingSample};
use swipt_core::model::BidProfile;
use swipt_core::powermin::PowerMinOptions;
use swipt_core::surrogate::{fit_surrogate, EpochRecord, History, Metrics, Surrogate};

use crate::auction::{run_auction, AuctionReport, Engine, Round};
use crate::bench::{run_bench, BenchConfig};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::dataset_io::{read_dataset, write_dataset, DatasetHeader};
use crate::{Error, Result};

/// Attempts per sample before generation gives up.
const MAX_ATTEMPTS: u64 = 5;

fn out_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_generate(
    cfg: &RunConfig,
    count: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    w: &mut impl Write,
) -> Result<()> {
    let mut sampling = cfg.sampling_config()?;
    if let Some(s) = seed {
        sampling.master_seed = s;
    }
    let count = count.unwrap_or(cfg.sampling.count);
    let (samples, failures) = generate(
        &sampling,
        0,
        count,
        &PowerMinOptions::default(),
        MAX_ATTEMPTS,
    )?;
    let header = DatasetHeader::new(&sampling.scenario, sampling.master_seed);
    write_dataset(out, &header, &samples)?;

    let mut histogram = BTreeMap::new();
    for s in &samples {
        *histogram.entry(s.label.count_served()).or_insert(0usize) += 1;
    }
    let mean_p =
        samples.iter().map(|s| s.p_min_of_label).sum::<f64>() / samples.len().max(1) as f64;
    let sc = &sampling.scenario;
    writeln!(
        w,
        "wrote {} samples (M={}, I={}, J={}, P={} W, master seed {}) to {}",
        samples.len(),
        sc.antennas,
        sc.num_ir,
        sc.num_er,
        sc.power_budget,
        sampling.master_seed,
        out.display()
    )
    .map_err(out_err)?;
    writeln!(w, "served users per label:").map_err(out_err)?;
    for (served, n) in &histogram {
        writeln!(w, "  {served:>2}: {n}").map_err(out_err)?;
    }
    writeln!(w, "mean p_min of labels: {mean_p:.6e} W").map_err(out_err)?;
    for (seed, reason) in &failures {
        writeln!(w, "resampled seed {seed}: {reason}").map_err(out_err)?;
    }
    Ok(())
}

/// Which part of a dataset a command works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    All,
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all" => Ok(Self::All),
            "train" => Ok(Self::Train),
            "validation" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            _ => Err(format!(
                "unknown split {s:?} (expected all, train, validation or test)"
            )),
        }
    }
}

fn pick_split(
    samples: Vec<TrainingSample>,
    split: Split,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if split == Split::All {
        return Ok(samples);
    }
    let (train, val, test) = split_dataset(&samples, seed)?;
    Ok(match split {
        Split::Train => train,
        Split::Validation => val,
        _ => test,
    })
}

/// History as CSV, one row per epoch.
pub fn history_csv(history: &History) -> String {
    let mut out =
        String::from("epoch,train_loss,train_exact_accuracy,val_loss,val_exact_accuracy\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in &history.epochs {
        out += &format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.train_loss,
            r.train_accuracy,
            opt(r.val_loss),
            opt(r.val_accuracy)
        );
    }
    out
}

/// Default history path next to a checkpoint.
pub fn history_path(model_out: &Path) -> PathBuf {
    model_out.with_extension("history.csv")
}

fn metrics_line(label: &str, m: &Metrics) -> String {
    format!(
        "{label:<24} {:>7} {:>8.4} {:>8.4} {:>9.5}",
        m.samples, m.exact_accuracy, m.binary_accuracy, m.mse
    )
}

const METRICS_HEADER: &str = "run                      samples    exact   binary       mse";

/// Trains on the train split, validates on the validation split and
/// reports the test split.
pub fn cmd_train(
    cfg: &RunConfig,
    dataset: &Path,
    seed: Option<u64>,
    out: &Path,
    history_out: Option<&Path>,
    w: &mut impl Write,
) -> Result<(Surrogate, History)> {
    let (_, samples) = read_dataset(dataset)?;
    let mut tc = cfg.train_config();
    if let Some(s) = seed {
        tc.seed = s;
    }
    let (train, val, test) = split_dataset(&samples, cfg.training.split_seed)?;
    writeln!(
        w,
        "training on {} / validating on {} / testing on {} samples; {:?}",
        train.len(),
        val.len(),
        test.len(),
        tc
    )
    .map_err(out_err)?;
    let mut io_error = None;
    let (surrogate, history) = fit_surrogate(
        &train,
        &val,
        cfg.training.scaling.into(),
        &tc,
        |r: &EpochRecord| {
            let line = writeln!(
                w,
                "epoch {:>3}: loss {:.5} acc {:.4} | val loss {:.5} acc {:.4}",
                r.epoch,
                r.train_loss,
                r.train_accuracy,
                r.val_loss.unwrap_or(f64::NAN),
                r.val_accuracy.unwrap_or(f64::NAN)
            );
            if let Err(e) = line {
                io_error.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = io_error {
        return Err(out_err(e));
    }
    save_checkpoint(out, &surrogate)?;
    let hp = history_out.map_or_else(|| history_path(out), Path::to_path_buf);
    write_file(&hp, &history_csv(&history))?;
    let m = surrogate.evaluate(&test)?;
    writeln!(w, "{METRICS_HEADER}\n{}", metrics_line("test split", &m)).map_err(out_err)?;
    writeln!(w, "checkpoint {}; history {}", out.display(), hp.display()).map_err(out_err)?;
    Ok((surrogate, history))
}

/// Confusion matrix as CSV with a header row of predicted classes.
pub fn confusion_csv(m: &Metrics) -> String {
    let n = m.confusion.len();
    let mut out = String::from("true\\predicted");
    for p in 0..n {
        out += &format!(",{p}");
    }
    out.push('\n');
    for (t, row) in m.confusion.iter().enumerate() {
        out += &t.to_string();
        for v in row {
            out += &format!(",{v}");
        }
        out.push('\n');
    }
    out
}

/// Evaluates checkpoints on datasets pairwise; one table row per pair.
pub fn cmd_evaluate(
    runs: &[(PathBuf, PathBuf)],
    split: Split,
    split_seed: u64,
    out: Option<&Path>,
    w: &mut impl Write,
) -> Result<Vec<Metrics>> {
    if runs.is_empty() {
        return Err(Error::Config(
            "evaluate needs at least one --model/--dataset pair".into(),
        ));
    }
    writeln!(w, "{METRICS_HEADER}").map_err(out_err)?;
    let mut all = Vec::new();
    for (i, (model, data)) in runs.iter().enumerate() {
        let s = load_checkpoint(model)?;
        let (header, samples) = read_dataset(data)?;
        let p = s.preprocess();
        if (header.antennas, header.num_ir, header.num_er) != (p.antennas, p.num_ir, p.num_er) {
            return Err(Error::Schema(format!(
                "model expects (M, I, J) = ({}, {}, {}) but {} holds ({}, {}, {})",
                p.antennas,
                p.num_ir,
                p.num_er,
                data.display(),
                header.antennas,
                header.num_ir,
                header.num_er
            )));
        }
        let samples = pick_split(samples, split, split_seed)?;
        let m = s.evaluate(&samples)?;
        let label = format!("I={} J={} M={}", p.num_ir, p.num_er, p.antennas);
        writeln!(w, "{}", metrics_line(&label, &m)).map_err(out_err)?;
        if let Some(o) = out {
            let path = if runs.len() == 1 {
                o.to_path_buf()
            } else {
                let stem = o
                    .file_stem()
                    .map_or("confusion".into(), |s| s.to_string_lossy().into_owned());
                o.with_file_name(format!("{stem}-{i}.csv"))
            };
            write_file(&path, &confusion_csv(&m))?;
        }
        all.push(m);
    }
    Ok(all)
}

fn parse_bids(path: &Path) -> Result<BidProfile> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Bids {
        ir: Vec<f64>,
        er: Vec<f64>,
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let b: Bids = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok(BidProfile::new(b.ir, b.er)?)
}

/// Options of one auction run.
#[derive(Clone, Debug)]
pub struct AuctionArgs<'a> {
    pub seed: u64,
    pub bids: Option<&'a Path>,
    pub engine: Engine,
    pub model: Option<&'a Path>,
    pub repair: bool,
    pub out: Option<&'a Path>,
}

/// Draws the network for `seed`, optionally replaces its bids and runs one
/// round.
pub fn cmd_auction(
    cfg: &RunConfig,
    args: &AuctionArgs,
    w: &mut impl Write,
) -> Result<AuctionReport> {
    let sampling = cfg.sampling_config()?;
    let sample = sample_scenario(&sampling, args.seed)?;
    let bids = match args.bids {
        Some(p) => parse_bids(p)?,
        None => sample.bids.clone(),
    };
    if bids.ir.len() != sampling.scenario.num_ir || bids.er.len() != sampling.scenario.num_er {
        return Err(Error::Config(format!(
            "bids file has {} IR and {} ER bids; the scenario has {} and {}",
            bids.ir.len(),
            bids.er.len(),
            sampling.scenario.num_ir,
            sampling.scenario.num_er
        )));
    }
    let surrogate = args.model.map(load_checkpoint).transpose()?;
    let models = sampling.models();
    let round = Round {
        channels: &sample.channels,
        demands: &sample.demands,
        bids: &bids,
        models: &models,
        budget: sampling.scenario.power_budget,
    };
    let report = run_auction(
        &round,
        args.engine,
        surrogate.as_ref(),
        args.repair,
        &PowerMinOptions::default(),
    )?;
    writeln!(
        w,
        "engine {}, seed {}, master seed {}",
        args.engine.name(),
        args.seed,
        sampling.master_seed
    )
    .map_err(out_err)?;
    writeln!(
        w,
        "user type      bid  virtual  alloc served  payment       demand     achieved"
    )
    .map_err(out_err)?;
    for u in &report.users {
        writeln!(
            w,
            "{:>4} {:<4} {:>7.4} {:>8.4} {:>6} {:>6} {:>8.4} {:>12.4e} {:>12.4e}",
            u.user,
            if u.is_ir { "IR" } else { "ER" },
            u.bid,
            u.virtual_bid,
            u.allocated as u8,
            u.served as u8,
            u.payment,
            u.demand,
            u.achieved
        )
        .map_err(out_err)?;
    }
    if !report.feasible {
        writeln!(
            w,
            "allocation exceeds the power budget; only satisfied users are charged"
        )
        .map_err(out_err)?;
    }
    if !report.repaired.is_empty() {
        writeln!(w, "repair dropped users {:?}", report.repaired).map_err(out_err)?;
    }
    writeln!(
        w,
        "virtual welfare {:.6}, revenue {:.6}, transmit power {:.6e} W",
        report.virtual_welfare, report.revenue, report.total_power
    )
    .map_err(out_err)?;
    if let Some(o) = args.out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(o, &text)?;
    }
    Ok(report)
}

/// Benchmarks every configured network; `model` is used for networks whose
/// dimensions it matches, others time an untrained network.
pub fn cmd_bench(
    cfg: &RunConfig,
    repetitions: Option<usize>,
    seed: Option<u64>,
    model: Option<&Path>,
    out: Option<&Path>,
    w: &mut impl Write,
) -> Result<crate::bench::BenchReport> {
    let reps = repetitions.unwrap_or(cfg.bench.repetitions);
    if reps < 30 {
        return Err(Error::Config(
            "bench repetitions must be at least 30".into(),
        ));
    }
    let surrogate = model.map(load_checkpoint).transpose()?;
    let mut report = crate::bench::BenchReport::default();
    for &[m, ni, nj] in &cfg.bench.scenarios {
        let mut c = cfg.clone();
        c.scenario.antennas = m;
        c.scenario.num_ir = ni;
        c.scenario.num_er = nj;
        c.sampling.valuations.clear();
        let mut sampling = c.sampling_config()?;
        if let Some(s) = seed {
            sampling.master_seed = s;
        }
        let net = surrogate.as_ref().filter(|s| {
            let p = s.preprocess();
            (p.antennas, p.num_ir, p.num_er) == (m, ni, nj)
        });
        let r = run_bench(
            &BenchConfig {
                sampling,
                repetitions: reps,
                warmup: cfg.bench.warmup,
                density_buckets: cfg.bench.density_buckets,
                first_seed: 0,
            },
            net,
        )?;
        report.methods.extend(r.methods);
        report.density.extend(r.density);
    }
    write!(w, "{}", report.table()).map_err(out_err)?;
    if let Some(o) = out {
        write_file(o, &report.json_lines())?;
    }
    Ok(report)
}
