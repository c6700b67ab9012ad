//! Line-delimited JSON dataset files.
//!
//! The first line is a header carrying the schema name, version and the
//! network dimensions; every following line is one labeled sample. Channel
//! matrices are stored column by column (one column per receiver) as
//! separate real and imaginary arrays.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use swipt_core::dataset::TrainingSample;
use swipt_core::model::{
    AllocationVector, BidProfile, ChannelRealization, DemandProfile, ScenarioConfig,
};
use swipt_core::Complex64;

use crate::{Error, Result};

pub const DATASET_SCHEMA: &str = "swipt-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub schema: String,
    pub version: u32,
    pub antennas: usize,
    pub num_ir: usize,
    pub num_er: usize,
    pub power_budget: f64,
    pub master_seed: u64,
}

impl DatasetHeader {
    pub fn new(scenario: &ScenarioConfig, master_seed: u64) -> Self {
        Self {
            schema: DATASET_SCHEMA.into(),
            version: DATASET_VERSION,
            antennas: scenario.antennas,
            num_ir: scenario.num_ir,
            num_er: scenario.num_er,
            power_budget: scenario.power_budget,
            master_seed,
        }
    }

    /// Errors unless the file was written for the same network.
    pub fn expect_scenario(&self, scenario: &ScenarioConfig) -> Result<()> {
        let want = (scenario.antennas, scenario.num_ir, scenario.num_er);
        let got = (self.antennas, self.num_ir, self.num_er);
        if want != got {
            return Err(Error::Schema(format!(
                "dataset holds (M, I, J) = {got:?} but the configuration expects {want:?}"
            )));
        }
        if self.power_budget != scenario.power_budget {
            return Err(Error::Schema(format!(
                "dataset labels assume a {} W budget but the configuration has {} W",
                self.power_budget, scenario.power_budget
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    seed: u64,
    h_re: Vec<f64>,
    h_im: Vec<f64>,
    g_re: Vec<f64>,
    g_im: Vec<f64>,
    noise: Vec<f64>,
    bids_ir: Vec<f64>,
    bids_er: Vec<f64>,
    gamma: Vec<f64>,
    q: Vec<f64>,
    virtual_bids: Vec<f64>,
    label: Vec<u8>,
    p_min: f64,
}

fn split(cols: &[Vec<Complex64>]) -> (Vec<f64>, Vec<f64>) {
    cols.iter().flatten().map(|c| (c.re, c.im)).unzip()
}

fn join(
    re: &[f64],
    im: &[f64],
    m: usize,
    n: usize,
) -> std::result::Result<Vec<Vec<Complex64>>, String> {
    if re.len() != m * n || im.len() != m * n {
        return Err(format!(
            "channel arrays hold {} / {} entries, expected {}",
            re.len(),
            im.len(),
            m * n
        ));
    }
    Ok((0..n)
        .map(|c| {
            (0..m)
                .map(|r| Complex64::new(re[c * m + r], im[c * m + r]))
                .collect()
        })
        .collect())
}

impl Record {
    fn from_sample(s: &TrainingSample) -> Self {
        let (h_re, h_im) = split(s.channels.ir_channels());
        let (g_re, g_im) = split(s.channels.er_channels());
        Self {
            seed: s.sample_seed,
            h_re,
            h_im,
            g_re,
            g_im,
            noise: s.channels.noise_vars().to_vec(),
            bids_ir: s.bids.ir.clone(),
            bids_er: s.bids.er.clone(),
            gamma: s.demands.gamma.clone(),
            q: s.demands.q.clone(),
            virtual_bids: s.virtual_bids.clone(),
            label: s.label.bits().iter().map(|&b| b as u8).collect(),
            p_min: s.p_min_of_label,
        }
    }

    fn into_sample(self, h: &DatasetHeader) -> std::result::Result<TrainingSample, String> {
        let (m, ni, nj) = (h.antennas, h.num_ir, h.num_er);
        let channels = ChannelRealization::new(
            m,
            join(&self.h_re, &self.h_im, m, ni)?,
            join(&self.g_re, &self.g_im, m, nj)?,
            self.noise,
        )
        .map_err(|e| e.to_string())?;
        if self.label.len() != ni + nj || self.label.iter().any(|&b| b > 1) {
            return Err(format!("label must be {} zeros and ones", ni + nj));
        }
        if self.virtual_bids.len() != ni + nj {
            return Err(format!("expected {} virtual bids", ni + nj));
        }
        if self.bids_ir.len() != ni || self.bids_er.len() != nj {
            return Err("bid counts do not match the header".into());
        }
        if self.gamma.len() != ni || self.q.len() != nj {
            return Err("demand counts do not match the header".into());
        }
        Ok(TrainingSample {
            sample_seed: self.seed,
            channels,
            bids: BidProfile::new(self.bids_ir, self.bids_er).map_err(|e| e.to_string())?,
            demands: DemandProfile::new(self.gamma, self.q).map_err(|e| e.to_string())?,
            virtual_bids: self.virtual_bids,
            label: AllocationVector::new(self.label.iter().map(|&b| b == 1).collect(), ni)
                .map_err(|e| e.to_string())?,
            p_min_of_label: self.p_min,
        })
    }
}

pub fn write_dataset(
    path: &Path,
    header: &DatasetHeader,
    samples: &[TrainingSample],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let line = serde_json::to_string(header).expect("header serializes");
    writeln!(w, "{line}").map_err(io)?;
    for s in samples {
        let line = serde_json::to_string(&Record::from_sample(s)).expect("record serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<TrainingSample>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| parse(1, "empty file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader =
        serde_json::from_str(&first).map_err(|e| parse(1, format!("bad header: {e}")))?;
    if header.schema != DATASET_SCHEMA || header.version != DATASET_VERSION {
        return Err(Error::Schema(format!(
            "{}: schema {} v{} is not {DATASET_SCHEMA} v{DATASET_VERSION}",
            path.display(),
            header.schema,
            header.version
        )));
    }
    let mut samples = Vec::new();
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse(line_no, e.to_string()))?;
        samples.push(rec.into_sample(&header).map_err(|m| parse(line_no, m))?);
    }
    Ok((header, samples))
}

/// Reads a dataset and checks it matches `scenario`.
pub fn read_dataset_for(path: &Path, scenario: &ScenarioConfig) -> Result<Vec<TrainingSample>> {
    let (header, samples) = read_dataset(path)?;
    header.expect_scenario(scenario)?;
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use swipt_core::dataset::{generate, SamplingConfig};
    use swipt_core::powermin::PowerMinOptions;

    fn samples(ni: usize, nj: usize, n: usize) -> (DatasetHeader, Vec<TrainingSample>) {
        let sc = ScenarioConfig::new(3, ni, nj, 3.0).unwrap();
        let mut cfg = SamplingConfig::new(sc.clone());
        cfg.master_seed = 4;
        let (s, _) = generate(&cfg, 0, n, &PowerMinOptions::default(), 3).unwrap();
        (DatasetHeader::new(&sc, 4), s)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let (h, s) = samples(2, 2, 30);
        write_dataset(&path, &h, &s).unwrap();
        let (h2, s2) = read_dataset(&path).unwrap();
        assert_eq!(h2, h);
        assert_eq!(s2, s);
    }

    #[test]
    fn truncated_line_names_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let (h, s) = samples(1, 1, 3);
        write_dataset(&path, &h, &s).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 20]).unwrap();
        match read_dataset(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn other_dimensions_are_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let (h, s) = samples(2, 1, 2);
        write_dataset(&path, &h, &s).unwrap();
        let other = ScenarioConfig::new(3, 2, 2, 3.0).unwrap();
        assert!(matches!(
            read_dataset_for(&path, &other),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let (mut h, s) = samples(1, 0, 1);
        h.version = 99;
        write_dataset(&path, &h, &s).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Schema(_))));
    }
}
