//! TOML run configuration. Every section and field is optional; missing
//! values take the defaults of the four-IR, two-ER, eight-antenna network.

use std::path::Path;

use serde::{Deserialize, Serialize};
use swipt_core::dataset::SamplingConfig;
use swipt_core::mechanism::ValuationModel;
use swipt_core::model::ScenarioConfig;
use swipt_core::surrogate::{Scaling, TrainConfig};

use crate::{Error, Result};

/// Environment variable naming the directory searched for config files.
pub const CONFIG_DIR_ENV: &str = "SWIPT_CONFIG_DIR";
/// File loaded from the config directory when no `--config` is given.
pub const DEFAULT_CONFIG_NAME: &str = "swipt.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub sampling: SamplingSection,
    pub training: TrainingSection,
    pub bench: BenchSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub antennas: usize,
    pub num_ir: usize,
    pub num_er: usize,
    /// Watts.
    pub power_budget: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            antennas: 8,
            num_ir: 4,
            num_er: 2,
            power_budget: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValuationSpec {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Exponential {
        rate: f64,
    },
    /// Components `[weight, lo, hi]`.
    Mixture {
        components: Vec<[f64; 3]>,
    },
}

impl From<&ValuationSpec> for ValuationModel {
    fn from(v: &ValuationSpec) -> Self {
        match v {
            ValuationSpec::Uniform { lo, hi } => Self::Uniform { lo: *lo, hi: *hi },
            ValuationSpec::Exponential { rate } => Self::Exponential { rate: *rate },
            ValuationSpec::Mixture { components } => {
                Self::UniformMixture(components.iter().map(|c| (c[0], c[1], c[2])).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub ir_gain_db: [f64; 2],
    pub er_gain_db: [f64; 2],
    pub noise_dbm: f64,
    pub bid_range: [f64; 2],
    pub gamma_db: [f64; 2],
    pub q_dbm: [f64; 2],
    pub master_seed: u64,
    pub count: usize,
    /// One entry per user (IRs first); empty means uniform over `bid_range`.
    pub valuations: Vec<ValuationSpec>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            ir_gain_db: [-80.0, -60.0],
            er_gain_db: [-60.0, -40.0],
            noise_dbm: -50.0,
            bid_range: [0.1, 1.0],
            gamma_db: [5.0, 35.0],
            q_dbm: [-20.0, 0.0],
            master_seed: 0,
            count: 20_000,
            valuations: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingSpec {
    Linear,
    #[default]
    Log,
}

impl From<ScalingSpec> for Scaling {
    fn from(s: ScalingSpec) -> Self {
        match s {
            ScalingSpec::Linear => Scaling::Linear,
            ScalingSpec::Log => Scaling::Log,
        }
    }
}

impl From<Scaling> for ScalingSpec {
    fn from(s: Scaling) -> Self {
        match s {
            Scaling::Linear => ScalingSpec::Linear,
            Scaling::Log => ScalingSpec::Log,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l1_coefficient: f64,
    pub seed: u64,
    pub scaling: ScalingSpec,
    /// Seed of the train/validation/test shuffle.
    pub split_seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            decay: t.decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            l1_coefficient: t.l1_coefficient,
            seed: t.seed,
            scaling: ScalingSpec::Log,
            split_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// `[antennas, num_ir, num_er]` per benchmarked network.
    pub scenarios: Vec<[usize; 3]>,
    pub repetitions: usize,
    /// Untimed instances run before measuring.
    pub warmup: usize,
    /// Label-density buckets for the accuracy curves.
    pub density_buckets: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            scenarios: vec![[8, 8, 0]],
            repetitions: 100,
            warmup: 3,
            density_buckets: 5,
        }
    }
}

fn range(name: &str, r: [f64; 2]) -> Result<(f64, f64)> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::Config(format!(
            "sampling.{name} must be an ordered finite pair, got [{}, {}]",
            r[0], r[1]
        )));
    }
    Ok((r[0], r[1]))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    /// Loads `path`, falling back to `dir` for relative paths not found as
    /// given; without a path, loads [`DEFAULT_CONFIG_NAME`] from `dir` when
    /// present and the built-in defaults otherwise.
    pub fn resolve(path: Option<&Path>, dir: Option<&Path>) -> Result<Self> {
        match (path, dir) {
            (Some(p), Some(d)) if !p.exists() && p.is_relative() => Self::load(&d.join(p)),
            (Some(p), _) => Self::load(p),
            (None, Some(d)) if d.join(DEFAULT_CONFIG_NAME).exists() => {
                Self::load(&d.join(DEFAULT_CONFIG_NAME))
            }
            (None, _) => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.antennas == 0 {
            return Err(Error::Config("scenario.antennas must be at least 1".into()));
        }
        if s.num_ir + s.num_er == 0 {
            return Err(Error::Config(
                "scenario.num_ir + scenario.num_er must be positive".into(),
            ));
        }
        if !(s.power_budget > 0.0 && s.power_budget.is_finite()) {
            return Err(Error::Config(
                "scenario.power_budget must be positive".into(),
            ));
        }
        let sm = &self.sampling;
        range("ir_gain_db", sm.ir_gain_db)?;
        range("er_gain_db", sm.er_gain_db)?;
        range("gamma_db", sm.gamma_db)?;
        range("q_dbm", sm.q_dbm)?;
        let (lo, _) = range("bid_range", sm.bid_range)?;
        if lo < 0.0 {
            return Err(Error::Config(
                "sampling.bid_range must be non-negative".into(),
            ));
        }
        if !sm.noise_dbm.is_finite() {
            return Err(Error::Config("sampling.noise_dbm must be finite".into()));
        }
        if !sm.valuations.is_empty() && sm.valuations.len() != s.num_ir + s.num_er {
            return Err(Error::Config(format!(
                "sampling.valuations has {} entries for {} users",
                sm.valuations.len(),
                s.num_ir + s.num_er
            )));
        }
        let t = &self.training;
        for (name, v) in [
            ("learning_rate", t.learning_rate),
            ("l1_coefficient", t.l1_coefficient),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("training.{name} must be positive")));
            }
        }
        if !(t.decay >= 0.0 && t.decay.is_finite()) {
            return Err(Error::Config("training.decay must be non-negative".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::Config("training.batch_size must be positive".into()));
        }
        if t.epochs == 0 {
            return Err(Error::Config("training.epochs must be positive".into()));
        }
        if self.bench.repetitions < 30 {
            return Err(Error::Config(
                "bench.repetitions must be at least 30".into(),
            ));
        }
        if self.bench.density_buckets == 0 {
            return Err(Error::Config(
                "bench.density_buckets must be positive".into(),
            ));
        }
        self.sampling_config()?;
        Ok(())
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let s = &self.scenario;
        Ok(ScenarioConfig::new(
            s.antennas,
            s.num_ir,
            s.num_er,
            s.power_budget,
        )?)
    }

    pub fn sampling_config(&self) -> Result<SamplingConfig> {
        let sm = &self.sampling;
        let mut c = SamplingConfig::new(self.scenario_config()?);
        c.ir_gain_db = (sm.ir_gain_db[0], sm.ir_gain_db[1]);
        c.er_gain_db = (sm.er_gain_db[0], sm.er_gain_db[1]);
        c.noise_dbm = sm.noise_dbm;
        c.bid_range = (sm.bid_range[0], sm.bid_range[1]);
        c.gamma_db = (sm.gamma_db[0], sm.gamma_db[1]);
        c.q_dbm = (sm.q_dbm[0], sm.q_dbm[1]);
        c.master_seed = sm.master_seed;
        c.valuations = sm.valuations.iter().map(ValuationModel::from).collect();
        c.validate()
            .map_err(|e| Error::Config(format!("sampling: {e}")))?;
        Ok(c)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            learning_rate: t.learning_rate,
            decay: t.decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            l1_coefficient: t.l1_coefficient,
            seed: t.seed,
        }
    }
}
