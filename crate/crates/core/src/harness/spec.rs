//! Experiment files: the system sections plus `[experiment]` and an
//! optional `[sweep]` table.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::scenario::SystemConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    IcceNmseBer,
    IctTracking,
    BurstRobustness,
    FormulaSweep,
    PerformanceLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstPosition {
    Random,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    pub kind: ExperimentKind,
    /// Transmit powers in dBm (an SNR in dB under the unit variance model).
    /// Empty means the configured `system.tx_power_dbm`.
    pub p_t_dbm: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Burst lengths in coded bits, one series each.
    pub burst_lengths: Vec<usize>,
    pub burst_position: BurstPosition,
    /// Start of the burst for the fixed policy.
    pub burst_offset: usize,
    /// Decoder SNR gain for the convergence recursion, in dB.
    pub coding_gain_db: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            id: "exp".into(),
            kind: ExperimentKind::IcceNmseBer,
            p_t_dbm: Vec::new(),
            trials: 50,
            seed: 1,
            burst_lengths: vec![0],
            burst_position: BurstPosition::Random,
            burst_offset: 0,
            coding_gain_db: 0.0,
        }
    }
}

impl ExperimentSpec {
    pub fn powers(&self, cfg: &SystemConfig) -> Vec<f64> {
        if self.p_t_dbm.is_empty() {
            vec![cfg.system.tx_power_dbm]
        } else {
            self.p_t_dbm.clone()
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.trials == 0 {
            return Err(config("trials must be at least 1"));
        }
        if self.powers(cfg).iter().any(|p| !p.is_finite()) {
            return Err(config("transmit powers must be finite"));
        }
        if self.id.is_empty() || self.id.contains([',', '"', '\n']) {
            return Err(config(
                "experiment id must be non-empty and free of commas, quotes and newlines",
            ));
        }
        let n = cfg.code.block_bits;
        if self.burst_lengths.is_empty() {
            return Err(config("burst_lengths must not be empty"));
        }
        for &b in &self.burst_lengths {
            if b > n {
                return Err(config(format!(
                    "burst of {b} bits exceeds the {n}-bit block"
                )));
            }
            if self.burst_position == BurstPosition::Fixed && self.burst_offset + b > n {
                return Err(config(format!(
                    "burst at offset {} with length {b} runs past the block",
                    self.burst_offset
                )));
            }
        }
        if self.kind == ExperimentKind::IctTracking && cfg.tracking.frames < 2 {
            return Err(config("tracking needs at least 2 frames"));
        }
        Ok(())
    }
}

/// Grid over one configuration key, e.g. `code.block_bits`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<toml::Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 512-bit blocks and at most 50 trials.
    Ci,
    /// As configured.
    Desk,
    /// 2048-bit blocks and at least 1000 trials.
    Full,
}

impl Profile {
    pub fn apply(self, spec: &mut ExperimentSpec, cfg: &mut SystemConfig) {
        match self {
            Profile::Ci => {
                cfg.code.block_bits = cfg.code.block_bits.min(512);
                spec.trials = spec.trials.min(50);
            }
            Profile::Desk => {}
            Profile::Full => {
                cfg.code.block_bits = 2048;
                spec.trials = spec.trials.max(1000);
            }
        }
    }
}

/// A parsed experiment file.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentFile {
    pub experiment: ExperimentSpec,
    pub sweep: Option<SweepSpec>,
    /// System sections as written, for sweeps to patch.
    pub system_table: toml::Table,
    pub config: SystemConfig,
}

pub fn parse_experiment(text: &str) -> Result<ExperimentFile> {
    let mut table: toml::Table = text.parse()?;
    let experiment = match table.remove("experiment") {
        Some(v) => v.try_into()?,
        None => ExperimentSpec::default(),
    };
    let sweep = match table.remove("sweep") {
        Some(v) => Some(v.try_into()?),
        None => None,
    };
    let config = config_from_table(&table)?;
    experiment.validate(&config)?;
    Ok(ExperimentFile {
        experiment,
        sweep,
        system_table: table,
        config,
    })
}

pub fn config_from_table(table: &toml::Table) -> Result<SystemConfig> {
    let cfg: SystemConfig = toml::Value::Table(table.clone()).try_into()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Sets a dotted key (`section.field`) in a system table.
pub fn set_key(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(config(format!(
            "sweep parameter '{path}' must look like section.field"
        )));
    }
    let section = table
        .entry(parts[0])
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match section {
        toml::Value::Table(t) => {
            t.insert(parts[1].to_string(), value);
            Ok(())
        }
        _ => Err(config(format!("'{}' is not a table", parts[0]))),
    }
}

/// One configuration per sweep value, labelled `parameter=value`.
pub fn expand_sweep(file: &ExperimentFile) -> Result<Vec<(String, SystemConfig)>> {
    let Some(sw) = &file.sweep else {
        return Ok(vec![(String::new(), file.config.clone())]);
    };
    if sw.values.is_empty() {
        return Err(config("sweep needs at least one value"));
    }
    sw.values
        .iter()
        .map(|v| {
            let mut t = file.system_table.clone();
            set_key(&mut t, &sw.parameter, v.clone())?;
            let cfg = config_from_table(&t)?;
            file.experiment.validate(&cfg)?;
            Ok((format!("{}={}", sw.parameter, v), cfg))
        })
        .collect()
}
