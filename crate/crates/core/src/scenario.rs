//! Scenario configuration.
//!
//! A configuration file is TOML with one table per concern. Every key has a
//! default taken from the reference LOS setup (8 AP antennas, 4 users, two
//! 16-element surfaces at 500 m), so a file only needs to list what differs.
//!
//! ```toml
//! [system]
//! scenario = "nlos"
//! users = 2
//!
//! [pilots]
//! stage1 = 96
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Weakened direct link plus reflected links.
    Los,
    /// Reflected links only.
    Nlos,
}

/// How large-scale variances are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceModel {
    /// Path loss from node positions; powers in dBm.
    PathLoss,
    /// Fixed variances from the `[geometry]` table; `tx_power_dbm` then reads
    /// as an SNR in dB against `noise_var`.
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub antennas: usize,
    pub users: usize,
    pub ris_count: usize,
    pub elements_per_ris: usize,
    pub scenario: Scenario,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    /// Per-user transmit power used when an experiment does not sweep it.
    pub tx_power_dbm: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            antennas: 8,
            users: 4,
            ris_count: 2,
            elements_per_ris: 16,
            scenario: Scenario::Los,
            carrier_freq_hz: 5e9,
            bandwidth_hz: 1e6,
            noise_psd_dbm_hz: -170.0,
            tx_power_dbm: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub model: VarianceModel,
    pub ap: [f64; 3],
    pub ris: Vec<[f64; 3]>,
    pub user_center: [f64; 3],
    pub user_radius_m: f64,
    /// Extra attenuation on the AP-user link in LOS ("weakened" direct path).
    pub direct_extra_loss_db: f64,
    /// `unit` model only.
    pub cascaded_var: f64,
    pub direct_var: f64,
    pub noise_var: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            model: VarianceModel::PathLoss,
            ap: [0.0, 0.0, 0.0],
            ris: vec![[500.0, 10.0, 0.0], [500.0, -10.0, 0.0]],
            user_center: [500.0, 0.0, 0.0],
            user_radius_m: 5.0,
            direct_extra_loss_db: 0.0,
            cascaded_var: 1.0,
            direct_var: 1.0,
            noise_var: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSection {
    pub block_bits: usize,
    pub rate: f64,
    pub column_weight: usize,
    pub decoder_iters: usize,
    /// Seed for the parity-check construction, independent of the trial seed.
    pub seed: u64,
}

impl Default for CodeSection {
    fn default() -> Self {
        Self {
            block_bits: 2048,
            rate: 0.5,
            column_weight: 3,
            decoder_iters: 10,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSection {
    /// Pilot symbols per block during full estimation.
    pub stage1: usize,
    /// Pilot symbols per block while tracking (uncoded preamble in LOS,
    /// encoded pilots in NLOS).
    pub stage2: usize,
}

impl Default for PilotSection {
    fn default() -> Self {
        Self {
            stage1: 16,
            stage2: 16,
        }
    }
}

/// Estimator used for the full-block cascaded refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    Lmmse,
    /// Matched filter `Y Λ̂ᴴ / (σ_x² T)`, the large-block approximation the
    /// closed-form error model is built on.
    Correlation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSection {
    /// Detector/decoder iterations per estimation pass (μ).
    pub idd_iters: usize,
    /// Refinement iterations (β_max).
    pub icce_iters: usize,
    /// Relative change of the cascaded estimate that stops refinement.
    pub tol: f64,
    /// Alternating filter/reflection rounds when designing φ_o.
    pub ris_rounds: usize,
    pub refine: RefineMode,
    /// `None` follows the scenario; `Some(true)` in NLOS is rejected.
    pub estimate_direct: Option<bool>,
    /// Account for estimation error: the detector adds the channel error
    /// power to its noise and the LMMSE refinement weights decisions by their
    /// reliability. Off gives the plain mismatched receiver.
    pub error_aware: bool,
}

impl Default for ReceiverSection {
    fn default() -> Self {
        Self {
            idd_iters: 2,
            icce_iters: 3,
            tol: 1e-3,
            ris_rounds: 2,
            refine: RefineMode::Lmmse,
            estimate_direct: None,
            error_aware: true,
        }
    }
}

/// Inter-block correlation when neither `rho` nor a Doppler pair is set.
pub const DEFAULT_RHO: f64 = 0.9888;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSection {
    /// Inter-block correlation; wins over the Doppler pair when both are set.
    pub rho: Option<f64>,
    pub doppler_hz: Option<f64>,
    pub block_duration_s: Option<f64>,
    /// Blocks per full-estimation period (N_f).
    pub frames: usize,
}

impl Default for TrackingSection {
    fn default() -> Self {
        Self {
            rho: None,
            doppler_hz: None,
            block_duration_s: None,
            frames: 20,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub system: SystemSection,
    pub geometry: GeometrySection,
    pub code: CodeSection,
    pub pilots: PilotSection,
    pub receiver: ReceiverSection,
    pub tracking: TrackingSection,
}

/// Sizes that follow from a validated configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub m: usize,
    pub k: usize,
    pub l_e: usize,
    /// Symbols per coded block.
    pub t: usize,
    pub msg_bits: usize,
    pub parity_bits: usize,
}

impl SystemConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn los() -> Self {
        Self::default()
    }

    pub fn nlos() -> Self {
        let mut cfg = Self::default();
        cfg.system.scenario = Scenario::Nlos;
        cfg.pilots.stage1 = 96;
        cfg.tracking.rho = Some(0.9925);
        cfg
    }

    pub fn dims(&self) -> Dims {
        let n = self.code.block_bits;
        let msg_bits = (n as f64 * self.code.rate).round() as usize;
        Dims {
            m: self.system.antennas,
            k: self.system.users,
            l_e: self.system.elements_per_ris * self.system.ris_count,
            t: n / 2,
            msg_bits,
            parity_bits: n - msg_bits,
        }
    }

    pub fn scenario(&self) -> Scenario {
        self.system.scenario
    }

    pub fn estimates_direct(&self) -> bool {
        self.receiver
            .estimate_direct
            .unwrap_or(self.system.scenario == Scenario::Los)
    }

    /// Inter-block correlation: the configured `rho`, else Jakes
    /// `J0(2π f_D T_b)`, else [`DEFAULT_RHO`].
    pub fn rho(&self) -> f64 {
        let t = &self.tracking;
        match (t.rho, t.doppler_hz, t.block_duration_s) {
            (Some(r), _, _) => r,
            (None, Some(fd), Some(tb)) => jakes_rho(fd, tb),
            _ => DEFAULT_RHO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.antennas == 0 || s.users == 0 || s.ris_count == 0 || s.elements_per_ris == 0 {
            return Err(config(
                "antennas, users, ris_count and elements_per_ris must be at least 1",
            ));
        }
        if s.bandwidth_hz <= 0.0 {
            return Err(config("bandwidth_hz must be positive"));
        }
        let g = &self.geometry;
        if g.model == VarianceModel::PathLoss && g.ris.len() != s.ris_count {
            return Err(config(format!(
                "{} RIS positions given for ris_count = {}",
                g.ris.len(),
                s.ris_count
            )));
        }
        if g.user_radius_m < 0.0 {
            return Err(config("user_radius_m must be non-negative"));
        }
        if g.model == VarianceModel::Unit
            && !(g.cascaded_var > 0.0 && g.direct_var >= 0.0 && g.noise_var > 0.0)
        {
            return Err(config(
                "unit model needs cascaded_var > 0, direct_var >= 0, noise_var > 0",
            ));
        }
        if s.scenario == Scenario::Nlos && self.receiver.estimate_direct == Some(true) {
            return Err(config("NLOS scenario has no direct link to estimate"));
        }

        let c = &self.code;
        if !(c.rate > 0.0 && c.rate < 1.0) {
            return Err(config("code rate must lie in (0, 1)"));
        }
        if c.block_bits == 0 || !c.block_bits.is_multiple_of(4) {
            return Err(config("block_bits must be a positive multiple of 4"));
        }
        let k_f = c.block_bits as f64 * c.rate;
        if (k_f - k_f.round()).abs() > 1e-9 {
            return Err(config("block_bits * rate must be an integer"));
        }
        let d = self.dims();
        if !d.parity_bits.is_multiple_of(2) {
            return Err(config(
                "parity bit count must be even to fill whole QPSK symbols",
            ));
        }
        if c.column_weight < 2 || c.column_weight > d.parity_bits {
            return Err(config("column_weight must lie in [2, parity bits]"));
        }

        let order = hadamard_order(s.users);
        for (name, np) in [
            ("stage1", self.pilots.stage1),
            ("stage2", self.pilots.stage2),
        ] {
            if np == 0 {
                return Err(config(format!("pilots.{name} must be positive")));
            }
            let seg = match s.scenario {
                Scenario::Los => {
                    if np % 2 != 0 {
                        return Err(config(format!("pilots.{name} must be even in LOS")));
                    }
                    np / 2
                }
                Scenario::Nlos => np,
            };
            if seg < s.users {
                return Err(config(format!(
                    "pilots.{name}: pilot segment of {seg} symbols cannot hold {} orthogonal users",
                    s.users
                )));
            }
            if seg % order != 0 {
                return Err(config(format!(
                    "pilots.{name}: pilot segment length {seg} must be a multiple of the Hadamard order {order}"
                )));
            }
            if 2 * np >= d.msg_bits {
                return Err(config(format!(
                    "pilots.{name}: pilot bits fill the whole message"
                )));
            }
        }
        if !(d.msg_bits - 2 * self.pilots.stage1).is_multiple_of(2) {
            return Err(config("information bits must fill whole QPSK symbols"));
        }

        let r = &self.receiver;
        if r.idd_iters == 0 {
            return Err(config("idd_iters must be at least 1"));
        }
        if !(r.tol >= 0.0) {
            return Err(config("tol must be non-negative"));
        }
        let rho = self.rho();
        if !(0.0..=1.0).contains(&rho) {
            return Err(config(format!("rho = {rho} outside [0, 1]")));
        }
        if self.tracking.frames == 0 {
            return Err(config("tracking.frames must be at least 1"));
        }
        Ok(())
    }
}

/// Smallest power of two not below `k`.
pub fn hadamard_order(k: usize) -> usize {
    k.max(1).next_power_of_two()
}

/// Jakes correlation `J0(2π f_D T_b)`.
pub fn jakes_rho(doppler_hz: f64, block_duration_s: f64) -> f64 {
    libm::j0(2.0 * std::f64::consts::PI * doppler_hz * block_duration_s)
}
