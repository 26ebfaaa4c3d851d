//! Node placement, path loss and the large-scale variances derived from them.
//!
//! Powers are handled in milliwatts so that `10^(dBm/10)` is the linear value
//! for transmit power, noise power and path-loss gains alike.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::scenario::{Scenario, SystemConfig, VarianceModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkKind {
    /// AP-RIS and RIS-user hops.
    RisLink,
    /// AP-user.
    Direct,
}

pub fn path_loss_db(kind: LinkKind, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(invalid(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    let lg = distance_m.log10();
    Ok(match kind {
        LinkKind::RisLink => 37.3 + 22.0 * lg,
        LinkKind::Direct => 32.4 + 30.0 * lg,
    })
}

/// Noise power in dBm over `bandwidth_hz`.
pub fn noise_power_dbm(psd_dbm_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(invalid("bandwidth must be positive"));
    }
    Ok(psd_dbm_hz + 10.0 * bandwidth_hz.log10())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Per-link variances of one user drop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkBudget {
    pub users: Vec<[f64; 3]>,
    /// Direct-link variance per user (σ_h²), zero in NLOS.
    pub sigma_h2: Vec<f64>,
    /// AP-RIS variance per surface.
    pub sigma_g2: Vec<f64>,
    /// RIS-user variance, indexed `[ris][user]`.
    pub sigma_f2: Vec<Vec<f64>>,
    pub sigma_n2: f64,
    pub elements_per_ris: usize,
}

impl LinkBudget {
    /// Same variance everywhere. `sigma_f2` carries the whole cascaded
    /// variance; the AP-RIS hop has unit variance.
    pub fn normalized(
        k: usize,
        ris_count: usize,
        l: usize,
        sigma_z2: f64,
        sigma_h2: f64,
        sigma_n2: f64,
    ) -> Self {
        Self {
            users: vec![[0.0; 3]; k],
            sigma_h2: vec![sigma_h2; k],
            sigma_g2: vec![1.0; ris_count],
            sigma_f2: vec![vec![sigma_z2; k]; ris_count],
            sigma_n2,
            elements_per_ris: l,
        }
    }

    pub fn k(&self) -> usize {
        self.sigma_h2.len()
    }

    pub fn l_e(&self) -> usize {
        self.sigma_g2.len() * self.elements_per_ris
    }

    /// Variance of each cascaded entry for surface `r` and user `k`.
    pub fn sigma_z2(&self, r: usize, k: usize) -> f64 {
        self.sigma_g2[r] * self.sigma_f2[r][k]
    }

    /// Prior variances of the `K·L_e` columns of `Z_all`.
    pub fn cascaded_prior(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k() * self.l_e());
        for k in 0..self.k() {
            for r in 0..self.sigma_g2.len() {
                out.extend(std::iter::repeat_n(
                    self.sigma_z2(r, k),
                    self.elements_per_ris,
                ));
            }
        }
        out
    }

    pub fn mean_sigma_z2(&self) -> f64 {
        let p = self.cascaded_prior();
        p.iter().sum::<f64>() / p.len() as f64
    }

    pub fn mean_sigma_h2(&self) -> f64 {
        self.sigma_h2.iter().sum::<f64>() / self.k() as f64
    }

    pub fn has_direct(&self) -> bool {
        self.sigma_h2.iter().any(|&v| v > 0.0)
    }
}

/// Uniform point in a horizontal disc.
pub fn drop_user<R: Rng + ?Sized>(rng: &mut R, center: &[f64; 3], radius: f64) -> [f64; 3] {
    let u: f64 = rng.random();
    let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let r = radius * u.sqrt();
    [
        center[0] + r * theta.cos(),
        center[1] + r * theta.sin(),
        center[2],
    ]
}

/// Draws the user positions and turns every link into a variance.
pub fn build_link_budget<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<LinkBudget> {
    cfg.validate()?;
    let s = &cfg.system;
    let g = &cfg.geometry;
    let los = s.scenario == Scenario::Los;

    if g.model == VarianceModel::Unit {
        let h = if los { g.direct_var } else { 0.0 };
        return Ok(LinkBudget::normalized(
            s.users,
            s.ris_count,
            s.elements_per_ris,
            g.cascaded_var,
            h,
            g.noise_var,
        ));
    }

    let users: Vec<[f64; 3]> = (0..s.users)
        .map(|_| drop_user(rng, &g.user_center, g.user_radius_m))
        .collect();
    let mut sigma_h2 = Vec::with_capacity(s.users);
    for u in &users {
        if los {
            let pl = path_loss_db(LinkKind::Direct, distance(&g.ap, u))? + g.direct_extra_loss_db;
            sigma_h2.push(db_to_linear(-pl));
        } else {
            sigma_h2.push(0.0);
        }
    }
    let mut sigma_g2 = Vec::with_capacity(s.ris_count);
    let mut sigma_f2 = Vec::with_capacity(s.ris_count);
    for ris in &g.ris {
        sigma_g2.push(db_to_linear(-path_loss_db(
            LinkKind::RisLink,
            distance(&g.ap, ris),
        )?));
        let mut per_user = Vec::with_capacity(s.users);
        for u in &users {
            per_user.push(db_to_linear(-path_loss_db(
                LinkKind::RisLink,
                distance(ris, u),
            )?));
        }
        sigma_f2.push(per_user);
    }
    let sigma_n2 = db_to_linear(noise_power_dbm(s.noise_psd_dbm_hz, s.bandwidth_hz)?);
    Ok(LinkBudget {
        users,
        sigma_h2,
        sigma_g2,
        sigma_f2,
        sigma_n2,
        elements_per_ris: s.elements_per_ris,
    })
}
