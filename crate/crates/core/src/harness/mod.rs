//! Seeded Monte Carlo experiments.
//!
//! Every trial draws its channels, data and noise from streams keyed by
//! `(master seed, sweep point, trial)`, so results do not depend on thread
//! scheduling and paired experiments see the same realisations. Rows are
//! sorted before writing; wall time goes to the JSON sidecar only, which
//! keeps the CSV files byte-identical across runs.

pub mod spec;
pub mod table;
pub mod validate;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{self, AnalyticInputs};
use crate::channel::{draw_channels, evolve_markov};
use crate::error::{invalid, Result};
use crate::estimator::{
    icce, ict_step, EstimationState, Frame, ReceiverParams, RunOptions, SimAir, Snapshot,
};
use crate::geometry::{build_link_budget, db_to_linear, LinkBudget};
use crate::ldpc::LdpcCode;
use crate::linalg::{fro2, CMat};
use crate::modem::packet::{FrameLayout, PacketBuilder};
use crate::scenario::SystemConfig;

pub use spec::{
    expand_sweep, parse_experiment, BurstPosition, ExperimentFile, ExperimentKind, ExperimentSpec,
    Profile, SweepSpec,
};
pub use table::{aggregate, ResultRow, ResultTable, SummaryRow};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for stream `(a, b)` under `master`.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ a) ^ b)
}

const GEOMETRY_STREAM: u64 = u64::MAX;
const CHANNEL: u64 = 1;
const DATA: u64 = 2;
const NOISE: u64 = 3;
const EVOLVE: u64 = 4;
const BURST: u64 = 1 << 32;

/// Flips `b_errors` consecutive bits starting at a uniform offset.
pub fn inject_burst<R: Rng + ?Sized>(bits: &[u8], b_errors: usize, rng: &mut R) -> Result<Vec<u8>> {
    if b_errors > bits.len() {
        return Err(invalid(format!(
            "burst of {b_errors} bits in a {}-bit block",
            bits.len()
        )));
    }
    let offset = rng.random_range(0..=bits.len() - b_errors);
    inject_burst_at(bits, b_errors, offset)
}

pub fn inject_burst_at(bits: &[u8], b_errors: usize, offset: usize) -> Result<Vec<u8>> {
    if offset + b_errors > bits.len() {
        return Err(invalid(format!(
            "burst [{offset}, {}) outside a {}-bit block",
            offset + b_errors,
            bits.len()
        )));
    }
    let mut out = bits.to_vec();
    for b in &mut out[offset..offset + b_errors] {
        *b ^= 1;
    }
    Ok(out)
}

/// Symbol energy for a transmit power in dBm.
pub fn sigma_x2(p_t_dbm: f64) -> f64 {
    db_to_linear(p_t_dbm)
}

/// Shared per-experiment state.
pub struct Setup {
    pub cfg: SystemConfig,
    pub lb: LinkBudget,
    pub code: LdpcCode,
}

impl Setup {
    /// User positions are drawn once per experiment seed.
    pub fn new(cfg: &SystemConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, GEOMETRY_STREAM, 0));
        let lb = build_link_budget(cfg, &mut rng)?;
        let code = LdpcCode::build_with_weight(
            cfg.code.block_bits,
            cfg.code.rate,
            cfg.code.column_weight,
            cfg.code.seed,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            lb,
            code,
        })
    }

    pub fn stage1_layout(&self) -> Result<FrameLayout> {
        FrameLayout::stage1(&self.code, self.cfg.pilots.stage1, self.cfg.scenario())
    }

    pub fn tracking_layout(&self) -> Result<FrameLayout> {
        FrameLayout::tracking(&self.code, self.cfg.pilots.stage2, self.cfg.scenario())
    }
}

/// Truth-side metrics of one pass.
fn score(
    snap: &Snapshot,
    h: &CMat,
    z_all: &CMat,
    data: &[Vec<u8>],
    pilot_bits: usize,
    with_direct: bool,
) -> (Option<f64>, f64, f64, f64) {
    let nd = with_direct.then(|| {
        let e = fro2(h);
        if e > 0.0 {
            fro2(&(&snap.h_hat - h)) / e
        } else {
            0.0
        }
    });
    let nc = fro2(&(&snap.z_hat - z_all)) / fro2(z_all);
    let mut bit_errs = 0usize;
    let mut bits = 0usize;
    let mut frame_errs = 0usize;
    for (u, d) in data.iter().enumerate() {
        let got = &snap.messages[u][pilot_bits..];
        let e = got.iter().zip(d).filter(|(a, b)| a != b).count();
        bit_errs += e;
        bits += d.len();
        frame_errs += usize::from(e > 0);
    }
    (
        nd,
        nc,
        bit_errs as f64 / bits.max(1) as f64,
        frame_errs as f64 / data.len().max(1) as f64,
    )
}

fn random_data(rng: &mut ChaCha8Rng, users: usize, bits: usize) -> Vec<Vec<u8>> {
    (0..users)
        .map(|_| (0..bits).map(|_| rng.random_range(0..2u8)).collect())
        .collect()
}

struct TrialCtx<'a> {
    setup: &'a Setup,
    id: &'a str,
    p_t_dbm: f64,
    trial: usize,
    trial_seed: u64,
}

impl TrialCtx<'_> {
    #[allow(clippy::too_many_arguments)]
    fn rows(
        &self,
        block: usize,
        st: &EstimationState,
        h: &CMat,
        z: &CMat,
        data: &[Vec<u8>],
        pilot_bits: usize,
        max_beta: usize,
    ) -> Vec<ResultRow> {
        let with_direct = self.setup.cfg.estimates_direct();
        // passes skipped by the tolerance rule repeat the last one
        (0..=max_beta)
            .map(|beta| {
                let snap = st.trajectory.get(beta).unwrap_or_else(|| st.last());
                let (nd, nc, ber, fer) = score(snap, h, z, data, pilot_bits, with_direct);
                ResultRow {
                    experiment_id: self.id.to_string(),
                    p_t_dbm: self.p_t_dbm,
                    block,
                    beta,
                    trial: self.trial,
                    trial_seed: self.trial_seed,
                    nmse_direct: nd,
                    nmse_cascaded: nc,
                    ber,
                    fer,
                }
            })
            .collect()
    }
}

fn single_block(
    ctx: &TrialCtx,
    genie: bool,
    burst: Option<(usize, BurstPosition, usize)>,
) -> Result<Vec<ResultRow>> {
    let s = ctx.setup;
    let sx2 = sigma_x2(ctx.p_t_dbm);
    let k = s.cfg.system.users;
    let layout = s.stage1_layout()?;
    let builder = PacketBuilder::new(&s.code, k, sx2);
    let frame = Frame::new(&builder, layout)?;
    let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.trial_seed, CHANNEL, 0));
    let ch = draw_channels(&s.lb, s.cfg.system.antennas, &mut crng);
    let casc = ch.cascade()?;
    let mut drng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.trial_seed, DATA, 0));
    let data = random_data(&mut drng, k, layout.data_bits());
    let tx = builder.build_block(data.clone(), &layout)?;
    let mut nrng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.trial_seed, NOISE, 0));
    let mut air = SimAir {
        h: &ch.h,
        z_all: &casc.z_all,
        x: &tx.x,
        sigma_n2: s.lb.sigma_n2,
        rng: &mut nrng,
    };
    let p = ReceiverParams::new(&s.cfg, &s.lb, sx2);
    let seed = ctx.trial_seed;
    let hook = move |beta: usize, user: usize, bits: &mut [u8]| {
        if let Some((len, pos, offset)) = burst {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, BURST + beta as u64, user as u64));
            let out = match pos {
                BurstPosition::Random => inject_burst(bits, len, &mut rng),
                BurstPosition::Fixed => inject_burst_at(bits, len, offset),
            };
            if let Ok(v) = out {
                bits.copy_from_slice(&v);
            }
        }
    };
    let opts = RunOptions {
        genie: genie.then_some(&tx.x),
        corrupt: burst.map(|_| &hook as &(dyn Fn(usize, usize, &mut [u8]) + Sync)),
    };
    let st = icce(&frame, &p, &mut air, &opts)?;
    Ok(ctx.rows(
        0,
        &st,
        &ch.h,
        &casc.z_all,
        &data,
        layout.pilot_bits(),
        p.max_beta,
    ))
}

fn tracking_run(ctx: &TrialCtx) -> Result<Vec<ResultRow>> {
    let s = ctx.setup;
    let sx2 = sigma_x2(ctx.p_t_dbm);
    let k = s.cfg.system.users;
    let builder = PacketBuilder::new(&s.code, k, sx2);
    let f1 = Frame::new(&builder, s.stage1_layout()?)?;
    let f2 = Frame::new(&builder, s.tracking_layout()?)?;
    let p = ReceiverParams::new(&s.cfg, &s.lb, sx2);
    let rho = s.cfg.rho();
    let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.trial_seed, CHANNEL, 0));
    let mut erng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.trial_seed, EVOLVE, 0));
    let mut drng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.trial_seed, DATA, 0));
    let mut nrng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.trial_seed, NOISE, 0));
    let mut ch = draw_channels(&s.lb, s.cfg.system.antennas, &mut crng);
    let mut prev: Option<EstimationState> = None;
    let mut rows = Vec::new();
    for block in 0..s.cfg.tracking.frames {
        if block > 0 {
            ch = evolve_markov(&ch, &s.lb, rho, &mut erng)?;
        }
        let frame = if block == 0 { &f1 } else { &f2 };
        let casc = ch.cascade()?;
        let data = random_data(&mut drng, k, frame.layout.data_bits());
        let tx = builder.build_block(data.clone(), &frame.layout)?;
        let mut air = SimAir {
            h: &ch.h,
            z_all: &casc.z_all,
            x: &tx.x,
            sigma_n2: s.lb.sigma_n2,
            rng: &mut nrng,
        };
        let st = ict_step(prev.as_ref(), frame, &p, &mut air, &RunOptions::default())?;
        rows.extend(ctx.rows(
            block,
            &st,
            &ch.h,
            &casc.z_all,
            &data,
            frame.layout.pilot_bits(),
            p.max_beta,
        ));
        prev = Some(st);
    }
    Ok(rows)
}

/// Closed-form rows: the large-block recursion started from the coarse
/// NMSE, one row per pass, with `Q(·)` in the BER column.
fn formula_rows(spec: &ExperimentSpec, setup: &Setup) -> Result<Vec<ResultRow>> {
    let cfg = &setup.cfg;
    let d = cfg.dims();
    let layout = setup.stage1_layout()?;
    let rank = ReceiverParams::new(cfg, &setup.lb, 1.0).coarse_rank;
    let mut rows = Vec::new();
    for p_t in spec.powers(cfg) {
        let inp = AnalyticInputs {
            t: layout.t(),
            k: d.k,
            l_e: d.l_e,
            m: d.m,
            sigma_x2: sigma_x2(p_t),
            sigma_n2: setup.lb.sigma_n2,
            sigma_z2: setup.lb.mean_sigma_z2(),
            sigma_h2: 0.0,
            p: 0.0,
            g_c: db_to_linear(spec.coding_gain_db),
        };
        let start = analysis::nmse_coarse(
            rank,
            d.k,
            d.l_e,
            setup.lb.sigma_n2 / inp.sigma_x2,
            inp.sigma_z2,
        )?;
        let mut v = start;
        for beta in 0..=cfg.receiver.icce_iters {
            let q = analysis::q_func((inp.sigma_z2 / v.max(f64::MIN_POSITIVE) * inp.g_c).sqrt());
            rows.push(ResultRow {
                experiment_id: spec.id.clone(),
                p_t_dbm: p_t,
                block: 0,
                beta,
                trial: 0,
                trial_seed: 0,
                nmse_direct: None,
                nmse_cascaded: v,
                ber: q,
                fer: f64::NAN,
            });
            v = analysis::nmse_recursion(v, &inp)?;
        }
    }
    Ok(rows)
}

/// Runs one experiment under an already-resolved configuration.
pub fn run(spec: &ExperimentSpec, cfg: &SystemConfig) -> Result<ResultTable> {
    spec.validate(cfg)?;
    let setup = Setup::new(cfg, spec.seed)?;
    if spec.kind == ExperimentKind::FormulaSweep {
        return Ok(ResultTable::new(formula_rows(spec, &setup)?));
    }
    let series: Vec<(String, Option<usize>)> = match spec.kind {
        ExperimentKind::BurstRobustness => spec
            .burst_lengths
            .iter()
            .map(|&b| (format!("{}_b{b}", spec.id), Some(b)))
            .collect(),
        _ => vec![(spec.id.clone(), None)],
    };
    let mut jobs = Vec::new();
    for (point, &p_t) in spec.powers(cfg).iter().enumerate() {
        for trial in 0..spec.trials {
            for (sid, burst) in &series {
                jobs.push((point, p_t, trial, sid.as_str(), *burst));
            }
        }
    }
    let results: Vec<Result<Vec<ResultRow>>> = jobs
        .par_iter()
        .map(|&(point, p_t, trial, sid, burst)| {
            let ctx = TrialCtx {
                setup: &setup,
                id: sid,
                p_t_dbm: p_t,
                trial,
                trial_seed: derive_seed(spec.seed, point as u64, trial as u64),
            };
            match spec.kind {
                ExperimentKind::IcceNmseBer => single_block(&ctx, false, None),
                ExperimentKind::PerformanceLimit => single_block(&ctx, true, None),
                ExperimentKind::BurstRobustness => single_block(
                    &ctx,
                    false,
                    burst.map(|b| (b, spec.burst_position, spec.burst_offset)),
                ),
                ExperimentKind::IctTracking => tracking_run(&ctx),
                ExperimentKind::FormulaSweep => unreachable!(),
            }
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(ResultTable::new(rows))
}

/// Sidecar written next to the CSV files.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport<'a> {
    pub experiment: &'a ExperimentSpec,
    pub config: &'a SystemConfig,
    pub profile: Profile,
    pub sweep_label: String,
    pub rows: usize,
    pub wall_time_s: f64,
    /// Payload rate over the tracking period (tracking runs only).
    pub effective_rate: Option<f64>,
    /// Dominant flop count of one block at the configured sizes.
    pub flop_estimate: f64,
}

/// Payload rate of a tracking period under `cfg`.
pub fn effective_rate(cfg: &SystemConfig) -> Result<f64> {
    let setup_code = LdpcCode::build_with_weight(
        cfg.code.block_bits,
        cfg.code.rate,
        cfg.code.column_weight,
        cfg.code.seed,
    )?;
    let l1 = FrameLayout::stage1(&setup_code, cfg.pilots.stage1, cfg.scenario())?;
    let l2 = FrameLayout::tracking(&setup_code, cfg.pilots.stage2, cfg.scenario())?;
    analysis::effective_code_rate(
        l1.data_bits(),
        l2.data_bits(),
        cfg.tracking.frames.max(1),
        2 * l1.t(),
    )
}

/// Runs, times and writes `results.csv`, `summary.csv` and `run.json`.
pub fn run_to_dir(
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    profile: Profile,
    label: &str,
    dir: &Path,
) -> Result<ResultTable> {
    let t0 = Instant::now();
    let table = run(spec, cfg)?;
    let wall = t0.elapsed().as_secs_f64();
    table.write_dir(dir)?;
    let d = cfg.dims();
    let report = RunReport {
        experiment: spec,
        config: cfg,
        profile,
        sweep_label: label.to_string(),
        rows: table.rows.len(),
        wall_time_s: wall,
        effective_rate: if spec.kind == ExperimentKind::IctTracking {
            Some(effective_rate(cfg)?)
        } else {
            None
        },
        flop_estimate: analysis::flop_estimate(d.m, d.k, d.t, 2, d.l_e, cfg.receiver.icce_iters),
    };
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(table)
}

/// Closed-form quantities over the power grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormulaRow {
    pub p_t_dbm: f64,
    pub snr_db: f64,
    pub nmse_coarse: f64,
    pub nmse_refined_nlos: f64,
    pub nmse_refined_los: f64,
    pub nmse_min: f64,
    pub nmse_fixed_point: f64,
    pub threshold_db: Option<f64>,
}

pub fn formula_table(spec: &ExperimentSpec, cfg: &SystemConfig) -> Result<Vec<FormulaRow>> {
    let setup = Setup::new(cfg, spec.seed)?;
    let d = cfg.dims();
    let layout = setup.stage1_layout()?;
    let rank = ReceiverParams::new(cfg, &setup.lb, 1.0).coarse_rank;
    let sn2 = setup.lb.sigma_n2;
    spec.powers(cfg)
        .into_iter()
        .map(|p_t| {
            let sx2 = sigma_x2(p_t);
            let inp = AnalyticInputs {
                t: layout.t(),
                k: d.k,
                l_e: d.l_e,
                m: d.m,
                sigma_x2: sx2,
                sigma_n2: sn2,
                sigma_z2: setup.lb.mean_sigma_z2(),
                sigma_h2: setup.lb.mean_sigma_h2(),
                p: 0.0,
                g_c: db_to_linear(spec.coding_gain_db),
            };
            let coarse = analysis::nmse_coarse(rank, d.k, d.l_e, sn2 / sx2, inp.sigma_z2)?;
            let traj = analysis::recursion_trajectory(coarse, &inp, 1e-6, 200)?;
            Ok(FormulaRow {
                p_t_dbm: p_t,
                snr_db: crate::geometry::linear_to_db(sx2 / sn2),
                nmse_coarse: coarse,
                nmse_refined_nlos: analysis::nmse_refined_nlos(&inp)?,
                nmse_refined_los: analysis::nmse_refined_los(&inp)?,
                nmse_min: analysis::nmse_min(&inp)?,
                nmse_fixed_point: *traj.last().unwrap(),
                threshold_db: analysis::convergence_threshold(&inp, coarse)
                    .ok()
                    .map(crate::geometry::linear_to_db),
            })
        })
        .collect()
}
