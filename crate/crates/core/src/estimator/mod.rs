//! Iterative code-aided channel estimation (ICCE) and its tracking variant
//! (ICT).
//!
//! A block is received in two pieces. The head (preamble, parity and pilot
//! segments) uses a fixed phase schedule and yields a coarse estimate; the
//! reflection vector for the info segment is designed from that estimate
//! before the info segment goes on air. The receiver then alternates IDD with
//! a refinement that treats the re-encoded, re-modulated decisions as pilots.

pub mod lmmse;

use std::ops::Range;

use rand::Rng;
use serde::Serialize;

use crate::analysis::{self, AnalyticInputs};
use crate::channel::{equivalent_from_cascaded, transmit};
use crate::detector::{ber_from_llrs, idd, IddParams};
use crate::error::{dim, invalid, Result};
use crate::geometry::LinkBudget;
use crate::ldpc::LdpcCode;
use crate::linalg::{fro2, CMat, C64};
use crate::modem::lambda::build_lambda;
use crate::modem::packet::{FrameLayout, PacketBuilder};
use crate::modem::qpsk::qpsk_modulate;
use crate::modem::schedule::PhaseSchedule;
use crate::ris::design_reflection;
use crate::scenario::{RefineMode, SystemConfig};

pub use lmmse::{
    correlation, least_squares, lmmse, lmmse_route, posterior_cov, posterior_error, Route,
};

/// Rewrites the wire-order bits of one user before re-modulation.
pub type BitHook<'a> = &'a dyn Fn(usize, &mut [u8]);
/// Called with `(β, user, wire bits)` before re-modulation.
pub type BlockHook = dyn Fn(usize, usize, &mut [u8]) + Sync;

/// Half-sum and half-difference of a repeated segment `[Y_a | Y_b]`.
///
/// With phases `[Θ, −Θ]` and symbols `[x, x]` the sum keeps only the direct
/// link and the difference only the reflected one, each with half the noise
/// power.
#[derive(Clone, Debug, PartialEq)]
pub struct Partitions {
    pub direct: CMat,
    pub reflected: CMat,
}

pub fn split_partitions(y: &CMat) -> Result<Partitions> {
    let n = y.ncols();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(dim(format!(
            "partitioned segment needs an even, non-zero length, got {n}"
        )));
    }
    let h = n / 2;
    let a = y.columns(0, h);
    let b = y.columns(h, h);
    Ok(Partitions {
        direct: (a + b) * C64::new(0.5, 0.0),
        reflected: (a - b) * C64::new(0.5, 0.0),
    })
}

/// Everything the receiver knows about the block format.
#[derive(Clone, Debug)]
pub struct Frame<'a> {
    pub code: &'a LdpcCode,
    pub layout: FrameLayout,
    pub sigma_x2: f64,
    /// `K × preamble`.
    pub preamble_x: CMat,
    /// `K × pilots`.
    pub pilot_x: CMat,
    /// Message-order pilot bits per user.
    pub known: Vec<Vec<u8>>,
}

impl<'a> Frame<'a> {
    pub fn new(builder: &PacketBuilder<'a>, layout: FrameLayout) -> Result<Self> {
        let k = builder.users;
        let mut preamble_x = CMat::zeros(k, layout.preamble);
        let mut pilot_x = CMat::zeros(k, layout.pilots);
        let mut known = Vec::with_capacity(k);
        for u in 0..k {
            for (i, s) in builder.preamble(u, &layout)?.into_iter().enumerate() {
                preamble_x[(u, i)] = s;
            }
            for (i, s) in builder.pilots(u, &layout)?.into_iter().enumerate() {
                pilot_x[(u, i)] = s;
            }
            known.push(builder.pilot_bits(u, &layout)?);
        }
        Ok(Self {
            code: builder.code,
            layout,
            sigma_x2: builder.sigma_x2,
            preamble_x,
            pilot_x,
            known,
        })
    }

    pub fn users(&self) -> usize {
        self.known.len()
    }

    /// The segment used for the coarse estimate: the preamble if there is
    /// one, else the encoded pilots.
    fn training(&self) -> (Range<usize>, &CMat) {
        if self.layout.preamble > 0 {
            (0..self.layout.preamble, &self.preamble_x)
        } else {
            (self.layout.pilot_range(), &self.pilot_x)
        }
    }

    /// Rank of the coarse cascaded estimate (at most `K·L_e`).
    pub fn coarse_rank(&self, l_e: usize) -> usize {
        let (r, _) = self.training();
        let n = if self.layout.repeated {
            r.len() / 2
        } else {
            r.len()
        };
        n.min(self.users() * l_e)
    }

    /// `K × T` symbols from decoded messages, with an optional hook that may
    /// alter the wire-order bits of each user before modulation.
    pub fn remodulate(&self, messages: &[Vec<u8>], corrupt: Option<BitHook<'_>>) -> Result<CMat> {
        let t = self.layout.t();
        let mut x = CMat::zeros(self.users(), t);
        x.columns_mut(0, self.layout.preamble)
            .copy_from(&self.preamble_x);
        let builder = PacketBuilder::new(self.code, self.users(), self.sigma_x2);
        for (u, msg) in messages.iter().enumerate() {
            let mut wire = builder.encode_wire(msg)?;
            if let Some(f) = corrupt {
                f(u, &mut wire);
            }
            for (i, s) in qpsk_modulate(&wire, self.sigma_x2)?.into_iter().enumerate() {
                x[(u, self.layout.preamble + i)] = s;
            }
        }
        Ok(x)
    }
}

/// Source of received samples. Columns are requested in order, together
/// with the phases the surfaces apply at those instants.
pub trait Air {
    fn receive(&mut self, cols: Range<usize>, phases: &CMat) -> Result<CMat>;
}

/// Simulated propagation of known symbols through known channels.
pub struct SimAir<'a, R: Rng + ?Sized> {
    pub h: &'a CMat,
    pub z_all: &'a CMat,
    pub x: &'a CMat,
    pub sigma_n2: f64,
    pub rng: &'a mut R,
}

impl<R: Rng + ?Sized> Air for SimAir<'_, R> {
    fn receive(&mut self, cols: Range<usize>, phases: &CMat) -> Result<CMat> {
        if cols.end > self.x.ncols() {
            return Err(dim("requested columns beyond the block"));
        }
        let x = self.x.columns(cols.start, cols.len()).into_owned();
        transmit(self.h, self.z_all, &x, phases, self.sigma_n2, self.rng)
    }
}

#[derive(Clone, Debug)]
pub struct ReceiverParams {
    pub m: usize,
    pub l_e: usize,
    pub sigma_n2: f64,
    pub sigma_x2: f64,
    /// Prior variance of each column of `H` (one per user).
    pub direct_prior: Vec<f64>,
    /// Prior variance of each column of `Z_all`.
    pub cascaded_prior: Vec<f64>,
    pub estimate_direct: bool,
    pub idd_iters: usize,
    pub decoder_iters: usize,
    pub max_beta: usize,
    pub tol: f64,
    pub ris_rounds: usize,
    pub refine: RefineMode,
    /// Error-aware detection and reliability-weighted refinement.
    pub error_aware: bool,
    /// Receiver's belief about the block-to-block correlation, for the gate.
    pub rho: f64,
    /// Rank of the stage-1 coarse estimate, for the gate.
    pub coarse_rank: usize,
}

impl ReceiverParams {
    pub fn new(cfg: &SystemConfig, lb: &LinkBudget, sigma_x2: f64) -> Self {
        let d = cfg.dims();
        let n_p = cfg.pilots.stage1;
        let n_eff = if cfg.scenario() == crate::scenario::Scenario::Los {
            n_p / 2
        } else {
            n_p
        };
        Self {
            m: d.m,
            l_e: d.l_e,
            sigma_n2: lb.sigma_n2,
            sigma_x2,
            direct_prior: lb.sigma_h2.clone(),
            cascaded_prior: lb.cascaded_prior(),
            estimate_direct: cfg.estimates_direct(),
            idd_iters: cfg.receiver.idd_iters,
            decoder_iters: cfg.code.decoder_iters,
            max_beta: cfg.receiver.icce_iters,
            tol: cfg.receiver.tol,
            ris_rounds: cfg.receiver.ris_rounds,
            refine: cfg.receiver.refine,
            error_aware: cfg.receiver.error_aware,
            rho: cfg.rho(),
            coarse_rank: n_eff.min(d.k * d.l_e),
        }
    }

    fn k(&self) -> usize {
        self.direct_prior.len()
    }

    fn mean(v: &[f64]) -> f64 {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    /// Closed-form refined NMSE at bit error rate `ber` for a block of `t`
    /// symbols; NaN when the block is too short for the expression.
    pub fn predicted_nmse(&self, ber: f64, t: usize) -> f64 {
        let inp = AnalyticInputs {
            t,
            k: self.k(),
            l_e: self.l_e,
            m: self.m,
            sigma_x2: self.sigma_x2,
            sigma_n2: self.sigma_n2,
            sigma_z2: Self::mean(&self.cascaded_prior),
            sigma_h2: if self.estimate_direct {
                Self::mean(&self.direct_prior)
            } else {
                0.0
            },
            p: (ber / 2.0).clamp(0.0, 0.5),
            g_c: 1.0,
        };
        let v = if self.estimate_direct {
            analysis::nmse_refined_los(&inp)
        } else {
            analysis::nmse_refined_nlos(&inp)
        };
        v.unwrap_or(f64::NAN)
    }
}

/// Per-pass hooks used by experiments.
#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// True `K × T` symbols; refinement uses them instead of decisions.
    pub genie: Option<&'a CMat>,
    /// Called with `(β, user, wire bits)` before re-modulation.
    pub corrupt: Option<&'a BlockHook>,
}

/// Estimates and decisions of one IDD pass.
#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub beta: usize,
    #[serde(skip)]
    pub h_hat: CMat,
    #[serde(skip)]
    pub z_hat: CMat,
    #[serde(skip)]
    pub messages: Vec<Vec<u8>>,
    pub converged: Vec<bool>,
    pub ber_estimate: f64,
    pub mean_sinr: f64,
}

#[derive(Clone, Debug)]
pub struct EstimationState {
    /// Final estimates, refined with the last decisions.
    pub h_hat: CMat,
    pub z_hat: CMat,
    /// Receiver's error covariance of each row of `z_hat`.
    pub z_cov: CMat,
    /// Reflection vector for the next block.
    pub phi_o: Vec<C64>,
    /// One entry per IDD pass; entry `β` holds the estimate that pass used.
    pub trajectory: Vec<Snapshot>,
    /// Receiver-side estimate of the final NMSE.
    pub sigma_est2: f64,
    /// Whether reuse was predicted to beat a fresh coarse estimate; only set
    /// for tracking blocks.
    pub gate: Option<bool>,
    /// Stopped on the tolerance before `β_max`.
    pub converged_early: bool,
}

impl EstimationState {
    pub fn last(&self) -> &Snapshot {
        self.trajectory.last().expect("at least one pass")
    }
}

fn check(frame: &Frame, p: &ReceiverParams) -> Result<()> {
    if frame.users() != p.k() || p.cascaded_prior.len() != p.k() * p.l_e {
        return Err(dim("receiver priors do not match the frame"));
    }
    if p.idd_iters == 0 {
        return Err(invalid("idd_iters must be at least 1"));
    }
    Ok(())
}

/// Direct-link estimate with its per-user error variance.
struct Direct {
    h: CMat,
    err: Vec<f64>,
}

impl Direct {
    fn none(p: &ReceiverParams) -> Self {
        Self {
            h: CMat::zeros(p.m, p.k()),
            err: vec![0.0; p.k()],
        }
    }

    fn from_partition(p: &ReceiverParams, y: &CMat, x_a: &CMat) -> Result<Self> {
        let noise = p.sigma_n2 / 2.0;
        Ok(Self {
            h: lmmse(y, x_a, &p.direct_prior, noise)?,
            err: posterior_error(x_a, &p.direct_prior, noise)?,
        })
    }
}

/// Coarse estimate from the training segment.
fn coarse(
    frame: &Frame,
    p: &ReceiverParams,
    y: &CMat,
    sched: &PhaseSchedule,
) -> Result<(Direct, CMat, CMat)> {
    let (range, xs) = frame.training();
    let y_t = y.columns(range.start, range.len()).into_owned();
    let th = sched.columns(range.clone());
    if frame.layout.repeated && p.estimate_direct {
        let part = split_partitions(&y_t)?;
        let half = range.len() / 2;
        let x_a = xs.columns(0, half).into_owned();
        let h = Direct::from_partition(p, &part.direct, &x_a)?;
        let lam = build_lambda(&x_a, &th.columns(0, half).into_owned())?;
        let z = lmmse(&part.reflected, &lam, &p.cascaded_prior, p.sigma_n2 / 2.0)?;
        Ok((
            h,
            z,
            posterior_cov(&lam, &p.cascaded_prior, p.sigma_n2 / 2.0)?,
        ))
    } else {
        let lam = build_lambda(xs, &th)?;
        let z = lmmse(&y_t, &lam, &p.cascaded_prior, p.sigma_n2)?;
        Ok((
            Direct::none(p),
            z,
            posterior_cov(&lam, &p.cascaded_prior, p.sigma_n2)?,
        ))
    }
}

/// Direct link from the preamble partitions, keeping the cascaded part.
fn direct_only(frame: &Frame, p: &ReceiverParams, y: &CMat) -> Result<Direct> {
    let (range, xs) = frame.training();
    if !(frame.layout.repeated && p.estimate_direct) || range.is_empty() {
        return Ok(Direct::none(p));
    }
    let part = split_partitions(&y.columns(range.start, range.len()).into_owned())?;
    let x_a = xs.columns(0, range.len() / 2).into_owned();
    Direct::from_partition(p, &part.direct, &x_a)
}

fn receive_block(
    frame: &Frame,
    p: &ReceiverParams,
    air: &mut dyn Air,
    h: &CMat,
    z: &CMat,
    y_head: CMat,
    sched: &mut PhaseSchedule,
) -> Result<CMat> {
    let phi = design_reflection(h, z, p.l_e, p.sigma_n2, p.sigma_x2, p.ris_rounds)?;
    sched.set_info(&phi)?;
    let info = frame.layout.info_range();
    let y_info = air.receive(info.clone(), &sched.columns(info.clone()))?;
    let mut y = CMat::zeros(p.m, frame.layout.t());
    y.columns_mut(0, info.start).copy_from(&y_head);
    y.columns_mut(info.start, info.len()).copy_from(&y_info);
    Ok(y)
}

fn receive_head(frame: &Frame, air: &mut dyn Air, sched: &PhaseSchedule) -> Result<CMat> {
    let head = 0..frame.layout.info_range().start;
    air.receive(head.clone(), &sched.columns(head))
}

/// Alternates IDD and refinement starting from `(h, z)`.
/// Mean error power of the equivalent channel over the coded columns,
/// `Σ_k (e_k + φᴴ C_k φ)`, with `C_k` the user's block of `z_cov`.
fn equivalent_error(
    direct_err: &[f64],
    z_cov: &CMat,
    theta: &CMat,
    cols: Range<usize>,
    l_e: usize,
) -> f64 {
    if cols.is_empty() {
        return 0.0;
    }
    let base: f64 = direct_err.iter().sum();
    let mut total = 0.0;
    let mut last: Option<(usize, f64)> = None;
    for i in cols.clone() {
        let v = match last {
            Some((j, v)) if theta.column(j) == theta.column(i) => v,
            _ => {
                let phi = theta.column(i);
                let mut v = base;
                for k in 0..direct_err.len() {
                    let c = z_cov.view((k * l_e, k * l_e), (l_e, l_e));
                    v += (phi.adjoint() * c * phi)[(0, 0)].re;
                }
                v
            }
        };
        last = Some((i, v));
        total += v;
    }
    total / cols.len() as f64
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    frame: &Frame,
    p: &ReceiverParams,
    y: &CMat,
    sched: &PhaseSchedule,
    direct: Direct,
    mut z: CMat,
    mut z_cov: CMat,
    opts: &RunOptions,
) -> Result<EstimationState> {
    let h = direct.h;
    // residual (H - Ĥ) X̂ acts as extra noise on the cascaded observation
    let direct_noise = if p.estimate_direct {
        p.sigma_x2 * direct.err.iter().sum::<f64>()
    } else {
        0.0
    };
    let coded = frame.layout.coded_range();
    let y_coded = y.columns(coded.start, coded.len()).into_owned();
    let mut idd_p = IddParams {
        iters: p.idd_iters,
        decoder_iters: p.decoder_iters,
        sigma_n2: p.sigma_n2,
        sigma_x2: p.sigma_x2,
    };
    let pilot_bits = frame.known.first().map_or(0, |v| v.len());
    let mut trajectory = Vec::new();
    let mut converged_early = false;
    for beta in 0..=p.max_beta {
        let mut hbars: Vec<CMat> = Vec::with_capacity(coded.len());
        for i in coded.clone() {
            let col = sched.theta.column(i);
            match hbars.last() {
                Some(prev) if i > coded.start && sched.theta.column(i - 1) == col => {
                    let prev = prev.clone();
                    hbars.push(prev)
                }
                _ => {
                    let phi: Vec<C64> = col.iter().cloned().collect();
                    hbars.push(equivalent_from_cascaded(&h, &z, &phi))
                }
            }
        }
        if p.error_aware {
            idd_p.sigma_n2 = p.sigma_n2
                + p.sigma_x2
                    * equivalent_error(&direct.err, &z_cov, &sched.theta, coded.clone(), p.l_e);
        }
        let out = idd(&y_coded, &hbars, frame.code, &frame.known, &idd_p)?;
        let k_bits = frame.code.k();
        let free: Vec<f64> = out
            .posteriors
            .iter()
            .flat_map(|post| {
                post[pilot_bits..k_bits]
                    .iter()
                    .chain(post[k_bits..].iter())
                    .cloned()
            })
            .collect();
        // E[x x̂*] / σ_x² per user: a codeword that passes its parity checks
        // is taken as correct, a failed one carries no usable data
        let reliability: Vec<f64> = if opts.genie.is_some() || !p.error_aware {
            vec![1.0; p.k()]
        } else {
            out.converged
                .iter()
                .map(|&c| if c { 1.0 } else { 0.0 })
                .collect()
        };
        trajectory.push(Snapshot {
            beta,
            h_hat: h.clone(),
            z_hat: z.clone(),
            messages: out.messages.clone(),
            converged: out.converged.clone(),
            ber_estimate: ber_from_llrs(&free),
            mean_sinr: out.mean_sinr,
        });

        let xhat = match opts.genie {
            Some(x) => x.clone(),
            None => match opts.corrupt {
                Some(f) => {
                    let hook = |u: usize, bits: &mut [u8]| f(beta, u, bits);
                    frame.remodulate(&out.messages, Some(&hook))?
                }
                None => frame.remodulate(&out.messages, None)?,
            },
        };
        let z_new = match p.refine {
            RefineMode::Lmmse => {
                // On decided columns x = m x̂ + e with e uncorrelated with x̂
                // and of power σ_x²(1 - m²), seen through both links;
                // training columns are exact. Columns are whitened by their
                // noise before the common solve.
                let known =
                    |i: usize| i < frame.layout.preamble || frame.layout.pilot_range().contains(&i);
                let mut xs = xhat;
                let mut extra = 0.0;
                for (k, &m) in reliability.iter().enumerate() {
                    let link = p.cascaded_prior[k * p.l_e..(k + 1) * p.l_e]
                        .iter()
                        .sum::<f64>()
                        + if p.estimate_direct {
                            p.direct_prior[k]
                        } else {
                            0.0
                        };
                    extra += p.sigma_x2 * (1.0 - m * m) * link;
                    for i in (0..xs.ncols()).filter(|&i| !known(i)) {
                        xs[(k, i)] *= m;
                    }
                }
                let mut yw = if p.estimate_direct {
                    y - &h * &xs
                } else {
                    y.clone()
                };
                let mut lam = build_lambda(&xs, &sched.theta)?;
                let base = p.sigma_n2 + direct_noise;
                for i in 0..lam.ncols() {
                    let w = 1.0 / if known(i) { base } else { base + extra }.sqrt();
                    yw.column_mut(i).scale_mut(w);
                    lam.column_mut(i).scale_mut(w);
                }
                if p.error_aware {
                    z_cov = posterior_cov(&lam, &p.cascaded_prior, 1.0)?;
                }
                lmmse(&yw, &lam, &p.cascaded_prior, 1.0)?
            }
            RefineMode::Correlation => {
                let y_casc = if p.estimate_direct {
                    y - &h * &xhat
                } else {
                    y.clone()
                };
                correlation(&y_casc, &build_lambda(&xhat, &sched.theta)?, p.sigma_x2)
            }
        };
        let change = fro2(&(&z_new - &z)) / fro2(&z).max(f64::MIN_POSITIVE);
        z = z_new;
        if change < p.tol {
            converged_early = beta < p.max_beta;
            break;
        }
    }
    let ber = trajectory.last().map_or(0.0, |s| s.ber_estimate);
    let phi_o = design_reflection(&h, &z, p.l_e, p.sigma_n2, p.sigma_x2, p.ris_rounds)?;
    Ok(EstimationState {
        sigma_est2: p.predicted_nmse(ber, frame.layout.t()),
        h_hat: h,
        z_hat: z,
        z_cov,
        phi_o,
        trajectory,
        gate: None,
        converged_early,
    })
}

/// Full estimation of one block from scratch.
pub fn icce(
    frame: &Frame,
    p: &ReceiverParams,
    air: &mut dyn Air,
    opts: &RunOptions,
) -> Result<EstimationState> {
    check(frame, p)?;
    let mut sched = PhaseSchedule::without_info(frame.layout, p.l_e);
    let y_head = receive_head(frame, air, &sched)?;
    let (h, z, z_cov) = coarse(frame, p, &y_head, &sched)?;
    let y = receive_block(frame, p, air, &h.h, &z, y_head, &mut sched)?;
    iterate(frame, p, &y, &sched, h, z, z_cov, opts)
}

/// Tracking: starts from the previous block's cascaded estimate. In LOS the
/// direct link is re-estimated from the preamble. Without a previous state
/// this is [`icce`] on the given frame.
pub fn ict_step(
    prev: Option<&EstimationState>,
    frame: &Frame,
    p: &ReceiverParams,
    air: &mut dyn Air,
    opts: &RunOptions,
) -> Result<EstimationState> {
    let Some(prev) = prev else {
        return icce(frame, p, air, opts);
    };
    check(frame, p)?;
    if prev.z_hat.shape() != (p.m, p.k() * p.l_e) {
        return Err(dim("previous estimate has the wrong shape"));
    }
    let mut sched = PhaseSchedule::without_info(frame.layout, p.l_e);
    let y_head = receive_head(frame, air, &sched)?;
    let h = direct_only(frame, p, &y_head)?;
    let z = prev.z_hat.clone();
    let y = receive_block(frame, p, air, &h.h, &z, y_head, &mut sched)?;
    // the previous error plus the innovation since that block
    let mut z_cov = prev.z_cov.clone();
    for (i, r) in p.cascaded_prior.iter().enumerate() {
        z_cov[(i, i)] += C64::new((1.0 - p.rho * p.rho) * r, 0.0);
    }
    let mut state = iterate(frame, p, &y, &sched, h, z, z_cov, opts)?;
    let sz2 = ReceiverParams::mean(&p.cascaded_prior);
    state.gate = Some(analysis::tracking_gate(
        p.rho,
        p.coarse_rank,
        p.k(),
        p.l_e,
        prev.sigma_est2,
        p.sigma_n2 / p.sigma_x2,
        sz2,
    ));
    Ok(state)
}
