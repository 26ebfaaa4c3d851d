//! Closed-form error, convergence, rate and complexity expressions, plus
//! Monte Carlo oracles that check them.
//!
//! Notation: `T` symbols per block, `K` users, `L_e` reflecting elements,
//! `σ_x²` symbol energy, `σ_n²` noise power, `σ_z²` / `σ_h²` per-entry
//! cascaded / direct variances and `p` the per-component bit error
//! probability of the re-modulated symbols.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{complex_gaussian, fro2, gaussian_matrix, CMat, C64};
use crate::modem::lambda::build_lambda;
use crate::modem::schedule::dft_segment;

/// Phase error `α_Δ` of a re-modulated Gray QPSK symbol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RemodErrorModel {
    pub eps_b: f64,
    /// Probabilities of `1, j, -1, -j`.
    pub pmf: [f64; 4],
    pub mean: f64,
    pub var: f64,
}

pub const ALPHA_POINTS: [C64; 4] = [
    C64::new(1.0, 0.0),
    C64::new(0.0, 1.0),
    C64::new(-1.0, 0.0),
    C64::new(0.0, -1.0),
];

pub fn remod_error_stats(ber: f64) -> Result<RemodErrorModel> {
    if !(0.0..=1.0).contains(&ber) {
        return Err(invalid(format!("BER {ber} outside [0, 1]")));
    }
    let e = ber / 2.0;
    Ok(RemodErrorModel {
        eps_b: e,
        pmf: [(1.0 - e) * (1.0 - e), e * (1.0 - e), e * e, e * (1.0 - e)],
        mean: 1.0 - 2.0 * e,
        var: 4.0 * e * (1.0 - e),
    })
}

/// One draw of `α_Δ`: independent flips of the two Gray bits.
pub fn sample_alpha<R: Rng + ?Sized>(eps_b: f64, rng: &mut R) -> C64 {
    let fi = rng.random::<f64>() < eps_b;
    let fq = rng.random::<f64>() < eps_b;
    // a flipped in-phase bit negates the real part, a flipped quadrature bit
    // the imaginary part; for a symbol s this maps s to α s with α as below
    match (fi, fq) {
        (false, false) => ALPHA_POINTS[0],
        (true, true) => ALPHA_POINTS[2],
        (true, false) => ALPHA_POINTS[1],
        (false, true) => ALPHA_POINTS[3],
    }
}

pub fn nmse_coarse(rank: usize, k: usize, l_e: usize, sigma_n2: f64, sigma_z2: f64) -> Result<f64> {
    if rank > k * l_e {
        return Err(invalid(format!("rank {rank} exceeds K·L_e = {}", k * l_e)));
    }
    if !(sigma_z2 > 0.0) {
        return Err(invalid("σ_z² must be positive"));
    }
    Ok(1.0 - rank as f64 / (k * l_e) as f64 + sigma_n2 / (2.0 * sigma_z2))
}

/// Error of reusing the previous block's estimate.
pub fn tracking_nmse(rho: f64, sigma_est2: f64) -> f64 {
    2.0 * (1.0 - rho) + sigma_est2
}

/// Smallest `ρ` for which reuse beats the coarse estimate.
pub fn gate_rhs(
    rank: usize,
    k: usize,
    l_e: usize,
    sigma_est2: f64,
    sigma_n2: f64,
    sigma_z2: f64,
) -> f64 {
    0.5 + rank as f64 / (2.0 * (k * l_e) as f64) + sigma_est2 / 2.0 - sigma_n2 / (4.0 * sigma_z2)
}

pub fn tracking_gate(
    rho: f64,
    rank: usize,
    k: usize,
    l_e: usize,
    sigma_est2: f64,
    sigma_n2: f64,
    sigma_z2: f64,
) -> bool {
    rho > gate_rhs(rank, k, l_e, sigma_est2, sigma_n2, sigma_z2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticInputs {
    pub t: usize,
    pub k: usize,
    pub l_e: usize,
    pub m: usize,
    pub sigma_x2: f64,
    pub sigma_n2: f64,
    pub sigma_z2: f64,
    pub sigma_h2: f64,
    pub p: f64,
    pub g_c: f64,
}

impl AnalyticInputs {
    fn check(&self) -> Result<()> {
        if self.t <= self.k * self.l_e {
            return Err(invalid(format!(
                "need T > K·L_e, got T = {} and K·L_e = {}",
                self.t,
                self.k * self.l_e
            )));
        }
        if !(0.0..=0.5).contains(&self.p) {
            return Err(invalid(format!("p = {} outside [0, 0.5]", self.p)));
        }
        if !(self.sigma_x2 > 0.0
            && self.sigma_z2 > 0.0
            && self.sigma_n2 >= 0.0
            && self.sigma_h2 >= 0.0)
        {
            return Err(invalid("variances out of range"));
        }
        Ok(())
    }

    fn dof(&self) -> f64 {
        (self.t - self.k * self.l_e) as f64
    }

    /// `L_e (K - (1-2p)²) / T + 4p²`, the symbol-error part of the NMSE.
    fn error_part(&self) -> f64 {
        let q = 1.0 - 2.0 * self.p;
        self.l_e as f64 * (self.k as f64 - q * q) / self.t as f64 + 4.0 * self.p * self.p
    }

    pub fn expected_z_energy(&self) -> f64 {
        (self.m * self.k * self.l_e) as f64 * self.sigma_z2
    }

    pub fn expected_h_energy(&self) -> f64 {
        (self.m * self.k) as f64 * self.sigma_h2
    }
}

pub fn nmse_min(inp: &AnalyticInputs) -> Result<f64> {
    inp.check()?;
    Ok(inp.sigma_n2 / (inp.dof() * inp.sigma_x2 * inp.sigma_z2))
}

pub fn nmse_refined_nlos(inp: &AnalyticInputs) -> Result<f64> {
    inp.check()?;
    Ok(inp.error_part() + nmse_min(inp)?)
}

/// Direct-link estimation error folded into the noise.
pub fn varrho_e(inp: &AnalyticInputs) -> f64 {
    let k = inp.k as f64;
    let den = inp.sigma_n2 + 2.0 * k * inp.sigma_x2 * inp.sigma_h2;
    if den == 0.0 {
        return 1.0;
    }
    k * inp.sigma_h2 / den + 1.0
}

pub fn kappa(inp: &AnalyticInputs) -> f64 {
    let le = inp.l_e as f64;
    le * inp.sigma_z2 / (inp.sigma_h2 + le * inp.sigma_z2)
}

pub fn nmse_refined_los(inp: &AnalyticInputs) -> Result<f64> {
    inp.check()?;
    let noise = inp.sigma_n2 * varrho_e(inp) / (inp.dof() * inp.sigma_x2 * inp.sigma_z2);
    Ok(kappa(inp) * (inp.error_part() + noise))
}

/// Unnormalised symbol-error MSE, `E‖Z_all‖² · [L_e(K-(1-2p)²)/T + 4p²]`.
pub fn mse1(inp: &AnalyticInputs) -> Result<f64> {
    inp.check()?;
    Ok(inp.expected_z_energy() * inp.error_part())
}

/// Unnormalised noise MSE of the refined estimate.
pub fn mse2_nlos(inp: &AnalyticInputs) -> Result<f64> {
    inp.check()?;
    Ok((inp.m * inp.k * inp.l_e) as f64 * inp.sigma_n2 / (inp.dof() * inp.sigma_x2))
}

pub fn mse2_los(inp: &AnalyticInputs) -> Result<f64> {
    Ok(mse2_nlos(inp)? * varrho_e(inp))
}

/// `(MSE₁ + MSE₂) / (E‖H‖² + E‖Z_all‖²)`.
pub fn nmse_los_assembled(inp: &AnalyticInputs) -> Result<f64> {
    Ok((mse1(inp)? + mse2_los(inp)?) / (inp.expected_h_energy() + inp.expected_z_energy()))
}

/// Gaussian tail probability.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn q_term(inp: &AnalyticInputs, sigma_e2: f64) -> f64 {
    if sigma_e2 <= 0.0 {
        return 0.0;
    }
    q_func((inp.sigma_z2 / sigma_e2 * inp.g_c).sqrt())
}

/// One step of the large-block recursion:
/// `NMSE_min + Q(sqrt(σ_z² G_c / σ_e²))²`.
pub fn nmse_recursion(nmse_beta: f64, inp: &AnalyticInputs) -> Result<f64> {
    let q = q_term(inp, nmse_beta);
    Ok(nmse_min(inp)? + q * q)
}

/// The same step keeping the finite-block term, with the bit error
/// probability `p = Q(·)/2`.
pub fn nmse_recursion_full(nmse_beta: f64, inp: &AnalyticInputs) -> Result<f64> {
    let q = q_term(inp, nmse_beta);
    nmse_refined_nlos(&AnalyticInputs { p: q / 2.0, ..*inp })
}

/// Iterates [`nmse_recursion`] from `start` until successive values differ by
/// less than `tol`; returns the trajectory.
pub fn recursion_trajectory(
    start: f64,
    inp: &AnalyticInputs,
    tol: f64,
    max_steps: usize,
) -> Result<Vec<f64>> {
    let mut out = vec![start];
    for _ in 0..max_steps {
        let last = *out.last().unwrap();
        let next = nmse_recursion(last, inp)?;
        out.push(next);
        if (next - last).abs() < tol {
            break;
        }
    }
    Ok(out)
}

pub fn sinr_mean(sigma_z2: f64, sigma_e2: f64, sigma_n2: f64, m: usize, sigma_x2: f64) -> f64 {
    sigma_z2 / (sigma_e2 + sigma_n2 / (m as f64 * sigma_x2))
}

/// Minimum `σ_x²/σ_n²` for the refinement to reduce the error starting from
/// `σ_e²`.
pub fn convergence_threshold(inp: &AnalyticInputs, sigma_e2: f64) -> Result<f64> {
    inp.check()?;
    let q = q_term(inp, sigma_e2);
    let margin = sigma_e2 - q * q;
    if margin <= 0.0 {
        return Err(Error::NoConvergence(format!(
            "σ_e² = {sigma_e2} does not exceed Q² = {}",
            q * q
        )));
    }
    Ok(1.0 / (inp.dof() * margin * inp.sigma_z2))
}

/// Payload bits over transmitted bits across one estimation period.
pub fn effective_code_rate(nb1: usize, nb2: usize, nf: usize, t_bits: usize) -> Result<f64> {
    if nf == 0 || t_bits == 0 {
        return Err(invalid("N_f and T must be positive"));
    }
    Ok((nb1 + (nf - 1) * nb2) as f64 / (nf * t_bits) as f64)
}

/// Dominant complex flop count of `β` estimation iterations.
pub fn flop_estimate(m: usize, k: usize, t: usize, mu: usize, l_e: usize, beta: usize) -> f64 {
    let (m, k, t, mu, l_e, beta) = (
        m as f64,
        k as f64,
        t as f64,
        mu as f64,
        l_e as f64,
        beta as f64,
    );
    (m.powi(3) * k * t * mu + l_e.powi(3) * k.powi(3)) * 2.0 * beta / 3.0
}

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (var / n).sqrt(),
        }
    }

    /// Within `z` standard errors, with a relative floor for degenerate
    /// (zero-variance) samples.
    pub fn agrees(&self, expected: f64, z: f64) -> bool {
        (self.mean - expected).abs() <= z * self.std_err + 1e-9 * expected.abs().max(1e-12)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceCheck {
    pub name: &'static str,
    pub estimate: Estimate,
    pub expected: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceReport {
    pub p: f64,
    pub k: usize,
    pub l_e: usize,
    pub t: usize,
    pub trials: usize,
    pub checks: Vec<TraceCheck>,
}

impl TraceReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn random_qpsk(rng: &mut ChaCha8Rng, k: usize, t: usize, sigma_x2: f64) -> CMat {
    let a = (sigma_x2 / 2.0).sqrt();
    CMat::from_fn(k, t, |_, _| {
        let re = if rng.random::<bool>() { a } else { -a };
        let im = if rng.random::<bool>() { a } else { -a };
        C64::new(re, im)
    })
}

/// Monte Carlo of the two traces behind the symbol-error MSE, using
/// `A = (1/σ_x²T) Σ_i Ω_kron⁽ⁱ⁾ᴴ λ⁽ⁱ⁾ λ⁽ⁱ⁾ᴴ` with random QPSK symbols,
/// row-orthogonal DFT phases and independent `α_Δ` per user and instant.
pub fn validate_trace_identities(
    p: f64,
    k: usize,
    l_e: usize,
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<TraceReport> {
    if k * l_e > 64 || t > 512 || t < l_e || trials == 0 {
        return Err(invalid(
            "trace oracle expects K·L_e ≤ 64, L_e ≤ T ≤ 512 and at least one trial",
        ));
    }
    if !(0.0..=0.5).contains(&p) {
        return Err(invalid("p outside [0, 0.5]"));
    }
    let kl = k * l_e;
    let phases = dft_segment(l_e, t);
    let samples: Vec<[f64; 3]> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(crate::harness::derive_seed(seed, 0, trial as u64));
            let x = random_qpsk(&mut rng, k, t, 1.0);
            let lam = build_lambda(&x, &phases).expect("aligned");
            let mut a = CMat::zeros(kl, kl);
            for i in 0..t {
                let col = lam.column(i);
                let mut left = col.clone_owned();
                for u in 0..k {
                    let alpha = sample_alpha(p, &mut rng).conj();
                    for l in 0..l_e {
                        left[u * l_e + l] *= alpha;
                    }
                }
                a += left * col.adjoint();
            }
            a /= C64::new(t as f64, 0.0);
            let tr1 = (0..kl).map(|i| a[(i, i)].re).sum::<f64>();
            let tr2 = fro2(&a);
            let dev = fro2(&(a - CMat::identity(kl, kl)));
            [tr1, tr2, dev]
        })
        .collect();
    let col = |j: usize| samples.iter().map(|s| s[j]).collect::<Vec<f64>>();
    let (kf, lf, tf) = (k as f64, l_e as f64, t as f64);
    let q = 1.0 - 2.0 * p;
    let expected = [
        q * kf * lf,
        (kf * lf).powi(2) / tf + q * q * lf * kf * (1.0 - lf / tf),
        kf * lf * (lf * (kf - q * q) / tf + 4.0 * p * p),
    ];
    let names = ["tr(ΛΛ_ref†)", "‖ΛΛ_ref†‖²", "MSE₁/(Mσ_z²)"];
    let checks = (0..3)
        .map(|j| {
            let e = Estimate::from_samples(&col(j));
            TraceCheck {
                name: names[j],
                estimate: e,
                expected: expected[j],
                pass: e.agrees(expected[j], 3.0),
            }
        })
        .collect();
    Ok(TraceReport {
        p,
        k,
        l_e,
        t,
        trials,
        checks,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RefineOracleReport {
    pub p: f64,
    pub formula: f64,
    pub correlation: Estimate,
    pub lmmse: Estimate,
    pub pass: bool,
}

/// Refinement error with re-modulation errors injected through `Ω`, against
/// the closed form. The correlation estimator `Y Λ_refᴴ / (σ_x² T)` is the
/// one the closed form describes; the LMMSE estimator is reported alongside.
#[allow(clippy::too_many_arguments)]
pub fn refine_oracle(
    m: usize,
    k: usize,
    l_e: usize,
    t: usize,
    p: f64,
    sigma_n2: f64,
    trials: usize,
    seed: u64,
) -> Result<RefineOracleReport> {
    let inp = AnalyticInputs {
        t,
        k,
        l_e,
        m,
        sigma_x2: 1.0,
        sigma_n2,
        sigma_z2: 1.0,
        sigma_h2: 0.0,
        p,
        g_c: 1.0,
    };
    let formula = nmse_refined_nlos(&inp)?;
    let phases = dft_segment(l_e, t);
    let prior = vec![1.0; k * l_e];
    let rows: Vec<Result<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(crate::harness::derive_seed(seed, 1, trial as u64));
            let z = gaussian_matrix(&mut rng, m, k * l_e, 1.0);
            let x = random_qpsk(&mut rng, k, t, 1.0);
            let lam = build_lambda(&x, &phases)?;
            let mut y = &z * &lam;
            for v in y.iter_mut() {
                *v += complex_gaussian(&mut rng, sigma_n2);
            }
            let mut x_ref = x.clone();
            for v in x_ref.iter_mut() {
                *v *= sample_alpha(p, &mut rng);
            }
            let lam_ref = build_lambda(&x_ref, &phases)?;
            let zc = crate::estimator::lmmse::correlation(&y, &lam_ref, 1.0);
            let zl = crate::estimator::lmmse::lmmse(&y, &lam_ref, &prior, sigma_n2)?;
            let e = fro2(&z);
            Ok((fro2(&(zc - &z)) / e, fro2(&(zl - &z)) / e))
        })
        .collect();
    let mut c = Vec::with_capacity(trials);
    let mut l = Vec::with_capacity(trials);
    for r in rows {
        let (a, b) = r?;
        c.push(a);
        l.push(b);
    }
    let correlation = Estimate::from_samples(&c);
    let lmmse = Estimate::from_samples(&l);
    let pass = correlation.agrees(formula, 3.0) && lmmse.mean <= formula;
    Ok(RefineOracleReport {
        p,
        formula,
        correlation,
        lmmse,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> AnalyticInputs {
        AnalyticInputs {
            t: 512,
            k: 4,
            l_e: 32,
            m: 8,
            sigma_x2: 1.0,
            sigma_n2: 0.1,
            sigma_z2: 1.0,
            sigma_h2: 0.0,
            p: 0.0,
            g_c: 1.0,
        }
    }

    #[test]
    fn remod_stats_examples() {
        let r = remod_error_stats(0.0).unwrap();
        assert_eq!(r.pmf, [1.0, 0.0, 0.0, 0.0]);
        let r = remod_error_stats(0.02).unwrap();
        assert!((r.eps_b - 0.01).abs() < 1e-15);
        assert!((r.mean - 0.98).abs() < 1e-12);
        assert!((r.var - 0.0396).abs() < 1e-12);
        for b in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let r = remod_error_stats(b).unwrap();
            assert!((r.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mean: C64 = ALPHA_POINTS.iter().zip(r.pmf).map(|(a, w)| a * w).sum();
            assert!((mean.re - r.mean).abs() < 1e-12 && mean.im.abs() < 1e-12);
        }
        assert!(remod_error_stats(1.5).is_err());
    }

    #[test]
    fn alpha_matches_gray_remodulation() {
        use crate::modem::qpsk::symbol;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let eps = 0.01;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let b0 = rng.random_range(0..2u8);
            let b1 = rng.random_range(0..2u8);
            let f0 = u8::from(rng.random::<f64>() < eps);
            let f1 = u8::from(rng.random::<f64>() < eps);
            let s = symbol(b0, b1, 1.0);
            let d = symbol(b0 ^ f0, b1 ^ f1, 1.0);
            let alpha = d / s;
            sum += alpha.re;
            sum2 += (alpha - C64::new(1.0 - 2.0 * eps, 0.0)).norm_sqr();
        }
        let r = remod_error_stats(2.0 * eps).unwrap();
        let mean = sum / n as f64;
        let var = sum2 / n as f64;
        let se = (r.var / n as f64).sqrt();
        assert!((mean - r.mean).abs() < 3.0 * se);
        assert!((var - r.var).abs() < 0.03 * r.var);
        // the sampler draws from the same law
        let mut s = 0.0;
        for _ in 0..n {
            s += sample_alpha(eps, &mut rng).re;
        }
        assert!((s / n as f64 - r.mean).abs() < 3.0 * se);
    }

    #[test]
    fn coarse_and_gate() {
        assert_eq!(nmse_coarse(128, 4, 32, 0.0, 1.0).unwrap(), 0.0);
        assert!((nmse_coarse(96, 4, 32, 0.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(nmse_coarse(200, 4, 32, 0.0, 1.0).is_err());
        assert_eq!(tracking_nmse(1.0, 0.0), 0.0);
        assert!((tracking_nmse(0.9925, 0.01) - 0.025).abs() < 1e-12);
        let rhs = gate_rhs(96, 4, 32, 0.01, 0.1, 1.0);
        assert!(tracking_gate(rhs + 1e-9, 96, 4, 32, 0.01, 0.1, 1.0));
        assert!(!tracking_gate(rhs - 1e-9, 96, 4, 32, 0.01, 0.1, 1.0));
        // gate and direct comparison agree
        for rho in [0.6, 0.7, 0.8, 0.9] {
            let direct = tracking_nmse(rho, 0.01) < nmse_coarse(96, 4, 32, 0.1, 1.0).unwrap();
            assert_eq!(direct, tracking_gate(rho, 96, 4, 32, 0.01, 0.1, 1.0));
        }
    }

    #[test]
    fn refined_nlos_examples() {
        let v = nmse_refined_nlos(&base()).unwrap();
        // 0.1/(512-128) + 32·3/512
        assert!((v - (0.1 / 384.0 + 96.0 / 512.0)).abs() < 1e-15);
        assert!((v - 0.1878).abs() < 5e-5);
        assert!(nmse_refined_nlos(&AnalyticInputs { t: 128, ..base() }).is_err());
        let big = AnalyticInputs {
            t: 1 << 30,
            ..base()
        };
        assert!(nmse_min(&big).unwrap() < 1e-9);
    }

    #[test]
    fn refined_monotone() {
        let mut last = f64::INFINITY;
        for t in [200, 400, 800, 1600] {
            let v = nmse_refined_nlos(&AnalyticInputs { t, ..base() }).unwrap();
            assert!(v < last);
            last = v;
        }
        let mut last = 0.0;
        for p in [0.0, 0.01, 0.05, 0.2] {
            let v = nmse_refined_nlos(&AnalyticInputs { p, ..base() }).unwrap();
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn los_reduces_and_scales() {
        let nlos = nmse_refined_nlos(&base()).unwrap();
        let los0 = nmse_refined_los(&AnalyticInputs {
            sigma_h2: 0.0,
            ..base()
        })
        .unwrap();
        assert!((nlos - los0).abs() < 1e-15);
        let h = 100.0 * 32.0;
        let a = nmse_refined_los(&AnalyticInputs {
            sigma_h2: h,
            ..base()
        })
        .unwrap();
        let b = nmse_refined_los(&AnalyticInputs {
            sigma_h2: 2.0 * h,
            ..base()
        })
        .unwrap();
        assert!((a / b - 2.0).abs() < 0.05 * 2.0);
        for sh in [0.0, 0.5, 3.0, 50.0] {
            let inp = AnalyticInputs {
                sigma_h2: sh,
                p: 0.02,
                ..base()
            };
            let x = nmse_refined_los(&inp).unwrap();
            let y = nmse_los_assembled(&inp).unwrap();
            assert!((x - y).abs() < 1e-12 * x.max(1.0), "{x} {y}");
        }
    }

    #[test]
    fn recursion_behaviour() {
        let inp = AnalyticInputs {
            t: 1 << 20,
            ..base()
        };
        let v = nmse_recursion(1e-12, &inp).unwrap();
        assert!((v - nmse_min(&inp).unwrap()).abs() < 1e-15);
        let traj = recursion_trajectory(1.0, &inp, 1e-6, 20).unwrap();
        assert!(traj.len() <= 21);
        let n = traj.len();
        assert!((traj[n - 1] - traj[n - 2]).abs() < 0.01 * traj[n - 2].max(1e-12));
        let full = nmse_recursion_full(0.1, &AnalyticInputs { t: 4096, ..base() }).unwrap();
        assert!(full > nmse_recursion(0.1, &AnalyticInputs { t: 4096, ..base() }).unwrap());
    }

    #[test]
    fn sinr_limit() {
        let g = sinr_mean(1.0, 0.1, 1e-6, 8, 1.0);
        assert!((g - 10.0).abs() / 10.0 < 1e-4);
    }

    #[test]
    fn threshold_directions() {
        let inp = AnalyticInputs {
            t: 1024,
            k: 2,
            l_e: 8,
            ..base()
        };
        let a = convergence_threshold(&inp, 0.3).unwrap();
        let b = convergence_threshold(&AnalyticInputs { g_c: 4.0, ..inp }, 0.3).unwrap();
        assert!(b < a);
        let c = convergence_threshold(
            &AnalyticInputs {
                sigma_z2: 2.0,
                ..inp
            },
            0.3,
        )
        .unwrap();
        assert!(c < a);
        // σ_z²/σ_e² tiny: Q → 1/2 and Q² = 1/4 exceeds σ_e²
        assert!(matches!(
            convergence_threshold(
                &AnalyticInputs {
                    sigma_z2: 1e-9,
                    ..inp
                },
                0.2
            ),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn rate_examples() {
        assert!((effective_code_rate(992, 0, 1, 2048).unwrap() - 992.0 / 2048.0).abs() < 1e-15);
        assert!((effective_code_rate(992, 992, 1, 2048).unwrap() - 0.4844).abs() < 5e-5);
        let mut last = 0.0;
        for nf in 1..=20 {
            let r = effective_code_rate(832, 992, nf, 2048).unwrap();
            assert!(r > last);
            last = r;
        }
        assert!(effective_code_rate(1, 1, 0, 2).is_err());
    }

    #[test]
    fn flops() {
        assert_eq!(flop_estimate(8, 4, 1024, 2, 32, 0), 0.0);
        assert_eq!(flop_estimate(8, 4, 1024, 2, 32, 3), 12_582_912.0);
        let a = flop_estimate(8, 4, 1024, 2, 32, 3) - flop_estimate(1, 4, 1024, 2, 32, 3) * 0.0;
        let det = |m| flop_estimate(m, 4, 1024, 2, 0, 3);
        assert_eq!(det(16), 8.0 * det(8));
        assert!(a > 0.0);
    }

    #[test]
    fn q_function_values() {
        assert!((q_func(0.0) - 0.5).abs() < 1e-15);
        assert!((q_func(1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn trace_limits() {
        let r = validate_trace_identities(0.0, 2, 4, 64, 20, 1).unwrap();
        assert!((r.checks[0].estimate.mean - 8.0).abs() < 1e-9);
        let r = validate_trace_identities(0.5, 2, 4, 64, 200, 1).unwrap();
        assert!(r.checks[0].estimate.mean.abs() < 4.0 * r.checks[0].estimate.std_err + 1e-9);
    }
}
