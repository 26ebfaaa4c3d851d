//! Block-fading channel draws and their cascaded and equivalent forms.
//!
//! One block holds the direct channel `H` (M×K), the AP-RIS channels `G_r`
//! (M×L) and the RIS-user channels `F_r` (L×K). The receiver never sees these
//! factors, only the cascade `Z_all = [G_e diag(f_e,1), ..., G_e diag(f_e,K)]`.

use rand::Rng;

use crate::error::{dim, invalid, Result};
use crate::geometry::LinkBudget;
use crate::linalg::{complex_gaussian, CMat, C64};

const UNIT_MODULUS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub h: CMat,
    pub g: Vec<CMat>,
    pub f: Vec<CMat>,
    pub block: usize,
}

fn draw_into<R: Rng + ?Sized>(m: &mut CMat, rng: &mut R, var_of_col: impl Fn(usize) -> f64) {
    for c in 0..m.ncols() {
        let v = var_of_col(c);
        for r in 0..m.nrows() {
            m[(r, c)] = complex_gaussian(rng, v);
        }
    }
}

/// Fresh Rayleigh realization for `m` receive antennas.
pub fn draw_channels<R: Rng + ?Sized>(
    lb: &LinkBudget,
    m: usize,
    rng: &mut R,
) -> ChannelRealization {
    let k = lb.k();
    let l = lb.elements_per_ris;
    let mut h = CMat::zeros(m, k);
    draw_into(&mut h, rng, |c| lb.sigma_h2[c]);
    let mut g = Vec::with_capacity(lb.sigma_g2.len());
    let mut f = Vec::with_capacity(lb.sigma_g2.len());
    for r in 0..lb.sigma_g2.len() {
        let mut gr = CMat::zeros(m, l);
        draw_into(&mut gr, rng, |_| lb.sigma_g2[r]);
        let mut fr = CMat::zeros(l, k);
        draw_into(&mut fr, rng, |c| lb.sigma_f2[r][c]);
        g.push(gr);
        f.push(fr);
    }
    ChannelRealization { h, g, f, block: 0 }
}

/// One Gauss-Markov step `ρ·X + sqrt(1-ρ²)·Γ` applied to the user-side links
/// (`H` and every `F_r`). The AP-RIS links join two fixed nodes and stay put,
/// which makes every cascaded entry follow the same recursion.
pub fn evolve_markov<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    lb: &LinkBudget,
    rho: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid(format!("rho = {rho} outside [0, 1]")));
    }
    let mut next = ch.clone();
    next.block = ch.block + 1;
    if rho == 1.0 {
        return Ok(next);
    }
    let s = (1.0 - rho * rho).sqrt();
    let step = |x: &mut CMat, rng: &mut R, var_of_col: &dyn Fn(usize) -> f64| {
        for c in 0..x.ncols() {
            let v = var_of_col(c);
            for r in 0..x.nrows() {
                x[(r, c)] = x[(r, c)] * rho + complex_gaussian(rng, v) * s;
            }
        }
    };
    step(&mut next.h, rng, &|c| lb.sigma_h2[c]);
    for (r, fr) in next.f.iter_mut().enumerate() {
        step(fr, rng, &|c| lb.sigma_f2[r][c]);
    }
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadedChannel {
    /// `M × K·L_e`, user blocks side by side.
    pub z_all: CMat,
    pub l_e: usize,
}

impl CascadedChannel {
    pub fn users(&self) -> usize {
        self.z_all.ncols() / self.l_e
    }

    /// `Z_k` as an owned `M × L_e` matrix.
    pub fn z_k(&self, k: usize) -> CMat {
        self.z_all.columns(k * self.l_e, self.l_e).into_owned()
    }
}

impl ChannelRealization {
    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }

    /// `G_e = [G_1 ... G_R]`.
    pub fn g_e(&self) -> CMat {
        let m = self.m();
        let l_e: usize = self.g.iter().map(|g| g.ncols()).sum();
        let mut out = CMat::zeros(m, l_e);
        let mut off = 0;
        for g in &self.g {
            out.columns_mut(off, g.ncols()).copy_from(g);
            off += g.ncols();
        }
        out
    }

    /// `F_e` with the surfaces stacked vertically.
    pub fn f_e(&self) -> CMat {
        let k = self.k();
        let l_e: usize = self.f.iter().map(|f| f.nrows()).sum();
        let mut out = CMat::zeros(l_e, k);
        let mut off = 0;
        for f in &self.f {
            out.rows_mut(off, f.nrows()).copy_from(f);
            off += f.nrows();
        }
        out
    }

    pub fn cascade(&self) -> Result<CascadedChannel> {
        let g_e = self.g_e();
        let f_e = self.f_e();
        if g_e.ncols() != f_e.nrows() {
            return Err(dim(format!(
                "G_e has {} columns, F_e has {} rows",
                g_e.ncols(),
                f_e.nrows()
            )));
        }
        let (m, l_e, k) = (g_e.nrows(), g_e.ncols(), f_e.ncols());
        let mut z_all = CMat::zeros(m, k * l_e);
        for u in 0..k {
            for l in 0..l_e {
                let col = g_e.column(l) * f_e[(l, u)];
                z_all.column_mut(u * l_e + l).copy_from(&col);
            }
        }
        Ok(CascadedChannel { z_all, l_e })
    }

    /// `H̄ = H + G_e diag(φ) F_e`.
    pub fn equivalent(&self, phi: &[C64]) -> Result<CMat> {
        check_unit_modulus(phi)?;
        let g_e = self.g_e();
        let f_e = self.f_e();
        if phi.len() != g_e.ncols() {
            return Err(invalid(format!(
                "phase vector has {} entries for {} elements",
                phi.len(),
                g_e.ncols()
            )));
        }
        let mut gp = g_e;
        for (c, p) in phi.iter().enumerate() {
            {
                let mut col = gp.column_mut(c);
                col *= *p;
            }
        }
        Ok(&self.h + gp * f_e)
    }
}

pub fn check_unit_modulus(phi: &[C64]) -> Result<()> {
    for (i, p) in phi.iter().enumerate() {
        if (p.norm() - 1.0).abs() > UNIT_MODULUS_TOL {
            return Err(invalid(format!("phase entry {i} has modulus {}", p.norm())));
        }
    }
    Ok(())
}

/// `H̄ = H + [Z_1 φ, ..., Z_K φ]` from (possibly estimated) channel parts.
pub fn equivalent_from_cascaded(h: &CMat, z_all: &CMat, phi: &[C64]) -> CMat {
    let k = h.ncols();
    let l_e = phi.len();
    let mut out = h.clone();
    for u in 0..k {
        for (l, p) in phi.iter().enumerate() {
            let col = z_all.column(u * l_e + l);
            let mut dst = out.column_mut(u);
            dst.axpy(*p, &col, C64::new(1.0, 0.0));
        }
    }
    out
}

/// Noisy reception `Y = H X + Z_all Λ + N` where column `i` of `Λ` is
/// `x⁽ⁱ⁾ ⊗ φ⁽ⁱ⁾`.
pub fn transmit<R: Rng + ?Sized>(
    h: &CMat,
    z_all: &CMat,
    x: &CMat,
    phases: &CMat,
    sigma_n2: f64,
    rng: &mut R,
) -> Result<CMat> {
    if x.ncols() != phases.ncols()
        || x.nrows() != h.ncols()
        || z_all.ncols() != x.nrows() * phases.nrows()
    {
        return Err(dim("transmit: symbol, phase and channel sizes disagree"));
    }
    let lambda = crate::modem::lambda::build_lambda(x, phases)?;
    let mut y = h * x + z_all * lambda;
    for v in y.iter_mut() {
        *v += complex_gaussian(rng, sigma_n2);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro2, gaussian_matrix, kron_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn budget() -> LinkBudget {
        LinkBudget::normalized(3, 2, 4, 1.0, 0.5, 0.1)
    }

    fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
            .collect()
    }

    #[test]
    fn zero_variance_gives_zero_matrix() {
        let lb = LinkBudget::normalized(2, 1, 3, 1.0, 0.0, 1.0);
        let ch = draw_channels(&lb, 4, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(fro2(&ch.h), 0.0);
    }

    #[test]
    fn same_seed_same_channel() {
        let a = draw_channels(&budget(), 4, &mut ChaCha8Rng::seed_from_u64(4));
        let b = draw_channels(&budget(), 4, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn single_element_unit_reflection() {
        let lb = LinkBudget::normalized(2, 1, 1, 1.0, 1.0, 1.0);
        let mut ch = draw_channels(&lb, 3, &mut ChaCha8Rng::seed_from_u64(2));
        ch.f[0].fill(C64::new(1.0, 0.0));
        let c = ch.cascade().unwrap();
        assert_eq!(c.z_k(0), ch.g[0]);
        assert_eq!(c.z_k(1), ch.g[0]);
    }

    #[test]
    fn representations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = draw_channels(&budget(), 4, &mut rng);
        let c = ch.cascade().unwrap();
        let g_e = ch.g_e();
        let f_e = ch.f_e();
        for _ in 0..100 {
            let phi = random_phases(&mut rng, 8);
            let x = gaussian_matrix(&mut rng, 3, 1, 1.0);
            let xs: Vec<C64> = x.iter().cloned().collect();
            // Σ Z_k φ x_k
            let mut sum = CMat::zeros(4, 1);
            for k in 0..3 {
                let zphi = c.z_k(k) * crate::CVec::from_column_slice(&phi);
                sum += zphi * xs[k];
            }
            let mut gp = g_e.clone();
            for (i, p) in phi.iter().enumerate() {
                {
                    let mut col = gp.column_mut(i);
                    col *= *p;
                }
            }
            let direct_form = &gp * &f_e * &x;
            let kron_form = &c.z_all * kron_vec(&xs, &phi);
            assert!(fro2(&(&sum - &direct_form)) < 1e-20);
            assert!(fro2(&(&sum - CMat::from_column_slice(4, 1, kron_form.as_slice()))) < 1e-20);

            let hbar = ch.equivalent(&phi).unwrap();
            let lhs = &hbar * &x;
            let rhs = &ch.h * &x + CMat::from_column_slice(4, 1, kron_form.as_slice());
            assert!(fro2(&(lhs - rhs)) < 1e-20);
            let hb2 = equivalent_from_cascaded(&ch.h, &c.z_all, &phi);
            assert!(fro2(&(hbar - hb2)) < 1e-20);
        }
    }

    #[test]
    fn equivalent_reduces_to_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ch = draw_channels(&budget(), 4, &mut rng);
        for f in ch.f.iter_mut() {
            f.fill(C64::new(0.0, 0.0));
        }
        let ones = vec![C64::new(1.0, 0.0); 8];
        assert_eq!(ch.equivalent(&ones).unwrap(), ch.h);
    }

    #[test]
    fn non_unit_phase_rejected() {
        let ch = draw_channels(&budget(), 4, &mut ChaCha8Rng::seed_from_u64(1));
        let mut phi = vec![C64::new(1.0, 0.0); 8];
        phi[3] = C64::new(1.1, 0.0);
        assert!(ch.equivalent(&phi).is_err());
    }

    #[test]
    fn markov_limits() {
        let lb = budget();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = draw_channels(&lb, 4, &mut rng);
        let same = evolve_markov(&ch, &lb, 1.0, &mut rng).unwrap();
        assert_eq!(same.h, ch.h);
        assert_eq!(same.f, ch.f);
        assert_eq!(same.block, 1);
        assert!(evolve_markov(&ch, &lb, 1.2, &mut rng).is_err());
        assert!(evolve_markov(&ch, &lb, -0.1, &mut rng).is_err());
    }
}
