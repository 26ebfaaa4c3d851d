//! Reflection schedules, one phase vector per symbol instant.
//!
//! - parity: `Θ_ps[l, i] = τ^(l·i)` with `τ = e^(-2πj/N_ps)`;
//! - pilots: `Θ_*` then `-Θ_*` for repeated (LOS) segments, `Θ_*` alone
//!   otherwise;
//! - info: the designed vector `φ_o` on every instant.
//!
//! `Θ_*` for a segment of `n` instants uses `ω = e^(-2πj/n)` when `n ≤ L_e`.
//! Longer segments concatenate `L_e`-point DFT blocks, block `j` shifting
//! its columns cyclically by `j`. Without the shift a Hadamard pilot of
//! period dividing `L_e` would repeat the same `x ⊗ φ` pairs every block and
//! `Λ_p` would stall at rank `L_e`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::linalg::{CMat, C64};
use crate::modem::packet::FrameLayout;

fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// `L_e × n` Vandermonde block with base `e^(-2πj/n)`.
pub fn dft_segment(l_e: usize, n: usize) -> CMat {
    CMat::from_fn(l_e, n, |l, i| {
        cis(-2.0 * PI * ((l * i) % n) as f64 / n as f64)
    })
}

/// `Θ_*` for a pilot segment of `n` instants.
pub fn pilot_segment(l_e: usize, n: usize) -> CMat {
    if n <= l_e {
        return dft_segment(l_e, n);
    }
    CMat::from_fn(l_e, n, |l, i| {
        let (block, c) = (i / l_e, i % l_e);
        let col = (c + block) % l_e;
        cis(-2.0 * PI * ((l * col) % l_e) as f64 / l_e as f64)
    })
}

fn partitioned(l_e: usize, n: usize) -> CMat {
    let half = pilot_segment(l_e, n / 2);
    let mut out = CMat::zeros(l_e, n);
    out.columns_mut(0, n / 2).copy_from(&half);
    out.columns_mut(n / 2, n / 2).copy_from(&(-half));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSchedule {
    /// `L_e × T`.
    pub theta: CMat,
    pub layout: FrameLayout,
}

impl PhaseSchedule {
    pub fn new(layout: FrameLayout, l_e: usize, phi_o: &[C64]) -> Result<Self> {
        if phi_o.len() != l_e {
            return Err(invalid(format!(
                "φ_o has {} entries for {l_e} elements",
                phi_o.len()
            )));
        }
        crate::channel::check_unit_modulus(phi_o)?;
        let mut theta = CMat::zeros(l_e, layout.t());
        if layout.preamble > 0 {
            theta
                .columns_mut(0, layout.preamble)
                .copy_from(&partitioned(l_e, layout.preamble));
        }
        if layout.parity > 0 {
            theta
                .columns_mut(layout.parity_range().start, layout.parity)
                .copy_from(&dft_segment(l_e, layout.parity));
        }
        if layout.pilots > 0 {
            let seg = if layout.repeated {
                partitioned(l_e, layout.pilots)
            } else {
                pilot_segment(l_e, layout.pilots)
            };
            theta
                .columns_mut(layout.pilot_range().start, layout.pilots)
                .copy_from(&seg);
        }
        let mut s = Self { theta, layout };
        s.set_info(phi_o)?;
        Ok(s)
    }

    /// Schedule with an all-ones placeholder on the info segment.
    pub fn without_info(layout: FrameLayout, l_e: usize) -> Self {
        Self::new(layout, l_e, &vec![C64::new(1.0, 0.0); l_e]).expect("unit vector")
    }

    pub fn set_info(&mut self, phi_o: &[C64]) -> Result<()> {
        if phi_o.len() != self.theta.nrows() {
            return Err(invalid("φ_o length does not match the schedule"));
        }
        for i in self.layout.info_range() {
            for (l, p) in phi_o.iter().enumerate() {
                self.theta[(l, i)] = *p;
            }
        }
        Ok(())
    }

    pub fn l_e(&self) -> usize {
        self.theta.nrows()
    }

    pub fn column(&self, i: usize) -> Vec<C64> {
        self.theta.column(i).iter().cloned().collect()
    }

    pub fn columns(&self, range: std::ops::Range<usize>) -> CMat {
        self.theta.columns(range.start, range.len()).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldpc::LdpcCode;
    use crate::linalg::{fro2, numerical_rank};
    use crate::modem::lambda::build_lambda;
    use crate::modem::packet::pilot_symbols;
    use crate::scenario::Scenario;

    #[test]
    fn parity_rows_orthogonal_when_square() {
        let t = dft_segment(16, 16);
        let g = &t * t.adjoint();
        assert!(fro2(&(g - CMat::identity(16, 16) * C64::new(16.0, 0.0))) < 1e-18);
    }

    #[test]
    fn repeated_halves_negate_and_unit_modulus() {
        let code = LdpcCode::build(512, 0.5, 1).unwrap();
        let layout = FrameLayout::stage1(&code, 16, Scenario::Los).unwrap();
        let s = PhaseSchedule::without_info(layout, 8);
        let r = layout.pilot_range();
        for p in 0..8 {
            for l in 0..8 {
                assert_eq!(s.theta[(l, r.start + p)], -s.theta[(l, r.start + p + 8)]);
            }
        }
        assert!(s.theta.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn pilot_lambda_rank() {
        // LOS: half segment of 8 against K·L_e = 128
        let (k, l_e) = (4, 32);
        for (n_seg, want) in [(8, 8), (48, 48), (96, 96), (128, 128)] {
            let th = pilot_segment(l_e, n_seg);
            let mut x = CMat::zeros(k, n_seg);
            for u in 0..k {
                for (i, v) in pilot_symbols(u, k, n_seg, false, 1.0)
                    .unwrap()
                    .into_iter()
                    .enumerate()
                {
                    x[(u, i)] = v;
                }
            }
            let lam = build_lambda(&x, &th).unwrap();
            assert_eq!(numerical_rank(&lam, 1e-9), want, "segment {n_seg}");
        }
    }
}
