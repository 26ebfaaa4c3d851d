//! Gray-mapped QPSK with per-component bits: `b0` on the in-phase axis,
//! `b1` on quadrature, a zero bit mapping to the positive side.

use crate::error::{invalid, Result};
use crate::ldpc::clip_llr;
use crate::linalg::C64;

/// Amplitude per component for symbol energy `sigma_x2`.
pub fn amplitude(sigma_x2: f64) -> f64 {
    (sigma_x2 / 2.0).sqrt()
}

pub fn symbol(b0: u8, b1: u8, sigma_x2: f64) -> C64 {
    let a = amplitude(sigma_x2);
    C64::new(
        a * (1.0 - 2.0 * (b0 & 1) as f64),
        a * (1.0 - 2.0 * (b1 & 1) as f64),
    )
}

pub fn qpsk_modulate(bits: &[u8], sigma_x2: f64) -> Result<Vec<C64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(invalid(format!("odd bit count {} for QPSK", bits.len())));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|p| symbol(p[0], p[1], sigma_x2))
        .collect())
}

/// Bit LLRs of `y = x + n` with `n ~ CN(0, noise_var)`.
pub fn qpsk_soft_demod(y: &[C64], noise_var: f64, sigma_x2: f64) -> Result<Vec<f64>> {
    if !(noise_var > 0.0) {
        return Err(invalid("noise variance must be positive"));
    }
    let g = 4.0 * amplitude(sigma_x2) / noise_var;
    let mut out = Vec::with_capacity(2 * y.len());
    for s in y {
        out.push(clip_llr(g * s.re));
        out.push(clip_llr(g * s.im));
    }
    Ok(out)
}

/// Nearest-symbol bits.
pub fn hard_bits(y: &[C64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 * y.len());
    for s in y {
        out.push(u8::from(s.re < 0.0));
        out.push(u8::from(s.im < 0.0));
    }
    out
}
