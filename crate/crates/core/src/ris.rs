//! MMSE reflection design.
//!
//! For stacked receive filters `W` (K×M) the reflection vector minimising
//! `Σ_k ‖e_k − W(h_k + Z_k φ)‖²` solves `B φ = Ψ` with
//! `B = Σ_k (W Z_k)ᴴ(W Z_k)` and `Ψ = Σ_k (W Z_k)ᴴ(e_k − W h_k)`. The
//! surface only applies phases, so the solution is projected onto the unit
//! circle entry by entry.

use crate::channel::equivalent_from_cascaded;
use crate::error::{dim, Error, Result};
use crate::linalg::{hermitian_condition, solve_hermitian, CMat, CVec, C64};

const COND_LIMIT: f64 = 1e12;
const REG_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionDesign {
    pub phi_o: CVec,
    pub phi_trunc: Vec<C64>,
    pub b: CMat,
    pub psi: CVec,
}

/// `e^(j∠φ)` per entry; zero entries map to 1.
pub fn phase_project(phi: &[C64]) -> Vec<C64> {
    phi.iter()
        .map(|p| {
            if p.norm() == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                p / p.norm()
            }
        })
        .collect()
}

/// Mean-square error of the combined channel against the identity.
pub fn design_mse(w: &CMat, h: &CMat, z_all: &CMat, phi: &[C64]) -> f64 {
    let hbar = equivalent_from_cascaded(h, z_all, phi);
    let e = w * hbar - CMat::identity(w.nrows(), w.nrows());
    e.iter().map(|v| v.norm_sqr()).sum()
}

pub fn mmse_reflection(w: &CMat, h: &CMat, z_all: &CMat, l_e: usize) -> Result<ReflectionDesign> {
    let k = h.ncols();
    if w.nrows() != k
        || w.ncols() != h.nrows()
        || z_all.ncols() != k * l_e
        || z_all.nrows() != h.nrows()
    {
        return Err(dim("reflection design: W, H and Z_all sizes disagree"));
    }
    let mut b = CMat::zeros(l_e, l_e);
    let mut psi = CVec::zeros(l_e);
    for u in 0..k {
        let wz = w * z_all.columns(u * l_e, l_e);
        let mut e = CVec::zeros(k);
        e[u] = C64::new(1.0, 0.0);
        let r = e - w * h.column(u);
        b += wz.adjoint() * &wz;
        psi += wz.adjoint() * r;
    }
    let mut sys = b.clone();
    let cond = hermitian_condition(&sys);
    if !(cond <= COND_LIMIT) {
        let tr: f64 = (0..l_e).map(|i| sys[(i, i)].re).sum();
        if !(tr > 0.0) {
            return Err(Error::Singular {
                context: "reflection design",
                condition: cond,
            });
        }
        for i in 0..l_e {
            sys[(i, i)] += C64::new(REG_EPS * tr / l_e as f64, 0.0);
        }
    }
    let rhs = CMat::from_column_slice(l_e, 1, psi.as_slice());
    let phi_o = solve_hermitian(sys, &rhs, "reflection design")?
        .column(0)
        .into_owned();
    let phi_trunc = phase_project(phi_o.as_slice());
    Ok(ReflectionDesign {
        phi_o,
        phi_trunc,
        b,
        psi,
    })
}

/// Stacked unit-prior MMSE filters `W` (rows `w_kᴴ`) for a given `H̄`.
pub fn mmse_filters(hbar: &CMat, sigma_n2: f64, sigma_x2: f64) -> Result<CMat> {
    let k = hbar.ncols();
    let a = crate::detector::system_matrix(hbar, &vec![1.0; k], sigma_n2, sigma_x2);
    Ok(solve_hermitian(a, hbar, "MMSE filters")?.adjoint())
}

/// Alternates filter and reflection updates, starting from all-ones phases.
pub fn design_reflection(
    h: &CMat,
    z_all: &CMat,
    l_e: usize,
    sigma_n2: f64,
    sigma_x2: f64,
    rounds: usize,
) -> Result<Vec<C64>> {
    let mut phi = vec![C64::new(1.0, 0.0); l_e];
    for _ in 0..rounds {
        let hbar = equivalent_from_cascaded(h, z_all, &phi);
        let w = mmse_filters(&hbar, sigma_n2, sigma_x2)?;
        phi = mmse_reflection(&w, h, z_all, l_e)?.phi_trunc;
    }
    Ok(phi)
}
