//! `Λ` matrices: column `i` is `x⁽ⁱ⁾ ⊗ φ⁽ⁱ⁾`, so that `Z_all Λ` is the
//! reflected part of the received block.

use crate::error::{dim, Result};
use crate::linalg::CMat;

pub fn build_lambda(x: &CMat, phases: &CMat) -> Result<CMat> {
    if x.ncols() != phases.ncols() {
        return Err(dim(format!(
            "{} symbol columns against {} phase columns",
            x.ncols(),
            phases.ncols()
        )));
    }
    let (k, l_e, n) = (x.nrows(), phases.nrows(), x.ncols());
    let mut out = CMat::zeros(k * l_e, n);
    for i in 0..n {
        for u in 0..k {
            let xu = x[(u, i)];
            for l in 0..l_e {
                out[(u * l_e + l, i)] = xu * phases[(l, i)];
            }
        }
    }
    Ok(out)
}
