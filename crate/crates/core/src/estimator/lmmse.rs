//! Linear estimators for `Y = A S + N` with `A` having independent rows of
//! prior covariance `diag(r)`.

use crate::error::{dim, invalid, Result};
use crate::linalg::{
    pseudo_inverse, scale_columns, scale_rows, solve_hermitian, solve_right_hermitian, CMat, C64,
};

/// Which normal equations to solve. Both give the same estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Pick the smaller system.
    Auto,
    /// `Y (Sᴴ R S + σ² I_N)⁻¹ Sᴴ R`, an `N × N` solve.
    Samples,
    /// `Y Sᴴ (S Sᴴ + σ² R⁻¹)⁻¹`, a `D × D` solve.
    Params,
}

/// LMMSE estimate of `A` (`rows × D`) from `Y` (`rows × N`) and known `S`
/// (`D × N`). Parameters with zero prior are estimated as zero. With
/// `noise = 0` this reduces to the prior-weighted least-norm solution.
pub fn lmmse(y: &CMat, s: &CMat, prior: &[f64], noise: f64) -> Result<CMat> {
    lmmse_route(y, s, prior, noise, Route::Auto)
}

pub fn lmmse_route(y: &CMat, s: &CMat, prior: &[f64], noise: f64, route: Route) -> Result<CMat> {
    let (d, n) = s.shape();
    if y.ncols() != n || prior.len() != d {
        return Err(dim(format!(
            "LMMSE: Y is {}x{}, S is {d}x{n}, prior has {}",
            y.nrows(),
            y.ncols(),
            prior.len()
        )));
    }
    if !(noise >= 0.0) || prior.iter().any(|r| !(*r >= 0.0)) {
        return Err(invalid(
            "LMMSE needs non-negative noise and prior variances",
        ));
    }
    let active: Vec<usize> = (0..d).filter(|&i| prior[i] > 0.0).collect();
    let mut out = CMat::zeros(y.nrows(), d);
    if active.is_empty() || n == 0 {
        return Ok(out);
    }
    let sa = s.select_rows(active.iter());
    let r: Vec<f64> = active.iter().map(|&i| prior[i]).collect();
    let est = if noise == 0.0 {
        // Y pinv(Q S) Q with Q = R^½
        let q: Vec<f64> = r.iter().map(|v| v.sqrt()).collect();
        let mut qs = sa.clone();
        scale_rows(&mut qs, &q);
        let mut p = pseudo_inverse(&qs);
        scale_columns(&mut p, &q);
        y * p
    } else {
        let use_samples = match route {
            Route::Auto => n < active.len(),
            Route::Samples => true,
            Route::Params => false,
        };
        if use_samples {
            // Sᴴ R
            let mut shr = sa.adjoint();
            scale_columns(&mut shr, &r);
            let mut sys = &shr * &sa;
            for i in 0..n {
                sys[(i, i)] += C64::new(noise, 0.0);
            }
            let x = solve_hermitian(sys, &shr, "LMMSE (sample route)")?;
            y * x
        } else {
            let mut sys = &sa * sa.adjoint();
            for (i, v) in r.iter().enumerate() {
                sys[(i, i)] += C64::new(noise / v, 0.0);
            }
            solve_right_hermitian(&(y * sa.adjoint()), sys, "LMMSE (parameter route)")?
        }
    };
    for (j, &i) in active.iter().enumerate() {
        out.set_column(i, &est.column(j));
    }
    Ok(out)
}

/// Posterior error covariance `(R⁻¹ + S Sᴴ / σ²)⁻¹` shared by the rows of
/// `A`, with zero rows and columns for zero-prior parameters. Zero for
/// `noise = 0`.
pub fn posterior_cov(s: &CMat, prior: &[f64], noise: f64) -> Result<CMat> {
    let d = prior.len();
    if d != s.nrows() {
        return Err(dim("posterior covariance: prior length does not match S"));
    }
    let active: Vec<usize> = (0..d).filter(|&i| prior[i] > 0.0).collect();
    let mut out = CMat::zeros(d, d);
    if noise == 0.0 || active.is_empty() {
        return Ok(out);
    }
    let sa = s.select_rows(active.iter());
    let mut info = &sa * sa.adjoint() / C64::new(noise, 0.0);
    for (j, &i) in active.iter().enumerate() {
        info[(j, j)] += C64::new(1.0 / prior[i], 0.0);
    }
    let cov = solve_hermitian(
        info,
        &CMat::identity(active.len(), active.len()),
        "posterior covariance",
    )?;
    for (j, &i) in active.iter().enumerate() {
        for (jj, &ii) in active.iter().enumerate() {
            out[(i, ii)] = cov[(j, jj)];
        }
    }
    Ok(out)
}

/// Diagonal of [`posterior_cov`].
pub fn posterior_error(s: &CMat, prior: &[f64], noise: f64) -> Result<Vec<f64>> {
    Ok(posterior_cov(s, prior, noise)?
        .diagonal()
        .iter()
        .map(|v| v.re)
        .collect())
}

/// Least-norm least squares `Y S⁺`.
pub fn least_squares(y: &CMat, s: &CMat) -> Result<CMat> {
    if y.ncols() != s.ncols() {
        return Err(dim("least squares: Y and S have different column counts"));
    }
    Ok(y * pseudo_inverse(s))
}

/// Matched-filter estimate `Y Sᴴ / (σ_x² N)`, exact for orthogonal `S`.
pub fn correlation(y: &CMat, s: &CMat, sigma_x2: f64) -> CMat {
    let n = s.ncols().max(1) as f64;
    y * s.adjoint() / C64::new(sigma_x2 * n, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro2, gaussian_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Conditional-mean oracle on the vectorised rows: each row `a` obeys
    /// `yᵀ = Sᵀ aᵀ + n`, so `âᵀ = R S̄ (Sᵀ R S̄ + σ² I)⁻¹ yᵀ`.
    fn oracle(y: &CMat, s: &CMat, prior: &[f64], noise: f64) -> CMat {
        let r = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            prior.len(),
            prior.iter().map(|v| C64::new(*v, 0.0)),
        ));
        let sb = s.map(|v| v.conj());
        let cyy =
            s.transpose() * &r * &sb + CMat::identity(s.ncols(), s.ncols()) * C64::new(noise, 0.0);
        let cay = &r * &sb;
        let inv = cyy.try_inverse().unwrap();
        (cay * inv * y.transpose()).transpose()
    }

    #[test]
    fn routes_agree_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(d, n) in &[(6, 10), (10, 6), (8, 8)] {
            let s = gaussian_matrix(&mut rng, d, n, 1.0);
            let y = gaussian_matrix(&mut rng, 3, n, 1.0);
            let prior: Vec<f64> = (0..d).map(|i| 0.5 + i as f64 * 0.1).collect();
            let want = oracle(&y, &s, &prior, 0.3);
            for route in [Route::Auto, Route::Samples, Route::Params] {
                let got = lmmse_route(&y, &s, &prior, 0.3, route).unwrap();
                assert!(
                    fro2(&(&got - &want)) < 1e-18 * fro2(&want).max(1.0),
                    "{route:?} {d}x{n}"
                );
            }
        }
    }

    #[test]
    fn zero_prior_columns_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = gaussian_matrix(&mut rng, 4, 12, 1.0);
        let y = gaussian_matrix(&mut rng, 2, 12, 1.0);
        let prior = [1.0, 0.0, 2.0, 0.0];
        let got = lmmse(&y, &s, &prior, 0.1).unwrap();
        assert!(got.column(1).iter().all(|v| *v == C64::new(0.0, 0.0)));
        let sub = s.select_rows([0usize, 2].iter());
        let want = oracle(&y, &sub, &[1.0, 2.0], 0.1);
        assert!((got.column(2) - want.column(1)).norm() < 1e-10);
        assert_eq!(lmmse(&y, &s, &[0.0; 4], 0.1).unwrap(), CMat::zeros(2, 4));
    }

    #[test]
    fn noiseless_recovers_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian_matrix(&mut rng, 3, 5, 1.0);
        let s = gaussian_matrix(&mut rng, 5, 9, 1.0);
        let y = &a * &s;
        let got = lmmse(&y, &s, &[1.0, 2.0, 0.5, 1.0, 3.0], 0.0).unwrap();
        assert!(fro2(&(got - &a)) < 1e-18);
        let ls = least_squares(&y, &s).unwrap();
        assert!(fro2(&(ls - &a)) < 1e-18);
    }

    #[test]
    fn small_noise_approaches_weighted_least_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // underdetermined: 6 unknowns, 4 observations
        let s = gaussian_matrix(&mut rng, 6, 4, 1.0);
        let y = gaussian_matrix(&mut rng, 2, 4, 1.0);
        let prior = [1.0, 2.0, 0.5, 1.0, 3.0, 1.5];
        let exact = lmmse(&y, &s, &prior, 0.0).unwrap();
        let near = lmmse(&y, &s, &prior, 1e-9).unwrap();
        assert!(fro2(&(exact - near)) < 1e-12);
    }

    #[test]
    fn correlation_exact_for_orthogonal_rows() {
        let s = crate::modem::schedule::dft_segment(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gaussian_matrix(&mut rng, 3, 4, 1.0);
        let got = correlation(&(&a * &s), &s, 1.0);
        assert!(fro2(&(got - a)) < 1e-20);
    }

    #[test]
    fn posterior_error_matches_scalar_case() {
        // one parameter, N samples of amplitude a: 1 / (1/r + N a² / σ²)
        let s = CMat::from_element(1, 5, C64::new(0.5, 0.0));
        let e = posterior_error(&s, &[2.0], 0.1).unwrap();
        assert!((e[0] - 1.0 / (0.5 + 5.0 * 0.25 / 0.1)).abs() < 1e-12);
        assert_eq!(posterior_error(&s, &[0.0], 0.1).unwrap(), vec![0.0]);
    }

    #[test]
    fn shape_errors() {
        let s = CMat::zeros(3, 4);
        assert!(lmmse(&CMat::zeros(2, 5), &s, &[1.0; 3], 0.1).is_err());
        assert!(lmmse(&CMat::zeros(2, 4), &s, &[1.0; 2], 0.1).is_err());
        assert!(lmmse(&CMat::zeros(2, 4), &s, &[1.0; 3], -1.0).is_err());
    }
}
