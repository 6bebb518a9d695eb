use num_complex::Complex64;

use super::NlsProblem;
use crate::error::{Error, Result};
use crate::estimate::{SolverReport, Termination};
use crate::linalg::{conj_vec, is_finite_vec, ridge_solve, scale_rows, CVec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self { rho: 1.0, abs_tol: 1e-10, rel_tol: 1e-8, max_iter: 50_000 }
    }
}

/// Splits the bilinear objective into `½‖(A x) ∘ conj(B z) − b‖²` subject to
/// `x = z` and alternates two ridge-regularized least-squares updates.
///
/// A zero starting point is a fixed point of the iteration, so `z0` should be
/// nonzero.
pub fn solve_nls_admm(p: &NlsProblem, z0: &CVec, opts: &AdmmOptions) -> Result<(CVec, SolverReport)> {
    if !(opts.rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {}", opts.rho)));
    }
    if z0.len() != p.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "z0 has length {}, problem has {} unknowns",
            z0.len(),
            p.n_vars()
        )));
    }
    let rho = opts.rho;
    let rho_c = Complex64::new(rho, 0.0);
    let conj_obs = conj_vec(p.obs());
    let mut z = z0.clone();
    let mut y = CVec::zeros(p.n_vars());
    let mut report = SolverReport::new();
    report.objective_history.push(p.objective(&z)?);

    for it in 1..=opts.max_iter {
        // x-update with the master factor frozen at z.
        let weights = conj_vec(&(p.master() * &z));
        let a_t = scale_rows(&weights, p.slave());
        let rhs = a_t.adjoint() * p.obs() + &z * rho_c - &y;
        let x = ridge_solve(&a_t, rho, &rhs)?;

        // z-update with the slave factor frozen at x.
        let z_prev = z.clone();
        let weights = conj_vec(&(p.slave() * &x));
        let b_t = scale_rows(&weights, p.master());
        let rhs = b_t.adjoint() * &conj_obs + &x * rho_c + &y;
        z = ridge_solve(&b_t, rho, &rhs)?;

        y += (&x - &z) * rho_c;

        if !is_finite_vec(&z) {
            return Err(Error::NonFinite("ADMM iterate"));
        }
        let primal = (&x - &z).norm();
        let dual = rho * (&z - &z_prev).norm();
        report.objective_history.push(p.objective(&z)?);
        report.primal_residuals.push(primal);
        report.dual_residuals.push(dual);
        report.iterations = it;

        let eps_primal = opts.abs_tol + opts.rel_tol * x.norm().max(z.norm());
        let eps_dual = opts.abs_tol + opts.rel_tol * y.norm();
        if primal <= eps_primal && dual <= eps_dual {
            report.termination = Termination::Converged;
            return Ok((z, report));
        }
    }
    report.termination = Termination::MaxIter;
    Ok((z, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hadamard_conj, CMat};
    use crate::nls::closed_form_1d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_start_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = CMat::from_fn(6, 2, |_, _| Complex64::cis(rng.random_range(-PI..PI)));
        let b = CMat::from_fn(6, 2, |_, _| Complex64::cis(rng.random_range(-PI..PI)));
        let g = CVec::from_fn(6, |_, _| Complex64::new(1.0, 0.5));
        let p = NlsProblem::new(a, b, g).unwrap();
        let opts = AdmmOptions { max_iter: 5, ..Default::default() };
        let (z, rep) = solve_nls_admm(&p, &CVec::zeros(2), &opts).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert_eq!(rep.termination, Termination::Converged);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn single_unknown_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 15;
        let a = CVec::from_fn(m, |_, _| Complex64::cis(rng.random_range(-PI..PI)));
        let b = CVec::from_fn(m, |_, _| Complex64::cis(rng.random_range(-PI..PI)));
        let g = hadamard_conj(&a, &b) * Complex64::new(2.25, 0.0);
        let p = NlsProblem::new(
            CMat::from_column_slice(m, 1, a.as_slice()),
            CMat::from_column_slice(m, 1, b.as_slice()),
            g.clone(),
        )
        .unwrap();
        let (z, rep) = solve_nls_admm(&p, &CVec::from_element(1, Complex64::new(0.7, 0.3)), &AdmmOptions::default()).unwrap();
        assert!(rep.converged());
        let expected = closed_form_1d(&a, &b, &g).unwrap();
        assert!((z[0].norm() - expected).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_rho() {
        let p = NlsProblem::new(CMat::zeros(2, 1), CMat::zeros(2, 1), CVec::zeros(2)).unwrap();
        let opts = AdmmOptions { rho: 0.0, ..Default::default() };
        assert!(solve_nls_admm(&p, &CVec::zeros(1), &opts).is_err());
    }
}
