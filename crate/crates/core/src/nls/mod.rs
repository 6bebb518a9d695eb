//! Multi-master nonlinear least squares
//!
//! ```text
//! f(x) = ½ ‖(A x) ∘ conj(B x) − b‖²
//! ```
//!
//! with `A` the slave steering columns of a support, `B` the master steering
//! columns and `b` the interferometric observations. The objective is invariant
//! to a global phase rotation of `x`, so solutions are only unique up to that
//! phase and the Hessian is singular at every nonzero critical point.

mod admm;
mod enumerate;
mod trust_region;

pub use admm::{solve_nls_admm, AdmmOptions};
pub use enumerate::{solve_subset, sparse_recovery_enumerate, NlsSolver, ENUMERATION_LIMIT};
pub use trust_region::{solve_nls_trustregion, TrustRegionOptions};

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hadamard, hadamard_conj, scale_rows, CMat, CVec, RMat};

#[derive(Debug, Clone)]
pub struct NlsProblem {
    slave: CMat,
    master: CMat,
    obs: CVec,
}

impl NlsProblem {
    pub fn new(slave: CMat, master: CMat, obs: CVec) -> Result<Self> {
        if slave.shape() != master.shape() {
            return Err(Error::DimensionMismatch(format!(
                "slave operator is {:?}, master operator is {:?}",
                slave.shape(),
                master.shape()
            )));
        }
        if obs.len() != slave.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} observations for {} rows",
                obs.len(),
                slave.nrows()
            )));
        }
        Ok(Self { slave, master, obs })
    }

    pub fn slave(&self) -> &CMat {
        &self.slave
    }

    pub fn master(&self) -> &CMat {
        &self.master
    }

    pub fn obs(&self) -> &CVec {
        &self.obs
    }

    pub fn n_obs(&self) -> usize {
        self.obs.len()
    }

    pub fn n_vars(&self) -> usize {
        self.slave.ncols()
    }

    fn check(&self, x: &CVec) -> Result<()> {
        if x.len() != self.n_vars() {
            return Err(Error::DimensionMismatch(format!(
                "x has length {}, problem has {} unknowns",
                x.len(),
                self.n_vars()
            )));
        }
        Ok(())
    }

    /// `(A x) ∘ conj(B x)`.
    pub fn model(&self, x: &CVec) -> Result<CVec> {
        self.check(x)?;
        Ok(hadamard_conj(&(&self.slave * x), &(&self.master * x)))
    }

    /// Model minus observations.
    pub fn residual(&self, x: &CVec) -> Result<CVec> {
        Ok(self.model(x)? - &self.obs)
    }

    pub fn objective(&self, x: &CVec) -> Result<f64> {
        Ok(0.5 * self.residual(x)?.norm_squared())
    }

    /// Complex gradient `d`; the real gradient over `(Re x, Im x)` is `(Re d, Im d)`.
    pub fn gradient(&self, x: &CVec) -> Result<CVec> {
        self.check(x)?;
        let ax = &self.slave * x;
        let bx = &self.master * x;
        let u = hadamard_conj(&ax, &bx) - &self.obs;
        let conj_u = u.map(|z| z.conj());
        Ok(self.slave.adjoint() * hadamard(&u, &bx) + self.master.adjoint() * hadamard(&conj_u, &ax))
    }

    /// Real `2n × 2n` Hessian over `(Re x, Im x)`.
    pub fn hessian(&self, x: &CVec) -> Result<RMat> {
        self.check(x)?;
        let (a, b) = (&self.slave, &self.master);
        let ax = a * x;
        let bx = b * x;
        let u = hadamard_conj(&ax, &bx) - &self.obs;
        let conj_u = u.map(|z| z.conj());
        let bx_sq = bx.map(|z| Complex64::new(z.norm_sqr(), 0.0));
        let ax_sq = ax.map(|z| Complex64::new(z.norm_sqr(), 0.0));
        let prod = hadamard(&ax, &bx);
        let a_conj = a.map(|z| z.conj());
        let b_conj = b.map(|z| z.conj());

        // Derivative of d with respect to x (holomorphic part) and conj(x).
        let holo = a.adjoint() * (scale_rows(&bx_sq, a) + scale_rows(&u, b))
            + b.adjoint() * (scale_rows(&ax_sq, b) + scale_rows(&conj_u, a));
        let anti = a.adjoint() * scale_rows(&prod, &b_conj) + b.adjoint() * scale_rows(&prod, &a_conj);

        let n = x.len();
        let plus = &holo + &anti;
        let minus = &holo - &anti;
        let mut h = RMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = plus[(i, j)].re;
                h[(i, j + n)] = -minus[(i, j)].im;
                h[(i + n, j)] = plus[(i, j)].im;
                h[(i + n, j + n)] = minus[(i, j)].re;
            }
        }
        // Symmetrize away roundoff.
        let ht = h.transpose();
        Ok((h + ht) * 0.5)
    }

    /// Classifies the critical point at zero through the Hermitian matrix
    /// `A^H Diag(b) B + B^H Diag(conj b) A`, whose negation is the Hessian at zero.
    pub fn criticality(&self) -> CriticalityReport {
        let (a, b) = (&self.slave, &self.master);
        let conj_obs = self.obs.map(|z| z.conj());
        let m = a.adjoint() * scale_rows(&self.obs, b) + b.adjoint() * scale_rows(&conj_obs, a);
        let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(m.clone()).eigenvalues;
        let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let max_eig = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = min_eig.abs().max(max_eig.abs()).max(f64::MIN_POSITIVE);
        let tiny = 1e-12 * scale;
        let classification = if max_eig < -tiny {
            Definiteness::NegativeDefinite
        } else if min_eig > tiny {
            Definiteness::PositiveDefinite
        } else if min_eig < -tiny && max_eig > tiny {
            Definiteness::Indefinite
        } else {
            Definiteness::Semidefinite
        };
        let power_correlation = (self.n_vars() == 1).then(|| {
            let c = hadamard_conj(&a.column(0).into_owned(), &b.column(0).into_owned());
            c.dotc(&self.obs).re
        });
        CriticalityReport { m, min_eig, max_eig, classification, power_correlation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    NegativeDefinite,
    PositiveDefinite,
    Indefinite,
    Semidefinite,
}

#[derive(Debug, Clone)]
pub struct CriticalityReport {
    pub m: CMat,
    pub min_eig: f64,
    pub max_eig: f64,
    pub classification: Definiteness,
    /// For a single unknown, `Re((a ∘ conj b)^H g)`; positive iff a nonzero minimum exists.
    pub power_correlation: Option<f64>,
}

impl CriticalityReport {
    /// True when zero is a strict local minimum of the objective.
    pub fn zero_is_local_min(&self) -> bool {
        self.classification == Definiteness::NegativeDefinite
    }

    pub fn zero_is_local_max(&self) -> bool {
        self.classification == Definiteness::PositiveDefinite
    }
}

/// Magnitude of the nonzero minimizer of the one-unknown problem, or zero
/// when only the trivial solution exists.
pub fn closed_form_1d(slave_col: &CVec, master_col: &CVec, g: &CVec) -> Result<f64> {
    if slave_col.len() != master_col.len() || slave_col.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "column lengths {} and {}, observation length {}",
            slave_col.len(),
            master_col.len(),
            g.len()
        )));
    }
    let c = hadamard_conj(slave_col, master_col);
    let norm_sq = c.norm_squared();
    if norm_sq == 0.0 {
        return Err(Error::ZeroColumn(0));
    }
    let corr = c.dotc(g).re;
    Ok(if corr > 0.0 { (corr / norm_sq).sqrt() } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real, to_real, RVec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rand_c(rng: &mut impl Rng) -> Complex64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_problem(rng: &mut impl Rng, m: usize, n: usize) -> NlsProblem {
        let a = CMat::from_fn(m, n, |_, _| rand_c(rng));
        let b = CMat::from_fn(m, n, |_, _| rand_c(rng));
        let g = CVec::from_fn(m, |_, _| rand_c(rng));
        NlsProblem::new(a, b, g).unwrap()
    }

    fn naive_objective(p: &NlsProblem, x: &CVec) -> f64 {
        let mut total = 0.0;
        for i in 0..p.n_obs() {
            let mut ax = Complex64::new(0.0, 0.0);
            let mut bx = Complex64::new(0.0, 0.0);
            for j in 0..p.n_vars() {
                ax += p.slave()[(i, j)] * x[j];
                bx += p.master()[(i, j)] * x[j];
            }
            total += (ax * bx.conj() - p.obs()[i]).norm_sqr();
        }
        0.5 * total
    }

    #[test]
    fn objective_at_zero_and_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_problem(&mut rng, 8, 3);
        let f0 = p.objective(&CVec::zeros(3)).unwrap();
        assert!((f0 - 0.5 * p.obs().norm_squared()).abs() < 1e-14);

        let truth = CVec::from_fn(3, |_, _| rand_c(&mut rng));
        let g = hadamard_conj(&(p.slave() * &truth), &(p.master() * &truth));
        let q = NlsProblem::new(p.slave().clone(), p.master().clone(), g).unwrap();
        assert_eq!(q.objective(&truth).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let m = rng.random_range(2..12);
            let n = rng.random_range(1..5);
            let p = random_problem(&mut rng, m, n);
            let x = CVec::from_fn(n, |_, _| rand_c(&mut rng));
            let f = p.objective(&x).unwrap();
            assert!((f - naive_objective(&p, &x)).abs() <= 1e-12 * (1.0 + f));
        }
    }

    #[test]
    fn dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_problem(&mut rng, 5, 2);
        assert!(p.objective(&CVec::zeros(3)).is_err());
        assert!(p.gradient(&CVec::zeros(1)).is_err());
        assert!(p.hessian(&CVec::zeros(4)).is_err());
        assert!(NlsProblem::new(CMat::zeros(3, 2), CMat::zeros(3, 1), CVec::zeros(3)).is_err());
        assert!(NlsProblem::new(CMat::zeros(3, 2), CMat::zeros(3, 2), CVec::zeros(4)).is_err());
    }

    #[test]
    fn gradient_vanishes_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_problem(&mut rng, 9, 3);
        assert_eq!(p.gradient(&CVec::zeros(3)).unwrap().norm(), 0.0);
    }

    fn fd_gradient(p: &NlsProblem, x: &CVec, h: f64) -> RVec {
        let xr = to_real(x);
        RVec::from_fn(xr.len(), |i, _| {
            let mut up = xr.clone();
            let mut dn = xr.clone();
            up[i] += h;
            dn[i] -= h;
            (p.objective(&from_real(&up)).unwrap() - p.objective(&from_real(&dn)).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = rng.random_range(2..=12);
            let n = rng.random_range(1..=4);
            let p = random_problem(&mut rng, m, n);
            let x = CVec::from_fn(n, |_, _| rand_c(&mut rng));
            let analytic = to_real(&p.gradient(&x).unwrap());
            let fd = fd_gradient(&p, &x, 1e-6);
            assert!((&analytic - &fd).norm() <= 1e-6 * analytic.norm().max(1.0));
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let m = rng.random_range(2..=12);
            let n = rng.random_range(1..=4);
            let p = random_problem(&mut rng, m, n);
            let x = CVec::from_fn(n, |_, _| rand_c(&mut rng));
            let h = p.hessian(&x).unwrap();
            let xr = to_real(&x);
            let step = 1e-6;
            let mut fd = RMat::zeros(2 * n, 2 * n);
            for j in 0..2 * n {
                let mut up = xr.clone();
                let mut dn = xr.clone();
                up[j] += step;
                dn[j] -= step;
                let col = (to_real(&p.gradient(&from_real(&up)).unwrap())
                    - to_real(&p.gradient(&from_real(&dn)).unwrap()))
                    / (2.0 * step);
                fd.set_column(j, &col);
            }
            assert!((&h - &fd).norm() <= 1e-5 * h.norm().max(1.0));
        }
    }

    #[test]
    fn hessian_at_zero_is_negated_criticality_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_problem(&mut rng, 10, 3);
        let h = p.hessian(&CVec::zeros(3)).unwrap();
        let m = p.criticality().m;
        let neg = -m;
        for i in 0..3 {
            for j in 0..3 {
                assert!((h[(i, j)] - neg[(i, j)].re).abs() < 1e-12);
                assert!((h[(i, j + 3)] + neg[(i, j)].im).abs() < 1e-12);
                assert!((h[(i + 3, j)] - neg[(i, j)].im).abs() < 1e-12);
                assert!((h[(i + 3, j + 3)] - neg[(i, j)].re).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn criticality_matrix_is_hermitian_and_scalar_for_one_unknown() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_problem(&mut rng, 10, 3);
        let m = p.criticality().m;
        assert!((&m - m.adjoint()).norm() < 1e-12);

        let a = CVec::from_fn(7, |_, _| Complex64::cis(rng.random_range(-PI..PI)));
        let b = CVec::from_fn(7, |_, _| Complex64::cis(rng.random_range(-PI..PI)));
        let c = hadamard_conj(&a, &b);
        let g = &c * Complex64::new(0.8, 0.0);
        let p = NlsProblem::new(CMat::from_column_slice(7, 1, a.as_slice()), CMat::from_column_slice(7, 1, b.as_slice()), g.clone()).unwrap();
        let rep = p.criticality();
        let corr = rep.power_correlation.unwrap();
        assert!((corr - 0.8 * c.norm_squared()).abs() < 1e-12);
        assert!(rep.zero_is_local_max());
        assert!((rep.m[(0, 0)].re - 2.0 * corr).abs() < 1e-12);

        let flipped = NlsProblem::new(p.slave().clone(), p.master().clone(), -g).unwrap();
        let rep = flipped.criticality();
        assert!(rep.power_correlation.unwrap() < 0.0);
        assert!(rep.zero_is_local_min());
        assert_eq!(closed_form_1d(&a, &b, flipped.obs()).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_cases() {
        let k_s = [0.1, -0.2, 0.25, 0.05];
        let k_m = [0.0, 0.3, -0.1, 0.2];
        let s = 3.0;
        let a = CVec::from_fn(4, |i, _| Complex64::cis(-k_s[i] * s));
        let b = CVec::from_fn(4, |i, _| Complex64::cis(-k_m[i] * s));
        let g = hadamard_conj(&a, &b) * Complex64::new(4.0, 0.0);
        assert!((closed_form_1d(&a, &b, &g).unwrap() - 2.0).abs() < 1e-14);

        // Observation with Re((a ∘ conj b)^H g) = -0.3.
        let c = hadamard_conj(&a, &b);
        let g = &c * Complex64::new(-0.3 / c.norm_squared(), 0.0);
        assert!((c.dotc(&g).re + 0.3).abs() < 1e-14);
        assert_eq!(closed_form_1d(&a, &b, &g).unwrap(), 0.0);

        assert!(closed_form_1d(&CVec::zeros(4), &b, &g).is_err());
        assert!(closed_form_1d(&a, &b, &CVec::zeros(3)).is_err());
    }

    #[test]
    fn closed_form_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let m = 8;
            let a = CVec::from_fn(m, |_, _| rand_c(&mut rng));
            let b = CVec::from_fn(m, |_, _| rand_c(&mut rng));
            let c = hadamard_conj(&a, &b);
            let g = &c * Complex64::new(1.5, 0.0) + CVec::from_fn(m, |_, _| rand_c(&mut rng) * 0.2);
            let p = NlsProblem::new(CMat::from_column_slice(m, 1, a.as_slice()), CMat::from_column_slice(m, 1, b.as_slice()), g.clone())
                .unwrap();
            let mag = closed_form_1d(&a, &b, &g).unwrap();
            let steps = 400;
            let (mut best, mut best_mag) = (f64::INFINITY, 0.0);
            for i in 0..steps {
                let r = 3.0 * i as f64 / (steps - 1) as f64;
                for j in 0..steps {
                    let phi = 2.0 * PI * j as f64 / steps as f64;
                    let f = p.objective(&CVec::from_element(1, Complex64::from_polar(r, phi))).unwrap();
                    if f < best {
                        best = f;
                        best_mag = r;
                    }
                }
            }
            assert!((best_mag - mag).abs() <= 3.0 / (steps - 1) as f64);
            // Refine: the optimum along magnitude only.
            let f_cf = p.objective(&CVec::from_element(1, Complex64::new(mag, 0.0))).unwrap();
            assert!(f_cf <= best + 1e-12);
        }
    }
}
