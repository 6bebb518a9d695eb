use nalgebra::SymmetricEigen;

use super::NlsProblem;
use crate::error::{Error, Result};
use crate::estimate::{SolverReport, Termination};
use crate::linalg::{from_real, is_finite_vec, to_real, CVec, RMat, RVec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Minimum ratio of actual to predicted decrease for a step to be accepted.
    pub accept_ratio: f64,
    pub shrink_below: f64,
    pub grow_above: f64,
    pub shrink_factor: f64,
    pub grow_factor: f64,
    pub secular_max_iter: usize,
    pub secular_tol: f64,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            initial_radius: 1.0,
            max_radius: 1e3,
            accept_ratio: 1e-4,
            shrink_below: 0.25,
            grow_above: 0.75,
            shrink_factor: 0.25,
            grow_factor: 2.0,
            secular_max_iter: 50,
            secular_tol: 1e-10,
        }
    }
}

/// Newton iteration with an exactly solved trust-region subproblem, run on
/// the real `2n`-dimensional form of the problem.
///
/// The objective is constant along the global-phase direction `j x`, so the
/// model is restricted to the orthogonal complement of that direction. This
/// removes the Hessian null direction at nonzero critical points without
/// changing the set of reachable objective values.
pub fn solve_nls_trustregion(p: &NlsProblem, x0: &CVec, opts: &TrustRegionOptions) -> Result<(CVec, SolverReport)> {
    if x0.len() != p.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, problem has {} unknowns",
            x0.len(),
            p.n_vars()
        )));
    }
    if !is_finite_vec(x0) {
        return Err(Error::NonFinite("trust-region start"));
    }
    let stop = opts.tol * (1.0 + p.obs().norm());
    let mut x = x0.clone();
    let mut f = p.objective(&x)?;
    let mut grad = to_real(&p.gradient(&x)?);
    let mut radius = opts.initial_radius;
    let mut report = SolverReport::new();
    report.objective_history.push(f);
    report.primal_residuals.push(grad.norm());

    if grad.norm() <= stop {
        report.termination = Termination::Converged;
        return Ok((x, report));
    }

    for it in 1..=opts.max_iter {
        report.iterations = it;
        let hess = p.hessian(&x)?;
        let basis = phase_complement(&x);
        let (step, predicted) = match &basis {
            Some(q) => {
                let g_red = q.transpose() * &grad;
                let h_red = q.transpose() * &hess * q;
                let (s, pred) = subproblem(&h_red, &g_red, radius, opts);
                (q * s, pred)
            }
            None => subproblem(&hess, &grad, radius, opts),
        };
        let step_norm = step.norm();

        if !(predicted > 0.0) || step_norm <= f64::EPSILON * (1.0 + to_real(&x).norm()) {
            report.termination = Termination::Stagnated;
            return Ok((x, report));
        }

        let candidate = from_real(&(to_real(&x) + &step));
        let f_new = p.objective(&candidate)?;
        // Near a minimizer both decreases fall below the rounding level of f;
        // the quadratic model is then trusted as long as f does not grow.
        let noise = 1e-14 * f.abs();
        let ratio = if predicted <= noise && f_new <= f + noise { 1.0 } else { (f - f_new) / predicted };

        if ratio < opts.shrink_below {
            radius = opts.shrink_factor * step_norm.min(radius);
        } else if ratio > opts.grow_above && step_norm >= 0.99 * radius {
            radius = (opts.grow_factor * radius).min(opts.max_radius);
        }

        if ratio > opts.accept_ratio && f_new.is_finite() {
            x = candidate;
            f = f_new;
            grad = to_real(&p.gradient(&x)?);
        }
        report.objective_history.push(f);
        report.primal_residuals.push(grad.norm());

        if grad.norm() <= stop {
            report.termination = Termination::Converged;
            return Ok((x, report));
        }
        if radius <= 1e-15 * (1.0 + to_real(&x).norm()) {
            report.termination = Termination::Stagnated;
            return Ok((x, report));
        }
    }
    report.termination = Termination::MaxIter;
    Ok((x, report))
}

/// Orthonormal basis of the real directions orthogonal to the global-phase
/// tangent `j x`; `None` at the origin.
fn phase_complement(x: &CVec) -> Option<RMat> {
    let tangent = to_real(&x.map(|z| z * num_complex::Complex64::new(0.0, 1.0)));
    let norm = tangent.norm();
    if norm == 0.0 {
        return None;
    }
    let v = tangent / norm;
    let dim = v.len();
    // Householder reflector mapping e_k to ±v; its other columns span v's complement.
    let k = v.iamax();
    let sign = if v[k] >= 0.0 { 1.0 } else { -1.0 };
    let mut w = v.clone() * sign;
    w[k] -= 1.0;
    let wn = w.norm_squared();
    let mut h = RMat::identity(dim, dim);
    if wn > 0.0 {
        h -= (&w * w.transpose()) * (2.0 / wn);
    }
    let cols: Vec<usize> = (0..dim).filter(|&c| c != k).collect();
    Some(h.select_columns(cols.iter()))
}

/// Minimizes `gᵀp + ½ pᵀHp` subject to `‖p‖ ≤ radius` using an
/// eigendecomposition of `H` and safeguarded Newton iterations on the
/// secular equation `1/‖p(λ)‖ = 1/radius`. Returns the step and the
/// predicted decrease.
fn subproblem(h: &RMat, g: &RVec, radius: f64, opts: &TrustRegionOptions) -> (RVec, f64) {
    let eig = SymmetricEigen::new(h.clone());
    let lam = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let beta = q.transpose() * g;
    let n = lam.len();
    let lam_min = lam.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = lam.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let degenerate = 1e-12 * scale;

    let coeffs = |shift: f64| -> RVec { RVec::from_fn(n, |i, _| -beta[i] / (lam[i] + shift)) };
    let finish = |c: RVec| -> (RVec, f64) {
        let step = q * &c;
        let pred = -(g.dot(&step) + 0.5 * step.dot(&(h * &step)));
        (step, pred)
    };

    if lam_min > degenerate {
        let c = coeffs(0.0);
        if c.norm() <= radius {
            return finish(c);
        }
    }

    let lo0 = (-lam_min).max(0.0);
    // Hard case: the gradient has no component along the lowest eigenvectors.
    let low: Vec<usize> = (0..n).filter(|&i| lam[i] <= lam_min + degenerate).collect();
    let beta_low = low.iter().map(|&i| beta[i] * beta[i]).sum::<f64>().sqrt();
    if beta_low <= 1e-12 * g.norm().max(f64::MIN_POSITIVE) {
        let mut c = RVec::zeros(n);
        for i in 0..n {
            if !low.contains(&i) {
                c[i] = -beta[i] / (lam[i] + lo0);
            }
        }
        let cn = c.norm();
        if cn <= radius {
            let tau = (radius * radius - cn * cn).max(0.0).sqrt();
            c[low[0]] += tau;
            return finish(c);
        }
    }

    let norm_at = |shift: f64| coeffs(shift).norm();
    let mut lo = lo0;
    let mut hi = lo0 + g.norm() / radius + degenerate;
    while norm_at(hi) > radius {
        hi *= 2.0;
    }
    let mut shift = hi;
    for _ in 0..opts.secular_max_iter {
        let c = coeffs(shift);
        let pn = c.norm();
        if (pn - radius).abs() <= opts.secular_tol * radius {
            break;
        }
        if pn > radius {
            lo = shift;
        } else {
            hi = shift;
        }
        // φ(λ) = 1/‖p‖ − 1/Δ, φ'(λ) = (Σ β²/(λ_i+λ)³) / ‖p‖³.
        let d: f64 = (0..n).map(|i| beta[i] * beta[i] / (lam[i] + shift).powi(3)).sum();
        let phi = 1.0 / pn - 1.0 / radius;
        let dphi = d / pn.powi(3);
        let newton = shift - phi / dphi;
        shift = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let mut c = coeffs(shift);
    let cn = c.norm();
    if cn > radius {
        c *= radius / cn;
    }
    finish(c)
}
