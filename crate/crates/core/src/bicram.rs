//! Bi-convex relaxation of the multi-master problem solved by alternating
//! minimization:
//!
//! ```text
//! minimize ½‖(R γ) ∘ conj(S θ) − g‖² + λ1/2 ‖γ − θ‖² + λ2 ‖(γ θ)‖_{1,2}
//! ```
//!
//! Each half step is a convex problem in one of `γ`, `θ` and is solved by an
//! inner ADMM whose proximal step is row-wise group shrinkage.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{ReflectivityEstimate, SolverReport, Termination};
use crate::l1rls::{preconditioned_penalty, RegularizedNormal};
use crate::linalg::{conj_vec, hadamard_conj, inf_norm, is_finite_vec, scale_rows, CMat, CVec, RVec};
use crate::nls::NlsSolver;
use crate::selection::{select_order, MultiMasterModel};
use crate::stack_model::SteeringPair;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicramParams {
    /// Coupling weight between `γ` and `θ`.
    pub lambda1: f64,
    /// Joint sparsity weight.
    pub lambda2: f64,
    pub rho: f64,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub outer_max: usize,
    pub inner_max: usize,
    /// Exponent of the diagonal preconditioner; `None` uses the scalar penalty `rho`.
    pub precondition: Option<f64>,
    pub over_relax: Option<f64>,
}

impl Default for BicramParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
            rho: 1.0,
            outer_tol: 1e-6,
            inner_tol: 1e-8,
            outer_max: 200,
            inner_max: 20_000,
            precondition: Some(1.0),
            over_relax: Some(1.8),
        }
    }
}

impl BicramParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lambda1, self.lambda2, self.rho, self.outer_tol, self.inner_tol];
        if positive.iter().any(|&v| !(v > 0.0)) || self.outer_max == 0 || self.inner_max == 0 {
            return Err(Error::InvalidArgument("BiCRAM parameters must be positive".into()));
        }
        if self.outer_tol >= 1.0 || self.inner_tol >= 1.0 {
            return Err(Error::InvalidArgument("tolerances must be below 1".into()));
        }
        if let Some(alpha) = self.precondition {
            if !(0.0..=2.0).contains(&alpha) {
                return Err(Error::InvalidArgument(format!("alpha must lie in [0, 2], got {alpha}")));
            }
        }
        if let Some(beta) = self.over_relax {
            if !(1.5..=1.8).contains(&beta) {
                return Err(Error::InvalidArgument(format!("beta must lie in [1.5, 1.8], got {beta}")));
            }
        }
        Ok(())
    }
}

/// Row-wise group shrinkage of an `L × 2` matrix, given as its two columns.
pub fn prox_l12(first: &CVec, second: &CVec, lambda: f64) -> (CVec, CVec) {
    let thresholds = RVec::from_element(first.len(), lambda);
    prox_l12_weighted(first, second, &thresholds)
}

pub(crate) fn prox_l12_weighted(first: &CVec, second: &CVec, thresholds: &RVec) -> (CVec, CVec) {
    let mut a = first.clone();
    let mut b = second.clone();
    for i in 0..a.len() {
        let norm = (a[i].norm_sqr() + b[i].norm_sqr()).sqrt();
        let scale = if norm <= thresholds[i] { 0.0 } else { 1.0 - thresholds[i] / norm };
        a[i] *= scale;
        b[i] *= scale;
    }
    (a, b)
}

/// Joint-sparsity norm `Σ_i ‖(a_i, b_i)‖`.
pub fn l12_norm(first: &CVec, second: &CVec) -> f64 {
    first.iter().zip(second.iter()).map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt()).sum()
}

/// ADMM for `min_x ½‖A x − b‖² + λ1/2 ‖x − u‖² + λ2 ‖(x u)‖_{1,2}` with the
/// consensus variable `Z` on the stacked matrix `(x u)`. Returns the first
/// column of `Z`, which carries exact zeros from the shrinkage step.
pub fn solve_inner(a: &CMat, b: &CVec, u: &CVec, params: &BicramParams) -> Result<(CVec, SolverReport)> {
    if b.len() != a.nrows() || u.len() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix {:?}, observations {}, coupling vector {}",
            a.shape(),
            b.len(),
            u.len()
        )));
    }
    let n = a.ncols();
    let penalty = match params.precondition {
        Some(alpha) => match preconditioned_penalty(a, alpha) {
            Ok(w) => w,
            // A zero column arises when the frozen factor vanishes; fall back to the scalar penalty.
            Err(Error::ZeroColumn(_)) => RVec::from_element(n, params.rho),
            Err(e) => return Err(e),
        },
        None => RVec::from_element(n, params.rho),
    };
    let diag = penalty.map(|p| p + params.lambda1);
    let factor = RegularizedNormal::new(a, &diag)?;
    let rhs_fixed = a.adjoint() * b + u * Complex64::new(params.lambda1, 0.0);
    let thresholds = penalty.map(|p| params.lambda2 / p);

    let mut z1 = u.clone();
    let mut z2 = u.clone();
    let mut y1 = CVec::zeros(n);
    let mut y2 = CVec::zeros(n);
    let mut report = SolverReport::new();

    for it in 1..=params.inner_max {
        let pz = CVec::from_fn(n, |i, _| z1[i] * penalty[i]);
        let x = factor.solve(&(&rhs_fixed + pz - &y1));
        let (h1, h2) = match params.over_relax {
            Some(beta) => {
                let blend = |v: &CVec, z: &CVec| v * Complex64::new(beta, 0.0) + z * Complex64::new(1.0 - beta, 0.0);
                (blend(&x, &z1), blend(u, &z2))
            }
            None => (x.clone(), u.clone()),
        };
        let v1 = CVec::from_fn(n, |i, _| h1[i] + y1[i] / penalty[i]);
        let v2 = CVec::from_fn(n, |i, _| h2[i] + y2[i] / penalty[i]);
        let (z1_prev, z2_prev) = (z1.clone(), z2.clone());
        (z1, z2) = prox_l12_weighted(&v1, &v2, &thresholds);
        y1 += CVec::from_fn(n, |i, _| (h1[i] - z1[i]) * penalty[i]);
        y2 += CVec::from_fn(n, |i, _| (h2[i] - z2[i]) * penalty[i]);

        let primal = ((&x - &z1).norm_squared() + (u - &z2).norm_squared()).sqrt();
        let dual = CVec::from_fn(n, |i, _| (z1[i] - z1_prev[i]) * penalty[i]).norm_squared()
            + CVec::from_fn(n, |i, _| (z2[i] - z2_prev[i]) * penalty[i]).norm_squared();
        let dual = dual.sqrt();
        report.primal_residuals.push(primal);
        report.dual_residuals.push(dual);
        report.iterations = it;
        if !is_finite_vec(&z1) {
            return Err(Error::NonFinite("inner ADMM iterate"));
        }
        let eps = params.inner_tol * (1.0 + (z1.norm_squared() + z2.norm_squared()).sqrt());
        if primal <= eps && dual <= eps {
            report.termination = Termination::Converged;
            break;
        }
    }
    if report.termination != Termination::Converged {
        report.termination = Termination::MaxIter;
    }
    let obj = 0.5 * (a * &z1 - b).norm_squared()
        + 0.5 * params.lambda1 * (&z1 - u).norm_squared()
        + params.lambda2 * l12_norm(&z1, u);
    report.objective_history.push(obj);
    Ok((z1, report))
}

/// Value of the relaxed objective.
pub fn bicram_objective(pair: &SteeringPair, g: &CVec, gamma: &CVec, theta: &CVec, params: &BicramParams) -> f64 {
    let fit = hadamard_conj(&(&pair.r * gamma), &(&pair.s * theta)) - g;
    0.5 * fit.norm_squared() + 0.5 * params.lambda1 * (gamma - theta).norm_squared() + params.lambda2 * l12_norm(gamma, theta)
}

/// Matched-filter start `(R ∘ conj S)^H g`.
pub fn matched_filter_start(pair: &SteeringPair, g: &CVec) -> CVec {
    pair.power_matrix().adjoint() * g
}

/// Alternates `θ` and `γ` updates until the relative change of the relaxed
/// objective drops below `outer_tol`. The estimate support holds the entries
/// of `γ` above `1e-6` of its peak modulus.
pub fn bicram_solve(pair: &SteeringPair, g: &CVec, params: &BicramParams, gamma0: &CVec) -> Result<(ReflectivityEstimate, SolverReport)> {
    params.validate()?;
    if gamma0.len() != pair.n_grid() || g.len() != pair.n_obs() {
        return Err(Error::DimensionMismatch(format!(
            "start of length {}, {} observations for a {}×{} steering pair",
            gamma0.len(),
            g.len(),
            pair.n_obs(),
            pair.n_grid()
        )));
    }
    if gamma0.norm() == 0.0 {
        return Err(Error::InvalidArgument("starting point must be nonzero".into()));
    }
    let conj_g = conj_vec(g);
    let mut gamma = gamma0.clone();
    let mut theta = gamma0.clone();
    let mut report = SolverReport::new();
    let mut obj = bicram_objective(pair, g, &gamma, &theta, params);
    report.objective_history.push(obj);

    for it in 1..=params.outer_max {
        let s_t = scale_rows(&conj_vec(&(&pair.r * &gamma)), &pair.s);
        theta = solve_inner(&s_t, &conj_g, &gamma, params)?.0;
        let r_t = scale_rows(&conj_vec(&(&pair.s * &theta)), &pair.r);
        gamma = solve_inner(&r_t, g, &theta, params)?.0;

        let next = bicram_objective(pair, g, &gamma, &theta, params);
        report.objective_history.push(next);
        report.iterations = it;
        let change = (obj - next).abs() / obj.abs().max(f64::MIN_POSITIVE);
        obj = next;
        if gamma.norm() == 0.0 || change <= params.outer_tol {
            report.termination = Termination::Converged;
            break;
        }
    }
    if report.termination != Termination::Converged {
        report.termination = Termination::MaxIter;
    }
    Ok((estimate_from(pair, g, &gamma), report))
}

fn estimate_from(pair: &SteeringPair, g: &CVec, gamma: &CVec) -> ReflectivityEstimate {
    let peak = inf_norm(gamma);
    let support: Vec<usize> = if peak == 0.0 { Vec::new() } else { (0..gamma.len()).filter(|&i| gamma[i].norm() > 1e-6 * peak).collect() };
    let rss = (hadamard_conj(&(&pair.r * gamma), &(&pair.s * gamma)) - g).norm_squared();
    let positions = pair.grid.positions();
    let mut est = ReflectivityEstimate {
        amplitudes: support.iter().map(|&i| gamma[i]).collect(),
        elevations: support.iter().map(|&i| positions[i]).collect(),
        support,
        grid_len: gamma.len(),
        rss,
        phase_gauged: false,
    };
    est.gauge();
    est
}

/// Geometric samples from `0.05 · scale` to `0.5 · scale`.
pub fn lambda_path(scale: f64, n_samples: usize) -> Result<Vec<f64>> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 path samples, got {n_samples}")));
    }
    let (lo, hi) = (0.05 * scale, 0.5 * scale);
    let ratio = (hi / lo).ln() / (n_samples - 1) as f64;
    Ok((0..n_samples).map(|i| if i + 1 == n_samples { hi } else { lo * (ratio * i as f64).exp() }).collect())
}

/// Scale of the path for the relaxed problem: `max(‖R^H g‖∞, ‖S^H g‖∞)`.
pub fn path_scale(pair: &SteeringPair, g: &CVec) -> f64 {
    inf_norm(&(pair.r.adjoint() * g)).max(inf_norm(&(pair.s.adjoint() * g)))
}

#[derive(Debug, Clone)]
pub struct PathSample {
    pub lambda2: f64,
    /// BiCRAM output before order selection.
    pub raw: ReflectivityEstimate,
    /// Order-selected and refitted estimate.
    pub estimate: ReflectivityEstimate,
    pub bic: f64,
    pub report: SolverReport,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub samples: Vec<PathSample>,
    pub selected: usize,
    /// Number of samples whose solve failed.
    pub failures: usize,
}

impl PathResult {
    pub fn best(&self) -> &PathSample {
        &self.samples[self.selected]
    }
}

/// Runs BiCRAM over the joint-sparsity path with `λ1` from `base`, scores each
/// sample by the information criterion over subsets of its support of at most
/// `max_order` entries, and selects the lowest score.
pub fn solution_path(
    pair: &SteeringPair,
    g: &CVec,
    n_samples: usize,
    base: &BicramParams,
    max_order: usize,
    solver: &NlsSolver,
) -> Result<PathResult> {
    let lambdas = lambda_path(path_scale(pair, g), n_samples)?;
    let gamma0 = matched_filter_start(pair, g);
    let model = MultiMasterModel { pair, g, solver: *solver };
    let outcomes: Vec<Result<PathSample>> = lambdas
        .par_iter()
        .map(|&lambda2| {
            let params = BicramParams { lambda2, ..*base };
            let (raw, report) = bicram_solve(pair, g, &params, &gamma0)?;
            let (estimate, score) = select_order(&model, &raw, max_order)?;
            Ok(PathSample { lambda2, raw, estimate, bic: score.score, report })
        })
        .collect();
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let samples: Vec<PathSample> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    if samples.is_empty() {
        return Err(Error::EmptyPath);
    }
    let mut selected = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.bic < samples[selected].bic {
            selected = i;
        }
    }
    Ok(PathResult { samples, selected, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack_model::{build_pairing_graph, forward, steering_pair, ElevationGrid, Geometry, PairingScheme};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut impl Rng) -> Complex64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn setup(seed: u64, len: usize) -> SteeringPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 30;
        let k: Vec<f64> = (0..n).map(|_| rng.random_range(-0.31..0.31)).collect();
        let geom = Geometry::new(k, vec![0.0; n]).unwrap();
        let graph = build_pairing_graph(n, &PairingScheme::SequentialPairs).unwrap();
        let r = geom.rayleigh_resolution();
        let half = (len - 1) as f64 / 2.0 * r / 4.0;
        steering_pair(&graph, &geom, &ElevationGrid::uniform(len, -half, half).unwrap()).unwrap()
    }

    #[test]
    fn prox_boundary_and_identity() {
        let a = CVec::from_vec(vec![Complex64::new(3.0, 0.0), Complex64::new(1.0, 1.0)]);
        let b = CVec::from_vec(vec![Complex64::new(0.0, 4.0), Complex64::new(0.5, 0.0)]);
        let (p, q) = prox_l12(&a, &b, 5.0);
        assert_eq!(p[0], Complex64::new(0.0, 0.0));
        assert_eq!(q[0], Complex64::new(0.0, 0.0));
        let (p, q) = prox_l12(&a, &b, 0.0);
        assert_eq!((p, q), (a, b));
    }

    #[test]
    fn inner_without_sparsity_is_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = CMat::from_fn(12, 5, |_, _| rand_c(&mut rng));
        let b = CVec::from_fn(12, |_, _| rand_c(&mut rng));
        let u = CVec::from_fn(5, |_, _| rand_c(&mut rng));
        let params = BicramParams { lambda1: 0.7, lambda2: 1e-300, inner_tol: 1e-12, inner_max: 20_000, ..Default::default() };
        let (x, rep) = solve_inner(&a, &b, &u, &params).unwrap();
        assert!(rep.converged());
        let mut m = a.adjoint() * &a;
        for i in 0..5 {
            m[(i, i)] += Complex64::new(0.7, 0.0);
        }
        let direct = m.lu().solve(&(a.adjoint() * &b + &u * Complex64::new(0.7, 0.0))).unwrap();
        assert!((x - &direct).norm() <= 1e-8 * direct.norm());
    }

    #[test]
    fn inner_large_sparsity_weight_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = CMat::from_fn(12, 5, |_, _| rand_c(&mut rng));
        let b = CVec::from_fn(12, |_, _| rand_c(&mut rng));
        let u = CVec::zeros(5);
        let lambda2 = 2.0 * inf_norm(&(a.adjoint() * &b));
        let params = BicramParams { lambda2, ..Default::default() };
        let (x, _) = solve_inner(&a, &b, &u, &params).unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn inner_strong_coupling_pulls_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = CMat::from_fn(12, 5, |_, _| rand_c(&mut rng));
        let b = CVec::from_fn(12, |_, _| rand_c(&mut rng));
        let params = BicramParams { lambda1: 1e8, lambda2: 1e-3, ..Default::default() };
        let (x, _) = solve_inner(&a, &b, &CVec::zeros(5), &params).unwrap();
        assert!(x.norm() <= 1e-6 * b.norm());
    }

    #[test]
    fn single_scatterer_peak_and_monotone() {
        let pair = setup(4, 17);
        let mut gamma = CVec::zeros(17);
        gamma[9] = Complex64::new(1.0, 0.0);
        let g = forward(&pair, &gamma).unwrap();
        let scale = path_scale(&pair, &g);
        let params = BicramParams { lambda2: 0.1 * scale, ..Default::default() };
        let (est, rep) = bicram_solve(&pair, &g, &params, &matched_filter_start(&pair, &g)).unwrap();
        let peak = (0..est.order()).max_by(|&i, &j| est.amplitudes[i].norm().total_cmp(&est.amplitudes[j].norm())).unwrap();
        assert_eq!(est.support[peak], 9);
        for w in rep.objective_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-8), "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn path_endpoints_and_spacing() {
        let l = lambda_path(2.0, 11).unwrap();
        assert_eq!(l.len(), 11);
        assert!((l[0] - 0.1).abs() < 1e-15 && l[10] == 1.0);
        for w in l.windows(2) {
            assert!((w[1] / w[0] - 10f64.powf(0.1)).abs() < 1e-12);
        }
        assert_eq!(lambda_path(2.0, 2).unwrap(), vec![0.1, 1.0]);
        assert!(lambda_path(2.0, 1).is_err());
    }

    #[test]
    fn path_recovers_single_scatterer() {
        let pair = setup(5, 17);
        let mut gamma = CVec::zeros(17);
        gamma[6] = Complex64::new(1.3, 0.0);
        let g = forward(&pair, &gamma).unwrap();
        let res = solution_path(&pair, &g, 11, &BicramParams::default(), 2, &NlsSolver::default()).unwrap();
        for s in &res.samples {
            assert!(s.estimate.order() <= 1);
        }
        let best = &res.best().estimate;
        assert_eq!(best.support, vec![6]);
        assert!((best.amplitudes[0].norm() - 1.3).abs() <= 1e-3 * 1.3);
    }
}
