//! Per-look inversion: sparse recovery, order selection and optional
//! off-grid refinement.

use rayon::prelude::*;

use crate::bicram::{lambda_path, solution_path, BicramParams};
use crate::error::{Error, Result};
use crate::estimate::ReflectivityEstimate;
use crate::l1rls::{solve_l1rls, AccelOptions};
use crate::linalg::{count_supports, inf_norm, CVec};
use crate::nls::{sparse_recovery_enumerate, NlsSolver};
use crate::offgrid::{refine_offgrid, OffgridModel, OffgridOptions, RefinedScatterer};
use crate::selection::{bic_value, select_order, LinearModel, MultiMasterModel};
use crate::stack_model::{DifferenceSteering, ElevationGrid, SteeringPair};

/// Relative modulus below which a sparse solution entry is treated as zero.
const SUPPORT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Exhaustive enumeration of the bilinear model.
    NlsEnum { solver: NlsSolver },
    /// Relaxed bilinear solution path.
    Bicram { params: BicramParams, path_samples: usize, solver: NlsSolver },
    /// ℓ1-regularized least squares path on the linear model.
    L1rls { path_samples: usize, accel: AccelOptions, tol: f64, max_iter: usize },
}

impl Method {
    pub fn nls_enum() -> Self {
        Method::NlsEnum { solver: NlsSolver::default() }
    }

    pub fn bicram(path_samples: usize) -> Self {
        Method::Bicram { params: BicramParams::default(), path_samples, solver: NlsSolver::default() }
    }

    pub fn l1rls(path_samples: usize) -> Self {
        let accel = AccelOptions { precondition: Some(1.0), over_relax: Some(1.8), ..AccelOptions::baseline() };
        Method::L1rls { path_samples, accel, tol: 1e-6, max_iter: 50_000 }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Method::NlsEnum { .. } => "nls-enum",
            Method::Bicram { .. } => "bicram",
            Method::L1rls { .. } => "l1rls",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Method::L1rls { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub method: Method,
    pub max_order: usize,
    pub offgrid: Option<OffgridOptions>,
}

/// Forward operator of one look.
#[derive(Debug, Clone, Copy)]
pub enum Operator<'a> {
    MultiMaster(&'a SteeringPair),
    Linear(&'a DifferenceSteering),
}

impl Operator<'_> {
    pub fn n_obs(&self) -> usize {
        match self {
            Operator::MultiMaster(p) => p.n_obs(),
            Operator::Linear(d) => d.n_obs(),
        }
    }

    pub fn grid(&self) -> &ElevationGrid {
        match self {
            Operator::MultiMaster(p) => &p.grid,
            Operator::Linear(d) => &d.grid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LookResult {
    /// On-grid estimate after order selection.
    pub estimate: ReflectivityEstimate,
    /// Reported scatterers: refined when off-grid correction ran, on-grid otherwise.
    pub scatterers: Vec<RefinedScatterer>,
    /// Squared residual of the reported scatterers.
    pub residual: f64,
    /// Supports visited for enumeration, solver iterations of the selected
    /// path sample otherwise.
    pub iterations: usize,
    pub solver: &'static str,
    pub refined: bool,
}

impl LookResult {
    pub fn order(&self) -> usize {
        self.scatterers.len()
    }
}

fn sparse_estimate(dense: &CVec, grid: &ElevationGrid, rss: f64) -> ReflectivityEstimate {
    let peak = inf_norm(dense);
    let support: Vec<usize> = if peak == 0.0 { Vec::new() } else { (0..dense.len()).filter(|&i| dense[i].norm() > SUPPORT_THRESHOLD * peak).collect() };
    let positions = grid.positions();
    ReflectivityEstimate {
        amplitudes: support.iter().map(|&i| dense[i]).collect(),
        elevations: support.iter().map(|&i| positions[i]).collect(),
        support,
        grid_len: grid.len(),
        rss,
        phase_gauged: false,
    }
}

/// Runs the L1RLS path on the linear model and keeps the lowest-score sample.
fn l1rls_path(
    steering: &DifferenceSteering,
    g: &CVec,
    path_samples: usize,
    accel: &AccelOptions,
    tol: f64,
    max_iter: usize,
    max_order: usize,
) -> Result<(ReflectivityEstimate, usize)> {
    let scale = inf_norm(&(steering.a.adjoint() * g));
    let lambdas = lambda_path(scale, path_samples)?;
    let model = LinearModel { a: &steering.a, g, positions: steering.grid.positions() };
    let mut best: Option<(f64, ReflectivityEstimate, usize)> = None;
    let mut last_err = None;
    for lambda in lambdas {
        let outcome = solve_l1rls(&steering.a, g, lambda, accel, tol, max_iter).and_then(|(z, report)| {
            let raw = sparse_estimate(&z, &steering.grid, f64::NAN);
            select_order(&model, &raw, max_order).map(|(est, score)| (score.score, est, report.iterations))
        });
        match outcome {
            Ok((score, est, iters)) => {
                if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                    best = Some((score, est, iters));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, est, iters)) => Ok((est, iters)),
        None => Err(last_err.unwrap_or(Error::EmptyPath)),
    }
}

/// Relative distance, in grid spacings, below which refined scatterers coincide.
const MERGE_TOLERANCE: f64 = 1e-6;

/// Sums the amplitudes of scatterers that converged to the same elevation.
/// Both forward models depend on the reflectivities only through their sum at
/// a shared elevation, so the merge leaves the prediction unchanged.
pub fn merge_coincident(mut scatterers: Vec<RefinedScatterer>, tolerance: f64) -> Vec<RefinedScatterer> {
    let mut merged: Vec<RefinedScatterer> = Vec::with_capacity(scatterers.len());
    scatterers.sort_by(|a, b| a.elevation.total_cmp(&b.elevation));
    for sc in scatterers {
        match merged.last_mut() {
            Some(last) if (sc.elevation - last.elevation).abs() <= tolerance => last.amplitude += sc.amplitude,
            _ => merged.push(sc),
        }
    }
    merged.retain(|sc| sc.amplitude.norm() > 0.0);
    if let Some(first) = merged.first().map(|sc| sc.amplitude) {
        let rot = first.conj() / first.norm();
        for sc in &mut merged {
            sc.amplitude *= rot;
        }
        merged[0].amplitude = first.norm().into();
    }
    merged
}

/// Refines the selected scatterers, then repeatedly drops one scatterer while
/// the re-refined smaller model scores no worse. Neighbouring grid bins that
/// jointly approximate one off-grid scatterer are merged this way.
fn refine_and_prune(
    model: &OffgridModel,
    g: &CVec,
    estimate: &ReflectivityEstimate,
    grid: &ElevationGrid,
    opts: &OffgridOptions,
) -> Result<(Vec<RefinedScatterer>, f64)> {
    let energy = g.norm_squared();
    let n_obs = g.len();
    let refined = refine_offgrid(model, g, estimate, grid, opts)?;
    let mut current = (estimate.support.clone(), refined.scatterers, refined.residual);
    while current.0.len() > 1 {
        let k = current.0.len();
        let mut best: Option<(Vec<usize>, Vec<RefinedScatterer>, f64)> = None;
        for drop in 0..k {
            let keep: Vec<usize> = (0..k).filter(|&i| i != drop).collect();
            let start = ReflectivityEstimate {
                support: keep.iter().map(|&i| current.0[i]).collect(),
                amplitudes: keep.iter().map(|&i| current.1[i].amplitude).collect(),
                elevations: keep.iter().map(|&i| current.1[i].elevation).collect(),
                grid_len: estimate.grid_len,
                rss: f64::NAN,
                phase_gauged: false,
            };
            let r = refine_offgrid(model, g, &start, grid, opts)?;
            if best.as_ref().is_none_or(|b| r.residual < b.2) {
                best = Some((start.support, r.scatterers, r.residual));
            }
        }
        let Some(smaller) = best else { break };
        if bic_value(smaller.2, energy, n_obs, k - 1) > bic_value(current.2, energy, n_obs, k) {
            break;
        }
        current = smaller;
    }
    Ok((current.1, current.2))
}

/// Inverts one look.
pub fn invert_look(op: Operator<'_>, g: &CVec, config: &InversionConfig) -> Result<LookResult> {
    if config.max_order == 0 {
        return Err(Error::InvalidArgument("model order must be at least 1".into()));
    }
    if g.len() != op.n_obs() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} model rows", g.len(), op.n_obs())));
    }
    if !crate::linalg::is_finite_vec(g) || !g.norm_squared().is_finite() {
        return Err(Error::NonFinite("observations"));
    }
    let grid = op.grid();
    let tag = config.method.tag();
    if g.norm_squared() == 0.0 {
        return Ok(LookResult { estimate: ReflectivityEstimate::empty(grid.len(), 0.0), scatterers: Vec::new(), residual: 0.0, iterations: 0, solver: tag, refined: false });
    }

    let (estimate, iterations, offgrid_model) = match (config.method, op) {
        (Method::NlsEnum { solver }, Operator::MultiMaster(pair)) => {
            let raw = sparse_recovery_enumerate(pair, g, config.max_order, &solver)?;
            let model = MultiMasterModel { pair, g, solver };
            let (est, _) = select_order(&model, &raw, config.max_order)?;
            let visited = count_supports(pair.n_grid(), config.max_order).min(usize::MAX as u128) as usize;
            (est, visited, OffgridModel::from_pair(pair))
        }
        (Method::Bicram { params, path_samples, solver }, Operator::MultiMaster(pair)) => {
            let path = solution_path(pair, g, path_samples, &params, config.max_order, &solver)?;
            let best = path.best();
            (best.estimate.clone(), best.report.iterations, OffgridModel::from_pair(pair))
        }
        (Method::L1rls { path_samples, accel, tol, max_iter }, Operator::Linear(steering)) => {
            let (est, iters) = l1rls_path(steering, g, path_samples, &accel, tol, max_iter, config.max_order)?;
            (est, iters, OffgridModel::from_difference(steering))
        }
        (method, _) => {
            let wanted = if method.is_linear() { "a single-master or fake single-master" } else { "a multi-master" };
            return Err(Error::InvalidArgument(format!("method {} requires {wanted} operator", method.tag())));
        }
    };

    let on_grid: Vec<RefinedScatterer> =
        estimate.amplitudes.iter().zip(&estimate.elevations).map(|(&amplitude, &elevation)| RefinedScatterer { amplitude, elevation }).collect();
    let (scatterers, residual, refined) = match config.offgrid {
        Some(opts) if estimate.order() > 0 => {
            let (kept, residual) = refine_and_prune(&offgrid_model, g, &estimate, grid, &opts)?;
            (merge_coincident(kept, MERGE_TOLERANCE * grid.spacing().max(f64::MIN_POSITIVE)), residual, true)
        }
        _ => (on_grid, estimate.rss, false),
    };
    Ok(LookResult { estimate, scatterers, residual, iterations, solver: tag, refined })
}

/// Inverts independent looks in parallel; results keep the input order.
pub fn invert_looks(op: Operator<'_>, looks: &[CVec], config: &InversionConfig) -> Vec<Result<LookResult>> {
    looks.par_iter().map(|g| invert_look(op, g, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{gen_geometry, simulate_stack, Scatterer, Scene, WavenumberSpacing};
    use crate::stack_model::{build_pairing_graph, difference_steering, steering_pair, PairingScheme};
    use num_complex::Complex64;

    fn scene_stack(scatterers: Vec<Scatterer>) -> (SteeringPair, DifferenceSteering, CVec, f64) {
        let geom = gen_geometry(30, 0.31, WavenumberSpacing::Random(5), 11.0).unwrap();
        let graph = build_pairing_graph(30, &PairingScheme::SequentialPairs).unwrap();
        let rayleigh = geom.rayleigh_resolution();
        let grid = ElevationGrid::uniform(17, -2.0 * rayleigh, 2.0 * rayleigh).unwrap();
        let stack = simulate_stack(&Scene::noiseless(scatterers).unwrap(), &graph, &geom, 0.031, 0).unwrap();
        let pair = steering_pair(&graph, &geom, &grid).unwrap();
        let diff = difference_steering(&graph, &geom, &grid).unwrap();
        (pair, diff, stack.g, rayleigh)
    }

    #[test]
    fn nls_single_offgrid_scatterer() {
        let geom = gen_geometry(30, 0.31, WavenumberSpacing::Random(5), 11.0).unwrap();
        let r = geom.rayleigh_resolution();
        let truth = 0.3 * r + 0.5 * r / 4.0;
        let (pair, _, g, rayleigh) = scene_stack(vec![Scatterer::new(truth, Complex64::new(1.0, 0.0))]);
        let config = InversionConfig { method: Method::nls_enum(), max_order: 2, offgrid: Some(OffgridOptions::default()) };
        let res = invert_look(Operator::MultiMaster(&pair), &g, &config).unwrap();
        // The on-grid fit splits the scatterer over its two neighbouring bins.
        assert_eq!(res.estimate.order(), 2);
        assert_eq!(res.order(), 1);
        assert!((res.scatterers[0].elevation - truth).abs() <= 1e-3 * rayleigh);
        assert!(res.refined);
        assert_eq!(res.solver, "nls-enum");
    }

    #[test]
    fn merge_preserves_prediction() {
        let model = OffgridModel::Linear { dk: vec![-0.2, 0.05, 0.3] };
        let sc = vec![
            RefinedScatterer { amplitude: Complex64::new(0.2, 0.1), elevation: 4.0 },
            RefinedScatterer { amplitude: Complex64::new(-1.0, 0.5), elevation: -3.0 },
            RefinedScatterer { amplitude: Complex64::new(0.5, -0.3), elevation: 4.0 + 1e-9 },
        ];
        let merged = merge_coincident(sc.clone(), 1e-6);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].elevation, -3.0);
        assert_eq!(merged[0].amplitude.im, 0.0);
        let before = model.predict(&sc.iter().map(|s| s.amplitude).collect::<Vec<_>>(), &sc.iter().map(|s| s.elevation).collect::<Vec<_>>());
        let after = model.predict(&merged.iter().map(|s| s.amplitude).collect::<Vec<_>>(), &merged.iter().map(|s| s.elevation).collect::<Vec<_>>());
        // Equal up to the global phase removed by the gauge.
        let rot = before.dotc(&after) / before.dotc(&after).norm();
        assert!(inf_norm(&(before * rot - after)) < 1e-8);
    }

    #[test]
    fn linear_path_single_scatterer() {
        let (_, diff, g, _) = scene_stack(vec![Scatterer::new(0.0, Complex64::new(1.0, 0.0))]);
        let config = InversionConfig { method: Method::l1rls(11), max_order: 2, offgrid: None };
        let res = invert_look(Operator::Linear(&diff), &g, &config).unwrap();
        assert_eq!(res.order(), 1);
        assert_eq!(res.estimate.support, vec![8]);
        assert!(!res.refined);
    }

    #[test]
    fn empty_look_and_mismatches() {
        let (pair, diff, g, _) = scene_stack(vec![Scatterer::new(0.0, Complex64::new(1.0, 0.0))]);
        let zero = CVec::zeros(g.len());
        let config = InversionConfig { method: Method::nls_enum(), max_order: 2, offgrid: Some(OffgridOptions::default()) };
        assert_eq!(invert_look(Operator::MultiMaster(&pair), &zero, &config).unwrap().order(), 0);
        assert!(invert_look(Operator::Linear(&diff), &g, &config).is_err());
        let linear = InversionConfig { method: Method::l1rls(11), ..config };
        assert!(invert_look(Operator::MultiMaster(&pair), &g, &linear).is_err());
        assert!(invert_look(Operator::MultiMaster(&pair), &CVec::zeros(3), &config).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let (pair, _, g, _) = scene_stack(vec![Scatterer::new(3.0, Complex64::new(1.0, 0.0))]);
        let looks = vec![g.clone(), g.scale(2.0), CVec::zeros(g.len())];
        let config = InversionConfig { method: Method::nls_enum(), max_order: 1, offgrid: None };
        let par = invert_looks(Operator::MultiMaster(&pair), &looks, &config);
        for (look, r) in looks.iter().zip(par) {
            let seq = invert_look(Operator::MultiMaster(&pair), look, &config).unwrap();
            assert_eq!(r.unwrap().estimate, seq.estimate);
        }
    }
}
