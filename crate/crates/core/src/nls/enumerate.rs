use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::{closed_form_1d, solve_nls_admm, solve_nls_trustregion, AdmmOptions, NlsProblem, TrustRegionOptions};
use crate::error::{Error, Result};
use crate::estimate::ReflectivityEstimate;
use crate::linalg::{count_supports, for_each_subset, gauge_first_nonzero, select_columns, CVec};
use crate::stack_model::SteeringPair;

/// Maximum number of candidate supports visited by exhaustive enumeration.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NlsSolver {
    Admm(AdmmOptions),
    TrustRegion(TrustRegionOptions),
}

impl NlsSolver {
    pub fn tag(&self) -> &'static str {
        match self {
            NlsSolver::Admm(_) => "nls-admm",
            NlsSolver::TrustRegion(_) => "nls-trn",
        }
    }
}

impl Default for NlsSolver {
    fn default() -> Self {
        NlsSolver::TrustRegion(TrustRegionOptions::default())
    }
}

/// Fits the bilinear model restricted to `support`, returning the
/// coefficients (phase-gauged) and the squared residual norm.
///
/// Singletons use the closed-form minimizer. Larger supports start from the
/// per-column closed-form magnitudes under several relative phase patterns
/// and keep the best local solution.
pub fn solve_subset(pair: &SteeringPair, g: &CVec, support: &[usize], solver: &NlsSolver) -> Result<(CVec, f64)> {
    if support.is_empty() {
        return Ok((CVec::zeros(0), g.norm_squared()));
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= pair.n_grid()) {
        return Err(Error::InvalidArgument(format!("support index {bad} outside grid of {}", pair.n_grid())));
    }
    if g.len() != pair.n_obs() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} edges", g.len(), pair.n_obs())));
    }
    let mags: Vec<f64> = support
        .iter()
        .map(|&l| closed_form_1d(&pair.r.column(l).into_owned(), &pair.s.column(l).into_owned(), g))
        .collect::<Result<_>>()?;

    let problem = NlsProblem::new(select_columns(&pair.r, support), select_columns(&pair.s, support), g.clone())?;
    if support.len() == 1 {
        let x = CVec::from_element(1, Complex64::new(mags[0], 0.0));
        let rss = 2.0 * problem.objective(&x)?;
        return Ok((x, rss));
    }

    let peak = mags.iter().copied().fold(0.0, f64::max);
    let reference = if peak > 0.0 { peak } else { (g.norm() / (g.len() as f64).sqrt() / support.len() as f64).sqrt() };
    let base: Vec<f64> = mags.iter().map(|&m| m.max(0.1 * reference)).collect();

    let mut best: Option<(CVec, f64)> = None;
    for pattern in 0..4 {
        let x0 = CVec::from_fn(support.len(), |i, _| Complex64::from_polar(base[i], FRAC_PI_2 * (pattern * i) as f64));
        let x = match solver {
            NlsSolver::Admm(opts) => solve_nls_admm(&problem, &x0, opts)?.0,
            NlsSolver::TrustRegion(opts) => solve_nls_trustregion(&problem, &x0, opts)?.0,
        };
        let rss = 2.0 * problem.objective(&x)?;
        if best.as_ref().is_none_or(|(_, b)| rss < *b) {
            best = Some((x, rss));
        }
    }
    let (mut x, rss) = best.expect("at least one start");
    gauge_first_nonzero(&mut x, 0.0);
    Ok((x, rss))
}

/// Exhaustive sparse recovery over every support of size `1..=max_order`.
///
/// Supports are visited by increasing size and lexicographically within a
/// size; a later support replaces the incumbent only if it lowers the
/// residual by more than `1e-12 ‖g‖²`.
pub fn sparse_recovery_enumerate(pair: &SteeringPair, g: &CVec, max_order: usize, solver: &NlsSolver) -> Result<ReflectivityEstimate> {
    if max_order == 0 {
        return Err(Error::InvalidArgument("model order must be at least 1".into()));
    }
    let l = pair.n_grid();
    if l == 0 {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    let subsets = count_supports(l, max_order);
    if subsets > ENUMERATION_LIMIT {
        return Err(Error::CombinatorialLimit { subsets, limit: ENUMERATION_LIMIT });
    }
    let tie = 1e-12 * g.norm_squared();
    let items: Vec<usize> = (0..l).collect();
    let mut best: Option<(Vec<usize>, CVec, f64)> = None;
    let mut failure = None;
    for size in 1..=max_order.min(l) {
        for_each_subset(&items, size, |support| {
            if support.len() != size || failure.is_some() {
                return;
            }
            match solve_subset(pair, g, support, solver) {
                Ok((x, rss)) => {
                    if best.as_ref().is_none_or(|(_, _, b)| rss < b - tie) {
                        best = Some((support.to_vec(), x, rss));
                    }
                }
                Err(e) => failure = Some(e),
            }
        });
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let (support, x, rss) = best.expect("grid is nonempty");
    let positions = pair.grid.positions();
    let mut est = ReflectivityEstimate {
        elevations: support.iter().map(|&i| positions[i]).collect(),
        amplitudes: x.iter().copied().collect(),
        support,
        grid_len: l,
        rss,
        phase_gauged: false,
    };
    est.gauge();
    Ok(est)
}
