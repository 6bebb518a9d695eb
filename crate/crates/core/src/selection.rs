//! Model-order selection with a Bayesian information criterion.
//!
//! A support `Ω` fitted with squared residual `rss` on `N` observations scores
//!
//! ```text
//! 2 ln(rss / N) + (5|Ω| + 1) ln(N) / N
//! ```
//!
//! and the lowest score wins. Candidate supports are the subsets of a sparse
//! recovery estimate, plus the empty model.

use crate::error::{Error, Result};
use crate::estimate::ReflectivityEstimate;
use crate::linalg::{for_each_subset, gauge_first_nonzero, least_squares, select_columns, CMat, CVec};
use crate::nls::{solve_subset, NlsSolver};
use crate::stack_model::SteeringPair;

/// Relative floor on the residual inside the logarithm. Exact fits of
/// noiseless data would otherwise be ranked by rounding noise.
pub const RSS_FLOOR: f64 = 1e-20;

/// A family of models indexed by grid supports.
pub trait SubsetModel {
    fn n_obs(&self) -> usize;
    fn obs_energy(&self) -> f64;
    fn positions(&self) -> &[f64];
    /// Best coefficients on `support` and their squared residual.
    fn fit(&self, support: &[usize]) -> Result<(CVec, f64)>;
}

/// Bilinear multi-master model.
pub struct MultiMasterModel<'a> {
    pub pair: &'a SteeringPair,
    pub g: &'a CVec,
    pub solver: NlsSolver,
}

impl SubsetModel for MultiMasterModel<'_> {
    fn n_obs(&self) -> usize {
        self.g.len()
    }

    fn obs_energy(&self) -> f64 {
        self.g.norm_squared()
    }

    fn positions(&self) -> &[f64] {
        self.pair.grid.positions()
    }

    fn fit(&self, support: &[usize]) -> Result<(CVec, f64)> {
        solve_subset(self.pair, self.g, support, &self.solver)
    }
}

/// Linear model `g ≈ A γ`, used for single-master and fake single-master stacks.
pub struct LinearModel<'a> {
    pub a: &'a CMat,
    pub g: &'a CVec,
    pub positions: &'a [f64],
}

impl SubsetModel for LinearModel<'_> {
    fn n_obs(&self) -> usize {
        self.g.len()
    }

    fn obs_energy(&self) -> f64 {
        self.g.norm_squared()
    }

    fn positions(&self) -> &[f64] {
        self.positions
    }

    fn fit(&self, support: &[usize]) -> Result<(CVec, f64)> {
        if let Some(&bad) = support.iter().find(|&&i| i >= self.a.ncols()) {
            return Err(Error::InvalidArgument(format!("support index {bad} outside grid of {}", self.a.ncols())));
        }
        let sub = select_columns(self.a, support);
        let mut x = least_squares(&sub, self.g).ok_or(Error::NotPositiveDefinite)?;
        let rss = (&sub * &x - self.g).norm_squared();
        gauge_first_nonzero(&mut x, 0.0);
        Ok((x, rss))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicScore {
    pub order: usize,
    pub support: Vec<usize>,
    pub rss: f64,
    pub score: f64,
}

/// The information criterion for a fit of `order` scatterers.
pub fn bic_value(rss: f64, obs_energy: f64, n_obs: usize, order: usize) -> f64 {
    let n = n_obs as f64;
    let floored = rss.max(RSS_FLOOR * obs_energy).max(f64::MIN_POSITIVE);
    2.0 * (floored / n).ln() + (5 * order + 1) as f64 * n.ln() / n
}

pub fn bic_penalty(n_obs: usize, order: usize) -> f64 {
    let n = n_obs as f64;
    (5 * order + 1) as f64 * n.ln() / n
}

pub fn bic_score<M: SubsetModel + ?Sized>(model: &M, support: &[usize]) -> Result<BicScore> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("support must be nonempty".into()));
    }
    let (_, rss) = model.fit(support)?;
    Ok(BicScore {
        order: support.len(),
        support: support.to_vec(),
        rss,
        score: bic_value(rss, model.obs_energy(), model.n_obs(), support.len()),
    })
}

/// Scores the empty model and every subset of the candidate support with at
/// most `max_order` entries, returning the refitted lowest-score estimate.
/// A larger model must improve the score strictly to replace a smaller one.
pub fn select_order<M: SubsetModel + ?Sized>(
    model: &M,
    candidate: &ReflectivityEstimate,
    max_order: usize,
) -> Result<(ReflectivityEstimate, BicScore)> {
    let energy = model.obs_energy();
    let n_obs = model.n_obs();
    let mut best_score = BicScore { order: 0, support: Vec::new(), rss: energy, score: bic_value(energy, energy, n_obs, 0) };
    let mut best_coeffs = CVec::zeros(0);
    let mut failure = None;
    for size in 1..=max_order.min(candidate.support.len()) {
        for_each_subset(&candidate.support, size, |support| {
            if support.len() != size || failure.is_some() {
                return;
            }
            match model.fit(support) {
                Ok((x, rss)) => {
                    let score = bic_value(rss, energy, n_obs, size);
                    if score < best_score.score - 1e-12 * best_score.score.abs().max(1.0) {
                        best_score = BicScore { order: size, support: support.to_vec(), rss, score };
                        best_coeffs = x;
                    }
                }
                Err(e) => failure = Some(e),
            }
        });
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let positions = model.positions();
    let mut est = ReflectivityEstimate {
        support: best_score.support.clone(),
        amplitudes: best_coeffs.iter().copied().collect(),
        elevations: best_score.support.iter().map(|&i| positions[i]).collect(),
        grid_len: candidate.grid_len,
        rss: best_score.rss,
        phase_gauged: false,
    };
    est.gauge();
    Ok((est, best_score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack_model::{build_pairing_graph, forward, steering_pair, ElevationGrid, Geometry, PairingScheme};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn candidate(support: Vec<usize>, len: usize) -> ReflectivityEstimate {
        ReflectivityEstimate {
            amplitudes: vec![Complex64::new(1.0, 0.0); support.len()],
            elevations: vec![0.0; support.len()],
            support,
            grid_len: len,
            rss: 0.0,
            phase_gauged: true,
        }
    }

    #[test]
    fn penalty_arithmetic() {
        assert!((bic_penalty(15, 2) - 11.0 * 15f64.ln() / 15.0).abs() < 1e-15);
        assert!(bic_penalty(15, 3) > bic_penalty(15, 2));
    }

    #[test]
    fn true_singleton_scores_below_wrong_singleton() {
        let pair = setup(1, 17);
        let mut gamma = CVec::zeros(17);
        gamma[8] = Complex64::new(1.2, 0.0);
        let g = forward(&pair, &gamma).unwrap();
        let model = MultiMasterModel { pair: &pair, g: &g, solver: NlsSolver::default() };
        let right = bic_score(&model, &[8]).unwrap();
        assert!(right.rss <= 1e-10);
        let expected = bic_value(right.rss, g.norm_squared(), 15, 1);
        assert_eq!(right.score, expected);
        let wrong = bic_score(&model, &[3]).unwrap();
        assert!(wrong.score > right.score);
        assert!(bic_score(&model, &[]).is_err());
    }

    #[test]
    fn drops_spurious_candidate() {
        let pair = setup(2, 17);
        let mut gamma = CVec::zeros(17);
        gamma[4] = Complex64::new(1.0, 0.0);
        let g = forward(&pair, &gamma).unwrap();
        let model = MultiMasterModel { pair: &pair, g: &g, solver: NlsSolver::default() };
        let (est, score) = select_order(&model, &candidate(vec![4, 10], 17), 2).unwrap();
        assert_eq!(est.support, vec![4]);
        assert_eq!(score.order, 1);
    }

    #[test]
    fn keeps_two_true_scatterers() {
        let pair = setup(3, 17);
        let mut gamma = CVec::zeros(17);
        gamma[5] = Complex64::new(1.0, 0.0);
        gamma[11] = Complex64::from_polar(0.8, 2.0);
        let g = forward(&pair, &gamma).unwrap();
        let model = MultiMasterModel { pair: &pair, g: &g, solver: NlsSolver::default() };
        let (est, _) = select_order(&model, &candidate(vec![5, 11], 17), 2).unwrap();
        assert_eq!(est.support, vec![5, 11]);
    }

    #[test]
    fn empty_observation_selects_empty_model() {
        let pair = setup(4, 9);
        let g = CVec::zeros(15);
        let model = MultiMasterModel { pair: &pair, g: &g, solver: NlsSolver::default() };
        let (est, score) = select_order(&model, &candidate(vec![2], 9), 2).unwrap();
        assert_eq!(est.order(), 0);
        assert_eq!(score.order, 0);
    }

    #[test]
    fn linear_model_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dk: Vec<f64> = (0..15).map(|_| rng.random_range(-0.6..0.6)).collect();
        let pos: Vec<f64> = (0..20).map(|i| -20.0 + 2.0 * i as f64).collect();
        let a = CMat::from_fn(15, 20, |i, j| Complex64::cis(-dk[i] * pos[j]));
        let g = a.column(7) * Complex64::new(0.5, 0.5);
        let model = LinearModel { a: &a, g: &g, positions: &pos };
        let (est, _) = select_order(&model, &candidate(vec![7, 12, 15], 20), 3).unwrap();
        assert_eq!(est.support, vec![7]);
        assert!((est.amplitudes[0].norm() - 0.5f64.hypot(0.5)).abs() < 1e-12);
        assert_eq!(est.elevations, vec![pos[7]]);
    }
}
