//! Synthetic scenes, stacks and error statistics.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::stack_model::{AcquisitionGraph, Geometry, MultiMasterStack};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WavenumberSpacing {
    Uniform,
    Random(u64),
}

/// Wavenumbers in `[-k_max, k_max]` and timestamps `n * t_spacing` days.
pub fn gen_geometry(n_acq: usize, k_max: f64, spacing: WavenumberSpacing, t_spacing: f64) -> Result<Geometry> {
    if n_acq < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 acquisitions, got {n_acq}")));
    }
    if !(k_max > 0.0) || !k_max.is_finite() {
        return Err(Error::InvalidArgument(format!("k_max must be positive, got {k_max}")));
    }
    let k = match spacing {
        WavenumberSpacing::Uniform => {
            let step = 2.0 * k_max / (n_acq - 1) as f64;
            (0..n_acq).map(|i| if i == n_acq - 1 { k_max } else { -k_max + step * i as f64 }).collect()
        }
        WavenumberSpacing::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n_acq).map(|_| rng.random_range(-k_max..=k_max)).collect()
        }
    };
    let t = (0..n_acq).map(|i| i as f64 * t_spacing).collect();
    Geometry::new(k, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    /// Elevation (m).
    pub elevation: f64,
    pub reflectivity: Complex64,
    /// Linear deformation rate (m/day).
    pub velocity: Option<f64>,
}

impl Scatterer {
    pub fn new(elevation: f64, reflectivity: Complex64) -> Self {
        Self { elevation, reflectivity, velocity: None }
    }

    pub fn moving(elevation: f64, reflectivity: Complex64, velocity: f64) -> Self {
        Self { elevation, reflectivity, velocity: Some(velocity) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
    /// Per-SLC signal-to-noise ratio; `f64::INFINITY` for noiseless data.
    pub snr_db: f64,
}

impl Scene {
    pub fn new(scatterers: Vec<Scatterer>, snr_db: f64) -> Result<Self> {
        for sc in &scatterers {
            if !(sc.reflectivity.norm() > 0.0) {
                return Err(Error::InvalidArgument("scatterer reflectivity must be nonzero".into()));
            }
            if !sc.elevation.is_finite() || !sc.reflectivity.is_finite() || sc.velocity.is_some_and(|v| !v.is_finite()) {
                return Err(Error::NonFinite("scatterer"));
            }
        }
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("invalid SNR {snr_db}")));
        }
        Ok(Self { scatterers, snr_db })
    }

    pub fn noiseless(scatterers: Vec<Scatterer>) -> Result<Self> {
        Self::new(scatterers, f64::INFINITY)
    }
}

/// Noise-free SLC samples `Σ γ exp(-j(k s + 4π v t / λ))`.
pub fn clean_slcs(scene: &Scene, geom: &Geometry, wavelength: f64) -> CVec {
    CVec::from_fn(geom.len(), |n, _| {
        let (k, t) = (geom.wavenumbers[n], geom.timestamps[n]);
        scene
            .scatterers
            .iter()
            .map(|sc| {
                let motion = sc.velocity.map_or(0.0, |v| 4.0 * PI * v * t / wavelength);
                sc.reflectivity * Complex64::cis(-(k * sc.elevation + motion))
            })
            .sum()
    })
}

/// Noise variance giving the requested SNR relative to the mean SLC power.
pub fn noise_variance(clean: &CVec, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY || clean.is_empty() {
        return 0.0;
    }
    let power = clean.norm_squared() / clean.len() as f64;
    power / 10f64.powf(snr_db / 10.0)
}

/// Circular complex Gaussian samples with `E|w|² = variance`.
pub fn circular_noise<R: Rng>(rng: &mut R, len: usize, variance: f64) -> CVec {
    let sd = (variance / 2.0).sqrt();
    CVec::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(sd * re, sd * im)
    })
}

/// SLCs with noise at the scene SNR.
pub fn simulate_slcs(scene: &Scene, geom: &Geometry, wavelength: f64, seed: u64) -> Result<CVec> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::InvalidArgument(format!("wavelength must be positive, got {wavelength}")));
    }
    let clean = clean_slcs(scene, geom, wavelength);
    let variance = noise_variance(&clean, scene.snr_db);
    if variance == 0.0 {
        return Ok(clean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(clean + circular_noise(&mut rng, geom.len(), variance))
}

/// Forms `slave * conj(master)` for every edge of the graph.
pub fn interferograms(slcs: &CVec, graph: &AcquisitionGraph) -> Result<CVec> {
    if slcs.len() != graph.n_acq() {
        return Err(Error::DimensionMismatch(format!("{} SLCs for {} acquisitions", slcs.len(), graph.n_acq())));
    }
    Ok(CVec::from_iterator(graph.n_edges(), graph.edges().iter().map(|e| slcs[e.slave] * slcs[e.master].conj())))
}

pub fn simulate_stack(scene: &Scene, graph: &AcquisitionGraph, geom: &Geometry, wavelength: f64, seed: u64) -> Result<MultiMasterStack> {
    if geom.len() != graph.n_acq() {
        return Err(Error::DimensionMismatch(format!("geometry has {} acquisitions, graph has {}", geom.len(), graph.n_acq())));
    }
    let slcs = simulate_slcs(scene, geom, wavelength, seed)?;
    MultiMasterStack::new(interferograms(&slcs, graph)?, graph.clone(), geom.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (divisor `n - 1`, zero for one sample).
    pub sd: f64,
    /// Median absolute deviation from the median, unscaled.
    pub mad: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn error_stats(estimates: &[f64], truth: &[f64]) -> Result<ErrorStats> {
    if estimates.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("{} estimates vs {} truth values", estimates.len(), truth.len())));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let errors: Vec<f64> = estimates.iter().zip(truth).map(|(e, t)| e - t).collect();
    summarize(&errors)
}

/// Statistics of a nonempty sample of errors.
pub fn summarize(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("errors"));
    }
    let n = errors.len();
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = errors.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    let med = median(&sorted);
    let mut dev: Vec<f64> = errors.iter().map(|e| (e - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Ok(ErrorStats { count: n, min: sorted[0], max: sorted[n - 1], mean, median: med, sd, mad: median(&dev) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inf_norm;
    use crate::stack_model::{build_pairing_graph, Edge, PairingScheme};

    const WAVELENGTH: f64 = 0.031;

    #[test]
    fn uniform_geometry() {
        let g = gen_geometry(31, 0.31, WavenumberSpacing::Uniform, 11.0).unwrap();
        assert_eq!(g.wavenumbers[0], -0.31);
        assert_eq!(g.wavenumbers[30], 0.31);
        assert!((g.rayleigh_resolution() - 10.134).abs() < 1e-3);
        assert!(g.timestamps.windows(2).all(|w| w[1] > w[0]));
        let two = gen_geometry(2, 0.5, WavenumberSpacing::Uniform, 1.0).unwrap();
        assert_eq!(two.wavenumbers, vec![-0.5, 0.5]);
        assert!(gen_geometry(1, 0.5, WavenumberSpacing::Uniform, 1.0).is_err());
        assert!(gen_geometry(3, 0.0, WavenumberSpacing::Uniform, 1.0).is_err());
    }

    #[test]
    fn random_geometry_is_seeded() {
        let a = gen_geometry(20, 0.31, WavenumberSpacing::Random(7), 1.0).unwrap();
        let b = gen_geometry(20, 0.31, WavenumberSpacing::Random(7), 1.0).unwrap();
        let c = gen_geometry(20, 0.31, WavenumberSpacing::Random(8), 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.wavenumbers.iter().all(|k| k.abs() <= 0.31));
    }

    #[test]
    fn single_scatterer_noiseless_closed_form() {
        let geom = gen_geometry(10, 0.3, WavenumberSpacing::Random(3), 11.0).unwrap();
        let graph = build_pairing_graph(10, &PairingScheme::SequentialPairs).unwrap();
        let gamma = Complex64::from_polar(1.3, 0.7);
        let scene = Scene::noiseless(vec![Scatterer::new(4.0, gamma)]).unwrap();
        let stack = simulate_stack(&scene, &graph, &geom, WAVELENGTH, 0).unwrap();
        for (e, g) in graph.edges().iter().zip(stack.g.iter()) {
            let dk = geom.wavenumbers[e.slave] - geom.wavenumbers[e.master];
            let expected = Complex64::cis(-dk * 4.0) * gamma.norm_sqr();
            assert!((g - expected).norm() < 1e-12);
            assert!((g.norm() - gamma.norm_sqr()).abs() < 1e-12);
        }
    }

    fn pursuit_setup() -> (AcquisitionGraph, Geometry) {
        // Pairs acquired simultaneously, days apart from one another.
        let k = vec![-0.3, -0.1, 0.05, 0.12, 0.2, 0.31];
        let t = vec![0.0, 0.0, 11.0, 11.0, 22.0, 22.0];
        let edges = (0..3).map(|i| Edge { master: 2 * i, slave: 2 * i + 1 }).collect();
        (AcquisitionGraph::new(6, edges).unwrap(), Geometry::new(k, t).unwrap())
    }

    #[test]
    fn common_motion_cancels_in_simultaneous_pairs() {
        let (graph, geom) = pursuit_setup();
        let still = vec![Scatterer::new(-3.0, Complex64::new(1.0, 0.0)), Scatterer::new(7.0, Complex64::new(0.4, 0.6))];
        let base = simulate_stack(&Scene::noiseless(still.clone()).unwrap(), &graph, &geom, WAVELENGTH, 0).unwrap();
        let moving = |v1: f64, v2: f64| {
            let sc = vec![Scatterer::moving(-3.0, still[0].reflectivity, v1), Scatterer::moving(7.0, still[1].reflectivity, v2)];
            simulate_stack(&Scene::noiseless(sc).unwrap(), &graph, &geom, WAVELENGTH, 0).unwrap().g
        };
        let same = moving(0.002, 0.002);
        assert!(inf_norm(&(same - &base.g)) <= 1e-12);
        let differ = moving(0.002, -0.001);
        assert!(inf_norm(&(differ - &base.g)) > 1e-6);
    }

    #[test]
    fn snr_calibration() {
        let geom = gen_geometry(4, 0.3, WavenumberSpacing::Uniform, 1.0).unwrap();
        let scene = Scene::new(vec![Scatterer::new(1.0, Complex64::new(2.0, 1.0))], 2.0).unwrap();
        let clean = clean_slcs(&scene, &geom, WAVELENGTH);
        let variance = noise_variance(&clean, scene.snr_db);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = circular_noise(&mut rng, 100_000, variance);
        let empirical = 10.0 * (clean.norm_squared() / clean.len() as f64 / (noise.norm_squared() / noise.len() as f64)).log10();
        assert!((empirical - 2.0).abs() < 0.2, "{empirical}");
    }

    #[test]
    fn stacks_are_reproducible() {
        let geom = gen_geometry(8, 0.3, WavenumberSpacing::Random(1), 11.0).unwrap();
        let graph = build_pairing_graph(8, &PairingScheme::SequentialPairs).unwrap();
        let scene = Scene::new(vec![Scatterer::new(2.0, Complex64::new(1.0, 0.0))], 5.0).unwrap();
        let a = simulate_stack(&scene, &graph, &geom, WAVELENGTH, 42).unwrap();
        let b = simulate_stack(&scene, &graph, &geom, WAVELENGTH, 42).unwrap();
        let c = simulate_stack(&scene, &graph, &geom, WAVELENGTH, 43).unwrap();
        assert_eq!(a.g, b.g);
        assert_ne!(a.g, c.g);
    }

    #[test]
    fn scene_validation() {
        assert!(Scene::noiseless(vec![Scatterer::new(0.0, Complex64::new(0.0, 0.0))]).is_err());
        assert!(Scene::noiseless(vec![Scatterer::new(f64::NAN, Complex64::new(1.0, 0.0))]).is_err());
        assert!(Scene::new(vec![], f64::NAN).is_err());
    }

    #[test]
    fn stats_hand_values() {
        let s = summarize(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.median, s.sd, s.mad, s.min, s.max), (0.0, 0.0, 1.0, 1.0, -1.0, 1.0));
        let zero = error_stats(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((zero.mean, zero.sd, zero.mad, zero.median), (0.0, 0.0, 0.0, 0.0));
        assert!(error_stats(&[1.0], &[1.0, 2.0]).is_err());
        assert!(error_stats(&[], &[]).is_err());
        let even = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(even.median, 2.5);
        assert_eq!(even.mad, 1.0);
    }

    #[test]
    fn stats_translation() {
        let e = [0.3, -1.2, 2.5, 0.0, 0.7];
        let shifted: Vec<f64> = e.iter().map(|x| x + 5.0).collect();
        let (a, b) = (summarize(&e).unwrap(), summarize(&shifted).unwrap());
        assert!((b.mean - a.mean - 5.0).abs() < 1e-12);
        assert!((b.sd - a.sd).abs() < 1e-12);
        assert!((b.mad - a.mad).abs() < 1e-12);
    }
}
