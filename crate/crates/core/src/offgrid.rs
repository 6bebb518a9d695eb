//! Continuous refinement of scatterer elevations and amplitudes.
//!
//! Starting from an on-grid estimate, the real and imaginary part of every
//! amplitude and every elevation are optimized jointly by a projected
//! quasi-Newton method with central finite-difference gradients. Elevations
//! stay within the grid extent widened by one spacing on each side.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimate::ReflectivityEstimate;
use crate::linalg::{is_finite_vec, CVec, RMat, RVec};
use crate::stack_model::{DifferenceSteering, ElevationGrid, SteeringPair};

/// Continuous forward model used by the refinement.
#[derive(Debug, Clone, PartialEq)]
pub enum OffgridModel {
    /// `Σ_{l,l'} γ_l conj(γ_l') exp(−j (k_slave s_l − k_master s_l'))`.
    MultiMaster { k_slave: Vec<f64>, k_master: Vec<f64> },
    /// `Σ_l γ_l exp(−j Δk s_l)`.
    Linear { dk: Vec<f64> },
}

impl OffgridModel {
    pub fn from_pair(pair: &SteeringPair) -> Self {
        OffgridModel::MultiMaster { k_slave: pair.k_slave.clone(), k_master: pair.k_master.clone() }
    }

    pub fn from_difference(steering: &DifferenceSteering) -> Self {
        OffgridModel::Linear { dk: steering.dk.clone() }
    }

    pub fn n_obs(&self) -> usize {
        match self {
            OffgridModel::MultiMaster { k_slave, .. } => k_slave.len(),
            OffgridModel::Linear { dk } => dk.len(),
        }
    }

    /// Predicted observations for scatterers at `elevations` with `amplitudes`.
    pub fn predict(&self, amplitudes: &[Complex64], elevations: &[f64]) -> CVec {
        match self {
            OffgridModel::MultiMaster { k_slave, k_master } => CVec::from_fn(k_slave.len(), |n, _| {
                let mut slave = Complex64::new(0.0, 0.0);
                let mut master = Complex64::new(0.0, 0.0);
                for (a, &s) in amplitudes.iter().zip(elevations) {
                    slave += Complex64::cis(-k_slave[n] * s) * a;
                    master += Complex64::cis(-k_master[n] * s) * a;
                }
                slave * master.conj()
            }),
            OffgridModel::Linear { dk } => CVec::from_fn(dk.len(), |n, _| {
                amplitudes
                    .iter()
                    .zip(elevations)
                    .map(|(a, &s)| Complex64::cis(-dk[n] * s) * a)
                    .sum()
            }),
        }
    }

    /// Squared residual norm.
    pub fn rss(&self, g: &CVec, amplitudes: &[Complex64], elevations: &[f64]) -> f64 {
        (self.predict(amplitudes, elevations) - g).norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedScatterer {
    pub amplitude: Complex64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedScatterers {
    pub scatterers: Vec<RefinedScatterer>,
    pub residual: f64,
    pub initial_residual: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl RefinedScatterers {
    pub fn elevations(&self) -> Vec<f64> {
        self.scatterers.iter().map(|s| s.elevation).collect()
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.scatterers.iter().map(|s| s.amplitude).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffgridOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for OffgridOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 500, fd_step: 1e-7 }
    }
}

/// Packs scatterers into `(re, im, s / scale)` triples.
struct Packing {
    scale: f64,
    lower: f64,
    upper: f64,
}

impl Packing {
    fn unpack(&self, v: &RVec) -> (Vec<Complex64>, Vec<f64>) {
        let k = v.len() / 3;
        let amps = (0..k).map(|i| Complex64::new(v[3 * i], v[3 * i + 1])).collect();
        let elev = (0..k).map(|i| v[3 * i + 2] * self.scale).collect();
        (amps, elev)
    }

    fn project(&self, v: &mut RVec) {
        let k = v.len() / 3;
        for i in 0..k {
            v[3 * i + 2] = v[3 * i + 2].clamp(self.lower / self.scale, self.upper / self.scale);
        }
    }
}

/// Central-difference gradient of `f` with per-coordinate step `step · max(|v_i|, 1)`.
pub fn central_gradient<F: Fn(&RVec) -> f64>(f: &F, v: &RVec, step: f64) -> RVec {
    RVec::from_fn(v.len(), |i, _| {
        let h = step * v[i].abs().max(1.0);
        let mut up = v.clone();
        let mut dn = v.clone();
        up[i] += h;
        dn[i] -= h;
        (f(&up) - f(&dn)) / (2.0 * (up[i] - v[i]).max(v[i] - dn[i]))
    })
}

/// Refines the scatterers of `selected` by minimizing the squared residual of
/// `model` over amplitudes and continuous elevations.
///
/// On failure of the optimizer the starting point is returned unchanged. The
/// result is re-gauged so the first amplitude is real and nonnegative.
pub fn refine_offgrid(
    model: &OffgridModel,
    g: &CVec,
    selected: &ReflectivityEstimate,
    grid: &ElevationGrid,
    opts: &OffgridOptions,
) -> Result<RefinedScatterers> {
    if selected.order() == 0 {
        return Err(Error::InvalidArgument("nothing to refine: empty support".into()));
    }
    if g.len() != model.n_obs() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} model rows", g.len(), model.n_obs())));
    }
    if !is_finite_vec(g) {
        return Err(Error::NonFinite("observations"));
    }
    let spacing = grid.spacing();
    let scale = if spacing > 0.0 { spacing } else { 1.0 };
    let pack = Packing { scale, lower: grid.min() - spacing, upper: grid.max() + spacing };
    let k = selected.order();
    let mut x = RVec::zeros(3 * k);
    for i in 0..k {
        x[3 * i] = selected.amplitudes[i].re;
        x[3 * i + 1] = selected.amplitudes[i].im;
        x[3 * i + 2] = selected.elevations[i] / scale;
    }
    pack.project(&mut x);
    let objective = |v: &RVec| {
        let (a, s) = pack.unpack(v);
        model.rss(g, &a, &s)
    };
    let f0 = objective(&x);
    let (x_opt, history, iterations, converged) = projected_bfgs(&objective, &pack, x.clone(), opts);
    let f_opt = *history.last().unwrap_or(&f0);
    let (x_final, f_final, converged) = if f_opt.is_finite() && f_opt <= f0 { (x_opt, f_opt, converged) } else { (x, f0, false) };

    let (mut amps, elevs) = pack.unpack(&x_final);
    if let Some(first) = amps.iter().find(|a| a.norm() > 0.0).copied() {
        let rot = first.conj() / first.norm();
        for a in &mut amps {
            *a *= rot;
        }
    }
    Ok(RefinedScatterers {
        scatterers: amps.into_iter().zip(elevs).map(|(amplitude, elevation)| RefinedScatterer { amplitude, elevation }).collect(),
        residual: f_final,
        initial_residual: f0,
        iterations,
        history,
        converged,
    })
}

fn projected_bfgs<F: Fn(&RVec) -> f64>(f: &F, pack: &Packing, mut x: RVec, opts: &OffgridOptions) -> (RVec, Vec<f64>, usize, bool) {
    let n = x.len();
    let mut fx = f(&x);
    let mut grad = central_gradient(f, &x, opts.fd_step);
    let mut h = RMat::identity(n, n);
    let mut history = vec![fx];
    let stationarity = |x: &RVec, grad: &RVec| {
        let mut probe = x - grad;
        pack.project(&mut probe);
        (probe - x).norm()
    };
    for it in 1..=opts.max_iter {
        if stationarity(&x, &grad) <= opts.tol * (1.0 + fx) {
            return (x, history, it - 1, true);
        }
        let mut dir = -(&h * &grad);
        if grad.dot(&dir) >= 0.0 {
            h = RMat::identity(n, n);
            dir = -grad.clone();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = &x + &dir * t;
            pack.project(&mut trial);
            let ft = f(&trial);
            let decrease = grad.dot(&(&trial - &x));
            if ft.is_finite() && ft <= fx + 1e-4 * decrease && ft <= fx {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if h != RMat::identity(n, n) {
                h = RMat::identity(n, n);
                continue;
            }
            let done = stationarity(&x, &grad) <= 1e-6 * (1.0 + fx);
            return (x, history, it, done);
        };
        let g_new = central_gradient(f, &x_new, opts.fd_step);
        let s = &x_new - &x;
        let y = &g_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = RMat::identity(n, n);
            let left = &eye - (&s * y.transpose()) * rho;
            let right = &eye - (&y * s.transpose()) * rho;
            h = &left * &h * &right + (&s * s.transpose()) * rho;
        }
        let stalled = s.norm() <= 1e-15 * (1.0 + x.norm()) || (fx - f_new) <= 1e-16 * fx.max(f64::MIN_POSITIVE);
        x = x_new;
        fx = f_new;
        grad = g_new;
        history.push(fx);
        if stalled {
            let done = fx <= f64::EPSILON * history[0] || stationarity(&x, &grad) <= 1e-6 * (1.0 + fx);
            return (x, history, it, done);
        }
    }
    (x, history, opts.max_iter, false)
}
