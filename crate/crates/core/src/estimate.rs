//! Result types shared by every solver.

use num_complex::Complex64;

use crate::linalg::CVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
    Stagnated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub objective_history: Vec<f64>,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

impl SolverReport {
    pub fn new() -> Self {
        Self {
            objective_history: Vec::new(),
            primal_residuals: Vec::new(),
            dual_residuals: Vec::new(),
            iterations: 0,
            termination: Termination::MaxIter,
        }
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_history.last().copied()
    }
}

impl Default for SolverReport {
    fn default() -> Self {
        Self::new()
    }
}

/// Sparse reflectivity profile on an elevation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectivityEstimate {
    /// Grid indices of the nonzero entries, ascending.
    pub support: Vec<usize>,
    /// Complex amplitude of each support entry.
    pub amplitudes: Vec<Complex64>,
    /// Elevation of each support entry; equal to grid positions until refined.
    pub elevations: Vec<f64>,
    pub grid_len: usize,
    /// Squared residual norm of the fit.
    pub rss: f64,
    /// True once the first amplitude has been rotated to a nonnegative real.
    pub phase_gauged: bool,
}

impl ReflectivityEstimate {
    pub fn empty(grid_len: usize, rss: f64) -> Self {
        Self {
            support: Vec::new(),
            amplitudes: Vec::new(),
            elevations: Vec::new(),
            grid_len,
            rss,
            phase_gauged: true,
        }
    }

    pub fn order(&self) -> usize {
        self.support.len()
    }

    /// Full-length reflectivity vector.
    pub fn dense(&self) -> CVec {
        let mut v = CVec::zeros(self.grid_len);
        for (&i, &a) in self.support.iter().zip(&self.amplitudes) {
            v[i] = a;
        }
        v
    }

    /// Rotates every amplitude so the first one is real and nonnegative.
    pub fn gauge(&mut self) {
        if let Some(first) = self.amplitudes.iter().find(|a| a.norm() > 0.0).copied() {
            let rot = first.conj() / first.norm();
            for a in &mut self.amplitudes {
                *a *= rot;
            }
        }
        self.phase_gauged = true;
    }
}
