//! Acquisition graphs, elevation grids, steering operators and forward models.
//!
//! A stack of `N` SLC acquisitions is paired into `N'` interferograms. Each
//! interferogram `n` is the product `g_slave(n) * conj(g_master(n))`, so the
//! multi-master data model is bilinear in the reflectivity:
//!
//! ```text
//! g = (R γ) ∘ conj(S γ),   r[n,l] = exp(-j k_slave(n) s_l),  s[n,l] = exp(-j k_master(n) s_l)
//! ```
//!
//! Single-master stacks (and multi-master stacks treated as if they were
//! single-master) use the linear model `g = A γ` with
//! `a[n,l] = exp(-j (k_slave(n) - k_master(n)) s_l)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hadamard_conj, CMat, CVec};

/// One interferometric pair. Indices are zero-based acquisition indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub master: usize,
    pub slave: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairingScheme {
    /// Every other acquisition is paired with the given master.
    SingleMaster(usize),
    /// `(0,1), (2,3), ...` on the chronologically ordered acquisitions.
    SequentialPairs,
    /// `(master, slave)` pairs.
    Explicit(Vec<(usize, usize)>),
}

/// Directed acyclic pairing graph: vertices are acquisitions, edges are
/// interferograms from master to slave.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcquisitionGraph {
    n_acq: usize,
    edges: Vec<Edge>,
}

impl AcquisitionGraph {
    pub fn new(n_acq: usize, edges: Vec<Edge>) -> Result<Self> {
        if n_acq < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 acquisitions, got {n_acq}")));
        }
        if edges.is_empty() {
            return Err(Error::InvalidGraph("no edges".into()));
        }
        let mut adj = vec![vec![false; n_acq]; n_acq];
        for e in &edges {
            if e.master >= n_acq || e.slave >= n_acq {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a vertex outside 0..{n_acq}",
                    e.master, e.slave
                )));
            }
            if e.master == e.slave {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {}", e.master)));
            }
            if adj[e.master][e.slave] {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.master, e.slave)));
            }
            adj[e.master][e.slave] = true;
        }
        let mut incident = vec![false; n_acq];
        for e in &edges {
            incident[e.master] = true;
            incident[e.slave] = true;
        }
        if let Some(v) = incident.iter().position(|&x| !x) {
            return Err(Error::InvalidGraph(format!("vertex {v} is not incident to any edge")));
        }
        if has_cycle(&adj) {
            return Err(Error::InvalidGraph("graph contains a directed cycle".into()));
        }
        Ok(Self { n_acq, edges })
    }

    pub fn n_acq(&self) -> usize {
        self.n_acq
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn master_map(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.master).collect()
    }

    pub fn slave_map(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.slave).collect()
    }

    /// Binary adjacency matrix, `a[m][n] = 1` iff `(m, n)` is an edge.
    pub fn adjacency(&self) -> DMatrix<u8> {
        let mut a = DMatrix::zeros(self.n_acq, self.n_acq);
        for e in &self.edges {
            a[(e.master, e.slave)] = 1;
        }
        a
    }

    /// The master index if the graph is single-master: one row of the
    /// adjacency matrix is all ones off the diagonal and every other row is zero.
    pub fn single_master(&self) -> Option<usize> {
        let a = self.adjacency();
        let n = self.n_acq;
        (0..n).find(|&i| {
            (0..n).all(|c| c == i || a[(i, c)] == 1)
                && (0..n).filter(|&r| r != i).all(|r| a.row(r).iter().all(|&x| x == 0))
        })
    }

    pub fn is_single_master(&self) -> bool {
        self.single_master().is_some()
    }

    pub fn is_multi_master(&self) -> bool {
        !self.is_single_master()
    }
}

fn has_cycle(adj: &[Vec<bool>]) -> bool {
    // Kahn's algorithm: a DAG can be fully peeled by in-degree.
    let n = adj.len();
    let mut indeg = vec![0usize; n];
    for row in adj {
        for (c, &x) in row.iter().enumerate() {
            if x {
                indeg[c] += 1;
            }
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut removed = 0;
    while let Some(v) = stack.pop() {
        removed += 1;
        for (c, &x) in adj[v].iter().enumerate() {
            if x {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    stack.push(c);
                }
            }
        }
    }
    removed != n
}

pub fn build_pairing_graph(n_acq: usize, scheme: &PairingScheme) -> Result<AcquisitionGraph> {
    if n_acq < 2 {
        return Err(Error::InvalidGraph(format!("need at least 2 acquisitions, got {n_acq}")));
    }
    let edges = match scheme {
        PairingScheme::SingleMaster(i) => {
            if *i >= n_acq {
                return Err(Error::InvalidGraph(format!("master index {i} out of range 0..{n_acq}")));
            }
            (0..n_acq).filter(|n| n != i).map(|n| Edge { master: *i, slave: n }).collect()
        }
        PairingScheme::SequentialPairs => {
            if n_acq % 2 != 0 {
                return Err(Error::InvalidGraph(format!(
                    "sequential pairing needs an even number of acquisitions, got {n_acq}"
                )));
            }
            (0..n_acq / 2).map(|p| Edge { master: 2 * p, slave: 2 * p + 1 }).collect()
        }
        PairingScheme::Explicit(list) => list.iter().map(|&(m, s)| Edge { master: m, slave: s }).collect(),
    };
    AcquisitionGraph::new(n_acq, edges)
}

/// Per-acquisition wavenumbers (1/m) and timestamps (days).
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub wavenumbers: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub wavelength: Option<f64>,
    pub reference_range: Option<f64>,
}

impl Geometry {
    pub fn new(wavenumbers: Vec<f64>, timestamps: Vec<f64>) -> Result<Self> {
        if wavenumbers.len() != timestamps.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} wavenumbers vs {} timestamps",
                wavenumbers.len(),
                timestamps.len()
            )));
        }
        if wavenumbers.iter().chain(timestamps.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("geometry"));
        }
        Ok(Self { wavenumbers, timestamps, wavelength: None, reference_range: None })
    }

    /// Builds a geometry from perpendicular baselines `b_n` via `k_n = -4π b_n / (λ r0)`.
    pub fn from_baselines(baselines: &[f64], timestamps: Vec<f64>, wavelength: f64, reference_range: f64) -> Result<Self> {
        let k = baselines.iter().map(|&b| wavenumber_from_baseline(b, wavelength, reference_range)).collect();
        let mut g = Self::new(k, timestamps)?;
        g.wavelength = Some(wavelength);
        g.reference_range = Some(reference_range);
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavenumbers.is_empty()
    }

    /// `2π / (k_max - k_min)`; infinite when all wavenumbers coincide.
    pub fn rayleigh_resolution(&self) -> f64 {
        let (lo, hi) = self
            .wavenumbers
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| (lo.min(k), hi.max(k)));
        2.0 * PI / (hi - lo)
    }
}

pub fn wavenumber_from_baseline(baseline: f64, wavelength: f64, reference_range: f64) -> f64 {
    -4.0 * PI * baseline / (wavelength * reference_range)
}

/// Regular discretisation of the elevation axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ElevationGrid {
    positions: Vec<f64>,
}

impl ElevationGrid {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("grid positions"));
        }
        if positions.len() > 1 {
            let h = positions[1] - positions[0];
            if h <= 0.0 {
                return Err(Error::InvalidGrid("positions must be strictly increasing".into()));
            }
            let scale = positions.iter().fold(h, |m, x| m.max(x.abs()));
            for w in positions.windows(2) {
                let d = w[1] - w[0];
                if d <= 0.0 {
                    return Err(Error::InvalidGrid("positions must be strictly increasing".into()));
                }
                if (d - h).abs() > 1e-12 * scale {
                    return Err(Error::InvalidGrid("grid spacing is not uniform".into()));
                }
            }
        }
        Ok(Self { positions })
    }

    /// `len` points from `min` to `max` inclusive.
    pub fn uniform(len: usize, min: f64, max: f64) -> Result<Self> {
        match len {
            0 => Err(Error::InvalidGrid("empty grid".into())),
            1 => Self::new(vec![min]),
            _ => {
                if max <= min {
                    return Err(Error::InvalidGrid(format!("max {max} must exceed min {min}")));
                }
                let h = (max - min) / (len - 1) as f64;
                Self::new((0..len).map(|i| min + h * i as f64).collect())
            }
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Grid spacing; zero for a single-point grid.
    pub fn spacing(&self) -> f64 {
        if self.positions.len() < 2 {
            0.0
        } else {
            (self.positions[self.positions.len() - 1] - self.positions[0]) / (self.positions.len() - 1) as f64
        }
    }

    pub fn min(&self) -> f64 {
        self.positions[0]
    }

    pub fn max(&self) -> f64 {
        self.positions[self.positions.len() - 1]
    }
}

/// Slave and master steering matrices of a multi-master stack on a grid.
#[derive(Debug, Clone)]
pub struct SteeringPair {
    pub r: CMat,
    pub s: CMat,
    pub master_map: Vec<usize>,
    pub slave_map: Vec<usize>,
    pub k_master: Vec<f64>,
    pub k_slave: Vec<f64>,
    pub grid: ElevationGrid,
}

impl SteeringPair {
    pub fn n_obs(&self) -> usize {
        self.r.nrows()
    }

    pub fn n_grid(&self) -> usize {
        self.r.ncols()
    }

    /// `r_l ∘ conj(s_l)` for grid column `l`.
    pub fn power_column(&self, l: usize) -> CVec {
        hadamard_conj(&self.r.column(l).into_owned(), &self.s.column(l).into_owned())
    }

    /// The matrix `R ∘ conj(S)`.
    pub fn power_matrix(&self) -> CMat {
        self.r.zip_map(&self.s, |a, b| a * b.conj())
    }
}

pub fn steering_pair(graph: &AcquisitionGraph, geom: &Geometry, grid: &ElevationGrid) -> Result<SteeringPair> {
    if geom.len() != graph.n_acq() {
        return Err(Error::DimensionMismatch(format!(
            "geometry has {} acquisitions, graph has {}",
            geom.len(),
            graph.n_acq()
        )));
    }
    let master_map = graph.master_map();
    let slave_map = graph.slave_map();
    let k_master: Vec<f64> = master_map.iter().map(|&i| geom.wavenumbers[i]).collect();
    let k_slave: Vec<f64> = slave_map.iter().map(|&i| geom.wavenumbers[i]).collect();
    let pos = grid.positions();
    let r = CMat::from_fn(k_slave.len(), pos.len(), |n, l| Complex64::cis(-k_slave[n] * pos[l]));
    let s = CMat::from_fn(k_master.len(), pos.len(), |n, l| Complex64::cis(-k_master[n] * pos[l]));
    Ok(SteeringPair { r, s, master_map, slave_map, k_master, k_slave, grid: grid.clone() })
}

/// Bilinear multi-master forward model `(R γ) ∘ conj(S γ)`.
pub fn forward(pair: &SteeringPair, gamma: &CVec) -> Result<CVec> {
    if gamma.len() != pair.n_grid() {
        return Err(Error::DimensionMismatch(format!(
            "gamma has length {}, grid has {} points",
            gamma.len(),
            pair.n_grid()
        )));
    }
    Ok(hadamard_conj(&(&pair.r * gamma), &(&pair.s * gamma)))
}

/// Linear single-master forward model `A γ`.
pub fn forward_single_master(a: &CMat, gamma: &CVec) -> Result<CVec> {
    if gamma.len() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "gamma has length {}, matrix has {} columns",
            gamma.len(),
            a.ncols()
        )));
    }
    Ok(a * gamma)
}

/// Linear steering matrix on wavenumber differences `k_slave - k_master`.
///
/// For a single-master graph this is the usual wavenumber-baseline model. For
/// a multi-master graph it is the "fake single-master" approximation, which
/// ignores the scatterer cross-terms of the bilinear model.
#[derive(Debug, Clone)]
pub struct DifferenceSteering {
    pub a: CMat,
    pub dk: Vec<f64>,
    pub grid: ElevationGrid,
}

impl DifferenceSteering {
    pub fn n_obs(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_grid(&self) -> usize {
        self.a.ncols()
    }
}

pub fn difference_steering(graph: &AcquisitionGraph, geom: &Geometry, grid: &ElevationGrid) -> Result<DifferenceSteering> {
    if geom.len() != graph.n_acq() {
        return Err(Error::DimensionMismatch(format!(
            "geometry has {} acquisitions, graph has {}",
            geom.len(),
            graph.n_acq()
        )));
    }
    let dk: Vec<f64> = graph
        .edges()
        .iter()
        .map(|e| geom.wavenumbers[e.slave] - geom.wavenumbers[e.master])
        .collect();
    let pos = grid.positions();
    let a = CMat::from_fn(dk.len(), pos.len(), |n, l| Complex64::cis(-dk[n] * pos[l]));
    Ok(DifferenceSteering { a, dk, grid: grid.clone() })
}

/// Interferometric observations of one look together with their acquisition geometry.
#[derive(Debug, Clone)]
pub struct MultiMasterStack {
    pub g: CVec,
    pub graph: AcquisitionGraph,
    pub geometry: Geometry,
}

impl MultiMasterStack {
    pub fn new(g: CVec, graph: AcquisitionGraph, geometry: Geometry) -> Result<Self> {
        if g.len() != graph.n_edges() {
            return Err(Error::DimensionMismatch(format!(
                "{} observations for {} edges",
                g.len(),
                graph.n_edges()
            )));
        }
        if geometry.len() != graph.n_acq() {
            return Err(Error::DimensionMismatch(format!(
                "geometry has {} acquisitions, graph has {}",
                geometry.len(),
                graph.n_acq()
            )));
        }
        Ok(Self { g, graph, geometry })
    }
}
