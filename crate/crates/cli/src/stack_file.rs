//! JSON stack and truth files.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use mmtomo::linalg::CVec;
use mmtomo::stack_model::{AcquisitionGraph, Edge, Geometry};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SingleMaster,
    MultiMaster,
    FakeSingleMaster,
}

impl Mode {
    pub fn is_linear(self) -> bool {
        matches!(self, Mode::SingleMaster | Mode::FakeSingleMaster)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    /// Wavenumber (1/m).
    pub k: f64,
    /// Time (days).
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Look {
    pub id: u64,
    pub observations: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackFile {
    pub mode: Mode,
    pub acquisitions: Vec<Acquisition>,
    /// `[master, slave]`, 1-based.
    pub edges: Vec<[usize; 2]>,
    pub looks: Vec<Look>,
}

impl StackFile {
    pub fn build(mode: Mode, geometry: &Geometry, graph: &AcquisitionGraph, looks: Vec<(u64, CVec)>) -> Self {
        Self {
            mode,
            acquisitions: geometry.wavenumbers.iter().zip(&geometry.timestamps).map(|(&k, &t)| Acquisition { k, t }).collect(),
            edges: graph.edges().iter().map(|e| [e.master + 1, e.slave + 1]).collect(),
            looks: looks.into_iter().map(|(id, g)| Look { id, observations: g.iter().map(|z| [z.re, z.im]).collect() }).collect(),
        }
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Ok(Geometry::new(self.acquisitions.iter().map(|a| a.k).collect(), self.acquisitions.iter().map(|a| a.t).collect())?)
    }

    pub fn graph(&self) -> Result<AcquisitionGraph> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for &[m, n] in &self.edges {
            ensure!(m >= 1 && n >= 1, "edge indices are 1-based, got [{m}, {n}]");
            edges.push(Edge { master: m - 1, slave: n - 1 });
        }
        Ok(AcquisitionGraph::new(self.acquisitions.len(), edges)?)
    }

    pub fn observations(look: &Look) -> CVec {
        CVec::from_iterator(look.observations.len(), look.observations.iter().map(|&[re, im]| Complex64::new(re, im)))
    }

    pub fn find_look(&self, id: u64) -> Option<&Look> {
        self.looks.iter().find(|l| l.id == id)
    }

    /// Checks the mode against the pairing graph and the observation counts.
    pub fn validate(&self) -> Result<()> {
        let graph = self.graph()?;
        self.geometry()?;
        if self.mode == Mode::SingleMaster {
            ensure!(graph.is_single_master(), "single_master mode needs a graph with one common master");
            ensure!(graph.n_edges() == graph.n_acq() - 1, "single_master mode needs n_acq - 1 = {} edges, got {}", graph.n_acq() - 1, graph.n_edges());
        }
        let mut ids = std::collections::HashSet::new();
        for look in &self.looks {
            ensure!(ids.insert(look.id), "duplicate look id {}", look.id);
            if look.observations.len() != graph.n_edges() {
                bail!("look {} has {} observations for {} edges", look.id, look.observations.len(), graph.n_edges());
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let stack: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        stack.validate().with_context(|| format!("validating {}", path.display()))?;
        Ok(stack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLook {
    pub id: u64,
    /// Elevations (m), ascending.
    pub elevations: Vec<f64>,
    pub amplitudes: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub rayleigh: f64,
    pub looks: Vec<TruthLook>,
}

impl TruthFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Writes to a sibling temporary file and renames it over `path` on success.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp_name = path.file_name().context("output path has no file name")?.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn csv_bytes<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>>(fill: F) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w)?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}
