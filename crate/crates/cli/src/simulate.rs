use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use mmtomo::simulator::{gen_geometry, simulate_stack, Scatterer, Scene, WavenumberSpacing};
use mmtomo::stack_model::{build_pairing_graph, Geometry, PairingScheme};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::stack_file::{write_json, Mode, StackFile, TruthFile, TruthLook};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingConfig {
    Uniform,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingConfig {
    /// 1-based master index.
    SingleMaster { master: usize },
    SequentialPairs,
    /// `[master, slave]` pairs, 1-based.
    Explicit { edges: Vec<[usize; 2]> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScattererConfig {
    /// Elevation (m).
    pub s: f64,
    /// Reflectivity `[re, im]`.
    pub amplitude: [f64; 2],
    /// Deformation rate (m/day).
    #[serde(default)]
    pub v: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub n_acq: usize,
    pub k_max: f64,
    pub spacing: SpacingConfig,
    #[serde(default = "default_t_spacing")]
    pub t_spacing: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    pub pairing: PairingConfig,
    pub mode: Mode,
    pub looks: usize,
    /// Omitted for noiseless data.
    #[serde(default)]
    pub snr_db: Option<f64>,
    pub scatterers: Vec<ScattererConfig>,
    /// Per-look uniform elevation offset `[min, max]` applied to all scatterers.
    #[serde(default)]
    pub shift: Option<[f64; 2]>,
}

fn default_t_spacing() -> f64 {
    11.0
}

fn default_wavelength() -> f64 {
    0.031
}

pub struct Simulated {
    pub stack: StackFile,
    pub truth: TruthFile,
}

pub fn simulate(config: &SimulationConfig) -> Result<Simulated> {
    ensure!(config.looks >= 1, "need at least one look");
    let spacing = match config.spacing {
        SpacingConfig::Uniform => WavenumberSpacing::Uniform,
        SpacingConfig::Random { seed } => WavenumberSpacing::Random(seed),
    };
    let geometry: Geometry = gen_geometry(config.n_acq, config.k_max, spacing, config.t_spacing)?;
    let scheme = match &config.pairing {
        PairingConfig::SingleMaster { master } => {
            ensure!(*master >= 1, "master index is 1-based");
            PairingScheme::SingleMaster(master - 1)
        }
        PairingConfig::SequentialPairs => PairingScheme::SequentialPairs,
        PairingConfig::Explicit { edges } => {
            ensure!(edges.iter().flatten().all(|&i| i >= 1), "edge indices are 1-based");
            PairingScheme::Explicit(edges.iter().map(|&[m, n]| (m - 1, n - 1)).collect())
        }
    };
    let graph = build_pairing_graph(config.n_acq, &scheme)?;
    if config.mode == Mode::SingleMaster {
        ensure!(graph.is_single_master(), "single_master mode needs a single-master pairing");
    }

    let mut shift_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
    let mut looks = Vec::with_capacity(config.looks);
    let mut truth = Vec::with_capacity(config.looks);
    for i in 0..config.looks {
        let id = i as u64 + 1;
        let offset = match config.shift {
            Some([lo, hi]) if hi > lo => shift_rng.random_range(lo..hi),
            Some([lo, _]) => lo,
            None => 0.0,
        };
        let scatterers: Vec<Scatterer> = config
            .scatterers
            .iter()
            .map(|sc| Scatterer {
                elevation: sc.s + offset,
                reflectivity: Complex64::new(sc.amplitude[0], sc.amplitude[1]),
                velocity: sc.v,
            })
            .collect();
        let scene = Scene::new(scatterers.clone(), config.snr_db.unwrap_or(f64::INFINITY))?;
        let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(id);
        let stack = simulate_stack(&scene, &graph, &geometry, config.wavelength, seed)?;
        looks.push((id, stack.g));
        let mut sorted = scatterers;
        sorted.sort_by(|a, b| a.elevation.total_cmp(&b.elevation));
        truth.push(TruthLook {
            id,
            elevations: sorted.iter().map(|s| s.elevation).collect(),
            amplitudes: sorted.iter().map(|s| [s.reflectivity.re, s.reflectivity.im]).collect(),
        });
    }
    Ok(Simulated {
        stack: StackFile::build(config.mode, &geometry, &graph, looks),
        truth: TruthFile { rayleigh: geometry.rayleigh_resolution(), looks: truth },
    })
}

/// Default truth sidecar path: `<stack>.truth.json` next to the stack.
pub fn truth_path(stack: &Path) -> PathBuf {
    let mut name = stack.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".truth.json");
    stack.with_file_name(name)
}

pub fn run(config_path: &Path, out: &Path, truth_out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let config: SimulationConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", config_path.display()))?;
    let sim = simulate(&config)?;
    let truth_file = truth_out.map(Path::to_path_buf).unwrap_or_else(|| truth_path(out));
    write_json(out, &sim.stack)?;
    write_json(&truth_file, &sim.truth)?;
    println!(
        "wrote {} looks of {} observations ({:?}) to {}; truth in {}",
        sim.stack.looks.len(),
        sim.stack.edges.len(),
        config.mode,
        out.display(),
        truth_file.display()
    );
    Ok(())
}
