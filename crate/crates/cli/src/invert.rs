use std::path::Path;

use anyhow::{bail, ensure, Result};
use clap::ValueEnum;
use mmtomo::inversion::{invert_look, InversionConfig, LookResult, Method, Operator};
use mmtomo::offgrid::OffgridOptions;
use mmtomo::stack_model::{difference_steering, steering_pair, ElevationGrid};
use rayon::prelude::*;

use crate::stack_file::{csv_bytes, write_atomic, StackFile};

pub const RESULT_HEADER: [&str; 9] = ["look", "order", "s1", "s2", "amp1", "amp2", "residual", "solver", "iterations"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    NlsEnum,
    Bicram,
    L1rls,
}

/// `L,min,max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub len: usize,
    pub min: f64,
    pub max: f64,
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected L,min,max, got '{s}'"));
        }
        let len = parts[0].parse().map_err(|e| format!("grid length: {e}"))?;
        let min = parts[1].parse().map_err(|e| format!("grid min: {e}"))?;
        let max = parts[2].parse().map_err(|e| format!("grid max: {e}"))?;
        Ok(GridSpec { len, min, max })
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<ElevationGrid> {
        ensure!(self.len >= 2, "grid needs at least 2 points, got {}", self.len);
        Ok(ElevationGrid::uniform(self.len, self.min, self.max)?)
    }
}

pub struct InvertArgs<'a> {
    pub stack: &'a Path,
    pub method: MethodArg,
    pub grid: GridSpec,
    pub path_samples: usize,
    pub max_order: usize,
    pub offgrid: bool,
    pub out: &'a Path,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn result_row(id: u64, outcome: &Result<LookResult, String>, tag: &str) -> Vec<String> {
    match outcome {
        Ok(r) => {
            let get = |i: usize, f: &dyn Fn(usize) -> f64| if i < r.scatterers.len() { fmt(f(i)) } else { String::new() };
            vec![
                id.to_string(),
                r.order().to_string(),
                get(0, &|i| r.scatterers[i].elevation),
                get(1, &|i| r.scatterers[i].elevation),
                get(0, &|i| r.scatterers[i].amplitude.norm()),
                get(1, &|i| r.scatterers[i].amplitude.norm()),
                fmt(r.residual),
                r.solver.to_string(),
                r.iterations.to_string(),
            ]
        }
        Err(_) => {
            let mut row = vec![id.to_string()];
            row.extend(std::iter::repeat_n(String::new(), 6));
            row.push(format!("failed:{tag}"));
            row.push(String::new());
            row
        }
    }
}

/// Returns the number of failed looks.
pub fn run(args: &InvertArgs) -> Result<usize> {
    let stack = StackFile::read(args.stack)?;
    let grid = args.grid.build()?;
    ensure!(args.max_order >= 1, "--max-order must be at least 1");
    let method = match args.method {
        MethodArg::NlsEnum => Method::nls_enum(),
        MethodArg::Bicram => Method::bicram(args.path_samples),
        MethodArg::L1rls => Method::l1rls(args.path_samples),
    };
    if method.is_linear() != stack.mode.is_linear() {
        bail!("method {} cannot invert a {:?} stack", method.tag(), stack.mode);
    }
    let config = InversionConfig { method, max_order: args.max_order, offgrid: args.offgrid.then(OffgridOptions::default) };
    let graph = stack.graph()?;
    let geometry = stack.geometry()?;
    let pair;
    let diff;
    let op = if stack.mode.is_linear() {
        diff = difference_steering(&graph, &geometry, &grid)?;
        Operator::Linear(&diff)
    } else {
        pair = steering_pair(&graph, &geometry, &grid)?;
        Operator::MultiMaster(&pair)
    };

    let mut outcomes: Vec<(u64, Result<LookResult, String>)> = stack
        .looks
        .par_iter()
        .map(|look| (look.id, invert_look(op, &StackFile::observations(look), &config).map_err(|e| e.to_string())))
        .collect();
    outcomes.sort_by_key(|(id, _)| *id);

    let bytes = csv_bytes(|w| {
        w.write_record(RESULT_HEADER)?;
        for (id, outcome) in &outcomes {
            w.write_record(result_row(*id, outcome, method.tag()))?;
        }
        Ok(())
    })?;
    write_atomic(args.out, &bytes)?;

    let mut counts = std::collections::BTreeMap::new();
    let mut failures = 0;
    for (id, outcome) in &outcomes {
        match outcome {
            Ok(r) => *counts.entry(r.order()).or_insert(0usize) += 1,
            Err(e) => {
                failures += 1;
                eprintln!("look {id}: {e}");
            }
        }
    }
    let summary: Vec<String> = counts.iter().map(|(o, c)| format!("order {o}: {c}")).collect();
    println!("{} looks inverted with {}; {}; {} failed; results in {}", outcomes.len(), method.tag(), summary.join(", "), failures, args.out.display());
    Ok(failures)
}
