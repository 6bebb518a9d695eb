use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mmtomo::simulator::summarize;
use serde::Deserialize;

use crate::stack_file::{csv_bytes, write_atomic, TruthFile};

#[derive(Debug, Deserialize)]
struct ResultRecord {
    look: u64,
    order: Option<usize>,
    s1: Option<f64>,
    s2: Option<f64>,
    solver: String,
}

/// Height errors of the looks whose reported order equals the true scatterer
/// count, grouped by solver. Estimates and truth are paired in ascending
/// elevation order.
pub fn collect_errors(results: &Path, truth: &TruthFile) -> Result<BTreeMap<String, Vec<f64>>> {
    let truth_by_id: HashMap<u64, &Vec<f64>> = truth.looks.iter().map(|l| (l.id, &l.elevations)).collect();
    let mut reader = csv::Reader::from_path(results).with_context(|| format!("reading {}", results.display()))?;
    let mut errors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in reader.deserialize() {
        let row: ResultRecord = record.with_context(|| format!("parsing {}", results.display()))?;
        let Some(elevations) = truth_by_id.get(&row.look) else {
            bail!("look {} is not in the truth file", row.look);
        };
        let Some(order) = row.order else { continue };
        let entry = errors.entry(row.solver.clone()).or_default();
        if order == 0 || order != elevations.len() || order > 2 {
            continue;
        }
        let mut estimates: Vec<f64> = [row.s1, row.s2].into_iter().flatten().collect();
        if estimates.len() != order {
            bail!("look {} reports order {order} with {} elevations", row.look, estimates.len());
        }
        estimates.sort_by(f64::total_cmp);
        entry.extend(estimates.iter().zip(elevations.iter()).map(|(e, t)| e - t));
    }
    Ok(errors)
}

pub fn run(results: &Path, truth_path: &Path, out: &Path) -> Result<()> {
    let truth = TruthFile::read(truth_path)?;
    let errors = collect_errors(results, &truth)?;
    let mut rows = Vec::new();
    for (solver, e) in &errors {
        if e.is_empty() {
            println!("{solver}: no looks with the true scatterer count");
            continue;
        }
        let s = summarize(e)?;
        println!("{solver}: n={} mean={:.4} sd={:.4} mad={:.4}", s.count, s.mean, s.sd, s.mad);
        rows.push((solver.clone(), s));
    }
    let bytes = csv_bytes(|w| {
        w.write_record(["solver", "count", "min", "max", "mean", "median", "sd", "mad"])?;
        for (solver, s) in &rows {
            w.write_record([
                solver.clone(),
                s.count.to_string(),
                format!("{}", s.min),
                format!("{}", s.max),
                format!("{}", s.mean),
                format!("{}", s.median),
                format!("{}", s.sd),
                format!("{}", s.mad),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(out, &bytes)
}
