use std::path::Path;

use anyhow::{ensure, Context, Result};
use mmtomo::l1rls::{benchmark_variants, default_benchmark_lambda};
use mmtomo::stack_model::difference_steering;

use crate::invert::GridSpec;
use crate::stack_file::{csv_bytes, write_atomic, StackFile};

pub struct BenchmarkArgs<'a> {
    pub stack: &'a Path,
    pub look: u64,
    pub grid: GridSpec,
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub out: &'a Path,
    pub trace: &'a Path,
}

pub fn run(args: &BenchmarkArgs) -> Result<()> {
    let stack = StackFile::read(args.stack)?;
    ensure!(stack.mode.is_linear(), "benchmark needs a single-master stack, got {:?}", stack.mode);
    let look = stack.find_look(args.look).with_context(|| format!("no look with id {}", args.look))?;
    let g = StackFile::observations(look);
    let steering = difference_steering(&stack.graph()?, &stack.geometry()?, &args.grid.build()?)?;
    let lambda = args.lambda.unwrap_or_else(|| default_benchmark_lambda(&steering.a, &g));
    ensure!(lambda > 0.0, "regularization weight must be positive (is the look all zeros?)");
    let rows = benchmark_variants(&steering.a, &g, lambda, args.tol, args.max_iter);

    let summary = csv_bytes(|w| {
        w.write_record(["variant", "iterations", "objective", "failed"])?;
        for r in &rows {
            w.write_record([r.variant.to_string(), r.iterations.to_string(), format!("{}", r.objective), r.failed.to_string()])?;
        }
        Ok(())
    })?;
    let trace = csv_bytes(|w| {
        w.write_record(["variant", "iteration", "objective"])?;
        for r in &rows {
            for (i, obj) in r.trace.iter().enumerate().skip(1) {
                w.write_record([r.variant.to_string(), i.to_string(), format!("{obj}")])?;
            }
        }
        Ok(())
    })?;
    write_atomic(args.out, &summary)?;
    write_atomic(args.trace, &trace)?;

    println!("look {} with lambda {lambda:.6e}", args.look);
    for r in &rows {
        println!("{:>20} {:>8} {:.12e}{}", r.variant, r.iterations, r.objective, if r.failed { " (not converged)" } else { "" });
    }
    Ok(())
}
