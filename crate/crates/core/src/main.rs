use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dnapl_core::benchmark::run_buckley_leverett;
use dnapl_core::io::{parse_scenario, read_snapshot, write_snapshot, write_timeseries};
use dnapl_core::simulation::{run_with, SimulationState};
use dnapl_core::{Error, Model, Scenario};

/// DNAPL infiltration simulator.
#[derive(Debug, Parser)]
#[command(name = "dnapl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write the time series (and optional snapshots).
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write a VTK snapshot at every report time.
        #[arg(long)]
        snapshots: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a scenario and print the threshold saturation of each material pair.
    Validate { scenario: PathBuf },
    /// Built-in verification problems.
    Benchmark {
        #[command(subcommand)]
        which: Benchmark,
    },
    /// Print field values of a snapshot at a point.
    Probe {
        snapshot: PathBuf,
        /// Point as x,y,z (or x,z for sections, z for columns).
        #[arg(long, value_delimiter = ',', num_args = 1..=3, allow_hyphen_values = true)]
        at: Vec<f64>,
    },
}

#[derive(Debug, Subcommand)]
enum Benchmark {
    /// 1D waterflood against the Welge construction.
    BuckleyLeverett {
        #[arg(long, default_value_t = 400)]
        cells: usize,
    },
}

/// Exit status: 1 for invalid input, 2 for failures while running.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Grid(_) | Error::Material { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            snapshots,
            threads,
        } => with_threads(threads, || cmd_run(&scenario, &out, snapshots)),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Benchmark {
            which: Benchmark::BuckleyLeverett { cells },
        } => cmd_benchmark(cells),
        Command::Probe { snapshot, at } => cmd_probe(&snapshot, &at),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn with_threads(threads: Option<usize>, f: impl FnOnce() -> Result<(), Error> + Send) -> Result<(), Error> {
    match threads {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<thread pool>"),
                    source: std::io::Error::other(e),
                })?;
            pool.install(f)
        }
    }
}

fn snapshot_path(out: &Path, index: usize) -> PathBuf {
    out.join(format!("snapshot_{index:04}.vtk"))
}

fn cmd_run(path: &Path, out: &Path, snapshots: bool) -> Result<(), Error> {
    let scenario = parse_scenario(path)?;
    let model = Model::from_scenario(&scenario)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let snapshots = snapshots || scenario.output.snapshots;
    let ascii = scenario.output.ascii;
    let write = |index: usize, state: &SimulationState| {
        write_snapshot(
            snapshot_path(out, index),
            &model.grid,
            &model.map,
            &state.s_n,
            &state.p_w,
            ascii,
            &format!("{} t={}", scenario.name, state.time),
        )
    };
    if snapshots {
        write(0, &SimulationState::initial(&model, scenario.initial.non_wetting_saturation))?;
    }
    let mut index = 0;
    let result = run_with(&scenario, |sample, state| {
        index += 1;
        println!(
            "t = {:>12.1} s  total {:.6e} kg  pool {:.6e}  ganglia {:.6e}  front {:.3} m  max s_n {:.4}",
            sample.time(),
            sample.partition.total_mass,
            sample.partition.pool_mass,
            sample.partition.ganglia_mass,
            sample.metrics.front_depth,
            sample.metrics.max_sn
        );
        if snapshots {
            write(index, state)?;
        }
        Ok(())
    })?;
    let csv = out.join("timeseries.csv");
    write_timeseries(&result.samples, &csv)?;
    println!(
        "{} steps, {} pressure solves, {:.2} s wall; clamp ledger {:.3e} kg, boundary outflow {:.3e} kg",
        result.steps,
        result.pressure_solves,
        result.wall_time.as_secs_f64(),
        result.clamped_mass,
        result.boundary_outflow
    );
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Error> {
    let scenario: Scenario = parse_scenario(path)?;
    let model = Model::from_scenario(&scenario)?;
    let dims = model.grid.dims();
    println!(
        "{}: valid ({}D, {} cells, {} materials, {} hydrostatic faces, {} inlets)",
        path.display(),
        model.grid.ndim(),
        dims.iter().product::<usize>(),
        model.materials.len(),
        model.boundary.len(),
        model.sources.len()
    );
    let adjacent = model.adjacent_pairs();
    let n = model.materials.len();
    for a in 0..n {
        for b in a + 1..n {
            let rule = model.rules.get(dnapl_core::grid::MaterialId(a), dnapl_core::grid::MaterialId(b));
            let (coarse, fine) = (&model.material_names[rule.coarse.0], &model.material_names[rule.fine.0]);
            let touching = adjacent.contains(&(dnapl_core::grid::MaterialId(a), dnapl_core::grid::MaterialId(b)));
            println!(
                "  {coarse} -> {fine}: Se* = {:.10e}{}",
                rule.se_star,
                if touching { "" } else { "  (not adjacent in layout)" }
            );
        }
    }
    Ok(())
}

fn cmd_benchmark(cells: usize) -> Result<(), Error> {
    if cells < 2 {
        return Err(Error::Grid("benchmark needs at least 2 cells".into()));
    }
    let r = run_buckley_leverett(cells)?;
    println!("Buckley-Leverett waterflood, {} cells, {} pore volumes injected", r.cells, r.pore_volumes);
    println!("  shock effective saturation (Welge): {:.6}", r.shock_saturation);
    println!("  front position: numerical {:.5} m, analytical {:.5} m", r.front_numerical, r.front_analytical);
    println!(
        "  front error: {:.3e} m ({:.2}%)",
        (r.front_numerical - r.front_analytical).abs(),
        100.0 * (r.front_numerical - r.front_analytical).abs() / r.front_analytical
    );
    println!("  L1 saturation error: {:.4e} of the mobile range", r.l1_error);
    println!("  {} steps, {:.2} s", r.steps, r.wall_time.as_secs_f64());
    Ok(())
}

fn cmd_probe(path: &Path, at: &[f64]) -> Result<(), Error> {
    let snap = read_snapshot(path)?;
    let mid = |a: usize| snap.origin[a] + 0.5 * snap.spacing[a] * snap.cells[a] as f64;
    let point = match at {
        [z] => [mid(0), mid(1), *z],
        [x, z] => [*x, mid(1), *z],
        [x, y, z] => [*x, *y, *z],
        _ => return Err(Error::Validation(vec![dnapl_core::ValidationIssue::new("--at", "expected 1 to 3 coordinates")])),
    };
    let cell = snap.locate(point).ok_or_else(|| {
        Error::Validation(vec![dnapl_core::ValidationIssue::new(
            "--at",
            format!("point {point:?} lies outside the snapshot"),
        )])
    })?;
    let c = snap.cell_center(cell);
    println!("cell {cell} centered at ({}, {}, {})", c[0], c[1], c[2]);
    println!("s_n = {}", snap.s_n[cell]);
    println!("p_w = {} Pa", snap.p_w[cell]);
    println!("material_id = {}", snap.material_id[cell]);
    Ok(())
}
