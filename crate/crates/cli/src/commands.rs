//! Subcommand implementations over the core pipeline.
//!
//! Each command reads its upstream artifacts (hash-checked), computes via
//! the core library, and writes CSV tables plus a manifest. Reruns with the
//! same configuration produce byte-identical artifacts; wall-clock
//! measurements go to separate `timings.json` sidecars that determinism
//! comparisons skip.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use chipdry::fom::{Ambient, FomSystem, SimOptions, SnapshotSet};
use chipdry::gramian::{
    controllability_report, empirical_gramian, reduced_eigenproblem, GramianConfig, RomAdapter,
};
use chipdry::ocp::{ControlSchedule, OcpProblem, OcpResult};
use chipdry::pod::{build_basis, field_error_maps, nrmse, PodBasis};
use chipdry::presets;
use chipdry::rom::{RomSimOptions, RomSystem};

use crate::artifacts::{csv_table, parse_csv, InputDir, OutputDir};
use crate::config::RunConfig;
use crate::error::CliError;

fn build_system(config: &RunConfig) -> Result<FomSystem, CliError> {
    let grid = chipdry::grid::Grid::new(
        config.grid.nx,
        config.grid.ny,
        config.grid.nz,
        config.grid.h,
    )
    .map_err(|e| CliError::config(format!("invalid [grid]: {e}")))?;
    FomSystem::new(grid, config.material_params())
        .map_err(|e| CliError::config(format!("invalid [material]: {e}")))
}

fn initial_state(config: &RunConfig, sys: &FomSystem) -> DVector<f64> {
    sys.grid
        .uniform_state(config.fom.initial_moisture, config.fom.initial_temperature)
}

fn state_header(n_cells: usize) -> Vec<String> {
    let mut header = Vec::with_capacity(2 * n_cells + 1);
    header.push("time".to_string());
    for i in 0..n_cells {
        header.push(format!("m{i}"));
    }
    for i in 0..n_cells {
        header.push(format!("t{i}"));
    }
    header
}

fn mode_header(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|k| format!("{prefix}{k}")).collect()
}

fn csv_table_owned(header: &[String], rows: &[Vec<f64>]) -> String {
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_table(&refs, rows)
}

/// Runs the full simulation and writes `snapshots/`.
pub fn simulate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let sys = build_system(config)?;
    let z0 = initial_state(config, &sys);
    let run = sys.simulate(
        &z0,
        &Ambient::Constant(config.fom.ambient),
        &config.sim_options(),
    )?;

    let mut dir = OutputDir::create(out, "snapshots")?;
    let n_cells = sys.grid.num_cells();
    let header = state_header(n_cells);
    let rows: Vec<Vec<f64>> = run
        .snapshots
        .times
        .iter()
        .zip(&run.snapshots.states)
        .map(|(t, z)| {
            let mut row = Vec::with_capacity(2 * n_cells + 1);
            row.push(*t);
            row.extend(z.iter());
            row
        })
        .collect();
    dir.write("snapshots.csv", &csv_table_owned(&header, &rows))?;

    let xt_rows: Vec<Vec<f64>> = run
        .total_moisture
        .times
        .iter()
        .zip(&run.total_moisture.values)
        .map(|(t, x)| vec![*t, *x])
        .collect();
    dir.write("xt.csv", &csv_table(&["time", "total_moisture"], &xt_rows))?;
    dir.finish(
        "simulate",
        &config.hash(),
        &config.canonical_toml(),
        BTreeMap::new(),
    )?;
    println!(
        "simulate: {} snapshots over {} s at T_inf = {} K -> {}",
        run.snapshots.times.len(),
        config.fom.horizon,
        config.fom.ambient,
        out.join("snapshots").display()
    );
    Ok(())
}

fn load_snapshots(
    input: &mut InputDir,
    config: &RunConfig,
) -> Result<SnapshotSet, CliError> {
    let text = input.read("snapshots.csv")?;
    let (header, rows) = parse_csv(&text, "snapshots.csv")?;
    let n_cells = config.grid.nx * config.grid.ny * config.grid.nz;
    if header.len() != 2 * n_cells + 1 {
        return Err(CliError::config(format!(
            "snapshots.csv has {} columns, the configured grid needs {}",
            header.len(),
            2 * n_cells + 1
        )));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut states = Vec::with_capacity(rows.len());
    for row in rows {
        times.push(row[0]);
        states.push(DVector::from_row_slice(&row[1..]));
    }
    Ok(SnapshotSet { times, states })
}

/// Builds the reduced basis from recorded snapshots and writes `basis/`.
pub fn reduce(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let sys = build_system(config)?;
    let hash = config.hash();
    let mut input = InputDir::open(out, "snapshots", &hash)?;
    let snaps = load_snapshots(&mut input, config)?;
    let basis = build_basis(&sys.grid, &snaps, config.pod.n_x, config.pod.n_t)?;

    let mut dir = OutputDir::create(out, "basis")?;
    let n = sys.grid.num_cells();
    let mean = basis.mean();
    let mean_rows: Vec<Vec<f64>> = (0..n).map(|i| vec![mean[i], mean[n + i]]).collect();
    dir.write(
        "mean.csv",
        &csv_table(&["moisture", "temperature"], &mean_rows),
    )?;

    for (file, modes, singular) in [
        (
            "moisture",
            basis.moisture_modes(),
            basis.singular_values_moisture(),
        ),
        (
            "temperature",
            basis.temperature_modes(),
            basis.singular_values_temperature(),
        ),
    ] {
        let header = mode_header("mode", modes.ncols());
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..modes.ncols()).map(|k| modes[(i, k)]).collect())
            .collect();
        dir.write(
            &format!("modes_{file}.csv"),
            &csv_table_owned(&header, &rows),
        )?;
        let sv_rows: Vec<Vec<f64>> = singular
            .iter()
            .enumerate()
            .map(|(k, s)| vec![k as f64, *s])
            .collect();
        dir.write(
            &format!("singular_values_{file}.csv"),
            &csv_table(&["index", "sigma"], &sv_rows),
        )?;
    }
    dir.finish("reduce", &hash, &config.canonical_toml(), input.consumed())?;
    println!(
        "reduce: {} + {} modes from {} snapshots -> {}",
        config.pod.n_x,
        config.pod.n_t,
        snaps.times.len(),
        out.join("basis").display()
    );
    Ok(())
}

fn read_matrix(
    input: &mut InputDir,
    file: &str,
    rows_expected: usize,
) -> Result<DMatrix<f64>, CliError> {
    let text = input.read(file)?;
    let (header, rows) = parse_csv(&text, file)?;
    if rows.len() != rows_expected {
        return Err(CliError::config(format!(
            "{file} has {} rows, the configured grid needs {rows_expected}",
            rows.len()
        )));
    }
    let cols = header.len();
    Ok(DMatrix::from_fn(rows_expected, cols, |i, j| rows[i][j]))
}

fn load_basis(
    input: &mut InputDir,
    config: &RunConfig,
) -> Result<PodBasis, CliError> {
    let n = config.grid.nx * config.grid.ny * config.grid.nz;
    let mean = read_matrix(input, "mean.csv", n)?;
    let moisture_modes = read_matrix(input, "modes_moisture.csv", n)?;
    let temperature_modes = read_matrix(input, "modes_temperature.csv", n)?;
    let mut singular = Vec::new();
    for file in ["singular_values_moisture.csv", "singular_values_temperature.csv"] {
        let text = input.read(file)?;
        let (_, rows) = parse_csv(&text, file)?;
        singular.push(rows.iter().map(|r| r[1]).collect::<Vec<f64>>());
    }
    let temperature_singular = singular.pop().unwrap();
    let moisture_singular = singular.pop().unwrap();
    let dv = config.grid.h.powi(3);
    Ok(PodBasis::assemble(
        dv,
        mean.column(0).into_owned(),
        moisture_modes,
        moisture_singular,
        mean.column(1).into_owned(),
        temperature_modes,
        temperature_singular,
    )?)
}

fn load_rom(config: &RunConfig, out: &Path) -> Result<(RomSystem, BTreeMap<String, String>), CliError> {
    let sys = build_system(config)?;
    let mut input = InputDir::open(out, "basis", &config.hash())?;
    let basis = load_basis(&mut input, config)?;
    let rom = RomSystem::new(sys, basis)?.with_clamped_lift();
    Ok((rom, input.consumed()))
}

#[derive(Serialize)]
struct FieldErrorDto {
    nrmse: f64,
    max_abs: f64,
    max_cell: usize,
    max_time: f64,
}

#[derive(Serialize)]
struct ValidateReport {
    ambient: f64,
    nrmse_total_moisture: f64,
    max_abs_total_moisture: f64,
    moisture: FieldErrorDto,
    temperature: FieldErrorDto,
}

/// Re-simulates full and reduced models side by side and writes `validate/`.
pub fn validate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (rom, inputs) = load_rom(config, out)?;
    let ambient = Ambient::Constant(config.fom.ambient);
    let z0 = initial_state(config, &rom.fom);
    let dt = rom.fom.default_dt(&z0, &ambient)?;
    let options = SimOptions {
        dt: Some(dt),
        horizon: config.fom.horizon,
        snapshots: config.fom.snapshots,
        steady_tol: None,
    };
    let full = rom.fom.simulate(&z0, &ambient, &options)?;
    let c0 = rom.initial_coefficients(&z0)?;
    let reduced = rom.simulate(
        &c0,
        &ambient,
        &RomSimOptions {
            dt,
            horizon: config.fom.horizon,
            snapshots: config.fom.snapshots,
        },
    )?;

    let nrmse_xt = nrmse(&full.total_moisture.values, &reduced.total_moisture.values)?;
    let max_abs = full
        .total_moisture
        .values
        .iter()
        .zip(&reduced.total_moisture.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let lifted = rom.lift_snapshots(&reduced.times, &reduced.coefficients)?;
    let fields = field_error_maps(&full.snapshots, &lifted, rom.fom.grid.num_cells())?;

    let mut dir = OutputDir::create(out, "validate")?;
    let xt_rows: Vec<Vec<f64>> = full
        .total_moisture
        .times
        .iter()
        .zip(&full.total_moisture.values)
        .zip(&reduced.total_moisture.values)
        .map(|((t, a), b)| vec![*t, *a, *b])
        .collect();
    dir.write(
        "xt_compare.csv",
        &csv_table(&["time", "fom", "rom"], &xt_rows),
    )?;
    let report = ValidateReport {
        ambient: config.fom.ambient,
        nrmse_total_moisture: nrmse_xt,
        max_abs_total_moisture: max_abs,
        moisture: FieldErrorDto {
            nrmse: fields.moisture.nrmse,
            max_abs: fields.moisture.max_abs,
            max_cell: fields.moisture.max_cell,
            max_time: fields.moisture.max_time,
        },
        temperature: FieldErrorDto {
            nrmse: fields.temperature.nrmse,
            max_abs: fields.temperature.max_abs,
            max_cell: fields.temperature.max_cell,
            max_time: fields.temperature.max_time,
        },
    };
    dir.write("report.json", &to_pretty_json(&report)?)?;
    dir.finish("validate", &config.hash(), &config.canonical_toml(), inputs)?;
    println!(
        "validate: X(t) NRMSE {:.3e}, max |dX| {:.3e} kg/kg -> {}",
        nrmse_xt,
        max_abs,
        out.join("validate").display()
    );
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::config(format!("cannot encode report: {e}")))?;
    text.push('\n');
    Ok(text)
}

#[derive(Serialize)]
struct DiagnosticDto {
    magnitude: f64,
    steps: usize,
    settled: bool,
    final_rate: f64,
}

#[derive(Serialize)]
struct GramianReport {
    eigenvalues: Vec<f64>,
    semi_axes: Vec<f64>,
    controllable: bool,
    spread: Option<f64>,
    diagnostics: Vec<DiagnosticDto>,
    warnings: Vec<String>,
}

/// Probes controllability around a settled operating point and writes
/// `gramian/`.
pub fn gramian(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (rom, inputs) = load_rom(config, out)?;
    let u0 = config.gramian.u0;
    let x_eq = rom.fom.params.equilibrium_moisture(u0)?;
    let z_near = rom.fom.grid.uniform_state(x_eq + 0.05, u0);
    let start = rom.initial_coefficients(&z_near)?;
    let mut probe = GramianConfig::scalar_input(start);
    probe.magnitudes = config.gramian.magnitudes.clone();
    probe.u0 = DVector::from_element(1, u0);
    probe.dt = config.gramian.dt;
    probe.max_steps = config.gramian.max_steps;
    probe.settle_tol = config.gramian.settle_tol;

    let mut adapter = RomAdapter::new(&rom);
    let result = empirical_gramian(&mut adapter, &probe)?;
    let pairs = reduced_eigenproblem(&result.gramian, rom.basis.cell_volume())?;
    let report = controllability_report(&pairs.eigenvalues);

    let n = rom.n();
    let mut dir = OutputDir::create(out, "gramian")?;
    let header = mode_header("c", n);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| result.gramian[(i, j)]).collect())
        .collect();
    dir.write("gramian.csv", &csv_table_owned(&header, &rows))?;
    let ss_rows: Vec<Vec<f64>> = result
        .steady_state
        .iter()
        .enumerate()
        .map(|(k, v)| vec![k as f64, *v])
        .collect();
    dir.write(
        "steady_state.csv",
        &csv_table(&["index", "coefficient"], &ss_rows),
    )?;
    let eig_rows: Vec<Vec<f64>> = pairs
        .eigenvalues
        .iter()
        .zip(&report.semi_axes)
        .enumerate()
        .map(|(k, (e, a))| vec![k as f64, *e, *a])
        .collect();
    dir.write(
        "eigenvalues.csv",
        &csv_table(&["index", "eigenvalue", "semi_axis"], &eig_rows),
    )?;
    let vec_header = mode_header("v", n);
    let vec_rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| pairs.eigenvectors[(i, j)]).collect())
        .collect();
    dir.write("eigenvectors.csv", &csv_table_owned(&vec_header, &vec_rows))?;
    let dto = GramianReport {
        eigenvalues: pairs.eigenvalues.clone(),
        semi_axes: report.semi_axes.clone(),
        controllable: report.controllable,
        spread: report.spread,
        diagnostics: result
            .diagnostics
            .iter()
            .map(|d| DiagnosticDto {
                magnitude: d.magnitude,
                steps: d.steps,
                settled: d.settled,
                final_rate: d.final_rate,
            })
            .collect(),
        warnings: result.warnings.clone(),
    };
    dir.write("report.json", &to_pretty_json(&dto)?)?;
    dir.finish("gramian", &config.hash(), &config.canonical_toml(), inputs)?;
    println!(
        "gramian: {} eigenvalues, controllable = {}, spread = {:?} -> {}",
        n,
        report.controllable,
        report.spread,
        out.join("gramian").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct StartDto {
    start_value: f64,
    cost: f64,
    violation: f64,
    inner_iterations: usize,
    outer_iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct FomCheckDto {
    terminal_mismatch: f64,
    max_abs_mismatch: f64,
    fom_terminal: f64,
    constraint_met_on_fom: bool,
}

#[derive(Serialize)]
struct OcpReport {
    cost: f64,
    terminal_moisture: f64,
    violation: f64,
    switch_points: Vec<f64>,
    iterations: usize,
    stagnated: bool,
    winner: usize,
    substeps: usize,
    starts: Vec<StartDto>,
    fom_check: FomCheckDto,
}

fn write_schedule(
    dir: &mut OutputDir,
    file: &str,
    schedule: &ControlSchedule,
    dt: f64,
) -> Result<(), CliError> {
    let rows: Vec<Vec<f64>> = schedule
        .values
        .iter()
        .enumerate()
        .map(|(j, u)| vec![j as f64 * dt, *u])
        .collect();
    dir.write(file, &csv_table(&["time", "u"], &rows))
}

fn solve_ocp<'a>(
    config: &RunConfig,
    rom: &'a RomSystem,
) -> Result<(OcpProblem<'a>, OcpResult), CliError> {
    let z0 = initial_state(config, &rom.fom);
    let c0 = rom.initial_coefficients(&z0)?;
    let problem = OcpProblem::new(rom, c0, config.ocp_settings())?;
    let result = problem.solve(&problem.default_starts())?;
    Ok((problem, result))
}

/// Plans the energy-optimal heating schedule and writes `ocp/`.
pub fn ocp(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (rom, inputs) = load_rom(config, out)?;
    let (problem, result) = solve_ocp(config, &rom)?;
    let z0 = initial_state(config, &rom.fom);
    let check = problem.verify_on_fom(&result.schedule, &z0)?;

    let mut dir = OutputDir::create(out, "ocp")?;
    write_schedule(&mut dir, "schedule.csv", &result.schedule, problem.dt())?;
    let check_rows: Vec<Vec<f64>> = check
        .times
        .iter()
        .zip(&check.rom_moisture)
        .zip(&check.fom_moisture)
        .map(|((t, r), f)| vec![*t, *r, *f])
        .collect();
    dir.write(
        "fom_check.csv",
        &csv_table(&["time", "rom", "fom"], &check_rows),
    )?;
    let report = OcpReport {
        cost: result.cost,
        terminal_moisture: result.terminal_moisture,
        violation: result.violation,
        switch_points: result.switch_points.clone(),
        iterations: result.iterations,
        stagnated: result.stagnated,
        winner: result.winner,
        substeps: problem.substeps(),
        starts: result
            .multistart
            .iter()
            .map(|r| StartDto {
                start_value: r.start_value,
                cost: r.cost,
                violation: r.violation,
                inner_iterations: r.inner_iterations,
                outer_iterations: r.outer_iterations,
                converged: r.converged,
            })
            .collect(),
        fom_check: FomCheckDto {
            terminal_mismatch: check.terminal_mismatch,
            max_abs_mismatch: check.max_abs_mismatch,
            fom_terminal: check.fom_terminal,
            constraint_met_on_fom: check.constraint_met_on_fom,
        },
    };
    dir.write("result.json", &to_pretty_json(&report)?)?;
    dir.finish("ocp", &config.hash(), &config.canonical_toml(), inputs)?;
    println!(
        "ocp: J = {:.1} K s, violation {:.2e}, {} switches, terminal X {:.4} (FOM {:.4}) -> {}",
        result.cost,
        result.violation,
        result.switch_points.len(),
        result.terminal_moisture,
        check.fom_terminal,
        out.join("ocp").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct StudyEntryDto {
    n: usize,
    cost: f64,
    terminal_moisture: f64,
    violation: f64,
    iterations: usize,
    switch_points: Vec<f64>,
}

#[derive(Serialize)]
struct StudyReport {
    entries: Vec<StudyEntryDto>,
}

/// Solves the heating problem across reduced orders and writes
/// `order_study/`.
pub fn order_study(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let sys = build_system(config)?;
    let hash = config.hash();
    let mut input = InputDir::open(out, "snapshots", &hash)?;
    let snaps = load_snapshots(&mut input, config)?;

    let mut dir = OutputDir::create(out, "order_study")?;
    let mut entries = Vec::new();
    let mut timings = BTreeMap::new();
    for &order in &config.ocp.study_orders {
        let (n_x, n_t) = presets::split_order(order);
        let basis = build_basis(&sys.grid, &snaps, n_x, n_t)?;
        let rom = RomSystem::new(build_system(config)?, basis)?.with_clamped_lift();
        let clock = std::time::Instant::now();
        let (problem, result) = solve_ocp(config, &rom)?;
        timings.insert(format!("n{order}"), clock.elapsed().as_secs_f64());
        write_schedule(
            &mut dir,
            &format!("schedule_n{order}.csv"),
            &result.schedule,
            problem.dt(),
        )?;
        entries.push(StudyEntryDto {
            n: order,
            cost: result.cost,
            terminal_moisture: result.terminal_moisture,
            violation: result.violation,
            iterations: result.iterations,
            switch_points: result.switch_points,
        });
    }
    let study_rows: Vec<Vec<f64>> = entries
        .iter()
        .map(|e| {
            vec![
                e.n as f64,
                e.cost,
                e.terminal_moisture,
                e.violation,
                e.iterations as f64,
                e.switch_points.len() as f64,
            ]
        })
        .collect();
    dir.write(
        "study.csv",
        &csv_table(
            &[
                "n",
                "cost",
                "terminal_moisture",
                "violation",
                "iterations",
                "switch_count",
            ],
            &study_rows,
        ),
    )?;
    dir.write("study.json", &to_pretty_json(&StudyReport { entries })?)?;
    dir.write_timings("timings.json", &to_pretty_json(&timings)?)?;
    dir.finish(
        "order-study",
        &hash,
        &config.canonical_toml(),
        input.consumed(),
    )?;
    println!(
        "order-study: {} orders solved -> {}",
        config.ocp.study_orders.len(),
        out.join("order_study").display()
    );
    Ok(())
}
