//! Ready-made experiment configurations.
//!
//! Both presets share one recipe: dry a chip from a uniform wet cold state
//! by a step in ambient temperature, collect snapshots, build a reduced
//! model, probe controllability, and plan heating schedules. The `paper`
//! preset is the full-size reference configuration; the `desk` preset
//! shrinks the grid so the whole pipeline runs in seconds.
//!
//! Each preset carries its own mass-diffusivity scale, calibrated once by
//! [`calibrate_scale_mass`] so the hot-air step response settles within the
//! drying horizon, and frozen here as a constant.

use nalgebra::DVector;

use crate::error::{CoreError, Result};
use crate::fom::{Ambient, FomSystem, SimOptions};
use crate::gramian::GramianConfig;
use crate::grid::Grid;
use crate::material::MaterialParams;
use crate::ocp::OcpSettings;
use crate::rom::RomSystem;

/// Calibrated mass-diffusivity scale of the `paper` preset.
pub const PAPER_DIFFUSIVITY_SCALE_MASS: f64 = 3.986846857499491e-8;

/// Calibrated mass-diffusivity scale of the `desk` preset.
pub const DESK_DIFFUSIVITY_SCALE_MASS: f64 = 1.0697454774847745e-8;

/// Remaining moisture excess the calibration aims for at the horizon, as a
/// fraction of the total drop; half the accepted band.
const CALIBRATION_TARGET: f64 = 0.005;

/// Drying scenario selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Hot drying air.
    A,
    /// Mild drying air.
    B,
}

/// One named experiment configuration.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell edge [m].
    pub h: f64,
    pub material: MaterialParams,
    /// Uniform initial moisture [kg/kg].
    pub initial_moisture: f64,
    /// Uniform initial temperature [K].
    pub initial_temperature: f64,
    /// Hot drying air, case A [K].
    pub case_a: f64,
    /// Mild drying air, case B [K].
    pub case_b: f64,
    /// Snapshot-collection horizon [s].
    pub drying_horizon: f64,
    /// Snapshots collected over the horizon.
    pub snapshot_count: usize,
    /// Default reduced order.
    pub rom_order: usize,
    /// Reduced orders swept by the order study.
    pub study_orders: Vec<usize>,
    /// Impulse integration step of the controllability probe [s].
    pub gramian_dt: f64,
    /// Step budget per impulse of the controllability probe.
    pub gramian_max_steps: usize,
    /// Rate-norm settle tolerance of the controllability probe.
    pub gramian_settle_tol: f64,
    /// Ambient the controllability probe linearizes around [K].
    pub gramian_ambient: f64,
    pub ocp: OcpSettings,
}

/// Full-size reference configuration.
pub fn paper() -> Preset {
    Preset {
        name: "paper",
        nx: 10,
        ny: 20,
        nz: 5,
        h: 1.0e-3,
        material: MaterialParams {
            diffusivity_scale_mass: PAPER_DIFFUSIVITY_SCALE_MASS,
            ..MaterialParams::default()
        },
        initial_moisture: 0.8,
        initial_temperature: 298.15,
        case_a: 373.15,
        case_b: 335.65,
        drying_horizon: 1100.0,
        snapshot_count: 100,
        rom_order: 6,
        study_orders: vec![6, 10, 34],
        gramian_dt: 0.05,
        gramian_max_steps: 400_000,
        gramian_settle_tol: 1.0e-8,
        gramian_ambient: 335.65,
        ocp: OcpSettings::default(),
    }
}

/// Shrunken grid with the same recipe, for fast runs.
pub fn desk() -> Preset {
    Preset {
        name: "desk",
        nx: 5,
        ny: 5,
        nz: 5,
        material: MaterialParams {
            diffusivity_scale_mass: DESK_DIFFUSIVITY_SCALE_MASS,
            ..MaterialParams::default()
        },
        ..paper()
    }
}

/// Looks a preset up by its command-line token.
pub fn by_name(name: &str) -> Option<Preset> {
    match name {
        "paper" => Some(paper()),
        "desk" => Some(desk()),
        _ => None,
    }
}

/// Splits a reduced order across the two fields, moisture first.
pub fn split_order(n: usize) -> (usize, usize) {
    (n - n / 2, n / 2)
}

impl Preset {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.nz, self.h)
    }

    pub fn system(&self) -> Result<FomSystem> {
        FomSystem::new(self.grid()?, self.material.clone())
    }

    pub fn initial_state(&self) -> Result<DVector<f64>> {
        Ok(self
            .grid()?
            .uniform_state(self.initial_moisture, self.initial_temperature))
    }

    /// Drying-air temperature of the selected case [K].
    pub fn ambient(&self, case: Case) -> f64 {
        match case {
            Case::A => self.case_a,
            Case::B => self.case_b,
        }
    }

    /// Snapshot-collection options for the drying run.
    pub fn drying_options(&self) -> SimOptions {
        SimOptions {
            dt: None,
            horizon: self.drying_horizon,
            snapshots: self.snapshot_count,
            steady_tol: None,
        }
    }

    /// Controllability-probe configuration around the preset's linearization
    /// ambient, started slightly wet of equilibrium so the settle march is
    /// short.
    pub fn gramian_config(&self, rom: &RomSystem) -> Result<GramianConfig> {
        let u0 = self.gramian_ambient;
        let x_eq = self.material.equilibrium_moisture(u0)?;
        let z_near = rom.fom.grid.uniform_state(x_eq + 0.05, u0);
        let start = rom.initial_coefficients(&z_near)?;
        let mut config = GramianConfig::scalar_input(start);
        config.u0 = DVector::from_element(1, u0);
        config.dt = self.gramian_dt;
        config.max_steps = self.gramian_max_steps;
        config.settle_tol = self.gramian_settle_tol;
        Ok(config)
    }
}

/// Calibrates the mass-diffusivity scale of a chip so its hot-air step
/// response settles within the drying horizon.
///
/// Bisection in log scale over `[1e-9, 1e-4]` until the moisture excess
/// above equilibrium remaining at the horizon is half a percent of the
/// total drop, comfortably inside the one-percent acceptance band. The
/// excess falls monotonically with the scale, so the bracket only needs the
/// right signs at its ends.
pub fn calibrate_scale_mass(
    nx: usize,
    ny: usize,
    nz: usize,
    h: f64,
    horizon: f64,
) -> Result<f64> {
    let base = MaterialParams::default();
    let hot = 373.15;
    let x0 = 0.8;
    let x_eq = base.equilibrium_moisture(hot)?;
    let target = x_eq + CALIBRATION_TARGET * (x0 - x_eq);

    let excess = |log_scale: f64| -> Result<f64> {
        let params = MaterialParams {
            diffusivity_scale_mass: 10.0f64.powf(log_scale),
            ..base.clone()
        };
        let sys = FomSystem::new(Grid::new(nx, ny, nz, h)?, params)?;
        let z0 = sys.grid.uniform_state(x0, 298.15);
        let run = sys.simulate(
            &z0,
            &Ambient::Constant(hot),
            &SimOptions {
                dt: None,
                horizon,
                snapshots: 2,
                steady_tol: None,
            },
        )?;
        Ok(*run.total_moisture.values.last().unwrap() - target)
    };

    let mut lo = -9.0;
    let mut hi = -4.0;
    if !(excess(lo)? > 0.0 && excess(hi)? < 0.0) {
        return Err(CoreError::NoConvergence {
            what: "calibration bracket",
            steps: 0,
            residual: f64::NAN,
        });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(10.0f64.powf(0.5 * (lo + hi)))
}
