//! Reduced-order drying model.
//!
//! The full-order right-hand side is evaluated on the lifted state and
//! projected back onto the basis, which keeps the reduced dynamics exactly
//! consistent with the face-flux assembly of the full model and preserves
//! the affine dependence on the ambient temperature:
//! `dc/dt = f(c) + g(c) u`.

use nalgebra::DVector;

use crate::error::{CoreError, Result};
use crate::fom::{snapshot_steps, Ambient, FomSystem, FomWorkspace, Series, SnapshotSet};
use crate::material::TEMPERATURE_WINDOW;
use crate::pod::{field_error_maps, nrmse, FieldErrorReport, PodBasis};

/// Reduced model: a POD basis over a full-order system.
#[derive(Debug)]
pub struct RomSystem {
    pub fom: FomSystem,
    pub basis: PodBasis,
    /// Clamp lifted fields into the material validity window instead of
    /// rejecting them. Off by default; optimizer line searches that probe
    /// rough iterates opt in.
    pub clamp_lifted: bool,
    /// Mean total moisture of the basis [kg/kg].
    moisture_offset: f64,
    /// Gradient of lifted total moisture with respect to the coefficients;
    /// zero on temperature entries.
    moisture_gradient: DVector<f64>,
}

/// Scratch buffers for repeated reduced right-hand-side evaluations.
#[derive(Debug)]
pub struct RomWorkspace {
    lifted: DVector<f64>,
    drift: DVector<f64>,
    input_map: DVector<f64>,
    fom: FomWorkspace,
}

impl RomWorkspace {
    pub fn new(system: &RomSystem) -> Self {
        let len = system.fom.grid.state_len();
        RomWorkspace {
            lifted: DVector::zeros(len),
            drift: DVector::zeros(len),
            input_map: DVector::zeros(len),
            fom: FomWorkspace::new(&system.fom.grid),
        }
    }
}

/// Fixed-step reduced simulation settings.
#[derive(Debug, Clone)]
pub struct RomSimOptions {
    /// Euler step [s].
    pub dt: f64,
    /// Total simulated time [s].
    pub horizon: f64,
    /// Number of recorded coefficient snapshots, spread evenly and always
    /// including the initial and final states.
    pub snapshots: usize,
}

/// Trajectory of a reduced simulation.
#[derive(Debug, Clone)]
pub struct RomSimResult {
    /// Record times of the coefficient snapshots [s].
    pub times: Vec<f64>,
    /// Coefficient vectors at the record times.
    pub coefficients: Vec<DVector<f64>>,
    /// Lifted total moisture at every step [kg/kg].
    pub total_moisture: Series,
    pub final_coefficients: DVector<f64>,
    pub final_time: f64,
    pub steps_taken: usize,
}

/// Reduced-versus-full comparison for one ambient step scenario.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioReport {
    /// Ambient step temperature [K].
    pub ambient: f64,
    /// Total-moisture NRMSE over the shared step grid.
    pub nrmse_total_moisture: f64,
    /// Largest absolute total-moisture mismatch [kg/kg].
    pub max_abs_total_moisture: f64,
    /// Per-field residual summary at the snapshot times.
    pub fields: FieldErrorReport,
}

/// Validation summary across ambient step scenarios.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub scenarios: Vec<ScenarioReport>,
    /// Largest absolute total-moisture mismatch across all scenarios [kg/kg].
    pub max_abs_total_moisture: f64,
}

impl RomSystem {
    pub fn new(fom: FomSystem, basis: PodBasis) -> Result<Self> {
        if basis.num_cells() != fom.grid.num_cells() {
            return Err(CoreError::DimensionMismatch {
                context: "basis cells",
                expected: fom.grid.num_cells(),
                actual: basis.num_cells(),
            });
        }
        if basis.cell_volume() != fom.grid.cell_volume() {
            return Err(CoreError::InvalidParameter {
                name: "cell_volume",
                reason: "basis was built on a grid with a different cell volume",
                value: basis.cell_volume(),
            });
        }
        let n = fom.grid.num_cells();
        let mean = basis.mean();
        let moisture_offset = mean.rows(0, n).mean();
        let mut moisture_gradient = DVector::zeros(basis.n());
        for k in 0..basis.n_moisture() {
            moisture_gradient[k] = basis.moisture_modes().column(k).mean();
        }
        Ok(RomSystem {
            fom,
            basis,
            clamp_lifted: false,
            moisture_offset,
            moisture_gradient,
        })
    }

    pub fn with_clamped_lift(mut self) -> Self {
        self.clamp_lifted = true;
        self
    }

    /// Reduced state dimension.
    pub fn n(&self) -> usize {
        self.basis.n()
    }

    /// Lifted total moisture, an affine function of the coefficients [kg/kg].
    pub fn total_moisture(&self, c: &DVector<f64>) -> f64 {
        self.moisture_offset + self.moisture_gradient.dot(c)
    }

    /// Gradient of [`Self::total_moisture`] with respect to the coefficients.
    pub fn moisture_gradient(&self) -> &DVector<f64> {
        &self.moisture_gradient
    }

    fn lift_into(&self, c: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        out.copy_from(&self.basis.lift(c)?);
        let n = self.fom.grid.num_cells();
        if self.clamp_lifted {
            for i in 0..n {
                if out[i] < 0.0 {
                    out[i] = 0.0;
                }
                let t = out[n + i];
                out[n + i] = t.clamp(TEMPERATURE_WINDOW.0, TEMPERATURE_WINDOW.1);
            }
        } else {
            for i in 0..n {
                if out[i] < 0.0 {
                    return Err(CoreError::ValidityWindow {
                        field: "moisture",
                        cell: i,
                        value: out[i],
                        window: "[0, inf)",
                    });
                }
                let t = out[n + i];
                if t < TEMPERATURE_WINDOW.0 || t > TEMPERATURE_WINDOW.1 {
                    return Err(CoreError::ValidityWindow {
                        field: "temperature",
                        cell: i,
                        value: t,
                        window: "[200 K, 500 K]",
                    });
                }
            }
        }
        Ok(())
    }

    /// Drift and input map of the reduced dynamics at coefficients `c`.
    pub fn rhs_split(
        &self,
        c: &DVector<f64>,
        ws: &mut RomWorkspace,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.lift_into(c, &mut ws.lifted)?;
        self.fom
            .rhs_split(&ws.lifted, &mut ws.fom, &mut ws.drift, &mut ws.input_map)?;
        let f = self.basis.reduce_rate(&ws.drift)?;
        let g = self.basis.reduce_rate(&ws.input_map)?;
        Ok((f, g))
    }

    /// Reduced time derivative at coefficients `c` under ambient `u` [1/s].
    pub fn rhs(&self, c: &DVector<f64>, u: f64, ws: &mut RomWorkspace) -> Result<DVector<f64>> {
        let (mut f, g) = self.rhs_split(c, ws)?;
        f.axpy(u, &g, 1.0);
        Ok(f)
    }

    /// Reduced coordinates of a full initial state.
    pub fn initial_coefficients(&self, z0: &DVector<f64>) -> Result<DVector<f64>> {
        self.basis.coefficients(z0)
    }

    /// Lifts recorded coefficients back to full states.
    pub fn lift_snapshots(
        &self,
        times: &[f64],
        coefficients: &[DVector<f64>],
    ) -> Result<SnapshotSet> {
        let mut states = Vec::with_capacity(coefficients.len());
        for c in coefficients {
            states.push(self.basis.lift(c)?);
        }
        Ok(SnapshotSet {
            times: times.to_vec(),
            states,
        })
    }

    /// Fixed-step explicit Euler simulation of the reduced dynamics.
    pub fn simulate(
        &self,
        c0: &DVector<f64>,
        ambient: &Ambient,
        options: &RomSimOptions,
    ) -> Result<RomSimResult> {
        if c0.len() != self.n() {
            return Err(CoreError::DimensionMismatch {
                context: "initial coefficients",
                expected: self.n(),
                actual: c0.len(),
            });
        }
        if !(options.horizon > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "horizon",
                reason: "must be strictly positive",
                value: options.horizon,
            });
        }
        if !(options.dt > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "dt",
                reason: "time step must be strictly positive",
                value: options.dt,
            });
        }
        let dt = options.dt;
        let steps = (options.horizon / dt - 1e-12).ceil().max(1.0) as usize;
        let record = snapshot_steps(steps, options.snapshots)?;

        let mut ws = RomWorkspace::new(self);
        let mut c = c0.clone();
        let mut times = Vec::with_capacity(record.len());
        let mut coefficients = Vec::with_capacity(record.len());
        let mut xt = Series::default();
        let mut next_record = 0usize;
        let mut steps_taken = 0usize;

        for step in 0..=steps {
            let t = step as f64 * dt;
            if next_record < record.len() && record[next_record] == step {
                times.push(t);
                coefficients.push(c.clone());
                next_record += 1;
            }
            xt.times.push(t);
            xt.values.push(self.total_moisture(&c));
            if step == steps {
                break;
            }
            let u = ambient.value(t);
            let dc = self.rhs(&c, u, &mut ws)?;
            c.axpy(dt, &dc, 1.0);
            for (k, v) in c.iter().enumerate() {
                if !v.is_finite() {
                    return Err(CoreError::NonFinite {
                        context: "reduced simulation step",
                        time: t + dt,
                        index: k,
                        detail: "coefficient is not finite",
                    });
                }
            }
            steps_taken += 1;
        }

        Ok(RomSimResult {
            times,
            coefficients,
            total_moisture: xt,
            final_coefficients: c,
            final_time: steps_taken as f64 * dt,
            steps_taken,
        })
    }

    /// Runs the full and the reduced model through ambient step scenarios
    /// from a shared initial state and reports total-moisture and field
    /// errors per scenario.
    ///
    /// Both models use the same step, the full model's conservative default
    /// for the hottest scenario, so every comparison shares one time grid.
    pub fn validate_against_fom(
        &self,
        z0: &DVector<f64>,
        ambients: &[f64],
        horizon: f64,
        snapshots: usize,
    ) -> Result<ValidationReport> {
        let hottest = ambients.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dt = self.fom.default_dt(z0, &Ambient::Constant(hottest))?;
        let c0 = self.initial_coefficients(z0)?;
        let mut scenarios = Vec::with_capacity(ambients.len());
        let mut worst = 0.0f64;
        for &u in ambients {
            let ambient = Ambient::Constant(u);
            let full = self.fom.simulate(
                z0,
                &ambient,
                &crate::fom::SimOptions {
                    dt: Some(dt),
                    horizon,
                    snapshots,
                    steady_tol: None,
                },
            )?;
            let reduced = self.simulate(
                &c0,
                &ambient,
                &RomSimOptions {
                    dt,
                    horizon,
                    snapshots,
                },
            )?;
            let max_abs = full
                .total_moisture
                .values
                .iter()
                .zip(&reduced.total_moisture.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let lifted = self.lift_snapshots(&reduced.times, &reduced.coefficients)?;
            let report = ScenarioReport {
                ambient: u,
                nrmse_total_moisture: nrmse(
                    &full.total_moisture.values,
                    &reduced.total_moisture.values,
                )?,
                max_abs_total_moisture: max_abs,
                fields: field_error_maps(&full.snapshots, &lifted, self.fom.grid.num_cells())?,
            };
            worst = worst.max(max_abs);
            scenarios.push(report);
        }
        Ok(ValidationReport {
            scenarios,
            max_abs_total_moisture: worst,
        })
    }
}
