//! Finite-volume full-order model of the coupled drying dynamics.
//!
//! The semi-discrete system is input-affine in the ambient temperature:
//! `dz/dt = f(z) + g(z) u` with `u = T_inf`. Interior faces carry two-point
//! diffusive fluxes with harmonic-mean face coefficients; boundary faces
//! carry the nonlinear surface transfer laws. The temperature block of `g`
//! collects the caller-applied affine part `alpha T_inf / (s h)` of the heat
//! boundary condition, so `g` is nonzero only at boundary cells.

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::material::MaterialParams;
use nalgebra::DVector;

/// How the diffusivity of a face is formed from its two cell values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceMean {
    /// Harmonic mean, exact for piecewise-constant coefficients.
    #[default]
    Harmonic,
    /// Arithmetic mean, kept for comparison runs.
    Arithmetic,
}

/// What to do when the fixed time step exceeds the stability bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CflPolicy {
    /// Abort the run with an error.
    #[default]
    Abort,
    /// Record a warning and continue.
    Warn,
}

/// Ambient temperature signal `u(t)` [K].
#[derive(Debug, Clone, PartialEq)]
pub enum Ambient {
    /// Constant ambient temperature.
    Constant(f64),
    /// Zero-order hold over uniform intervals of length `dt`, extended by
    /// its last value past the end of the list.
    Steps { dt: f64, values: Vec<f64> },
}

impl Ambient {
    /// Signal value at time `t` [K].
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Ambient::Constant(u) => *u,
            Ambient::Steps { dt, values } => {
                // Accumulated step times can land a few ulps below an exact
                // interval boundary; nudge before flooring so they do not
                // read the previous hold value.
                let idx = (t / dt + 1.0e-9).floor().max(0.0) as usize;
                values[idx.min(values.len() - 1)]
            }
        }
    }

    /// Largest value the signal ever takes.
    pub fn max_value(&self) -> f64 {
        match self {
            Ambient::Constant(u) => *u,
            Ambient::Steps { values, .. } => values.iter().cloned().fold(f64::MIN, f64::max),
        }
    }
}

/// Scalar time series, one value per record time.
#[derive(Debug, Clone, Default)]
pub struct Series {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// States recorded at selected times of a simulation.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl SnapshotSet {
    /// Number of snapshots.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Step indices at which `m` snapshots evenly cover `0..=steps`.
///
/// The first index is always 0 and the last always `steps`, so the initial
/// condition is part of every snapshot set.
pub fn snapshot_steps(steps: usize, m: usize) -> Result<Vec<usize>> {
    if m < 2 || steps < m - 1 {
        return Err(CoreError::InvalidParameter {
            name: "snapshots",
            reason: "need at least 2 snapshots and at least one step between them",
            value: m as f64,
        });
    }
    Ok((0..m)
        .map(|j| ((j * steps) as f64 / (m - 1) as f64).round() as usize)
        .collect())
}

/// Options for a fixed-step simulation.
#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Fixed time step [s]; `None` picks 0.9x the worst-case stable bound.
    pub dt: Option<f64>,
    /// Simulated horizon [s]; the actual end time is rounded up to a whole
    /// number of steps.
    pub horizon: f64,
    /// Number of recorded snapshots including the initial state.
    pub snapshots: usize,
    /// Stop early once `max |dz/dt|` falls below this tolerance [1/s].
    pub steady_tol: Option<f64>,
}

/// Result of a simulation run.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub snapshots: SnapshotSet,
    /// Total moisture at every step time [kg/kg].
    pub total_moisture: Series,
    pub final_state: DVector<f64>,
    pub final_time: f64,
    pub steps_taken: usize,
    /// True when the steady-state detector ended the run early.
    pub stopped_at_steady: bool,
    /// Stability warnings collected under [`CflPolicy::Warn`].
    pub warnings: Vec<String>,
}

/// How an impulse on the ambient temperature is realized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImpulseKind {
    /// Instantaneous state jump `z(0+) = z_ss + g(z_ss) h_d`.
    StateJump,
    /// Rectangular pulse `u = u0 + h_d / width` on `[0, width)`, which
    /// converges to the state jump as the width shrinks.
    RectPulse { width: f64 },
}

/// Reusable per-call buffers for right-hand-side assembly.
#[derive(Debug, Clone)]
pub struct FomWorkspace {
    heat_capacity: Vec<f64>,
    diffusivity: [Vec<f64>; 3],
    conductivity: [Vec<f64>; 3],
}

impl FomWorkspace {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.num_cells();
        Self {
            heat_capacity: vec![0.0; n],
            diffusivity: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            conductivity: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }
}

/// The assembled full-order system.
#[derive(Debug, Clone)]
pub struct FomSystem {
    pub grid: Grid,
    pub params: MaterialParams,
    pub face_mean: FaceMean,
    pub cfl_policy: CflPolicy,
    /// Safety factor of the stability bound [-].
    pub cfl_safety: f64,
}

impl FomSystem {
    pub fn new(grid: Grid, params: MaterialParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            grid,
            params,
            face_mean: FaceMean::default(),
            cfl_policy: CflPolicy::default(),
            cfl_safety: 0.9,
        })
    }

    pub fn with_face_mean(mut self, face_mean: FaceMean) -> Self {
        self.face_mean = face_mean;
        self
    }

    pub fn with_cfl_policy(mut self, policy: CflPolicy) -> Self {
        self.cfl_policy = policy;
        self
    }

    fn check_state_len(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.grid.state_len() {
            return Err(CoreError::DimensionMismatch {
                context: "full state length",
                expected: self.grid.state_len(),
                actual: z.len(),
            });
        }
        Ok(())
    }

    /// Assembles the drift `f(z)` and input map `g(z)` and returns the
    /// largest cell diffusivity seen [m^2/s], which drives the stability
    /// bound of the very step being assembled.
    pub fn rhs_split(
        &self,
        z: &DVector<f64>,
        ws: &mut FomWorkspace,
        drift: &mut DVector<f64>,
        input_map: &mut DVector<f64>,
    ) -> Result<f64> {
        self.check_state_len(z)?;
        let n = self.grid.num_cells();
        let h = self.grid.h;
        let x = &z.as_slice()[..n];
        let temp = &z.as_slice()[n..];

        let mut d_max = 0.0f64;
        for i in 0..n {
            let s = self.params.heat_capacity_volumetric(x[i])?;
            let lambda = self.params.heat_conductivity(x[i])?;
            let delta = self.params.mass_diffusivity(temp[i])?;
            ws.heat_capacity[i] = s;
            for axis in 0..3 {
                ws.conductivity[axis][i] = lambda[axis];
                ws.diffusivity[axis][i] = delta[axis];
                d_max = d_max.max(delta[axis]).max(lambda[axis] / s);
            }
        }

        drift.fill(0.0);
        input_map.fill(0.0);
        let drift = drift.as_mut_slice();
        let input_map = input_map.as_mut_slice();

        // Interior faces: each flux is computed once and applied with
        // opposite signs, so interior exchange cancels exactly.
        for face in self.grid.interior_faces() {
            let (a, b, axis) = (face.a, face.b, face.axis);
            let delta_face = face_value(
                self.face_mean,
                ws.diffusivity[axis][a],
                ws.diffusivity[axis][b],
            );
            let moisture_flux = delta_face * (x[b] - x[a]) / (h * h);
            drift[a] += moisture_flux;
            drift[b] -= moisture_flux;

            let lambda_face = face_value(
                self.face_mean,
                ws.conductivity[axis][a],
                ws.conductivity[axis][b],
            );
            let heat_flux = lambda_face * (temp[b] - temp[a]) / (h * h);
            drift[n + a] += heat_flux;
            drift[n + b] -= heat_flux;
        }

        // Boundary faces: surface transfer laws per unit area, divided by h
        // (face area over cell volume). The temperature block still carries
        // raw heat fluxes here and is scaled by 1/s below.
        for &(i, faces) in self.grid.boundary_cells() {
            let rho_surface = self.params.abs_humidity_surface(x[i], temp[i])?;
            let dh_ads = self.params.enthalpy_adsorption(x[i], temp[i])?;
            let evaporation = self.params.beta * (self.params.rho_inf - rho_surface);
            let gamma_x = evaporation / self.params.rho_d;
            let gamma_t = -self.params.alpha * temp[i] + dh_ads * evaporation;
            drift[i] += faces * gamma_x / h;
            drift[n + i] += faces * gamma_t / h;
            input_map[n + i] = faces * self.params.alpha / h;
        }

        // Non-conservative form: the heat divergence of every cell is scaled
        // by its own volumetric heat capacity.
        for i in 0..n {
            drift[n + i] /= ws.heat_capacity[i];
            input_map[n + i] /= ws.heat_capacity[i];
        }
        Ok(d_max)
    }

    /// Full right-hand side `f(z) + g(z) u`.
    pub fn rhs(&self, z: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        let mut ws = FomWorkspace::new(&self.grid);
        let mut drift = DVector::zeros(z.len());
        let mut input_map = DVector::zeros(z.len());
        self.rhs_split(z, &mut ws, &mut drift, &mut input_map)?;
        drift.axpy(u, &input_map, 1.0);
        Ok(drift)
    }

    /// The input map `g(z)` alone.
    pub fn input_map(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let mut ws = FomWorkspace::new(&self.grid);
        let mut drift = DVector::zeros(z.len());
        let mut input_map = DVector::zeros(z.len());
        self.rhs_split(z, &mut ws, &mut drift, &mut input_map)?;
        Ok(input_map)
    }

    /// Stability bound on the explicit Euler step at state `z` [s]:
    /// `safety * h^2 / (6 D_max)` with `D_max` the largest cell diffusivity
    /// (vapor diffusivities and heat diffusivities `lambda / s`).
    pub fn stable_dt(&self, z: &DVector<f64>) -> Result<f64> {
        let mut ws = FomWorkspace::new(&self.grid);
        let mut drift = DVector::zeros(z.len());
        let mut input_map = DVector::zeros(z.len());
        let d_max = self.rhs_split(z, &mut ws, &mut drift, &mut input_map)?;
        Ok(self.bound_from_d_max(d_max))
    }

    fn bound_from_d_max(&self, d_max: f64) -> f64 {
        if d_max <= 0.0 {
            return f64::INFINITY;
        }
        self.cfl_safety * self.grid.h * self.grid.h / (6.0 * d_max)
    }

    /// Default fixed step for a run.
    ///
    /// The diffusive bound alone is not enough: the surface transfer laws
    /// have their own Jacobian rates (evaporative cooling of a hot surface,
    /// the steep humidity slope of nearly dry wood) that can exceed the
    /// diffusive rate by an order of magnitude. The step is therefore
    /// 0.9 / (diffusive rate + boundary rate), both evaluated over the worst
    /// combination of states the run can reach: moisture between 0 and the
    /// initial maximum, temperatures up to the largest of initial state and
    /// ambient signal. Evaluating only at `z0` would let a heating run walk
    /// out of its own initial bound mid-run.
    pub fn default_dt(&self, z0: &DVector<f64>, ambient: &Ambient) -> Result<f64> {
        self.check_state_len(z0)?;
        let n = self.grid.num_cells();
        let x = &z0.as_slice()[..n];
        let temp = &z0.as_slice()[n..];
        let x_max = x.iter().cloned().fold(0.0f64, f64::max);
        let t_max = temp
            .iter()
            .cloned()
            .fold(ambient.max_value(), f64::max)
            .max(1.0);
        let mut d_max = 0.0f64;
        let samples = 128;
        for step in 0..=samples {
            let xi = x_max * step as f64 / samples as f64;
            let s = self.params.heat_capacity_volumetric(xi)?;
            let lambda = self.params.heat_conductivity(xi)?;
            for axis in 0..3 {
                d_max = d_max.max(lambda[axis] / s);
            }
        }
        let delta = self.params.mass_diffusivity(t_max)?;
        for axis in 0..3 {
            d_max = d_max.max(delta[axis]);
        }
        let diffusive_rate = 6.0 * d_max / (self.grid.h * self.grid.h);
        let boundary_rate = self.boundary_rate_bound(x_max, t_max)?;
        let total_rate = diffusive_rate / self.cfl_safety + boundary_rate;
        if !(total_rate > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "dt",
                reason: "no transport at all; pass an explicit time step",
                value: 0.0,
            });
        }
        Ok(0.9 / total_rate)
    }

    /// Largest spectral rate of the per-cell boundary-law Jacobian over a
    /// scan of reachable (x, T) pairs [1/s]. Partial derivatives are taken
    /// numerically; the off-diagonal coupling enters through the geometric
    /// mean, which is invariant under rescaling of the two state units.
    fn boundary_rate_bound(&self, x_max: f64, t_max: f64) -> Result<f64> {
        let max_faces = self
            .grid
            .boundary_cells()
            .iter()
            .map(|&(_, c)| c)
            .fold(0.0f64, f64::max);
        if max_faces == 0.0 || (self.params.alpha == 0.0 && self.params.beta == 0.0) {
            return Ok(0.0);
        }
        let h = self.grid.h;
        let p = &self.params;
        let t_eval = t_max.min(crate::material::TEMPERATURE_WINDOW.1 - 1.0);
        let dx = 1.0e-7;
        let dt_probe = 1.0e-3;
        // Rates of the moisture and temperature surface laws per unit area,
        // scaled to cell rates by faces / h (and 1/s for temperature).
        let moisture_rate = |x: f64, t: f64| -> Result<f64> {
            Ok(p.beta / p.rho_d * (p.rho_inf - p.abs_humidity_surface(x, t)?))
        };
        let heat_rate = |x: f64, t: f64| -> Result<f64> {
            let gamma = -p.alpha * t
                + p.enthalpy_adsorption(x, t)?
                    * p.beta
                    * (p.rho_inf - p.abs_humidity_surface(x, t)?);
            Ok((gamma + p.alpha * t_eval) / p.heat_capacity_volumetric(x)?)
        };
        let samples = 128;
        let mut rate = 0.0f64;
        for step in 0..=samples {
            let x = x_max * step as f64 / samples as f64;
            let x_lo = (x - dx).max(0.0);
            let x_hi = x + dx;
            let j_xx = (moisture_rate(x_hi, t_eval)? - moisture_rate(x_lo, t_eval)?)
                / (x_hi - x_lo);
            let j_xt = (moisture_rate(x, t_eval)? - moisture_rate(x, t_eval - dt_probe)?)
                / dt_probe;
            let j_tx =
                (heat_rate(x_hi, t_eval)? - heat_rate(x_lo, t_eval)?) / (x_hi - x_lo);
            let j_tt = (heat_rate(x, t_eval)? - heat_rate(x, t_eval - dt_probe)?) / dt_probe;
            let point = j_xx.abs().max(j_tt.abs()) + 2.0 * (j_xt * j_tx).abs().sqrt();
            rate = rate.max(point * max_faces / h);
        }
        Ok(rate)
    }

    /// One explicit Euler step. `d_max` must come from the `rhs_split` call
    /// that produced `drift`/`input_map` so the step is validated against
    /// the bound of its own state.
    fn apply_step(
        &self,
        z: &mut DVector<f64>,
        drift: &DVector<f64>,
        input_map: &DVector<f64>,
        u: f64,
        dt: f64,
        d_max: f64,
        time: f64,
        warnings: &mut Vec<String>,
    ) -> Result<()> {
        let bound = self.bound_from_d_max(d_max);
        if dt > bound {
            match self.cfl_policy {
                CflPolicy::Abort => {
                    return Err(CoreError::UnstableStep {
                        dt,
                        bound,
                        time,
                    })
                }
                CflPolicy::Warn => {
                    if warnings.len() < 8 {
                        warnings.push(format!(
                            "step {dt} s exceeds stability bound {bound} s at t = {time} s"
                        ));
                    }
                }
            }
        }
        z.axpy(dt, drift, 1.0);
        z.axpy(dt * u, input_map, 1.0);
        Ok(())
    }

    /// Public single-step helper used by tests and by callers that manage
    /// their own loops.
    pub fn step_explicit_euler(&self, z: &DVector<f64>, u: f64, dt: f64) -> Result<DVector<f64>> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "dt",
                reason: "time step must be finite and nonnegative",
                value: dt,
            });
        }
        let mut ws = FomWorkspace::new(&self.grid);
        let mut drift = DVector::zeros(z.len());
        let mut input_map = DVector::zeros(z.len());
        let d_max = self.rhs_split(z, &mut ws, &mut drift, &mut input_map)?;
        let mut next = z.clone();
        let mut warnings = Vec::new();
        self.apply_step(
            &mut next,
            &drift,
            &input_map,
            u,
            dt,
            d_max,
            0.0,
            &mut warnings,
        )?;
        check_finite(&next, 0.0, "explicit Euler step")?;
        Ok(next)
    }

    /// Fixed-step simulation with snapshot recording.
    pub fn simulate(
        &self,
        z0: &DVector<f64>,
        ambient: &Ambient,
        options: &SimOptions,
    ) -> Result<SimResult> {
        self.check_state_len(z0)?;
        if !(options.horizon > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "horizon",
                reason: "must be strictly positive",
                value: options.horizon,
            });
        }
        let (dt, steps) = match options.dt {
            Some(dt) if dt > 0.0 => (dt, (options.horizon / dt - 1e-12).ceil().max(1.0) as usize),
            Some(dt) => {
                return Err(CoreError::InvalidParameter {
                    name: "dt",
                    reason: "time step must be strictly positive",
                    value: dt,
                })
            }
            None => {
                let raw = self.default_dt(z0, ambient)?;
                let steps = (options.horizon / raw).ceil().max(1.0) as usize;
                (options.horizon / steps as f64, steps)
            }
        };
        let record = snapshot_steps(steps, options.snapshots)?;

        let mut z = z0.clone();
        let mut ws = FomWorkspace::new(&self.grid);
        let mut drift = DVector::zeros(z.len());
        let mut input_map = DVector::zeros(z.len());
        let mut warnings = Vec::new();
        let mut snapshots = SnapshotSet {
            times: Vec::with_capacity(record.len()),
            states: Vec::with_capacity(record.len()),
        };
        let mut xt = Series::default();
        let mut next_record = 0usize;
        let mut stopped_at_steady = false;
        let mut steps_taken = 0usize;

        for step in 0..=steps {
            let t = step as f64 * dt;
            if next_record < record.len() && record[next_record] == step {
                snapshots.times.push(t);
                snapshots.states.push(z.clone());
                next_record += 1;
            }
            xt.times.push(t);
            xt.values.push(self.grid.total_moisture(&z)?);
            if step == steps {
                break;
            }
            let u = ambient.value(t);
            let d_max = self.rhs_split(&z, &mut ws, &mut drift, &mut input_map)?;
            if let Some(tol) = options.steady_tol {
                let residual = rhs_sup_norm(&drift, &input_map, u);
                if residual < tol {
                    stopped_at_steady = true;
                    break;
                }
            }
            self.apply_step(&mut z, &drift, &input_map, u, dt, d_max, t, &mut warnings)?;
            check_finite(&z, t + dt, "simulation step")?;
            steps_taken += 1;
        }

        let final_time = steps_taken as f64 * dt;
        Ok(SimResult {
            snapshots,
            total_moisture: xt,
            final_state: z.clone(),
            final_time,
            steps_taken,
            stopped_at_steady,
            warnings,
        })
    }

    /// Marches to the steady state under constant ambient `u0` with the
    /// conservative default step for that scenario.
    pub fn steady_state(
        &self,
        z0: &DVector<f64>,
        u0: f64,
        tol: f64,
        max_steps: usize,
    ) -> Result<DVector<f64>> {
        self.check_state_len(z0)?;
        let dt = self
            .default_dt(z0, &Ambient::Constant(u0))?
            .min(1.0e6);
        let mut z = z0.clone();
        let mut ws = FomWorkspace::new(&self.grid);
        let mut drift = DVector::zeros(z.len());
        let mut input_map = DVector::zeros(z.len());
        let mut residual = f64::INFINITY;
        for step in 0..max_steps {
            self.rhs_split(&z, &mut ws, &mut drift, &mut input_map)?;
            residual = rhs_sup_norm(&drift, &input_map, u0);
            if residual < tol {
                return Ok(z);
            }
            z.axpy(dt, &drift, 1.0);
            z.axpy(dt * u0, &input_map, 1.0);
            check_finite(&z, step as f64 * dt, "steady-state march")?;
        }
        Err(CoreError::NoConvergence {
            what: "steady-state march",
            steps: max_steps,
            residual,
        })
    }

    /// Response to an impulse of magnitude `h_d` [K s] on the ambient
    /// temperature, starting from the steady state `z_ss` under `u0`.
    pub fn impulse_response(
        &self,
        z_ss: &DVector<f64>,
        u0: f64,
        h_d: f64,
        kind: ImpulseKind,
        options: &SimOptions,
    ) -> Result<SimResult> {
        match kind {
            ImpulseKind::StateJump => {
                let jump = self.impulse_jump(z_ss, h_d)?;
                self.simulate(&jump, &Ambient::Constant(u0), options)
            }
            ImpulseKind::RectPulse { width } => {
                if !(width > 0.0) {
                    return Err(CoreError::InvalidParameter {
                        name: "width",
                        reason: "pulse width must be strictly positive",
                        value: width,
                    });
                }
                let ambient = Ambient::Steps {
                    dt: width,
                    values: vec![u0 + h_d / width, u0],
                };
                self.simulate(z_ss, &ambient, options)
            }
        }
    }

    /// The jumped state `z_ss + g(z_ss) h_d`.
    pub fn impulse_jump(&self, z_ss: &DVector<f64>, h_d: f64) -> Result<DVector<f64>> {
        let g = self.input_map(z_ss)?;
        let mut jumped = z_ss.clone();
        jumped.axpy(h_d, &g, 1.0);
        Ok(jumped)
    }
}

fn face_value(mean: FaceMean, a: f64, b: f64) -> f64 {
    match mean {
        FaceMean::Harmonic => {
            let sum = a + b;
            if sum <= 0.0 {
                0.0
            } else {
                2.0 * a * b / sum
            }
        }
        FaceMean::Arithmetic => 0.5 * (a + b),
    }
}

fn rhs_sup_norm(drift: &DVector<f64>, input_map: &DVector<f64>, u: f64) -> f64 {
    drift
        .iter()
        .zip(input_map.iter())
        .map(|(f, g)| (f + g * u).abs())
        .fold(0.0, f64::max)
}

fn check_finite(z: &DVector<f64>, time: f64, context: &'static str) -> Result<()> {
    for (i, v) in z.iter().enumerate() {
        if !v.is_finite() {
            return Err(CoreError::NonFinite {
                context,
                time,
                index: i,
                detail: "state entry is NaN or infinite",
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialParams;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Moisture content whose surface humidity equals the ambient humidity,
    /// found by bisection on the scalar equilibrium equation. Test oracle,
    /// independent of the time-marching path it checks.
    fn equilibrium_moisture(params: &MaterialParams, temperature: f64) -> f64 {
        let x_fsp = params.fiber_saturation(temperature).unwrap();
        let mut lo = 0.0f64;
        let mut hi = x_fsp;
        assert!(params.abs_humidity_surface(hi, temperature).unwrap() > params.rho_inf);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if params.abs_humidity_surface(mid, temperature).unwrap() < params.rho_inf {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Parameters rescaled so that transport time scales suit a small chip
    /// and explicit integration; values are arbitrary but stable.
    fn scaled_params() -> MaterialParams {
        MaterialParams {
            diffusivity_scale_mass: 2.0e-7,
            ..MaterialParams::default()
        }
    }

    fn small_system() -> FomSystem {
        FomSystem::new(Grid::new(4, 4, 3, 1.0e-3).unwrap(), scaled_params()).unwrap()
    }

    #[test]
    fn uniform_equilibrium_state_has_zero_rhs() {
        let sys = small_system();
        let u0 = 310.0;
        let x_eq = equilibrium_moisture(&sys.params, u0);
        let z = sys.grid.uniform_state(x_eq, u0);
        let rhs = sys.rhs(&z, u0).unwrap();
        assert!(rhs.amax() < 1.0e-10, "rhs sup norm {}", rhs.amax());
    }

    #[test]
    fn two_cell_fluxes_match_hand_assembly() {
        let grid = Grid::new(2, 1, 1, 1.0e-3).unwrap();
        let mut params = scaled_params();
        params.alpha = 0.0;
        params.beta = 0.0;
        let sys = FomSystem::new(grid, params.clone()).unwrap();
        let mut z = sys.grid.uniform_state(0.0, 293.15);
        let (x0, x1) = (0.3, 0.5);
        let (t0, t1) = (300.0, 320.0);
        z[0] = x0;
        z[1] = x1;
        z[2] = t0;
        z[3] = t1;
        let rhs = sys.rhs(&z, 999.0).unwrap();

        let h = sys.grid.h;
        let d0 = params.mass_diffusivity(t0).unwrap()[0];
        let d1 = params.mass_diffusivity(t1).unwrap()[0];
        let d_face = 2.0 * d0 * d1 / (d0 + d1);
        let expected_x = d_face * (x1 - x0) / (h * h);
        assert_relative_eq!(rhs[0], expected_x, max_relative = 1e-13);
        assert_relative_eq!(rhs[1], -expected_x, max_relative = 1e-13);

        let l0 = params.heat_conductivity(x0).unwrap()[0];
        let l1 = params.heat_conductivity(x1).unwrap()[0];
        let l_face = 2.0 * l0 * l1 / (l0 + l1);
        let s0 = params.heat_capacity_volumetric(x0).unwrap();
        let s1 = params.heat_capacity_volumetric(x1).unwrap();
        assert_relative_eq!(rhs[2], l_face * (t1 - t0) / (h * h) / s0, max_relative = 1e-13);
        assert_relative_eq!(rhs[3], -l_face * (t1 - t0) / (h * h) / s1, max_relative = 1e-13);

        // With a single face the two moisture rates mirror bitwise.
        assert_eq!(rhs[0].to_bits(), (-rhs[1]).to_bits());
    }

    #[test]
    fn arithmetic_face_mean_is_selectable() {
        let grid = Grid::new(2, 1, 1, 1.0e-3).unwrap();
        let mut params = scaled_params();
        params.alpha = 0.0;
        params.beta = 0.0;
        let sys = FomSystem::new(grid, params.clone())
            .unwrap()
            .with_face_mean(FaceMean::Arithmetic);
        let mut z = sys.grid.uniform_state(0.2, 293.15);
        z[3] = 353.15;
        let rhs = sys.rhs(&z, 0.0).unwrap();
        let d0 = params.mass_diffusivity(293.15).unwrap()[0];
        let d1 = params.mass_diffusivity(353.15).unwrap()[0];
        let h = sys.grid.h;
        assert_abs_diff_eq!(rhs[0], 0.0);
        let l = params.heat_conductivity(0.2).unwrap()[0];
        let s = params.heat_capacity_volumetric(0.2).unwrap();
        assert_relative_eq!(
            rhs[2],
            l * (353.15 - 293.15) / (h * h) / s,
            max_relative = 1e-13
        );
        // The arithmetic mean differs from the harmonic one on the
        // temperature-dependent moisture diffusivity.
        let harmonic = 2.0 * d0 * d1 / (d0 + d1);
        assert!(0.5 * (d0 + d1) > harmonic);
    }

    #[test]
    fn rhs_is_input_affine() {
        let sys = small_system();
        let mut z = sys.grid.uniform_state(0.6, 305.0);
        let n = sys.grid.num_cells();
        for i in 0..n {
            z[i] += 0.01 * (i % 7) as f64;
            z[n + i] += 0.5 * (i % 5) as f64;
        }
        let (u1, u2) = (298.15, 373.15);
        let r1 = sys.rhs(&z, u1).unwrap();
        let r2 = sys.rhs(&z, u2).unwrap();
        let g = sys.input_map(&z).unwrap();
        let mut expected = g.clone() * (u1 - u2);
        expected -= &r1;
        expected += &r2;
        assert!(expected.amax() < 1e-9, "affinity defect {}", expected.amax());
        // g vanishes on the moisture block and on interior cells.
        for i in 0..n {
            assert_eq!(g[i], 0.0);
            let interior = sys.grid.boundary_face_count(i) == 0;
            assert_eq!(g[n + i] == 0.0, interior);
        }
    }

    #[test]
    fn stable_dt_scales_with_diffusivity_and_h() {
        let params = scaled_params();
        let grid = Grid::new(4, 4, 4, 1.0e-3).unwrap();
        let sys = FomSystem::new(grid, params.clone()).unwrap();
        let z = sys.grid.uniform_state(0.8, 323.15);
        let dt = sys.stable_dt(&z).unwrap();

        // Make the vapor diffusivity dominant, then double it.
        let mut dominant = params.clone();
        dominant.diffusivity_scale_mass = 1.0e-5;
        let sys_dom =
            FomSystem::new(Grid::new(4, 4, 4, 1.0e-3).unwrap(), dominant.clone()).unwrap();
        let dt_dom = sys_dom.stable_dt(&z).unwrap();
        let mut doubled = dominant.clone();
        doubled.diffusivity_scale_mass *= 2.0;
        let sys_double = FomSystem::new(Grid::new(4, 4, 4, 1.0e-3).unwrap(), doubled).unwrap();
        assert_relative_eq!(
            sys_double.stable_dt(&z).unwrap(),
            dt_dom / 2.0,
            max_relative = 1e-12
        );

        // Doubling h quadruples the bound.
        let sys_coarse = FomSystem::new(Grid::new(4, 4, 4, 2.0e-3).unwrap(), params).unwrap();
        assert_relative_eq!(sys_coarse.stable_dt(&z).unwrap(), 4.0 * dt, max_relative = 1e-12);

        // Textbook value against the dominant diffusivity.
        let delta = dominant.mass_diffusivity(323.15).unwrap()[0];
        assert_relative_eq!(
            dt_dom,
            0.9 * 1.0e-6 / (6.0 * delta),
            max_relative = 1e-12
        );
    }

    #[test]
    fn simulate_dries_monotonically_and_is_deterministic() {
        let sys = small_system();
        let z0 = sys.grid.uniform_state(0.8, 298.15);
        let options = SimOptions {
            dt: None,
            horizon: 400.0,
            snapshots: 11,
            steady_tol: None,
        };
        let run = sys.simulate(&z0, &Ambient::Constant(373.15), &options).unwrap();
        assert_eq!(run.snapshots.len(), 11);
        assert_eq!(run.snapshots.times[0], 0.0);
        assert_relative_eq!(run.snapshots.times[10], run.final_time, max_relative = 1e-12);
        let x = &run.total_moisture.values;
        assert!(x.windows(2).all(|w| w[1] <= w[0] + 1e-15), "X(t) not monotone");
        assert!(x[x.len() - 1] < 0.8);

        let rerun = sys.simulate(&z0, &Ambient::Constant(373.15), &options).unwrap();
        for (a, b) in run.final_state.iter().zip(rerun.final_state.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        // A cooler ambient dries more slowly at matching times. Pin the step
        // so both runs share one time grid.
        let dt = sys.default_dt(&z0, &Ambient::Constant(373.15)).unwrap();
        let shared = SimOptions { dt: Some(dt), ..options };
        let hot_run = sys.simulate(&z0, &Ambient::Constant(373.15), &shared).unwrap();
        let cooler = sys.simulate(&z0, &Ambient::Constant(335.65), &shared).unwrap();
        for (hot, cool) in hot_run
            .total_moisture
            .values
            .iter()
            .zip(cooler.total_moisture.values.iter())
            .skip(1)
        {
            assert!(cool >= hot, "cooler run dried faster");
        }
    }

    #[test]
    fn simulate_from_equilibrium_stays_flat() {
        let sys = small_system();
        let u0 = 320.0;
        let x_eq = equilibrium_moisture(&sys.params, u0);
        let z0 = sys.grid.uniform_state(x_eq, u0);
        let run = sys
            .simulate(
                &z0,
                &Ambient::Constant(u0),
                &SimOptions {
                    dt: None,
                    horizon: 200.0,
                    snapshots: 5,
                    steady_tol: None,
                },
            )
            .unwrap();
        let x = &run.total_moisture.values;
        assert_abs_diff_eq!(x[x.len() - 1], x[0], epsilon = 1e-12);
    }

    #[test]
    fn conservation_with_sealed_surface() {
        let grid = Grid::new(5, 5, 5, 1.0e-3).unwrap();
        let mut params = scaled_params();
        params.alpha = 0.0;
        params.beta = 0.0;
        let sys = FomSystem::new(grid, params).unwrap();
        let n = sys.grid.num_cells();
        let mut z = sys.grid.uniform_state(0.4, 300.0);
        for i in 0..n {
            let (ci, cj, ck) = sys.grid.coords(i).unwrap();
            z[i] = 0.4 + 0.2 * ((ci as f64 * 0.7).sin() * (cj as f64 * 0.4).cos())
                + 0.05 * ck as f64;
            z[n + i] = 300.0 + 10.0 * (ci as f64 - 2.0) / 2.0;
        }
        let x0 = sys.grid.total_moisture(&z).unwrap();
        let dt = 0.9 * sys.stable_dt(&z).unwrap();
        let mut ws = FomWorkspace::new(&sys.grid);
        let mut drift = DVector::zeros(z.len());
        let mut input_map = DVector::zeros(z.len());
        for _ in 0..10_000 {
            sys.rhs_split(&z, &mut ws, &mut drift, &mut input_map).unwrap();
            z.axpy(dt, &drift, 1.0);
        }
        let x_end = sys.grid.total_moisture(&z).unwrap();
        assert!(
            ((x_end - x0) / x0).abs() < 1e-12,
            "moisture drift {:e}",
            (x_end - x0) / x0
        );
        // The input map vanishes entirely with alpha = 0.
        assert_eq!(input_map.amax(), 0.0);
    }

    #[test]
    fn refinement_halving_h_quarters_the_error() {
        // One-dimensional diffusion of a cosine mode with sealed ends; the
        // cell-centered cosine is an exact eigenvector of the discrete
        // operator, so the error is pure eigenvalue defect, O(h^2).
        let length = 0.01f64;
        let diffusivity = 1.0e-6f64;
        let wavenumber = std::f64::consts::PI / length;
        let t_end = 0.5 / (diffusivity * wavenumber * wavenumber);
        let steps = 200_000usize;
        let dt = t_end / steps as f64;

        let mut errors = Vec::new();
        for cells in [8usize, 16] {
            let h = length / cells as f64;
            let grid = Grid::new(cells, 1, 1, h).unwrap();
            let mut params = MaterialParams::default();
            params.alpha = 0.0;
            params.beta = 0.0;
            params.delta_d = [diffusivity, diffusivity, diffusivity];
            params.diffusivity_scale_mass = 1.0;
            let sys = FomSystem::new(grid, params).unwrap();
            let mut z = sys.grid.uniform_state(0.0, 293.15);
            for i in 0..cells {
                let y = (i as f64 + 0.5) * h;
                z[i] = 1.0 + 0.5 * (wavenumber * y).cos();
            }
            let mut ws = FomWorkspace::new(&sys.grid);
            let mut drift = DVector::zeros(z.len());
            let mut input_map = DVector::zeros(z.len());
            for _ in 0..steps {
                sys.rhs_split(&z, &mut ws, &mut drift, &mut input_map).unwrap();
                z.axpy(dt, &drift, 1.0);
            }
            let decay = (-diffusivity * wavenumber * wavenumber * t_end).exp();
            let error = (0..cells)
                .map(|i| {
                    let y = (i as f64 + 0.5) * h;
                    let exact = 1.0 + 0.5 * decay * (wavenumber * y).cos();
                    (z[i] - exact).abs()
                })
                .fold(0.0f64, f64::max);
            errors.push(error);
        }
        let ratio = errors[0] / errors[1];
        assert!(
            (3.8..=4.2).contains(&ratio),
            "refinement ratio {ratio}, errors {errors:?}"
        );
    }

    #[test]
    fn steady_state_march_matches_scalar_equilibrium() {
        let sys = small_system();
        let u0 = 340.0;
        let z0 = sys.grid.uniform_state(0.5, 310.0);
        let z_ss = sys.steady_state(&z0, u0, 1.0e-10, 3_000_000).unwrap();
        let x_expected = equilibrium_moisture(&sys.params, u0);
        let n = sys.grid.num_cells();
        for i in 0..n {
            assert_abs_diff_eq!(z_ss[i], x_expected, epsilon = 1e-6);
            assert_abs_diff_eq!(z_ss[n + i], u0, epsilon = 1e-6);
        }
        // Starting at the steady state returns immediately.
        let again = sys.steady_state(&z_ss, u0, 1.0e-10, 5).unwrap();
        for (a, b) in again.iter().zip(z_ss.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn impulse_jump_hits_only_boundary_temperatures() {
        let sys = small_system();
        let u0 = 315.0;
        let z_ss = sys
            .steady_state(&sys.grid.uniform_state(0.4, u0), u0, 1.0e-9, 3_000_000)
            .unwrap();
        let jumped = sys.impulse_jump(&z_ss, 4.0).unwrap();
        let n = sys.grid.num_cells();
        for i in 0..n {
            assert_eq!(jumped[i], z_ss[i], "moisture must not jump");
            let moved = jumped[n + i] != z_ss[n + i];
            assert_eq!(moved, sys.grid.boundary_face_count(i) > 0);
        }
        // Doubling the magnitude doubles the jump. The deltas pass through
        // one rounded addition each, so allow a few ulps of the base state.
        let j1 = sys.impulse_jump(&z_ss, 2.0).unwrap();
        let j2 = sys.impulse_jump(&z_ss, 4.0).unwrap();
        for i in 0..2 * n {
            let twice = 2.0 * (j1[i] - z_ss[i]);
            let once = j2[i] - z_ss[i];
            assert_abs_diff_eq!(twice, once, epsilon = 8.0 * f64::EPSILON * z_ss[i].abs());
        }
        // Zero magnitude reproduces the relaxation from the steady state.
        let j0 = sys.impulse_jump(&z_ss, 0.0).unwrap();
        for i in 0..2 * n {
            assert_eq!(j0[i].to_bits(), z_ss[i].to_bits());
        }
    }

    #[test]
    fn rect_pulse_approaches_state_jump() {
        let sys = small_system();
        let u0 = 315.0;
        let z_ss = sys
            .steady_state(&sys.grid.uniform_state(0.4, u0), u0, 1.0e-9, 3_000_000)
            .unwrap();
        let h_d = 2.0;
        let dt = 0.05 * sys.stable_dt(&z_ss).unwrap();
        let options = SimOptions {
            dt: Some(dt),
            horizon: 60.0,
            snapshots: 13,
            steady_tol: None,
        };
        let jump = sys
            .impulse_response(&z_ss, u0, h_d, ImpulseKind::StateJump, &options)
            .unwrap();
        let pulse = sys
            .impulse_response(
                &z_ss,
                u0,
                h_d,
                ImpulseKind::RectPulse { width: dt },
                &options,
            )
            .unwrap();
        // Compare responses after the pulse has ended; they agree to O(dt).
        let jump_mag = (&jump.snapshots.states[1] - &z_ss).amax();
        assert!(jump_mag > 0.0);
        for s in 2..jump.snapshots.len() {
            let diff = (&jump.snapshots.states[s] - &pulse.snapshots.states[s]).amax();
            assert!(
                diff < 0.1 * jump_mag,
                "pulse and jump diverge: {diff} vs magnitude {jump_mag}"
            );
        }
    }

    #[test]
    fn blowup_is_reported_with_diagnostics() {
        let sys = FomSystem::new(Grid::new(3, 3, 3, 1.0e-3).unwrap(), scaled_params())
            .unwrap()
            .with_cfl_policy(CflPolicy::Warn);
        let z0 = sys.grid.uniform_state(0.8, 298.15);
        let result = sys.simulate(
            &z0,
            &Ambient::Constant(373.15),
            &SimOptions {
                dt: Some(5.0e4),
                horizon: 5.0e6,
                snapshots: 2,
                steady_tol: None,
            },
        );
        match result {
            Err(CoreError::NonFinite { .. }) | Err(CoreError::Domain { .. }) => {}
            other => panic!("expected a numerical failure, got {other:?}"),
        }

        let strict = sys.clone().with_cfl_policy(CflPolicy::Abort);
        let bound = strict.stable_dt(&z0).unwrap();
        let result = strict.simulate(
            &z0,
            &Ambient::Constant(373.15),
            &SimOptions {
                dt: Some(bound * 1.5),
                horizon: bound * 30.0,
                snapshots: 2,
                steady_tol: None,
            },
        );
        assert!(matches!(result, Err(CoreError::UnstableStep { .. })));
    }

    #[test]
    fn ambient_schedule_lookup() {
        let schedule = Ambient::Steps {
            dt: 1.0,
            values: vec![300.0, 310.0, 320.0],
        };
        assert_eq!(schedule.value(0.0), 300.0);
        assert_eq!(schedule.value(0.999), 300.0);
        assert_eq!(schedule.value(1.0), 310.0);
        assert_eq!(schedule.value(2.5), 320.0);
        assert_eq!(schedule.value(99.0), 320.0);
        assert_eq!(schedule.max_value(), 320.0);
    }

    #[test]
    fn snapshot_steps_cover_endpoints() {
        assert_eq!(snapshot_steps(900, 4).unwrap(), vec![0, 300, 600, 900]);
        let idx = snapshot_steps(847, 100).unwrap();
        assert_eq!(idx.len(), 100);
        assert_eq!(idx[0], 0);
        assert_eq!(idx[99], 847);
        assert!(idx.windows(2).all(|w| w[1] > w[0]));
        assert!(snapshot_steps(5, 100).is_err());
        assert!(snapshot_steps(100, 1).is_err());
    }
}
