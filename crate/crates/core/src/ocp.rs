//! Energy-optimal heating schedules on the reduced model.
//!
//! The control is the ambient temperature, held piecewise constant over
//! uniform intervals. The cost is the heating effort above a reference
//! temperature, subject to box bounds on every entry and a terminal bound
//! on the lifted total moisture. The solver combines an augmented
//! Lagrangian on the terminal constraint with projected gradient descent
//! on the box, using discrete adjoints of the explicit Euler rollout.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::fom::{Ambient, Series, SimOptions};
use crate::rom::{RomSystem, RomWorkspace};

/// Temperature whose cost contribution is zero [K].
pub const REFERENCE_TEMPERATURE: f64 = 298.15;

/// Hysteresis band around the mid-range threshold when extracting switch
/// times [K].
pub const SWITCH_HYSTERESIS: f64 = 1.0;

/// Relative finite-difference step for reduced Jacobians.
const JACOBIAN_STEP: f64 = 1.0e-6;

/// Armijo sufficient-decrease factor.
const ARMIJO_C1: f64 = 1.0e-4;

/// Most backtracking halvings per line search.
const MAX_BACKTRACKS: usize = 40;

/// Inner projected-gradient iteration budget per outer iteration.
const MAX_INNER: usize = 300;

/// Penalty weight schedule of the augmented Lagrangian.
const PENALTY_INITIAL: f64 = 1.0e3;
const PENALTY_GROWTH: f64 = 10.0;
const PENALTY_CAP: f64 = 1.0e9;

/// Outer augmented-Lagrangian iteration budget.
const MAX_OUTER: usize = 12;

/// Sensitivity-ranking rounds of the bang-bang refinement.
const POLISH_ROUNDS: usize = 3;

/// Terminal-constraint tolerance [kg/kg].
pub const CONSTRAINT_TOL: f64 = 1.0e-4;

/// Box and horizon of the heating problem.
#[derive(Debug, Clone, Copy)]
pub struct OcpSettings {
    /// Horizon [s].
    pub horizon: f64,
    /// Number of zero-order-hold entries.
    pub steps: usize,
    /// Lower input bound [K].
    pub u_min: f64,
    /// Upper input bound [K].
    pub u_max: f64,
    /// Terminal bound on lifted total moisture [kg/kg].
    pub terminal_moisture: f64,
}

impl Default for OcpSettings {
    fn default() -> Self {
        OcpSettings {
            horizon: 600.0,
            steps: 600,
            u_min: 298.15,
            u_max: 373.15,
            terminal_moisture: 0.1,
        }
    }
}

/// Zero-order-hold control schedule, one entry per hold interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub values: Vec<f64>,
}

impl ControlSchedule {
    pub fn constant(steps: usize, u: f64) -> Self {
        ControlSchedule {
            values: vec![u; steps],
        }
    }
}

/// Augmented-Lagrangian state for the terminal inequality.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyState {
    /// Quadratic weight.
    pub weight: f64,
    /// Lagrange multiplier estimate.
    pub multiplier: f64,
}

impl PenaltyState {
    pub fn off() -> Self {
        PenaltyState {
            weight: 0.0,
            multiplier: 0.0,
        }
    }

    /// Penalty value for constraint residual `g` (positive = violated).
    fn value(&self, g: f64) -> f64 {
        if self.weight == 0.0 {
            return self.multiplier * g.max(0.0);
        }
        if self.multiplier + self.weight * g > 0.0 {
            self.multiplier * g + 0.5 * self.weight * g * g
        } else {
            -self.multiplier * self.multiplier / (2.0 * self.weight)
        }
    }

    /// Derivative of the penalty with respect to `g`.
    fn slope(&self, g: f64) -> f64 {
        (self.multiplier + self.weight * g).max(0.0)
    }
}

/// Forward trajectory of one schedule.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// Coefficient states at every Euler substep, `steps·substeps + 1` long.
    pub states: Vec<DVector<f64>>,
    /// Lifted total moisture at every substep [kg/kg].
    pub total_moisture: Series,
    /// Lifted total moisture at the final time [kg/kg].
    pub terminal_moisture: f64,
}

/// Gradient evaluation bundle.
#[derive(Debug, Clone)]
pub struct GradientInfo {
    /// d(augmented objective)/du, one entry per hold interval.
    pub gradient: DVector<f64>,
    /// Heating cost of the schedule [K s].
    pub cost: f64,
    /// Augmented objective.
    pub augmented: f64,
    /// Terminal lifted total moisture [kg/kg].
    pub terminal_moisture: f64,
}

/// Per-start solver provenance.
#[derive(Debug, Clone, Copy)]
pub struct StartReport {
    /// Constant start level [K].
    pub start_value: f64,
    pub cost: f64,
    pub violation: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
}

/// Solution of the heating problem.
#[derive(Debug, Clone)]
pub struct OcpResult {
    pub schedule: ControlSchedule,
    /// Heating cost [K s]; recomputable exactly from the schedule.
    pub cost: f64,
    /// Terminal lifted total moisture on the reduced model [kg/kg].
    pub terminal_moisture: f64,
    /// Terminal-constraint violation max(0, X(t_f) − bound) [kg/kg].
    pub violation: f64,
    /// Times where the schedule crosses mid-range, with hysteresis [s].
    pub switch_points: Vec<f64>,
    /// Inner iterations spent on the winning start.
    pub iterations: usize,
    /// True when no start met both tolerances within the budgets.
    pub stagnated: bool,
    pub multistart: Vec<StartReport>,
    /// Index of the winning start.
    pub winner: usize,
}

/// Reduced-versus-full comparison of a schedule.
#[derive(Debug, Clone)]
pub struct FomComparison {
    /// Hold-boundary times 0, dt, .., horizon [s].
    pub times: Vec<f64>,
    pub rom_moisture: Vec<f64>,
    pub fom_moisture: Vec<f64>,
    pub terminal_mismatch: f64,
    pub max_abs_mismatch: f64,
    pub fom_terminal: f64,
    /// Whether the full model meets the terminal bound under the schedule.
    pub constraint_met_on_fom: bool,
}

/// One row of an order study.
#[derive(Debug, Clone)]
pub struct OrderStudyEntry {
    /// Reduced dimension.
    pub n: usize,
    pub cost: f64,
    pub terminal_moisture: f64,
    pub violation: f64,
    pub switch_points: Vec<f64>,
    pub iterations: usize,
    /// Solve wall time [s]; excluded from deterministic artifacts.
    pub wall_seconds: f64,
}

/// The discretized heating problem over a reduced model.
#[derive(Debug)]
pub struct OcpProblem<'a> {
    pub rom: &'a RomSystem,
    pub c0: DVector<f64>,
    pub settings: OcpSettings,
    /// Hold interval [s].
    dt: f64,
    /// Euler substeps per hold interval, chosen so the full-heating rollout
    /// agrees with its half-step refinement.
    substeps: usize,
}

impl<'a> OcpProblem<'a> {
    pub fn new(rom: &'a RomSystem, c0: DVector<f64>, settings: OcpSettings) -> Result<Self> {
        if c0.len() != rom.n() {
            return Err(CoreError::DimensionMismatch {
                context: "initial coefficients",
                expected: rom.n(),
                actual: c0.len(),
            });
        }
        if !(settings.horizon > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "horizon",
                reason: "must be strictly positive",
                value: settings.horizon,
            });
        }
        if settings.steps == 0 {
            return Err(CoreError::InvalidParameter {
                name: "steps",
                reason: "at least one hold interval is required",
                value: 0.0,
            });
        }
        if !(settings.u_min < settings.u_max) {
            return Err(CoreError::InvalidParameter {
                name: "u_min",
                reason: "lower bound must lie below the upper bound",
                value: settings.u_min,
            });
        }
        let dt = settings.horizon / settings.steps as f64;
        let mut problem = OcpProblem {
            rom,
            c0,
            settings,
            dt,
            substeps: 1,
        };
        // Smallest substep count whose rollout agrees with its half-step
        // refinement. Boundedness alone is not enough: an unstable Euler
        // march through the lift clamp can stay bounded while its total
        // moisture drifts far from the reduced dynamics.
        let full_heat = ControlSchedule::constant(settings.steps, settings.u_max);
        loop {
            let residual = match problem.rollout_agreement(&full_heat) {
                Ok(err) if err <= 0.0 => break,
                Ok(err) => err,
                Err(_) => f64::NAN,
            };
            if problem.substeps >= 64 {
                return Err(CoreError::NoConvergence {
                    what: "rollout substep refinement",
                    steps: problem.substeps,
                    residual,
                });
            }
            problem.substeps *= 2;
        }
        Ok(problem)
    }

    /// Compares the current-substep rollout against its half-step
    /// refinement at the hold boundaries. Returns a non-positive value on
    /// agreement, otherwise the excess over the tolerance.
    fn rollout_agreement(&self, schedule: &ControlSchedule) -> Result<f64> {
        let coarse = self.rollout_at(schedule, self.substeps)?;
        let fine = self.rollout_at(schedule, 2 * self.substeps)?;
        let holds = self.settings.steps;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..=holds {
            let x = fine.total_moisture.values[j * 2 * self.substeps];
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let tol = 1.0e-3 * (hi - lo) + 1.0e-7;
        let mut worst = 0.0f64;
        for j in 0..=holds {
            let coarse_x = coarse.total_moisture.values[j * self.substeps];
            let fine_x = fine.total_moisture.values[j * 2 * self.substeps];
            worst = worst.max((coarse_x - fine_x).abs());
        }
        Ok(worst - tol)
    }

    /// Hold interval [s].
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Euler substeps per hold interval.
    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Five constant profiles spanning the box, coolest first.
    pub fn default_starts(&self) -> Vec<f64> {
        (0..5)
            .map(|i| {
                self.settings.u_min
                    + (self.settings.u_max - self.settings.u_min) * i as f64 / 4.0
            })
            .collect()
    }

    fn check_schedule(&self, schedule: &ControlSchedule) -> Result<()> {
        if schedule.values.len() != self.settings.steps {
            return Err(CoreError::DimensionMismatch {
                context: "schedule entries",
                expected: self.settings.steps,
                actual: schedule.values.len(),
            });
        }
        Ok(())
    }

    /// Heating cost of a schedule: Σ (u_j − reference)·Δt [K s].
    pub fn evaluate_cost(&self, schedule: &ControlSchedule) -> Result<f64> {
        self.check_schedule(schedule)?;
        Ok(schedule
            .values
            .iter()
            .map(|u| (u - REFERENCE_TEMPERATURE) * self.dt)
            .sum())
    }

    /// Explicit Euler rollout under the zero-order-hold schedule.
    pub fn rollout(&self, schedule: &ControlSchedule) -> Result<Rollout> {
        self.rollout_at(schedule, self.substeps)
    }

    fn rollout_at(&self, schedule: &ControlSchedule, substeps: usize) -> Result<Rollout> {
        self.check_schedule(schedule)?;
        let h = self.dt / substeps as f64;
        let total = self.settings.steps * substeps;
        let mut ws = RomWorkspace::new(self.rom);
        let mut states = Vec::with_capacity(total + 1);
        let mut xt = Series {
            times: Vec::with_capacity(total + 1),
            values: Vec::with_capacity(total + 1),
        };
        let mut c = self.c0.clone();
        for s in 0..=total {
            xt.times.push(s as f64 * h);
            xt.values.push(self.rom.total_moisture(&c));
            states.push(c.clone());
            if s == total {
                break;
            }
            let u = schedule.values[s / substeps];
            let rate = self.rom.rhs(&c, u, &mut ws)?;
            c.axpy(h, &rate, 1.0);
            for (k, v) in c.iter().enumerate() {
                if !v.is_finite() {
                    return Err(CoreError::NonFinite {
                        context: "schedule rollout",
                        time: (s + 1) as f64 * h,
                        index: k,
                        detail: "coefficient is not finite",
                    });
                }
            }
        }
        let terminal_moisture = *xt.values.last().unwrap();
        Ok(Rollout {
            states,
            total_moisture: xt,
            terminal_moisture,
        })
    }

    /// Cost, augmented objective, and terminal moisture of a schedule.
    pub fn objective(
        &self,
        schedule: &ControlSchedule,
        penalty: &PenaltyState,
    ) -> Result<(f64, f64, f64)> {
        let roll = self.rollout(schedule)?;
        let cost = self.evaluate_cost(schedule)?;
        let g = roll.terminal_moisture - self.settings.terminal_moisture;
        Ok((cost, cost + penalty.value(g), roll.terminal_moisture))
    }

    /// Discrete adjoint gradient of the augmented objective.
    ///
    /// The rollout map is differentiated exactly as computed: one reduced
    /// Jacobian per Euler substep by forward differences with per-coordinate
    /// step `1e-6·max(1, |c_k|)`, transposed into the backward recursion.
    pub fn gradient(
        &self,
        schedule: &ControlSchedule,
        penalty: &PenaltyState,
    ) -> Result<GradientInfo> {
        self.check_schedule(schedule)?;
        let roll = self.rollout(schedule)?;
        let cost = self.evaluate_cost(schedule)?;
        let g_term = roll.terminal_moisture - self.settings.terminal_moisture;
        let augmented = cost + penalty.value(g_term);
        let slope = penalty.slope(g_term);

        let n = self.rom.n();
        let h = self.dt / self.substeps as f64;
        let total = self.settings.steps * self.substeps;
        let mut ws = RomWorkspace::new(self.rom);
        let mut gradient = DVector::from_element(self.settings.steps, self.dt);
        let mut p = self.rom.moisture_gradient() * slope;
        let mut jac = DMatrix::zeros(n, n);
        let mut probe = DVector::zeros(n);

        for s in (0..total).rev() {
            let u = schedule.values[s / self.substeps];
            let c = &roll.states[s];
            let (f, g_in) = self.rom.rhs_split(c, &mut ws)?;
            let mut base = f;
            base.axpy(u, &g_in, 1.0);
            for l in 0..n {
                let step = JACOBIAN_STEP * c[l].abs().max(1.0);
                probe.copy_from(c);
                probe[l] += step;
                let bumped = self.rom.rhs(&probe, u, &mut ws)?;
                for r in 0..n {
                    jac[(r, l)] = (bumped[r] - base[r]) / step;
                }
            }
            gradient[s / self.substeps] += h * g_in.dot(&p);
            let correction = jac.tr_mul(&p);
            p.axpy(h, &correction, 1.0);
        }

        Ok(GradientInfo {
            gradient,
            cost,
            augmented,
            terminal_moisture: roll.terminal_moisture,
        })
    }

    fn project(&self, schedule: &mut ControlSchedule) {
        for u in &mut schedule.values {
            *u = u.clamp(self.settings.u_min, self.settings.u_max);
        }
    }

    fn projected_gradient_norm(&self, schedule: &ControlSchedule, gradient: &DVector<f64>) -> f64 {
        let mut sum = 0.0;
        for (u, g) in schedule.values.iter().zip(gradient.iter()) {
            let moved = (u - g).clamp(self.settings.u_min, self.settings.u_max);
            let residual = u - moved;
            sum += residual * residual;
        }
        sum.sqrt()
    }

    /// Solves the heating problem from the given constant start levels and
    /// returns the best result; ties break toward the earlier start. The
    /// winning schedule is refined toward the bang-bang structure of the
    /// optimum whenever the refinement does not cost more.
    ///
    /// Errors with the achievable terminal moisture when even permanent full
    /// heating misses the terminal bound.
    pub fn solve(&self, starts: &[f64]) -> Result<OcpResult> {
        if starts.is_empty() {
            return Err(CoreError::InvalidParameter {
                name: "starts",
                reason: "at least one start level is required",
                value: 0.0,
            });
        }
        let full_heat = ControlSchedule::constant(self.settings.steps, self.settings.u_max);
        let best_possible = self.rollout(&full_heat)?.terminal_moisture;
        if best_possible > self.settings.terminal_moisture {
            return Err(CoreError::Infeasible {
                best: best_possible,
                target: self.settings.terminal_moisture,
            });
        }

        let pg_tol = 1.0e-6 * self.dt * self.settings.steps as f64;
        let mut reports = Vec::with_capacity(starts.len());
        let mut best: Option<(usize, ControlSchedule, f64, f64, usize, bool)> = None;

        for (index, &level) in starts.iter().enumerate() {
            let (schedule, report) = self.solve_single(level, pg_tol)?;
            let feasible = report.violation < CONSTRAINT_TOL;
            let candidate = (
                index,
                schedule,
                report.cost,
                report.violation,
                report.inner_iterations,
                report.converged,
            );
            let better = match &best {
                None => true,
                Some((_, _, b_cost, b_viol, _, _)) => {
                    let b_feasible = *b_viol < CONSTRAINT_TOL;
                    match (feasible, b_feasible) {
                        (true, false) => true,
                        (false, true) => false,
                        _ => candidate.2 < *b_cost,
                    }
                }
            };
            if better {
                best = Some(candidate);
            }
            reports.push(report);
        }

        let (winner, mut schedule, best_cost, violation, iterations, converged) = best.unwrap();
        if let Some((polished, polished_cost)) = self.bang_bang_polish(&schedule)? {
            if violation >= CONSTRAINT_TOL || polished_cost <= best_cost {
                schedule = polished;
            }
        }
        let cost = self.evaluate_cost(&schedule)?;
        let terminal = self.rollout(&schedule)?.terminal_moisture;
        Ok(OcpResult {
            switch_points: self.switch_points(&schedule),
            schedule,
            cost,
            terminal_moisture: terminal,
            violation: (terminal - self.settings.terminal_moisture).max(0.0),
            iterations,
            stagnated: !converged,
            multistart: reports,
            winner,
        })
    }

    /// Bang-bang refinement of a candidate schedule.
    ///
    /// The heating cost is linear in the schedule, so with the terminal
    /// bound active the optimum rests or heats at full strength except at
    /// isolated switches. The first-order search approaches that structure
    /// slowly along the nearly flat constraint surface; this step finishes
    /// it: rank the hold intervals by the adjoint sensitivity of terminal
    /// moisture, heat the most effective ones, and bisect on the heated
    /// count for the smallest feasible set. The sensitivity profile moves
    /// with the schedule, so the ranking is re-derived from each refined
    /// schedule until the heated set stops changing.
    ///
    /// Returns the cheapest feasible refinement found, or `None` when even
    /// heating every drying-effective interval misses the terminal bound.
    fn bang_bang_polish(
        &self,
        start: &ControlSchedule,
    ) -> Result<Option<(ControlSchedule, f64)>> {
        let steps = self.settings.steps;
        let target = self.settings.terminal_moisture;
        let unit_slope = PenaltyState {
            weight: 0.0,
            multiplier: 1.0,
        };
        let mut schedule = start.clone();
        let mut best: Option<(ControlSchedule, f64)> = None;

        for _ in 0..POLISH_ROUNDS {
            let info = self.gradient(&schedule, &unit_slope)?;
            let sensitivity: Vec<f64> = (0..steps).map(|j| info.gradient[j] - self.dt).collect();
            let mut order: Vec<usize> = (0..steps).collect();
            order.sort_by(|&a, &b| sensitivity[a].partial_cmp(&sensitivity[b]).unwrap());
            let drying = order
                .iter()
                .take_while(|&&j| sensitivity[j] < 0.0)
                .count();

            let build = |heated: usize| {
                let mut values = vec![self.settings.u_min; steps];
                for &j in order.iter().take(heated) {
                    values[j] = self.settings.u_max;
                }
                ControlSchedule { values }
            };
            let feasible =
                |k: usize| -> Result<bool> { Ok(self.rollout(&build(k))?.terminal_moisture <= target) };

            if !feasible(drying)? {
                break;
            }
            let mut hi = drying;
            if feasible(0)? {
                hi = 0;
            } else {
                let mut lo = 0;
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if feasible(mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
            }
            let candidate = build(hi);
            let cost = self.evaluate_cost(&candidate)?;
            let stable = candidate.values == schedule.values;
            if best.as_ref().is_none_or(|(_, b)| cost < *b) {
                best = Some((candidate.clone(), cost));
            }
            if stable {
                break;
            }
            schedule = candidate;
        }
        Ok(best)
    }

    fn solve_single(&self, level: f64, pg_tol: f64) -> Result<(ControlSchedule, StartReport)> {
        let mut schedule = ControlSchedule::constant(self.settings.steps, level);
        self.project(&mut schedule);
        let mut penalty = PenaltyState {
            weight: PENALTY_INITIAL,
            multiplier: 0.0,
        };
        let mut inner_total = 0usize;
        let mut outer_used = 0usize;
        let mut converged = false;
        let mut violation = f64::INFINITY;

        for outer in 0..MAX_OUTER {
            outer_used = outer + 1;
            let (inner_used, pg_norm, terminal) =
                self.minimize_inner(&mut schedule, &penalty, pg_tol)?;
            inner_total += inner_used;
            let g = terminal - self.settings.terminal_moisture;
            violation = g.max(0.0);
            penalty.multiplier = (penalty.multiplier + penalty.weight * g).max(0.0);
            if violation < CONSTRAINT_TOL && pg_norm < pg_tol {
                converged = true;
                break;
            }
            if penalty.weight < PENALTY_CAP {
                penalty.weight = (penalty.weight * PENALTY_GROWTH).min(PENALTY_CAP);
            }
        }

        let cost = self.evaluate_cost(&schedule)?;
        Ok((
            schedule,
            StartReport {
                start_value: level,
                cost,
                violation,
                inner_iterations: inner_total,
                outer_iterations: outer_used,
                converged,
            },
        ))
    }

    /// Projected gradient descent with Barzilai-Borwein steps and Armijo
    /// backtracking. Returns inner iterations, the final projected-gradient
    /// norm, and the terminal moisture of the final iterate.
    fn minimize_inner(
        &self,
        schedule: &mut ControlSchedule,
        penalty: &PenaltyState,
        pg_tol: f64,
    ) -> Result<(usize, f64, f64)> {
        let mut info = self.gradient(schedule, penalty)?;
        let box_width = self.settings.u_max - self.settings.u_min;
        let mut alpha = box_width / info.gradient.amax().max(1.0e-12);
        let mut prev: Option<(ControlSchedule, DVector<f64>)> = None;
        let mut iterations = 0usize;

        for _ in 0..MAX_INNER {
            let pg_norm = self.projected_gradient_norm(schedule, &info.gradient);
            if pg_norm < pg_tol {
                return Ok((iterations, pg_norm, info.terminal_moisture));
            }
            if let Some((old_u, old_g)) = &prev {
                let mut du_dg = 0.0;
                let mut du_du = 0.0;
                for j in 0..self.settings.steps {
                    let du = schedule.values[j] - old_u.values[j];
                    let dg = info.gradient[j] - old_g[j];
                    du_dg += du * dg;
                    du_du += du * du;
                }
                if du_dg > 1.0e-30 {
                    alpha = (du_du / du_dg).clamp(1.0e-12, 1.0e12);
                }
            }

            let mut step = alpha;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let mut candidate = schedule.clone();
                for j in 0..self.settings.steps {
                    candidate.values[j] -= step * info.gradient[j];
                }
                self.project(&mut candidate);
                let directional: f64 = candidate
                    .values
                    .iter()
                    .zip(&schedule.values)
                    .zip(info.gradient.iter())
                    .map(|((new, old), g)| g * (new - old))
                    .sum();
                if directional >= 0.0 {
                    break;
                }
                match self.objective(&candidate, penalty) {
                    Ok((_, l_new, _)) if l_new <= info.augmented + ARMIJO_C1 * directional => {
                        accepted = Some(candidate);
                        break;
                    }
                    _ => step *= 0.5,
                }
            }
            let Some(next) = accepted else {
                return Ok((
                    iterations,
                    self.projected_gradient_norm(schedule, &info.gradient),
                    info.terminal_moisture,
                ));
            };
            prev = Some((schedule.clone(), info.gradient.clone()));
            *schedule = next;
            info = self.gradient(schedule, penalty)?;
            iterations += 1;
        }

        Ok((
            iterations,
            self.projected_gradient_norm(schedule, &info.gradient),
            info.terminal_moisture,
        ))
    }

    /// Times where the schedule crosses mid-range, using a hysteresis band
    /// so chatter within one kelvin of the threshold is not a switch.
    pub fn switch_points(&self, schedule: &ControlSchedule) -> Vec<f64> {
        let mid = 0.5 * (self.settings.u_min + self.settings.u_max);
        let mut state: Option<bool> = None;
        let mut switches = Vec::new();
        for (j, &u) in schedule.values.iter().enumerate() {
            let classified = if u > mid + SWITCH_HYSTERESIS {
                Some(true)
            } else if u < mid - SWITCH_HYSTERESIS {
                Some(false)
            } else {
                None
            };
            if let Some(high) = classified {
                if let Some(was_high) = state {
                    if was_high != high {
                        switches.push(j as f64 * self.dt);
                    }
                }
                state = Some(high);
            }
        }
        switches
    }

    /// Re-simulates a schedule on the full model and compares total
    /// moisture at the hold boundaries.
    pub fn verify_on_fom(
        &self,
        schedule: &ControlSchedule,
        z0: &DVector<f64>,
    ) -> Result<FomComparison> {
        self.check_schedule(schedule)?;
        let roll = self.rollout(schedule)?;
        let ambient = Ambient::Steps {
            dt: self.dt,
            values: schedule.values.clone(),
        };
        let bound = self.rom.fom.default_dt(z0, &ambient)?;
        let per_hold = (self.dt / bound).ceil().max(1.0) as usize;
        let fom_dt = self.dt / per_hold as f64;
        let run = self.rom.fom.simulate(
            z0,
            &ambient,
            &SimOptions {
                dt: Some(fom_dt),
                horizon: self.settings.horizon,
                snapshots: 2,
                steady_tol: None,
            },
        )?;

        let m = self.settings.steps;
        let mut times = Vec::with_capacity(m + 1);
        let mut rom_moisture = Vec::with_capacity(m + 1);
        let mut fom_moisture = Vec::with_capacity(m + 1);
        for j in 0..=m {
            times.push(j as f64 * self.dt);
            rom_moisture.push(roll.total_moisture.values[j * self.substeps]);
            let idx = (j * per_hold).min(run.total_moisture.values.len() - 1);
            fom_moisture.push(run.total_moisture.values[idx]);
        }
        let max_abs_mismatch = rom_moisture
            .iter()
            .zip(&fom_moisture)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let fom_terminal = *fom_moisture.last().unwrap();
        Ok(FomComparison {
            times,
            rom_moisture,
            fom_moisture,
            terminal_mismatch: (roll.terminal_moisture - fom_terminal).abs(),
            max_abs_mismatch,
            fom_terminal,
            constraint_met_on_fom: fom_terminal <= self.settings.terminal_moisture,
        })
    }
}

/// Solves the same problem across several reduced models and tabulates the
/// outcomes. Wall-clock entries are measurements, not deterministic outputs.
pub fn order_study(problems: &[OcpProblem<'_>]) -> Result<Vec<OrderStudyEntry>> {
    let mut entries = Vec::with_capacity(problems.len());
    for problem in problems {
        let clock = std::time::Instant::now();
        let result = problem.solve(&problem.default_starts())?;
        entries.push(OrderStudyEntry {
            n: problem.rom.n(),
            cost: result.cost,
            terminal_moisture: result.terminal_moisture,
            violation: result.violation,
            switch_points: result.switch_points,
            iterations: result.iterations,
            wall_seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(entries)
}
