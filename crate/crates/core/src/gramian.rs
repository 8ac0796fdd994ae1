//! Empirical controllability analysis of reduced dynamics.
//!
//! The Gramian is assembled from impulse responses of an input-affine
//! system: for every impulse magnitude, direction matrix, and input channel
//! the state is kicked away from its steady state and the decay back is
//! integrated into a covariance sum. Its eigenvalues measure how strongly
//! the input reaches each direction of the reduced state space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{CoreError, Result};
use crate::pod::PodBasis;
use crate::rom::{RomSystem, RomWorkspace};

/// Dynamics that are affine in the input: dc/dt = f(c) + g(c)·u.
pub trait InputAffineSystem {
    /// State dimension n.
    fn dim(&self) -> usize;

    /// Input dimension.
    fn input_dim(&self) -> usize;

    /// Drift f(c) and input map g(c) as an n x input_dim matrix.
    fn split(&mut self, c: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

/// Adapter presenting a reduced drying model as a single-input affine
/// system, with reusable evaluation buffers.
pub struct RomAdapter<'a> {
    rom: &'a RomSystem,
    ws: RomWorkspace,
}

impl<'a> RomAdapter<'a> {
    pub fn new(rom: &'a RomSystem) -> Self {
        let ws = RomWorkspace::new(rom);
        RomAdapter { rom, ws }
    }
}

impl InputAffineSystem for RomAdapter<'_> {
    fn dim(&self) -> usize {
        self.rom.n()
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn split(&mut self, c: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (f, g) = self.rom.rhs_split(c, &mut self.ws)?;
        let n = g.len();
        Ok((f, DMatrix::from_column_slice(n, 1, g.as_slice())))
    }
}

/// Impulse-response study settings.
#[derive(Debug, Clone)]
pub struct GramianConfig {
    /// Impulse magnitudes h_d [K s]; all nonzero.
    pub magnitudes: Vec<f64>,
    /// Orthonormal direction matrices, each input_dim x input_dim.
    pub directions: Vec<DMatrix<f64>>,
    /// Rest input level, one entry per input channel [K].
    pub u0: DVector<f64>,
    /// Initial state for the steady-state march.
    pub start: DVector<f64>,
    /// Quadrature and integration step [s].
    pub dt: f64,
    /// Step budget per impulse response and for the steady-state march.
    pub max_steps: usize,
    /// Sup-norm rate below which a trajectory counts as settled [1/s].
    pub settle_tol: f64,
}

impl GramianConfig {
    /// Settings for a single-input system: seven magnitude decades around 1,
    /// the identity direction, and a rest input of 298.15 K.
    pub fn scalar_input(start: DVector<f64>) -> Self {
        GramianConfig {
            magnitudes: vec![1.0e-3, 1.0e-2, 1.0e-1, 1.0, 1.0e1, 1.0e2, 1.0e3],
            directions: vec![DMatrix::identity(1, 1)],
            u0: DVector::from_element(1, 298.15),
            start,
            dt: 1.0e-3,
            max_steps: 2_000_000,
            settle_tol: 1.0e-8,
        }
    }

    fn validate(&self, dim: usize, input_dim: usize) -> Result<()> {
        if self.magnitudes.is_empty() {
            return Err(CoreError::InvalidParameter {
                name: "magnitudes",
                reason: "at least one impulse magnitude is required",
                value: 0.0,
            });
        }
        for &h in &self.magnitudes {
            if h == 0.0 || !h.is_finite() {
                return Err(CoreError::InvalidParameter {
                    name: "magnitudes",
                    reason: "impulse magnitudes must be finite and nonzero",
                    value: h,
                });
            }
        }
        if self.directions.is_empty() {
            return Err(CoreError::InvalidParameter {
                name: "directions",
                reason: "at least one direction matrix is required",
                value: 0.0,
            });
        }
        for d in &self.directions {
            if d.nrows() != input_dim || d.ncols() != input_dim {
                return Err(CoreError::DimensionMismatch {
                    context: "direction matrix",
                    expected: input_dim,
                    actual: d.nrows().max(d.ncols()),
                });
            }
            let gram = d.transpose() * d;
            for i in 0..input_dim {
                for j in 0..input_dim {
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (gram[(i, j)] - want).abs() > 1.0e-10 {
                        return Err(CoreError::InvalidParameter {
                            name: "directions",
                            reason: "direction matrices must be orthonormal",
                            value: gram[(i, j)],
                        });
                    }
                }
            }
        }
        if self.u0.len() != input_dim {
            return Err(CoreError::DimensionMismatch {
                context: "rest input",
                expected: input_dim,
                actual: self.u0.len(),
            });
        }
        if self.start.len() != dim {
            return Err(CoreError::DimensionMismatch {
                context: "steady-march start",
                expected: dim,
                actual: self.start.len(),
            });
        }
        if !(self.dt > 0.0) {
            return Err(CoreError::InvalidParameter {
                name: "dt",
                reason: "quadrature step must be strictly positive",
                value: self.dt,
            });
        }
        if self.max_steps < 2 {
            return Err(CoreError::InvalidParameter {
                name: "max_steps",
                reason: "at least two steps are required",
                value: self.max_steps as f64,
            });
        }
        Ok(())
    }
}

/// Settling record of one impulse response.
#[derive(Debug, Clone, Copy)]
pub struct ImpulseDiagnostic {
    /// Impulse magnitude h_d [K s].
    pub magnitude: f64,
    /// Index into the direction matrix list.
    pub direction: usize,
    /// Input channel the impulse entered through.
    pub channel: usize,
    /// Quadrature terms accumulated.
    pub steps: usize,
    /// Whether the rate dropped below the settling tolerance in budget.
    pub settled: bool,
    /// Sup-norm rate at the endpoint [1/s].
    pub final_rate: f64,
}

/// Empirical Gramian with its provenance.
#[derive(Debug, Clone)]
pub struct GramianResult {
    /// Symmetric n x n Gramian.
    pub gramian: DMatrix<f64>,
    /// Steady state the impulses departed from.
    pub steady_state: DVector<f64>,
    pub diagnostics: Vec<ImpulseDiagnostic>,
    /// Human-readable settling warnings, empty when all responses settled.
    pub warnings: Vec<String>,
}

/// Eigen-decomposition of the volume-weighted Gramian problem.
#[derive(Debug, Clone)]
pub struct ReducedEigenpairs {
    /// Eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors, one column per eigenvalue.
    pub eigenvectors: DMatrix<f64>,
}

/// Controllability verdict derived from the Gramian spectrum.
#[derive(Debug, Clone)]
pub struct ControllabilityReport {
    /// Eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Hyperellipsoid semi-axis lengths sqrt(max(eigenvalue, 0)).
    pub semi_axes: Vec<f64>,
    /// True when every eigenvalue is strictly positive.
    pub controllable: bool,
    /// Largest over smallest eigenvalue, when the smallest is positive.
    pub spread: Option<f64>,
}

/// Marches an input-affine system to its steady state under the rest input.
pub fn settle_to_steady<S: InputAffineSystem>(
    system: &mut S,
    config: &GramianConfig,
) -> Result<DVector<f64>> {
    let mut c = config.start.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_steps {
        let (f, g) = system.split(&c)?;
        let mut rate = f;
        rate.gemv(1.0, &g, &config.u0, 1.0);
        residual = rate.amax();
        if residual < config.settle_tol {
            return Ok(c);
        }
        c.axpy(config.dt, &rate, 1.0);
    }
    Err(CoreError::NoConvergence {
        what: "steady-state march",
        steps: config.max_steps,
        residual,
    })
}

/// Assembles the empirical controllability Gramian from impulse responses.
///
/// For every magnitude h, direction matrix D, and channel i the state jumps
/// to `c_ss + h·g(c_ss)·D·e_i` and relaxes under the rest input. Each
/// response contributes the left-endpoint rectangle sum
/// `Σ_j (c_j − c_end)(c_j − c_end)ᵀ·Δt`, scaled by `1/(r·s·h²)` with r the
/// number of directions and s the number of magnitudes. Responses that do
/// not settle within the step budget still contribute and are reported in
/// the warnings.
pub fn empirical_gramian<S: InputAffineSystem>(
    system: &mut S,
    config: &GramianConfig,
) -> Result<GramianResult> {
    let n = system.dim();
    let gamma = system.input_dim();
    config.validate(n, gamma)?;
    let c_ss = settle_to_steady(system, config)?;
    let (_, g_ss) = system.split(&c_ss)?;

    let r = config.directions.len() as f64;
    let s = config.magnitudes.len() as f64;
    let mut w = DMatrix::zeros(n, n);
    let mut diagnostics = Vec::new();
    let mut warnings = Vec::new();

    for &h in &config.magnitudes {
        for (l, d_mat) in config.directions.iter().enumerate() {
            for i in 0..gamma {
                let direction = d_mat.column(i);
                let mut jump = c_ss.clone();
                jump.gemv(h, &g_ss, &direction, 1.0);
                let (contrib, diag) =
                    impulse_contribution(system, &c_ss, &jump, config, h, l, i)?;
                if !diag.settled {
                    warnings.push(format!(
                        "impulse h={h:e} direction {l} channel {i} not settled after {} steps (rate {:e})",
                        diag.steps, diag.final_rate
                    ));
                }
                w += contrib * (1.0 / (r * s * h * h));
                diagnostics.push(diag);
            }
        }
    }

    let w = 0.5 * (&w + w.transpose());
    Ok(GramianResult {
        gramian: w,
        steady_state: c_ss,
        diagnostics,
        warnings,
    })
}

fn impulse_contribution<S: InputAffineSystem>(
    system: &mut S,
    c_ss: &DVector<f64>,
    jump: &DVector<f64>,
    config: &GramianConfig,
    magnitude: f64,
    direction: usize,
    channel: usize,
) -> Result<(DMatrix<f64>, ImpulseDiagnostic)> {
    let n = c_ss.len();
    let dt = config.dt;
    let mut sum_outer = DMatrix::zeros(n, n);
    let mut sum_dev = DVector::zeros(n);
    let mut dev = DVector::zeros(n);
    let mut c = jump.clone();
    let mut count = 0usize;

    let (settled, final_rate) = loop {
        let (f, g) = system.split(&c)?;
        let mut rate = f;
        rate.gemv(1.0, &g, &config.u0, 1.0);
        let rate_norm = rate.amax();
        if rate_norm < config.settle_tol {
            break (true, rate_norm);
        }
        if count >= config.max_steps {
            break (false, rate_norm);
        }
        dev.copy_from(&c);
        dev -= c_ss;
        sum_outer.ger(dt, &dev, &dev, 1.0);
        sum_dev.axpy(dt, &dev, 1.0);
        count += 1;
        c.axpy(dt, &rate, 1.0);
        for (k, v) in c.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFinite {
                    context: "impulse response",
                    time: count as f64 * dt,
                    index: k,
                    detail: "state is not finite",
                });
            }
        }
    };

    dev.copy_from(&c);
    dev -= c_ss;
    sum_outer.ger(-1.0, &sum_dev, &dev, 1.0);
    sum_outer.ger(-1.0, &dev, &sum_dev, 1.0);
    sum_outer.ger(count as f64 * dt, &dev, &dev, 1.0);

    Ok((
        sum_outer,
        ImpulseDiagnostic {
            magnitude,
            direction,
            channel,
            steps: count,
            settled,
            final_rate,
        },
    ))
}

/// Solves the volume-weighted eigenproblem of the Gramian.
///
/// The mode matrix satisfies ΦᵀΦ = (1/ΔV)·I, so the weighted problem is the
/// symmetric eigen-decomposition of W/ΔV, returned in descending order.
pub fn reduced_eigenproblem(gramian: &DMatrix<f64>, cell_volume: f64) -> Result<ReducedEigenpairs> {
    if gramian.nrows() != gramian.ncols() {
        return Err(CoreError::DimensionMismatch {
            context: "gramian",
            expected: gramian.nrows(),
            actual: gramian.ncols(),
        });
    }
    if !(cell_volume > 0.0) {
        return Err(CoreError::InvalidParameter {
            name: "cell_volume",
            reason: "must be strictly positive",
            value: cell_volume,
        });
    }
    let eigen = SymmetricEigen::new(gramian / cell_volume);
    let mut order: Vec<usize> = (0..eigen.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let n = gramian.nrows();
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        eigenvalues.push(eigen.eigenvalues[k]);
        eigenvectors
            .column_mut(col)
            .copy_from(&eigen.eigenvectors.column(k));
    }
    Ok(ReducedEigenpairs {
        eigenvalues,
        eigenvectors,
    })
}

/// Lifts reduced eigenvectors to full-state fields, one column per vector.
pub fn lift_eigenvectors(basis: &PodBasis, eigenvectors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut lifted = DMatrix::zeros(2 * basis.num_cells(), eigenvectors.ncols());
    for k in 0..eigenvectors.ncols() {
        let v = basis.lift_rate(&eigenvectors.column(k).into_owned())?;
        lifted.column_mut(k).copy_from(&v);
    }
    Ok(lifted)
}

/// Summarizes a Gramian spectrum into a controllability verdict.
pub fn controllability_report(eigenvalues: &[f64]) -> ControllabilityReport {
    let controllable = !eigenvalues.is_empty() && eigenvalues.iter().all(|&b| b > 0.0);
    let semi_axes = eigenvalues.iter().map(|&b| b.max(0.0).sqrt()).collect();
    let spread = match (eigenvalues.first(), eigenvalues.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Some(hi / lo),
        _ => None,
    };
    ControllabilityReport {
        eigenvalues: eigenvalues.to_vec(),
        semi_axes,
        controllable,
        spread,
    }
}
