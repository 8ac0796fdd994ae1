//! Proper orthogonal decomposition of simulation snapshots.
//!
//! Moisture and temperature are decomposed separately. Each field's
//! mean-centered snapshot matrix is factored by a singular value
//! decomposition under the volume-weighted inner product, and the leading
//! left singular vectors become the field's modes. [`PodBasis`] maps full
//! states to reduced coefficients and back.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::fom::SnapshotSet;
use crate::grid::Grid;

/// Centered singular values below this fraction of the largest one count as
/// numerical rank zero.
pub const RANK_TOLERANCE: f64 = 1.0e-12;

/// Volume-weighted orthonormal basis for one scalar field.
#[derive(Debug, Clone)]
struct FieldBasis {
    mean: DVector<f64>,
    /// Cells x retained modes; columns have unit volume-weighted norm.
    modes: DMatrix<f64>,
    /// Full spectrum of volume-weighted singular values, descending.
    singular_values: Vec<f64>,
}

/// Reduced basis for the coupled moisture and temperature state.
///
/// The moisture block of a state is expanded in the moisture modes only and
/// the temperature block in the temperature modes only; the assembled mode
/// matrix is block-diagonal. Coefficient vectors are ordered moisture first:
/// `c = [c_x,1 .. c_x,n_x  c_T,1 .. c_T,n_T]`.
#[derive(Debug, Clone)]
pub struct PodBasis {
    n_cells: usize,
    /// Cell volume defining the discrete inner product [m^3].
    dv: f64,
    moisture: FieldBasis,
    temperature: FieldBasis,
}

impl PodBasis {
    /// Number of grid cells per field.
    pub fn num_cells(&self) -> usize {
        self.n_cells
    }

    /// Cell volume of the build grid [m^3].
    pub fn cell_volume(&self) -> f64 {
        self.dv
    }

    /// Retained moisture mode count.
    pub fn n_moisture(&self) -> usize {
        self.moisture.modes.ncols()
    }

    /// Retained temperature mode count.
    pub fn n_temperature(&self) -> usize {
        self.temperature.modes.ncols()
    }

    /// Total reduced dimension.
    pub fn n(&self) -> usize {
        self.n_moisture() + self.n_temperature()
    }

    /// Snapshot mean as a full state vector.
    pub fn mean(&self) -> DVector<f64> {
        let n = self.n_cells;
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.moisture.mean);
        z.rows_mut(n, n).copy_from(&self.temperature.mean);
        z
    }

    /// Moisture modes, one column per mode.
    pub fn moisture_modes(&self) -> &DMatrix<f64> {
        &self.moisture.modes
    }

    /// Temperature modes, one column per mode.
    pub fn temperature_modes(&self) -> &DMatrix<f64> {
        &self.temperature.modes
    }

    /// Volume-weighted moisture singular values, descending, full spectrum.
    pub fn singular_values_moisture(&self) -> &[f64] {
        &self.moisture.singular_values
    }

    /// Volume-weighted temperature singular values, descending, full spectrum.
    pub fn singular_values_temperature(&self) -> &[f64] {
        &self.temperature.singular_values
    }

    /// Assembled block-diagonal mode matrix, 2N x n, with exact zeros in the
    /// cross blocks.
    pub fn mode_matrix(&self) -> DMatrix<f64> {
        let n = self.n_cells;
        let nx = self.n_moisture();
        let nt = self.n_temperature();
        let mut phi = DMatrix::zeros(2 * n, nx + nt);
        phi.view_mut((0, 0), (n, nx)).copy_from(&self.moisture.modes);
        phi.view_mut((n, nx), (n, nt))
            .copy_from(&self.temperature.modes);
        phi
    }

    /// Reassembles a basis from stored parts, as written by and read back
    /// from build artifacts.
    ///
    /// Shapes must agree (equal cell counts per field, one singular value
    /// per retained mode at least), the cell volume must be positive, and
    /// each field's modes must be orthonormal under the volume-weighted
    /// inner product to within `1e-8`, which catches files edited by hand.
    pub fn assemble(
        dv: f64,
        moisture_mean: DVector<f64>,
        moisture_modes: DMatrix<f64>,
        moisture_singular_values: Vec<f64>,
        temperature_mean: DVector<f64>,
        temperature_modes: DMatrix<f64>,
        temperature_singular_values: Vec<f64>,
    ) -> Result<Self> {
        if !(dv > 0.0) || !dv.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "dv",
                reason: "cell volume must be strictly positive",
                value: dv,
            });
        }
        let n_cells = moisture_mean.len();
        if n_cells == 0 {
            return Err(CoreError::InvalidParameter {
                name: "moisture_mean",
                reason: "basis must cover at least one cell",
                value: 0.0,
            });
        }
        let fields = [
            ("moisture", &moisture_mean, &moisture_modes, &moisture_singular_values),
            (
                "temperature",
                &temperature_mean,
                &temperature_modes,
                &temperature_singular_values,
            ),
        ];
        for (name, mean, modes, singular) in fields {
            if mean.len() != n_cells || modes.nrows() != n_cells {
                return Err(CoreError::DimensionMismatch {
                    context: "assembled basis rows",
                    expected: n_cells,
                    actual: if mean.len() != n_cells {
                        mean.len()
                    } else {
                        modes.nrows()
                    },
                });
            }
            if singular.len() < modes.ncols() {
                return Err(CoreError::DimensionMismatch {
                    context: "assembled singular values",
                    expected: modes.ncols(),
                    actual: singular.len(),
                });
            }
            if singular.iter().any(|s| !s.is_finite())
                || mean.iter().any(|v| !v.is_finite())
                || modes.iter().any(|v| !v.is_finite())
            {
                return Err(CoreError::NonFinite {
                    context: "assembled basis",
                    time: 0.0,
                    index: 0,
                    detail: "basis entries must be finite",
                });
            }
            let gram = modes.tr_mul(modes) * dv;
            for i in 0..modes.ncols() {
                for j in 0..modes.ncols() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    if (gram[(i, j)] - expected).abs() > 1.0e-8 {
                        return Err(CoreError::InvalidParameter {
                            name: if name == "moisture" {
                                "moisture_modes"
                            } else {
                                "temperature_modes"
                            },
                            reason: "modes are not orthonormal in the volume-weighted product",
                            value: gram[(i, j)],
                        });
                    }
                }
            }
        }
        Ok(PodBasis {
            n_cells,
            dv,
            moisture: FieldBasis {
                mean: moisture_mean,
                modes: moisture_modes,
                singular_values: moisture_singular_values,
            },
            temperature: FieldBasis {
                mean: temperature_mean,
                modes: temperature_modes,
                singular_values: temperature_singular_values,
            },
        })
    }

    fn check_state_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len != 2 * self.n_cells {
            return Err(CoreError::DimensionMismatch {
                context,
                expected: 2 * self.n_cells,
                actual: len,
            });
        }
        Ok(())
    }

    fn check_coeff_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.n() {
            return Err(CoreError::DimensionMismatch {
                context,
                expected: self.n(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Reduced coordinates of a full state: each block's deviation from the
    /// mean projected onto the field's modes under the volume-weighted inner
    /// product.
    pub fn coefficients(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state_len(z.len(), "coefficients state")?;
        let n = self.n_cells;
        let dx = z.rows(0, n) - &self.moisture.mean;
        let dt = z.rows(n, n) - &self.temperature.mean;
        let mut c = DVector::zeros(self.n());
        c.rows_mut(0, self.n_moisture())
            .gemv_tr(self.dv, &self.moisture.modes, &dx, 0.0);
        c.rows_mut(self.n_moisture(), self.n_temperature())
            .gemv_tr(self.dv, &self.temperature.modes, &dt, 0.0);
        Ok(c)
    }

    /// Full state approximated from reduced coordinates: mean plus the modal
    /// expansion of each field.
    pub fn lift(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_coeff_len(c.len(), "lift coefficients")?;
        let n = self.n_cells;
        let mut z = self.mean();
        z.rows_mut(0, n).gemv(
            1.0,
            &self.moisture.modes,
            &c.rows(0, self.n_moisture()),
            1.0,
        );
        z.rows_mut(n, n).gemv(
            1.0,
            &self.temperature.modes,
            &c.rows(self.n_moisture(), self.n_temperature()),
            1.0,
        );
        Ok(z)
    }

    /// Reduced coordinates of a rate vector (no mean subtraction), for
    /// projecting time derivatives and other tangent quantities.
    pub fn reduce_rate(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state_len(v.len(), "reduce_rate vector")?;
        let n = self.n_cells;
        let mut c = DVector::zeros(self.n());
        c.rows_mut(0, self.n_moisture()).gemv_tr(
            self.dv,
            &self.moisture.modes,
            &v.rows(0, n),
            0.0,
        );
        c.rows_mut(self.n_moisture(), self.n_temperature()).gemv_tr(
            self.dv,
            &self.temperature.modes,
            &v.rows(n, n),
            0.0,
        );
        Ok(c)
    }

    /// Modal expansion of reduced coordinates without the mean, for lifting
    /// rate vectors and eigenvector directions.
    pub fn lift_rate(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_coeff_len(w.len(), "lift_rate coefficients")?;
        let n = self.n_cells;
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).gemv(
            1.0,
            &self.moisture.modes,
            &w.rows(0, self.n_moisture()),
            0.0,
        );
        v.rows_mut(n, n).gemv(
            1.0,
            &self.temperature.modes,
            &w.rows(self.n_moisture(), self.n_temperature()),
            0.0,
        );
        Ok(v)
    }

    /// Lift followed by projection, the rank-n approximation of a state.
    pub fn reconstruct(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.lift(&self.coefficients(z)?)
    }

    /// Total-moisture reconstruction error over a snapshot set using only the
    /// leading `n_x` moisture and `n_t` temperature modes: RMS of
    /// X_ref - X_approx over the snapshots, divided by the range of X_ref.
    pub fn nrmse_total_moisture(
        &self,
        snaps: &SnapshotSet,
        n_x: usize,
        n_t: usize,
    ) -> Result<f64> {
        if n_x > self.n_moisture() || n_t > self.n_temperature() {
            return Err(CoreError::RankDeficient {
                field: if n_x > self.n_moisture() {
                    "moisture"
                } else {
                    "temperature"
                },
                requested: n_x.max(n_t),
                attainable: self.n_moisture().max(self.n_temperature()),
            });
        }
        let n = self.n_cells;
        let mut reference = Vec::with_capacity(snaps.len());
        let mut approx = Vec::with_capacity(snaps.len());
        for z in &snaps.states {
            self.check_state_len(z.len(), "nrmse snapshot")?;
            let c = self.coefficients(z)?;
            let mut x_approx = self.moisture.mean.mean();
            for k in 0..n_x {
                x_approx += c[k] * self.moisture.modes.column(k).mean();
            }
            reference.push(z.rows(0, n).mean());
            approx.push(x_approx);
        }
        nrmse(&reference, &approx)
    }
}

/// Normalized root-mean-square deviation between two series: the RMS of the
/// pointwise difference divided by the range of the reference.
pub fn nrmse(reference: &[f64], approx: &[f64]) -> Result<f64> {
    if reference.len() != approx.len() {
        return Err(CoreError::DimensionMismatch {
            context: "nrmse series",
            expected: reference.len(),
            actual: approx.len(),
        });
    }
    if reference.is_empty() {
        return Err(CoreError::InvalidParameter {
            name: "reference",
            reason: "empty series",
            value: 0.0,
        });
    }
    let lo = reference.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(CoreError::FlatReference {
            context: "nrmse reference series",
        });
    }
    let sum_sq: f64 = reference
        .iter()
        .zip(approx)
        .map(|(r, a)| (r - a) * (r - a))
        .sum();
    Ok((sum_sq / reference.len() as f64).sqrt() / (hi - lo))
}

/// Error summary for one field over a snapshot comparison.
#[derive(Debug, Clone, Copy)]
pub struct FieldError {
    /// RMS residual over all cells and times divided by the reference range;
    /// infinite if the reference is flat but the residual is not.
    pub nrmse: f64,
    /// Largest absolute residual.
    pub max_abs: f64,
    /// Cell index of the largest residual.
    pub max_cell: usize,
    /// Record time of the largest residual [s].
    pub max_time: f64,
}

/// Per-field residual summaries between a reference and an approximation.
#[derive(Debug, Clone, Copy)]
pub struct FieldErrorReport {
    pub moisture: FieldError,
    pub temperature: FieldError,
}

/// Compares two snapshot sets on matching time grids and reports, per field,
/// the largest absolute residual with its location and the field NRMSE.
pub fn field_error_maps(
    reference: &SnapshotSet,
    approx: &SnapshotSet,
    n_cells: usize,
) -> Result<FieldErrorReport> {
    if reference.len() != approx.len() {
        return Err(CoreError::DimensionMismatch {
            context: "snapshot counts",
            expected: reference.len(),
            actual: approx.len(),
        });
    }
    if reference.is_empty() {
        return Err(CoreError::InvalidParameter {
            name: "reference",
            reason: "empty snapshot set",
            value: 0.0,
        });
    }
    for (tr, ta) in reference.times.iter().zip(&approx.times) {
        if (tr - ta).abs() > 1.0e-9 * (1.0 + tr.abs()) {
            return Err(CoreError::InvalidParameter {
                name: "times",
                reason: "snapshot times differ between the sets",
                value: *ta,
            });
        }
    }
    let field = |offset: usize| -> Result<FieldError> {
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        let mut max_abs = 0.0f64;
        let mut max_cell = 0usize;
        let mut max_time = reference.times[0];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (j, (zr, za)) in reference.states.iter().zip(&approx.states).enumerate() {
            if zr.len() != 2 * n_cells || za.len() != 2 * n_cells {
                return Err(CoreError::DimensionMismatch {
                    context: "snapshot state length",
                    expected: 2 * n_cells,
                    actual: zr.len().min(za.len()),
                });
            }
            for i in 0..n_cells {
                let r = zr[offset + i];
                let a = za[offset + i];
                let res = (r - a).abs();
                sum_sq += res * res;
                count += 1;
                lo = lo.min(r);
                hi = hi.max(r);
                if res > max_abs {
                    max_abs = res;
                    max_cell = i;
                    max_time = reference.times[j];
                }
            }
        }
        let rms = (sum_sq / count as f64).sqrt();
        let nrmse = if hi > lo {
            rms / (hi - lo)
        } else if rms == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Ok(FieldError {
            nrmse,
            max_abs,
            max_cell,
            max_time,
        })
    };
    Ok(FieldErrorReport {
        moisture: field(0)?,
        temperature: field(n_cells)?,
    })
}

/// Builds the reduced basis from a snapshot set, retaining `n_x` moisture and
/// `n_t` temperature modes.
///
/// Both field means run over the full snapshot set, so the initial condition
/// contributes whenever it was recorded. Mode signs are fixed so that each
/// mode's largest-magnitude entry is positive, making rebuilt bases
/// reproducible across linear-algebra backends.
pub fn build_basis(
    grid: &Grid,
    snaps: &SnapshotSet,
    n_x: usize,
    n_t: usize,
) -> Result<PodBasis> {
    let n = grid.num_cells();
    if snaps.is_empty() {
        return Err(CoreError::InvalidParameter {
            name: "snapshots",
            reason: "empty snapshot set",
            value: 0.0,
        });
    }
    for z in &snaps.states {
        if z.len() != 2 * n {
            return Err(CoreError::DimensionMismatch {
                context: "snapshot state length",
                expected: 2 * n,
                actual: z.len(),
            });
        }
    }
    let dv = grid.cell_volume();
    Ok(PodBasis {
        n_cells: n,
        dv,
        moisture: field_basis(&snaps.states, 0, n, dv, n_x, "moisture")?,
        temperature: field_basis(&snaps.states, n, n, dv, n_t, "temperature")?,
    })
}

fn field_basis(
    states: &[DVector<f64>],
    offset: usize,
    n_cells: usize,
    dv: f64,
    retain: usize,
    field: &'static str,
) -> Result<FieldBasis> {
    let m = states.len();
    let mut mean = DVector::zeros(n_cells);
    for z in states {
        for i in 0..n_cells {
            mean[i] += z[offset + i];
        }
    }
    mean /= m as f64;
    let mut centered = DMatrix::zeros(n_cells, m);
    for (j, z) in states.iter().enumerate() {
        for i in 0..n_cells {
            centered[(i, j)] = z[offset + i] - mean[i];
        }
    }
    let svd = centered.svd(true, false);
    let u = svd.u.as_ref().ok_or(CoreError::NoConvergence {
        what: "singular value decomposition",
        steps: 0,
        residual: f64::NAN,
    })?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap().then(a.cmp(&b)));
    let sv_max = sv[order[0]];
    let rank = order
        .iter()
        .take_while(|&&k| sv[k] > RANK_TOLERANCE * sv_max)
        .count();
    if retain > rank {
        return Err(CoreError::RankDeficient {
            field,
            requested: retain,
            attainable: rank,
        });
    }
    let scale = 1.0 / dv.sqrt();
    let mut modes = DMatrix::zeros(n_cells, retain);
    for (col, &k) in order.iter().take(retain).enumerate() {
        let mut dst = modes.column_mut(col);
        dst.copy_from(&u.column(k));
        dst *= scale;
        let mut peak = 0usize;
        for i in 1..n_cells {
            if dst[i].abs() > dst[peak].abs() {
                peak = i;
            }
        }
        if dst[peak] < 0.0 {
            dst.neg_mut();
        }
    }
    let singular_values = order.iter().map(|&k| sv[k] * dv.sqrt()).collect();
    Ok(FieldBasis {
        mean,
        modes,
        singular_values,
    })
}
