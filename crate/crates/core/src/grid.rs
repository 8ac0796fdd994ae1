//! Uniform Cartesian grid over the chip and the full-state layout.
//!
//! The chip is discretized into cubic cells of edge `h` [m]. A full state
//! `z` is a vector of length `2 N` holding the cell moisture contents first
//! and the cell temperatures second: `z = [x_0 .. x_{N-1}, T_0 .. T_{N-1}]`.
//! Cells are linearized row-major with the x index running fastest:
//! `idx = i + nx (j + ny k)`. This layout is frozen; every artifact and
//! every basis matrix depends on it.

use crate::error::{CoreError, Result};
use nalgebra::DVector;

/// An interior face between two adjacent cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorFace {
    /// Cell on the lower-coordinate side.
    pub a: usize,
    /// Cell on the higher-coordinate side.
    pub b: usize,
    /// Grid axis the face is normal to (0 = x, 1 = y, 2 = z).
    pub axis: usize,
}

/// Uniform grid with precomputed face tables.
#[derive(Debug, Clone)]
pub struct Grid {
    /// Cell counts per axis.
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell edge length [m].
    pub h: f64,
    /// Interior faces in a fixed deterministic order (x faces, then y, then z,
    /// each block in row-major cell order).
    interior_faces: Vec<InteriorFace>,
    /// Number of boundary faces of each cell (0 through 6).
    boundary_face_count: Vec<u8>,
    /// Cells with at least one boundary face, with their face count.
    boundary_cells: Vec<(usize, f64)>,
}

impl Grid {
    /// Builds the grid and its face tables.
    pub fn new(nx: usize, ny: usize, nz: usize, h: f64) -> Result<Self> {
        for (name, value) in [("nx", nx), ("ny", ny), ("nz", nz)] {
            if value == 0 {
                return Err(CoreError::InvalidParameter {
                    name,
                    reason: "grid needs at least one cell per axis",
                    value: value as f64,
                });
            }
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "h",
                reason: "cell edge must be strictly positive",
                value: h,
            });
        }
        let n = nx * ny * nz;
        let mut interior_faces = Vec::new();
        let strides = [1, nx, nx * ny];
        let dims = [nx, ny, nz];
        for axis in 0..3 {
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let along = [i, j, k][axis];
                        if along + 1 < dims[axis] {
                            let a = i + nx * (j + ny * k);
                            interior_faces.push(InteriorFace {
                                a,
                                b: a + strides[axis],
                                axis,
                            });
                        }
                    }
                }
            }
        }
        let mut boundary_face_count = vec![0u8; n];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let mut count = 0u8;
                    for (along, dim) in [(i, nx), (j, ny), (k, nz)] {
                        if along == 0 {
                            count += 1;
                        }
                        if along + 1 == dim {
                            count += 1;
                        }
                    }
                    boundary_face_count[i + nx * (j + ny * k)] = count;
                }
            }
        }
        let boundary_cells = boundary_face_count
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(idx, &c)| (idx, c as f64))
            .collect();
        Ok(Self {
            nx,
            ny,
            nz,
            h,
            interior_faces,
            boundary_face_count,
            boundary_cells,
        })
    }

    /// The default full-size chip: 10 mm x 20 mm x 5 mm at h = 1 mm.
    pub fn default_chip() -> Self {
        Self::new(10, 20, 5, 1.0e-3).expect("default chip dimensions are valid")
    }

    /// Number of cells.
    pub fn num_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Length of a full state vector (moisture and temperature blocks).
    pub fn state_len(&self) -> usize {
        2 * self.num_cells()
    }

    /// Cell volume [m^3].
    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    /// Face area [m^2].
    pub fn face_area(&self) -> f64 {
        self.h * self.h
    }

    /// Total chip volume [m^3].
    pub fn total_volume(&self) -> f64 {
        self.cell_volume() * self.num_cells() as f64
    }

    /// Linear cell index of integer coordinates (i, j, k).
    pub fn index(&self, i: usize, j: usize, k: usize) -> Result<usize> {
        if i >= self.nx || j >= self.ny || k >= self.nz {
            return Err(CoreError::DimensionMismatch {
                context: "grid cell coordinates",
                expected: self.num_cells(),
                actual: i + self.nx * (j + self.ny * k),
            });
        }
        Ok(i + self.nx * (j + self.ny * k))
    }

    /// Integer coordinates (i, j, k) of a linear cell index.
    pub fn coords(&self, idx: usize) -> Result<(usize, usize, usize)> {
        if idx >= self.num_cells() {
            return Err(CoreError::DimensionMismatch {
                context: "grid cell index",
                expected: self.num_cells(),
                actual: idx,
            });
        }
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        Ok((i, j, k))
    }

    /// Physical coordinates of a cell center [m].
    pub fn cell_center(&self, idx: usize) -> Result<[f64; 3]> {
        let (i, j, k) = self.coords(idx)?;
        Ok([
            (i as f64 + 0.5) * self.h,
            (j as f64 + 0.5) * self.h,
            (k as f64 + 0.5) * self.h,
        ])
    }

    /// Interior faces in their frozen deterministic order.
    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    /// Cells touching the boundary, with their boundary face counts.
    pub fn boundary_cells(&self) -> &[(usize, f64)] {
        &self.boundary_cells
    }

    /// Number of boundary faces of one cell.
    pub fn boundary_face_count(&self, idx: usize) -> u8 {
        self.boundary_face_count[idx]
    }

    /// Total number of boundary faces (surface area / h^2).
    pub fn num_boundary_faces(&self) -> usize {
        self.boundary_face_count.iter().map(|&c| c as usize).sum()
    }

    /// Volume-weighted inner product of two cell fields:
    /// `<a, b> = sum_i a_i b_i dV`. Also valid for full states.
    pub fn inner_product(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(CoreError::DimensionMismatch {
                context: "inner product operands",
                expected: a.len(),
                actual: b.len(),
            });
        }
        let dv = self.cell_volume();
        Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dv)
    }

    /// Total (mean) moisture content of a full state [kg/kg].
    ///
    /// On a uniform grid the volume average reduces to the arithmetic mean
    /// of the moisture block.
    pub fn total_moisture(&self, state: &DVector<f64>) -> Result<f64> {
        let n = self.num_cells();
        if state.len() != 2 * n {
            return Err(CoreError::DimensionMismatch {
                context: "full state length",
                expected: 2 * n,
                actual: state.len(),
            });
        }
        Ok(state.as_slice()[..n].iter().sum::<f64>() / n as f64)
    }

    /// Moisture block of a full state.
    pub fn moisture<'a>(&self, state: &'a DVector<f64>) -> &'a [f64] {
        &state.as_slice()[..self.num_cells()]
    }

    /// Temperature block of a full state.
    pub fn temperature<'a>(&self, state: &'a DVector<f64>) -> &'a [f64] {
        &state.as_slice()[self.num_cells()..]
    }

    /// Builds a uniform full state from one moisture and one temperature value.
    pub fn uniform_state(&self, x: f64, temperature: f64) -> DVector<f64> {
        let n = self.num_cells();
        let mut z = DVector::zeros(2 * n);
        for i in 0..n {
            z[i] = x;
            z[n + i] = temperature;
        }
        z
    }
}
