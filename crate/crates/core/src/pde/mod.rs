//! Deterministic 1-D oracle for the signed radial process.
//!
//! The radial part of the glued-space diffusion is autonomous: its density
//! with respect to the speed measure solves a Sturm-Liouville equation on
//! the line with the interface at 0. Tables produced here serve as the
//! reference against which the Monte Carlo engine and the perturbation
//! series are checked, and as the kernels entering the series itself.

pub mod grid;
pub mod solve;

pub use grid::{Boundary, Grid1D, PlaneWeightMode, ResolutionPolicy};
pub use solve::{delta_init, solve_kernel, KernelTable, SolveHistory, SolveOptions};

use crate::error::SolveError;
use crate::geometry::{signed_radial_embed, EPoint, ModelParams};
use rayon::prelude::*;
use std::io::Write;
use std::sync::Arc;

impl KernelTable {
    /// Density with respect to `m_p` at a point of the glued space.
    ///
    /// The speed-measure density on the line equals the `m_p` density at the
    /// radial representative: on the leg both measures carry the factor `p`,
    /// and on the plane the weight `2 pi (y + eps)` is exactly the Jacobian
    /// of the radial reduction.
    ///
    /// A table whose source sits on the plane side only determines the
    /// kernel at leg-side targets (the hit distribution on the leg depends
    /// on the source through its radius alone); plane-side queries against
    /// such a table are rejected as non-radial.
    pub fn kernel_to_e(&self, t: f64, y: &EPoint, params: &ModelParams) -> Result<f64, SolveError> {
        if self.grid.params() != params {
            return Err(SolveError::IncompatibleTables(
                "model parameters differ from the table's".into(),
            ));
        }
        if self.source > 0.0 && y.on_plane_side() && !y.is_star() {
            return Err(SolveError::NonRadialQuery);
        }
        self.value_at(t, signed_radial_embed(y, params))
    }

    /// Writes the table as CSV with columns `t,y,value,m_weight`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,y,value,m_weight")?;
        for (k, &t) in self.times.iter().enumerate() {
            for (i, &y) in self.grid.nodes().iter().enumerate() {
                writeln!(
                    out,
                    "{t},{y},{},{}",
                    self.values[k][i],
                    self.grid.node_measure()[i]
                )?;
            }
        }
        Ok(())
    }
}

/// Evenly spread signed coordinates used as composition targets.
pub fn default_targets(grid: &Grid1D, n: usize) -> Vec<f64> {
    let len = grid.len();
    (0..n)
        .map(|k| grid.nodes()[(k * (len - 1)) / (n - 1).max(1)])
        .collect()
}

/// Chapman-Kolmogorov defect of a driftless table:
/// `max_y | integral k(s, x0, z) k(t-s, z, y) m~(dz) - k(t, x0, y) |`
/// over the given targets. The inner kernel column is produced by an
/// independent solve started from each target (using symmetry of the
/// driftless kernel in the speed measure), so the residual measures real
/// discretization error rather than the stepper's own semigroup property.
pub fn chapman_kolmogorov_residual(
    table: &KernelTable,
    s: f64,
    t: f64,
    targets: &[f64],
    opts: &SolveOptions,
) -> Result<f64, SolveError> {
    if table.drifted {
        return Err(SolveError::IncompatibleTables(
            "composition oracle requires a driftless table".into(),
        ));
    }
    let ks = table.time_index(s)?;
    let kt = table.time_index(t)?;
    let tau = t - s;
    if tau <= 0.0 {
        return Err(SolveError::BadOutputTimes);
    }
    let grid = &table.grid;
    let m = grid.node_measure();
    let residuals: Result<Vec<f64>, SolveError> = targets
        .par_iter()
        .map(|&y| {
            let back = solve_kernel(grid, y, &[tau], None, opts)?;
            let composed: f64 = (0..grid.len())
                .map(|i| table.values[ks][i] * back.values[0][i] * m[i])
                .sum();
            let direct = table
                .grid
                .interp(&table.values[kt], y)
                .ok_or(SolveError::SourceOutsideGrid(y))?;
            Ok((composed - direct).abs())
        })
        .collect();
    Ok(residuals?
        .into_iter()
        .fold(0.0f64, f64::max))
}

/// Standard free-space grid for model runs: truncation walls far enough out
/// that the kernel mass outside is negligible for the horizon.
pub fn free_space_grid(
    params: ModelParams,
    l_leg: f64,
    l_plane: f64,
    h: f64,
) -> Result<Arc<Grid1D>, crate::error::GridError> {
    Ok(Arc::new(Grid1D::build(
        l_leg,
        l_plane,
        ResolutionPolicy::Uniform { h },
        params,
        PlaneWeightMode::Bessel,
        (Boundary::Truncation, Boundary::Truncation),
    )?))
}
