//! Series summation by source-driven level solves, and the
//! composition-based time extension.
//!
//! Each level solves `d/dt V_n = L V_n - ((beta w V_{n-1})')/w`, `V_n(0)=0`
//! along the same micro-step sequence as the base solve, so every level
//! integrates against the identical time discretization. Summation stops
//! once the envelope-weighted norm ratio `r_n` is below one and the
//! geometric tail bound `r_n/(1-r_n) ||k_n||` is below tolerance.

use super::{envelope_weighted_norm, LevelTable, SpaceTimeGrid};
use crate::drift::DriftSpec;
use crate::error::{SeriesError, SolveError};
use crate::geometry::ModelParams;
use crate::pde::solve::Stepper;
use crate::pde::{solve_kernel, KernelTable, SolveHistory, SolveOptions};
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct SeriesOptions {
    /// Envelope decay rate of the contraction norm.
    pub alpha_norm: f64,
    /// Stop once the tail bound falls below this tolerance.
    pub tol: f64,
    pub max_levels: usize,
    pub solve: SolveOptions,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            alpha_norm: 0.25,
            tol: 1e-5,
            max_levels: 14,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub norm: f64,
    /// `||k_n|| / ||k_{n-1}||`; absent for level zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesState {
    pub levels: Vec<LevelDiagnostics>,
    pub alpha_norm: f64,
    pub tail_bound: f64,
    pub converged: bool,
    pub horizon: f64,
}

impl SeriesState {
    /// Largest observed ratio between consecutive levels.
    pub fn max_ratio(&self) -> f64 {
        self.levels
            .iter()
            .filter_map(|l| l.ratio)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DuhamelSeries {
    pub st: SpaceTimeGrid,
    pub x0: f64,
    /// Partial sum at the output times over the grid nodes.
    pub sum: Vec<Vec<f64>>,
    /// Individual levels at the output times (level 0 first).
    pub levels: Vec<LevelTable>,
    pub state: SeriesState,
    /// Micro-step history of the partial sum, for Laplace transforms.
    pub sum_history: SolveHistory,
}

impl DuhamelSeries {
    pub fn times(&self) -> Vec<f64> {
        self.st.times()
    }

    /// Partial sum as a kernel table.
    pub fn as_table(&self) -> KernelTable {
        KernelTable {
            grid: std::sync::Arc::clone(&self.st.grid),
            times: self.st.times(),
            values: self.sum.clone(),
            source: self.x0,
            drifted: true,
            killed: false,
            worst_undershoot: 0.0,
            history: Some(self.sum_history.clone()),
        }
    }

    /// Minimum of the summed table over the output set.
    pub fn min_value(&self) -> f64 {
        self.sum
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Divergence-form source `-((beta w u)')/w` on the grid, central fluxes.
fn level_source(grid: &crate::pde::Grid1D, beta: &[f64], u: &[f64], out: &mut [f64]) {
    let n = grid.len();
    let mut flux = vec![0.0; n - 1];
    for e in 0..n - 1 {
        let b_edge = 0.5 * (beta[e] + beta[e + 1]);
        flux[e] = b_edge * grid.edge_weight()[e] * 0.5 * (u[e] + u[e + 1]);
    }
    for i in 0..n {
        let f_in = if i > 0 { flux[i - 1] } else { 0.0 };
        let f_out = if i < n - 1 { flux[i] } else { 0.0 };
        out[i] = (f_in - f_out) / grid.node_measure()[i];
    }
}

/// Sums the perturbation series from `x0` on the space-time grid.
pub fn sum_series(
    st: &SpaceTimeGrid,
    x0: f64,
    drift: &DriftSpec,
    params: &ModelParams,
    opts: &SeriesOptions,
) -> Result<DuhamelSeries, SeriesError> {
    let grid = &st.grid;
    let times = st.times();
    let mut solve_opts = opts.solve.clone();
    solve_opts.store_history = true;
    // cap the micro step by the time-node spacing so level sources are
    // resolved on the node scale
    solve_opts.dt_cap = Some(solve_opts.dt_cap.unwrap_or(f64::INFINITY).min(st.dt));

    let base = solve_kernel(grid, x0, &times, None, &solve_opts)?;
    let base_history = base
        .history
        .clone()
        .expect("base solve stores its history");
    let beta = drift.sample_line(grid.nodes());

    let mut levels = vec![LevelTable {
        times: times.clone(),
        targets: grid.nodes().to_vec(),
        values: base.values.clone(),
    }];
    let mut diagnostics = vec![LevelDiagnostics {
        level: 0,
        norm: envelope_weighted_norm(&levels[0], x0, opts.alpha_norm, params),
        ratio: None,
    }];
    let mut sum = base.values.clone();
    let mut sum_history = base_history.clone();
    let mut prev_history = base_history;
    let mut tail_bound = f64::INFINITY;
    let mut converged = false;

    for level in 1..=opts.max_levels {
        if drift.is_zero() {
            tail_bound = 0.0;
            converged = true;
            break;
        }
        // drive the level along the identical micro-step sequence
        let mut stepper = Stepper::new(grid, None, &solve_opts)?;
        let mut cursor = 0usize;
        let mut source = |t: f64, out: &mut [f64]| {
            debug_assert!(
                (prev_history.times[cursor] - t).abs() <= 1e-12 * t.max(1e-12),
                "level source queried off the shared step sequence"
            );
            level_source(grid, &beta, &prev_history.states[cursor], out);
            cursor += 1;
        };
        let init = vec![0.0; grid.len()];
        let (values, history, _) = stepper.drive(
            init,
            &times,
            true,
            Some(&mut source as &mut dyn FnMut(f64, &mut [f64])),
        )?;
        let table = LevelTable {
            times: times.clone(),
            targets: grid.nodes().to_vec(),
            values,
        };
        let norm = envelope_weighted_norm(&table, x0, opts.alpha_norm, params);
        let prev_norm = diagnostics.last().unwrap().norm;
        let ratio = if prev_norm > 0.0 {
            norm / prev_norm
        } else {
            0.0
        };
        diagnostics.push(LevelDiagnostics {
            level,
            norm,
            ratio: Some(ratio),
        });

        let history = history.expect("level solve stores history");
        for (k, row) in table.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                sum[k][i] += v;
            }
        }
        for (k, state) in history.states.iter().enumerate() {
            for (i, v) in state.iter().enumerate() {
                sum_history.states[k][i] += v;
            }
        }
        prev_history = history;
        levels.push(table);

        // non-contraction abort: two consecutive ratios at or above one
        let ratios: Vec<f64> = diagnostics.iter().filter_map(|d| d.ratio).collect();
        if ratios.len() >= 2
            && ratios[ratios.len() - 1] >= 1.0
            && ratios[ratios.len() - 2] >= 1.0
        {
            return Err(SeriesError::NotContracting {
                r_prev: ratios[ratios.len() - 2],
                r_curr: ratios[ratios.len() - 1],
            });
        }
        if ratio < 1.0 {
            tail_bound = ratio / (1.0 - ratio) * norm;
            if tail_bound < opts.tol {
                converged = true;
                break;
            }
        }
    }

    Ok(DuhamelSeries {
        st: st.clone(),
        x0,
        sum,
        levels,
        state: SeriesState {
            levels: diagnostics,
            alpha_norm: opts.alpha_norm,
            tail_bound,
            converged,
            horizon: st.horizon(),
        },
        sum_history,
    })
}

/// Extends a summed table beyond its horizon by kernel composition: the
/// final slice is evolved under the drifted dynamics, which by linearity
/// is exactly the speed-measure composition with the drifted kernel,
/// applied once per covered horizon.
pub fn extend_time(
    series: &DuhamelSeries,
    drift: &DriftSpec,
    target: f64,
    output_times: &[f64],
    opts: &SolveOptions,
) -> Result<KernelTable, SeriesError> {
    let t1 = series.st.horizon();
    if target <= t1 {
        return Err(SeriesError::BadGrid(format!(
            "extension target {target} not beyond the series horizon {t1}"
        )));
    }
    if output_times.iter().any(|&t| t <= t1 || t > target + 1e-12) {
        return Err(SolveError::BadOutputTimes.into());
    }
    let grid = &series.st.grid;
    let beta = drift.sample_line(grid.nodes());
    let mut stepper = Stepper::new(grid, Some(&beta), opts)?;
    // shift to the horizon frame; the ramp restarts from the composition
    // anchor, matching a fresh application of the kernel
    let shifted: Vec<f64> = output_times.iter().map(|&t| t - t1).collect();
    let init = series.sum.last().expect("series has output times").clone();
    let (values, _, _) = stepper.drive(init, &shifted, false, None)?;
    Ok(KernelTable {
        grid: std::sync::Arc::clone(grid),
        times: output_times.to_vec(),
        values,
        source: series.x0,
        drifted: true,
        killed: false,
        worst_undershoot: 0.0,
        history: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::free_space_grid;
    use std::sync::Arc;

    fn params() -> ModelParams {
        ModelParams::new(0.25, 1.0).unwrap()
    }

    fn series_grid() -> SpaceTimeGrid {
        let grid = free_space_grid(params(), 2.5, 2.5, 0.02).unwrap();
        SpaceTimeGrid::new(grid, 0.0125, 10).unwrap()
    }

    #[test]
    fn zero_drift_reproduces_level_zero() {
        let st = series_grid();
        let s = sum_series(&st, 0.0, &DriftSpec::zero(), &params(), &SeriesOptions::default())
            .unwrap();
        assert_eq!(s.levels.len(), 1);
        assert!(s.state.converged);
        assert_eq!(s.state.tail_bound, 0.0);
        assert_eq!(s.sum, s.levels[0].values);
    }

    #[test]
    fn levels_carry_no_mass() {
        let st = series_grid();
        let drift = DriftSpec::smooth_bump(0.5, 0.4);
        let s = sum_series(&st, -0.3, &drift, &params(), &SeriesOptions::default()).unwrap();
        assert!(s.levels.len() >= 3, "expected at least two levels");
        let grid = &st.grid;
        for lvl in &s.levels[1..] {
            for row in &lvl.values {
                let mass: f64 = row
                    .iter()
                    .zip(grid.node_measure())
                    .map(|(u, m)| u * m)
                    .sum();
                assert!(mass.abs() < 1e-10, "level mass {mass:.2e}");
            }
        }
        // the partial sum keeps unit mass
        let total: f64 = s
            .sum
            .last()
            .unwrap()
            .iter()
            .zip(grid.node_measure())
            .map(|(u, m)| u * m)
            .sum();
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn summed_series_matches_drifted_solve() {
        let st = series_grid();
        let pr = params();
        let drift = DriftSpec::smooth_bump(0.5, 0.4);
        let s = sum_series(&st, 0.0, &drift, &pr, &SeriesOptions::default()).unwrap();
        assert!(s.state.converged, "series converged");
        assert!(s.state.max_ratio() < 0.5, "ratio {}", s.state.max_ratio());
        let beta = drift.sample_line(st.grid.nodes());
        let direct = solve_kernel(
            &st.grid,
            0.0,
            &st.times(),
            Some(&beta),
            &SolveOptions::default(),
        )
        .unwrap();
        // L1 distance at the horizon
        let k = st.n_times - 1;
        let l1: f64 = s.sum[k]
            .iter()
            .zip(&direct.values[k])
            .zip(st.grid.node_measure())
            .map(|((a, b), m)| (a - b).abs() * m)
            .sum();
        assert!(l1 < 0.02, "series vs drifted solve L1 = {l1:.4}");
        // positivity of the summed kernel on the window
        assert!(s.min_value() > -1e-9);
    }

    #[test]
    fn series_level_one_matches_quadrature_route() {
        // the source-form level and the explicit space-time quadrature are
        // two discretizations of the same object
        let st = series_grid();
        let pr = params();
        let drift = DriftSpec::const_leg(0.6, 1.5);
        let opts = SeriesOptions::default();
        let s = sum_series(&st, -0.4, &drift, &pr, &opts).unwrap();
        let (k0, _) = super::super::level_zero(&st, -0.4, &opts.solve).unwrap();
        let targets = [-0.9_f64, -0.2, 0.5];
        let grads = super::super::grad_kernel_tables(&st, &targets, &opts.solve).unwrap();
        let k1 = super::super::k_next(&k0, &drift, &grads, &st).unwrap();
        for (j, &y) in targets.iter().enumerate() {
            let got = k1.values[st.n_times - 1][j];
            let node = st
                .grid
                .nodes()
                .iter()
                .position(|&z| (z - y).abs() < 1e-9)
                .unwrap();
            let reference = s.levels[1].values[st.n_times - 1][node];
            assert!(
                (got - reference).abs() < 0.02 * reference.abs().max(0.02),
                "route mismatch at y={y}: {got:.5} vs {reference:.5}"
            );
        }
    }

    #[test]
    fn extension_reproduces_direct_solve() {
        let st = series_grid();
        let pr = params();
        let drift = DriftSpec::smooth_bump(0.5, 0.4);
        let s = sum_series(&st, 0.0, &drift, &pr, &SeriesOptions::default()).unwrap();
        let t1 = st.horizon();
        let outs = [1.5 * t1, 2.0 * t1];
        let ext = extend_time(&s, &drift, 2.0 * t1, &outs, &SolveOptions::default()).unwrap();
        // mass is conserved through the composition
        for &t in &outs {
            assert!((ext.mass(t).unwrap() - 1.0).abs() < 1e-7);
        }
        let beta = drift.sample_line(st.grid.nodes());
        let direct =
            solve_kernel(&st.grid, 0.0, &outs, Some(&beta), &SolveOptions::default()).unwrap();
        let l1: f64 = ext.values[1]
            .iter()
            .zip(&direct.values[1])
            .zip(st.grid.node_measure())
            .map(|((a, b), m)| (a - b).abs() * m)
            .sum();
        assert!(l1 < 0.03, "extension vs direct solve L1 = {l1:.4}");
        // rejects targets inside the original horizon
        assert!(extend_time(&s, &drift, 0.5 * t1, &[0.4 * t1], &SolveOptions::default()).is_err());
    }

    #[test]
    fn composition_residual_of_summed_kernel() {
        // forward-composing the half-horizon slice reproduces the summed
        // kernel at the horizon within grid tolerance
        let grid = free_space_grid(params(), 2.5, 2.5, 0.02).unwrap();
        let st = SpaceTimeGrid::new(Arc::clone(&grid), 0.0125, 10).unwrap();
        let pr = params();
        let drift = DriftSpec::smooth_bump(0.5, 0.4);
        let s = sum_series(&st, 0.0, &drift, &pr, &SeriesOptions::default()).unwrap();
        let half = st.horizon() / 2.0;
        let k_half = st.n_times / 2 - 1;
        let beta = drift.sample_line(grid.nodes());
        let mut stepper = Stepper::new(&grid, Some(&beta), &SolveOptions::default()).unwrap();
        let (vals, _, _) = stepper
            .drive(s.sum[k_half].clone(), &[half], false, None)
            .unwrap();
        let residual = vals[0]
            .iter()
            .zip(&s.sum[st.n_times - 1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(residual < 5e-3, "composition residual {residual:.2e}");
    }
}
