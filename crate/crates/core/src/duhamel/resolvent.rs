//! Resolvent identity check: the Laplace transform of the summed kernel
//! against the iterated driftless-resolvent composition
//! `G_a^b f = sum_n G_a^0 (b . grad G_a^0)^n f`.
//!
//! The discrete driftless resolvent is the exact tridiagonal inverse
//! `(a - L_h)^{-1}`; the left side integrates the stored micro-step
//! history of the summed kernel. The reported budget combines the series
//! tail, a Richardson estimate of the Laplace quadrature error, the
//! horizon truncation and a spatial discretization allowance.

use super::series::DuhamelSeries;
use crate::drift::DriftSpec;
use crate::error::SeriesError;
use crate::geometry::{from_signed_radial, ModelParams};
use crate::kernels::{envelope, EnvelopeVariant};
use crate::pde::Grid1D;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ResolventReport {
    pub alpha: f64,
    pub n_terms: usize,
    /// Max over the test battery of `|Laplace side - composition side|`.
    pub residual: f64,
    /// Self-consistent error budget the residual is compared against.
    pub budget: f64,
    pub per_term_ratios: Vec<f64>,
    pub laplace_error_estimate: f64,
    pub series_tail_contribution: f64,
    pub horizon_tail: f64,
    pub spatial_allowance: f64,
}

/// Exact tridiagonal solve of `(alpha - L_h) u = f` with the grid's
/// boundary rows.
fn resolvent_apply(grid: &Grid1D, alpha: f64, f: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let cond = grid.edge_conductance();
    let m = grid.node_measure();
    let absorbing = |left: bool| -> bool {
        let (l, r) = grid.bc();
        if left {
            l == crate::pde::Boundary::Absorbing
        } else {
            r == crate::pde::Boundary::Absorbing
        }
    };
    let mut diag = vec![0.0; n];
    let mut rhs = f.to_vec();
    for i in 0..n {
        let gl = if i > 0 { cond[i - 1] } else { 0.0 };
        let gr = if i < n - 1 { cond[i] } else { 0.0 };
        diag[i] = alpha + (gl + gr) / m[i];
    }
    if absorbing(true) {
        diag[0] = 1.0;
        rhs[0] = 0.0;
    }
    if absorbing(false) {
        diag[n - 1] = 1.0;
        rhs[n - 1] = 0.0;
    }
    let lower = |i: usize| -> f64 {
        if i == 0 || (i == n - 1 && absorbing(false)) {
            0.0
        } else {
            -cond[i - 1] / m[i]
        }
    };
    let upper = |i: usize| -> f64 {
        if i == n - 1 || (i == 0 && absorbing(true)) {
            0.0
        } else {
            -cond[i] / m[i]
        }
    };
    let mut cp = vec![0.0; n];
    cp[0] = upper(0) / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let denom = diag[i] - lower(i) * cp[i - 1];
        cp[i] = upper(i) / denom;
        rhs[i] = (rhs[i] - lower(i) * rhs[i - 1]) / denom;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = rhs[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = rhs[i] - cp[i] * u[i + 1];
    }
    u
}

fn trapezoid_laplace(times: &[f64], phi: &[f64], alpha: f64, stride: usize) -> f64 {
    let mut total = 0.0;
    let mut prev_idx = 0usize;
    let mut idx = stride;
    while prev_idx + 1 < times.len() {
        if idx >= times.len() {
            idx = times.len() - 1;
        }
        let (t0, t1) = (times[prev_idx], times[idx]);
        let f0 = phi[prev_idx] * (-alpha * t0).exp();
        let f1 = phi[idx] * (-alpha * t1).exp();
        total += 0.5 * (f0 + f1) * (t1 - t0);
        prev_idx = idx;
        idx += stride;
    }
    total
}

/// Checks the resolvent identity on the summed series.
pub fn resolvent_check(
    series: &DuhamelSeries,
    drift: &DriftSpec,
    params: &ModelParams,
    alpha: f64,
    n_terms: usize,
) -> Result<ResolventReport, SeriesError> {
    let grid = &series.st.grid;
    let nodes = grid.nodes();
    let n = nodes.len();
    let measures = grid.node_measure();
    let beta = drift.sample_line(nodes);
    let history = &series.sum_history;

    // deterministic localized test battery
    let battery: Vec<Vec<f64>> = [(-0.8_f64, 0.3_f64), (0.0, 0.25), (0.9, 0.35)]
        .iter()
        .map(|&(c, w)| {
            nodes
                .iter()
                .map(|&z| (-(z - c) * (z - c) / (2.0 * w * w)).exp())
                .collect()
        })
        .collect();

    let x0 = series.x0;
    let mut residual = 0.0f64;
    let mut laplace_err = 0.0f64;
    let mut horizon_tail = 0.0f64;
    let mut ratios_worst: Vec<f64> = vec![0.0; n_terms];
    let mut rhs_scale = 0.0f64;
    for f in &battery {
        // Laplace side: phi(t) = <p^b(t, x0, .), f>_m over the micro history
        let phi: Vec<f64> = history
            .states
            .iter()
            .map(|u| {
                (0..n)
                    .map(|i| u[i] * f[i] * measures[i])
                    .sum::<f64>()
            })
            .collect();
        let lhs_fine = trapezoid_laplace(&history.times, &phi, alpha, 1);
        let lhs_coarse = trapezoid_laplace(&history.times, &phi, alpha, 2);
        laplace_err = laplace_err.max((lhs_fine - lhs_coarse).abs() / 3.0);
        let t_end = *history.times.last().unwrap();
        let tail = phi.last().unwrap().abs() * (-alpha * t_end).exp() / alpha;
        horizon_tail = horizon_tail.max(tail);
        let lhs = lhs_fine + phi.last().unwrap() * (-alpha * t_end).exp() / alpha;

        // composition side at x0
        let mut term = resolvent_apply(grid, alpha, f);
        let mut rhs_val = grid.interp(&term, x0).expect("x0 on grid");
        let mut prev_norm = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n_terms {
            let grad = super::spatial_gradient(grid, &term);
            let forced: Vec<f64> = (0..n).map(|i| beta[i] * grad[i]).collect();
            term = resolvent_apply(grid, alpha, &forced);
            let norm = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let ratio = if prev_norm > 0.0 { norm / prev_norm } else { 0.0 };
            ratios_worst[k] = ratios_worst[k].max(ratio);
            prev_norm = norm;
            rhs_val += grid.interp(&term, x0).expect("x0 on grid");
        }
        rhs_scale = rhs_scale.max(rhs_val.abs());
        residual = residual.max((lhs - rhs_val).abs());
    }
    if !drift.is_zero() {
        if let Some(&r) = ratios_worst.first() {
            if r >= 1.0 {
                return Err(SeriesError::ResolventDiverging { alpha, ratio: r });
            }
        }
    }

    // series tail converted to a Laplace-side bound through the envelope
    let series_tail = if series.state.tail_bound.is_finite() {
        let v = EnvelopeVariant::new(0, series.state.alpha_norm);
        let x_pt = from_signed_radial(x0, params).expect("x0 representable");
        let mut env_mass = 0.0f64;
        for &t in &[series.st.dt, series.st.horizon() / 2.0, series.st.horizon()] {
            let mass: f64 = nodes
                .iter()
                .zip(measures)
                .map(|(&z, &m)| {
                    let z_pt = from_signed_radial(z, params).expect("node");
                    envelope(&v, t, &x_pt, &z_pt, params) * m
                })
                .sum();
            env_mass = env_mass.max(mass);
        }
        series.state.tail_bound * env_mass / alpha
    } else {
        f64::INFINITY
    };
    let spatial = 2.0 * alpha * grid.max_spacing().powi(2) * rhs_scale;
    let budget = series_tail + 4.0 * laplace_err + 0.5 * horizon_tail + spatial;

    Ok(ResolventReport {
        alpha,
        n_terms,
        residual,
        budget,
        per_term_ratios: ratios_worst,
        laplace_error_estimate: laplace_err,
        series_tail_contribution: series_tail,
        horizon_tail,
        spatial_allowance: spatial,
    })
}
