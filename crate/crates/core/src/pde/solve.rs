//! Crank-Nicolson time stepping of the transmission operator.
//!
//! The operator `(L u)_i = (g_l (u_{i-1} - u_i) + g_r (u_{i+1} - u_i)) / m_i`
//! is stepped with the trapezoidal rule; mass is conserved to solver
//! roundoff for truncation walls and non-increasing for absorbing walls.
//! Delta initial data needs small first steps, so the step size ramps
//! geometrically, `dt ~ theta * t`, capped at `dt_cap`; while `dt` stays
//! below the explicit-positivity bound the scheme cannot undershoot, and by
//! the time the ramp passes that bound the high modes carry amplitudes of
//! order `exp(-2/theta)`.
//!
//! Drift transport `-( (beta w u)' ) / w` is applied in flux form with
//! upwinding, split symmetrically around the diffusion half-steps. An
//! inhomogeneous source hook drives the perturbation-series levels.

use super::grid::{Boundary, Grid1D};
use crate::error::SolveError;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Ramp slope coefficient: `theta = min(theta_coeff * h_min, theta_max)`.
    pub theta_coeff: f64,
    pub theta_max: f64,
    /// Hard cap on the step size; defaults to the minimum spacing.
    pub dt_cap: Option<f64>,
    /// Reject node-sampled drifts with magnitude above this cap.
    pub drift_cap: f64,
    /// Keep the full micro-step history (needed by the series machinery).
    pub store_history: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            theta_coeff: 10.0,
            theta_max: 0.02,
            dt_cap: None,
            drift_cap: 64.0,
            store_history: false,
        }
    }
}

/// Micro-step record of a solve: states at every accepted step, shared by
/// the series levels so that all levels integrate along one step sequence.
#[derive(Debug, Clone)]
pub struct SolveHistory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Discretized kernel slice stack: density values with respect to the speed
/// measure at the requested output times.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: Arc<Grid1D>,
    pub times: Vec<f64>,
    /// `values[k][i]` = density at `times[k]`, node `i`.
    pub values: Vec<Vec<f64>>,
    pub source: f64,
    pub drifted: bool,
    pub killed: bool,
    pub worst_undershoot: f64,
    pub history: Option<SolveHistory>,
}

pub(crate) struct Stepper<'a> {
    grid: &'a Grid1D,
    /// Node-sampled transport field on the signed coordinate.
    drift: Option<Vec<f64>>,
    theta: f64,
    dt_min: f64,
    dt_cap: f64,
    // scratch for the Thomas solve
    diag: Vec<f64>,
    rhs: Vec<f64>,
    cprime: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a Grid1D,
        drift: Option<&[f64]>,
        opts: &SolveOptions,
    ) -> Result<Self, SolveError> {
        let n = grid.len();
        if let Some(beta) = drift {
            assert_eq!(beta.len(), n, "drift must be sampled at grid nodes");
            for (i, &b) in beta.iter().enumerate() {
                if b.abs() > opts.drift_cap {
                    return Err(SolveError::DriftTooLarge {
                        max: b.abs(),
                        node: i,
                        cap: opts.drift_cap,
                    });
                }
            }
            // cell Peclet number |beta| h / D with D = 1/2
            let mut peclet_max = 0.0f64;
            for i in 0..n - 1 {
                let h = grid.nodes()[i + 1] - grid.nodes()[i];
                let b = 0.5 * (beta[i].abs() + beta[i + 1].abs());
                peclet_max = peclet_max.max(2.0 * b * h);
            }
            if peclet_max >= 2.0 {
                return Err(SolveError::DriftUnderResolved(peclet_max));
            }
        }

        let h_min = grid.min_spacing();
        let theta = (opts.theta_coeff * h_min).min(opts.theta_max);
        // explicit-positivity bound for the trapezoidal half step
        let mut dt_pos = f64::INFINITY;
        for i in 0..n {
            let gl = if i > 0 { grid.edge_conductance()[i - 1] } else { 0.0 };
            let gr = if i + 1 < n { grid.edge_conductance()[i] } else { 0.0 };
            dt_pos = dt_pos.min(2.0 * grid.node_measure()[i] / (gl + gr));
        }
        let mut dt_cap = opts.dt_cap.unwrap_or(h_min).min(grid.max_spacing());
        if let Some(beta) = drift {
            let bmax = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            if bmax > 0.0 {
                // transport CFL for the explicit upwind half-steps
                while dt_cap * bmax / h_min > 0.9 {
                    dt_cap *= 0.5;
                }
            }
        }
        Ok(Self {
            grid,
            drift: drift.map(|d| d.to_vec()),
            theta,
            dt_min: (0.45 * dt_pos).min(dt_cap),
            dt_cap,
            diag: vec![0.0; n],
            rhs: vec![0.0; n],
            cprime: vec![0.0; n],
        })
    }

    fn dt_policy(&self, t: f64) -> f64 {
        (self.theta * t).max(self.dt_min).min(self.dt_cap)
    }

    fn absorbing(&self, left: bool) -> bool {
        let (l, r) = self.grid.bc();
        if left {
            l == Boundary::Absorbing
        } else {
            r == Boundary::Absorbing
        }
    }

    /// Explicit upwind transport over `dt` in conservative flux form.
    fn transport(&self, u: &mut [f64], dt: f64) {
        let beta = match &self.drift {
            Some(b) => b,
            None => return,
        };
        let n = u.len();
        let g = self.grid;
        let mut flux = vec![0.0; n - 1];
        for e in 0..n - 1 {
            let b_edge = 0.5 * (beta[e] + beta[e + 1]);
            let up = if b_edge >= 0.0 { u[e] } else { u[e + 1] };
            flux[e] = b_edge * g.edge_weight()[e] * up;
        }
        for i in 0..n {
            let f_in = if i > 0 { flux[i - 1] } else { 0.0 };
            let f_out = if i < n - 1 { flux[i] } else { 0.0 };
            u[i] += dt * (f_in - f_out) / g.node_measure()[i];
        }
        if self.absorbing(true) {
            u[0] = 0.0;
        }
        if self.absorbing(false) {
            u[n - 1] = 0.0;
        }
    }

    /// One trapezoidal step of the diffusion operator plus an optional
    /// source term evaluated at both step ends.
    fn diffuse(&mut self, u: &mut [f64], dt: f64, source: Option<(&[f64], &[f64])>) {
        let n = u.len();
        let g = self.grid;
        let cond = g.edge_conductance();
        let m = g.node_measure();
        let half = 0.5 * dt;

        // rhs = (I + dt/2 L) u + dt/2 (s0 + s1)
        for i in 0..n {
            let gl = if i > 0 { cond[i - 1] } else { 0.0 };
            let gr = if i < n - 1 { cond[i] } else { 0.0 };
            let lu = (if i > 0 { gl * (u[i - 1] - u[i]) } else { 0.0 }
                + if i < n - 1 { gr * (u[i + 1] - u[i]) } else { 0.0 })
                / m[i];
            self.rhs[i] = u[i] + half * lu;
            if let Some((s0, s1)) = source {
                self.rhs[i] += half * (s0[i] + s1[i]);
            }
            self.diag[i] = 1.0 + half * (gl + gr) / m[i];
        }
        let absorb_l = self.absorbing(true);
        let absorb_r = self.absorbing(false);
        if absorb_l {
            self.diag[0] = 1.0;
            self.rhs[0] = 0.0;
        }
        if absorb_r {
            self.diag[n - 1] = 1.0;
            self.rhs[n - 1] = 0.0;
        }

        // Thomas solve of (I - dt/2 L) u' = rhs; off-diagonals are
        // -dt/2 g_e / m_i, zeroed on absorbing rows.
        let lower = |i: usize| -> f64 {
            if (i == n - 1 && absorb_r) || i == 0 {
                0.0
            } else {
                -half * cond[i - 1] / m[i]
            }
        };
        let upper = |i: usize| -> f64 {
            if (i == 0 && absorb_l) || i == n - 1 {
                0.0
            } else {
                -half * cond[i] / m[i]
            }
        };
        self.cprime[0] = upper(0) / self.diag[0];
        self.rhs[0] /= self.diag[0];
        for i in 1..n {
            let denom = self.diag[i] - lower(i) * self.cprime[i - 1];
            self.cprime[i] = upper(i) / denom;
            self.rhs[i] = (self.rhs[i] - lower(i) * self.rhs[i - 1]) / denom;
        }
        u[n - 1] = self.rhs[n - 1];
        for i in (0..n - 1).rev() {
            u[i] = self.rhs[i] - self.cprime[i] * u[i + 1];
        }
    }

    /// Advance `u` from `t` by `dt`: half transport, diffusion, half
    /// transport.
    pub fn step(&mut self, u: &mut [f64], dt: f64, source: Option<(&[f64], &[f64])>) {
        if self.drift.is_some() {
            self.transport(u, 0.5 * dt);
        }
        self.diffuse(u, dt, source);
        if self.drift.is_some() {
            self.transport(u, 0.5 * dt);
        }
    }

    /// Full drive from `t = 0`, recording slices at `output_times` and
    /// optionally every micro step. `init` is the state at time zero.
    /// `source(t, buf)` fills the inhomogeneity at time `t`.
    pub fn drive(
        &mut self,
        init: Vec<f64>,
        output_times: &[f64],
        store_history: bool,
        mut source: Option<&mut dyn FnMut(f64, &mut [f64])>,
    ) -> Result<(Vec<Vec<f64>>, Option<SolveHistory>, f64), SolveError> {
        if output_times.is_empty()
            || output_times.windows(2).any(|w| w[1] <= w[0])
            || output_times[0] <= 0.0
        {
            return Err(SolveError::BadOutputTimes);
        }
        let n = init.len();
        let mut u = init;
        let mut t = 0.0;
        let mut slices = Vec::with_capacity(output_times.len());
        let mut history = store_history.then(|| SolveHistory {
            times: vec![0.0],
            states: vec![u.clone()],
        });
        let mut undershoot = 0.0f64;
        let mut s0 = vec![0.0; n];
        let mut s1 = vec![0.0; n];
        if let Some(src) = source.as_mut() {
            src(0.0, &mut s0);
        }
        let t_end = *output_times.last().unwrap();
        let mut next_out = 0usize;
        while t < t_end - 1e-15 * t_end {
            let mut dt = self.dt_policy(t);
            let target = output_times[next_out];
            if t + dt >= target - 1e-12 * target {
                dt = target - t;
            }
            if let Some(src) = source.as_mut() {
                src(t + dt, &mut s1);
                self.step(&mut u, dt, Some((&s0, &s1)));
                std::mem::swap(&mut s0, &mut s1);
            } else {
                self.step(&mut u, dt, None);
            }
            t += dt;
            for &v in u.iter() {
                if v < undershoot {
                    undershoot = v;
                }
            }
            if let Some(h) = history.as_mut() {
                h.times.push(t);
                h.states.push(u.clone());
            }
            if (t - target).abs() <= 1e-12 * target.max(1e-30) {
                slices.push(u.clone());
                next_out += 1;
                if next_out >= output_times.len() {
                    break;
                }
            }
        }
        Ok((slices, history, undershoot))
    }
}

/// Discrete delta at `x0` (signed coordinate), normalized against the node
/// measures; mass is split between the two nearest nodes so the mean is
/// preserved.
pub fn delta_init(grid: &Grid1D, x0: f64) -> Result<Vec<f64>, SolveError> {
    let (lo, hi) = grid.span();
    if x0 < -lo || x0 > hi {
        return Err(SolveError::SourceOutsideGrid(x0));
    }
    let mut u = vec![0.0; grid.len()];
    let cell = grid.cell_of(x0).expect("checked span");
    let (a, b) = (grid.nodes()[cell], grid.nodes()[cell + 1]);
    let lam = if b > a { (x0 - a) / (b - a) } else { 0.0 };
    u[cell] = (1.0 - lam) / grid.node_measure()[cell];
    u[cell + 1] += lam / grid.node_measure()[cell + 1];
    Ok(u)
}

/// Solves for the kernel from `x0` at the given output times.
///
/// `drift` is a node-sampled transport field on the signed coordinate
/// (already in line orientation: negative values push towards the leg).
pub fn solve_kernel(
    grid: &Arc<Grid1D>,
    x0: f64,
    output_times: &[f64],
    drift: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<KernelTable, SolveError> {
    let mut stepper = Stepper::new(grid, drift, opts)?;
    let init = delta_init(grid, x0)?;
    let (values, history, undershoot) =
        stepper.drive(init, output_times, opts.store_history, None)?;
    let (l, r) = grid.bc();
    Ok(KernelTable {
        grid: Arc::clone(grid),
        times: output_times.to_vec(),
        values,
        source: x0,
        drifted: drift.is_some(),
        killed: l == Boundary::Absorbing || r == Boundary::Absorbing,
        worst_undershoot: undershoot,
        history,
    })
}

impl KernelTable {
    pub fn time_index(&self, t: f64) -> Result<usize, SolveError> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.max(1e-12))
            .ok_or(SolveError::NotAnOutputTime(t))
    }

    /// Total mass `sum_i m_i u_i` at an output time.
    pub fn mass(&self, t: f64) -> Result<f64, SolveError> {
        let k = self.time_index(t)?;
        Ok(self.mass_at_index(k))
    }

    pub fn mass_at_index(&self, k: usize) -> f64 {
        self.values[k]
            .iter()
            .zip(self.grid.node_measure())
            .map(|(u, m)| u * m)
            .sum()
    }

    /// Density value at an arbitrary signed coordinate, linear interpolation.
    pub fn value_at(&self, t: f64, y: f64) -> Result<f64, SolveError> {
        let k = self.time_index(t)?;
        self.grid
            .interp(&self.values[k], y)
            .ok_or(SolveError::SourceOutsideGrid(y))
    }

    /// Net weighted one-sided derivative mismatch at the darning point,
    /// `(p u'(0-) - 2 pi eps u'(0+)) / 2`, from three-point one-sided
    /// stencils. Zero for the exact transmission solution.
    pub fn flux_at_star(&self, t: f64) -> Result<f64, SolveError> {
        let k = self.time_index(t)?;
        let u = &self.values[k];
        let i0 = self.grid.interface_index();
        let nodes = self.grid.nodes();
        let (wl, wr) = self.grid.interface_weights();
        let dl = one_sided_derivative(
            nodes[i0],
            (nodes[i0 - 1], u[i0 - 1]),
            (nodes[i0 - 2], u[i0 - 2]),
            u[i0],
        );
        let dr = one_sided_derivative(
            nodes[i0],
            (nodes[i0 + 1], u[i0 + 1]),
            (nodes[i0 + 2], u[i0 + 2]),
            u[i0],
        );
        Ok(0.5 * (wl * dl - wr * dr))
    }

    /// Signed mass flux through an outer wall; negative means mass leaving
    /// through an absorbing row.
    pub fn boundary_flux(&self, t: f64, left: bool) -> Result<f64, SolveError> {
        let k = self.time_index(t)?;
        let u = &self.values[k];
        let n = u.len();
        let g = &self.grid;
        Ok(if left {
            g.edge_conductance()[0] * (u[0] - u[1])
        } else {
            g.edge_conductance()[n - 2] * (u[n - 1] - u[n - 2])
        })
    }

    /// Mass in `[a, b]` at an output time, exact sub-cell integration.
    pub fn mass_between(&self, t: f64, a: f64, b: f64) -> Result<f64, SolveError> {
        let k = self.time_index(t)?;
        Ok(self.grid.integrate_field(&self.values[k], a, b))
    }
}

/// Three-point one-sided first derivative at `x0` given two neighbours on
/// one side; second order on non-uniform spacings.
fn one_sided_derivative(x0: f64, p1: (f64, f64), p2: (f64, f64), u0: f64) -> f64 {
    let (x1, u1) = p1;
    let (x2, u2) = p2;
    let (d1, d2) = (x1 - x0, x2 - x0);
    // Lagrange derivative weights at x0
    let c0 = -(d1 + d2) / (d1 * d2);
    let c1 = -d2 / (d1 * (d1 - d2));
    let c2 = -d1 / (d2 * (d2 - d1));
    c0 * u0 + c1 * u1 + c2 * u2
}
