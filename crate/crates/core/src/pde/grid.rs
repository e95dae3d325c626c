//! Finite-volume grid for the signed radial coordinate.
//!
//! The line carries the speed measure `m~(dy) = w(y) dy` with
//! `w(y) = p` on `y < 0` (the leg) and `w(y) = 2 pi (y + eps)` on `y > 0`
//! (the plane, where the weight is exactly the Jacobian of the radial
//! reduction). The jump of `w` across 0 encodes the interface skewness:
//! no transmission condition is imposed explicitly, it emerges from the
//! weights. An `InterfaceConstant` mode freezes the right weight at
//! `2 pi eps`, which turns the process into pure skew Brownian motion.

use crate::error::GridError;
use crate::geometry::ModelParams;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PlaneWeightMode {
    /// Radial reduction of the plane: `w(y) = 2 pi (y + eps)` for `y > 0`.
    Bessel,
    /// Constant `2 pi eps` on `y > 0`; the pure-interface (skew BM) problem.
    InterfaceConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Boundary {
    /// Reflecting wall far from the region of interest; conserves mass.
    Truncation,
    /// Dirichlet row; mass is absorbed.
    Absorbing,
}

#[derive(Debug, Clone, Copy)]
pub enum ResolutionPolicy {
    /// Uniform spacing `h` on both sides.
    Uniform { h: f64 },
    /// Cells grow geometrically from `h0` at the interface up to `h_max`.
    Graded { h0: f64, ratio: f64, h_max: f64 },
}

#[derive(Debug, Clone)]
pub struct Grid1D {
    nodes: Vec<f64>,
    interface_index: usize,
    node_measure: Vec<f64>,
    /// `g_e = w_e / (2 h_e)` per edge; the discrete operator is
    /// `(L u)_i = (g_l (u_{i-1} - u_i) + g_r (u_{i+1} - u_i)) / m_i`,
    /// symmetric in the `m~` inner product by construction.
    edge_conductance: Vec<f64>,
    /// Average of `w` over each edge interval (exact for the linear weight).
    edge_weight: Vec<f64>,
    params: ModelParams,
    plane_mode: PlaneWeightMode,
    bc: (Boundary, Boundary),
}

fn side_spacings(span: f64, policy: &ResolutionPolicy) -> Result<Vec<f64>, GridError> {
    let mut hs = Vec::new();
    match *policy {
        ResolutionPolicy::Uniform { h } => {
            if !(h > 0.0) || !h.is_finite() {
                return Err(GridError::BadPolicy(format!("bad spacing h = {h}")));
            }
            let n = (span / h).round().max(1.0) as usize;
            let h_eff = span / n as f64;
            hs.extend(std::iter::repeat(h_eff).take(n));
        }
        ResolutionPolicy::Graded { h0, ratio, h_max } => {
            if !(h0 > 0.0 && ratio >= 1.0 && h_max >= h0) {
                return Err(GridError::BadPolicy(format!(
                    "graded policy needs h0 > 0, ratio >= 1, h_max >= h0; got ({h0}, {ratio}, {h_max})"
                )));
            }
            let mut h = h0;
            let mut total = 0.0;
            while total < span {
                let step = h.min(span - total);
                hs.push(step);
                total += step;
                h = (h * ratio).min(h_max);
            }
            // stretch slightly so the last node lands exactly on the span
            let sum: f64 = hs.iter().sum();
            let scale = span / sum;
            for h in &mut hs {
                *h *= scale;
            }
        }
    }
    Ok(hs)
}

impl Grid1D {
    pub fn build(
        l_leg: f64,
        l_plane: f64,
        policy: ResolutionPolicy,
        params: ModelParams,
        plane_mode: PlaneWeightMode,
        bc: (Boundary, Boundary),
    ) -> Result<Self, GridError> {
        if !(l_leg > 0.0 && l_plane > 0.0) {
            return Err(GridError::BadSpan(l_leg, l_plane));
        }
        let left = side_spacings(l_leg, &policy)?;
        let right = side_spacings(l_plane, &policy)?;
        if left.len() < 16 {
            return Err(GridError::TooCoarse {
                side: "leg",
                cells: left.len(),
            });
        }
        if right.len() < 16 {
            return Err(GridError::TooCoarse {
                side: "plane",
                cells: right.len(),
            });
        }

        // nodes from -l_leg up to +l_plane with an exact node at 0
        let mut nodes = Vec::with_capacity(left.len() + right.len() + 1);
        let mut acc = 0.0;
        let mut left_nodes: Vec<f64> = vec![0.0];
        for h in left.iter() {
            acc -= h;
            left_nodes.push(acc);
        }
        left_nodes.reverse();
        *left_nodes.last_mut().unwrap() = 0.0;
        left_nodes[0] = -l_leg;
        nodes.extend_from_slice(&left_nodes);
        let interface_index = nodes.len() - 1;
        let mut acc = 0.0;
        for (k, h) in right.iter().enumerate() {
            acc += h;
            nodes.push(if k + 1 == right.len() { l_plane } else { acc });
        }

        let mut grid = Self {
            nodes,
            interface_index,
            node_measure: Vec::new(),
            edge_conductance: Vec::new(),
            edge_weight: Vec::new(),
            params,
            plane_mode,
            bc,
        };
        grid.assemble();
        Ok(grid)
    }

    /// Grid spanning a symmetric domain `(0, l) + annulus(eps, R)` with
    /// absorbing walls, for killed solves.
    pub fn for_domain(
        domain: &crate::geometry::DomainSpec,
        policy: ResolutionPolicy,
        params: ModelParams,
    ) -> Result<Self, GridError> {
        Self::build(
            domain.leg_length,
            domain.plane_rho_span(&params),
            policy,
            params,
            PlaneWeightMode::Bessel,
            (Boundary::Absorbing, Boundary::Absorbing),
        )
    }

    /// Weight density with the interface value resolved by `left_side`,
    /// since `w` jumps at 0.
    fn weight_density_sided(&self, y: f64, left_side: bool) -> f64 {
        if y < 0.0 || (y == 0.0 && left_side) {
            self.params.p()
        } else {
            match self.plane_mode {
                PlaneWeightMode::Bessel => {
                    2.0 * std::f64::consts::PI * (y + self.params.eps())
                }
                PlaneWeightMode::InterfaceConstant => self.params.plane_interface_weight(),
            }
        }
    }

    /// Exact `m~` measure of `[a, b]`; intervals straddling 0 are split.
    pub fn measure_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if a < 0.0 && b > 0.0 {
            return self.measure_between(a, 0.0) + self.measure_between(0.0, b);
        }
        if b <= 0.0 {
            self.params.p() * (b - a)
        } else {
            match self.plane_mode {
                PlaneWeightMode::Bessel => {
                    let e = self.params.eps();
                    std::f64::consts::PI * ((b + e) * (b + e) - (a + e) * (a + e))
                }
                PlaneWeightMode::InterfaceConstant => {
                    self.params.plane_interface_weight() * (b - a)
                }
            }
        }
    }

    fn assemble(&mut self) {
        let n = self.nodes.len();
        self.edge_conductance = Vec::with_capacity(n - 1);
        self.edge_weight = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let h = self.nodes[i + 1] - self.nodes[i];
            let w = self.measure_between(self.nodes[i], self.nodes[i + 1]) / h;
            self.edge_weight.push(w);
            self.edge_conductance.push(w / (2.0 * h));
        }
        self.node_measure = (0..n)
            .map(|i| {
                let lo = if i == 0 {
                    self.nodes[0]
                } else {
                    0.5 * (self.nodes[i - 1] + self.nodes[i])
                };
                let hi = if i == n - 1 {
                    self.nodes[n - 1]
                } else {
                    0.5 * (self.nodes[i] + self.nodes[i + 1])
                };
                self.measure_between(lo, hi)
            })
            .collect();
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interface_index(&self) -> usize {
        self.interface_index
    }

    pub fn node_measure(&self) -> &[f64] {
        &self.node_measure
    }

    pub fn edge_conductance(&self) -> &[f64] {
        &self.edge_conductance
    }

    pub fn edge_weight(&self) -> &[f64] {
        &self.edge_weight
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn plane_mode(&self) -> PlaneWeightMode {
        self.plane_mode
    }

    pub fn bc(&self) -> (Boundary, Boundary) {
        self.bc
    }

    pub fn span(&self) -> (f64, f64) {
        (-self.nodes[0], *self.nodes.last().unwrap())
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// One-sided derivative weights at the interface: `p` from the left and
    /// `2 pi eps` from the right. Their normalized difference is `eta`.
    pub fn interface_weights(&self) -> (f64, f64) {
        (self.params.p(), self.params.plane_interface_weight())
    }

    /// Index of the cell `[nodes[i], nodes[i+1])` containing `y`.
    pub fn cell_of(&self, y: f64) -> Option<usize> {
        if y < self.nodes[0] || y > *self.nodes.last().unwrap() {
            return None;
        }
        match self
            .nodes
            .binary_search_by(|v| v.partial_cmp(&y).unwrap())
        {
            Ok(i) => Some(i.min(self.nodes.len() - 2)),
            Err(i) => Some(i - 1),
        }
    }

    /// Linear interpolation of a nodal field at `y`.
    pub fn interp(&self, field: &[f64], y: f64) -> Option<f64> {
        let i = self.cell_of(y)?;
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let lam = if b > a { (y - a) / (b - a) } else { 0.0 };
        Some(field[i] * (1.0 - lam) + field[i + 1] * lam)
    }

    /// Integral of `field * w` over `[a, b]` with `field` piecewise linear.
    /// Simpson per sub-cell is exact for the linear-times-linear integrand.
    pub fn integrate_field(&self, field: &[f64], a: f64, b: f64) -> f64 {
        let (lo, hi) = self.span();
        let a = a.max(-lo);
        let b = b.min(hi);
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut x = a;
        loop {
            let cell = match self.cell_of(x) {
                Some(c) => c,
                None => break,
            };
            let cell_end = self.nodes[cell + 1].min(b);
            if cell_end <= x {
                break;
            }
            let xm = 0.5 * (x + cell_end);
            // 0 is a node, so each sub-interval lies on one side of the jump
            let left_side = xm < 0.0;
            let f = |y: f64| {
                self.interp(field, y).unwrap_or(0.0) * self.weight_density_sided(y, left_side)
            };
            total += (cell_end - x) / 6.0 * (f(x) + 4.0 * f(xm) + f(cell_end));
            if cell_end >= b {
                break;
            }
            x = cell_end;
        }
        total
    }

    pub fn compatible_with(&self, other: &Grid1D) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.plane_mode == other.plane_mode
            && self.params == *other.params()
            && self
                .nodes
                .iter()
                .zip(other.nodes.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-12)
    }
}
