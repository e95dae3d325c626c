//! Green functions of the killed process on symmetric domains containing
//! the darning point, and the three-case two-sided comparison form.
//!
//! The Green function is the time integral of the killed kernel,
//! `G(x, y) = int_0^inf p_D(t, x, y) dt`. The deterministic estimator
//! integrates Dirichlet solves of the radial oracle adaptively until the
//! surviving mass drops below a floor; the Monte Carlo estimator reads the
//! same object off occupation times. Comparisons classify each pair into
//! leg/leg, plane/plane or mixed and use
//!
//! ```text
//! leg/leg      min(d_D(x), d_D(y))
//! plane/plane  d_D(x) d_D(y) + ln(1 + d_U2(x) d_U2(y) / |x - y|^2)
//! mixed        d_D(x) d_D(y)
//! ```
//!
//! with `d_D` the geodesic distance to the domain boundary and `d_U2` the
//! distance to the boundary of the plane part.

use crate::error::{GeometryError, SolveError};
use crate::geometry::{
    delta_d, delta_u2, euclid_dist, signed_radial_embed, DomainSpec, EPoint, ModelParams,
};
use crate::pde::{solve_kernel, Grid1D, KernelTable, ResolutionPolicy, SolveOptions};
use serde::Serialize;
use std::sync::Arc;

/// Green column from one source, tabulated at the domain grid nodes.
#[derive(Debug, Clone)]
pub struct GreenColumn {
    pub domain: DomainSpec,
    pub grid: Arc<Grid1D>,
    pub source: f64,
    /// `G(x0, y)` with respect to `m_p` at each node.
    pub values: Vec<f64>,
    pub residual_mass: f64,
    pub t_reached: f64,
}

impl GreenColumn {
    pub fn value_at(&self, y: f64) -> Option<f64> {
        self.grid.interp(&self.values, y)
    }

    /// Integral of the column against `m_p`, which is the expected exit
    /// time from the source.
    pub fn total_mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.node_measure())
            .map(|(g, m)| g * m)
            .sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "y,green,m_weight")?;
        for (i, &y) in self.grid.nodes().iter().enumerate() {
            writeln!(out, "{y},{},{}", self.values[i], self.grid.node_measure()[i])?;
        }
        Ok(())
    }
}

/// Deterministic Green column: Dirichlet solves integrated in time until
/// the surviving mass falls below `mass_floor`.
pub fn green_pde(
    domain: &DomainSpec,
    x0: &EPoint,
    drift: Option<&crate::drift::DriftSpec>,
    params: &ModelParams,
    h: f64,
    t_max: f64,
    opts: &SolveOptions,
) -> Result<GreenColumn, SolveError> {
    if !domain.contains_star {
        return Err(SolveError::DomainMismatch(
            "deterministic Green columns need the symmetric domain; use the occupation estimator for leg intervals".into(),
        ));
    }
    if !domain.contains(x0, params) {
        return Err(SolveError::SourceOutsideGrid(signed_radial_embed(x0, params)));
    }
    let mass_floor = 1e-6;
    let grid = Arc::new(Grid1D::for_domain(
        domain,
        ResolutionPolicy::Uniform { h },
        *params,
    )?);
    let x0s = signed_radial_embed(x0, params);
    let beta = drift.map(|d| d.sample_line(grid.nodes()));

    // geometric output ladder from the diagonal scale up to t_max
    let t0 = (2.0 * h).powi(2);
    let mut times = vec![t0];
    while *times.last().unwrap() < t_max {
        times.push((times.last().unwrap() * 1.25).min(t_max));
    }
    let table = solve_kernel(&grid, x0s, &times, beta.as_deref(), opts)?;
    let masses: Vec<f64> = (0..times.len()).map(|k| table.mass_at_index(k)).collect();
    let stop = match masses.iter().position(|&m| m < mass_floor) {
        Some(k) => k,
        None => {
            return Err(SolveError::SlowAbsorption {
                residual: *masses.last().unwrap(),
                target: mass_floor,
                t_max,
            })
        }
    };

    let n = grid.len();
    let mut g = vec![0.0; n];
    // ramp-in from zero over (0, t0)
    for i in 0..n {
        g[i] += 0.5 * times[0] * table.values[0][i];
    }
    for k in 0..stop {
        let dt = times[k + 1] - times[k];
        for i in 0..n {
            g[i] += 0.5 * dt * (table.values[k][i] + table.values[k + 1][i]);
        }
    }
    // exponential tail from the observed decay rate
    let lambda = if stop >= 1 {
        (masses[stop - 1] / masses[stop]).ln() / (times[stop] - times[stop - 1])
    } else {
        1.0 / times[0]
    };
    if lambda > 0.0 {
        for i in 0..n {
            g[i] += table.values[stop][i] / lambda;
        }
    }
    Ok(GreenColumn {
        domain: *domain,
        grid,
        source: x0s,
        values: g,
        residual_mass: masses[stop],
        t_reached: times[stop],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GreenCase {
    LegLeg,
    PlanePlane,
    Mixed,
}

pub fn classify(x: &EPoint, y: &EPoint) -> GreenCase {
    match (x.on_plane_side() && !x.is_star(), y.on_plane_side() && !y.is_star()) {
        (true, true) => GreenCase::PlanePlane,
        (false, false) => GreenCase::LegLeg,
        _ => GreenCase::Mixed,
    }
}

/// The three-case two-sided comparison form. Rejects coincident points
/// (the plane/plane case diverges on the diagonal).
pub fn comparison_form(
    domain: &DomainSpec,
    x: &EPoint,
    y: &EPoint,
    params: &ModelParams,
) -> Result<f64, GeometryError> {
    if x == y {
        return Err(GeometryError::BadDomain(
            "comparison form is undefined on the diagonal".into(),
        ));
    }
    let dx = delta_d(x, domain, params)?;
    let dy = delta_d(y, domain, params)?;
    Ok(match classify(x, y) {
        GreenCase::LegLeg => dx.min(dy),
        GreenCase::Mixed => dx * dy,
        GreenCase::PlanePlane => {
            let ux = delta_u2(x, domain, params)?;
            let uy = delta_u2(y, domain, params)?;
            let d = euclid_dist(x, y, params);
            dx * dy + (1.0 + ux * uy / (d * d)).ln()
        }
    })
}

/// One evaluated pair of a Green comparison.
#[derive(Debug, Clone, Serialize)]
pub struct GreenPair {
    pub x: EPoint,
    pub y: EPoint,
    pub case: GreenCase,
    pub estimate: f64,
    pub form: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenCaseStats {
    pub case: GreenCase,
    pub n_pairs: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenReport {
    pub cases: Vec<GreenCaseStats>,
    pub pairs: Vec<GreenPair>,
}

/// Per-case ratio extremes of estimate against the comparison form.
pub fn fit_green(pairs: Vec<GreenPair>) -> GreenReport {
    let mut cases = Vec::new();
    for case in [GreenCase::LegLeg, GreenCase::PlanePlane, GreenCase::Mixed] {
        let ratios: Vec<f64> = pairs
            .iter()
            .filter(|p| p.case == case)
            .map(|p| p.estimate / p.form)
            .collect();
        if ratios.is_empty() {
            continue;
        }
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0f64, f64::max);
        cases.push(GreenCaseStats {
            case,
            n_pairs: ratios.len(),
            ratio_min: lo,
            ratio_max: hi,
            spread: hi / lo,
        });
    }
    GreenReport { cases, pairs }
}

/// Exact Green function of killed Brownian motion on the leg interval
/// `(0, l)` with respect to `m_p`: `(2/p)(x /\ y - x y / l)`.
pub fn leg_interval_green(x: f64, y: f64, l: f64, params: &ModelParams) -> f64 {
    2.0 / params.p() * (x.min(y) - x * y / l)
}

/// Kernel table of the killed solve, exposed for mass/flux diagnostics.
pub fn killed_kernel(
    domain: &DomainSpec,
    x0: &EPoint,
    params: &ModelParams,
    h: f64,
    times: &[f64],
    opts: &SolveOptions,
) -> Result<KernelTable, SolveError> {
    let grid = Arc::new(Grid1D::for_domain(
        domain,
        ResolutionPolicy::Uniform { h },
        *params,
    )?);
    solve_kernel(&grid, signed_radial_embed(x0, params), times, None, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bins::SignedBins;
    use crate::drift::DriftSpec;
    use crate::sim::{occupation_and_exit, SimConfig};

    fn params() -> ModelParams {
        ModelParams::new(0.25, 1.0).unwrap()
    }

    fn domain() -> DomainSpec {
        DomainSpec::new(1.0, 2.0, true, &params()).unwrap()
    }

    #[test]
    fn green_mass_equals_mean_exit_time() {
        let p = params();
        let d = domain();
        let col = green_pde(&d, &EPoint::Star, None, &p, 4e-3, 40.0, &SolveOptions::default())
            .unwrap();
        let mass = col.total_mass();
        let cfg = SimConfig::new(5e-5, 30.0, 3000, 77);
        let bins = SignedBins::uniform(1.0, 1.75, 20, 20).unwrap();
        let rep = occupation_and_exit(
            &EPoint::Star,
            &cfg,
            &p,
            &DriftSpec::zero(),
            &d,
            &bins,
            None,
        )
        .unwrap();
        assert!(!rep.slow_exit_warning);
        assert!(
            (mass - rep.mean_exit_time).abs() < 2.0 * rep.exit_time_se + 0.01,
            "PDE mass {mass:.4} vs MC mean exit {:.4} (se {:.4})",
            rep.mean_exit_time,
            rep.exit_time_se
        );
    }

    #[test]
    fn shrinking_domain_shrinks_green() {
        let p = params();
        let d1 = domain();
        let d2 = DomainSpec::new(0.7, 1.5, true, &p).unwrap();
        let opts = SolveOptions::default();
        let g1 = green_pde(&d1, &EPoint::Star, None, &p, 4e-3, 40.0, &opts).unwrap();
        let g2 = green_pde(&d2, &EPoint::Star, None, &p, 4e-3, 40.0, &opts).unwrap();
        for &y in &[-0.5, -0.2, 0.3, 0.9] {
            let a = g1.value_at(y).unwrap();
            let b = g2.value_at(y).unwrap();
            assert!(b < a + 1e-9, "monotonicity at {y}: {b} vs {a}");
        }
    }

    #[test]
    fn star_column_decays_linearly_on_the_leg() {
        // away from the source the column is harmonic: linear in the leg
        // coordinate, vanishing at the endpoint
        let p = params();
        let d = domain();
        let col = green_pde(&d, &EPoint::Star, None, &p, 2e-3, 40.0, &SolveOptions::default())
            .unwrap();
        let g_at = |r: f64| col.value_at(-r).unwrap();
        let (a, b, c) = (g_at(0.3), g_at(0.55), g_at(0.8));
        let second_diff = (a - 2.0 * b + c).abs();
        assert!(second_diff < 5e-3 * b, "not linear: {a} {b} {c}");
        assert!(g_at(0.995) < 0.02 * g_at(0.3), "no decay at the endpoint");
        // boundary decay is monotone over the last cells
        let n = col.grid.len();
        for i in 0..4 {
            assert!(col.values[i] <= col.values[i + 1] + 1e-12);
            assert!(col.values[n - 1 - i] <= col.values[n - 2 - i] + 1e-12);
        }
    }

    #[test]
    fn driftless_green_is_symmetric() {
        let p = params();
        let d = domain();
        let opts = SolveOptions::default();
        let xa = EPoint::leg(0.4).unwrap();
        let xb = EPoint::plane_radial(0.8, &p).unwrap();
        let ga = green_pde(&d, &xa, None, &p, 4e-3, 40.0, &opts).unwrap();
        let gb = green_pde(&d, &xb, None, &p, 4e-3, 40.0, &opts).unwrap();
        let ab = ga.value_at(0.8).unwrap();
        let ba = gb.value_at(-0.4).unwrap();
        assert!(
            (ab - ba).abs() < 0.01 * ab.max(ba),
            "G not symmetric: {ab:.5} vs {ba:.5}"
        );
    }

    #[test]
    fn comparison_form_cases() {
        let p = params();
        let d = domain();
        // coincident points are rejected
        let x = EPoint::leg(0.5).unwrap();
        assert!(comparison_form(&d, &x, &x, &p).is_err());
        // symmetric leg pair: the form is the common boundary distance
        let a = EPoint::leg(0.3).unwrap();
        let b = EPoint::leg(0.7).unwrap();
        let da = delta_d(&a, &d, &p).unwrap();
        let db = delta_d(&b, &d, &p).unwrap();
        let form = comparison_form(&d, &a, &b, &p).unwrap();
        assert_eq!(form, da.min(db));
        assert!((form - 0.3).abs() < 1e-12);
        // distant plane pair: the log term collapses towards delta*delta
        let u = EPoint::plane(1.2, 0.0, &p).unwrap();
        let v = EPoint::plane(-1.2, 0.0, &p).unwrap();
        let form = comparison_form(&d, &u, &v, &p).unwrap();
        let du = delta_d(&u, &d, &p).unwrap();
        let dv = delta_d(&v, &d, &p).unwrap();
        let log_piece = form - du * dv;
        assert!(log_piece < 0.3 * du * dv, "log term should be dominated");
        // mixed pair
        let form = comparison_form(&d, &a, &u, &p).unwrap();
        assert_eq!(form, delta_d(&a, &d, &p).unwrap() * du);
    }

    #[test]
    fn fit_recovers_unit_constants_for_self_comparison() {
        let p = params();
        let d = domain();
        let mut pairs = Vec::new();
        for &(xr, yr) in &[(0.2_f64, 0.6_f64), (0.3, 0.8), (0.5, 0.9)] {
            let x = EPoint::leg(xr).unwrap();
            let y = EPoint::leg(yr).unwrap();
            let form = comparison_form(&d, &x, &y, &p).unwrap();
            pairs.push(GreenPair {
                x,
                y,
                case: classify(&x, &y),
                estimate: form,
                form,
            });
        }
        let rep = fit_green(pairs);
        assert_eq!(rep.cases.len(), 1);
        assert_eq!(rep.cases[0].case, GreenCase::LegLeg);
        assert!((rep.cases[0].ratio_min - 1.0).abs() < 1e-12);
        assert!((rep.cases[0].ratio_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mc_and_pde_columns_agree_off_diagonal() {
        let p = params();
        let d = domain();
        let col = green_pde(&d, &EPoint::Star, None, &p, 4e-3, 40.0, &SolveOptions::default())
            .unwrap();
        let cfg = SimConfig::new(5e-5, 30.0, 20_000, 5);
        let bins = SignedBins::uniform(1.0, 1.75, 20, 35).unwrap();
        let rep = occupation_and_exit(
            &EPoint::Star,
            &cfg,
            &p,
            &DriftSpec::zero(),
            &d,
            &bins,
            None,
        )
        .unwrap();
        let mut checked = 0;
        for (i, c) in bins.centers().iter().enumerate() {
            // keep away from the source and the boundary
            if c.abs() < 0.15 || rep.occupation[i] < 0.05 {
                continue;
            }
            let pde = col.value_at(*c).unwrap();
            let ratio = rep.occupation[i] / pde;
            assert!(
                (ratio - 1.0).abs() < 0.10,
                "MC/PDE ratio {ratio:.3} at y={c}"
            );
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn leg_interval_closed_form_consistency() {
        // integral of the closed form reproduces the mean exit time
        let p = params();
        let l = 1.0;
        let x = 0.4;
        let n = 4000;
        let mut total = 0.0;
        for i in 0..n {
            let y = l * (i as f64 + 0.5) / n as f64;
            total += leg_interval_green(x, y, l, &p) * p.p() * (l / n as f64);
        }
        assert!((total - x * (l - x)).abs() < 1e-4);
    }
}
