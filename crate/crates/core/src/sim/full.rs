//! Full-space simulation: genuinely two-dimensional on the plane, 1-D on
//! the leg, with interface excursions resolved on the signed radial
//! coordinate.
//!
//! Re-entry into the plane from the darning point draws a uniform angle in
//! the driftless and Girsanov modes (the driftless process is rotation
//! invariant, and in Girsanov mode the weight restores the drifted law).
//! In Euler-Maruyama mode with plane drift the pre-crossing angle is kept,
//! an O(sqrt dt) bias near the interface; the Girsanov mode is the
//! reference for drifted laws there. User drift and weight accrual pause
//! inside the band: the band is a vanishing neighbourhood of an `m_p`-null
//! point.

use super::skew::resolve_side;
use super::weight::WEIGHT_EXP_CLIP;
use super::{DriftMode, PathEnsemble, SimConfig};
use crate::drift::DriftSpec;
use crate::error::SimError;
use crate::geometry::{signed_radial_embed, EPoint, ModelParams};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy)]
pub(crate) enum FullState {
    Plane { x1: f64, x2: f64 },
    Leg { r: f64 },
    Band { y: f64, angle: Option<f64> },
}

impl FullState {
    pub(crate) fn from_point(pt: &EPoint, params: &ModelParams, band: f64) -> Self {
        match *pt {
            EPoint::Plane { x1, x2 } => {
                let rho = x1.hypot(x2) - params.eps();
                if rho <= band {
                    FullState::Band {
                        y: rho,
                        angle: Some(x2.atan2(x1)),
                    }
                } else {
                    FullState::Plane { x1, x2 }
                }
            }
            EPoint::Leg { r } => {
                if r <= band {
                    FullState::Band { y: -r, angle: None }
                } else {
                    FullState::Leg { r }
                }
            }
            EPoint::Star => FullState::Band { y: 0.0, angle: None },
        }
    }

    /// Signed radial coordinate of the state.
    pub(crate) fn signed(&self, params: &ModelParams) -> f64 {
        match *self {
            FullState::Plane { x1, x2 } => x1.hypot(x2) - params.eps(),
            FullState::Leg { r } => -r,
            FullState::Band { y, .. } => y,
        }
    }

    /// Materializes the state as a point of the glued space, drawing a
    /// uniform angle where none is remembered.
    pub(crate) fn materialize(
        &self,
        params: &ModelParams,
        keep_angle: bool,
        rng: &mut impl Rng,
    ) -> EPoint {
        match *self {
            FullState::Plane { x1, x2 } => EPoint::Plane { x1, x2 },
            FullState::Leg { r } => EPoint::Leg { r },
            FullState::Band { y, angle } => {
                if y == 0.0 {
                    EPoint::Star
                } else if y < 0.0 {
                    EPoint::Leg { r: -y }
                } else {
                    let th = match angle {
                        Some(a) if keep_angle => a,
                        _ => rng.gen_range(0.0..2.0 * std::f64::consts::PI),
                    };
                    let radius = y + params.eps();
                    EPoint::Plane {
                        x1: radius * th.cos(),
                        x2: radius * th.sin(),
                    }
                }
            }
        }
    }
}

/// Advances one step of the full-space walk, accruing the Girsanov
/// exponent into `log_w`.
pub(crate) fn full_step(
    state: FullState,
    config: &SimConfig,
    params: &ModelParams,
    drift: &DriftSpec,
    log_w: &mut f64,
    clipped: &mut bool,
    rng: &mut impl Rng,
) -> FullState {
    let dt = config.dt;
    let sqdt = dt.sqrt();
    let band = config.band;
    let eps = params.eps();
    let keep_angle = config.drift_mode == DriftMode::EulerMaruyama;
    let gamma = 0.5 * (1.0 + params.eta());

    let mut accrue = |b: f64, dw_sum: f64, quad: f64| {
        if config.drift_mode == DriftMode::Girsanov && b != 0.0 {
            *log_w += b * dw_sum - quad;
            if *log_w > WEIGHT_EXP_CLIP {
                *log_w = WEIGHT_EXP_CLIP;
                *clipped = true;
            }
        }
    };

    match state {
        FullState::Plane { x1, x2 } => {
            let b = drift.on_plane(x1, x2, eps);
            let dw1 = sqdt * rng.sample::<f64, _>(StandardNormal);
            let dw2 = sqdt * rng.sample::<f64, _>(StandardNormal);
            let (mut nx1, mut nx2) = (x1 + dw1, x2 + dw2);
            if config.drift_mode == DriftMode::EulerMaruyama {
                nx1 += b * dt;
                nx2 += b * dt;
            }
            // drift vector (b, b): quadratic variation 2 b^2 dt, halved
            accrue(b, dw1 + dw2, b * b * dt);
            let rho_new = nx1.hypot(nx2) - eps;
            if rho_new > band {
                FullState::Plane { x1: nx1, x2: nx2 }
            } else {
                // the radial coordinate tripped the interface
                let rho_old = x1.hypot(x2) - eps;
                let y = resolve_side(rho_old, rho_new, dt, band, gamma, rng);
                dispatch_from_band(y, Some(nx2.atan2(nx1)), band, eps, keep_angle, rng)
            }
        }
        FullState::Leg { r } => {
            let b = drift.on_leg(r);
            let dw = sqdt * rng.sample::<f64, _>(StandardNormal);
            let mut nr = r + dw;
            if config.drift_mode == DriftMode::EulerMaruyama {
                nr += b * dt;
            }
            accrue(b, dw, 0.5 * b * b * dt);
            if nr > band {
                FullState::Leg { r: nr }
            } else {
                let y = resolve_side(-r, -nr, dt, band, gamma, rng);
                dispatch_from_band(y, None, band, eps, keep_angle, rng)
            }
        }
        FullState::Band { y, angle } => {
            // geometry term on the plane side; user drift pauses here
            let bessel = if y > 0.0 && config.bessel_term {
                0.5 / (y + eps)
            } else {
                0.0
            };
            let prop = y + bessel * dt + sqdt * rng.sample::<f64, _>(StandardNormal);
            let ny = resolve_side(y, prop, dt, band, gamma, rng);
            dispatch_from_band(ny, angle, band, eps, keep_angle, rng)
        }
    }
}

fn dispatch_from_band(
    y: f64,
    angle: Option<f64>,
    band: f64,
    eps: f64,
    keep_angle: bool,
    rng: &mut impl Rng,
) -> FullState {
    if y.abs() <= band {
        FullState::Band { y, angle }
    } else if y < 0.0 {
        FullState::Leg { r: -y }
    } else {
        let th = match angle {
            Some(a) if keep_angle => a,
            _ => rng.gen_range(0.0..2.0 * std::f64::consts::PI),
        };
        let radius = y + eps;
        FullState::Plane {
            x1: radius * th.cos(),
            x2: radius * th.sin(),
        }
    }
}

/// Full-space ensemble from `x0`.
pub fn simulate_full(
    x0: &EPoint,
    config: &SimConfig,
    params: &ModelParams,
    drift: &DriftSpec,
) -> Result<PathEnsemble, SimError> {
    config.validate(params.eps())?;
    let n = config.n_paths;
    let keep_angle = config.drift_mode == DriftMode::EulerMaruyama;
    let parts = super::batched(n, config.batch, |range| {
        let mut endpoints = Vec::with_capacity(range.len());
        let mut weights = Vec::with_capacity(range.len());
        let mut clipped_count = 0usize;
        for path in range {
            let mut rng = config.rng_for_path(path as u64);
            let mut state = FullState::from_point(x0, params, config.band);
            let mut log_w = 0.0;
            let mut clipped = false;
            for _ in 0..config.n_steps() {
                state = full_step(state, config, params, drift, &mut log_w, &mut clipped, &mut rng);
            }
            endpoints.push(state.materialize(params, keep_angle, &mut rng));
            weights.push(log_w.exp());
            clipped_count += clipped as usize;
        }
        (endpoints, weights, clipped_count)
    });
    let mut endpoints = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut clipped = 0;
    for (e, w, c) in parts {
        endpoints.extend(e);
        weights.extend(w);
        clipped += c;
    }
    Ok(PathEnsemble {
        endpoints,
        weights,
        seed: config.seed,
        stream_range: (0, n as u64),
        clipped_weights: clipped,
    })
}

/// Signed radial marginal of an ensemble.
pub fn signed_marginal(ensemble: &PathEnsemble, params: &ModelParams) -> Vec<f64> {
    ensemble
        .endpoints
        .iter()
        .map(|pt| signed_radial_embed(pt, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{chi2_quantile, ks_critical, ks_two_sample};
    use crate::sim::radial::simulate_radial;

    fn params() -> ModelParams {
        ModelParams::new(0.25, 1.0).unwrap()
    }

    #[test]
    fn angle_distribution_uniform_from_star() {
        let p = params();
        let cfg = SimConfig::new(2e-4, 0.1, 40_000, 21);
        let ens = simulate_full(&EPoint::Star, &cfg, &p, &DriftSpec::zero()).unwrap();
        let mut sectors = [0usize; 36];
        let mut on_plane = 0usize;
        for pt in &ens.endpoints {
            if let EPoint::Plane { x1, x2 } = pt {
                let th = x2.atan2(*x1).rem_euclid(2.0 * std::f64::consts::PI);
                let k = ((th / (2.0 * std::f64::consts::PI) * 36.0) as usize).min(35);
                sectors[k] += 1;
                on_plane += 1;
            }
        }
        let expect = on_plane as f64 / 36.0;
        let chi2: f64 = sectors
            .iter()
            .map(|&c| (c as f64 - expect) * (c as f64 - expect) / expect)
            .sum();
        let crit = chi2_quantile(35.0, 0.001);
        assert!(chi2 < crit, "chi2 {chi2:.1} above {crit:.1}");
    }

    #[test]
    fn radial_marginal_matches_one_dimensional_walk() {
        let p = params();
        let t = 0.25;
        let cfg = SimConfig::new(2e-4, t, 30_000, 14);
        let full = simulate_full(&EPoint::Star, &cfg, &p, &DriftSpec::zero()).unwrap();
        let radial = simulate_radial(0.0, &cfg, &p, &DriftSpec::zero()).unwrap();
        let a = signed_marginal(&full, &p);
        let b = signed_marginal(&radial, &p);
        let d = ks_two_sample(&a, &b);
        let crit = ks_critical(0.001, a.len(), b.len());
        assert!(d < crit, "KS {d:.4} above {crit:.4}");
    }

    #[test]
    fn plane_girsanov_weights_match_euler_maruyama() {
        // the (b, b)-vector exponent on the plane: weighted driftless
        // ensembles reproduce the Euler-Maruyama drifted radial marginal
        use crate::bins::SignedBins;
        use crate::sim::density::estimate_density;
        let p = params();
        let drift = DriftSpec::smooth_bump(0.0, 0.6); // plane bump only
        let t = 0.2;
        let n = 150_000;
        let girsanov = SimConfig::new(2e-4, t, n, 71).with_mode(DriftMode::Girsanov);
        let em = SimConfig::new(2e-4, t, n, 72).with_mode(DriftMode::EulerMaruyama);
        let x0 = EPoint::plane_radial(0.6, &p).unwrap();
        let weighted = simulate_full(&x0, &girsanov, &p, &drift).unwrap();
        let drifted = simulate_full(&x0, &em, &p, &drift).unwrap();
        let mean_w = weighted.mean_weight();
        let se_w = weighted.mean_weight_se();
        assert!(
            (mean_w - 1.0).abs() < 3.5 * se_w,
            "martingale mean {mean_w:.4} +- {se_w:.4}"
        );
        let bins = SignedBins::uniform(1.5, 2.2, 25, 35).unwrap();
        let dw = estimate_density(&weighted, &bins, &p).unwrap();
        // weights reduce the effective sample size below the path count
        assert!(dw.effective_sample_size < n as f64);
        let de = estimate_density(&drifted, &bins, &p).unwrap();
        let l1: f64 = dw
            .values
            .iter()
            .zip(&de.values)
            .zip(&dw.mp_measures)
            .map(|((a, b), m)| (a - b).abs() * m)
            .sum();
        assert!(l1 < 0.03, "plane girsanov vs drifted L1 = {l1:.4}");
    }

    #[test]
    fn side_split_from_star_matches_radial_oracle() {
        // the deterministic 1-D solver provides the exact side split for
        // the full dynamics (the pure-skew split is shifted by the
        // geometry term)
        use crate::pde::{free_space_grid, solve_kernel, SolveOptions};
        let p = params();
        let t = 0.1;
        let cfg = SimConfig::new(2e-4, t, 60_000, 8);
        let ens = simulate_full(&EPoint::Star, &cfg, &p, &DriftSpec::zero()).unwrap();
        let legs = ens.endpoints.iter().filter(|e| e.is_leg()).count();
        let freq = legs as f64 / ens.n_paths() as f64;
        let grid = free_space_grid(p, 3.0, 3.0, 0.005).unwrap();
        let table = solve_kernel(&grid, 0.0, &[t], None, &SolveOptions::default()).unwrap();
        let exact = table.mass_between(t, -3.0, 0.0).unwrap();
        let se = (exact * (1.0 - exact) / ens.n_paths() as f64).sqrt();
        assert!(
            (freq - exact).abs() < 3.0 * se + 2e-3,
            "leg mass {freq:.4} vs oracle {exact:.4}"
        );
        // sanity: without the geometry term the split is the skew-BM value
        let skew_cfg = cfg.clone().without_bessel();
        let skew = simulate_radial(0.0, &skew_cfg, &p, &DriftSpec::zero()).unwrap();
        let skew_legs = skew
            .endpoints
            .iter()
            .filter(|e| e.is_leg())
            .count() as f64
            / skew.n_paths() as f64;
        let gamma_leg = 0.5 * (1.0 - p.eta());
        let se = (gamma_leg * (1.0 - gamma_leg) / skew.n_paths() as f64).sqrt();
        assert!((skew_legs - gamma_leg).abs() < 3.5 * se);
    }
}
