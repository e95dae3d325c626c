//! Euler-Maruyama simulation of the signed radial process.
//!
//! The walk follows `dY = dB + 1/(2(Y+eps)) 1_{Y>0} dt + beta(Y) dt` with
//! `beta` the user drift in line orientation (Euler-Maruyama mode only);
//! every step is passed through the interface side-redraw rule. In
//! Girsanov mode paths follow the driftless dynamics and accumulate the
//! martingale exponent `sum beta dW - 1/2 sum beta^2 dt`.

use super::skew::resolve_side;
use super::weight::WEIGHT_EXP_CLIP;
use super::{DriftMode, PathEnsemble, SimConfig};
use crate::drift::DriftSpec;
use crate::error::SimError;
use crate::geometry::{from_signed_radial, ModelParams};
use rand::Rng;
use rand_distr::StandardNormal;

/// Simulates `n_paths` signed radial paths from `x0` and returns their
/// endpoints (as points of the glued space) and weights.
pub fn simulate_radial(
    x0: f64,
    config: &SimConfig,
    params: &ModelParams,
    drift: &DriftSpec,
) -> Result<PathEnsemble, SimError> {
    config.validate(params.eps())?;
    let n = config.n_paths;
    let parts = super::batched(n, config.batch, |range| {
        let mut endpoints = Vec::with_capacity(range.len());
        let mut weights = Vec::with_capacity(range.len());
        let mut clipped = 0usize;
        for path in range {
            let mut rng = config.rng_for_path(path as u64);
            let (y, log_w, was_clipped) = walk_radial(x0, config, params, drift, &mut rng);
            endpoints.push(y);
            weights.push(log_w.exp());
            clipped += was_clipped as usize;
        }
        (endpoints, weights, clipped)
    });
    let mut endpoints = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut clipped = 0;
    for (e, w, c) in parts {
        endpoints.extend(e.into_iter().map(|y| {
            from_signed_radial(y, params).expect("signed coordinate is always representable")
        }));
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

/// One full path; returns the final signed coordinate, the log-weight and
/// whether the weight exponent hit the overflow guard.
pub(crate) fn walk_radial(
    x0: f64,
    config: &SimConfig,
    params: &ModelParams,
    drift: &DriftSpec,
    rng: &mut impl Rng,
) -> (f64, f64, bool) {
    let dt = config.dt;
    let sqdt = dt.sqrt();
    let band = config.band;
    let eps = params.eps();
    let gamma = 0.5 * (1.0 + params.eta());
    let n_steps = config.n_steps();
    let mut y = x0;
    let mut log_w = 0.0;
    let mut clipped = false;
    for _ in 0..n_steps {
        let bessel = if config.bessel_term && y > 0.0 {
            0.5 / (y + eps)
        } else {
            0.0
        };
        let beta_user = drift.line_drift(y);
        let xi: f64 = rng.sample(StandardNormal);
        let dw = sqdt * xi;
        let prop = match config.drift_mode {
            DriftMode::EulerMaruyama => y + (bessel + beta_user) * dt + dw,
            _ => y + bessel * dt + dw,
        };
        if config.drift_mode == DriftMode::Girsanov && beta_user != 0.0 {
            log_w += beta_user * dw - 0.5 * beta_user * beta_user * dt;
            if log_w > WEIGHT_EXP_CLIP {
                log_w = WEIGHT_EXP_CLIP;
                clipped = true;
            }
        }
        y = resolve_side(y, prop, dt, band, gamma, rng);
    }
    (y, log_w, clipped)
}
