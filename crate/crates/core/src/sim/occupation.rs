//! Occupation measures and exit statistics on bounded domains.
//!
//! Each path runs until it leaves the domain (or the horizon expires);
//! the time spent per bin, divided by the bin's `m_p` measure, estimates
//! the Green function column from the start point. Exit times and sides
//! are recorded alongside. Under Girsanov weights the whole occupation
//! vector of a path is weighted by the path's final weight, which is
//! unbiased by optional stopping.

use super::full::{full_step, FullState};
use super::{DriftMode, SimConfig};
use crate::bins::SignedBins;
use crate::drift::DriftSpec;
use crate::error::SimError;
use crate::geometry::{DomainSpec, EPoint, ModelParams};
use rand::Rng;
use rand_distr::StandardNormal;

/// Optional polar occupation bins on the plane part of the domain,
/// `n_rho` radial rings times `n_theta` sectors.
#[derive(Debug, Clone, Copy)]
pub struct PolarBins {
    pub n_rho: usize,
    pub n_theta: usize,
}

#[derive(Debug, Clone)]
pub struct OccupationReport {
    pub bins: SignedBins,
    /// Occupation per unit `m_p`: the Green column estimate.
    pub occupation: Vec<f64>,
    pub occupation_se: Vec<f64>,
    /// Flattened polar occupation density (`rho` major), when requested.
    pub polar: Option<(PolarBins, Vec<f64>, Vec<f64>)>,
    pub polar_mp: Option<Vec<f64>>,
    pub mean_exit_time: f64,
    pub exit_time_se: f64,
    pub exited: usize,
    pub exit_leg: usize,
    pub exit_plane: usize,
    pub n_paths: usize,
    /// Set when more than 1% of paths outlived the horizon.
    pub slow_exit_warning: bool,
}

pub fn occupation_and_exit(
    x0: &EPoint,
    config: &SimConfig,
    params: &ModelParams,
    drift: &DriftSpec,
    domain: &DomainSpec,
    bins: &SignedBins,
    polar: Option<PolarBins>,
) -> Result<OccupationReport, SimError> {
    config.validate(params.eps())?;
    if !domain.contains(x0, params) {
        return Err(SimError::StartOutsideDomain);
    }
    if domain.contains_star {
        occupation_glued(x0, config, params, drift, domain, bins, polar)
    } else {
        let r0 = match *x0 {
            EPoint::Leg { r } => r,
            _ => return Err(SimError::StartOutsideDomain),
        };
        occupation_leg_interval(r0, config, params, drift, domain, bins)
    }
}

struct Tally {
    occ_sum: Vec<f64>,
    occ_sumsq: Vec<f64>,
    polar_sum: Vec<f64>,
    polar_sumsq: Vec<f64>,
    w_sum: f64,
    w2_sum: f64,
    wtau_sum: f64,
    wtau2_sum: f64,
    exited: usize,
    exit_leg: usize,
    exit_plane: usize,
}

impl Tally {
    fn new(nb: usize, np: usize) -> Self {
        Self {
            occ_sum: vec![0.0; nb],
            occ_sumsq: vec![0.0; nb],
            polar_sum: vec![0.0; np],
            polar_sumsq: vec![0.0; np],
            w_sum: 0.0,
            w2_sum: 0.0,
            wtau_sum: 0.0,
            wtau2_sum: 0.0,
            exited: 0,
            exit_leg: 0,
            exit_plane: 0,
        }
    }

    fn merge(&mut self, other: Tally) {
        for (a, b) in self.occ_sum.iter_mut().zip(other.occ_sum) {
            *a += b;
        }
        for (a, b) in self.occ_sumsq.iter_mut().zip(other.occ_sumsq) {
            *a += b;
        }
        for (a, b) in self.polar_sum.iter_mut().zip(other.polar_sum) {
            *a += b;
        }
        for (a, b) in self.polar_sumsq.iter_mut().zip(other.polar_sumsq) {
            *a += b;
        }
        self.w_sum += other.w_sum;
        self.w2_sum += other.w2_sum;
        self.wtau_sum += other.wtau_sum;
        self.wtau2_sum += other.wtau2_sum;
        self.exited += other.exited;
        self.exit_leg += other.exit_leg;
        self.exit_plane += other.exit_plane;
    }
}

fn occupation_glued(
    x0: &EPoint,
    config: &SimConfig,
    params: &ModelParams,
    drift: &DriftSpec,
    domain: &DomainSpec,
    bins: &SignedBins,
    polar: Option<PolarBins>,
) -> Result<OccupationReport, SimError> {
    let nb = bins.len();
    let span = domain.plane_rho_span(params);
    let leg_end = -domain.leg_length;
    let np = polar.map_or(0, |p| p.n_rho * p.n_theta);
    let dt = config.dt;
    let n_steps = config.n_steps();

    let parts = super::batched(config.n_paths, config.batch, |range| {
        let mut tally = Tally::new(nb, np);
        let mut occ = vec![0.0f64; nb];
        let mut pol = vec![0.0f64; np];
        for path in range {
            let mut rng = config.rng_for_path(path as u64);
            occ.iter_mut().for_each(|v| *v = 0.0);
            pol.iter_mut().for_each(|v| *v = 0.0);
            let mut state = FullState::from_point(x0, params, config.band);
            let mut log_w = 0.0;
            let mut clipped = false;
            let mut exited = false;
            let mut tau = n_steps as f64 * dt;
            for step in 0..n_steps {
                state = full_step(state, config, params, drift, &mut log_w, &mut clipped, &mut rng);
                let y = state.signed(params);
                if y >= span {
                    tau = (step + 1) as f64 * dt;
                    exited = true;
                    tally.exit_plane += 1;
                    break;
                }
                if y <= leg_end {
                    tau = (step + 1) as f64 * dt;
                    exited = true;
                    tally.exit_leg += 1;
                    break;
                }
                if let Some(b) = bins.index_of(y) {
                    occ[b] += dt;
                }
                if let (Some(pb), FullState::Plane { x1, x2 }) = (polar, state) {
                    let rho = x1.hypot(x2) - params.eps();
                    let th = x2.atan2(x1).rem_euclid(2.0 * std::f64::consts::PI);
                    let ir = ((rho / span) * pb.n_rho as f64) as usize;
                    let it = ((th / (2.0 * std::f64::consts::PI)) * pb.n_theta as f64) as usize;
                    if ir < pb.n_rho && it < pb.n_theta {
                        pol[ir * pb.n_theta + it] += dt;
                    }
                }
            }
            let w = log_w.exp();
            tally.exited += exited as usize;
            tally.w_sum += w;
            tally.w2_sum += w * w;
            tally.wtau_sum += w * tau;
            tally.wtau2_sum += w * w * tau * tau;
            for b in 0..nb {
                tally.occ_sum[b] += w * occ[b];
                tally.occ_sumsq[b] += (w * occ[b]) * (w * occ[b]);
            }
            for b in 0..np {
                tally.polar_sum[b] += w * pol[b];
                tally.polar_sumsq[b] += (w * pol[b]) * (w * pol[b]);
            }
        }
        tally
    });

    let mut total = Tally::new(nb, np);
    for t in parts {
        total.merge(t);
    }
    finalize(total, config, params, domain, bins, polar)
}

fn occupation_leg_interval(
    r0: f64,
    config: &SimConfig,
    params: &ModelParams,
    drift: &DriftSpec,
    domain: &DomainSpec,
    bins: &SignedBins,
) -> Result<OccupationReport, SimError> {
    let nb = bins.len();
    let l = domain.leg_length;
    let dt = config.dt;
    let sqdt = dt.sqrt();
    let n_steps = config.n_steps();
    let em = config.drift_mode == DriftMode::EulerMaruyama;
    let girsanov = config.drift_mode == DriftMode::Girsanov;

    let parts = super::batched(config.n_paths, config.batch, |range| {
        let mut tally = Tally::new(nb, 0);
        let mut occ = vec![0.0f64; nb];
        for path in range {
            let mut rng = config.rng_for_path(path as u64);
            occ.iter_mut().for_each(|v| *v = 0.0);
            let mut r = r0;
            let mut log_w = 0.0;
            let mut exited = false;
            let mut tau = n_steps as f64 * dt;
            for step in 0..n_steps {
                let b = drift.on_leg(r);
                let dw = sqdt * rng.sample::<f64, _>(StandardNormal);
                if girsanov && b != 0.0 {
                    log_w += b * dw - 0.5 * b * b * dt;
                }
                r += dw + if em { b * dt } else { 0.0 };
                if r <= 0.0 {
                    tau = (step + 1) as f64 * dt;
                    exited = true;
                    tally.exit_leg += 1; // through the darning point
                    break;
                }
                if r >= l {
                    tau = (step + 1) as f64 * dt;
                    exited = true;
                    tally.exit_plane += 1; // through the far endpoint
                    break;
                }
                if let Some(bb) = bins.index_of(-r) {
                    occ[bb] += dt;
                }
            }
            let w = log_w.exp();
            tally.exited += exited as usize;
            tally.w_sum += w;
            tally.w2_sum += w * w;
            tally.wtau_sum += w * tau;
            tally.wtau2_sum += w * w * tau * tau;
            for bb in 0..nb {
                tally.occ_sum[bb] += w * occ[bb];
                tally.occ_sumsq[bb] += (w * occ[bb]) * (w * occ[bb]);
            }
        }
        tally
    });

    let mut total = Tally::new(nb, 0);
    for t in parts {
        total.merge(t);
    }
    finalize(total, config, params, domain, bins, None)
}

fn finalize(
    tally: Tally,
    config: &SimConfig,
    params: &ModelParams,
    domain: &DomainSpec,
    bins: &SignedBins,
    polar: Option<PolarBins>,
) -> Result<OccupationReport, SimError> {
    let n = config.n_paths as f64;
    let w = tally.w_sum;
    let mp = bins.mp_measures(params);
    let mut occupation = Vec::with_capacity(bins.len());
    let mut occupation_se = Vec::with_capacity(bins.len());
    for b in 0..bins.len() {
        let mean = tally.occ_sum[b] / w;
        let var = (tally.occ_sumsq[b] / n - (tally.occ_sum[b] / n).powi(2)).max(0.0);
        let se = (var / n).sqrt() / (w / n);
        occupation.push(mean / mp[b]);
        occupation_se.push(se / mp[b]);
    }
    let polar_out = polar.map(|pb| {
        let span = domain.plane_rho_span(params);
        let eps = params.eps();
        let mut vals = Vec::with_capacity(pb.n_rho * pb.n_theta);
        let mut ses = Vec::with_capacity(pb.n_rho * pb.n_theta);
        let mut mps = Vec::with_capacity(pb.n_rho * pb.n_theta);
        for ir in 0..pb.n_rho {
            let a = span * ir as f64 / pb.n_rho as f64;
            let b = span * (ir + 1) as f64 / pb.n_rho as f64;
            let ring = std::f64::consts::PI * ((b + eps) * (b + eps) - (a + eps) * (a + eps));
            let cell_mp = ring / pb.n_theta as f64;
            for it in 0..pb.n_theta {
                let k = ir * pb.n_theta + it;
                let mean = tally.polar_sum[k] / w;
                let var = (tally.polar_sumsq[k] / n - (tally.polar_sum[k] / n).powi(2)).max(0.0);
                let se = (var / n).sqrt() / (w / n);
                vals.push(mean / cell_mp);
                ses.push(se / cell_mp);
                mps.push(cell_mp);
            }
        }
        ((pb, vals, ses), mps)
    });
    let mean_tau = tally.wtau_sum / w;
    let tau_var = (tally.wtau2_sum / n - (tally.wtau_sum / n).powi(2)).max(0.0);
    let (polar_main, polar_mp) = match polar_out {
        Some((main, mp)) => (Some(main), Some(mp)),
        None => (None, None),
    };
    Ok(OccupationReport {
        bins: bins.clone(),
        occupation,
        occupation_se,
        polar: polar_main,
        polar_mp,
        mean_exit_time: mean_tau,
        exit_time_se: (tau_var / n).sqrt() / (w / n),
        exited: tally.exited,
        exit_leg: tally.exit_leg,
        exit_plane: tally.exit_plane,
        n_paths: config.n_paths,
        slow_exit_warning: (config.n_paths - tally.exited) as f64 > 0.01 * n,
    })
}

impl OccupationReport {
    /// Integral of the Green column against `m_p`; equals the mean exit
    /// time up to the horizon truncation.
    pub fn green_mass(&self, params: &ModelParams) -> f64 {
        self.occupation
            .iter()
            .zip(self.bins.mp_measures(params))
            .map(|(g, m)| g * m)
            .sum()
    }
}
