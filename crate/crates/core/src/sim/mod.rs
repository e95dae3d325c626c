//! Monte Carlo engine for the glued-space diffusion.
//!
//! Paths follow Euler-Maruyama dynamics away from the darning point.
//! Within a band of width `band` around the interface the motion is
//! resolved on the signed radial coordinate: a step that changes sign hit
//! the interface with certainty, a same-sign step hit it with the Brownian
//! bridge probability `exp(-2 |y| |y'| / dt)`, and on a hit the proposal's
//! magnitude is kept while its side is redrawn, plane side with
//! probability `(1 + eta)/2`. The magnitude sequence is an exact reflected
//! walk and the side an independent biased coin, so the sampled skeleton
//! of the pure interface problem is exact in distribution.
//!
//! Reproducibility: path `i` consumes an independent counter-based stream
//! (`ChaCha8`, stream id = path index), and reductions combine fixed path
//! batches in index order, so results are bit-identical for any worker
//! count.

pub mod density;
pub mod full;
pub mod occupation;
pub mod radial;
pub mod skew;
pub mod weight;

pub use density::{estimate_density, EmpiricalDensity};
pub use full::simulate_full;
pub use occupation::{occupation_and_exit, OccupationReport, PolarBins};
pub use radial::simulate_radial;
pub use skew::{skew_density, skew_mass, step_skew};
pub use weight::{girsanov_weight, PathSegment};

use crate::error::SimError;
use crate::geometry::EPoint;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftMode {
    /// No drift: the base symmetric process.
    Driftless,
    /// Drift applied pathwise in the Euler-Maruyama step.
    EulerMaruyama,
    /// Paths follow the driftless law; the drifted law is represented by
    /// exponential martingale weights.
    Girsanov,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Interface crossing-detection band; at least `3 sqrt(dt)`.
    pub band: f64,
    pub drift_mode: DriftMode,
    /// Include the radial geometry term `1/(2(y+eps))` on the plane side of
    /// 1-D simulations. Disabled for pure skew Brownian motion runs.
    pub bessel_term: bool,
    /// Paths per reduction batch; reductions combine batches in order.
    pub batch: usize,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            n_paths,
            seed,
            band: 3.0 * dt.sqrt(),
            drift_mode: DriftMode::Driftless,
            bessel_term: true,
            batch: 4096,
        }
    }

    pub fn with_mode(mut self, mode: DriftMode) -> Self {
        self.drift_mode = mode;
        self
    }

    pub fn without_bessel(mut self) -> Self {
        self.bessel_term = false;
        self
    }

    pub fn validate(&self, eps: f64) -> Result<(), SimError> {
        if !(self.dt > 0.0) || self.dt > self.horizon {
            return Err(SimError::BadConfig(format!(
                "need 0 < dt <= horizon, got dt={} horizon={}",
                self.dt, self.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(SimError::BadConfig("n_paths must be positive".into()));
        }
        if self.band < 3.0 * self.dt.sqrt() {
            return Err(SimError::BadConfig(format!(
                "band {} narrower than 3 sqrt(dt) = {}",
                self.band,
                3.0 * self.dt.sqrt()
            )));
        }
        // the interface geometry term must not overshoot within one step
        if self.bessel_term && self.dt > eps * eps {
            return Err(SimError::StepTooLarge { dt: self.dt, eps });
        }
        if self.batch == 0 {
            return Err(SimError::BadConfig("batch must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Independent stream for one path.
    pub fn rng_for_path(&self, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        rng
    }
}

/// Simulated endpoints with per-path weights and stream provenance.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub endpoints: Vec<EPoint>,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub stream_range: (u64, u64),
    /// Number of weights clipped at the overflow guard `exp(50)`.
    pub clipped_weights: usize,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.endpoints.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean_weight(&self) -> f64 {
        self.total_weight() / self.n_paths() as f64
    }

    /// Standard error of the mean weight.
    pub fn mean_weight_se(&self) -> f64 {
        let n = self.n_paths() as f64;
        let mean = self.mean_weight();
        let var = self
            .weights
            .iter()
            .map(|w| (w - mean) * (w - mean))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }

    /// Writes one row per path: the endpoint as a signed radial
    /// coordinate plus plane coordinates when present, and the weight.
    pub fn write_csv<W: std::io::Write>(
        &self,
        params: &crate::geometry::ModelParams,
        mut out: W,
    ) -> std::io::Result<()> {
        writeln!(out, "path,y_signed,x1,x2,weight")?;
        for (i, (pt, w)) in self.endpoints.iter().zip(&self.weights).enumerate() {
            let y = crate::geometry::signed_radial_embed(pt, params);
            match pt {
                EPoint::Plane { x1, x2 } => writeln!(out, "{i},{y},{x1},{x2},{w}")?,
                _ => writeln!(out, "{i},{y},,,{w}")?,
            }
        }
        Ok(())
    }
}

/// Splits `0..n` into batches of `batch` paths, maps each batch in parallel
/// and folds the results in batch order. The per-batch closure must be
/// deterministic given the batch range.
pub fn batched<R, F>(n: usize, batch: usize, map: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync,
{
    use rayon::prelude::*;
    let n_batches = n.div_ceil(batch);
    (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let lo = b * batch;
            let hi = ((b + 1) * batch).min(n);
            map(lo..hi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let eps = 0.25;
        assert!(SimConfig::new(1e-4, 0.5, 100, 1).validate(eps).is_ok());
        assert!(SimConfig::new(0.0, 0.5, 100, 1).validate(eps).is_err());
        assert!(SimConfig::new(1.0, 0.5, 100, 1).validate(eps).is_err());
        let mut c = SimConfig::new(1e-4, 0.5, 100, 1);
        c.band = 1e-3; // below 3 sqrt(dt) = 0.03
        assert!(c.validate(eps).is_err());
        // dt above eps^2 conflicts with the interface term
        let c = SimConfig::new(0.1, 0.5, 100, 1);
        assert!(matches!(
            c.validate(eps),
            Err(SimError::StepTooLarge { .. })
        ));
        assert!(c.clone().without_bessel().validate(eps).is_ok());
    }

    #[test]
    fn path_streams_are_independent_and_reproducible() {
        use rand::Rng;
        let c = SimConfig::new(1e-3, 0.5, 10, 42);
        let a: Vec<u64> = {
            let mut r = c.rng_for_path(3);
            (0..8).map(|_| r.gen()).collect()
        };
        let b: Vec<u64> = {
            let mut r = c.rng_for_path(3);
            (0..8).map(|_| r.gen()).collect()
        };
        let other: Vec<u64> = {
            let mut r = c.rng_for_path(4);
            (0..8).map(|_| r.gen()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn batching_covers_range_exactly() {
        let parts = batched(10_007, 256, |r| r.len());
        assert_eq!(parts.iter().sum::<usize>(), 10_007);
        assert_eq!(parts.len(), 40);
    }
}
