//! Weighted histogram estimation of `m_p` densities.

use super::PathEnsemble;
use crate::bins::SignedBins;
use crate::error::SimError;
use crate::geometry::{signed_radial_embed, ModelParams};

/// Empirical `m_p` density over signed radial bins, with per-bin standard
/// errors computed by the ratio-estimator delta method (effective sample
/// size aware under Girsanov weights).
#[derive(Debug, Clone)]
pub struct EmpiricalDensity {
    pub bins: SignedBins,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub mp_measures: Vec<f64>,
    /// Weighted fraction of paths landing inside the binned window.
    pub in_window_fraction: f64,
    pub total_weight: f64,
    pub n_paths: usize,
    pub effective_sample_size: f64,
}

pub fn estimate_density(
    ensemble: &PathEnsemble,
    bins: &SignedBins,
    params: &ModelParams,
) -> Result<EmpiricalDensity, SimError> {
    if ensemble.endpoints.is_empty() {
        return Err(SimError::EmptyEnsemble);
    }
    let mp = bins.mp_measures(params);
    if mp.iter().any(|&m| m <= 0.0) {
        return Err(SimError::BadBinning("bins of zero m_p measure".into()));
    }
    let nb = bins.len();
    let mut w_bin = vec![0.0f64; nb];
    let mut w2_bin = vec![0.0f64; nb];
    let mut w_total = 0.0;
    let mut w2_total = 0.0;
    let mut w_in = 0.0;
    for (pt, &w) in ensemble.endpoints.iter().zip(&ensemble.weights) {
        let y = signed_radial_embed(pt, params);
        w_total += w;
        w2_total += w * w;
        if let Some(b) = bins.index_of(y) {
            w_bin[b] += w;
            w2_bin[b] += w * w;
            w_in += w;
        }
    }
    let mut values = Vec::with_capacity(nb);
    let mut std_errors = Vec::with_capacity(nb);
    for b in 0..nb {
        let f = w_bin[b] / w_total;
        // sum_i (w_i (1_bin - f))^2 = (1 - 2f) sum_bin w^2 + f^2 sum w^2
        let var_num = (1.0 - 2.0 * f) * w2_bin[b] + f * f * w2_total;
        let se_f = var_num.max(0.0).sqrt() / w_total;
        values.push(f / mp[b]);
        std_errors.push(se_f / mp[b]);
    }
    Ok(EmpiricalDensity {
        bins: bins.clone(),
        values,
        std_errors,
        mp_measures: mp,
        in_window_fraction: w_in / w_total,
        total_weight: w_total,
        n_paths: ensemble.n_paths(),
        effective_sample_size: w_total * w_total / w2_total,
    })
}

impl EmpiricalDensity {
    /// Weighted mass inside the window plus the out-of-window remainder;
    /// equals 1 by construction of the normalization.
    pub fn total_mass(&self) -> f64 {
        let in_mass: f64 = self
            .values
            .iter()
            .zip(&self.mp_measures)
            .map(|(v, m)| v * m)
            .sum();
        in_mass + (1.0 - self.in_window_fraction)
    }

    /// `L1` distance against a reference density sampled per bin.
    pub fn l1_against(&self, reference: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(reference)
            .zip(&self.mp_measures)
            .map(|((v, r), m)| (v - r).abs() * m)
            .sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "y_lo,y_hi,density,std_error,mp_measure")?;
        for (i, w) in self.bins.edges().windows(2).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                w[0], w[1], self.values[i], self.std_errors[i], self.mp_measures[i]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftSpec;
    use crate::sim::radial::simulate_radial;
    use crate::sim::SimConfig;

    fn params() -> ModelParams {
        ModelParams::new(0.25, 1.0).unwrap()
    }

    #[test]
    fn mass_accounting_and_scaling() {
        let p = params();
        let cfg = SimConfig::new(5e-4, 0.25, 8000, 77);
        let ens = simulate_radial(0.0, &cfg, &p, &DriftSpec::zero()).unwrap();
        let bins = SignedBins::uniform(2.0, 2.0, 40, 40).unwrap();
        let d = estimate_density(&ens, &bins, &p).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert!(d.in_window_fraction > 0.95);
        assert_eq!(d.effective_sample_size, 8000.0);

        // quadrupling the path count roughly halves the mean standard error
        let cfg4 = SimConfig::new(5e-4, 0.25, 32_000, 77);
        let ens4 = simulate_radial(0.0, &cfg4, &p, &DriftSpec::zero()).unwrap();
        let d4 = estimate_density(&ens4, &bins, &p).unwrap();
        let mean_se = |d: &EmpiricalDensity| {
            d.std_errors.iter().sum::<f64>() / d.std_errors.len() as f64
        };
        let ratio = mean_se(&d) / mean_se(&d4);
        assert!((ratio - 2.0).abs() < 0.25, "se ratio {ratio}");
    }

    #[test]
    fn empirical_table_feeds_the_sandwich_fit() {
        use crate::geometry::from_signed_radial;
        use crate::kernels::{alpha_grid, fit_sandwich, KernelCell, DEFAULT_M};
        let p = params();
        let t = 0.25;
        let cfg = SimConfig::new(5e-4, t, 40_000, 19);
        let ens = simulate_radial(0.0, &cfg, &p, &DriftSpec::zero()).unwrap();
        let bins = SignedBins::uniform(2.0, 2.0, 30, 30).unwrap();
        let d = estimate_density(&ens, &bins, &p).unwrap();
        let x = from_signed_radial(0.0, &p).unwrap();
        let cells: Vec<KernelCell> = bins
            .centers()
            .iter()
            .zip(&d.values)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&c, &v)| KernelCell {
                t,
                x,
                y: from_signed_radial(c, &p).unwrap(),
                value: v,
            })
            .collect();
        let alphas = alpha_grid(1e-2, 1e2, 16).unwrap();
        let rep = fit_sandwich(&cells, 0, DEFAULT_M, &alphas, &p).unwrap();
        assert!(rep.spread().is_finite() && rep.spread() >= 1.0);
        assert!(rep.c_low > 0.0 && rep.c_up.is_finite());
    }

    #[test]
    fn empty_ensemble_rejected() {
        let p = params();
        let bins = SignedBins::uniform(1.0, 1.0, 8, 8).unwrap();
        let empty = PathEnsemble {
            endpoints: vec![],
            weights: vec![],
            seed: 0,
            stream_range: (0, 0),
            clipped_weights: 0,
        };
        assert!(estimate_density(&empty, &bins, &p).is_err());
    }
}
