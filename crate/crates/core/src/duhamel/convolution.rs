//! Spot checks of the convolution inequalities behind the series
//! contraction: for each source/target regime the ratio
//!
//! ```text
//! R(t, x, y) = int_0^t int p0(t-s, x, z) |b(z)| |grad_z p(s, z, y)| m(dz) ds
//!              / p0(t, x, y)
//! ```
//!
//! is integrated numerically over regime samples and reported as a curve
//! in `t`. The curve must be non-decreasing and vanish towards `t = 0`;
//! with the envelope rate chosen below the kernel's intrinsic decay and
//! samples whose targets clear the drift support, the small-`t` end
//! carries an exponential factor on top of the square-root rate.

use super::{endpoint_aware_quadrature, grad_kernel_tables, SpaceTimeGrid};
use crate::drift::DriftSpec;
use crate::error::SeriesError;
use crate::geometry::{from_signed_radial, ModelParams};
use crate::kernels::{envelope, EnvelopeVariant};
use crate::pde::SolveOptions;
use rand::{Rng, SeedableRng};
use serde::Serialize;

/// The seven source/target configurations of the convolution battery,
/// each tied to the envelope variant its estimate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Both points on the leg (variant 0).
    LegLeg,
    /// Leg source, plane target (variant 0).
    LegToPlane,
    /// Plane source with `|x|_rho <= 1`, leg target (variant 1).
    PlaneNearToLeg,
    /// Plane source with `|x|_rho > 1`, leg target (variant 2).
    PlaneFarToLeg,
    /// Plane pair with far target `|y|_rho > M` (variant 3).
    PlaneTargetFar,
    /// Plane pair, far source `|x|_rho >= 2M`, near target (variant 4).
    PlaneSourceFarTargetNear,
    /// Plane pair, near source `|x|_rho < 2M` and target (variant 5).
    PlaneBothNear,
}

impl Regime {
    pub fn all() -> [Regime; 7] {
        [
            Regime::LegLeg,
            Regime::LegToPlane,
            Regime::PlaneNearToLeg,
            Regime::PlaneFarToLeg,
            Regime::PlaneTargetFar,
            Regime::PlaneSourceFarTargetNear,
            Regime::PlaneBothNear,
        ]
    }

    pub fn variant_id(&self) -> u8 {
        match self {
            Regime::LegLeg | Regime::LegToPlane => 0,
            Regime::PlaneNearToLeg => 1,
            Regime::PlaneFarToLeg => 2,
            Regime::PlaneTargetFar => 3,
            Regime::PlaneSourceFarTargetNear => 4,
            Regime::PlaneBothNear => 5,
        }
    }

    /// Sampling intervals (signed coordinates) for source and target. The
    /// target intervals keep a clearance from the smooth-bump drift
    /// supports so the small-time end of the ratio curve is exponentially
    /// suppressed, and every sample satisfies its regime constraint with
    /// threshold `m`.
    fn ranges(&self, m: f64) -> ((f64, f64), (f64, f64)) {
        match self {
            Regime::LegLeg => ((-2.2, -1.0), (-2.0, -1.2)),
            Regime::LegToPlane => ((-2.0, -1.2), (1.2, 2.0)),
            Regime::PlaneNearToLeg => ((0.05, 0.95), (-2.0, -1.2)),
            Regime::PlaneFarToLeg => ((1.05, 2.2), (-2.0, -1.2)),
            Regime::PlaneTargetFar => ((0.1, 2.4), (m + 0.2, 2.0 * m + 0.4)),
            Regime::PlaneSourceFarTargetNear => ((2.0 * m + 0.05, 2.0 * m + 0.6), (0.05, 0.25)),
            Regime::PlaneBothNear => ((0.05, 2.0 * m - 0.1), (0.05, 0.25)),
        }
    }

    fn check(&self, x: f64, y: f64, m: f64) -> bool {
        match self {
            Regime::LegLeg => x < 0.0 && y < 0.0,
            Regime::LegToPlane => x < 0.0 && y > 0.0,
            Regime::PlaneNearToLeg => (0.0..=1.0).contains(&x) && y < 0.0,
            Regime::PlaneFarToLeg => x > 1.0 && y < 0.0,
            Regime::PlaneTargetFar => x > 0.0 && y > m,
            Regime::PlaneSourceFarTargetNear => x >= 2.0 * m && y > 0.0 && y < m,
            Regime::PlaneBothNear => x > 0.0 && x < 2.0 * m && y > 0.0 && y < m,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionReport {
    pub regime: Regime,
    pub variant_id: u8,
    pub m_threshold: f64,
    pub alpha: f64,
    /// `(t, max ratio over the samples)`, ascending in `t`.
    pub curve: Vec<(f64, f64)>,
    /// `R(t_min) / R(2 t_min)` at the small end.
    pub small_end_decay: f64,
    pub non_decreasing: bool,
    pub n_samples: usize,
}

/// Runs one regime of the battery.
///
/// `eval_times` must be multiples of the grid's time spacing and contain
/// the first time twice-over so the small-end decay is measurable.
#[allow(clippy::too_many_arguments)]
pub fn verify_convolution_inequality(
    st: &SpaceTimeGrid,
    regime: Regime,
    drift: &DriftSpec,
    params: &ModelParams,
    eval_times: &[f64],
    n_samples: usize,
    seed: u64,
    m_threshold: f64,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<ConvolutionReport, SeriesError> {
    let grid = &st.grid;
    let dt = st.dt;
    let steps: Vec<usize> = eval_times
        .iter()
        .map(|&t| {
            let k = (t / dt).round() as usize;
            if k < 2 || ((k as f64 * dt) - t).abs() > 1e-9 * t || k > st.n_times {
                Err(SeriesError::BadGrid(format!(
                    "evaluation time {t} is not a usable time node"
                )))
            } else {
                Ok(k)
            }
        })
        .collect::<Result<_, _>>()?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let ((x_lo, x_hi), (y_lo, y_hi)) = regime.ranges(m_threshold);
    let samples: Vec<(f64, f64)> = (0..n_samples)
        .map(|_| {
            (
                rng.gen_range(x_lo..x_hi),
                rng.gen_range(y_lo..y_hi),
            )
        })
        .collect();
    for &(x, y) in &samples {
        if !regime.check(x, y, m_threshold) {
            return Err(SeriesError::BadGrid(format!(
                "sample ({x}, {y}) violates the {regime:?} regime"
            )));
        }
    }
    let targets: Vec<f64> = samples.iter().map(|&(_, y)| y).collect();
    let grads = grad_kernel_tables(st, &targets, opts)?;

    let variant = EnvelopeVariant::new(regime.variant_id(), alpha).with_m(m_threshold);
    let nodes = grid.nodes();
    let node_pts: Vec<_> = nodes
        .iter()
        .map(|&z| from_signed_radial(z, params).expect("grid node"))
        .collect();
    let abs_beta_m: Vec<f64> = nodes
        .iter()
        .zip(grid.node_measure())
        .map(|(&z, &m)| drift.line_drift(z).abs() * m)
        .collect();

    let mut curve: Vec<(f64, f64)> = eval_times.iter().map(|&t| (t, 0.0)).collect();
    for (s_idx, &(x, _)) in samples.iter().enumerate() {
        let x_pt = from_signed_radial(x, params).expect("sample coordinate");
        let y_pt = from_signed_radial(samples[s_idx].1, params).expect("sample coordinate");
        // envelope rows p0(k dt, x, z_i) reused for every (t - s) lookup
        let env_rows: Vec<Vec<f64>> = (1..=st.n_times)
            .map(|k| {
                let t = k as f64 * dt;
                node_pts
                    .iter()
                    .map(|z| envelope(&variant, t, &x_pt, z, params))
                    .collect()
            })
            .collect();
        let g = &grads[s_idx];
        for (ti, &t_steps) in steps.iter().enumerate() {
            let inner = |s_node: usize| -> f64 {
                let env = &env_rows[t_steps - s_node - 1];
                let grad = &g.values[s_node - 1];
                (0..nodes.len())
                    .map(|i| env[i] * abs_beta_m[i] * grad[i].abs())
                    .sum::<f64>()
            };
            let (integral, _) = endpoint_aware_quadrature(inner, t_steps, dt);
            let denom = envelope(&variant, t_steps as f64 * dt, &x_pt, &y_pt, params);
            let ratio = integral / denom;
            if ratio > curve[ti].1 {
                curve[ti].1 = ratio;
            }
        }
    }

    let non_decreasing = curve.windows(2).all(|w| w[1].1 >= 0.98 * w[0].1);
    // small-end decay: compare the first time against its double
    let small_end_decay = {
        let (t0, r0) = curve[0];
        let doubled = curve
            .iter()
            .find(|(t, _)| (*t - 2.0 * t0).abs() <= 1e-9 * t0)
            .map(|&(_, r)| r);
        match doubled {
            Some(r2) if r2 > 0.0 => r0 / r2,
            _ => f64::NAN,
        }
    };
    Ok(ConvolutionReport {
        regime,
        variant_id: regime.variant_id(),
        m_threshold,
        alpha,
        curve,
        small_end_decay,
        non_decreasing,
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::free_space_grid;

    fn params() -> ModelParams {
        ModelParams::new(0.25, 1.0).unwrap()
    }

    fn battery_grid() -> SpaceTimeGrid {
        let grid = free_space_grid(params(), 4.0, 4.0, 0.025).unwrap();
        SpaceTimeGrid::new(grid, 0.0125, 16).unwrap()
    }

    #[test]
    fn zero_drift_gives_zero_ratios() {
        let st = battery_grid();
        let rep = verify_convolution_inequality(
            &st,
            Regime::LegLeg,
            &DriftSpec::zero(),
            &params(),
            &[0.05, 0.1, 0.2],
            4,
            1,
            1.0,
            0.2,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(rep.curve.iter().all(|&(_, r)| r == 0.0));
        assert!(rep.non_decreasing);
    }

    #[test]
    fn leg_regime_curve_decays_at_small_end() {
        let st = battery_grid();
        let drift = DriftSpec::smooth_bump(0.5, 0.4);
        let rep = verify_convolution_inequality(
            &st,
            Regime::LegLeg,
            &drift,
            &params(),
            &[0.05, 0.1, 0.2],
            6,
            7,
            1.0,
            0.2,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(rep.non_decreasing, "curve {:?}", rep.curve);
        assert!(rep.curve[2].1 > 0.0);
        assert!(
            rep.small_end_decay <= 0.6,
            "small-end decay {} (curve {:?})",
            rep.small_end_decay,
            rep.curve
        );
    }

    #[test]
    fn bad_eval_time_rejected() {
        let st = battery_grid();
        let e = verify_convolution_inequality(
            &st,
            Regime::LegLeg,
            &DriftSpec::zero(),
            &params(),
            &[0.051],
            2,
            1,
            1.0,
            0.2,
            &SolveOptions::default(),
        );
        assert!(e.is_err());
    }
}
