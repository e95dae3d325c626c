//! Scalar drift fields on the glued space.
//!
//! A drift is a scalar function `b : E -> R` acting through
//! `b (d/dx1 + d/dx2)` on the plane and `b d/dr` on the leg. Simulation
//! needs pointwise evaluable representatives, so fields are bounded and
//! capped; the declared integrability exponents (`p1` on the leg, `p2` on
//! the plane) are carried for reporting.
//!
//! The 1-D machinery consumes the line orientation of the field: on the
//! signed radial coordinate the leg part enters with a flipped sign
//! (`beta(y) = -b_leg(-y)` for `y < 0`) while the plane part enters through
//! its radial representative.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DriftModel {
    Zero,
    /// Constant value on the leg interval `(0, upto)`, zero elsewhere.
    ConstLeg { value: f64, upto: f64 },
    /// Smooth compactly supported bumps, one on the leg and a radial one on
    /// the plane: `amp * exp(1 - 1/(1 - u^2))` with `u = (x - center)/width`.
    SmoothBump {
        leg_amp: f64,
        leg_center: f64,
        leg_width: f64,
        plane_amp: f64,
        plane_center: f64,
        plane_width: f64,
    },
    /// Piecewise-linear table on the signed radial coordinate.
    CustomTable { ys: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftSpec {
    pub model: DriftModel,
    /// Leg integrability exponent, in (1, inf].
    pub p1: f64,
    /// Plane integrability exponent, in (2, inf].
    pub p2: f64,
    pub norm_leg: f64,
    pub norm_plane: f64,
    /// Pointwise cap applied to every evaluation.
    pub cap: f64,
}

fn bump(x: f64, center: f64, width: f64) -> f64 {
    let u = (x - center) / width;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

impl DriftSpec {
    pub fn new(model: DriftModel, p1: f64, p2: f64, cap: f64) -> Self {
        let mut spec = Self {
            model,
            p1,
            p2,
            norm_leg: 0.0,
            norm_plane: 0.0,
            cap,
        };
        spec.norm_leg = spec.lp_norm_leg();
        spec.norm_plane = spec.lp_norm_plane();
        spec
    }

    pub fn zero() -> Self {
        Self::new(DriftModel::Zero, f64::INFINITY, f64::INFINITY, 1.0)
    }

    pub fn const_leg(value: f64, upto: f64) -> Self {
        Self::new(
            DriftModel::ConstLeg { value, upto },
            f64::INFINITY,
            f64::INFINITY,
            value.abs().max(1.0),
        )
    }

    /// Default smooth preset: bumps supported on `[0.3, 0.8]` of the leg and
    /// `[0.35, 0.85]` of the plane radius, well away from the interface.
    pub fn smooth_bump(leg_amp: f64, plane_amp: f64) -> Self {
        Self::new(
            DriftModel::SmoothBump {
                leg_amp,
                leg_center: 0.55,
                leg_width: 0.25,
                plane_amp,
                plane_center: 0.6,
                plane_width: 0.25,
            },
            f64::INFINITY,
            f64::INFINITY,
            leg_amp.abs().max(plane_amp.abs()).max(1.0),
        )
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.model, DriftModel::Zero)
    }

    fn capped(&self, v: f64) -> f64 {
        v.clamp(-self.cap, self.cap)
    }

    /// Value on the leg at coordinate `r > 0`.
    pub fn on_leg(&self, r: f64) -> f64 {
        let v = match &self.model {
            DriftModel::Zero => 0.0,
            DriftModel::ConstLeg { value, upto } => {
                if r > 0.0 && r < *upto {
                    *value
                } else {
                    0.0
                }
            }
            DriftModel::SmoothBump {
                leg_amp,
                leg_center,
                leg_width,
                ..
            } => leg_amp * bump(r, *leg_center, *leg_width),
            // stored in line orientation: flip back to the leg chart
            DriftModel::CustomTable { ys, values } => -table_interp(ys, values, -r),
        };
        self.capped(v)
    }

    /// Scalar field value at a plane point.
    pub fn on_plane(&self, x1: f64, x2: f64, eps: f64) -> f64 {
        let rho = x1.hypot(x2) - eps;
        self.plane_radial(rho.max(0.0))
    }

    /// Radial representative of the plane part, as a function of `|x|_rho`.
    pub fn plane_radial(&self, rho: f64) -> f64 {
        let v = match &self.model {
            DriftModel::Zero | DriftModel::ConstLeg { .. } => 0.0,
            DriftModel::SmoothBump {
                plane_amp,
                plane_center,
                plane_width,
                ..
            } => plane_amp * bump(rho, *plane_center, *plane_width),
            DriftModel::CustomTable { ys, values } => table_interp(ys, values, rho),
        };
        self.capped(v)
    }

    /// Transport field on the signed radial coordinate.
    pub fn line_drift(&self, y: f64) -> f64 {
        if y < 0.0 {
            -self.on_leg(-y)
        } else {
            self.plane_radial(y)
        }
    }

    pub fn sample_line(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&y| self.line_drift(y)).collect()
    }

    fn lp_norm_leg(&self) -> f64 {
        lp_norm(|r| self.on_leg(r), self.p1, 0.0, 50.0, 1.0)
    }

    fn lp_norm_plane(&self) -> f64 {
        // plane norm against Lebesgue measure on the annulus
        let f = |rho: f64| self.plane_radial(rho);
        if self.p2.is_infinite() {
            let mut m = 0.0f64;
            let n = 20_000;
            for i in 0..=n {
                m = m.max(f(50.0 * i as f64 / n as f64).abs());
            }
            m
        } else {
            let n = 20_000;
            let h = 50.0 / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let rho = (i as f64 + 0.5) * h;
                let ring = 2.0 * std::f64::consts::PI * rho;
                s += f(rho).abs().powf(self.p2) * ring * h;
            }
            s.powf(1.0 / self.p2)
        }
    }
}

fn lp_norm(f: impl Fn(f64) -> f64, p: f64, lo: f64, hi: f64, weight: f64) -> f64 {
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    if p.is_infinite() {
        let mut m = 0.0f64;
        for i in 0..=n {
            m = m.max(f(lo + i as f64 * h).abs());
        }
        m
    } else {
        let mut s = 0.0;
        for i in 0..n {
            s += f(lo + (i as f64 + 0.5) * h).abs().powf(p) * weight * h;
        }
        s.powf(1.0 / p)
    }
}

fn table_interp(ys: &[f64], values: &[f64], y: f64) -> f64 {
    if ys.is_empty() || y < ys[0] || y > *ys.last().unwrap() {
        return 0.0;
    }
    let i = match ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
        Ok(i) => return values[i],
        Err(i) => i - 1,
    };
    let lam = (y - ys[i]) / (ys[i + 1] - ys[i]);
    values[i] * (1.0 - lam) + values[i + 1] * lam
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_everywhere() {
        let d = DriftSpec::zero();
        assert_eq!(d.on_leg(0.5), 0.0);
        assert_eq!(d.plane_radial(1.0), 0.0);
        assert!(d.is_zero());
    }

    #[test]
    fn const_leg_support() {
        let d = DriftSpec::const_leg(0.7, 1.0);
        assert_eq!(d.on_leg(0.5), 0.7);
        assert_eq!(d.on_leg(1.5), 0.0);
        assert_eq!(d.plane_radial(0.5), 0.0);
        // line orientation flips the leg sign
        assert_eq!(d.line_drift(-0.5), -0.7);
        assert!((d.norm_leg - 0.7).abs() < 1e-12);
    }

    #[test]
    fn bump_is_smooth_and_supported() {
        let d = DriftSpec::smooth_bump(0.5, 0.4);
        assert_eq!(d.on_leg(0.29), 0.0);
        assert_eq!(d.on_leg(0.81), 0.0);
        assert!((d.on_leg(0.55) - 0.5).abs() < 1e-12);
        assert_eq!(d.plane_radial(0.34), 0.0);
        assert!((d.plane_radial(0.6) - 0.4).abs() < 1e-12);
        assert!(d.norm_plane > 0.0 && d.norm_leg > 0.0);
    }

    #[test]
    fn cap_clamps_values() {
        let mut d = DriftSpec::const_leg(10.0, 2.0);
        d.cap = 3.0;
        assert_eq!(d.on_leg(1.0), 3.0);
    }

    #[test]
    fn table_lookup_interpolates() {
        let d = DriftSpec::new(
            DriftModel::CustomTable {
                ys: vec![-1.0, 0.0, 1.0],
                values: vec![-2.0, 0.0, 2.0],
            },
            f64::INFINITY,
            f64::INFINITY,
            10.0,
        );
        assert!((d.line_drift(0.5) - 1.0).abs() < 1e-12);
        assert!((d.line_drift(-0.5) + 1.0).abs() < 1e-12);
        assert_eq!(d.line_drift(3.0), 0.0);
    }
}
