//! Girsanov reweighting of recorded paths.
//!
//! The drifted law is the driftless law weighted by the exponential
//! martingale of the drift along the path. With the scalar field acting as
//! the vector `(b, b)` on the plane, the exponent is
//!
//! ```text
//! leg segments    sum b dW      - 1/2 sum b^2 dt
//! plane segments  sum b (dW1 + dW2) - sum b^2 dt
//! band segments   0
//! ```
//!
//! (the plane quadratic variation of `(b, b) . dW` is `2 b^2 dt`, halved).
//! Band segments contribute nothing: the darning point carries no
//! reference mass and band time vanishes with the band.

use crate::drift::DriftSpec;

pub(crate) const WEIGHT_EXP_CLIP: f64 = 50.0;

/// One recorded step of a driftless path: the position at the step start
/// and the Brownian increments spent on it.
#[derive(Debug, Clone, Copy)]
pub enum PathSegment {
    Leg { r: f64, dw: f64 },
    Plane { x1: f64, x2: f64, dw1: f64, dw2: f64 },
    Band,
}

/// Weight of one recorded path; returns the weight and whether the
/// exponent hit the overflow guard `exp(50)`.
pub fn girsanov_weight(
    segments: &[PathSegment],
    drift: &DriftSpec,
    dt: f64,
    eps: f64,
) -> (f64, bool) {
    let mut log_w = 0.0;
    let mut clipped = false;
    for seg in segments {
        match *seg {
            PathSegment::Leg { r, dw } => {
                let b = drift.on_leg(r);
                log_w += b * dw - 0.5 * b * b * dt;
            }
            PathSegment::Plane { x1, x2, dw1, dw2 } => {
                let b = drift.on_plane(x1, x2, eps);
                log_w += b * (dw1 + dw2) - b * b * dt;
            }
            PathSegment::Band => {}
        }
        if log_w > WEIGHT_EXP_CLIP {
            log_w = WEIGHT_EXP_CLIP;
            clipped = true;
        }
    }
    (log_w.exp(), clipped)
}
