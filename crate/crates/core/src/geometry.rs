//! State space of Brownian motion with varying dimension.
//!
//! The space `E` glues a punctured plane to a half-line at a single point:
//! a closed disc of radius `eps` is collapsed ("shorted") to the darning
//! point `a*`, and the origin of the half-line is identified with `a*`.
//! The reference measure `m_p` is Lebesgue on the plane part and
//! `p * Lebesgue` on the leg; `m_p({a*}) = 0`.
//!
//! Distances use the geodesic metric `rho`: on the plane the direct
//! Euclidean route competes with the route through `a*`, and every
//! leg-to-plane route passes through `a*`.

use crate::error::GeometryError;
use serde::{Deserialize, Serialize};

/// Absolute tolerance used when deciding whether a plane point sits on the
/// shorted circle `|x| = eps` and must be normalized to the darning point.
pub const EPS_TOL: f64 = 1e-12;

/// Model parameters `(eps, p)` with the derived interface skewness
/// `eta = (2*pi*eps - p) / (2*pi*eps + p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    eps: f64,
    p: f64,
    eta: f64,
}

impl ModelParams {
    /// Requires `0 < eps <= 1/4` and `p > 0`.
    pub fn new(eps: f64, p: f64) -> Result<Self, GeometryError> {
        if !eps.is_finite() || !p.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if eps <= 0.0 || eps > 0.25 {
            return Err(GeometryError::BadParams(format!(
                "eps must lie in (0, 1/4], got {eps}"
            )));
        }
        if p <= 0.0 {
            return Err(GeometryError::BadParams(format!(
                "leg weight p must be positive, got {p}"
            )));
        }
        let c = 2.0 * std::f64::consts::PI * eps;
        let eta = (c - p) / (c + p);
        Ok(Self { eps, p, eta })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Skewness of the interface: the signed radial process reflects off 0
    /// into the plane side with probability `(1 + eta) / 2`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Perimeter weight `2*pi*eps` carried by the plane side of the interface.
    pub fn plane_interface_weight(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.eps
    }
}

/// A point of the glued space: on the half-line, at the darning point, or on
/// the punctured plane. Plane points with `|x| = eps` do not exist as a
/// separate state; constructors normalize them to `Star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EPoint {
    /// Half-line point at distance `r > 0` from the darning point.
    Leg { r: f64 },
    /// The darning point `a*`.
    Star,
    /// Plane point with `x1^2 + x2^2 > eps^2`.
    Plane { x1: f64, x2: f64 },
}

impl EPoint {
    /// Leg point at distance `r` from `a*`; `r` within `EPS_TOL` of zero is
    /// normalized to `Star`, negative `r` is rejected.
    pub fn leg(r: f64) -> Result<Self, GeometryError> {
        if !r.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if r.abs() <= EPS_TOL {
            return Ok(EPoint::Star);
        }
        if r < 0.0 {
            return Err(GeometryError::NegativeLeg(r));
        }
        Ok(EPoint::Leg { r })
    }

    /// Plane point; `|x|` within `EPS_TOL` of `eps` is normalized to `Star`,
    /// `|x| < eps` is rejected.
    pub fn plane(x1: f64, x2: f64, params: &ModelParams) -> Result<Self, GeometryError> {
        if !x1.is_finite() || !x2.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let radius = x1.hypot(x2);
        if (radius - params.eps()).abs() <= EPS_TOL {
            return Ok(EPoint::Star);
        }
        if radius < params.eps() {
            return Err(GeometryError::InsideDisc {
                radius,
                eps: params.eps(),
            });
        }
        Ok(EPoint::Plane { x1, x2 })
    }

    /// Plane point on the positive `x1` axis at geodesic distance `rho > 0`
    /// from `a*` (so `|x| = rho + eps`). The radial representative used when
    /// mapping 1-D tables back onto `E`.
    pub fn plane_radial(rho: f64, params: &ModelParams) -> Result<Self, GeometryError> {
        if rho.abs() <= EPS_TOL {
            return Ok(EPoint::Star);
        }
        if rho < 0.0 || !rho.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(EPoint::Plane {
            x1: rho + params.eps(),
            x2: 0.0,
        })
    }

    pub fn is_leg(&self) -> bool {
        matches!(self, EPoint::Leg { .. })
    }

    pub fn is_star(&self) -> bool {
        matches!(self, EPoint::Star)
    }

    /// True on the plane part including the darning point (the closure of
    /// the punctured plane in `E`).
    pub fn on_plane_side(&self) -> bool {
        matches!(self, EPoint::Plane { .. } | EPoint::Star)
    }
}

/// `|x|_rho`: geodesic distance from `x` to the darning point.
/// `|x| - eps` on the plane, the coordinate on the leg, 0 at `a*`.
pub fn rho_norm(x: &EPoint, params: &ModelParams) -> f64 {
    match *x {
        EPoint::Leg { r } => r,
        EPoint::Star => 0.0,
        EPoint::Plane { x1, x2 } => x1.hypot(x2) - params.eps(),
    }
}

/// Euclidean separation used inside the plane-to-plane envelope formulas.
/// When one endpoint is the darning point the collapsed disc is its
/// representative, so the separation degenerates to `|y|_rho`.
pub fn euclid_dist(x: &EPoint, y: &EPoint, params: &ModelParams) -> f64 {
    match (*x, *y) {
        (EPoint::Plane { x1, x2 }, EPoint::Plane { x1: y1, x2: y2 }) => {
            (x1 - y1).hypot(x2 - y2)
        }
        (EPoint::Star, _) => rho_norm(y, params),
        (_, EPoint::Star) => rho_norm(x, params),
        (EPoint::Leg { r }, EPoint::Leg { r: s }) => (r - s).abs(),
        // Leg-to-plane routes pass through a*.
        _ => rho_norm(x, params) + rho_norm(y, params),
    }
}

/// Geodesic metric on `E`.
///
/// Plane/plane: `|x - y| /\ (|x|_rho + |y|_rho)` (direct route vs the route
/// through `a*`). Leg/leg: coordinate distance. Mixed: `r + |y|_rho`.
pub fn rho(x: &EPoint, y: &EPoint, params: &ModelParams) -> f64 {
    match (*x, *y) {
        (EPoint::Plane { .. }, EPoint::Plane { .. }) => {
            let through_star = rho_norm(x, params) + rho_norm(y, params);
            euclid_dist(x, y, params).min(through_star)
        }
        (EPoint::Leg { r }, EPoint::Leg { r: s }) => (r - s).abs(),
        _ => rho_norm(x, params) + rho_norm(y, params),
    }
}

/// Density of `m_p` at `x` relative to the natural coordinate volume:
/// `p` on the leg, 1 on the plane, 0 at the null set `{a*}`.
pub fn measure_weight(x: &EPoint, params: &ModelParams) -> f64 {
    match x {
        EPoint::Leg { .. } => params.p(),
        EPoint::Star => 0.0,
        EPoint::Plane { .. } => 1.0,
    }
}

/// Signed radial coordinate: `-r` on the leg, 0 at `a*`, `|x|_rho` on the
/// plane. Radially aligned pairs are mapped isometrically onto the line.
pub fn signed_radial_embed(x: &EPoint, params: &ModelParams) -> f64 {
    match *x {
        EPoint::Leg { r } => -r,
        EPoint::Star => 0.0,
        EPoint::Plane { .. } => rho_norm(x, params),
    }
}

/// Inverse of [`signed_radial_embed`] up to the radial representative.
pub fn from_signed_radial(y: f64, params: &ModelParams) -> Result<EPoint, GeometryError> {
    if y.abs() <= EPS_TOL {
        Ok(EPoint::Star)
    } else if y < 0.0 {
        EPoint::leg(-y)
    } else {
        EPoint::plane_radial(y, params)
    }
}

/// Rotationally symmetric bounded domain of `E`.
///
/// With `contains_star = true` the domain is `(0, l)` on the leg, the
/// annulus `eps < |x| < R` on the plane, plus `a*` itself. With
/// `contains_star = false` it degenerates to the leg interval `(0, l)`
/// alone (killed at `a*` and at `l`), the configuration whose Green
/// function is known in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub leg_length: f64,
    pub plane_radius: f64,
    pub contains_star: bool,
}

impl DomainSpec {
    pub fn new(
        leg_length: f64,
        plane_radius: f64,
        contains_star: bool,
        params: &ModelParams,
    ) -> Result<Self, GeometryError> {
        if !(leg_length > 0.0) || !leg_length.is_finite() {
            return Err(GeometryError::BadDomain(format!(
                "leg length must be positive, got {leg_length}"
            )));
        }
        if !(plane_radius > params.eps()) || !plane_radius.is_finite() {
            return Err(GeometryError::BadDomain(format!(
                "plane radius must exceed eps = {}, got {plane_radius}",
                params.eps()
            )));
        }
        Ok(Self {
            leg_length,
            plane_radius,
            contains_star,
        })
    }

    /// Outer plane radius in geodesic units, `R - eps`.
    pub fn plane_rho_span(&self, params: &ModelParams) -> f64 {
        self.plane_radius - params.eps()
    }

    pub fn contains(&self, x: &EPoint, params: &ModelParams) -> bool {
        match *x {
            EPoint::Leg { r } => r < self.leg_length,
            EPoint::Star => self.contains_star,
            EPoint::Plane { .. } => {
                self.contains_star && rho_norm(x, params) < self.plane_rho_span(params)
            }
        }
    }
}

/// Geodesic distance from `x` to the complement of `D`.
///
/// For the symmetric domain the boundary consists of the leg endpoint and
/// the outer circle, so the infimum is an explicit minimum of routes.
pub fn delta_d(x: &EPoint, domain: &DomainSpec, params: &ModelParams) -> Result<f64, GeometryError> {
    if !domain.contains(x, params) {
        return Err(GeometryError::OutsideDomain);
    }
    let l = domain.leg_length;
    if !domain.contains_star {
        // Leg interval killed at both ends; a* is part of the boundary.
        let r = match *x {
            EPoint::Leg { r } => r,
            _ => unreachable!("contains() only admits leg points"),
        };
        return Ok(r.min(l - r));
    }
    let span = domain.plane_rho_span(params);
    Ok(match *x {
        EPoint::Leg { r } => (l - r).min(r + span),
        EPoint::Star => l.min(span),
        EPoint::Plane { .. } => {
            let rho_x = rho_norm(x, params);
            (span - rho_x).min(rho_x + l)
        }
    })
}

/// Distance to the boundary of the plane part `U2 = D /\ {plane}` measured
/// inside the plane: `min(|x|_rho, R - |x|)`. Used by the two-sided Green
/// comparison form for plane/plane pairs.
pub fn delta_u2(x: &EPoint, domain: &DomainSpec, params: &ModelParams) -> Result<f64, GeometryError> {
    match *x {
        EPoint::Plane { .. } => {
            let rho_x = rho_norm(x, params);
            if rho_x >= domain.plane_rho_span(params) {
                return Err(GeometryError::OutsideDomain);
            }
            Ok(rho_x.min(domain.plane_rho_span(params) - rho_x))
        }
        _ => Err(GeometryError::OutsideDomain),
    }
}
