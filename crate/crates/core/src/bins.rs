//! Radial binning of the glued space.
//!
//! Bins live on the signed radial coordinate: negative edges partition the
//! leg, positive edges partition the plane into annuli, and an edge is
//! pinned at 0 so no bin straddles the interface. The `m_p` measure of a
//! bin is `p * width` on the leg and `pi ((b+eps)^2 - (a+eps)^2)` for the
//! annulus between radii `a` and `b`.

use crate::error::SimError;
use crate::geometry::ModelParams;

#[derive(Debug, Clone)]
pub struct SignedBins {
    edges: Vec<f64>,
}

impl SignedBins {
    /// Uniform bins over `[-leg_span, plane_span]` with an edge at 0.
    pub fn uniform(
        leg_span: f64,
        plane_span: f64,
        n_leg: usize,
        n_plane: usize,
    ) -> Result<Self, SimError> {
        if !(leg_span > 0.0 && plane_span > 0.0) || n_leg == 0 || n_plane == 0 {
            return Err(SimError::BadBinning(
                "need positive spans and bin counts".into(),
            ));
        }
        let mut edges = Vec::with_capacity(n_leg + n_plane + 1);
        for i in 0..=n_leg {
            edges.push(-leg_span * (1.0 - i as f64 / n_leg as f64));
        }
        edges[n_leg] = 0.0;
        for i in 1..=n_plane {
            edges.push(plane_span * i as f64 / n_plane as f64);
        }
        Ok(Self { edges })
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self, SimError> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::BadBinning("edges must be increasing".into()));
        }
        if !edges.iter().any(|&e| e == 0.0) && edges[0] < 0.0 && *edges.last().unwrap() > 0.0 {
            return Err(SimError::BadBinning(
                "an edge must be pinned at 0 when bins span the interface".into(),
            ));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Index of the bin containing the signed coordinate, if inside.
    pub fn index_of(&self, y: f64) -> Option<usize> {
        if y < self.edges[0] || y >= *self.edges.last().unwrap() {
            return None;
        }
        match self
            .edges
            .binary_search_by(|e| e.partial_cmp(&y).unwrap())
        {
            Ok(i) => Some(i.min(self.len() - 1)),
            Err(i) => Some(i - 1),
        }
    }

    /// `m_p` measures of the bins.
    pub fn mp_measures(&self, params: &ModelParams) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| mp_measure_between(w[0], w[1], params))
            .collect()
    }
}

/// `m_p` measure of the signed-coordinate interval `[a, b]`.
pub fn mp_measure_between(a: f64, b: f64, params: &ModelParams) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a < 0.0 && b > 0.0 {
        return mp_measure_between(a, 0.0, params) + mp_measure_between(0.0, b, params);
    }
    if b <= 0.0 {
        params.p() * (b - a)
    } else {
        let e = params.eps();
        std::f64::consts::PI * ((b + e) * (b + e) - (a + e) * (a + e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_bins_pin_zero_edge() {
        let b = SignedBins::uniform(2.0, 3.0, 10, 15).unwrap();
        assert_eq!(b.len(), 25);
        assert!(b.edges().contains(&0.0));
        assert_eq!(b.index_of(-2.0), Some(0));
        assert_eq!(b.index_of(2.999), Some(24));
        assert_eq!(b.index_of(3.0), None);
        assert_eq!(b.index_of(-2.1), None);
    }

    #[test]
    fn measures_match_geometry() {
        let p = ModelParams::new(0.25, 2.0).unwrap();
        let b = SignedBins::uniform(1.0, 1.0, 4, 4).unwrap();
        let ms = b.mp_measures(&p);
        // leg bins: p * width
        assert!((ms[0] - 2.0 * 0.25).abs() < 1e-14);
        // first annulus: pi ((0.25+eps)^2 - eps^2)
        let e = 0.25;
        let expect = std::f64::consts::PI * ((0.25 + e) * (0.25 + e) - e * e);
        assert!((ms[4] - expect).abs() < 1e-14);
        // total equals the closed form
        let total: f64 = ms.iter().sum();
        assert!((total - mp_measure_between(-1.0, 1.0, &p)).abs() < 1e-12);
    }
}
