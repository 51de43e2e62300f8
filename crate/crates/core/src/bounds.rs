//! Effective seed spacing near block faces and empirical convergence order.

use thiserror::Error;

use crate::domain::BlockDecomposition;
use crate::geom::Point;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("spacings must not all be equal")]
    DegenerateFit,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Upper bound on the effective spacing once a block face has cut away
/// every particle that could reach it: `2 hx + 2 ht vmax`.
pub fn hx_tilde(hx: f64, ht: f64, vmax: f64) -> f64 {
    2.0 * hx + 2.0 * ht * vmax
}

/// Least-squares slope of `ln(error)` against `ln(spacing)`.
pub fn convergence_order(spacings: &[f64], errors: &[f64]) -> Result<f64, BoundsError> {
    if spacings.len() != errors.len() {
        return Err(BoundsError::InvalidInput(format!("{} spacings, {} errors", spacings.len(), errors.len())));
    }
    if spacings.len() < 3 {
        return Err(BoundsError::InvalidInput("need at least 3 pairs".into()));
    }
    if spacings.iter().chain(errors).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(BoundsError::InvalidInput("spacings and errors must be positive".into()));
    }
    let xs: Vec<f64> = spacings.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 1e-24 {
        return Err(BoundsError::DegenerateFit);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub hx: f64,
    pub ht: f64,
    pub vmax: f64,
    pub hx_tilde: f64,
    pub predicted_order: f64,
    pub measured_order: Option<f64>,
}

impl BoundReport {
    pub fn new(hx: f64, ht: f64, vmax: f64) -> Self {
        BoundReport { hx, ht, vmax, hx_tilde: hx_tilde(hx, ht, vmax), predicted_order: 2.0, measured_order: None }
    }

    pub fn with_order(mut self, spacings: &[f64], errors: &[f64]) -> Result<Self, BoundsError> {
        self.measured_order = Some(convergence_order(spacings, errors)?);
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BandSplit {
    pub near_mean: f64,
    pub near_count: usize,
    pub far_mean: f64,
    pub far_count: usize,
}

/// Splits per-seed errors at distance `cutoff` from the internal faces and
/// averages each side. Empty sides report a mean of 0.
pub fn split_by_face_distance(decomp: &BlockDecomposition, samples: &[(Point, f64)], cutoff: f64) -> BandSplit {
    let mut split = BandSplit::default();
    for (x, e) in samples {
        if decomp.internal_face_distance(x) > cutoff {
            split.far_mean += e;
            split.far_count += 1;
        } else {
            split.near_mean += e;
            split.near_count += 1;
        }
    }
    if split.near_count > 0 {
        split.near_mean /= split.near_count as f64;
    }
    if split.far_count > 0 {
        split.far_mean /= split.far_count as f64;
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hx_tilde_values() {
        assert_eq!(hx_tilde(0.1, 0.5, 0.0), 0.2);
        assert!((hx_tilde(0.1, 0.01, 2.0) - 0.24).abs() < 1e-15);
        let base = hx_tilde(0.1, 0.01, 2.0) - 0.2;
        let doubled = hx_tilde(0.1, 0.02, 2.0) - 0.2;
        assert!((doubled - 2.0 * base).abs() < 1e-15);
        let r = BoundReport::new(0.1, 0.01, 2.0);
        assert!(r.hx_tilde >= 2.0 * r.hx);
    }

    #[test]
    fn orders() {
        let h = [0.1, 0.2, 0.3, 0.5];
        let quad: Vec<f64> = h.iter().map(|h| 7.0 * h * h).collect();
        assert!((convergence_order(&h, &quad).unwrap() - 2.0).abs() < 1e-9);
        assert!(convergence_order(&h, &[3.0; 4]).unwrap().abs() < 1e-12);
        assert!(matches!(convergence_order(&[0.1; 3], &[1.0, 2.0, 3.0]), Err(BoundsError::DegenerateFit)));
        assert!(matches!(convergence_order(&h[..2], &quad[..2]), Err(BoundsError::InvalidInput(_))));
    }
}
