//! Log-log regression for scaling exponents.

use crate::error::{Error, Result};
use crate::numeric::csum;
use serde::Serialize;

/// Result of a least-squares fit of log y against log x (natural log).
///
/// `residual` is the largest absolute log-residual; anything above 0.05
/// (about 5% multiplicative deviation) is a sign the data is not on a power
/// law over the fitted range. `std_error` is the standard error of the
/// slope, used by callers that need an uncertainty margin.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    pub residual: f64,
    pub std_error: f64,
    pub range: (f64, f64),
    pub sample_count: usize,
    pub excluded: usize,
}

impl ScalingFit {
    pub fn is_nonlinear(&self) -> bool {
        self.residual > 0.05
    }

    /// Fitted y at a given x.
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.exponent * x.ln()).exp()
    }
}

/// Fit y ~ C x^s through `points`, ignoring entries whose x or y is zero,
/// negative, or non-finite (zeros are legitimate data for e.g. empty-set
/// volumes, but carry no scaling information).
///
/// Needs at least 4 usable points spanning more than one distinct x.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ScalingFit> {
    const MIN_POINTS: usize = 4;
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let excluded = points.len() - usable.len();
    let m = usable.len();
    if m < MIN_POINTS {
        return Err(Error::InsufficientScalingRange {
            got: m,
            need: MIN_POINTS,
        });
    }
    let mf = m as f64;
    let xbar = csum(usable.iter().map(|p| p.0)) / mf;
    let ybar = csum(usable.iter().map(|p| p.1)) / mf;
    let sxx = csum(usable.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)));
    let sxy = csum(usable.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)));
    if sxx <= 0.0 {
        return Err(Error::DegenerateLadder(
            "all abscissae coincide; no scaling range".into(),
        ));
    }
    let exponent = sxy / sxx;
    let intercept = ybar - exponent * xbar;
    let mut residual = 0.0f64;
    let mut rss = 0.0f64;
    for &(lx, ly) in &usable {
        let r = ly - (intercept + exponent * lx);
        residual = residual.max(r.abs());
        rss += r * r;
    }
    let std_error = if m > 2 {
        (rss / (mf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let xmin = usable.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = usable.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingFit {
        exponent,
        intercept,
        residual,
        std_error,
        range: (xmin.exp(), xmax.exp()),
        sample_count: m,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_recovered_to_1e12() {
        let pts: Vec<(f64, f64)> = (1..=8)
            .map(|j| {
                let x = (2f64).powi(-j);
                (x, 3.7 * x.powf(1.25))
            })
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!((fit.exponent - 1.25).abs() < 1e-12, "{}", fit.exponent);
        assert!((fit.intercept.exp() - 3.7).abs() < 1e-11);
        assert!(fit.residual < 1e-12);
        assert!(!fit.is_nonlinear());
        assert_eq!(fit.sample_count, 8);
        assert_eq!(fit.excluded, 0);
    }

    #[test]
    fn zeros_are_excluded_not_fatal() {
        let mut pts: Vec<(f64, f64)> = (1..=6)
            .map(|j| {
                let x = (2f64).powi(-j);
                (x, x * x)
            })
            .collect();
        pts.push((1e-9, 0.0));
        let fit = fit_exponent(&pts).unwrap();
        assert_eq!(fit.excluded, 1);
        assert!((fit.exponent - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = [(0.5, 1.0), (0.25, 2.0), (0.125, 4.0)];
        let err = fit_exponent(&pts).unwrap_err();
        assert!(err.to_string().contains("insufficient scaling range"));
    }

    #[test]
    fn coincident_abscissae_rejected() {
        let pts = [(0.5, 1.0), (0.5, 2.0), (0.5, 4.0), (0.5, 8.0)];
        assert!(fit_exponent(&pts).is_err());
    }

    #[test]
    fn residual_flags_curvature() {
        // y = x + 1 is not a power law over a wide dyadic range.
        let pts: Vec<(f64, f64)> = (0..8)
            .map(|j| {
                let x = (2f64).powi(-j);
                (x, x + 1.0)
            })
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!(fit.is_nonlinear(), "residual {}", fit.residual);
    }
}
