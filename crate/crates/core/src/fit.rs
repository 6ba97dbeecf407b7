//! Ordinary least-squares line fits used by the decay studies.

use crate::{Error, Result};

/// Result of fitting `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares line through `(x, y)` pairs. Non-finite pairs are skipped;
/// fewer than `min_points` usable pairs is an error.
pub fn fit_line(x: &[f64], y: &[f64], min_points: usize) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "fit: {} abscissae for {} ordinates",
            x.len(),
            y.len()
        )));
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pts.len() < min_points.max(2) {
        return Err(Error::invalid(format!(
            "fit: {} usable points, need at least {}",
            pts.len(),
            min_points.max(2)
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("fit: abscissae are all equal"));
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

/// Slope of `ln y` against `ln x`, skipping non-positive entries.
pub fn log_log_slope(x: &[f64], y: &[f64], min_points: usize) -> Result<LineFit> {
    let lx: Vec<f64> = x
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { f64::NAN })
        .collect();
    let ly: Vec<f64> = y
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { f64::NAN })
        .collect();
    fit_line(&lx, &ly, min_points)
}
