//! Least-squares fits of latency against predicted scaling forms.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    /// `C` in `y ≈ C · x`.
    pub constant: f64,
    /// Coefficient of determination of `C · x` against `y`.
    pub r_squared: f64,
    /// Largest and smallest `y / (C · x)` over the points.
    pub max_ratio: f64,
    pub min_ratio: f64,
}

fn ratios(points: &[(f64, f64)], c: f64) -> (f64, f64) {
    points.iter().map(|&(x, y)| y / (c * x)).fold((f64::MIN, f64::MAX), |(hi, lo), r| (hi.max(r), lo.min(r)))
}

fn r_squared(points: &[(f64, f64)], predict: impl Fn(f64) -> f64) -> f64 {
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - mean).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|&(x, y)| (y - predict(x)).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Ordinary least squares for `y = C · x` (no intercept). Needs at least
/// one point with `x > 0`.
pub fn fit_through_origin(points: &[(f64, f64)]) -> Option<Fit> {
    let sxx: f64 = points.iter().map(|&(x, _)| x * x).sum();
    if points.is_empty() || sxx <= 0.0 {
        return None;
    }
    let c = points.iter().map(|&(x, y)| x * y).sum::<f64>() / sxx;
    let (max_ratio, min_ratio) = ratios(points, c);
    Some(Fit { constant: c, r_squared: r_squared(points, |x| c * x), max_ratio, min_ratio })
}

/// `y = C · x` with `C` the geometric mean of `y / x`, i.e. least squares
/// in log space. Points must be positive.
pub fn fit_log_space(points: &[(f64, f64)]) -> Option<Fit> {
    if points.is_empty() || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let c = (points.iter().map(|&(x, y)| (y / x).ln()).sum::<f64>() / points.len() as f64).exp();
    let (max_ratio, min_ratio) = ratios(points, c);
    Some(Fit { constant: c, r_squared: r_squared(points, |x| c * x), max_ratio, min_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares for `y = a · x + b`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LineFit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = points.iter().map(|&(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    Some(LineFit { slope, intercept, r_squared: r_squared(points, |x| slope * x + intercept) })
}

/// Slope of `ln y` against `ln x`; the empirical scaling exponent.
pub fn loglog_fit(points: &[(f64, f64)]) -> Option<LineFit> {
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    linear_fit(&logs)
}
