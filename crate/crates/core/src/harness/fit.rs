//! Power-law fit of the training duration at which growing starts to win.
//!
//! For each `λ` in an `(E, λ)` sweep the ridge point `E*(λ)` is the smallest
//! grid `E` with `R ≤ 1`. This is the first crossing of the `R = 1` contour,
//! which is a proxy for a ridge traced by eye on a density plot, so fitted
//! exponents are comparable to a by-eye estimate but not identical.

use crate::error::{Error, Result};
use crate::harness::sweep::SweepRow;

/// First `E` at which growing matches or beats static, for one `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgePoint {
    pub lambda: f64,
    pub e_star: f64,
}

/// Extracts one ridge point per distinct `λ`, in order of first appearance.
/// `λ` values whose `R` never reaches 1 are skipped with a warning.
pub fn ridge_points(rows: &[SweepRow]) -> (Vec<RidgePoint>, Vec<String>) {
    let mut lambdas: Vec<f64> = Vec::new();
    for r in rows {
        if !lambdas.contains(&r.point.lambda) {
            lambdas.push(r.point.lambda);
        }
    }
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for lambda in lambdas {
        let mut cells: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.point.lambda == lambda)
            .filter_map(|r| r.r.map(|ratio| (r.point.epochs, ratio)))
            .collect();
        cells.sort_by_key(|&(e, _)| e);
        match cells.iter().find(|&&(_, ratio)| ratio <= 1.0) {
            Some(&(e, _)) => points.push(RidgePoint {
                lambda,
                e_star: e as f64,
            }),
            None => warnings.push(format!("no R <= 1 crossing for lambda = {lambda}; skipped")),
        }
    }
    (points, warnings)
}

/// `E* ≈ c · λ^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub c: f64,
    pub p: f64,
    /// Root-mean-square residual in `ln E*`.
    pub residual: f64,
    pub used: usize,
}

impl PowerLawFit {
    pub fn eval(&self, lambda: f64) -> f64 {
        self.c * lambda.powf(self.p)
    }
}

/// Least-squares line through `(ln λ, ln E*)`. Needs at least 3 points with
/// positive coordinates and two distinct `λ`.
pub fn fit_power_law(points: &[RidgePoint]) -> Result<PowerLawFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| {
            p.lambda > 0.0 && p.e_star > 0.0 && p.lambda.is_finite() && p.e_star.is_finite()
        })
        .map(|p| (p.lambda.ln(), p.e_star.ln()))
        .collect();
    let n = usable.len();
    if n < 3 {
        return Err(Error::FitUnavailable { usable: n });
    }
    let nf = n as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::FitUnavailable { usable: 1 });
    }
    let p = sxy / sxx;
    let intercept = my - p * mx;
    let sse: f64 = usable
        .iter()
        .map(|&(x, y)| (y - intercept - p * x).powi(2))
        .sum();
    Ok(PowerLawFit {
        c: intercept.exp(),
        p,
        residual: (sse / nf).sqrt(),
        used: n,
    })
}
