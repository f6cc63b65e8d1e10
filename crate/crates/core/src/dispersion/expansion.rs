//! Least-squares checks of the low- and high-frequency eigenvalue expansions.

use num_complex::Complex64;
use serde::Serialize;

use super::{min_gap, SpectralBranch, SystemCoeffs, GAP_TOL};
use crate::error::{Error, Result};
use crate::model::{DerivedCoeffs, ModelParams};
use crate::ratefit::linear_fit;

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionFit {
    /// Branch label (1..=3) and the fitted quantity, e.g. `"lambda3 Re/r^2"`.
    pub label: usize,
    pub quantity: String,
    pub fitted: f64,
    pub predicted: f64,
    pub abs_error: f64,
    /// `None` when the predicted coefficient is zero.
    pub rel_error: Option<f64>,
}

impl ExpansionFit {
    fn new(label: usize, quantity: &str, fitted: f64, predicted: f64) -> Self {
        let abs_error = (fitted - predicted).abs();
        let rel_error = (predicted != 0.0).then(|| abs_error / predicted.abs());
        Self { label, quantity: quantity.to_string(), fitted, predicted, abs_error, rel_error }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LowFreqReport {
    pub equal_rates: bool,
    pub fits: Vec<ExpansionFit>,
    /// Largest wavenumber used; smaller than the grid end when degenerate
    /// points forced the window to shrink.
    pub window_r_max: f64,
    pub points_used: usize,
    pub shrunk: bool,
}

impl LowFreqReport {
    pub fn fit(&self, label: usize, quantity: &str) -> Option<&ExpansionFit> {
        self.fits.iter().find(|f| f.label == label && f.quantity == quantity)
    }
}

/// Least-squares slope through the origin of `y` against `x`.
fn slope_through_origin(x: &[f64], y: &[f64]) -> f64 {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    sxy / sxx
}

pub fn low_freq_bound(sys: &SystemCoeffs) -> f64 {
    0.01 * 1f64.min(sys.alpha).min(sys.nu) / 1f64.max(sys.a).max(sys.b)
}

pub fn verify_low_freq_expansion(
    branch: &SpectralBranch,
    coeffs: &DerivedCoeffs,
    params: &ModelParams,
) -> Result<LowFreqReport> {
    let sys = SystemCoeffs::new(coeffs, params);
    let bound = low_freq_bound(&sys);
    if branch.grid.iter().any(|&r| r > bound * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "low-frequency window must satisfy r <= {bound:.3e}"
        )));
    }
    let SystemCoeffs { a, b, alpha, gamma, mu, nu } = sys;

    let mut used = Vec::new();
    let mut shrunk = false;
    for (j, (&r, v)) in branch.grid.iter().zip(&branch.values).enumerate() {
        if r == 0.0 {
            continue;
        }
        let scale = v.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if min_gap(v) < GAP_TOL * scale {
            shrunk = true;
            break;
        }
        used.push(j);
    }
    if used.len() < 2 {
        return Err(Error::domain("fewer than two usable points in the low-frequency window"));
    }
    let rs: Vec<f64> = used.iter().map(|&j| branch.grid[j]).collect();
    let r2: Vec<f64> = rs.iter().map(|r| r * r).collect();
    let series = |label: usize, base: Complex64| -> Vec<Complex64> {
        used.iter().map(|&j| branch.values[j][label - 1] - base).collect()
    };
    let equal_rates = (alpha - nu).abs() <= 1e-9 * alpha.max(nu);
    let mut fits = Vec::new();
    if equal_rates {
        let l3: Vec<f64> = series(3, Complex64::new(0.0, 0.0)).iter().map(|z| z.re).collect();
        fits.push(ExpansionFit::new(
            3,
            "Re/r^2",
            slope_through_origin(&r2, &l3),
            -a * (a * alpha - b * gamma) / (alpha * alpha),
        ));
        let pair_re = 0.5 * (a * (a * alpha - b * gamma) / (alpha * alpha) - mu);
        let w = (a * b * gamma / alpha).sqrt();
        for (label, sign) in [(1usize, 1.0), (2, -1.0)] {
            let s = series(label, Complex64::new(-alpha, 0.0));
            let im: Vec<f64> = s.iter().map(|z| z.im).collect();
            let re: Vec<f64> = s.iter().map(|z| z.re).collect();
            fits.push(ExpansionFit::new(label, "Im/r", slope_through_origin(&rs, &im), sign * w));
            fits.push(ExpansionFit::new(label, "Re/r^2", slope_through_origin(&r2, &re), pair_re));
        }
    } else {
        let predicted = [
            (a * a * (alpha - nu) + a * b * gamma) / (alpha * (alpha - nu)),
            -(mu * nu * (alpha - nu) + a * b * gamma) / (nu * (alpha - nu)),
            -a * (a * nu - b * gamma) / (alpha * nu),
        ];
        let base = [-alpha, -nu, 0.0];
        for label in 1..=3 {
            let y: Vec<f64> =
                series(label, Complex64::new(base[label - 1], 0.0)).iter().map(|z| z.re).collect();
            fits.push(ExpansionFit::new(
                label,
                "Re/r^2",
                slope_through_origin(&r2, &y),
                predicted[label - 1],
            ));
        }
    }
    fits.sort_by_key(|f| f.label);
    Ok(LowFreqReport {
        equal_rates,
        fits,
        window_r_max: *rs.last().expect("at least two points"),
        points_used: rs.len(),
        shrunk,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HighFreqReport {
    /// Log-log slope of `|lambda_1 - (i a r - alpha/2)|`.
    pub pair_slope: f64,
    /// Log-log slope of `|lambda_3 + mu r^2 + nu|`.
    pub real_slope: f64,
    /// `Re lambda_1 + alpha/2` at the largest grid point.
    pub pair_re_offset: f64,
    /// `lambda_3 / r^2 + mu` at the largest grid point.
    pub real_ratio_offset: f64,
    pub pass: bool,
}

/// Residual `delta = lambda_3 + mu r^2 + nu`, refined by Newton on the
/// shifted cubic `G(delta) = F(-s + delta)` with `s = mu r^2 + nu`.
///
/// Expanding about `-s` cancels the large terms analytically:
/// `G(delta) = delta^3 + (alpha - 2s) delta^2 + (s^2 - 2 alpha s + c1) delta - a b gamma r^2`,
/// so `delta ~ a b gamma / (mu r)^2` is obtained without the cancellation
/// that forming `lambda_3 + s` in floating point would incur.
pub fn diffusive_residual(sys: &SystemCoeffs, r: f64, lambda3: f64) -> f64 {
    let r2 = r * r;
    let s = sys.mu * r2 + sys.nu;
    let c1 = (sys.a * sys.a + sys.alpha * sys.mu) * r2 + sys.alpha * sys.nu;
    let k2 = sys.alpha - 2.0 * s;
    let k1 = s * s - 2.0 * sys.alpha * s + c1;
    let k0 = -sys.a * sys.b * sys.gamma * r2;
    let g = |d: f64| ((d + k2) * d + k1) * d + k0;
    let dg = |d: f64| (3.0 * d + 2.0 * k2) * d + k1;
    let mut d = lambda3 + s;
    for _ in 0..50 {
        let step = g(d) / dg(d);
        d -= step;
        if step.abs() <= 1e-15 * d.abs() {
            break;
        }
    }
    d
}

pub fn high_freq_bound(sys: &SystemCoeffs) -> f64 {
    100.0 * 1f64.max(sys.a).max(sys.alpha).max(sys.nu).max(1.0 / sys.mu)
}

pub fn verify_high_freq_expansion(
    branch: &SpectralBranch,
    coeffs: &DerivedCoeffs,
    params: &ModelParams,
) -> Result<HighFreqReport> {
    let sys = SystemCoeffs::new(coeffs, params);
    let bound = high_freq_bound(&sys);
    if branch.grid.iter().any(|&r| r < bound * (1.0 - 1e-12)) {
        return Err(Error::domain(format!("high-frequency window must satisfy r >= {bound:.3e}")));
    }
    if branch.grid.len() < 2 {
        return Err(Error::domain("need at least two grid points"));
    }
    let upper = branch.high_branch(1);
    let diffusive = branch.high_branch(3);
    let log_r: Vec<f64> = branch.grid.iter().map(|r| r.ln()).collect();
    let pair_res: Vec<f64> = branch
        .grid
        .iter()
        .zip(&upper)
        .map(|(&r, z)| (z - Complex64::new(-0.5 * sys.alpha, sys.a * r)).norm().ln())
        .collect();
    let real_res: Vec<f64> = branch
        .grid
        .iter()
        .zip(&diffusive)
        .map(|(&r, z)| diffusive_residual(&sys, r, z.re).abs().ln())
        .collect();
    let pair_slope = linear_fit(&log_r, &pair_res).slope;
    let real_slope = linear_fit(&log_r, &real_res).slope;
    let r_last = *branch.grid.last().expect("non-empty");
    let last_upper = *upper.last().expect("non-empty");
    let last_diff = *diffusive.last().expect("non-empty");
    let pass = (pair_slope + 1.0).abs() <= 0.2 && (real_slope + 2.0).abs() <= 0.2;
    Ok(HighFreqReport {
        pair_slope,
        real_slope,
        pair_re_offset: last_upper.re + 0.5 * sys.alpha,
        real_ratio_offset: last_diff.re / (r_last * r_last) + sys.mu,
        pass,
    })
}
